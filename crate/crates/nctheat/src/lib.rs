//! Heat-coefficient engine for second-order elliptic operators on
//! noncommutative m-tori.
//!
//! The crate is organized as a pipeline:
//!
//! * [`exact`] — exact arithmetic: big rationals, Gaussian rationals and
//!   polynomials in the dimension variable.
//! * [`rearrange`] — the integral layer: simplex quadrature, contour
//!   integrals of resolvent products, Gaussian moments, and the spectral
//!   component functions obtained by rearranging all resolvent factors to
//!   one side.
//! * [`symcalc`] — exact operator-valued symbol calculus: pseudodifferential
//!   product expansion and the resolvent-parametrix recursion.
//! * [`heat2`] — the second heat coefficient assembled from the parametrix,
//!   in general, component, diagonal and conformal form.
//! * [`conformal`] — scalar spectral functions of one and two modular
//!   variables, their transformation rules, recurrences, and the functional
//!   relations they satisfy.
//! * [`nc_torus`] — a concrete Fourier-truncated model of the smooth
//!   noncommutative torus: twisted products, modular operator calculus,
//!   heat-trace fits and the closed-form evaluation they are checked against.
//! * [`cli`] — configuration and subcommand entry points for the `nctheat`
//!   binary.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run -p nctheat --example simplex_integrals
//! cargo run -p nctheat --example exponential_rearrangement
//! cargo run -p nctheat --example gaussian_moments
//! cargo run -p nctheat --example symbol_expansion
//! cargo run -p nctheat --example heat_coefficient
//! cargo run -p nctheat --example spectral_functions
//! cargo run -p nctheat --example functional_relations
//! cargo run -p nctheat --example torus_heat_trace
//! ```

pub mod cli;
pub mod conformal;
pub mod exact;
pub mod heat2;
pub mod nc_torus;
pub mod rearrange;
pub mod symcalc;
