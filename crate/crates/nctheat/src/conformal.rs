//! Scalar spectral functions of one and two modular variables.
//!
//! The heat-coefficient pipeline ends, for conformally scaled Laplacians,
//! in finite combinations of simplex integrals
//!
//! ```text
//!   𝖧_α(z̄; m) = c(m) ∫_{Δ_n} ω_α(u) (1 − z·u)^{−(m/2 + |α| − 2)} du,
//! ```
//!
//! where α = (α_0, …, α_n) is a multi-index, z̄ has one entry per simplex
//! variable, and c(m) is the Gaussian constant of the chosen
//! [`Normalization`].  The weight here is the fully symmetric one,
//! ω_α(u) = ∏_{l=0}^{n} u_l^{α_l−1}/Γ(α_l) with u_0 = 1 − Σu_l; the
//! argument transforms permute the index entries and are covariant only
//! in this convention.  This module provides that family twice over, as the
//! Gauss-normalized form above ([`SpectralExpr::HGauss`]) and as the
//! Γ-weighted variant
//!
//! ```text
//!   H_α(z̄; m) = Γ(|α| + m/2 − 2) · ∫_{Δ_n} ω_α(u) (1 − z·u)^{−(m/2 + |α| − 2)} du
//! ```
//!
//! ([`SpectralExpr::H`]), which is the convenient unit for the recurrence
//! suite.  The two differ by the constant c(m)/Γ(|α| + m/2 − 2) only, so
//! every identity below is insensitive to the normalization choice.
//!
//! Arguments are built from the modular variables y₁, y₂ through
//!
//! ```text
//!   z₁ = 1 − y₁,   z₂ = 1 − y₁y₂,   and in transformed positions 1 − y₂.
//! ```
//!
//! On top of the H-family sit the divided differences of the square root,
//! [`gpow1`] and [`gpow11`], which encode how a square root of the Weyl
//! factor spreads across product slots, and the argument transforms
//! [`tau1`] (order two) and [`tau2`] (order three) generated by cyclically
//! rotating the operator product under the trace.
//!
//! The payoff is the pair of functional relations connecting the two forms
//! of the second heat coefficient:
//!
//! ```text
//!   (y^{1/2} − 1)       · G_I (z)        = J^{(2)}(z),
//!   ((y₁y₂)^{1/2} − 1) · G_II(z₁, z₂)   = J^{(1,1)} + J_mixed,
//! ```
//!
//! verified on grids by [`verify_relation_i`] and [`verify_relation_ii`],
//! and at the stronger coefficient level (no quadrature at all) by
//! [`transformed_difference_coeffs`] against [`transformed_product_coeffs`].
//!
//! Naming: `j2` is the correction routing both derivatives of the Weyl
//! factor into one slot, `j11` the one splitting them across two slots,
//! and `j_mixed` collects the rows pairing one derivative with a
//! first-order symbol term.  `j11` is sometimes written with the part-I
//! label because it enters through the same zeroth-order symbol route as
//! `j2`; here it always denotes the two-variable object.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::exact::{gamma_half, rat, rat_to_f64, MPoly, Rat};
use crate::rearrange::{h_alpha_with_diag, MultiIndex, Normalization, RearrangeError, Tol};

/// Window around a confluent node inside which divided differences switch
/// to their truncated series.
const GPOW_SERIES_WINDOW: f64 = 1e-4;

/// Denominators smaller than this abort direct evaluation; verifiers then
/// re-evaluate at shifted points and extrapolate.
const SINGULAR_GUARD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("near-singular evaluation: {0}")]
    NearSingular(String),
    #[error(transparent)]
    Quadrature(#[from] RearrangeError),
}

// ---------------------------------------------------------------------------
// Divided differences of u^j.

fn binom_real(j: f64, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc *= (j - f64::from(i)) / f64::from(i + 1);
    }
    acc
}

/// First divided difference u^j[1, y] = (y^j − 1)/(y − 1).
///
/// Near the confluent node y = 1 the quotient is replaced by its truncated
/// binomial series; the truncation error is O((y−1)^4), far below the
/// rounding noise of the closed form at the window edge.
pub fn gpow1(y: f64, j: f64) -> f64 {
    let eps = y - 1.0;
    if eps.abs() < GPOW_SERIES_WINDOW {
        let mut acc = 0.0;
        for k in (1..=4u32).rev() {
            acc = acc * eps + binom_real(j, k);
        }
        acc
    } else {
        (y.powf(j) - 1.0) / eps
    }
}

/// Second divided difference u^j[1, y₁, y₁y₂] over the node set
/// {1, y₁, y₁y₂}.
///
/// The argument convention matches the two-slot modular calculus: the
/// first argument is the node reached after one slot, the product of both
/// arguments the node after two.  The value is symmetric in the node set,
/// so `gpow11(a, b) == gpow11(a·b, 1/b)`.
pub fn gpow11(y1: f64, y2: f64, j: f64) -> f64 {
    let a = y1;
    let b = y1 * y2;
    let (ea, eb) = (a - 1.0, b - 1.0);
    if ea.abs() < GPOW_SERIES_WINDOW && eb.abs() < GPOW_SERIES_WINDOW {
        // Doubly confluent: Σ_k C(j,k) h_{k−2}(ε_a, ε_b) with complete
        // homogeneous symmetric polynomials h.
        let h = [
            1.0,
            ea + eb,
            ea * ea + ea * eb + eb * eb,
            ea * ea * ea + ea * ea * eb + ea * eb * eb + eb * eb * eb,
        ];
        (2..=5u32).map(|k| binom_real(j, k) * h[(k - 2) as usize]).sum()
    } else if (b - a).abs() < GPOW_SERIES_WINDOW * a.abs().max(b.abs()) {
        // Confluent pair away from 1: derivative of u^j[1, x] at the
        // midpoint.
        let x = 0.5 * (a + b);
        let xm = x - 1.0;
        (j * x.powf(j - 1.0) * xm - (x.powf(j) - 1.0)) / (xm * xm)
    } else {
        (gpow1(b, j) - gpow1(a, j)) / (b - a)
    }
}

// ---------------------------------------------------------------------------
// Exponents and monomials in the modular variables.

/// Exponent of the form (p + q·m)/2 with integer p, q.
///
/// Closed under the argument transforms: substituting y → 1/y or rotating
/// (y₁, y₂) only negates and permutes such exponents, and the transform
/// prefactors carry the dimension through q.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HalfPow {
    pub p: i32,
    pub q: i32,
}

impl HalfPow {
    pub const ZERO: HalfPow = HalfPow { p: 0, q: 0 };

    pub fn int(k: i32) -> Self {
        HalfPow { p: 2 * k, q: 0 }
    }

    pub fn half(p: i32) -> Self {
        HalfPow { p, q: 0 }
    }

    pub fn is_zero(self) -> bool {
        self.p == 0 && self.q == 0
    }

    fn add(self, o: HalfPow) -> HalfPow {
        HalfPow {
            p: self.p + o.p,
            q: self.q + o.q,
        }
    }

    fn neg(self) -> HalfPow {
        HalfPow {
            p: -self.p,
            q: -self.q,
        }
    }

    fn value(self, m: u32) -> f64 {
        (f64::from(self.p) + f64::from(self.q) * f64::from(m)) / 2.0
    }
}

/// Monomial y₁^{e1} · y₂^{e2} with half-integer, possibly m-dependent
/// exponents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct YMono {
    pub e1: HalfPow,
    pub e2: HalfPow,
}

impl YMono {
    pub const ONE: YMono = YMono {
        e1: HalfPow::ZERO,
        e2: HalfPow::ZERO,
    };

    pub fn y1() -> Self {
        YMono {
            e1: HalfPow::int(1),
            e2: HalfPow::ZERO,
        }
    }

    pub fn y2() -> Self {
        YMono {
            e1: HalfPow::ZERO,
            e2: HalfPow::int(1),
        }
    }

    /// y₁^{p1/2} y₂^{p2/2}.
    pub fn half_powers(p1: i32, p2: i32) -> Self {
        YMono {
            e1: HalfPow::half(p1),
            e2: HalfPow::half(p2),
        }
    }

    pub fn inv(self) -> Self {
        YMono {
            e1: self.e1.neg(),
            e2: self.e2.neg(),
        }
    }

    pub fn mul(self, o: YMono) -> Self {
        YMono {
            e1: self.e1.add(o.e1),
            e2: self.e2.add(o.e2),
        }
    }

    /// Substitution y₁ → (y₁y₂)^{-1}, y₂ → y₁.
    fn tau2(self) -> Self {
        YMono {
            e1: self.e2.add(self.e1.neg()),
            e2: self.e1.neg(),
        }
    }

    /// Substitution y₁ → y₁^{-1} (single-variable monomials only).
    fn tau1(self) -> Result<Self, ConformalError> {
        if !self.e2.is_zero() {
            return Err(ConformalError::InvalidInput(
                "reflection transform applied to a monomial depending on y2".into(),
            ));
        }
        Ok(YMono {
            e1: self.e1.neg(),
            e2: HalfPow::ZERO,
        })
    }

    fn value(self, point: EvalPoint) -> f64 {
        point.y1.powf(self.e1.value(point.m)) * point.y2.powf(self.e2.value(point.m))
    }

    fn uses_y2(self) -> bool {
        !self.e2.is_zero()
    }
}

// ---------------------------------------------------------------------------
// H-atoms.

/// Argument slot of an H-atom.
///
/// One-variable atoms take a single argument drawn from {z₁, z₂, 1 − y₂};
/// two-variable atoms always take the standard pair (z₁, z₂).  The third
/// one-variable slot exists because the order-three transform cycles
/// z₁ → z₂ → (1 − y₂) → z₁.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HArg {
    Z1,
    Z2,
    Y2Bar,
    Z12,
}

/// One H-factor: multi-index plus argument slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HAtom {
    pub alpha: Vec<u32>,
    pub arg: HArg,
}

impl HAtom {
    pub fn new(alpha: &[u32], arg: HArg) -> Result<Self, ConformalError> {
        if alpha.iter().any(|&a| a == 0) {
            return Err(ConformalError::InvalidInput(format!(
                "multi-index entries must be ≥ 1, got {alpha:?}"
            )));
        }
        match (alpha.len(), arg) {
            (2, HArg::Z1 | HArg::Z2 | HArg::Y2Bar) | (3, HArg::Z12) => Ok(HAtom {
                alpha: alpha.to_vec(),
                arg,
            }),
            _ => Err(ConformalError::InvalidInput(format!(
                "H-atom with {} entries cannot take argument slot {arg:?}",
                alpha.len()
            ))),
        }
    }

    fn order(&self) -> u32 {
        self.alpha.iter().sum()
    }

    /// Exponent |α| + m/2 − 2 driving both the Γ-weight and the transform
    /// prefactors.
    fn shift_exponent(&self) -> HalfPow {
        HalfPow {
            p: 2 * self.order() as i32 - 4,
            q: 1,
        }
    }

    fn z_args(&self, point: EvalPoint) -> Vec<f64> {
        match self.arg {
            HArg::Z1 => vec![1.0 - point.y1],
            HArg::Z2 => vec![1.0 - point.y1 * point.y2],
            HArg::Y2Bar => vec![1.0 - point.y2],
            HArg::Z12 => vec![1.0 - point.y1, 1.0 - point.y1 * point.y2],
        }
    }
}

fn arg_label(arg: HArg) -> &'static str {
    match arg {
        HArg::Z1 => "z1",
        HArg::Z2 => "z2",
        HArg::Y2Bar => "1-y2",
        HArg::Z12 => "z1,z2",
    }
}

impl fmt::Display for HAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.alpha.iter().map(u32::to_string).collect();
        write!(f, "H_{{{}}}({})", idx.join(","), arg_label(self.arg))
    }
}

/// Exponent (p + q·m)/2 rendered with integer parts pulled out.
fn halfpow_string(h: HalfPow) -> String {
    if h.p % 2 == 0 && h.q % 2 == 0 {
        let (p, q) = (h.p / 2, h.q / 2);
        match (p, q) {
            (p, 0) => format!("{p}"),
            (0, 1) => "m".into(),
            (0, -1) => "-m".into(),
            (0, q) => format!("{q}m"),
            (p, 1) => format!("m{p:+}"),
            (p, q) => format!("{q}m{p:+}"),
        }
    } else {
        match (h.p, h.q) {
            (p, 0) => format!("{p}/2"),
            (0, q) => format!("{q}m/2"),
            (p, q) => format!("({q}m{p:+})/2"),
        }
    }
}

fn ymono_string(y: YMono) -> String {
    let mut parts = Vec::new();
    for (name, e) in [("y1", y.e1), ("y2", y.e2)] {
        if e.is_zero() {
            continue;
        }
        let s = halfpow_string(e);
        if s == "1" {
            parts.push(name.to_string());
        } else {
            parts.push(format!("{name}^({s})"));
        }
    }
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

impl fmt::Display for SpectralExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralExpr::Rational(r) => write!(f, "{r}"),
            SpectralExpr::DimPoly(p) => write!(f, "({p})"),
            SpectralExpr::Mono(y) => write!(f, "{}", ymono_string(*y)),
            SpectralExpr::H(a) => write!(f, "{a}"),
            SpectralExpr::HGauss(a) => {
                let idx: Vec<String> = a.alpha.iter().map(u32::to_string).collect();
                write!(f, "Hg_{{{}}}({})", idx.join(","), arg_label(a.arg))
            }
            SpectralExpr::GPow1(y) => write!(f, "G1({})", ymono_string(*y)),
            SpectralExpr::GPow11(a, b) => {
                write!(f, "G11({}, {})", ymono_string(*a), ymono_string(*b))
            }
            SpectralExpr::Sum(v) => {
                if v.is_empty() {
                    return write!(f, "0");
                }
                for (i, e) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{e}")?;
                }
                Ok(())
            }
            SpectralExpr::Prod(v) => {
                if v.is_empty() {
                    return write!(f, "1");
                }
                for (i, e) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    if matches!(e, SpectralExpr::Sum(_)) {
                        write!(f, "({e})")?;
                    } else {
                        write!(f, "{e}")?;
                    }
                }
                Ok(())
            }
            SpectralExpr::Recip(b) => write!(f, "1/({b})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Expression trees.

/// Immutable expression in the modular variables, the dimension m, and the
/// H-family atoms.
///
/// Scalars are exact rationals or polynomials in m; everything else is a
/// monomial, an H-atom, a divided-difference atom, or a sum, product or
/// reciprocal of such.  Trees are cheap to clone and safe to share across
/// threads.
#[derive(Clone, Debug)]
pub enum SpectralExpr {
    /// Exact rational constant.
    Rational(Rat),
    /// Polynomial in the dimension m with exact coefficients.
    DimPoly(MPoly),
    /// Monomial in y₁, y₂.
    Mono(YMono),
    /// Γ-weighted atom H_α.
    H(HAtom),
    /// Gauss-normalized atom 𝖧_α; carries the c(m) of the evaluator.
    HGauss(HAtom),
    /// gpow1 of a monomial argument, at j = 1/2.
    GPow1(YMono),
    /// gpow11 of two monomial arguments, at j = 1/2.
    GPow11(YMono, YMono),
    Sum(Vec<SpectralExpr>),
    Prod(Vec<SpectralExpr>),
    Recip(Box<SpectralExpr>),
}

impl SpectralExpr {
    pub fn rational(n: i64, d: i64) -> Self {
        SpectralExpr::Rational(rat(n, d))
    }

    pub fn integer(n: i64) -> Self {
        SpectralExpr::rational(n, 1)
    }

    /// Polynomial in m from ascending integer coefficients.
    pub fn dim_poly(coeffs: &[i64]) -> Self {
        SpectralExpr::DimPoly(MPoly::from_ints(coeffs))
    }

    pub fn h(alpha: &[u32], arg: HArg) -> Result<Self, ConformalError> {
        Ok(SpectralExpr::H(HAtom::new(alpha, arg)?))
    }

    pub fn h_gauss(alpha: &[u32], arg: HArg) -> Result<Self, ConformalError> {
        Ok(SpectralExpr::HGauss(HAtom::new(alpha, arg)?))
    }

    pub fn recip(self) -> Self {
        SpectralExpr::Recip(Box::new(self))
    }

    fn uses_y2(&self) -> bool {
        match self {
            SpectralExpr::Rational(_) | SpectralExpr::DimPoly(_) => false,
            SpectralExpr::Mono(y) => y.uses_y2(),
            SpectralExpr::H(a) | SpectralExpr::HGauss(a) => a.arg != HArg::Z1,
            SpectralExpr::GPow1(y) => y.uses_y2(),
            SpectralExpr::GPow11(a, b) => a.uses_y2() || b.uses_y2(),
            SpectralExpr::Sum(v) | SpectralExpr::Prod(v) => v.iter().any(Self::uses_y2),
            SpectralExpr::Recip(b) => b.uses_y2(),
        }
    }
}

impl std::ops::Add for SpectralExpr {
    type Output = SpectralExpr;
    fn add(self, rhs: SpectralExpr) -> SpectralExpr {
        match (self, rhs) {
            (SpectralExpr::Sum(mut a), SpectralExpr::Sum(b)) => {
                a.extend(b);
                SpectralExpr::Sum(a)
            }
            (SpectralExpr::Sum(mut a), b) => {
                a.push(b);
                SpectralExpr::Sum(a)
            }
            (a, SpectralExpr::Sum(mut b)) => {
                b.insert(0, a);
                SpectralExpr::Sum(b)
            }
            (a, b) => SpectralExpr::Sum(vec![a, b]),
        }
    }
}

impl std::ops::Sub for SpectralExpr {
    type Output = SpectralExpr;
    fn sub(self, rhs: SpectralExpr) -> SpectralExpr {
        self + (-rhs)
    }
}

impl std::ops::Mul for SpectralExpr {
    type Output = SpectralExpr;
    fn mul(self, rhs: SpectralExpr) -> SpectralExpr {
        match (self, rhs) {
            (SpectralExpr::Prod(mut a), SpectralExpr::Prod(b)) => {
                a.extend(b);
                SpectralExpr::Prod(a)
            }
            (SpectralExpr::Prod(mut a), b) => {
                a.push(b);
                SpectralExpr::Prod(a)
            }
            (a, SpectralExpr::Prod(mut b)) => {
                b.insert(0, a);
                SpectralExpr::Prod(b)
            }
            (a, b) => SpectralExpr::Prod(vec![a, b]),
        }
    }
}

impl std::ops::Neg for SpectralExpr {
    type Output = SpectralExpr;
    fn neg(self) -> SpectralExpr {
        SpectralExpr::integer(-1) * self
    }
}

// ---------------------------------------------------------------------------
// Evaluation.

/// Point in the modular parameter space.
///
/// Both modular variables must be positive; the dimension must be at least
/// two so every Γ-weight is finite.  Single-variable expressions are
/// evaluated with y₂ fixed to one.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EvalPoint {
    pub y1: f64,
    pub y2: f64,
    pub m: u32,
}

impl EvalPoint {
    pub fn new(y1: f64, y2: f64, m: u32) -> Result<Self, ConformalError> {
        if !(y1.is_finite() && y1 > 0.0 && y2.is_finite() && y2 > 0.0) {
            return Err(ConformalError::InvalidInput(format!(
                "modular arguments must be positive and finite, got ({y1}, {y2})"
            )));
        }
        if m < 2 {
            return Err(ConformalError::InvalidInput(format!(
                "dimension must be ≥ 2, got {m}"
            )));
        }
        Ok(EvalPoint { y1, y2, m })
    }

    pub fn single(y: f64, m: u32) -> Result<Self, ConformalError> {
        EvalPoint::new(y, 1.0, m)
    }

    /// Nearby regular point used by the singular-denominator fallback.
    fn shifted(self, eps: f64) -> EvalPoint {
        EvalPoint {
            y1: self.y1 * (1.0 + eps),
            y2: self.y2 * (1.0 + 2.0 * eps),
            m: self.m,
        }
    }
}

/// Value with a conservative absolute error bound accumulated from the
/// quadrature of every H-atom (first-order propagation through products
/// and reciprocals).
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct Eval {
    pub value: f64,
    pub quad_error: f64,
}

/// Evaluation context: point, normalization for Gauss atoms, quadrature
/// tolerance.
#[derive(Clone, Copy, Debug)]
pub struct Evaluator {
    pub point: EvalPoint,
    pub norm: Normalization,
    pub tol: Tol,
}

impl Evaluator {
    pub fn new(point: EvalPoint) -> Self {
        Evaluator {
            point,
            norm: Normalization::default(),
            tol: Tol::default(),
        }
    }

    pub fn with(point: EvalPoint, norm: Normalization, tol: Tol) -> Self {
        Evaluator { point, norm, tol }
    }

    pub fn eval(&self, e: &SpectralExpr) -> Result<Eval, ConformalError> {
        match e {
            SpectralExpr::Rational(r) => Ok(Eval {
                value: rat_to_f64(r),
                quad_error: 0.0,
            }),
            SpectralExpr::DimPoly(p) => Ok(Eval {
                value: rat_to_f64(&p.eval_int(i64::from(self.point.m))),
                quad_error: 0.0,
            }),
            SpectralExpr::Mono(y) => Ok(Eval {
                value: y.value(self.point),
                quad_error: 0.0,
            }),
            SpectralExpr::H(atom) => {
                let raw = self.h_raw(atom, Normalization::One)?;
                let two_d = 2 * atom.order() as i64 + i64::from(self.point.m) - 4;
                debug_assert!(two_d >= 1, "Γ-weight argument must be positive");
                let g = gamma_half(two_d as u32);
                Ok(Eval {
                    value: g * raw.value,
                    quad_error: g * raw.quad_error,
                })
            }
            SpectralExpr::HGauss(atom) => self.h_raw(atom, self.norm),
            SpectralExpr::GPow1(y) => Ok(Eval {
                value: gpow1(y.value(self.point), 0.5),
                quad_error: 0.0,
            }),
            SpectralExpr::GPow11(a, b) => Ok(Eval {
                value: gpow11(a.value(self.point), b.value(self.point), 0.5),
                quad_error: 0.0,
            }),
            SpectralExpr::Sum(terms) => {
                let mut value = 0.0;
                let mut quad_error = 0.0;
                for t in terms {
                    let e = self.eval(t)?;
                    value += e.value;
                    quad_error += e.quad_error;
                }
                Ok(Eval { value, quad_error })
            }
            SpectralExpr::Prod(factors) => {
                let evals: Vec<Eval> = factors
                    .iter()
                    .map(|f| self.eval(f))
                    .collect::<Result<_, _>>()?;
                let value: f64 = evals.iter().map(|e| e.value).product();
                // err(Π v_i) ≈ Σ_i err_i · Π_{j≠i} |v_j|.
                let mut quad_error = 0.0;
                for i in 0..evals.len() {
                    let rest: f64 = evals
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, e)| e.value.abs())
                        .product();
                    quad_error += evals[i].quad_error * rest;
                }
                Ok(Eval { value, quad_error })
            }
            SpectralExpr::Recip(inner) => {
                let e = self.eval(inner)?;
                if e.value.abs() < SINGULAR_GUARD {
                    return Err(ConformalError::NearSingular(format!(
                        "denominator {:.3e} at y1 = {}, y2 = {}",
                        e.value, self.point.y1, self.point.y2
                    )));
                }
                Ok(Eval {
                    value: e.value.recip(),
                    quad_error: e.quad_error / (e.value * e.value),
                })
            }
        }
    }

    fn h_raw(&self, atom: &HAtom, norm: Normalization) -> Result<Eval, ConformalError> {
        let mi = MultiIndex::from_slice(&atom.alpha)?;
        let z = atom.z_args(self.point);
        let q = h_alpha_with_diag(&mi, &z, self.point.m, 2, norm, self.tol)?;
        // The rearrangement layer normalizes trailing entries only, with
        // the leading Γ appearing explicitly in its formulas.  This family
        // is symmetric in all entries; the argument transforms permute the
        // index and are covariant only in the symmetric convention.
        let lead = gamma_half(2 * atom.alpha[0]);
        Ok(Eval {
            value: q.value / lead,
            quad_error: q.error / lead,
        })
    }
}

/// One-call evaluation with explicit context.
pub fn eval(
    expr: &SpectralExpr,
    point: EvalPoint,
    norm: Normalization,
    tol: Tol,
) -> Result<Eval, ConformalError> {
    Evaluator::with(point, norm, tol).eval(expr)
}

// ---------------------------------------------------------------------------
// Argument transforms.

fn tau2_atom(atom: &HAtom) -> (Option<YMono>, HAtom) {
    let d = atom.shift_exponent();
    match atom.arg {
        HArg::Z12 => {
            // (z₁, z₂) fixed, index rotated, prefactor (y₁y₂)^d.
            let rotated = vec![atom.alpha[1], atom.alpha[2], atom.alpha[0]];
            (
                Some(YMono { e1: d, e2: d }),
                HAtom {
                    alpha: rotated,
                    arg: HArg::Z12,
                },
            )
        }
        HArg::Z1 => (
            Some(YMono { e1: d, e2: d }),
            HAtom {
                alpha: vec![atom.alpha[1], atom.alpha[0]],
                arg: HArg::Z2,
            },
        ),
        HArg::Z2 => (
            Some(YMono {
                e1: HalfPow::ZERO,
                e2: d,
            }),
            HAtom {
                alpha: vec![atom.alpha[1], atom.alpha[0]],
                arg: HArg::Y2Bar,
            },
        ),
        // 1 − y₂ → 1 − y₁ is a plain substitution; no reflection occurs.
        HArg::Y2Bar => (
            None,
            HAtom {
                alpha: atom.alpha.clone(),
                arg: HArg::Z1,
            },
        ),
    }
}

/// Order-three transform: substitutes y₁ → (y₁y₂)^{-1}, y₂ → y₁
/// everywhere, using the closed covariance rules on H-atoms.
pub fn tau2(e: &SpectralExpr) -> SpectralExpr {
    match e {
        SpectralExpr::Rational(_) | SpectralExpr::DimPoly(_) => e.clone(),
        SpectralExpr::Mono(y) => SpectralExpr::Mono(y.tau2()),
        SpectralExpr::H(atom) => {
            let (pre, a) = tau2_atom(atom);
            match pre {
                Some(mono) => SpectralExpr::Mono(mono) * SpectralExpr::H(a),
                None => SpectralExpr::H(a),
            }
        }
        SpectralExpr::HGauss(atom) => {
            // The Γ-weight depends only on |α| and m, both transform
            // invariants, so the same rules apply.
            let (pre, a) = tau2_atom(atom);
            match pre {
                Some(mono) => SpectralExpr::Mono(mono) * SpectralExpr::HGauss(a),
                None => SpectralExpr::HGauss(a),
            }
        }
        SpectralExpr::GPow1(y) => SpectralExpr::GPow1(y.tau2()),
        SpectralExpr::GPow11(a, b) => SpectralExpr::GPow11(a.tau2(), b.tau2()),
        SpectralExpr::Sum(v) => SpectralExpr::Sum(v.iter().map(tau2).collect()),
        SpectralExpr::Prod(v) => SpectralExpr::Prod(v.iter().map(tau2).collect()),
        SpectralExpr::Recip(b) => SpectralExpr::Recip(Box::new(tau2(b))),
    }
}

/// Order-two reflection y → 1/y for single-variable expressions
/// (y ≡ y₁; any dependence on y₂ is rejected).
pub fn tau1(e: &SpectralExpr) -> Result<SpectralExpr, ConformalError> {
    if e.uses_y2() {
        return Err(ConformalError::InvalidInput(
            "reflection transform applied to a two-variable expression".into(),
        ));
    }
    fn walk(e: &SpectralExpr) -> Result<SpectralExpr, ConformalError> {
        Ok(match e {
            SpectralExpr::Rational(_) | SpectralExpr::DimPoly(_) => e.clone(),
            SpectralExpr::Mono(y) => SpectralExpr::Mono(y.tau1()?),
            SpectralExpr::H(atom) => {
                let d = atom.shift_exponent();
                let swapped = HAtom {
                    alpha: vec![atom.alpha[1], atom.alpha[0]],
                    arg: HArg::Z1,
                };
                SpectralExpr::Mono(YMono {
                    e1: d,
                    e2: HalfPow::ZERO,
                }) * SpectralExpr::H(swapped)
            }
            SpectralExpr::HGauss(atom) => {
                let d = atom.shift_exponent();
                let swapped = HAtom {
                    alpha: vec![atom.alpha[1], atom.alpha[0]],
                    arg: HArg::Z1,
                };
                SpectralExpr::Mono(YMono {
                    e1: d,
                    e2: HalfPow::ZERO,
                }) * SpectralExpr::HGauss(swapped)
            }
            SpectralExpr::GPow1(y) => SpectralExpr::GPow1(y.tau1()?),
            SpectralExpr::GPow11(a, b) => SpectralExpr::GPow11(a.tau1()?, b.tau1()?),
            SpectralExpr::Sum(v) => {
                SpectralExpr::Sum(v.iter().map(walk).collect::<Result<_, _>>()?)
            }
            SpectralExpr::Prod(v) => {
                SpectralExpr::Prod(v.iter().map(walk).collect::<Result<_, _>>()?)
            }
            SpectralExpr::Recip(b) => SpectralExpr::Recip(Box::new(walk(b)?)),
        })
    }
    walk(e)
}

// ---------------------------------------------------------------------------
// Fixture shorthand.

fn h(alpha: &[u32], arg: HArg) -> SpectralExpr {
    SpectralExpr::h(alpha, arg).expect("valid atom")
}

fn hg(alpha: &[u32], arg: HArg) -> SpectralExpr {
    SpectralExpr::h_gauss(alpha, arg).expect("valid atom")
}

fn ym(y: YMono) -> SpectralExpr {
    SpectralExpr::Mono(y)
}

fn q(n: i64, d: i64) -> SpectralExpr {
    SpectralExpr::rational(n, d)
}

fn mp(coeffs: &[i64]) -> SpectralExpr {
    SpectralExpr::dim_poly(coeffs)
}

/// 1/m as an expression.
fn m_recip() -> SpectralExpr {
    mp(&[0, 1]).recip()
}

fn g1_y1() -> SpectralExpr {
    SpectralExpr::GPow1(YMono::y1())
}

fn g1_y2() -> SpectralExpr {
    SpectralExpr::GPow1(YMono::y2())
}

fn g11_y1_y2() -> SpectralExpr {
    SpectralExpr::GPow11(YMono::y1(), YMono::y2())
}

/// z₁ = 1 − y₁ as an expression.
fn z1() -> SpectralExpr {
    SpectralExpr::integer(1) - ym(YMono::y1())
}

/// z₂ = 1 − y₁y₂ as an expression.
fn z2() -> SpectralExpr {
    SpectralExpr::integer(1) - ym(YMono::y1().mul(YMono::y2()))
}

// ---------------------------------------------------------------------------
// The heat-coefficient fixtures.

/// Which conformally scaled Laplacian the coefficient functions belong to:
/// the one-sided scaling k·Δ or the symmetric Weyl form k^{1/2}·Δ·k^{1/2}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConformalOp {
    DeltaK,
    DeltaPhi,
}

/// Finite combination Σ c_{α,p}(m) · y₁^p · 𝖧_α with exact polynomial
/// coefficients; the canonical exchange format between the symbol engine
/// and this module.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HPoly {
    pub terms: BTreeMap<(Vec<u32>, u8), MPoly>,
}

impl HPoly {
    pub fn new() -> Self {
        HPoly::default()
    }

    pub fn add_term(&mut self, alpha: &[u32], y1_pow: u8, coeff: MPoly) {
        if coeff.is_zero() {
            return;
        }
        let entry = self
            .terms
            .entry((alpha.to_vec(), y1_pow))
            .or_insert_with(MPoly::zero);
        *entry = &*entry + &coeff;
        if entry.is_zero() {
            self.terms.remove(&(alpha.to_vec(), y1_pow));
        }
    }

    /// Expand into Gauss-normalized atoms; one-variable indices take z₁,
    /// two-variable ones the standard pair.
    pub fn to_expr(&self) -> SpectralExpr {
        let mut terms = Vec::new();
        for ((alpha, p), coeff) in &self.terms {
            let arg = if alpha.len() == 2 { HArg::Z1 } else { HArg::Z12 };
            let mut factor = SpectralExpr::DimPoly(coeff.clone()) * hg(alpha, arg);
            if *p > 0 {
                factor = ym(YMono {
                    e1: HalfPow::int(i32::from(*p)),
                    e2: HalfPow::ZERO,
                }) * factor;
            }
            terms.push(factor);
        }
        SpectralExpr::Sum(terms)
    }
}

/// Coefficient table of the one-variable part for the one-sided scaling:
/// (m+2)𝖧_{3,1} − (m/2)𝖧_{2,1}, multiplying the Laplacian of the Weyl
/// factor.
pub fn g_i_table() -> HPoly {
    let mut t = HPoly::new();
    t.add_term(&[3, 1], 0, MPoly::from_ints(&[2, 1]));
    t.add_term(
        &[2, 1],
        0,
        MPoly::from_ascending(vec![rat(0, 1), rat(-1, 2)]),
    );
    t
}

/// Coefficient table of the two-variable part for the one-sided scaling:
/// −(m²+6m+8)(𝖧_{3,1,1} + ½(1−z₁)𝖧_{2,2,1}) + ((m²+4m+4)/2)𝖧_{2,1,1},
/// multiplying the squared gradient of the Weyl factor.  The (1−z₁) = y₁
/// factor is tracked through the power column.
pub fn g_ii_table() -> HPoly {
    let mut t = HPoly::new();
    t.add_term(&[3, 1, 1], 0, MPoly::from_ints(&[-8, -6, -1]));
    t.add_term(
        &[2, 2, 1],
        1,
        MPoly::from_ascending(vec![rat(-4, 1), rat(-3, 1), rat(-1, 2)]),
    );
    t.add_term(
        &[2, 1, 1],
        0,
        MPoly::from_ascending(vec![rat(2, 1), rat(2, 1), rat(1, 2)]),
    );
    t
}

/// Correction term routing both Weyl-factor derivatives into one slot:
/// J^{(2)} = −𝖦^{(1)}(y)·(2𝖧_{2,1}(z) − 𝖧_{1,1}(z)).
pub fn j2_expr() -> SpectralExpr {
    -(g1_y1() * (q(2, 1) * hg(&[2, 1], HArg::Z1) - hg(&[1, 1], HArg::Z1)))
}

/// Correction term splitting the derivatives across two slots:
/// J^{(1,1)} = −2(y₁^{-1/2}𝖦^{(1)}(y₁)𝖦^{(1)}(y₂) + 2𝖦^{(1,1)})𝖧_{2,1}(z₂)
///             + 2𝖦^{(1,1)}𝖧_{1,1}(z₂).
///
/// Both atoms take z₂ because a product collapsed to one slot carries the
/// total modular shift y₁y₂.
pub fn j11_expr() -> SpectralExpr {
    let split = ym(YMono::half_powers(-1, 0)) * g1_y1() * g1_y2() + q(2, 1) * g11_y1_y2();
    -(q(2, 1) * split * hg(&[2, 1], HArg::Z2)) + q(2, 1) * g11_y1_y2() * hg(&[1, 1], HArg::Z2)
}

/// Correction rows pairing one derivative with a first-order symbol term:
/// (2+m)(𝖦₁+𝖦₂)𝖧_{2,1,1} + (2+m)𝖦₁(1−z₁)𝖧_{1,2,1} − (m𝖦₁+2𝖦₁𝖦₂)𝖧_{1,1,1}.
pub fn j_mixed_expr() -> SpectralExpr {
    mp(&[2, 1]) * (g1_y1() + g1_y2()) * hg(&[2, 1, 1], HArg::Z12)
        + mp(&[2, 1]) * g1_y1() * ym(YMono::y1()) * hg(&[1, 2, 1], HArg::Z12)
        - (mp(&[0, 1]) * g1_y1() + q(2, 1) * g1_y1() * g1_y2()) * hg(&[1, 1, 1], HArg::Z12)
}

/// One-variable coefficient function of the chosen operator.
pub fn g_i_expr(op: ConformalOp) -> SpectralExpr {
    match op {
        ConformalOp::DeltaK => g_i_table().to_expr(),
        ConformalOp::DeltaPhi => g_i_table().to_expr() + j2_expr(),
    }
}

/// Two-variable coefficient function of the chosen operator.
pub fn g_ii_expr(op: ConformalOp) -> SpectralExpr {
    match op {
        ConformalOp::DeltaK => g_ii_table().to_expr(),
        ConformalOp::DeltaPhi => g_ii_table().to_expr() + j11_expr() + j_mixed_expr(),
    }
}

/// Values of the three correction terms at a point.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct JValues {
    pub j2: Eval,
    pub j11: Eval,
    pub j_mixed: Eval,
}

/// Evaluate all three correction terms.
pub fn j_functions(
    point: EvalPoint,
    norm: Normalization,
    tol: Tol,
) -> Result<JValues, ConformalError> {
    let ev = Evaluator::with(point, norm, tol);
    Ok(JValues {
        j2: ev.eval(&j2_expr())?,
        j11: ev.eval(&j11_expr())?,
        j_mixed: ev.eval(&j_mixed_expr())?,
    })
}

// ---------------------------------------------------------------------------
// Γ-weighted forms of the two-variable relation.

/// Γ-weighted form of the left side of the two-variable relation:
/// ((y₁y₂)^{1/2} − 1)(((2+m)/2)H_{2,1,1} − 2H_{3,1,1} − y₁H_{2,2,1}).
///
/// Equals Γ(m/2+1)/2 times ((y₁y₂)^{1/2} − 1)·[`g_ii_expr`] of the
/// one-sided operator when the Gauss atoms are evaluated without their
/// constant.
pub fn weighted_g_ii() -> SpectralExpr {
    (ym(YMono::half_powers(1, 1)) - SpectralExpr::integer(1))
        * (mp(&[2, 1]) * q(1, 2) * h(&[2, 1, 1], HArg::Z12)
            - q(2, 1) * h(&[3, 1, 1], HArg::Z12)
            - ym(YMono::y1()) * h(&[2, 2, 1], HArg::Z12))
}

/// Γ-weighted form of the mixed correction:
/// (𝖦₁+𝖦₂)H_{2,1,1} + y₁𝖦₁H_{1,2,1} − ½𝖦₁(m+2𝖦₂)H_{1,1,1}.
pub fn weighted_j_ii() -> SpectralExpr {
    (g1_y1() + g1_y2()) * h(&[2, 1, 1], HArg::Z12)
        + ym(YMono::y1()) * g1_y1() * h(&[1, 2, 1], HArg::Z12)
        - q(1, 2) * g1_y1() * (mp(&[0, 1]) + q(2, 1) * g1_y2()) * h(&[1, 1, 1], HArg::Z12)
}

/// Γ-weighted form of the two-slot correction:
/// −(2𝖦^{(1,1)} + y₁^{-1/2}𝖦₁𝖦₂)H_{2,1}(z₂) + (m/2)𝖦^{(1,1)}H_{1,1}(z₂).
pub fn weighted_j_i() -> SpectralExpr {
    -((q(2, 1) * g11_y1_y2() + ym(YMono::half_powers(-1, 0)) * g1_y1() * g1_y2())
        * h(&[2, 1], HArg::Z2))
        + mp(&[0, 1]) * q(1, 2) * g11_y1_y2() * h(&[1, 1], HArg::Z2)
}

// ---------------------------------------------------------------------------
// The one-variable relation in Γ-weighted form.

/// Γ-weighted combination whose vanishing is the one-variable relation:
/// −z((4/m)H_{3,1} − H_{2,1}) + (4/m)H_{2,1} − H_{1,1}, with z = 1 − y.
///
/// The inner coefficient of the standalone H_{2,1} term is 4/m; the
/// superficially plausible 2/m breaks the identity (see the unit test
/// probing both).
pub fn v_i_expr() -> SpectralExpr {
    -(z1() * (q(4, 1) * m_recip() * h(&[3, 1], HArg::Z1) - h(&[2, 1], HArg::Z1)))
        + q(4, 1) * m_recip() * h(&[2, 1], HArg::Z1)
        - h(&[1, 1], HArg::Z1)
}

/// The reflected form (1−z)^{-m/2}·τ₁ of [`v_i_expr`]:
/// (4z/m)(1−z)H_{1,3} + (−z + (4/m)(1−z))H_{1,2} − H_{1,1}.
///
/// This combination is the hypergeometric differential equation satisfied
/// by H_{1,1}, hence identically zero.
pub fn v_i_reflected_expr() -> SpectralExpr {
    q(4, 1) * m_recip() * z1() * ym(YMono::y1()) * h(&[1, 3], HArg::Z1)
        + (-z1() + q(4, 1) * m_recip() * ym(YMono::y1())) * h(&[1, 2], HArg::Z1)
        - h(&[1, 1], HArg::Z1)
}

// ---------------------------------------------------------------------------
// Recurrences.

/// One verified reduction identity between H-atoms.
#[derive(Clone, Debug)]
pub struct RecurrenceRule {
    pub name: &'static str,
    pub lhs: SpectralExpr,
    pub rhs: SpectralExpr,
}

/// Residual record for one identity at one point.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ResidualRow {
    pub y1: f64,
    pub y2: f64,
    pub m: u32,
    pub lhs: f64,
    pub rhs: f64,
    /// |lhs − rhs| / max(1, |lhs|, |rhs|).
    pub residual: f64,
    pub quad_error: f64,
}

fn residual_row(point: EvalPoint, l: Eval, r: Eval) -> ResidualRow {
    let scale = 1.0_f64.max(l.value.abs()).max(r.value.abs());
    ResidualRow {
        y1: point.y1,
        y2: point.y2,
        m: point.m,
        lhs: l.value,
        rhs: r.value,
        residual: (l.value - r.value).abs() / scale,
        quad_error: l.quad_error + r.quad_error,
    }
}

impl RecurrenceRule {
    /// Evaluate both sides at a point.
    pub fn residual(
        &self,
        point: EvalPoint,
        norm: Normalization,
        tol: Tol,
    ) -> Result<ResidualRow, ConformalError> {
        let ev = Evaluator::with(point, norm, tol);
        let l = ev.eval(&self.lhs)?;
        let r = ev.eval(&self.rhs)?;
        Ok(residual_row(point, l, r))
    }

    /// As [`residual`](Self::residual), falling back to shifted evaluation
    /// with Richardson extrapolation when a denominator degenerates.
    ///
    /// The identity holds at every regular point, so the extrapolated
    /// residual stays small exactly when the rule is correct; the two
    /// shifted runs double as a consistency check on each other.
    pub fn residual_robust(
        &self,
        point: EvalPoint,
        norm: Normalization,
        tol: Tol,
    ) -> Result<ResidualRow, ConformalError> {
        match self.residual(point, norm, tol) {
            Err(ConformalError::NearSingular(_)) => {
                let eps = 1e-3;
                let r1 = self.residual(point.shifted(eps), norm, tol)?;
                let r2 = self.residual(point.shifted(eps / 2.0), norm, tol)?;
                let extrapolated = 2.0 * r2.residual - r1.residual;
                Ok(ResidualRow {
                    y1: point.y1,
                    y2: point.y2,
                    m: point.m,
                    lhs: r2.lhs,
                    rhs: r2.rhs,
                    residual: extrapolated.abs().max((r1.residual - r2.residual).abs()),
                    quad_error: r1.quad_error.max(r2.quad_error),
                })
            }
            other => other,
        }
    }
}

/// The index-reduction identities, each expressing a higher atom through
/// the basis {H_{1,2,1}, H_{1,1,2}, H_{1,1,1}} or the one-variable atoms.
pub fn recurrences() -> Vec<RecurrenceRule> {
    let y1e = || ym(YMono::y1());
    let y2e = || ym(YMono::y2());
    let y12e = || ym(YMono::y1().mul(YMono::y2()));
    let h121 = || h(&[1, 2, 1], HArg::Z12);
    let h112 = || h(&[1, 1, 2], HArg::Z12);
    let h111 = || h(&[1, 1, 1], HArg::Z12);

    let mut rules = Vec::new();

    // Second-slot weight three, expressed through the basis and H_{1,2,2}.
    rules.push(RecurrenceRule {
        name: "reduce-h131",
        lhs: h(&[1, 3, 1], HArg::Z12),
        rhs: ((mp(&[6, 1]) * (SpectralExpr::integer(1) - y1e()) - SpectralExpr::integer(6))
            * h121()
            + mp(&[2, 1]) * h111()
            + q(2, 1)
                * (SpectralExpr::integer(1) - y12e())
                * (h112() - y1e() * h(&[1, 2, 2], HArg::Z12)))
            * (q(4, 1) * (SpectralExpr::integer(1) - y1e()) * y1e()).recip(),
    });

    // Doubled trailing weight as a first divided difference.
    rules.push(RecurrenceRule {
        name: "reduce-h122",
        lhs: h(&[1, 2, 2], HArg::Z12),
        rhs: (h121() - h112()) * (y12e() - y1e()).recip(),
    });

    // Combined elimination of the weight-three atom together with
    // H_{1,2,2}; the first index block carries the weight three in second
    // position.  The twin reading with the weight in third position fails,
    // see the probe test.
    rules.push(RecurrenceRule {
        name: "eliminate-h131-h122",
        lhs: h(&[1, 3, 1], HArg::Z12)
            + ym(YMono {
                e1: HalfPow::ZERO,
                e2: HalfPow::int(1),
            }) * q(1, 2)
                * h(&[1, 2, 2], HArg::Z12),
        rhs: combined_elimination_rhs(),
    });

    // Leading weight two as a divided difference of z·H_{a+1,1}(z).
    for a in [1u32, 2] {
        rules.push(RecurrenceRule {
            name: if a == 1 {
                "split-h211-divided-difference"
            } else {
                "split-h311-divided-difference"
            },
            lhs: h(&[a, 1, 1], HArg::Z12),
            rhs: (z1() * h(&[a + 1, 1], HArg::Z1) - z2() * h(&[a + 1, 1], HArg::Z2))
                * (z1() - z2()).recip(),
        });
    }

    // One-variable atoms recovered from the basis.
    rules.push(RecurrenceRule {
        name: "h12-from-basis-z1",
        lhs: h(&[1, 2], HArg::Z1),
        rhs: (z1() - z2()) * h121() + h111(),
    });
    rules.push(RecurrenceRule {
        name: "h12-from-basis-z2",
        lhs: h(&[1, 2], HArg::Z2),
        rhs: (z2() - z1()) * h112() + h111(),
    });

    // Leading weight two reduced to the basis.
    rules.push(RecurrenceRule {
        name: "reduce-h211",
        lhs: h(&[2, 1, 1], HArg::Z12),
        rhs: mp(&[2, 1]) * q(1, 2) * h111() - y12e() * h112() - y1e() * h121(),
    });
    rules.push(RecurrenceRule {
        name: "h21-from-basis",
        lhs: h(&[2, 1], HArg::Z1),
        rhs: (SpectralExpr::integer(1) - mp(&[2, 1]) * q(1, 2) * z2()) * h111()
            + z2() * (SpectralExpr::integer(1) - z2()) * h112()
            + z2() * (SpectralExpr::integer(1) - z1()) * h121(),
    });

    // Equal-weight combination of the two one-variable atoms at z₁.
    rules.push(RecurrenceRule {
        name: "h21-plus-h12-from-basis",
        lhs: h(&[2, 1], HArg::Z1) + h(&[1, 2], HArg::Z1),
        rhs: y1e()
            * ((y2e() - SpectralExpr::integer(1))
                - (y12e() - SpectralExpr::integer(1)))
            * h121()
            + y12e() * (SpectralExpr::integer(1) - y12e()) * h112()
            + (SpectralExpr::integer(1)
                + q(1, 2)
                    * (mp(&[0, 1]) * (y12e() - SpectralExpr::integer(1))
                        + q(2, 1) * y12e()))
                * h111(),
    });

    // Hypergeometric contiguity of the lowest atom.
    rules.push(RecurrenceRule {
        name: "h11-balance",
        lhs: h(&[1, 1], HArg::Z1),
        rhs: q(2, 1)
            * m_recip()
            * (ym(YMono::y1()) * h(&[1, 2], HArg::Z1) + h(&[2, 1], HArg::Z1)),
    });

    rules
}

/// Right side of the combined elimination, with unit weight on the
/// weight-three atom and y₂/2 on H_{1,2,2}.
fn combined_elimination_rhs() -> SpectralExpr {
    let y1e = || ym(YMono::y1());
    let y2e = || ym(YMono::y2());
    let y12e = || ym(YMono::y1().mul(YMono::y2()));
    let eta2 = || {
        ym(YMono {
            e1: HalfPow::ZERO,
            e2: HalfPow::int(1),
        }) * q(1, 2)
    };
    // Coefficient of H_{1,2,1}.
    let c121 = mp(&[0, 1]) * q(1, 4) * ym(YMono::y1().inv())
        + (y1e() - SpectralExpr::integer(1)).recip()
        - q(1, 2)
            * (y1e() * (y2e() - SpectralExpr::integer(1))).recip()
        + eta2() * (y1e() * (y2e() - SpectralExpr::integer(1))).recip();
    // Coefficient of H_{1,1,2}.
    let c112 = -(eta2() * (y1e() * (y2e() - SpectralExpr::integer(1))).recip())
        + y2e()
            * (y12e() - SpectralExpr::integer(1))
            * (q(2, 1)
                * y1e()
                * (y1e() - SpectralExpr::integer(1))
                * (y2e() - SpectralExpr::integer(1)))
            .recip();
    // Coefficient of H_{1,1,1}.
    let c111 = -(mp(&[2, 1])
        * (q(4, 1) * y1e() * (y1e() - SpectralExpr::integer(1))).recip());
    c121 * h(&[1, 2, 1], HArg::Z12) + c112 * h(&[1, 1, 2], HArg::Z12)
        + c111 * h(&[1, 1, 1], HArg::Z12)
}

// ---------------------------------------------------------------------------
// Coefficient-level form of the two-variable relation.

/// Coefficients of {H_{1,2,1}, H_{1,1,2}, H_{1,1,1}} in a reduced
/// two-variable combination.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct PairCoeffs {
    pub c121: f64,
    pub c112: f64,
    pub c111: f64,
}

/// Basis coefficients of y₁^{-m/2} τ₂²(weighted_g_ii − weighted_j_ii),
/// in closed single-variable form.
pub fn transformed_difference_coeffs(point: EvalPoint) -> PairCoeffs {
    let (y1, y2) = (point.y1, point.y2);
    let mf = f64::from(point.m);
    let g1 = gpow1(y1, 0.5);
    let g2 = gpow1(y2, 0.5);
    let gi = gpow1((y1 * y2).recip(), 0.5);
    let s1 = y1.sqrt();
    PairCoeffs {
        c121: y1 * y1 * (2.0 * s1 * g1 - g2 - gi),
        c112: y1 * y1 * y2 * (s1 * g1 - g2),
        c111: y1 * (-(1.0 + mf / 2.0) * s1 * g1 + 0.5 * g2 * (mf + 2.0 * gi)),
    }
}

/// Basis coefficients of y₁^{-m/2} τ₂²(weighted_j_i), in the divided-
/// difference form produced by transforming the two-slot correction.
///
/// Identical to [`transformed_difference_coeffs`] as functions of
/// (y₁, y₂, m); that equality is the two-variable relation.
pub fn transformed_product_coeffs(point: EvalPoint) -> PairCoeffs {
    let (y1, y2) = (point.y1, point.y2);
    let mf = f64::from(point.m);
    // 𝖦^{(1,1)} over the node set {1, y₂, 1/y₁}.
    let gq = gpow11(y2, (y1 * y2).recip(), 0.5);
    let gp = gpow1(y2, 0.5) * gpow1((y1 * y2).recip(), 0.5);
    let s2 = y2.sqrt();
    PairCoeffs {
        c121: -y1 * y1 * (y2 - 1.0) / s2 * gp - (y1 * (y1 * y2 - 1.0) + y1 * y1 * (y2 - 1.0)) * gq,
        c112: y1 * y2 * (1.0 - y1 * y2) * gq,
        c111: -y1 / s2 * gp + (y1 * (y2 - 1.0) + mf / 2.0 * (y1 * y2 - 1.0)) * gq,
    }
}

/// [`transformed_product_coeffs`] after eliminating the second divided
/// difference through the square-root node identities.
pub fn transformed_product_coeffs_closed(point: EvalPoint) -> PairCoeffs {
    let (y1, y2) = (point.y1, point.y2);
    let mf = f64::from(point.m);
    let g1 = gpow1(y1, 0.5);
    let g2 = gpow1(y2, 0.5);
    let g12 = gpow1(y1 * y2, 0.5);
    let s1 = y1.sqrt();
    PairCoeffs {
        c121: y1 * y1 * (2.0 * gpow1(y1.recip(), 0.5) - g2 - (y1 * y2).sqrt() * g12),
        c112: y1 * y1 * y2 * (s1 * g1 - g2),
        c111: y1 * (mf / 2.0 * g2 - (1.0 + mf / 2.0) * s1 * g1 + s1 * g12 * (1.0 - g2)),
    }
}

// ---------------------------------------------------------------------------
// Relation verifiers.

/// Default grid for the one-variable relation.
pub fn default_relation_i_grid() -> (Vec<f64>, Vec<u32>) {
    (vec![0.25, 0.5, 2.0, 4.0], vec![2, 3, 4, 5])
}

/// Default grid for the two-variable relation.
pub fn default_relation_ii_grid() -> (Vec<(f64, f64)>, Vec<u32>) {
    (
        vec![(0.5, 0.5), (0.5, 2.0), (2.0, 0.5), (2.0, 2.0)],
        vec![2, 4],
    )
}

/// Residual of (y^{1/2} − 1)·G_I = J^{(2)} at one point.
pub fn relation_i_residual(
    y: f64,
    m: u32,
    norm: Normalization,
    tol: Tol,
) -> Result<ResidualRow, ConformalError> {
    let point = EvalPoint::single(y, m)?;
    let ev = Evaluator::with(point, norm, tol);
    let lhs = (ym(YMono::half_powers(1, 0)) - SpectralExpr::integer(1))
        * g_i_expr(ConformalOp::DeltaK);
    let l = ev.eval(&lhs)?;
    let r = ev.eval(&j2_expr())?;
    Ok(residual_row(point, l, r))
}

/// Verify the one-variable relation on a grid, in parallel.
pub fn verify_relation_i(
    ys: &[f64],
    ms: &[u32],
    norm: Normalization,
    tol: Tol,
) -> Result<Vec<ResidualRow>, ConformalError> {
    let points: Vec<(f64, u32)> = ys
        .iter()
        .flat_map(|&y| ms.iter().map(move |&m| (y, m)))
        .collect();
    points
        .par_iter()
        .map(|&(y, m)| relation_i_residual(y, m, norm, tol))
        .collect()
}

/// Residual of ((y₁y₂)^{1/2} − 1)·G_II = J^{(1,1)} + J_mixed at one point.
pub fn relation_ii_residual(
    y1: f64,
    y2: f64,
    m: u32,
    norm: Normalization,
    tol: Tol,
) -> Result<ResidualRow, ConformalError> {
    let point = EvalPoint::new(y1, y2, m)?;
    let ev = Evaluator::with(point, norm, tol);
    let lhs = (ym(YMono::half_powers(1, 1)) - SpectralExpr::integer(1))
        * g_ii_expr(ConformalOp::DeltaK);
    let l = ev.eval(&lhs)?;
    let rhs = j11_expr() + j_mixed_expr();
    let r = ev.eval(&rhs)?;
    Ok(residual_row(point, l, r))
}

/// Verify the two-variable relation on a grid, in parallel.
pub fn verify_relation_ii(
    ys: &[(f64, f64)],
    ms: &[u32],
    norm: Normalization,
    tol: Tol,
) -> Result<Vec<ResidualRow>, ConformalError> {
    let points: Vec<(f64, f64, u32)> = ys
        .iter()
        .flat_map(|&(a, b)| ms.iter().map(move |&m| (a, b, m)))
        .collect();
    points
        .par_iter()
        .map(|&(a, b, m)| relation_ii_residual(a, b, m, norm, tol))
        .collect()
}

/// Residuals of the transformed two-variable relation checked atom by
/// atom: the combination y₁^{-m/2}τ₂²(…) against its basis coefficients.
///
/// Returns (difference-side residual, product-side residual).
pub fn transformed_relation_residuals(
    point: EvalPoint,
    tol: Tol,
) -> Result<(f64, f64), ConformalError> {
    let ev = Evaluator::with(point, Normalization::One, tol);
    let pull = ym(YMono {
        e1: HalfPow { p: 0, q: -1 },
        e2: HalfPow::ZERO,
    });
    let basis = |c: PairCoeffs| -> Result<Eval, ConformalError> {
        let h121 = ev.eval(&h(&[1, 2, 1], HArg::Z12))?;
        let h112 = ev.eval(&h(&[1, 1, 2], HArg::Z12))?;
        let h111 = ev.eval(&h(&[1, 1, 1], HArg::Z12))?;
        Ok(Eval {
            value: c.c121 * h121.value + c.c112 * h112.value + c.c111 * h111.value,
            quad_error: c.c121.abs() * h121.quad_error
                + c.c112.abs() * h112.quad_error
                + c.c111.abs() * h111.quad_error,
        })
    };

    let diff = pull.clone() * tau2(&tau2(&(weighted_g_ii() - weighted_j_ii())));
    let l1 = ev.eval(&diff)?;
    let r1 = basis(transformed_difference_coeffs(point))?;
    let res1 = (l1.value - r1.value).abs() / 1.0_f64.max(l1.value.abs()).max(r1.value.abs());

    let prod = pull * tau2(&tau2(&weighted_j_i()));
    let l2 = ev.eval(&prod)?;
    let r2 = basis(transformed_product_coeffs(point))?;
    let res2 = (l2.value - r2.value).abs() / 1.0_f64.max(l2.value.abs()).max(r2.value.abs());

    Ok((res1, res2))
}

// ---------------------------------------------------------------------------
// CSV export.

/// Write residual rows as CSV with a fixed header.
pub fn write_residual_csv<W: std::io::Write>(
    mut w: W,
    rows: &[ResidualRow],
) -> std::io::Result<()> {
    writeln!(w, "y1,y2,m,lhs,rhs,residual,quadrature_error")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e}",
            r.y1, r.y2, r.m, r.lhs, r.rhs, r.residual, r.quad_error
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tol {
        Tol::new(1e-11, 1e-11)
    }

    fn ev(y1: f64, y2: f64, m: u32) -> Evaluator {
        Evaluator::with(
            EvalPoint::new(y1, y2, m).unwrap(),
            Normalization::One,
            tol(),
        )
    }

    #[test]
    fn gpow1_frozen_values() {
        assert!((gpow1(1.0, 0.5) - 0.5).abs() < 1e-15);
        assert!((gpow1(4.0, 0.5) - 1.0 / 3.0).abs() < 1e-15);
        // The series window joins the closed form smoothly.
        let inside = gpow1(1.0 + 5e-5, 0.5);
        let closed = (1.0f64 + 5e-5).sqrt().recip() / (1.0 + (1.0f64 + 5e-5).sqrt());
        // 1/(1+√y) is the exactly stable form of the same quotient.
        let stable = 1.0 / (1.0 + (1.0f64 + 5e-5).sqrt());
        assert!((inside - stable).abs() < 1e-13, "series {inside} vs {stable}");
        let _ = closed;
    }

    #[test]
    fn gpow11_center_value_and_node_symmetry() {
        assert!((gpow11(1.0, 1.0, 0.5) + 0.125).abs() < 1e-15);
        // Symmetric in the node set {1, a, ab}.
        let v1 = gpow11(1.7, 0.4, 0.5);
        let v2 = gpow11(1.7 * 0.4, 1.0 / 0.4, 0.5);
        assert!((v1 - v2).abs() < 1e-14);
        // Stable closed form over the same nodes.
        let (a, b): (f64, f64) = (1.7, 1.7 * 0.4);
        let closed = -1.0 / ((1.0 + a.sqrt()) * (1.0 + b.sqrt()) * (a.sqrt() + b.sqrt()));
        assert!((v1 - closed).abs() < 1e-14);
    }

    #[test]
    fn gpow_reflection_and_product_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let y: f64 = rng.random_range(0.05..20.0);
            // √y·gpow1(y) is gpow1 at the reflected argument.
            assert!(
                (gpow1(y.recip(), 0.5) - y.sqrt() * gpow1(y, 0.5)).abs() < 1e-12,
                "reflection failed at y = {y}"
            );
            // (y−1)·gpow1(y) telescopes to √y − 1.
            assert!(((y - 1.0) * gpow1(y, 0.5) - (y.sqrt() - 1.0)).abs() < 1e-12);
        }
        for _ in 0..200 {
            let y1: f64 = rng.random_range(0.1..6.0);
            let y2: f64 = rng.random_range(0.1..6.0);
            // Divided-difference over {1, y₂, 1/y₁} written with explicit
            // denominators, against the library form.
            let direct = gpow11(y2, (y1 * y2).recip(), 0.5);
            let u = |x: f64| x.sqrt();
            let dd = ((u(1.0 / y1) - u(y2)) / (1.0 / y1 - y2) - (u(y2) - 1.0) / (y2 - 1.0))
                / (1.0 / y1 - 1.0);
            if (1.0 / y1 - y2).abs() > 1e-3 && (y2 - 1.0).abs() > 1e-3 && (y1 - 1.0).abs() > 1e-3
            {
                assert!((direct - dd).abs() < 1e-9, "at ({y1}, {y2}): {direct} vs {dd}");
            }
        }
    }

    #[test]
    fn h_atom_closed_form_oracles() {
        // m = 2: the weight-(1,1) atom integrates to −ln(1−z)/z.
        for &z in &[0.5, -2.0] {
            let y = 1.0 - z;
            let e = ev(y, 1.0, 2);
            let got = e.eval(&h(&[1, 1], HArg::Z1)).unwrap().value;
            let want = -(1.0 - z).ln() / z;
            assert!((got - want).abs() < 1e-9, "z = {z}: {got} vs {want}");
        }
        // m = 2: the weight-(2,1) atom integrates to (−z − ln(1−z))/z².
        let e = ev(0.5, 1.0, 2);
        let got = e.eval(&h(&[2, 1], HArg::Z1)).unwrap().value;
        let want = (-0.5 - 0.5f64.ln()) / 0.25;
        assert!((got - want).abs() < 1e-9);
        // m = 3 exercises the half-integer Γ-weight: Γ(3/2)·∫(1−zu)^{−3/2}.
        let e = ev(0.5, 1.0, 3);
        let got = e.eval(&h(&[1, 1], HArg::Z1)).unwrap().value;
        let z = 0.5_f64;
        let want = gamma_half(3) * 2.0 * (1.0 / (1.0 - z).sqrt() - 1.0) / z;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn gauss_and_gamma_variants_differ_by_the_stated_constant() {
        let point = EvalPoint::new(0.7, 1.3, 3).unwrap();
        let e = Evaluator::with(point, Normalization::GaussTwoPi, tol());
        let gauss = e.eval(&hg(&[2, 1, 1], HArg::Z12)).unwrap().value;
        let gamma = e.eval(&h(&[2, 1, 1], HArg::Z12)).unwrap().value;
        // 𝖧 = c(m)/Γ(|α| + m/2 − 2) · H with |α| = 4, m = 3.
        let ratio = Normalization::GaussTwoPi.value(3) / gamma_half(2 * 4 + 3 - 4);
        assert!((gauss - ratio * gamma).abs() < 1e-9 * gauss.abs());
    }

    #[test]
    fn transform_rules_match_plain_substitution() {
        let t = tol();
        // τ₂ substitutes y₁ → (y₁y₂)^{-1}, y₂ → y₁.
        let cases = [
            h(&[2, 1, 1], HArg::Z12),
            h(&[1, 2, 1], HArg::Z12),
            h(&[3, 1], HArg::Z1),
            h(&[1, 2], HArg::Z2),
            h(&[2, 1], HArg::Y2Bar),
            SpectralExpr::GPow11(YMono::y1(), YMono::y2()),
        ];
        let (y1, y2, m) = (0.6, 1.8, 3);
        let sub = EvalPoint::new(1.0 / (y1 * y2), y1, m).unwrap();
        let here = EvalPoint::new(y1, y2, m).unwrap();
        for c in &cases {
            let direct = Evaluator::with(sub, Normalization::One, t)
                .eval(c)
                .unwrap()
                .value;
            let rewritten = Evaluator::with(here, Normalization::One, t)
                .eval(&tau2(c))
                .unwrap()
                .value;
            assert!(
                (direct - rewritten).abs() < 1e-8 * direct.abs().max(1.0),
                "τ₂ covariance failed for {c:?}: {direct} vs {rewritten}"
            );
        }
        // τ₁ substitutes y → 1/y on one-variable expressions.
        let one_var = [h(&[2, 1], HArg::Z1), h(&[1, 3], HArg::Z1)];
        for c in &one_var {
            let direct = Evaluator::with(
                EvalPoint::single(1.0 / 0.4, 4).unwrap(),
                Normalization::One,
                t,
            )
            .eval(c)
            .unwrap()
            .value;
            let rewritten = Evaluator::with(
                EvalPoint::single(0.4, 4).unwrap(),
                Normalization::One,
                t,
            )
            .eval(&tau1(c).unwrap())
            .unwrap()
            .value;
            assert!(
                (direct - rewritten).abs() < 1e-8 * direct.abs().max(1.0),
                "τ₁ covariance failed for {c:?}"
            );
        }
    }

    #[test]
    fn transforms_have_the_stated_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = tol();
        for case in 0..100 {
            let m = *[2u32, 3, 4].get(case % 3).unwrap();
            if case % 2 == 0 {
                // Order two of the reflection on one-variable atoms.
                let a = rng.random_range(1..=3u32);
                let b = rng.random_range(1..=3u32);
                let y = rng.random_range(0.3..3.0);
                let e = h(&[a, b], HArg::Z1);
                let twice = tau1(&tau1(&e).unwrap()).unwrap();
                let p = EvalPoint::single(y, m).unwrap();
                let ctx = Evaluator::with(p, Normalization::One, t);
                let v0 = ctx.eval(&e).unwrap().value;
                let v2 = ctx.eval(&twice).unwrap().value;
                assert!(
                    (v0 - v2).abs() < 1e-10 * v0.abs().max(1.0),
                    "τ₁² ≠ id at case {case}"
                );
            } else {
                // Order three of the rotation on mixed expressions.
                let a = rng.random_range(1..=2u32);
                let b = rng.random_range(1..=2u32);
                let c = rng.random_range(1..=2u32);
                let y1 = rng.random_range(0.3..3.0);
                let y2 = rng.random_range(0.3..3.0);
                let e = h(&[a, b, c], HArg::Z12)
                    + ym(YMono::y2()) * h(&[a, b], HArg::Z2)
                    + SpectralExpr::GPow1(YMono::y1()) * ym(YMono::half_powers(1, 0));
                let thrice = tau2(&tau2(&tau2(&e)));
                let p = EvalPoint::new(y1, y2, m).unwrap();
                let ctx = Evaluator::with(p, Normalization::One, t);
                let v0 = ctx.eval(&e).unwrap().value;
                let v3 = ctx.eval(&thrice).unwrap().value;
                assert!(
                    (v0 - v3).abs() < 1e-10 * v0.abs().max(1.0),
                    "τ₂³ ≠ id at case {case}: {v0} vs {v3}"
                );
            }
        }
    }

    #[test]
    fn recurrence_suite_holds_on_sample_points() {
        let t = tol();
        let points = [
            EvalPoint::new(2.0, 3.0, 2).unwrap(),
            EvalPoint::new(0.5, 2.5, 3).unwrap(),
            EvalPoint::new(1.7, 0.4, 4).unwrap(),
        ];
        for rule in recurrences() {
            for &p in &points {
                let row = rule
                    .residual_robust(p, Normalization::One, t)
                    .unwrap_or_else(|e| panic!("{}: {e}", rule.name));
                assert!(
                    row.residual < 1e-8,
                    "{} at ({}, {}, {}): residual {:.3e}",
                    rule.name,
                    p.y1,
                    p.y2,
                    p.m,
                    row.residual
                );
            }
        }
    }

    #[test]
    fn combined_elimination_weight_sits_in_second_position() {
        // The twin reading with the weight-three entry in third position
        // fails by a wide margin; the elimination is stated for H_{1,3,1}.
        let p = EvalPoint::new(2.0, 3.0, 2).unwrap();
        let t = tol();
        let ctx = Evaluator::with(p, Normalization::One, t);
        let rhs = ctx.eval(&combined_elimination_rhs()).unwrap().value;
        let eta2 = 3.0 / 2.0;
        let h122 = ctx.eval(&h(&[1, 2, 2], HArg::Z12)).unwrap().value;
        let h131 = ctx.eval(&h(&[1, 3, 1], HArg::Z12)).unwrap().value;
        let h113 = ctx.eval(&h(&[1, 1, 3], HArg::Z12)).unwrap().value;
        let good = (h131 + eta2 * h122 - rhs).abs() / rhs.abs().max(1.0);
        let bad = (h113 + eta2 * h122 - rhs).abs() / rhs.abs().max(1.0);
        assert!(good < 1e-8, "second-position reading residual {good:.3e}");
        assert!(bad > 1e-3, "third-position reading unexpectedly close: {bad:.3e}");
    }

    #[test]
    fn singular_denominators_fall_back_to_shifted_evaluation() {
        // y₁ = 1 degenerates every (1 − y₁) denominator.
        let p = EvalPoint::new(1.0, 2.0, 2).unwrap();
        let rule = &recurrences()[0];
        assert!(matches!(
            rule.residual(p, Normalization::One, tol()),
            Err(ConformalError::NearSingular(_))
        ));
        let row = rule.residual_robust(p, Normalization::One, tol()).unwrap();
        assert!(row.residual < 1e-6, "extrapolated residual {:.3e}", row.residual);
    }

    #[test]
    fn relation_i_holds_on_the_default_grid() {
        let (ys, ms) = default_relation_i_grid();
        let rows = verify_relation_i(&ys, &ms, Normalization::GaussTwoPi, tol()).unwrap();
        assert_eq!(rows.len(), 16);
        for r in &rows {
            assert!(
                r.residual < 1e-8,
                "relation I at (y = {}, m = {}): residual {:.3e}",
                r.y1,
                r.m,
                r.residual
            );
        }
        // At y = 1 both sides vanish.
        let row = relation_i_residual(1.0, 3, Normalization::GaussTwoPi, tol()).unwrap();
        assert!(row.lhs.abs() < 1e-10 && row.rhs.abs() < 1e-10);
        // Two quadrature tolerances agree on the left side.
        let coarse = relation_i_residual(0.5, 3, Normalization::GaussTwoPi, Tol::new(1e-9, 1e-9))
            .unwrap();
        let fine = relation_i_residual(0.5, 3, Normalization::GaussTwoPi, tol()).unwrap();
        assert!((coarse.lhs - fine.lhs).abs() < 1e-9);
        // The symmetric operator's coefficient is y^{1/2} times the
        // one-sided one, which restates the relation additively.
        let p = EvalPoint::single(0.5, 3).unwrap();
        let ctx = Evaluator::with(p, Normalization::GaussTwoPi, tol());
        let phi = ctx.eval(&g_i_expr(ConformalOp::DeltaPhi)).unwrap().value;
        let k = ctx.eval(&g_i_expr(ConformalOp::DeltaK)).unwrap().value;
        assert!((phi - 0.5f64.sqrt() * k).abs() < 1e-8 * k.abs().max(1.0));
    }

    #[test]
    fn relation_ii_holds_on_the_default_grid() {
        let (ys, ms) = default_relation_ii_grid();
        let rows = verify_relation_ii(&ys, &ms, Normalization::GaussTwoPi, tol()).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert!(
                r.residual < 1e-6,
                "relation II at ({}, {}, m = {}): residual {:.3e}",
                r.y1,
                r.y2,
                r.m,
                r.residual
            );
        }
        // Confluent corner: both sides vanish at y₁ = y₂ = 1.
        let row = relation_ii_residual(1.0, 1.0, 2, Normalization::GaussTwoPi, tol()).unwrap();
        assert!(row.lhs.abs() < 1e-10 && row.rhs.abs() < 1e-10);
    }

    #[test]
    fn coefficient_route_settles_relation_ii_without_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..300 {
            let y1: f64 = rng.random_range(0.2..4.0);
            let y2: f64 = rng.random_range(0.2..4.0);
            let m = *[2u32, 3, 5].get(rng.random_range(0..3)).unwrap();
            let p = EvalPoint::new(y1, y2, m).unwrap();
            let a = transformed_difference_coeffs(p);
            let b = transformed_product_coeffs(p);
            let c = transformed_product_coeffs_closed(p);
            for (l, r, tag) in [
                (a.c121, b.c121, "121 dd"),
                (a.c112, b.c112, "112 dd"),
                (a.c111, b.c111, "111 dd"),
                (a.c121, c.c121, "121 closed"),
                (a.c112, c.c112, "112 closed"),
                (a.c111, c.c111, "111 closed"),
            ] {
                assert!(
                    (l - r).abs() < 1e-10 * l.abs().max(1.0),
                    "coefficient {tag} at ({y1}, {y2}, {m}): {l} vs {r}"
                );
            }
        }
    }

    #[test]
    fn transformed_relation_matches_its_basis_coefficients() {
        let t = tol();
        for &(y1, y2, m) in &[(0.6, 1.8, 3u32), (2.0, 0.7, 2)] {
            let p = EvalPoint::new(y1, y2, m).unwrap();
            let (diff, prod) = transformed_relation_residuals(p, t).unwrap();
            assert!(diff < 1e-8, "difference side at ({y1}, {y2}, {m}): {diff:.3e}");
            assert!(prod < 1e-8, "product side at ({y1}, {y2}, {m}): {prod:.3e}");
        }
    }

    #[test]
    fn weighted_forms_differ_from_gauss_forms_by_half_gamma() {
        // With the constant stripped, each Γ-weighted form is
        // Γ(m/2 + 1)/2 times its Gauss-normalized counterpart.
        let p = EvalPoint::new(0.8, 1.6, 3).unwrap();
        let ctx = Evaluator::with(p, Normalization::One, tol());
        let c = gamma_half(p.m + 2) / 2.0;

        let wj = ctx.eval(&weighted_j_ii()).unwrap().value;
        let jm = ctx.eval(&j_mixed_expr()).unwrap().value;
        assert!((wj - c * jm).abs() < 1e-9 * wj.abs().max(1.0));

        let wi = ctx.eval(&weighted_j_i()).unwrap().value;
        let j11 = ctx.eval(&j11_expr()).unwrap().value;
        assert!((wi - c * j11).abs() < 1e-9 * wi.abs().max(1.0));

        let wg = ctx.eval(&weighted_g_ii()).unwrap().value;
        let prefactor = (p.y1 * p.y2).sqrt() - 1.0;
        let gii = ctx.eval(&g_ii_expr(ConformalOp::DeltaK)).unwrap().value;
        assert!((wg - c * prefactor * gii).abs() < 1e-9 * wg.abs().max(1.0));
    }

    #[test]
    fn reflected_combination_vanishes_and_matches_the_transform() {
        let t = tol();
        for m in [2u32, 3, 4] {
            for &z in &[-3.0, -1.5, -0.25, 0.3, 0.6, 0.9] {
                let y = 1.0 - z;
                let p = EvalPoint::single(y, m).unwrap();
                let ctx = Evaluator::with(p, Normalization::One, t);
                let v = ctx.eval(&v_i_reflected_expr()).unwrap();
                assert!(
                    v.value.abs() < 1e-8,
                    "reflected combination at (z = {z}, m = {m}): {:.3e}",
                    v.value
                );
                let direct = ctx.eval(&v_i_expr()).unwrap();
                assert!(
                    direct.value.abs() < 1e-8,
                    "direct combination at (z = {z}, m = {m}): {:.3e}",
                    direct.value
                );
            }
        }
        // The reflected fixture is (1−z)^{-m/2} τ₁ of the direct one.
        let p = EvalPoint::single(0.45, 3).unwrap();
        let ctx = Evaluator::with(p, Normalization::One, t);
        let pulled = ym(YMono {
            e1: HalfPow { p: 0, q: -1 },
            e2: HalfPow::ZERO,
        }) * tau1(&v_i_expr()).unwrap();
        let a = ctx.eval(&pulled).unwrap().value;
        let b = ctx.eval(&v_i_reflected_expr()).unwrap().value;
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn inner_coefficient_of_the_one_variable_combination_is_four_over_m() {
        // Halving the standalone middle-atom coefficient breaks the
        // vanishing by an amount of order H_{2,1} itself.
        let p = EvalPoint::single(0.5, 2).unwrap();
        let ctx = Evaluator::with(p, Normalization::One, tol());
        let halved = -(z1()
            * (q(4, 1) * m_recip() * h(&[3, 1], HArg::Z1) - h(&[2, 1], HArg::Z1)))
            + q(2, 1) * m_recip() * h(&[2, 1], HArg::Z1)
            - h(&[1, 1], HArg::Z1);
        let v = ctx.eval(&halved).unwrap().value;
        assert!(v.abs() > 1e-2, "halved variant unexpectedly small: {v:.3e}");
    }

    #[test]
    fn relation_residuals_do_not_depend_on_the_normalization() {
        // Both sides are homogeneous in the overall constant, so the
        // scale-free residual |lhs − rhs|/|lhs| is invariant under the
        // choice of c(m) and the pass verdict cannot depend on it.
        //
        // The ratio comparison needs a point where the sides are O(1):
        // in dimension four the one-variable combination vanishes
        // identically, so (y, m) = (0.25, 4) only checks the verdict.
        let t = tol();
        for (y, m) in [(0.25, 4), (4.0, 3)] {
            let mut rel = Vec::new();
            for norm in [
                Normalization::GaussPi,
                Normalization::GaussTwoPi,
                Normalization::One,
            ] {
                let row = relation_i_residual(y, m, norm, t).unwrap();
                assert!(row.residual < 1e-8);
                rel.push((row.lhs - row.rhs).abs() / row.lhs.abs());
            }
            if m != 4 {
                assert!((rel[0] - rel[1]).abs() < 1e-9);
                assert!((rel[1] - rel[2]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dimension_four_annihilates_the_one_variable_combination() {
        // At m = 4 the table reads 3(1-u)^2 w^{-4} - 2(1-u) w^{-3} in raw
        // integrand units (w = 1 - zu).  That is d/du[(1-u)^2 w^{-3}] plus
        // 3(1-z)(1-u)^2 w^{-4}, and the remaining integral is 1/(3(1-z))
        // exactly, cancelling the boundary term -1 for every z.
        let t = tol();
        for z in [-2.0, -0.5, 0.3, 0.75, 0.9] {
            let ctx = Evaluator::with(
                EvalPoint::single(1.0 - z, 4).unwrap(),
                Normalization::One,
                t,
            );
            let g = g_i_expr(ConformalOp::DeltaK);
            let sides = ctx.eval(&g).unwrap();
            assert!(
                sides.value.abs() < 1e-10,
                "z = {z}: expected identical vanishing, got {:.3e}",
                sides.value
            );
        }
    }

    #[test]
    fn csv_export_has_the_documented_columns() {
        let rows = vec![ResidualRow {
            y1: 0.5,
            y2: 2.0,
            m: 3,
            lhs: 1.25,
            rhs: 1.25,
            residual: 0.0,
            quad_error: 1e-12,
        }];
        let mut buf = Vec::new();
        write_residual_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("y1,y2,m,lhs,rhs,residual,quadrature_error")
        );
        let data = lines.next().unwrap();
        assert_eq!(data.split(',').count(), 7);
        assert!(data.starts_with("0.5,2,3,"));
    }

    #[test]
    fn constructors_reject_malformed_input() {
        assert!(EvalPoint::new(0.0, 1.0, 2).is_err());
        assert!(EvalPoint::new(1.0, -1.0, 2).is_err());
        assert!(EvalPoint::new(1.0, 1.0, 1).is_err());
        assert!(SpectralExpr::h(&[1, 0], HArg::Z1).is_err());
        assert!(SpectralExpr::h(&[1, 1], HArg::Z12).is_err());
        assert!(SpectralExpr::h(&[1, 1, 1], HArg::Z2).is_err());
        // τ₁ refuses genuinely two-variable input.
        assert!(tau1(&h(&[1, 1, 1], HArg::Z12)).is_err());
    }

    #[test]
    fn table_expansion_matches_the_additive_fixture() {
        let p = EvalPoint::new(0.7, 1.4, 4).unwrap();
        let ctx = Evaluator::with(p, Normalization::GaussTwoPi, tol());
        let a = ctx.eval(&g_ii_table().to_expr()).unwrap().value;
        let b = ctx.eval(&g_ii_expr(ConformalOp::DeltaK)).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }
}
