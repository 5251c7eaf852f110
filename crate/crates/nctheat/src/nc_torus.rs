//! Fourier-truncated model of the smooth noncommutative m-torus.
//!
//! Elements are finitely supported Fourier sums f = Σ f_l̄ U^l̄ over the
//! integer lattice, where the monomials U^l̄ = U₁^{l₁}···U_m^{l_m} are taken
//! in the fixed generator order and the generators obey
//! U_s U_l = e^{2πi θ_{ls}} U_l U_s.  Reordering a product of two monomials
//! into that normal form costs the bilinear phase stored in [`Theta`], so
//! every algebra operation here reduces to lattice arithmetic plus unit
//! phases.  The vacuum state reads off the constant coefficient and the
//! monomials form an orthonormal basis of its GNS space, hence coefficient
//! vectors literally are GNS coordinates.
//!
//! On top of the algebra the module builds the two spectral routes that the
//! second heat coefficient can take:
//!
//! * the lattice route: compress k^{1/2} Δ k^{1/2} to a truncated GNS block,
//!   diagonalize it through the real doubling of a Hermitian matrix, and fit
//!   t·Tr e^{−tP} by a polynomial in t ([`heat_trace_fit`]);
//! * the closed-form route: decompose the inputs over the eigenbasis of the
//!   compressed conjugation a ↦ k⁻¹ a k ([`ModularCalculus`]), weight the
//!   pieces by the one- and two-variable spectral coefficient functions, and
//!   contract with the vacuum state ([`v2_formula_eval`]).
//!
//! [`heat_cross_check`] runs both routes side by side.
//!
//! Truncation is never silent: products that clip a tail report the dropped
//! norm, modular arguments must already fit inside the chosen block, and the
//! fit carries its residual and condition number instead of swallowing them.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::conformal::{self, ConformalError, ConformalOp, EvalPoint};
use crate::rearrange::{Normalization, Tol};

/// Errors from the torus model: malformed inputs, numerical breakdowns in
/// the spectral layer, and heat fits whose diagnostics exceed their bounds.
#[derive(Debug, Error)]
pub enum TorusError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unstable heat-trace fit: {0}")]
    FitInstability(String),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

type Result<T> = std::result::Result<T, TorusError>;

// ---------------------------------------------------------------------------
// Deformation matrix and reordering phases.

/// Skew-symmetric deformation matrix θ.  Entry (l, s) is the phase exponent
/// picked up when U_s moves left past U_l.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta {
    m: usize,
    entries: Vec<f64>,
}

impl Theta {
    /// The commutative torus.
    pub fn zero(m: usize) -> Self {
        Theta {
            m,
            entries: vec![0.0; m * m],
        }
    }

    /// Validates skew-symmetry and a zero diagonal to 1e-12.
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != m * m {
            return Err(TorusError::InvalidInput(format!(
                "deformation matrix for m = {m} needs {} entries, got {}",
                m * m,
                entries.len()
            )));
        }
        for i in 0..m {
            for j in 0..m {
                let sum = entries[i * m + j] + entries[j * m + i];
                if sum.abs() > 1e-12 {
                    return Err(TorusError::InvalidInput(format!(
                        "deformation matrix is not skew-symmetric at ({i}, {j}): θ_ij + θ_ji = {sum:e}"
                    )));
                }
            }
        }
        Ok(Theta { m, entries })
    }

    /// Two-dimensional torus with the single parameter θ₁₂ = t.
    pub fn two_d(t: f64) -> Self {
        Theta {
            m: 2,
            entries: vec![0.0, t, -t, 0.0],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, l: usize, s: usize) -> f64 {
        self.entries[l * self.m + s]
    }
}

/// e^{2πi q} with the integer part of q removed first; keeps the argument
/// of the trig kernel small even when lattice points are large.
fn unit_phase(q: f64) -> Complex64 {
    let r = q - q.round();
    Complex64::from_polar(1.0, TAU * r)
}

/// Exponent of the reordering phase χ(ā, b̄) in U^ā U^b̄ = χ U^{ā+b̄}:
/// Σ_{l<s} θ_{ls} ā_s b̄_l.
fn reorder_exponent(theta: &Theta, a: &[i64], b: &[i64]) -> f64 {
    let mut q = 0.0;
    for s in 1..theta.m {
        let az = a[s];
        if az == 0 {
            continue;
        }
        for l in 0..s {
            if b[l] != 0 {
                q += theta.get(l, s) * (az as f64) * (b[l] as f64);
            }
        }
    }
    q
}

/// Exponent of the adjoint phase in (U^l̄)* = e^{2πi ψ(l̄)} U^{−l̄}:
/// ψ(l̄) = Σ_{l<s} θ_{ls} l̄_l l̄_s.  Even in l̄.
fn adjoint_exponent(theta: &Theta, l: &[i64]) -> f64 {
    let mut q = 0.0;
    for s in 1..theta.m {
        if l[s] == 0 {
            continue;
        }
        for r in 0..s {
            if l[r] != 0 {
                q += theta.get(r, s) * (l[r] as f64) * (l[s] as f64);
            }
        }
    }
    q
}

// ---------------------------------------------------------------------------
// Finitely supported Fourier elements.

/// Finitely supported element Σ f_l̄ U^l̄ of the deformed torus algebra.
///
/// The stored radius is the exact sup-norm bound of the support, so the
/// invariant `support ⊆ [−radius, radius]^m` always holds; constructors
/// recompute it rather than trusting callers.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierElement {
    m: usize,
    radius: i64,
    coeffs: BTreeMap<Vec<i64>, Complex64>,
}

impl FourierElement {
    fn from_map(m: usize, mut coeffs: BTreeMap<Vec<i64>, Complex64>) -> Self {
        coeffs.retain(|_, c| c.re != 0.0 || c.im != 0.0);
        let radius = coeffs
            .keys()
            .map(|l| l.iter().map(|x| x.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        FourierElement { m, radius, coeffs }
    }

    pub fn zero(m: usize) -> Self {
        FourierElement {
            m,
            radius: 0,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn one(m: usize) -> Self {
        Self::monomial(m, &vec![0; m], Complex64::from(1.0)).expect("zero index is valid")
    }

    /// c·U^l̄.
    pub fn monomial(m: usize, index: &[i64], c: Complex64) -> Result<Self> {
        if index.len() != m {
            return Err(TorusError::InvalidInput(format!(
                "lattice index of length {} in dimension {m}",
                index.len()
            )));
        }
        let mut coeffs = BTreeMap::new();
        coeffs.insert(index.to_vec(), c);
        Ok(Self::from_map(m, coeffs))
    }

    /// The generator U_axis (axes are 0-based).
    pub fn generator(m: usize, axis: usize) -> Result<Self> {
        if axis >= m {
            return Err(TorusError::InvalidInput(format!(
                "axis {axis} out of range for dimension {m}"
            )));
        }
        let mut index = vec![0i64; m];
        index[axis] = 1;
        Self::monomial(m, &index, Complex64::from(1.0))
    }

    pub fn from_terms(m: usize, terms: &[(Vec<i64>, Complex64)]) -> Result<Self> {
        let mut coeffs: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (l, c) in terms {
            if l.len() != m {
                return Err(TorusError::InvalidInput(format!(
                    "lattice index of length {} in dimension {m}",
                    l.len()
                )));
            }
            *coeffs.entry(l.clone()).or_insert(Complex64::ZERO) += c;
        }
        Ok(Self::from_map(m, coeffs))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Sup-norm radius of the support.
    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff(&self, index: &[i64]) -> Complex64 {
        self.coeffs.get(index).copied().unwrap_or(Complex64::ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.coeffs.iter()
    }

    /// Vacuum expectation φ₀: the coefficient of U^0.
    pub fn trace0(&self) -> Complex64 {
        self.coeff(&vec![0; self.m])
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(l, v)| (l.clone(), v * c))
            .collect();
        Self::from_map(self.m, coeffs)
    }

    /// GNS norm: the ℓ² norm of the coefficients.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs
            .values()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// ℓ¹ norm of the coefficients; submultiplicative under the twisted
    /// product, so it controls power-series remainders.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Clip the support to the given radius; returns the clipped element and
    /// the ℓ² norm of what was dropped.
    pub fn truncated(&self, radius: i64) -> (Self, f64) {
        let mut kept = BTreeMap::new();
        let mut spill = 0.0;
        for (l, c) in &self.coeffs {
            if l.iter().all(|x| x.abs() <= radius) {
                kept.insert(l.clone(), *c);
            } else {
                spill += c.norm_sqr();
            }
        }
        (Self::from_map(self.m, kept), spill.sqrt())
    }

    /// Drop coefficients at or below the absolute floor.
    pub fn pruned(&self, floor: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(_, c)| c.norm() > floor)
            .map(|(l, c)| (l.clone(), *c))
            .collect();
        Self::from_map(self.m, coeffs)
    }

    /// The derivation δ_axis, acting as f_l̄ ↦ l̄_axis f_l̄.
    pub fn delta(&self, axis: usize) -> Result<Self> {
        if axis >= self.m {
            return Err(TorusError::InvalidInput(format!(
                "axis {axis} out of range for dimension {}",
                self.m
            )));
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|(l, c)| (l.clone(), c.scale(l[axis] as f64)))
            .collect();
        Ok(Self::from_map(self.m, coeffs))
    }

    /// Σ_s δ_s², the flat Laplacian with eigenvalue |l̄|² on U^l̄.
    pub fn laplacian(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(l, c)| {
                let w: i64 = l.iter().map(|x| x * x).sum();
                (l.clone(), c.scale(w as f64))
            })
            .collect();
        Self::from_map(self.m, coeffs)
    }

    /// The *-involution; needs θ for the monomial reordering phase.
    pub fn adjoint(&self, theta: &Theta) -> Result<Self> {
        self.check_theta(theta)?;
        let mut coeffs = BTreeMap::new();
        for (l, c) in &self.coeffs {
            let neg: Vec<i64> = l.iter().map(|x| -x).collect();
            let phase = unit_phase(adjoint_exponent(theta, l));
            coeffs.insert(neg, c.conj() * phase);
        }
        Ok(Self::from_map(self.m, coeffs))
    }

    pub fn is_self_adjoint(&self, theta: &Theta, tol: f64) -> Result<bool> {
        let diff = self - &self.adjoint(theta)?;
        Ok(diff.l2_norm() <= tol * (1.0 + self.l2_norm()))
    }

    fn check_theta(&self, theta: &Theta) -> Result<()> {
        if theta.m != self.m {
            return Err(TorusError::InvalidInput(format!(
                "deformation matrix is {}-dimensional, element is {}-dimensional",
                theta.m, self.m
            )));
        }
        Ok(())
    }
}

impl Add for &FourierElement {
    type Output = FourierElement;

    fn add(self, rhs: &FourierElement) -> FourierElement {
        assert_eq!(self.m, rhs.m, "dimension mismatch in element sum");
        let mut coeffs = self.coeffs.clone();
        for (l, c) in &rhs.coeffs {
            *coeffs.entry(l.clone()).or_insert(Complex64::ZERO) += c;
        }
        FourierElement::from_map(self.m, coeffs)
    }
}

impl Sub for &FourierElement {
    type Output = FourierElement;

    fn sub(self, rhs: &FourierElement) -> FourierElement {
        assert_eq!(self.m, rhs.m, "dimension mismatch in element difference");
        let mut coeffs = self.coeffs.clone();
        for (l, c) in &rhs.coeffs {
            *coeffs.entry(l.clone()).or_insert(Complex64::ZERO) -= c;
        }
        FourierElement::from_map(self.m, coeffs)
    }
}

/// Exact twisted product; the support radius can grow to the sum of the
/// operand radii.
pub fn twisted_mul_exact(
    f: &FourierElement,
    g: &FourierElement,
    theta: &Theta,
) -> Result<FourierElement> {
    f.check_theta(theta)?;
    g.check_theta(theta)?;
    if f.m != g.m {
        return Err(TorusError::InvalidInput(format!(
            "product of elements in dimensions {} and {}",
            f.m, g.m
        )));
    }
    let mut coeffs: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
    for (a, ca) in &f.coeffs {
        for (b, cb) in &g.coeffs {
            let phase = unit_phase(reorder_exponent(theta, a, b));
            let sum: Vec<i64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            *coeffs.entry(sum).or_insert(Complex64::ZERO) += ca * cb * phase;
        }
    }
    Ok(FourierElement::from_map(f.m, coeffs))
}

/// Twisted product clipped back to the larger operand radius; the second
/// component is the ℓ² norm of the dropped tail.
pub fn twisted_mul(
    f: &FourierElement,
    g: &FourierElement,
    theta: &Theta,
) -> Result<(FourierElement, f64)> {
    let exact = twisted_mul_exact(f, g, theta)?;
    Ok(exact.truncated(f.radius.max(g.radius)))
}

/// exp(f) by the power series with exact products.  Terms are accumulated
/// until the geometric remainder bound in the ℓ¹ norm drops below `tol`;
/// coefficients far below the working precision of the result are pruned.
pub fn exp_element(f: &FourierElement, theta: &Theta, tol: f64) -> Result<FourierElement> {
    f.check_theta(theta)?;
    let budget = f.l1_norm();
    let mut term = FourierElement::one(f.m);
    let mut sum = term.clone();
    let mut n = 0u32;
    loop {
        n += 1;
        if n > 400 {
            return Err(TorusError::Numerical(format!(
                "exponential series did not converge in 400 terms (ℓ¹ norm {budget:.3e})"
            )));
        }
        term = twisted_mul_exact(&term, f, theta)?.scale(Complex64::from(1.0 / f64::from(n)));
        sum = &sum + &term;
        let ratio = budget / (f64::from(n) + 1.0);
        if ratio < 0.5 && term.l1_norm() * ratio / (1.0 - ratio) < tol {
            break;
        }
    }
    Ok(sum.pruned(1e-18 * sum.l2_norm().max(1.0)))
}

// ---------------------------------------------------------------------------
// Weyl factor.

const SERIES_TOL: f64 = 1e-14;

/// Positive invertible conformal factor k = exp(h) given through its
/// self-adjoint logarithm; real powers come from the exponential series, so
/// k^a k^b = k^{a+b} holds to working precision by construction.
#[derive(Clone, Debug)]
pub struct WeylFactor {
    h: FourierElement,
    theta: Theta,
}

impl WeylFactor {
    pub fn new(h: FourierElement, theta: Theta) -> Result<Self> {
        h.check_theta(&theta)?;
        if !h.is_self_adjoint(&theta, 1e-12)? {
            return Err(TorusError::InvalidInput(
                "Weyl factor logarithm must be self-adjoint".into(),
            ));
        }
        Ok(WeylFactor { h, theta })
    }

    /// k = 1: the flat torus.
    pub fn flat(theta: Theta) -> Self {
        let h = FourierElement::zero(theta.m);
        WeylFactor { h, theta }
    }

    /// h = ε(U_axis + U_axis*)/2, the standard one-mode test factor.
    pub fn from_cosine(theta: Theta, axis: usize, eps: f64) -> Result<Self> {
        let m = theta.m;
        let mut plus = vec![0i64; m];
        plus[axis] = 1;
        let minus: Vec<i64> = plus.iter().map(|x| -x).collect();
        let h = FourierElement::from_terms(
            m,
            &[
                (plus, Complex64::from(eps / 2.0)),
                (minus, Complex64::from(eps / 2.0)),
            ],
        )?;
        WeylFactor::new(h, theta)
    }

    pub fn h(&self) -> &FourierElement {
        &self.h
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    /// k^s = exp(s·h).
    pub fn power(&self, s: f64) -> Result<FourierElement> {
        exp_element(&self.h.scale(Complex64::from(s)), &self.theta, SERIES_TOL)
    }
}

// ---------------------------------------------------------------------------
// Truncated GNS basis and compressions.

/// Capping the block dimension keeps dense eigensolves tractable.
const MAX_GNS_DIM: u128 = 20_000;

/// Orthonormal monomial basis {U^l̄ : |l̄|_∞ ≤ radius} of a truncated GNS
/// block, ordered lexicographically.
#[derive(Clone, Debug)]
pub struct GnsBasis {
    m: usize,
    radius: i64,
    side: i64,
    indices: Vec<Vec<i64>>,
}

impl GnsBasis {
    pub fn new(m: usize, radius: i64) -> Result<Self> {
        if m == 0 || radius < 0 {
            return Err(TorusError::InvalidInput(format!(
                "GNS block needs m ≥ 1 and radius ≥ 0, got m = {m}, radius = {radius}"
            )));
        }
        let side = 2 * radius + 1;
        let dim = (side as u128).pow(m as u32);
        if dim > MAX_GNS_DIM {
            return Err(TorusError::InvalidInput(format!(
                "GNS block dimension {dim} exceeds the cap {MAX_GNS_DIM}; lower the radius"
            )));
        }
        // Radix decoding of the flat position keeps the order in lockstep
        // with `position`.
        let mut indices = Vec::with_capacity(dim as usize);
        for p in 0..dim as usize {
            let mut rem = p;
            let mut l = vec![0i64; m];
            for axis in (0..m).rev() {
                l[axis] = (rem % side as usize) as i64 - radius;
                rem /= side as usize;
            }
            indices.push(l);
        }
        Ok(GnsBasis {
            m,
            radius,
            side,
            indices,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[Vec<i64>] {
        &self.indices
    }

    /// Position of a lattice point in the basis order, if inside the block.
    pub fn position(&self, l: &[i64]) -> Option<usize> {
        if l.len() != self.m {
            return None;
        }
        let mut pos = 0usize;
        for &x in l {
            if x.abs() > self.radius {
                return None;
            }
            pos = pos * self.side as usize + (x + self.radius) as usize;
        }
        Some(pos)
    }

    /// Coefficient vector of an element whose support fits in the block.
    pub fn element_to_vec(&self, f: &FourierElement) -> Result<DVector<Complex64>> {
        if f.m != self.m {
            return Err(TorusError::InvalidInput(format!(
                "element dimension {} does not match block dimension {}",
                f.m, self.m
            )));
        }
        let mut v = DVector::from_element(self.dim(), Complex64::ZERO);
        for (l, c) in f.iter() {
            match self.position(l) {
                Some(p) => v[p] = *c,
                None => {
                    return Err(TorusError::InvalidInput(format!(
                        "support radius {} exceeds the block radius {}; truncate explicitly first",
                        f.radius, self.radius
                    )));
                }
            }
        }
        Ok(v)
    }

    pub fn vec_to_element(&self, v: &DVector<Complex64>) -> FourierElement {
        let mut coeffs = BTreeMap::new();
        for (p, c) in v.iter().enumerate() {
            if c.re != 0.0 || c.im != 0.0 {
                coeffs.insert(self.indices[p].clone(), *c);
            }
        }
        FourierElement::from_map(self.m, coeffs)
    }

    /// Matrix of left multiplication by f, compressed to the block.
    pub fn left_mul_matrix(&self, f: &FourierElement, theta: &Theta) -> Result<DMatrix<Complex64>> {
        f.check_theta(theta)?;
        if f.m != self.m {
            return Err(TorusError::InvalidInput(
                "element dimension does not match the block".into(),
            ));
        }
        let n = self.dim();
        let mut mat = DMatrix::from_element(n, n, Complex64::ZERO);
        for (bpos, b) in self.indices.iter().enumerate() {
            for (a, ca) in f.iter() {
                let target: Vec<i64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if let Some(row) = self.position(&target) {
                    let phase = unit_phase(reorder_exponent(theta, a, b));
                    mat[(row, bpos)] += ca * phase;
                }
            }
        }
        Ok(mat)
    }

    /// Matrix of the compressed conjugation a ↦ k⁻¹ a k.
    pub fn conjugation_matrix(&self, weyl: &WeylFactor) -> Result<DMatrix<Complex64>> {
        if weyl.theta.m != self.m {
            return Err(TorusError::InvalidInput(
                "Weyl factor dimension does not match the block".into(),
            ));
        }
        let k = weyl.power(1.0)?;
        let kinv = weyl.power(-1.0)?;
        let n = self.dim();
        let mut mat = DMatrix::from_element(n, n, Complex64::ZERO);
        for (bpos, b) in self.indices.iter().enumerate() {
            let ub = FourierElement::monomial(self.m, b, Complex64::from(1.0))?;
            let col = twisted_mul_exact(&twisted_mul_exact(&kinv, &ub, &weyl.theta)?, &k, &weyl.theta)?;
            for (l, c) in col.iter() {
                if let Some(row) = self.position(l) {
                    mat[(row, bpos)] += c;
                }
            }
        }
        Ok(mat)
    }

    /// Diagonal of the flat Laplacian on the block.
    pub fn laplacian_diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.indices
                .iter()
                .map(|l| l.iter().map(|&x| (x * x) as f64).sum()),
        )
    }
}

// ---------------------------------------------------------------------------
// Hermitian eigensolver through the real doubling.

/// Real doubling [[Re, −Im], [Im, Re]] of a complex matrix.  For Hermitian
/// input the doubling is symmetric, carries every eigenvalue twice, and the
/// complex eigenvector x + iy sits in the real pair (x, y).
fn doubled(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let e = h[(i % n, j % n)];
        match (i >= n, j >= n) {
            (false, false) | (true, true) => e.re,
            (false, true) => -e.im,
            (true, false) => e.im,
        }
    })
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and a
/// unitary matrix of eigenvectors in matching column order.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// Diagonalize a Hermitian matrix by the symmetric real doubling.
///
/// The doubled spectrum repeats each eigenvalue exactly twice, and every
/// real eigenvector pairs with its image under multiplication by i; the
/// complex basis is recovered per eigenvalue cluster by complex
/// Gram-Schmidt over the doubled candidates, which must keep exactly half
/// of them.  `tol` bounds the accepted relative deviation from hermiticity.
pub fn hermitian_eigen(h: &DMatrix<Complex64>, tol: f64) -> Result<HermitianEigen> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(TorusError::InvalidInput(
            "eigensolver needs a nonempty square matrix".into(),
        ));
    }
    let scale = h.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let defect = (h - h.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if defect > tol * (scale + 1e-300) {
        return Err(TorusError::Numerical(format!(
            "matrix is not Hermitian: defect {defect:.3e} against scale {scale:.3e}"
        )));
    }
    let hs = (h + h.adjoint()).scale(0.5);
    let se = nalgebra::linalg::SymmetricEigen::new(doubled(&hs));

    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());

    let vscale = se
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    // Pair-splitting noise is machine-level; clustering at 1e-9 of the scale
    // keeps doubled copies together without merging genuinely distinct
    // levels that matter at the working tolerances.
    let cluster_tol = 1e-9 * vscale;

    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::from_element(n, n, Complex64::ZERO);
    let mut filled = 0usize;
    let mut start = 0usize;
    while start < 2 * n {
        let mut end = start + 1;
        while end < 2 * n
            && se.eigenvalues[order[end]] - se.eigenvalues[order[end - 1]] <= cluster_tol
        {
            end += 1;
        }
        let size = end - start;
        if size % 2 != 0 {
            return Err(TorusError::Numerical(format!(
                "doubled spectrum produced an odd cluster of size {size} near {:.6e}",
                se.eigenvalues[order[start]]
            )));
        }
        let want = size / 2;
        let mut kept: Vec<DVector<Complex64>> = Vec::with_capacity(want);
        for &col in &order[start..end] {
            let r = se.eigenvectors.column(col);
            let mut v = DVector::from_fn(n, |i, _| Complex64::new(r[i], r[i + n]));
            for _ in 0..2 {
                for k in kept.iter() {
                    let p = k.dotc(&v);
                    v -= k * p;
                }
            }
            let nv = v.norm();
            if nv > 0.35 && kept.len() < want {
                kept.push(v.unscale(nv));
            }
        }
        if kept.len() != want {
            return Err(TorusError::Numerical(format!(
                "complex eigenvector extraction kept {} of {want} vectors in a cluster near {:.6e}",
                kept.len(),
                se.eigenvalues[order[start]]
            )));
        }
        let mean: f64 = order[start..end]
            .iter()
            .map(|&c| se.eigenvalues[c])
            .sum::<f64>()
            / size as f64;
        for v in kept {
            values.push(mean);
            vectors.set_column(filled, &v);
            filled += 1;
        }
        start = end;
    }
    Ok(HermitianEigen { values, vectors })
}

// ---------------------------------------------------------------------------
// Modular operator calculus on a truncated block.

/// Spectral calculus of the compressed conjugation 𝐲: a ↦ k⁻¹ a k.
///
/// The conjugation is positive for the GNS inner product, so it has an
/// orthonormal eigenbasis with positive eigenvalues; functions of one or two
/// modular variables act by weighting the eigenprojections.  Arguments must
/// already fit inside the block: the calculus refuses to truncate silently.
/// Powers of the compression agree with powers of the true conjugation until
/// the support of the argument reaches the block boundary, so padding the
/// radius beyond the argument support makes the compression error decay
/// factorially.
pub struct ModularCalculus {
    basis: GnsBasis,
    /// Distinct eigenvalue classes as (value, column range) over `vectors`.
    classes: Vec<(f64, std::ops::Range<usize>)>,
    vectors: DMatrix<Complex64>,
    vectors_h: DMatrix<Complex64>,
    /// Product tables of the block: position of ā + b̄ in the doubled block
    /// and the reordering phase χ(ā, b̄), flattened row-major.
    big: GnsBasis,
    pos2: Vec<u32>,
    phase2: Vec<Complex64>,
}

impl ModularCalculus {
    pub fn new(weyl: &WeylFactor, radius: i64, herm_tol: f64) -> Result<Self> {
        let m = weyl.theta.m;
        let basis = GnsBasis::new(m, radius)?;
        let y = basis.conjugation_matrix(weyl)?;
        let eig = hermitian_eigen(&y, herm_tol)?;
        let min = eig.values.first().copied().unwrap_or(0.0);
        let max = eig.values.last().copied().unwrap_or(0.0);
        if min <= 0.0 {
            return Err(TorusError::Numerical(format!(
                "compressed conjugation is not positive: spectrum [{min:.3e}, {max:.3e}], condition {:.3e}",
                max / min.abs().max(1e-300)
            )));
        }

        let n = basis.dim();
        let mut classes = Vec::new();
        let mut start = 0usize;
        while start < n {
            let mut end = start + 1;
            while end < n && eig.values[end] - eig.values[end - 1] <= 1e-10 * (1.0 + eig.values[end]) {
                end += 1;
            }
            let mean = eig.values[start..end].iter().sum::<f64>() / (end - start) as f64;
            classes.push((mean, start..end));
            start = end;
        }

        let big = GnsBasis::new(m, 2 * radius)?;
        let mut pos2 = Vec::with_capacity(n * n);
        let mut phase2 = Vec::with_capacity(n * n);
        for a in basis.indices() {
            for b in basis.indices() {
                let sum: Vec<i64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let p = big
                    .position(&sum)
                    .expect("sum of block points lies in the doubled block");
                pos2.push(p as u32);
                phase2.push(unit_phase(reorder_exponent(&weyl.theta, a, b)));
            }
        }

        let vectors_h = eig.vectors.adjoint();
        Ok(ModularCalculus {
            basis,
            classes,
            vectors: eig.vectors,
            vectors_h,
            big,
            pos2,
            phase2,
        })
    }

    pub fn basis(&self) -> &GnsBasis {
        &self.basis
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Smallest and largest eigenvalue of the compressed conjugation.
    pub fn value_range(&self) -> (f64, f64) {
        (
            self.classes.first().map(|c| c.0).unwrap_or(1.0),
            self.classes.last().map(|c| c.0).unwrap_or(1.0),
        )
    }

    fn coords(&self, a: &FourierElement) -> Result<DVector<Complex64>> {
        let v = self.basis.element_to_vec(a)?;
        Ok(&self.vectors_h * v)
    }

    /// Apply a function of one modular variable: F(𝐲)(a).
    pub fn apply1<F>(&self, mut f: F, a: &FourierElement) -> Result<FourierElement>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let c = self.coords(a)?;
        let n = self.basis.dim();
        let mut out = DVector::from_element(n, Complex64::ZERO);
        for (y, cols) in &self.classes {
            let w = f(*y)?;
            if w == 0.0 {
                continue;
            }
            for col in cols.clone() {
                let wc = c[col].scale(w);
                if wc.re == 0.0 && wc.im == 0.0 {
                    continue;
                }
                for i in 0..n {
                    out[i] += wc * self.vectors[(i, col)];
                }
            }
        }
        Ok(self.basis.vec_to_element(&out))
    }

    /// Apply a function of two modular variables to a two-leg argument and
    /// contract: Σ F(y, y') P_y(a)·P_{y'}(b).  The result lives in the
    /// doubled block.
    pub fn apply2<F>(&self, mut f: F, a: &FourierElement, b: &FourierElement) -> Result<FourierElement>
    where
        F: FnMut(f64, f64) -> Result<f64>,
    {
        let n = self.basis.dim();
        let pa = self.class_projections(a)?;
        let pb = self.class_projections(b)?;
        let mut acc = vec![Complex64::ZERO; self.big.dim()];
        for (ya, va) in &pa {
            for (yb, vb) in &pb {
                let w = f(*ya, *yb)?;
                if w == 0.0 {
                    continue;
                }
                for p in 0..n {
                    let wa = va[p].scale(w);
                    if wa.re == 0.0 && wa.im == 0.0 {
                        continue;
                    }
                    let row = p * n;
                    for q in 0..n {
                        let vbq = vb[q];
                        if vbq.re == 0.0 && vbq.im == 0.0 {
                            continue;
                        }
                        acc[self.pos2[row + q] as usize] += wa * vbq * self.phase2[row + q];
                    }
                }
            }
        }
        let dense = DVector::from_vec(acc);
        Ok(self.big.vec_to_element(&dense))
    }

    /// Eigenprojections of the argument, one dense block vector per class;
    /// classes carrying no mass are dropped.
    fn class_projections(&self, a: &FourierElement) -> Result<Vec<(f64, DVector<Complex64>)>> {
        let c = self.coords(a)?;
        let n = self.basis.dim();
        let floor = 1e-16 * c.norm();
        let mut out = Vec::new();
        for (y, cols) in &self.classes {
            let mut v = DVector::from_element(n, Complex64::ZERO);
            let mut mass = 0.0f64;
            for col in cols.clone() {
                let cc = c[col];
                mass += cc.norm_sqr();
                if cc.re == 0.0 && cc.im == 0.0 {
                    continue;
                }
                for i in 0..n {
                    v[i] += cc * self.vectors[(i, col)];
                }
            }
            if mass.sqrt() > floor {
                out.push((*y, v));
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Lattice heat trace.

/// Spectrum of the compressed symmetric operator k^{1/2} Δ k^{1/2}.
#[derive(Clone, Debug, Serialize)]
pub struct HeatSpectrum {
    pub dim: usize,
    /// Ascending eigenvalues, one per basis vector.
    pub eigenvalues: Vec<f64>,
    pub zero_modes: usize,
    pub hermiticity_defect: f64,
}

impl HeatSpectrum {
    pub fn heat_trace(&self, t: f64) -> f64 {
        self.eigenvalues.iter().map(|l| (-t * l).exp()).sum()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Diagonalize the block compression of k^{1/2} Δ k^{1/2}.
///
/// The compression is assembled as A·D·A from the compressed left
/// multiplication A by k^{1/2} and the exact Laplacian diagonal D, so it is
/// positive semidefinite with the one-dimensional kernel spanned by the
/// image of the constant mode.  Eigenvalues come from the symmetric real
/// doubling; the doubled spectrum must pair up, and the pairing is checked.
pub fn weyl_laplacian_spectrum(
    weyl: &WeylFactor,
    radius: i64,
    herm_tol: f64,
) -> Result<HeatSpectrum> {
    let basis = GnsBasis::new(weyl.theta.m, radius)?;
    let khalf = weyl.power(0.5)?;
    let a = basis.left_mul_matrix(&khalf, &weyl.theta)?;
    let scale = a.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let defect = (&a - a.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if defect > herm_tol * (scale + 1e-300) {
        return Err(TorusError::Numerical(format!(
            "left multiplication by k^(1/2) is not Hermitian: defect {defect:.3e}"
        )));
    }
    let sa = doubled(&a);
    let d = basis.laplacian_diagonal();
    let n = basis.dim();

    let mut da = sa.clone();
    for i in 0..2 * n {
        let w = d[i % n];
        for j in 0..2 * n {
            da[(i, j)] *= w;
        }
    }
    let mut sp = &sa * &da;
    let spt = sp.transpose();
    sp += spt;
    sp.scale_mut(0.5);

    let mut vals: Vec<f64> = sp.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let vmax = vals.last().copied().unwrap_or(0.0).abs().max(1.0);
    let mut eigenvalues = Vec::with_capacity(n);
    for pair in vals.chunks(2) {
        if (pair[1] - pair[0]).abs() > 1e-7 * vmax {
            return Err(TorusError::Numerical(format!(
                "doubled heat spectrum failed to pair: gap {:.3e} near {:.6e}",
                pair[1] - pair[0],
                pair[0]
            )));
        }
        eigenvalues.push(0.5 * (pair[0] + pair[1]));
    }
    if eigenvalues[0] < -1e-8 * vmax {
        return Err(TorusError::Numerical(format!(
            "heat operator compression has a negative eigenvalue {:.3e}",
            eigenvalues[0]
        )));
    }
    let zero_modes = eigenvalues.iter().filter(|l| l.abs() <= 1e-8 * vmax).count();
    Ok(HeatSpectrum {
        dim: n,
        eigenvalues,
        zero_modes,
        hermiticity_defect: defect,
    })
}

/// Controls for [`heat_trace_fit`]: block radius, sample grid for t, and the
/// degree of the polynomial model for t·Tr e^{−tP}.
#[derive(Clone, Debug)]
pub struct HeatFitConfig {
    pub radius: i64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_count: usize,
    pub degree: usize,
    pub herm_tol: f64,
    pub max_condition: f64,
    pub max_rel_residual: f64,
}

impl Default for HeatFitConfig {
    fn default() -> Self {
        // The window balances truncation against the asymptotic regime: at
        // radius 12 the missing lattice tail is below 1e-9 at t = 0.15,
        // while past t ≈ 0.45 the exponentially small theta-function tail
        // grows large enough for the least-squares extraction to smear it
        // into the low-order coefficients.
        HeatFitConfig {
            radius: 12,
            t_min: 0.15,
            t_max: 0.45,
            t_count: 25,
            degree: 3,
            herm_tol: 1e-9,
            max_condition: 1e12,
            max_rel_residual: 1e-2,
        }
    }
}

/// Least-squares fit of t·Tr e^{−tP}: coefficient j multiplies t^j, so
/// `coeffs[0]` and `coeffs[1]` estimate the volume and curvature terms of
/// the short-time expansion.
#[derive(Clone, Debug, Serialize)]
pub struct HeatFit {
    pub coeffs: Vec<f64>,
    pub residual: f64,
    pub rel_residual: f64,
    pub condition: f64,
    pub spectrum: HeatSpectrum,
}

impl HeatFit {
    pub fn v0(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn v2(&self) -> f64 {
        self.coeffs[1]
    }
}

/// Fit the short-time expansion of the truncated heat trace.
///
/// Reports residual and condition number instead of hiding them; the fit
/// fails loudly when either exceeds the configured bound or when the
/// compression does not show exactly the expected one-dimensional kernel.
pub fn heat_trace_fit(weyl: &WeylFactor, cfg: &HeatFitConfig) -> Result<HeatFit> {
    if !(cfg.t_min > 0.0 && cfg.t_max > cfg.t_min) {
        return Err(TorusError::InvalidInput(format!(
            "fit window [{}, {}] is not an increasing positive interval",
            cfg.t_min, cfg.t_max
        )));
    }
    if cfg.degree < 1 || cfg.t_count < cfg.degree + 2 {
        return Err(TorusError::InvalidInput(format!(
            "fit needs degree ≥ 1 and at least degree + 2 samples, got degree {} with {} samples",
            cfg.degree, cfg.t_count
        )));
    }
    let spectrum = weyl_laplacian_spectrum(weyl, cfg.radius, cfg.herm_tol)?;
    if spectrum.zero_modes != 1 {
        return Err(TorusError::Numerical(format!(
            "heat compression shows {} zero modes instead of the single constant mode",
            spectrum.zero_modes
        )));
    }

    let nt = cfg.t_count;
    let step = (cfg.t_max - cfg.t_min) / (nt - 1) as f64;
    let ts: Vec<f64> = (0..nt).map(|i| cfg.t_min + step * i as f64).collect();
    let y = DVector::from_iterator(nt, ts.iter().map(|&t| t * spectrum.heat_trace(t)));

    let mut x = DMatrix::zeros(nt, cfg.degree + 1);
    for (i, &t) in ts.iter().enumerate() {
        let mut p = 1.0;
        for j in 0..=cfg.degree {
            x[(i, j)] = p;
            p *= t;
        }
    }
    let col_scales: Vec<f64> = (0..=cfg.degree)
        .map(|j| x.column(j).amax().max(1e-300))
        .collect();
    let mut xs = x.clone();
    for (j, &s) in col_scales.iter().enumerate() {
        for i in 0..nt {
            xs[(i, j)] /= s;
        }
    }
    let svd = nalgebra::linalg::SVD::new(xs.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let condition = smax / smin.max(1e-300);
    let sol = svd
        .solve(&y, 1e-14)
        .map_err(|e| TorusError::Numerical(format!("least-squares solve failed: {e}")))?;
    let coeffs: Vec<f64> = sol
        .iter()
        .zip(&col_scales)
        .map(|(c, s)| c / s)
        .collect();

    let fitted = &x * DVector::from_vec(coeffs.clone());
    let residual = (&fitted - &y).amax();
    let rel_residual = residual / y.amax().max(1e-300);
    if condition > cfg.max_condition {
        return Err(TorusError::FitInstability(format!(
            "design matrix condition {condition:.3e} exceeds {:.1e}",
            cfg.max_condition
        )));
    }
    if rel_residual > cfg.max_rel_residual {
        return Err(TorusError::FitInstability(format!(
            "relative residual {rel_residual:.3e} exceeds {:.1e}; the model does not describe the data",
            cfg.max_rel_residual
        )));
    }
    Ok(HeatFit {
        coeffs,
        residual,
        rel_residual,
        condition,
        spectrum,
    })
}

// ---------------------------------------------------------------------------
// Closed-form second heat coefficient.

/// Value of the closed-form route together with its bookkeeping: the norm
/// dropped when fitting the derivative arguments into the modular block and
/// the largest quadrature error bound among the weight evaluations.
#[derive(Clone, Debug)]
pub struct V2Formula {
    pub value: Complex64,
    pub arg_spill: f64,
    pub quad_error: f64,
}

/// Assemble the second heat coefficient of the chosen conformal Laplacian
/// as an algebra element:
///
/// k^{−m/2}·G_I(𝐲)(−Δk) − k^{−m/2−1}·Σ_s G_II(𝐲⁽¹⁾, 𝐲⁽²⁾)((δ_s k) ⊗ (δ_s k)).
///
/// The weight functions are the spectral coefficient tables of the
/// conformal layer, evaluated with the plain Gaussian constant π^{m/2};
/// that constant is pinned by the flat limit, where the coefficient of the
/// leading term must equal the Gaussian volume ∫ e^{−|ξ|²} dξ.
pub fn v2_element(
    weyl: &WeylFactor,
    op: ConformalOp,
    calc: &ModularCalculus,
    quad_tol: Tol,
) -> Result<(FourierElement, f64, f64)> {
    let m = weyl.theta.m;
    if m < 2 {
        return Err(TorusError::InvalidInput(
            "closed-form evaluation needs dimension at least 2".into(),
        ));
    }
    let mu = m as u32;
    let radius = calc.basis().radius();
    let k = weyl.power(1.0)?;

    let gi = conformal::g_i_expr(op);
    let gii = conformal::g_ii_expr(op);
    let mut quad_error = 0.0f64;
    let mut spill = 0.0f64;

    let (arg_i, sp) = k.laplacian().scale(Complex64::from(-1.0)).truncated(radius);
    spill += sp;
    let x_i = {
        let mut qe = 0.0f64;
        let out = calc.apply1(
            |y| {
                let e = conformal::eval(
                    &gi,
                    EvalPoint::single(y, mu)?,
                    Normalization::GaussPi,
                    quad_tol,
                )?;
                qe = qe.max(e.quad_error);
                Ok(e.value)
            },
            &arg_i,
        )?;
        quad_error = quad_error.max(qe);
        out
    };

    let mut x_ii = FourierElement::zero(m);
    for s in 0..m {
        let (ds, sp) = k.delta(s)?.truncated(radius);
        spill += sp;
        let mut qe = 0.0f64;
        let part = calc.apply2(
            |y1, y2| {
                let e = conformal::eval(
                    &gii,
                    EvalPoint::new(y1, y2, mu)?,
                    Normalization::GaussPi,
                    quad_tol,
                )?;
                qe = qe.max(e.quad_error);
                Ok(e.value)
            },
            &ds,
            &ds,
        )?;
        quad_error = quad_error.max(qe);
        x_ii = &x_ii + &part;
    }
    x_ii = x_ii.scale(Complex64::from(-1.0));

    let k_i = weyl.power(-(m as f64) / 2.0)?;
    let k_ii = weyl.power(-(m as f64) / 2.0 - 1.0)?;
    let elem = &twisted_mul_exact(&k_i, &x_i, &weyl.theta)?
        + &twisted_mul_exact(&k_ii, &x_ii, &weyl.theta)?;
    Ok((elem, spill, quad_error))
}

/// φ₀(a · v₂) for the chosen conformal Laplacian, through the modular
/// calculus on a block of the given radius.
pub fn v2_formula_eval(
    weyl: &WeylFactor,
    a: &FourierElement,
    op: ConformalOp,
    leg_radius: i64,
    quad_tol: Tol,
) -> Result<V2Formula> {
    let calc = ModularCalculus::new(weyl, leg_radius, 1e-9)?;
    let (elem, arg_spill, quad_error) = v2_element(weyl, op, &calc, quad_tol)?;
    let value = twisted_mul_exact(a, &elem, &weyl.theta)?.trace0();
    Ok(V2Formula {
        value,
        arg_spill,
        quad_error,
    })
}

// ---------------------------------------------------------------------------
// Cross-check of the two routes.

/// One row of the lattice-versus-formula comparison at a fixed deformation
/// strength.
#[derive(Clone, Debug, Serialize)]
pub struct CrossCheckRow {
    pub eps: f64,
    pub v2_formula: f64,
    pub v2_fit: f64,
    pub v0_fit: f64,
    /// π^{m/2} φ₀(k^{−m/2}), the closed form of the volume coefficient.
    pub v0_closed_form: f64,
    /// |formula − fit| / max(|formula|, ε²).
    pub rel_gap: f64,
    pub fit_residual: f64,
    pub fit_condition: f64,
}

/// Run both routes to the second heat coefficient on the two-dimensional
/// torus with Weyl factor exp(ε(U₁ + U₁*)/2), one row per ε.
pub fn heat_cross_check(
    theta12: f64,
    eps: &[f64],
    fit_cfg: &HeatFitConfig,
    leg_radius: i64,
) -> Result<Vec<CrossCheckRow>> {
    let theta = Theta::two_d(theta12);
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let weyl = WeylFactor::from_cosine(theta.clone(), 0, e)?;
        let fit = heat_trace_fit(&weyl, fit_cfg)?;
        let formula = v2_formula_eval(
            &weyl,
            &FourierElement::one(2),
            ConformalOp::DeltaK,
            leg_radius,
            Tol::default(),
        )?;
        if formula.value.im.abs() > 1e-9 * (1.0 + formula.value.re.abs()) {
            return Err(TorusError::Numerical(format!(
                "traced coefficient has imaginary part {:.3e}",
                formula.value.im
            )));
        }
        let v2f = formula.value.re;
        let kinv = weyl.power(-1.0)?;
        let v0_closed = PI * kinv.trace0().re;
        let rel_gap = (v2f - fit.v2()).abs() / v2f.abs().max(e * e);
        rows.push(CrossCheckRow {
            eps: e,
            v2_formula: v2f,
            v2_fit: fit.v2(),
            v0_fit: fit.v0(),
            v0_closed_form: v0_closed,
            rel_gap,
            fit_residual: fit.residual,
            fit_condition: fit.condition,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_element(rng: &mut ChaCha8Rng, m: usize, radius: i64) -> FourierElement {
        let terms: Vec<(Vec<i64>, Complex64)> = GnsBasis::new(m, radius)
            .unwrap()
            .indices()
            .iter()
            .map(|l| {
                let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                (l.clone(), c)
            })
            .collect();
        FourierElement::from_terms(m, &terms).unwrap()
    }

    fn random_self_adjoint(rng: &mut ChaCha8Rng, theta: &Theta, radius: i64) -> FourierElement {
        let x = random_element(rng, theta.m(), radius);
        (&x + &x.adjoint(theta).unwrap()).scale(Complex64::from(0.5))
    }

    #[test]
    fn generators_obey_the_twist_relation() {
        let theta = Theta::two_d(0.3);
        let u1 = FourierElement::generator(2, 0).unwrap();
        let u2 = FourierElement::generator(2, 1).unwrap();
        let u1u2 = twisted_mul_exact(&u1, &u2, &theta).unwrap();
        let u2u1 = twisted_mul_exact(&u2, &u1, &theta).unwrap();
        let expected = Complex64::from_polar(1.0, TAU * 0.3);
        let lhs = u2u1.coeff(&[1, 1]);
        let rhs = expected * u1u2.coeff(&[1, 1]);
        assert!((lhs - rhs).norm() < 1e-14);

        let flat = Theta::zero(2);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let f = random_element(&mut rng, 2, 2);
        let g = random_element(&mut rng, 2, 2);
        let fg = twisted_mul_exact(&f, &g, &flat).unwrap();
        let gf = twisted_mul_exact(&g, &f, &flat).unwrap();
        assert!((&fg - &gf).l2_norm() < 1e-13 * fg.l2_norm());
    }

    #[test]
    fn twisted_product_is_associative() {
        let theta = Theta::two_d(std::f64::consts::FRAC_1_SQRT_2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let f = random_element(&mut rng, 2, 2);
            let g = random_element(&mut rng, 2, 2);
            let h = random_element(&mut rng, 2, 2);
            let left = twisted_mul_exact(&twisted_mul_exact(&f, &g, &theta).unwrap(), &h, &theta)
                .unwrap();
            let right = twisted_mul_exact(&f, &twisted_mul_exact(&g, &h, &theta).unwrap(), &theta)
                .unwrap();
            let scale = left.l2_norm().max(1.0);
            assert!((&left - &right).l2_norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn vacuum_expectation_is_a_trace() {
        let theta = Theta::two_d(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = random_element(&mut rng, 2, 3);
        let g = random_element(&mut rng, 2, 3);
        let fg = twisted_mul_exact(&f, &g, &theta).unwrap().trace0();
        let gf = twisted_mul_exact(&g, &f, &theta).unwrap().trace0();
        assert!((fg - gf).norm() < 1e-13 * fg.norm().max(1.0));

        assert_eq!(FourierElement::one(2).trace0(), Complex64::from(1.0));
        let u = FourierElement::generator(2, 0).unwrap();
        assert_eq!(u.trace0(), Complex64::ZERO);

        // Monomials are orthonormal for ⟨f, g⟩ = φ₀(g* f).
        let a = FourierElement::monomial(2, &[2, -1], Complex64::from(1.0)).unwrap();
        let b = FourierElement::monomial(2, &[1, 1], Complex64::from(1.0)).unwrap();
        let aa = twisted_mul_exact(&a.adjoint(&theta).unwrap(), &a, &theta)
            .unwrap()
            .trace0();
        let ab = twisted_mul_exact(&b.adjoint(&theta).unwrap(), &a, &theta)
            .unwrap()
            .trace0();
        assert!((aa - Complex64::from(1.0)).norm() < 1e-14);
        assert!(ab.norm() < 1e-14);
    }

    #[test]
    fn derivations_satisfy_leibniz_and_kill_the_trace() {
        let theta = Theta::two_d(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let f = random_element(&mut rng, 2, 2);
        let g = random_element(&mut rng, 2, 2);
        for axis in 0..2 {
            let lhs = twisted_mul_exact(&f, &g, &theta).unwrap().delta(axis).unwrap();
            let rhs = &twisted_mul_exact(&f.delta(axis).unwrap(), &g, &theta).unwrap()
                + &twisted_mul_exact(&f, &g.delta(axis).unwrap(), &theta).unwrap();
            assert!((&lhs - &rhs).l2_norm() < 1e-12 * lhs.l2_norm().max(1.0));
            assert_eq!(f.delta(axis).unwrap().trace0(), Complex64::ZERO);
        }
        assert!(FourierElement::one(2).delta(0).unwrap().l2_norm() == 0.0);
        let u = FourierElement::generator(2, 0).unwrap();
        assert_eq!(u.delta(0).unwrap().coeff(&[1, 0]), Complex64::from(1.0));
    }

    #[test]
    fn adjoint_reverses_products() {
        let theta = Theta::two_d(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let f = random_element(&mut rng, 2, 2);
        let g = random_element(&mut rng, 2, 2);
        let lhs = twisted_mul_exact(&f, &g, &theta)
            .unwrap()
            .adjoint(&theta)
            .unwrap();
        let rhs = twisted_mul_exact(&g.adjoint(&theta).unwrap(), &f.adjoint(&theta).unwrap(), &theta)
            .unwrap();
        assert!((&lhs - &rhs).l2_norm() < 1e-12 * lhs.l2_norm());
        let back = f.adjoint(&theta).unwrap().adjoint(&theta).unwrap();
        assert!((&back - &f).l2_norm() < 1e-13 * f.l2_norm());

        let u = FourierElement::monomial(2, &[3, -2], Complex64::from(1.0)).unwrap();
        let uu = twisted_mul_exact(&u, &u.adjoint(&theta).unwrap(), &theta).unwrap();
        assert!((&uu - &FourierElement::one(2)).l2_norm() < 1e-14);

        let weyl = WeylFactor::from_cosine(Theta::two_d(0.3), 0, 0.2).unwrap();
        assert!(weyl.h().is_self_adjoint(&Theta::two_d(0.3), 1e-14).unwrap());
    }

    #[test]
    fn exponentials_multiply_to_the_identity() {
        let theta = Theta::two_d(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let h = random_self_adjoint(&mut rng, &theta, 1).scale(Complex64::from(0.3));
        let e = exp_element(&h, &theta, 1e-14).unwrap();
        let einv = exp_element(&h.scale(Complex64::from(-1.0)), &theta, 1e-14).unwrap();
        let prod = twisted_mul_exact(&e, &einv, &theta).unwrap();
        assert!((&prod - &FourierElement::one(2)).l2_norm() < 1e-12);

        let zero = exp_element(&FourierElement::zero(2), &theta, 1e-14).unwrap();
        assert!((&zero - &FourierElement::one(2)).l2_norm() == 0.0);

        let weyl = WeylFactor::new(h, theta.clone()).unwrap();
        let kab = weyl.power(0.7).unwrap();
        let ka = weyl.power(0.3).unwrap();
        let kb = weyl.power(0.4).unwrap();
        let prod = twisted_mul_exact(&ka, &kb, &theta).unwrap();
        assert!((&prod - &kab).l2_norm() < 1e-12);
        assert!(weyl.power(1.0).unwrap().is_self_adjoint(&theta, 1e-12).unwrap());
    }

    #[test]
    fn left_multiplication_matrix_matches_the_product() {
        let theta = Theta::two_d(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let f = random_element(&mut rng, 2, 1);
        let basis = GnsBasis::new(2, 2).unwrap();
        let mat = basis.left_mul_matrix(&f, &theta).unwrap();
        for (bpos, b) in basis.indices().iter().enumerate() {
            let ub = FourierElement::monomial(2, b, Complex64::from(1.0)).unwrap();
            let prod = twisted_mul_exact(&f, &ub, &theta).unwrap();
            for (row, l) in basis.indices().iter().enumerate() {
                let got = mat[(row, bpos)];
                let want = prod.coeff(l);
                assert!((got - want).norm() < 1e-13);
            }
        }

        let h = random_self_adjoint(&mut rng, &theta, 1);
        let hm = basis.left_mul_matrix(&h, &theta).unwrap();
        let defect = (&hm - hm.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(defect < 1e-13);
    }

    #[test]
    fn doubled_eigensolver_reconstructs_hermitian_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 12;
        let x = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let h = (&x + x.adjoint()).scale(0.5);
        let eig = hermitian_eigen(&h, 1e-10).unwrap();
        for j in 0..n {
            let v = eig.vectors.column(j);
            let hv = &h * v;
            let res = (&hv - v.scale(eig.values[j])).norm();
            assert!(res < 1e-9, "residual {res:e} at eigenvalue {}", eig.values[j]);
        }
        let gram = eig.vectors.adjoint() * &eig.vectors;
        let id = DMatrix::<Complex64>::identity(n, n);
        let defect = (&gram - &id).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(defect < 1e-9);

        // Fully degenerate spectrum: extraction must still deliver a basis.
        let scaled = DMatrix::<Complex64>::identity(5, 5).scale(2.5);
        let eig = hermitian_eigen(&scaled, 1e-12).unwrap();
        assert!(eig.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let gram = eig.vectors.adjoint() * &eig.vectors;
        let id = DMatrix::<Complex64>::identity(5, 5);
        assert!((&gram - &id).iter().map(|c| c.norm()).fold(0.0, f64::max) < 1e-10);
    }

    #[test]
    fn modular_calculus_fixed_points() {
        let theta = Theta::two_d(0.3);
        let weyl = WeylFactor::from_cosine(theta.clone(), 0, 0.1).unwrap();
        let calc = ModularCalculus::new(&weyl, 3, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let a = random_element(&mut rng, 2, 3);

        let same = calc.apply1(|_| Ok(1.0), &a).unwrap();
        assert!((&same - &a).l2_norm() < 1e-10 * a.l2_norm());

        let (lo, hi) = calc.value_range();
        assert!(lo > 0.0 && hi >= lo);

        let flat = WeylFactor::flat(theta);
        let calc = ModularCalculus::new(&flat, 2, 1e-9).unwrap();
        let b = random_element(&mut rng, 2, 2);
        let scaled = calc.apply1(|y| Ok(3.0 * y), &b).unwrap();
        assert!((&scaled - &b.scale(Complex64::from(3.0))).l2_norm() < 1e-11 * b.l2_norm());
    }

    #[test]
    fn modular_calculus_matches_direct_conjugation() {
        // Padding between the argument support (2) and the block radius (8)
        // keeps the compression error of one conjugation far below the
        // asserted tolerance.
        let theta = Theta::two_d(0.3);
        let weyl = WeylFactor::from_cosine(theta.clone(), 0, 0.05).unwrap();
        let calc = ModularCalculus::new(&weyl, 8, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let a = random_element(&mut rng, 2, 2);

        let spectral = calc.apply1(|y| Ok(y), &a).unwrap();
        let k = weyl.power(1.0).unwrap();
        let kinv = weyl.power(-1.0).unwrap();
        let direct = twisted_mul_exact(&twisted_mul_exact(&kinv, &a, &theta).unwrap(), &k, &theta)
            .unwrap();
        let diff = (&spectral - &direct).l2_norm();
        assert!(diff < 1e-10 * a.l2_norm(), "conjugation mismatch {diff:e}");
    }

    #[test]
    fn rank_two_product_functions_compose() {
        let theta = Theta::two_d(0.3);
        let weyl = WeylFactor::from_cosine(theta.clone(), 0, 0.1).unwrap();
        let calc = ModularCalculus::new(&weyl, 3, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let a = random_element(&mut rng, 2, 3);
        let b = random_element(&mut rng, 2, 3);

        let f1 = |y: f64| (0.3 * y).exp();
        let f2 = |y: f64| 1.0 / (1.0 + y);
        let joint = calc.apply2(|y1, y2| Ok(f1(y1) * f2(y2)), &a, &b).unwrap();
        let left = calc.apply1(|y| Ok(f1(y)), &a).unwrap();
        let right = calc.apply1(|y| Ok(f2(y)), &b).unwrap();
        let split = twisted_mul_exact(&left, &right, &theta).unwrap();
        let scale = joint.l2_norm().max(1.0);
        assert!((&joint - &split).l2_norm() < 1e-11 * scale);
    }

    #[test]
    fn flat_spectrum_is_the_integer_lattice() {
        let theta = Theta::two_d(0.3);
        let flat = WeylFactor::flat(theta);
        let spec = weyl_laplacian_spectrum(&flat, 5, 1e-9).unwrap();
        let mut expected: Vec<f64> = GnsBasis::new(2, 5)
            .unwrap()
            .indices()
            .iter()
            .map(|l| l.iter().map(|&x| (x * x) as f64).sum())
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(spec.eigenvalues.len(), expected.len());
        for (got, want) in spec.eigenvalues.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-9 * (1.0 + want));
        }
        assert_eq!(spec.zero_modes, 1);

        let direct: f64 = expected.iter().map(|l| (-0.3 * l).exp()).sum();
        assert!((spec.heat_trace(0.3) - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn flat_heat_fit_recovers_the_lattice_constants() {
        let flat = WeylFactor::flat(Theta::two_d(0.3));
        let fit = heat_trace_fit(&flat, &HeatFitConfig::default()).unwrap();
        assert!(
            (fit.v0() - PI).abs() < 1e-5,
            "volume coefficient {} differs from π",
            fit.v0()
        );
        assert!(fit.v2().abs() < 1e-6, "flat curvature term {}", fit.v2());
        assert!(fit.rel_residual < 1e-6);
    }

    #[test]
    fn volume_term_tracks_the_closed_form() {
        // The fitted volume coefficient must match π·φ₀(k⁻¹), whose
        // deviation from π grows quadratically in the deformation strength.
        let cfg = HeatFitConfig::default();
        let v0_at = |eps: f64| {
            let weyl = WeylFactor::from_cosine(Theta::two_d(0.3), 0, eps).unwrap();
            let fit = heat_trace_fit(&weyl, &cfg).unwrap();
            let closed = PI * weyl.power(-1.0).unwrap().trace0().re;
            assert!(
                (fit.v0() - closed).abs() < 1e-4,
                "volume term {} differs from the closed form {closed}",
                fit.v0()
            );
            fit.v0()
        };
        let small = v0_at(0.1) - PI;
        let large = v0_at(0.2) - PI;
        let ratio = large / small;
        assert!(
            (ratio - 4.0).abs() < 0.4,
            "quadratic volume response violated: ratio {ratio}"
        );
    }

    #[test]
    fn formula_value_vanishes_at_trivial_weyl_factor() {
        let flat = WeylFactor::flat(Theta::two_d(0.3));
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let a = random_element(&mut rng, 2, 2);
        let out = v2_formula_eval(&flat, &a, ConformalOp::DeltaK, 3, Tol::default()).unwrap();
        assert!(out.value.norm() < 1e-12);
        assert!(out.arg_spill == 0.0);
    }

    #[test]
    fn localized_first_order_response_matches_the_closed_value() {
        // To first order in ε the traced coefficient against U₁ + U₁* is
        // −ε times the one-variable weight at the fixed point, which equals
        // π/6 in dimension two; corrections start at ε³.
        let theta = Theta::two_d(0.3);
        let probe = {
            let u = FourierElement::generator(2, 0).unwrap();
            &u + &u.adjoint(&theta).unwrap()
        };
        let response = |eps: f64| {
            let weyl = WeylFactor::from_cosine(theta.clone(), 0, eps).unwrap();
            let out =
                v2_formula_eval(&weyl, &probe, ConformalOp::DeltaK, 4, Tol::default()).unwrap();
            assert!(out.value.im.abs() < 1e-10);
            out.value.re
        };
        for eps in [0.05, 0.1] {
            let delta = (response(eps) + eps * PI / 6.0).abs();
            assert!(
                delta < 0.2 * eps * eps * eps + 1e-9,
                "first-order mismatch {delta:e} at ε = {eps}"
            );
        }
    }

    #[test]
    fn conjugation_identity_links_the_two_scalings() {
        // The symmetric-scaling coefficient element equals the conjugation
        // of the one-sided one by k^{1/2}.  Both sides are assembled over
        // the same modular block; the argument radius 1 against block
        // radius 7 keeps the compression defect far below the tolerance.
        let theta = Theta::two_d(0.3);
        let weyl = WeylFactor::from_cosine(theta.clone(), 0, 0.05).unwrap();
        let calc = ModularCalculus::new(&weyl, 7, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let arg1 = random_self_adjoint(&mut rng, &theta, 1);
        let arg2 = random_self_adjoint(&mut rng, &theta, 1);

        let tol = Tol::default();
        let assemble = |op: ConformalOp| -> FourierElement {
            let gi = conformal::g_i_expr(op);
            let gii = conformal::g_ii_expr(op);
            let x_i = calc
                .apply1(
                    |y| {
                        Ok(conformal::eval(
                            &gi,
                            EvalPoint::single(y, 2)?,
                            Normalization::GaussPi,
                            tol,
                        )?
                        .value)
                    },
                    &arg1,
                )
                .unwrap();
            let x_ii = calc
                .apply2(
                    |y1, y2| {
                        Ok(conformal::eval(
                            &gii,
                            EvalPoint::new(y1, y2, 2)?,
                            Normalization::GaussPi,
                            tol,
                        )?
                        .value)
                    },
                    &arg2,
                    &arg2,
                )
                .unwrap();
            let k_i = weyl.power(-1.0).unwrap();
            let k_ii = weyl.power(-2.0).unwrap();
            &twisted_mul_exact(&k_i, &x_i, &theta).unwrap()
                + &twisted_mul_exact(&k_ii, &x_ii, &theta).unwrap()
        };

        let symmetric = assemble(ConformalOp::DeltaPhi);
        let one_sided = assemble(ConformalOp::DeltaK);
        let kh = weyl.power(0.5).unwrap();
        let khinv = weyl.power(-0.5).unwrap();
        let conjugated =
            twisted_mul_exact(&twisted_mul_exact(&khinv, &one_sided, &theta).unwrap(), &kh, &theta)
                .unwrap();
        let diff = (&symmetric - &conjugated).l2_norm();
        let scale = symmetric.l2_norm().max(1.0);
        assert!(diff < 1e-8 * scale, "conjugation identity defect {diff:e}");
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(Theta::new(2, vec![0.0, 0.3, 0.3, 0.0]).is_err());
        assert!(FourierElement::monomial(2, &[1], Complex64::from(1.0)).is_err());
        assert!(GnsBasis::new(2, 200).is_err());
        let theta = Theta::two_d(0.3);
        let f = random_element(&mut ChaCha8Rng::seed_from_u64(71), 2, 3);
        let basis = GnsBasis::new(2, 2).unwrap();
        assert!(basis.element_to_vec(&f).is_err());

        let u = FourierElement::generator(2, 0).unwrap();
        let h = &u + &u; // not self-adjoint
        assert!(WeylFactor::new(h, theta.clone()).is_err());

        let weyl = WeylFactor::from_cosine(theta, 0, 0.1).unwrap();
        let bad = HeatFitConfig {
            t_min: 0.5,
            t_max: 0.2,
            ..HeatFitConfig::default()
        };
        assert!(heat_trace_fit(&weyl, &bad).is_err());
    }

    #[test]
    fn truncated_products_report_their_spill() {
        let theta = Theta::two_d(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let f = random_element(&mut rng, 2, 2);
        let g = random_element(&mut rng, 2, 2);
        let (clipped, spill) = twisted_mul(&f, &g, &theta).unwrap();
        let exact = twisted_mul_exact(&f, &g, &theta).unwrap();
        let dropped = (&exact - &clipped).l2_norm();
        assert!(clipped.radius() <= 2);
        assert!((spill - dropped).abs() < 1e-12 * dropped.max(1.0));
        assert!(spill > 0.0, "radius-2 squares must clip something");
    }
}
