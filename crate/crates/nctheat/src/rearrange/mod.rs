//! Rearrangement integrals: the scalar component functions produced when all
//! resolvent factors of a product are collected to one side.
//!
//! The module provides two independent numeric routes to the same family of
//! values (simplex quadrature with an exponential weight vs. an oscillatory
//! contour integral; Gaussian moments by operator series vs. pairing sums).
//! Route agreement is the correctness oracle used throughout the test suite.
//!
//! Conventions. The weight ω_α on the standard n-simplex is normalized by
//! the Γ-factors of the trailing entries only,
//! ω_α(u) = u₀^{α₀-1} ∏_{l≥1} u_l^{α_l-1} / Γ(α_l),  u₀ = 1 - Σ u_l,
//! and the Gaussian prefactor c(m) defaults to (2π)^{m/2}; both choices are
//! configurable where they matter. `simplex_g` carries an extra 1/Γ(α₀) so
//! that it agrees identically with `contour_g` (the contour route fixes the
//! constant unambiguously; see the unit tests).

pub mod contour;
pub mod quad;

pub use contour::{contour_g, contour_g_with_error, exp_divided_difference, gauss_legendre};
pub use quad::{
    dirichlet_moment, simplex_integrate, QuadResult, QuadratureRule, RegionDiag, SimplexPoint,
    Tol,
};

use crate::exact::gamma_half;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Errors from the integral layer.
#[derive(Debug, thiserror::Error)]
pub enum RearrangeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("integrand pole on the simplex (row {row}): {detail}")]
    Domain { row: usize, detail: String },
    #[error(
        "quadrature stalled: error {achieved:.3e} > requested {requested:.3e} \
         for value {value:.6e}; worst region at depth {} with error {:.3e}, vertices {:?}",
        worst.depth, worst.error, worst.vertices
    )]
    QuadratureFailure {
        value: f64,
        achieved: f64,
        requested: f64,
        worst: RegionDiag,
    },
}

/// Global Gaussian normalization constant c(m).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// c(m) = π^{m/2}: the plain Gaussian integral constant.
    GaussPi,
    /// c(m) = (2π)^{m/2} (default display convention).
    #[default]
    GaussTwoPi,
    /// c(m) = 1: strips the constant entirely.
    One,
}

impl Normalization {
    pub fn value(self, m: u32) -> f64 {
        match self {
            Normalization::GaussPi => std::f64::consts::PI.powf(f64::from(m) / 2.0),
            Normalization::GaussTwoPi => {
                (2.0 * std::f64::consts::PI).powf(f64::from(m) / 2.0)
            }
            Normalization::One => 1.0,
        }
    }
}

/// Weight exponent multi-index α = (α₀, …, α_n), all entries ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self, RearrangeError> {
        if entries.is_empty() || entries.iter().any(|&e| e == 0) {
            return Err(RearrangeError::InvalidInput(format!(
                "multi-index entries must be ≥ 1 and nonempty, got {entries:?}"
            )));
        }
        Ok(MultiIndex(entries))
    }

    pub fn from_slice(entries: &[u32]) -> Result<Self, RearrangeError> {
        Self::new(entries.to_vec())
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// |α| = Σ α_j.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Number of simplex variables n (= number of trailing entries).
    pub fn n(&self) -> usize {
        self.0.len() - 1
    }

    pub fn alpha0(&self) -> u32 {
        self.0[0]
    }

    /// Derivative pair count N = |α| - j/2 - 1 for even symbol order j.
    pub fn pair_count(&self, j: u32) -> Result<u32, RearrangeError> {
        if j % 2 != 0 {
            return Err(RearrangeError::InvalidInput(format!(
                "symbol order j must be even, got {j}"
            )));
        }
        let need = j / 2 + 1;
        if self.order() < need {
            return Err(RearrangeError::InvalidInput(format!(
                "|α| = {} too small for j = {j}",
                self.order()
            )));
        }
        Ok(self.order() - need)
    }
}

/// Unordered list of index pairs into 1..=m, canonicalized.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairList(Vec<(usize, usize)>);

impl PairList {
    pub fn new(mut pairs: Vec<(usize, usize)>, m: usize) -> Result<Self, RearrangeError> {
        for &(p, q) in &pairs {
            if p == 0 || q == 0 || p > m || q > m {
                return Err(RearrangeError::InvalidInput(format!(
                    "pair ({p},{q}) out of range 1..={m}"
                )));
            }
        }
        for pr in pairs.iter_mut() {
            if pr.0 > pr.1 {
                *pr = (pr.1, pr.0);
            }
        }
        pairs.sort_unstable();
        Ok(PairList(pairs))
    }

    pub fn empty() -> Self {
        PairList(Vec::new())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// ω_α(u): simplex weight with trailing-entry Γ normalization.
pub fn omega_weight(alpha: &MultiIndex, u: &SimplexPoint) -> Result<f64, RearrangeError> {
    if u.dim() != alpha.n() {
        return Err(RearrangeError::InvalidInput(format!(
            "point dimension {} does not match multi-index n = {}",
            u.dim(),
            alpha.n()
        )));
    }
    Ok(omega_raw(alpha.entries(), u.coords()))
}

fn omega_raw(alpha: &[u32], u: &[f64]) -> f64 {
    let u0 = 1.0 - u.iter().sum::<f64>();
    let mut w = powi_clamped(u0, alpha[0] - 1);
    for (l, &al) in alpha[1..].iter().enumerate() {
        w *= powi_clamped(u[l], al - 1) / gamma_half(2 * al);
    }
    w
}

// u^k with boundary-safe handling of 0^0 = 1 for tiny negative roundoff.
fn powi_clamped(base: f64, k: u32) -> f64 {
    if k == 0 {
        1.0
    } else {
        base.max(0.0).powi(k as i32)
    }
}

/// Exponential rearrangement value: (1/Γ(l₀)) ∫_{Δⁿ} ω_l(u) e^{-B(u)} du with
/// B(u) = A₀u₀ + Σ A_j u_j. Equal to `contour_g(l, a)` for every admissible
/// input; the 1/Γ(l₀) factor is what makes the two routes agree (visible
/// only once l₀ ≥ 3).
pub fn simplex_g(l: &MultiIndex, a: &[f64], tol: Tol) -> Result<f64, RearrangeError> {
    if a.len() != l.entries().len() {
        return Err(RearrangeError::InvalidInput(format!(
            "need {} exponential coefficients, got {}",
            l.entries().len(),
            a.len()
        )));
    }
    if a.iter().any(|&x| !(x > 0.0)) {
        return Err(RearrangeError::InvalidInput(
            "exponential coefficients must be positive".into(),
        ));
    }
    let n = l.n();
    let alpha = l.entries().to_vec();
    let a = a.to_vec();
    let g0 = gamma_half(2 * alpha[0]);
    let res = simplex_integrate(n, tol, move |u| {
        let u0 = 1.0 - u.iter().sum::<f64>();
        let mut b = a[0] * u0;
        for (j, &uj) in u.iter().enumerate() {
            b += a[j + 1] * uj;
        }
        omega_raw(&alpha, u) * (-b).exp()
    })?;
    Ok(res.value / g0)
}

/// Polynomial in the Gaussian variables ξ₁..ξ_m, stored sparsely by exponent
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct XiPoly {
    m: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl XiPoly {
    pub fn zero(m: usize) -> Self {
        XiPoly {
            m,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: usize, c: f64) -> Self {
        let mut p = Self::zero(m);
        p.add_term(&vec![0; m], c);
        p
    }

    pub fn monomial(m: usize, exps: &[u32], c: f64) -> Result<Self, RearrangeError> {
        if exps.len() != m {
            return Err(RearrangeError::InvalidInput(format!(
                "exponent vector length {} ≠ m = {m}",
                exps.len()
            )));
        }
        let mut p = Self::zero(m);
        p.add_term(exps, c);
        Ok(p)
    }

    pub fn add_term(&mut self, exps: &[u32], c: f64) {
        assert_eq!(exps.len(), self.m);
        let e = self.terms.entry(exps.to_vec()).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(exps);
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    fn constant_term(&self) -> f64 {
        self.terms
            .get(&vec![0u32; self.m])
            .copied()
            .unwrap_or(0.0)
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// ∂_i ∂_j applied to the polynomial.
    fn d2(&self, i: usize, j: usize) -> XiPoly {
        let mut out = XiPoly::zero(self.m);
        for (exps, &c) in &self.terms {
            let mut e = exps.clone();
            let fi = e[i];
            if fi == 0 {
                continue;
            }
            e[i] -= 1;
            let fj = e[j];
            if fj == 0 {
                continue;
            }
            e[j] -= 1;
            out.add_term(&e, c * fi as f64 * fj as f64);
        }
        out
    }
}

/// Which of the two independent Gaussian-moment routes to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentRoute {
    /// π^{m/2} det(B)^{-1/2} · exp(¼ Σ (B⁻¹)_{ij} ∂_i∂_j) f |_{ξ=0}.
    OperatorSeries,
    /// Pairing sum with covariance B⁻¹/2 per contracted pair.
    WickPairing,
}

/// ∫_{R^m} e^{-⟨Bξ,ξ⟩} f(ξ) dξ for SPD B and polynomial f.
pub fn gaussian_moment(
    b: &DMatrix<f64>,
    f: &XiPoly,
    route: MomentRoute,
) -> Result<f64, RearrangeError> {
    let m = f.dim();
    check_spd(b, m, "Gaussian quadratic form")?;
    let (inv, det) = inverse_adjugate(b)?;
    let norm = std::f64::consts::PI.powf(m as f64 / 2.0) / det.sqrt();
    match route {
        MomentRoute::OperatorSeries => {
            let mut acc = f.constant_term();
            let mut cur = f.clone();
            let mut kfac = 1.0f64;
            let mut k = 0u32;
            while !cur.is_zero() {
                // One application of ¼ Σ (B⁻¹)_{ij} ∂_i ∂_j.
                let mut next = XiPoly::zero(m);
                for i in 0..m {
                    for j in 0..m {
                        let w = 0.25 * inv[(i, j)];
                        if w == 0.0 {
                            continue;
                        }
                        for (exps, &c) in cur.d2(i, j).terms.iter() {
                            next.add_term(exps, w * c);
                        }
                    }
                }
                k += 1;
                kfac *= f64::from(k);
                acc += next.constant_term() / kfac;
                cur = next;
                if k > 64 {
                    return Err(RearrangeError::InvalidInput(
                        "operator series failed to terminate".into(),
                    ));
                }
            }
            Ok(norm * acc)
        }
        MomentRoute::WickPairing => {
            let mut acc = 0.0;
            for (exps, &c) in f.terms() {
                let total: u32 = exps.iter().sum();
                if total % 2 == 1 {
                    continue;
                }
                let mut flat = Vec::with_capacity(total as usize);
                for (i, &e) in exps.iter().enumerate() {
                    flat.extend(std::iter::repeat(i).take(e as usize));
                }
                acc += c * wick_sum(&flat, &inv);
            }
            Ok(norm * acc)
        }
    }
}

fn wick_sum(indices: &[usize], inv: &DMatrix<f64>) -> f64 {
    if indices.is_empty() {
        return 1.0;
    }
    let first = indices[0];
    let rest = &indices[1..];
    let mut acc = 0.0;
    for (pos, &other) in rest.iter().enumerate() {
        let mut remaining = rest.to_vec();
        remaining.remove(pos);
        acc += 0.5 * inv[(first, other)] * wick_sum(&remaining, inv);
    }
    acc
}

/// The matrix family (A₀, …, A_n) entering a rearrangement integral: SPD,
/// mutually consistent dimensions.
#[derive(Debug, Clone)]
pub struct CoefficientMatrices {
    mats: Vec<DMatrix<f64>>,
}

impl CoefficientMatrices {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self, RearrangeError> {
        if mats.is_empty() {
            return Err(RearrangeError::InvalidInput(
                "need at least the base matrix A₀".into(),
            ));
        }
        let dim = mats[0].nrows();
        for (idx, a) in mats.iter().enumerate() {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(RearrangeError::InvalidInput(format!(
                    "matrix {idx} is {}×{}, expected {dim}×{dim}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            check_spd(a, dim, &format!("coefficient matrix {idx}"))?;
        }
        Ok(CoefficientMatrices { mats })
    }

    pub fn n(&self) -> usize {
        self.mats.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn mats(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    /// Y_l = A_{l-1}⁻¹ A_l for l = 1..=n.
    pub fn y(&self, l: usize) -> Result<DMatrix<f64>, RearrangeError> {
        if l == 0 || l > self.n() {
            return Err(RearrangeError::InvalidInput(format!(
                "Y index {l} out of 1..={}",
                self.n()
            )));
        }
        let (inv, _) = inverse_adjugate(&self.mats[l - 1])?;
        Ok(&inv * &self.mats[l])
    }

    /// Z_l = 1 - A₀⁻¹ A_l for l = 1..=n.
    pub fn z(&self, l: usize) -> Result<DMatrix<f64>, RearrangeError> {
        if l == 0 || l > self.n() {
            return Err(RearrangeError::InvalidInput(format!(
                "Z index {l} out of 1..={}",
                self.n()
            )));
        }
        let (inv, _) = inverse_adjugate(&self.mats[0])?;
        Ok(DMatrix::identity(self.dim(), self.dim()) - &inv * &self.mats[l])
    }

    /// All matrices simultaneously diagonal?
    pub fn is_diagonal_family(&self, tol: f64) -> bool {
        self.mats.iter().all(|a| {
            (0..a.nrows()).all(|i| {
                (0..a.ncols()).all(|j| i == j || a[(i, j)].abs() <= tol)
            })
        })
    }

    /// B(u) = A₀ u₀ + Σ_l A_l u_l at interior coordinates u.
    pub fn b_at(&self, u: &[f64]) -> DMatrix<f64> {
        let u0 = 1.0 - u.iter().sum::<f64>();
        let mut b = &self.mats[0] * u0;
        for (l, &ul) in u.iter().enumerate() {
            b += &self.mats[l + 1] * ul;
        }
        b
    }
}

fn check_spd(a: &DMatrix<f64>, dim: usize, what: &str) -> Result<(), RearrangeError> {
    if a.nrows() != dim || a.ncols() != dim {
        return Err(RearrangeError::InvalidInput(format!(
            "{what}: wrong dimensions"
        )));
    }
    for i in 0..dim {
        for j in 0..dim {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * a[(i, j)].abs().max(1.0) {
                return Err(RearrangeError::InvalidInput(format!(
                    "{what}: not symmetric at ({i},{j})"
                )));
            }
        }
    }
    if nalgebra::Cholesky::new(a.clone()).is_none() {
        return Err(RearrangeError::InvalidInput(format!(
            "{what}: not positive definite"
        )));
    }
    Ok(())
}

/// Determinant by Laplace expansion; intended for the small matrices (m ≤ 6)
/// occurring here.
pub fn det_small(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    match n {
        0 => 1.0,
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        _ => {
            let mut det = 0.0;
            for j in 0..n {
                let minor = a.clone().remove_row(0).remove_column(j);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                det += sign * a[(0, j)] * det_small(&minor);
            }
            det
        }
    }
}

/// Inverse via adjugate over determinant; exact cofactor arithmetic keeps the
/// small-matrix path free of factorization branching.
pub fn inverse_adjugate(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), RearrangeError> {
    let n = a.nrows();
    let det = det_small(a);
    if det == 0.0 || !det.is_finite() {
        return Err(RearrangeError::InvalidInput(
            "matrix is singular within floating-point accuracy".into(),
        ));
    }
    if n == 1 {
        return Ok((DMatrix::from_element(1, 1, 1.0 / det), det));
    }
    let mut inv = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let minor = a.clone().remove_row(j).remove_column(i);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            inv[(i, j)] = sign * det_small(&minor) / det;
        }
    }
    Ok((inv, det))
}

/// Component integral with matrix argument:
/// (1/(4^N N!)) c(m) ∫ ω_α(u) det(B(u))^{-1/2} ∏_r (B(u)⁻¹)_{p_r q_r} du,
/// N = number of pairs.
pub fn f_component(
    alpha: &MultiIndex,
    mats: &CoefficientMatrices,
    pairs: &PairList,
    norm: Normalization,
    tol: Tol,
) -> Result<f64, RearrangeError> {
    f_component_with_diag(alpha, mats, pairs, norm, tol).map(|r| r.value)
}

/// As [`f_component`], returning quadrature diagnostics.
pub fn f_component_with_diag(
    alpha: &MultiIndex,
    mats: &CoefficientMatrices,
    pairs: &PairList,
    norm: Normalization,
    tol: Tol,
) -> Result<QuadResult, RearrangeError> {
    if alpha.n() != mats.n() {
        return Err(RearrangeError::InvalidInput(format!(
            "α has n = {}, matrix family has n = {}",
            alpha.n(),
            mats.n()
        )));
    }
    let m = mats.dim();
    for &(p, q) in pairs.pairs() {
        if p > m || q > m {
            return Err(RearrangeError::InvalidInput(format!(
                "pair ({p},{q}) exceeds dimension {m}"
            )));
        }
    }
    let cap_n = pairs.len() as u32;
    let prefactor = norm.value(m as u32)
        / (4f64.powi(cap_n as i32) * gamma_half(2 * (cap_n + 1)));
    let alpha_e = alpha.entries().to_vec();
    let mats = mats.clone();
    let pair_v: Vec<(usize, usize)> = pairs.pairs().to_vec();
    let mut res = simplex_integrate(alpha.n(), tol, move |u| {
        let b = mats.b_at(u);
        let (inv, det) = match inverse_adjugate(&b) {
            Ok(x) => x,
            Err(_) => return f64::NAN,
        };
        let mut val = omega_raw(&alpha_e, u) / det.sqrt();
        for &(p, q) in &pair_v {
            val *= inv[(p - 1, q - 1)];
        }
        val
    })?;
    res.value *= prefactor;
    res.error *= prefactor.abs();
    Ok(res)
}

/// Scalar component with per-direction modular arguments:
/// c(m) ∫ ω_α(u) ∏_{row=1}^m D_row(u)^{-1/2} ∏_{r} D_{s_r}(u)^{-1} du,
/// where D_row(u) = 1 - Σ_l z[row][l] u_l. The subscript list s̄ must have
/// length N = |α| - j/2 - 1 and the value depends only on its multiset.
pub fn sf_f(
    alpha: &MultiIndex,
    z: &[Vec<f64>],
    s_list: &[usize],
    j: u32,
    norm: Normalization,
    tol: Tol,
) -> Result<f64, RearrangeError> {
    sf_f_with_diag(alpha, z, s_list, j, norm, tol).map(|r| r.value)
}

/// As [`sf_f`], returning quadrature diagnostics.
pub fn sf_f_with_diag(
    alpha: &MultiIndex,
    z: &[Vec<f64>],
    s_list: &[usize],
    j: u32,
    norm: Normalization,
    tol: Tol,
) -> Result<QuadResult, RearrangeError> {
    let m = z.len();
    if m == 0 {
        return Err(RearrangeError::InvalidInput(
            "need at least one modular row".into(),
        ));
    }
    let n = alpha.n();
    for (row, zr) in z.iter().enumerate() {
        if zr.len() != n {
            return Err(RearrangeError::InvalidInput(format!(
                "row {} has {} entries, expected n = {n}",
                row + 1,
                zr.len()
            )));
        }
        // D affine in u: positivity on the closed simplex is equivalent to
        // positivity at the vertices, i.e. every entry < 1.
        if let Some(l) = zr.iter().position(|&zl| zl >= 1.0) {
            return Err(RearrangeError::Domain {
                row: row + 1,
                detail: format!("z[{}][{}] = {} ≥ 1", row + 1, l + 1, zr[l]),
            });
        }
    }
    let need = alpha.pair_count(j)? as usize;
    if s_list.len() != need {
        return Err(RearrangeError::InvalidInput(format!(
            "subscript list has length {}, expected N = {need}",
            s_list.len()
        )));
    }
    if s_list.iter().any(|&s| s == 0 || s > m) {
        return Err(RearrangeError::InvalidInput(format!(
            "subscripts must lie in 1..={m}, got {s_list:?}"
        )));
    }
    let c = norm.value(m as u32);
    let alpha_e = alpha.entries().to_vec();
    let z = z.to_vec();
    let s_list = s_list.to_vec();
    let mut res = simplex_integrate(n, tol, move |u| {
        let mut val = omega_raw(&alpha_e, u);
        let d_row = |row: usize| -> f64 {
            1.0 - z[row].iter().zip(u).map(|(zl, ul)| zl * ul).sum::<f64>()
        };
        for row in 0..z.len() {
            val /= d_row(row).sqrt();
        }
        for &s in &s_list {
            val /= d_row(s - 1);
        }
        val
    })?;
    res.value *= c;
    res.error *= c;
    Ok(res)
}

/// Conformally collapsed component: all m rows share the argument vector z̄,
/// c(m) ∫ ω_α(u) (1 - Σ z_l u_l)^{-(m/2 + |α| - j/2 - 1)} du.
pub fn h_alpha(
    alpha: &MultiIndex,
    z: &[f64],
    m: u32,
    j: u32,
    norm: Normalization,
    tol: Tol,
) -> Result<f64, RearrangeError> {
    h_alpha_with_diag(alpha, z, m, j, norm, tol).map(|r| r.value)
}

/// As [`h_alpha`], returning quadrature diagnostics.
pub fn h_alpha_with_diag(
    alpha: &MultiIndex,
    z: &[f64],
    m: u32,
    j: u32,
    norm: Normalization,
    tol: Tol,
) -> Result<QuadResult, RearrangeError> {
    let n = alpha.n();
    if z.len() != n {
        return Err(RearrangeError::InvalidInput(format!(
            "argument vector has {} entries, expected n = {n}",
            z.len()
        )));
    }
    if let Some(l) = z.iter().position(|&zl| zl >= 1.0) {
        return Err(RearrangeError::Domain {
            row: 1,
            detail: format!("z[{}] = {} ≥ 1", l + 1, z[l]),
        });
    }
    let cap_n = alpha.pair_count(j)?;
    let exponent = f64::from(m) / 2.0 + f64::from(cap_n);
    let c = norm.value(m);
    let alpha_e = alpha.entries().to_vec();
    let z = z.to_vec();
    let mut res = simplex_integrate(n, tol, move |u| {
        let d = 1.0 - z.iter().zip(u).map(|(zl, ul)| zl * ul).sum::<f64>();
        omega_raw(&alpha_e, u) * d.powf(-exponent)
    })?;
    res.value *= c;
    res.error *= c;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::from_slice(e).unwrap()
    }

    #[test]
    fn omega_weight_reference_values() {
        let u = SimplexPoint::new(vec![0.3]).unwrap();
        assert_relative_eq!(
            omega_weight(&mi(&[1, 1]), &u).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            omega_weight(&mi(&[2, 1]), &u).unwrap(),
            0.7,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            omega_weight(&mi(&[1, 2]), &u).unwrap(),
            0.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn omega_integrals_match_dirichlet_closed_forms() {
        let a21 = mi(&[2, 1]);
        let r = simplex_integrate(1, Tol::default(), |u| {
            omega_raw(a21.entries(), u)
        })
        .unwrap();
        assert_relative_eq!(r.value, 0.5, epsilon = 1e-12);

        let a321 = mi(&[3, 2, 1]);
        let r = simplex_integrate(2, Tol::default(), |u| {
            omega_raw(a321.entries(), u)
        })
        .unwrap();
        assert_relative_eq!(r.value, 1.0 / 60.0, epsilon = 1e-12);
    }

    #[test]
    fn simplex_g_reference_values() {
        let g = simplex_g(&mi(&[1]), &[3.0], Tol::default()).unwrap();
        assert_relative_eq!(g, (-3.0f64).exp(), epsilon = 1e-12);
        // The trailing-Γ-only weight plus the explicit 1/Γ(l₀) gives e⁻¹/2
        // here; the contour route confirms.
        let g = simplex_g(&mi(&[2, 1]), &[1.0, 1.0], Tol::default()).unwrap();
        assert_relative_eq!(g, 0.5 * (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn simplex_route_agrees_with_contour_route() {
        let cases: Vec<(Vec<u32>, Vec<f64>)> = vec![
            (vec![1, 1], vec![1.0, 2.0]),
            (vec![3, 1], vec![0.7, 2.1]),
            (vec![2, 2, 1], vec![0.5, 1.1, 3.0]),
            (vec![4, 1], vec![1.0, 1.0]),
            (vec![1, 1, 1, 2], vec![0.6, 1.2, 2.4, 3.6]),
        ];
        for (l, a) in cases {
            let li = mi(&l);
            let s = simplex_g(&li, &a, Tol::new(1e-12, 1e-12)).unwrap();
            let c = contour_g(&l, &a, 1e-10).unwrap();
            assert!(
                (s - c).abs() <= 1e-8 * c.abs().max(1e-8),
                "l={l:?} a={a:?}: simplex {s} vs contour {c}"
            );
        }
    }

    #[test]
    fn gaussian_moment_reference_values() {
        let b = DMatrix::from_element(1, 1, 1.0);
        let one = XiPoly::constant(1, 1.0);
        let sq = XiPoly::monomial(1, &[2], 1.0).unwrap();
        let odd = XiPoly::monomial(1, &[3], 1.0).unwrap();
        let pi_sqrt = std::f64::consts::PI.sqrt();
        for route in [MomentRoute::OperatorSeries, MomentRoute::WickPairing] {
            assert_relative_eq!(
                gaussian_moment(&b, &one, route).unwrap(),
                pi_sqrt,
                epsilon = 1e-14
            );
            assert_relative_eq!(
                gaussian_moment(&b, &sq, route).unwrap(),
                pi_sqrt / 2.0,
                epsilon = 1e-14
            );
            assert_eq!(gaussian_moment(&b, &odd, route).unwrap(), 0.0);
        }
    }

    #[test]
    fn gaussian_moment_routes_agree_on_anisotropic_forms() {
        let b = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 3.0]);
        let mut f = XiPoly::zero(3);
        f.add_term(&[2, 1, 1], 0.7);
        f.add_term(&[0, 4, 0], -1.3);
        f.add_term(&[1, 1, 0], 2.0);
        f.add_term(&[0, 0, 0], 0.25);
        f.add_term(&[2, 2, 2], 0.11);
        let a = gaussian_moment(&b, &f, MomentRoute::OperatorSeries).unwrap();
        let w = gaussian_moment(&b, &f, MomentRoute::WickPairing).unwrap();
        assert_relative_eq!(a, w, epsilon = 1e-12, max_relative = 1e-12);
    }

    #[test]
    fn f_component_reference_values() {
        let eye2 = DMatrix::<f64>::identity(2, 2);
        let mats = CoefficientMatrices::new(vec![eye2.clone(), eye2.clone()]).unwrap();
        let v = f_component(
            &mi(&[1, 1]),
            &mats,
            &PairList::empty(),
            Normalization::GaussTwoPi,
            Tol::default(),
        )
        .unwrap();
        assert_relative_eq!(v, 2.0 * std::f64::consts::PI, epsilon = 1e-9);

        for m in [2usize, 3] {
            let eye = DMatrix::<f64>::identity(m, m);
            let mats = CoefficientMatrices::new(vec![eye.clone(), eye.clone()]).unwrap();
            let v = f_component(
                &mi(&[2, 1]),
                &mats,
                &PairList::empty(),
                Normalization::GaussTwoPi,
                Tol::default(),
            )
            .unwrap();
            let expect = (2.0 * std::f64::consts::PI).powf(m as f64 / 2.0) / 2.0;
            assert_relative_eq!(v, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn off_diagonal_pair_vanishes_for_diagonal_family() {
        let a0 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let a1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.5, 0.7]));
        let mats = CoefficientMatrices::new(vec![a0, a1]).unwrap();
        assert!(mats.is_diagonal_family(0.0));
        let v = f_component(
            &mi(&[2, 1]),
            &mats,
            &PairList::new(vec![(1, 2)], 2).unwrap(),
            Normalization::GaussTwoPi,
            Tol::default(),
        )
        .unwrap();
        assert!(v.abs() < 1e-12, "got {v}");
    }

    #[test]
    fn f_component_matches_scalar_component_for_diagonal_family() {
        // Diagonal family: k^(0) = (1.0, 2.0), k^(1) = (0.8, 1.1) so
        // z rows are z_j = 1 - k_j^(1)/k_j^(0).
        let k0 = [1.0, 2.0];
        let k1 = [0.8, 1.1];
        let a0 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(k0.to_vec()));
        let a1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(k1.to_vec()));
        let mats = CoefficientMatrices::new(vec![a0, a1]).unwrap();
        let alpha = mi(&[2, 1]); // N = 1, one pair
        let z: Vec<Vec<f64>> = (0..2).map(|j| vec![1.0 - k1[j] / k0[j]]).collect();
        for s in 1..=2usize {
            let f = f_component(
                &alpha,
                &mats,
                &PairList::new(vec![(s, s)], 2).unwrap(),
                Normalization::GaussTwoPi,
                Tol::new(1e-12, 1e-12),
            )
            .unwrap();
            let sf = sf_f(
                &alpha,
                &z,
                &[s],
                2,
                Normalization::GaussTwoPi,
                Tol::new(1e-12, 1e-12),
            )
            .unwrap();
            let det_a0: f64 = k0.iter().product();
            let expect = sf / (4.0 * det_a0.sqrt() * k0[s - 1]);
            assert_relative_eq!(f, expect, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn sf_f_scalar_case_and_symmetry() {
        // m = 1, α = (1,1), z = 0.5: c(1) ∫₀¹ (1-0.5u)^{-1/2} du.
        let alpha = mi(&[1, 1]);
        let v = sf_f(
            &alpha,
            &[vec![0.5]],
            &[],
            2,
            Normalization::GaussTwoPi,
            Tol::default(),
        )
        .unwrap();
        let z = 0.5f64;
        let integral = 2.0 * (1.0 - (1.0 - z).sqrt()) / z;
        let c1 = (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(v, c1 * integral, epsilon = 1e-10);

        // Subscript permutation symmetry.
        let alpha = mi(&[3, 1, 1]); // N = 3
        let z = vec![vec![0.2, -0.4], vec![-0.1, 0.3], vec![0.5, 0.1]];
        let a = sf_f(&alpha, &z, &[1, 2, 3], 2, Normalization::GaussTwoPi, Tol::default())
            .unwrap();
        let b = sf_f(&alpha, &z, &[3, 1, 2], 2, Normalization::GaussTwoPi, Tol::default())
            .unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn sf_f_domain_error_names_offending_row() {
        let alpha = mi(&[1, 1]);
        let err = sf_f(
            &alpha,
            &[vec![0.3], vec![1.2]],
            &[],
            2,
            Normalization::GaussTwoPi,
            Tol::default(),
        )
        .unwrap_err();
        match err {
            RearrangeError::Domain { row, .. } => assert_eq!(row, 2),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn h_alpha_reference_values() {
        for m in [2u32, 3] {
            let v = h_alpha(
                &mi(&[1, 1]),
                &[0.0],
                m,
                2,
                Normalization::GaussTwoPi,
                Tol::default(),
            )
            .unwrap();
            let expect = (2.0 * std::f64::consts::PI).powf(f64::from(m) / 2.0);
            assert_relative_eq!(v, expect, epsilon = 1e-9);
        }
        // m = 2: c ∫ (1-zu)^{-1} du = 2π (-log(1-z))/z at z = 1/2.
        let v = h_alpha(
            &mi(&[1, 1]),
            &[0.5],
            2,
            2,
            Normalization::GaussTwoPi,
            Tol::default(),
        )
        .unwrap();
        let expect = 2.0 * std::f64::consts::PI * (-(0.5f64).ln()) / 0.5;
        assert_relative_eq!(v, expect, epsilon = 1e-9);
        assert!((v - 8.7106).abs() < 1e-3);
        // α = (2,1) at z = 0: c(m) Γ(α₀)/Γ(|α|) = c/2 at m = 2, i.e. π.
        let v = h_alpha(
            &mi(&[2, 1]),
            &[0.0],
            2,
            2,
            Normalization::GaussTwoPi,
            Tol::default(),
        )
        .unwrap();
        assert_relative_eq!(v, std::f64::consts::PI, epsilon = 1e-9);
    }

    #[test]
    fn h_alpha_agrees_with_conformal_sf_f() {
        let alpha = mi(&[2, 1, 1]); // N = 2
        let zbar = [0.3, -0.6];
        let m = 3usize;
        let z_rows: Vec<Vec<f64>> = (0..m).map(|_| zbar.to_vec()).collect();
        // Any subscript assignment gives the same conformal collapse.
        let sf = sf_f(
            &alpha,
            &z_rows,
            &[1, 3],
            2,
            Normalization::GaussTwoPi,
            Tol::new(1e-12, 1e-12),
        )
        .unwrap();
        let h = h_alpha(
            &alpha,
            &zbar,
            m as u32,
            2,
            Normalization::GaussTwoPi,
            Tol::new(1e-12, 1e-12),
        )
        .unwrap();
        assert_relative_eq!(sf, h, epsilon = 1e-9, max_relative = 1e-9);
    }

    #[test]
    fn h_11_increasing_on_unit_interval() {
        let mut prev = f64::MIN;
        for k in 0..40 {
            let z = -0.5 + 1.45 * (k as f64) / 40.0; // sweep into (0,1)
            let v = h_alpha(
                &mi(&[1, 1]),
                &[z],
                2,
                2,
                Normalization::GaussTwoPi,
                Tol::default(),
            )
            .unwrap();
            assert!(v > prev, "H_(1,1) not increasing at z = {z}");
            prev = v;
        }
    }

    #[test]
    fn normalization_values() {
        assert_relative_eq!(
            Normalization::GaussPi.value(2),
            std::f64::consts::PI,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            Normalization::GaussTwoPi.value(2),
            2.0 * std::f64::consts::PI,
            epsilon = 1e-15
        );
        assert_eq!(Normalization::One.value(5), 1.0);
    }

    #[test]
    fn multi_index_invariants() {
        let a = mi(&[3, 1, 1]);
        assert_eq!(a.order(), 5);
        assert_eq!(a.n(), 2);
        assert_eq!(a.pair_count(2).unwrap(), 3);
        assert!(MultiIndex::new(vec![]).is_err());
        assert!(MultiIndex::new(vec![1, 0]).is_err());
        assert!(a.pair_count(3).is_err());
    }

    #[test]
    fn pair_list_canonicalization() {
        let p = PairList::new(vec![(2, 1), (1, 1)], 2).unwrap();
        assert_eq!(p.pairs(), &[(1, 1), (1, 2)]);
        assert!(PairList::new(vec![(0, 1)], 2).is_err());
        assert!(PairList::new(vec![(1, 3)], 2).is_err());
    }

    #[test]
    fn adjugate_inverse_matches_identity() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.8, -0.2, 0.1, -0.2, 2.5]);
        let (inv, det) = inverse_adjugate(&a).unwrap();
        let prod = &a * &inv;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - expect).abs() < 1e-13);
            }
        }
        assert!((det - det_small(&a)).abs() < 1e-13);
    }
}
