//! Simplex quadrature: Grundmann–Möller rules plus an adaptive subdivision
//! driver.
//!
//! All integrals are over the standard n-simplex Δⁿ = {u ∈ Rⁿ : u_l ≥ 0,
//! Σu_l ≤ 1} in interior coordinates u₁..u_n; the dependent barycentric
//! coordinate is u₀ = 1 − Σu_l. Rules are validated against exact Dirichlet
//! moments ∫ ∏ u_l^{β_l} du = ∏ β_l! / (n + |β|)!.

use super::RearrangeError;
use crate::exact::factorial;

/// A point of the standard simplex in interior coordinates.
///
/// Invariant: all coordinates nonnegative with sum ≤ 1 (up to a small slack
/// so that mapped quadrature nodes on the boundary stay admissible).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    u: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(u: Vec<f64>) -> Result<Self, RearrangeError> {
        let sum: f64 = u.iter().sum();
        if u.iter().any(|&x| !(x >= -1e-14)) || sum > 1.0 + 1e-12 {
            return Err(RearrangeError::InvalidInput(format!(
                "point {u:?} lies outside the closed simplex"
            )));
        }
        Ok(SimplexPoint { u })
    }

    pub fn coords(&self) -> &[f64] {
        &self.u
    }

    /// The dependent coordinate u₀ = 1 − Σ u_l.
    pub fn u0(&self) -> f64 {
        1.0 - self.u.iter().sum::<f64>()
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }
}

/// Interpolatory rule on the standard simplex.
///
/// Weights sum to the simplex volume 1/n! and the rule integrates all
/// monomials of total degree ≤ `degree` exactly (both facts are enforced by
/// [`QuadratureRule::validate`]).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub dim: usize,
    pub degree: u32,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Grundmann–Möller rule of degree 2s+1 on the n-simplex.
    pub fn grundmann_moller(n: usize, s: u32) -> Self {
        let d = 2 * s + 1;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let two_pow = (2f64).powi(2 * s as i32);
        for i in 0..=s {
            let scale = f64::from(d + n as u32 - 2 * i);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let w = sign * scale.powi(d as i32)
                / (two_pow
                    * bigfac(i)
                    * bigfac(d + n as u32 - i));
            for k in compositions(s - i, n + 1) {
                // Barycentric node (2k_j + 1)/scale; drop the 0th coordinate.
                let node: Vec<f64> = k[1..]
                    .iter()
                    .map(|&kj| f64::from(2 * kj + 1) / scale)
                    .collect();
                nodes.push(node);
                weights.push(w);
            }
        }
        QuadratureRule {
            dim: n,
            degree: d,
            nodes,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Apply the rule on the standard simplex.
    pub fn apply<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, &w)| w * f(x))
            .sum()
    }

    /// Check the weight sum against 1/n! and the rule against every exact
    /// Dirichlet moment of degree ≤ `degree`; returns the largest absolute
    /// moment error.
    pub fn validate(&self) -> Result<f64, RearrangeError> {
        let vol = 1.0 / bigfac(self.dim as u32);
        let wsum: f64 = self.weights.iter().sum();
        if (wsum - vol).abs() > 1e-12 {
            return Err(RearrangeError::InvalidInput(format!(
                "rule weights sum to {wsum}, expected simplex volume {vol}"
            )));
        }
        let mut worst = 0f64;
        for beta in monomials_up_to(self.dim, self.degree) {
            let exact = dirichlet_moment(&beta);
            let approx = self.apply(|u| {
                beta.iter()
                    .zip(u)
                    .map(|(&b, &x)| x.powi(b as i32))
                    .product()
            });
            worst = worst.max((approx - exact).abs());
        }
        Ok(worst)
    }
}

fn bigfac(n: u32) -> f64 {
    crate::exact::rat_to_f64(&num_rational::BigRational::from_integer(factorial(n)))
}

/// ∫_{Δⁿ} ∏ u_l^{β_l} du = ∏ β_l! / (n + |β|)! with n = β.len().
pub fn dirichlet_moment(beta: &[u32]) -> f64 {
    let n = beta.len() as u32;
    let total: u32 = beta.iter().sum();
    let num: f64 = beta.iter().map(|&b| bigfac(b)).product();
    num / bigfac(n + total)
}

/// All k ∈ N₀^parts with Σk = total.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; parts];
    fn rec(total: u32, idx: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if idx + 1 == cur.len() {
            cur[idx] = total;
            out.push(cur.clone());
            return;
        }
        for v in 0..=total {
            cur[idx] = v;
            rec(total - v, idx + 1, cur, out);
        }
    }
    if parts == 0 {
        return out;
    }
    rec(total, 0, &mut cur, &mut out);
    out
}

/// All exponent vectors of total degree ≤ `deg` in `n` variables.
fn monomials_up_to(n: usize, deg: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 0..=deg {
        for c in compositions(d, n + 1) {
            out.push(c[..n].to_vec());
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Absolute/relative tolerance pair; an estimate e for value v is accepted
/// when e ≤ max(abs, rel·|v|).
#[derive(Debug, Clone, Copy)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tol {
    fn default() -> Self {
        Tol {
            abs: 1e-10,
            rel: 1e-10,
        }
    }
}

impl Tol {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tol { abs, rel }
    }

    pub fn accepts(&self, value: f64, err: f64) -> bool {
        err <= self.abs.max(self.rel * value.abs())
    }
}

/// Diagnostics for the least-converged subregion of an adaptive run.
#[derive(Debug, Clone)]
pub struct RegionDiag {
    pub vertices: Vec<Vec<f64>>,
    pub error: f64,
    pub depth: u32,
}

/// Result of an adaptive simplex integration.
#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: f64,
    /// Conservative absolute error estimate.
    pub error: f64,
    pub evals: usize,
    pub regions: usize,
    pub worst: Option<RegionDiag>,
}

struct Region {
    vertices: Vec<Vec<f64>>,
    value: f64,
    error: f64,
    depth: u32,
}

// Subdivision stops growing past these caps; running into them with the
// tolerance unmet is reported as a failure carrying the worst region.
const MAX_REGIONS: usize = 40_000;
const MAX_DEPTH: u32 = 60;

/// Adaptive integration of a smooth function over the standard n-simplex.
///
/// Uses embedded Grundmann–Möller rules (degrees 9 and 7) and longest-edge
/// bisection of the worst subregion. The returned error estimate is the sum
/// of per-region rule differences.
pub fn simplex_integrate<F>(n: usize, tol: Tol, f: F) -> Result<QuadResult, RearrangeError>
where
    F: Fn(&[f64]) -> f64,
{
    if n == 0 {
        let value = f(&[]);
        return Ok(QuadResult {
            value,
            error: 0.0,
            evals: 1,
            regions: 1,
            worst: None,
        });
    }
    let hi = QuadratureRule::grundmann_moller(n, 4);
    let lo = QuadratureRule::grundmann_moller(n, 3);
    let mut evals = 0usize;

    let eval_region = |vertices: &[Vec<f64>], evals: &mut usize| -> (f64, f64) {
        // Affine map u ↦ v0 + M u, M columns v_j − v0.
        let v0 = &vertices[0];
        let mut det = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 1..=n {
            for i in 0..n {
                det[(i, j - 1)] = vertices[j][i] - v0[i];
            }
        }
        let jac = det.determinant().abs();
        let mut x = vec![0f64; n];
        let mut apply = |rule: &QuadratureRule, evals: &mut usize| -> f64 {
            let mut acc = 0f64;
            for (node, &w) in rule.nodes.iter().zip(&rule.weights) {
                for i in 0..n {
                    x[i] = v0[i];
                    for (j, &nj) in node.iter().enumerate() {
                        x[i] += (vertices[j + 1][i] - v0[i]) * nj;
                    }
                }
                acc += w * f(&x);
                *evals += 1;
            }
            acc * jac
        };
        let vhi = apply(&hi, evals);
        let vlo = apply(&lo, evals);
        (vhi, (vhi - vlo).abs())
    };

    let unit: Vec<Vec<f64>> = std::iter::once(vec![0f64; n])
        .chain((0..n).map(|j| {
            let mut v = vec![0f64; n];
            v[j] = 1.0;
            v
        }))
        .collect();
    let (v, e) = eval_region(&unit, &mut evals);
    let mut regions = vec![Region {
        vertices: unit,
        value: v,
        error: e,
        depth: 0,
    }];

    loop {
        let value: f64 = regions.iter().map(|r| r.value).sum();
        let error: f64 = regions.iter().map(|r| r.error).sum();
        if tol.accepts(value, error) {
            let worst = regions
                .iter()
                .max_by(|a, b| a.error.total_cmp(&b.error))
                .map(|r| RegionDiag {
                    vertices: r.vertices.clone(),
                    error: r.error,
                    depth: r.depth,
                });
            return Ok(QuadResult {
                value,
                error,
                evals,
                regions: regions.len(),
                worst,
            });
        }
        let worst_idx = regions
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .map(|(i, _)| i)
            .expect("at least one region");
        if regions.len() >= MAX_REGIONS || regions[worst_idx].depth >= MAX_DEPTH {
            let r = &regions[worst_idx];
            return Err(RearrangeError::QuadratureFailure {
                value,
                achieved: error,
                requested: tol.abs.max(tol.rel * value.abs()),
                worst: RegionDiag {
                    vertices: r.vertices.clone(),
                    error: r.error,
                    depth: r.depth,
                },
            });
        }
        let old = regions.swap_remove(worst_idx);
        // Longest-edge bisection keeps simplices well-shaped.
        let (mut bi, mut bj, mut best) = (0, 1, -1f64);
        for i in 0..old.vertices.len() {
            for j in (i + 1)..old.vertices.len() {
                let d2: f64 = old.vertices[i]
                    .iter()
                    .zip(&old.vertices[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 > best {
                    best = d2;
                    bi = i;
                    bj = j;
                }
            }
        }
        let mid: Vec<f64> = old.vertices[bi]
            .iter()
            .zip(&old.vertices[bj])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        for replace in [bi, bj] {
            let mut verts = old.vertices.clone();
            verts[replace] = mid.clone();
            let (v, e) = eval_region(&verts, &mut evals);
            regions.push(Region {
                vertices: verts,
                value: v,
                error: e,
                depth: old.depth + 1,
            });
        }
    }
}
