//! Oscillatory contour integrals of resolvent-type products.
//!
//! `contour_g` evaluates (1/2π) ∫_R e^{-ix} ∏_j (A_j - ix)^{-l_j} dx for
//! positive weights l and positive A. By conjugate symmetry this equals
//! (1/π) Re ∫_0^∞; the finite part is done with composite Gauss–Legendre
//! panels and the oscillatory tail with an integration-by-parts series whose
//! remainder is bounded analytically (the integrand decays like |x|^{-|l|}).

use super::RearrangeError;
use num_complex::Complex64;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0f64; n];
    let mut weights = vec![0f64; n];
    for k in 0..n {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_p(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_p(n, x);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x).
fn legendre_p(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn validate(l: &[u32], a: &[f64]) -> Result<(), RearrangeError> {
    if l.is_empty() || l.len() != a.len() {
        return Err(RearrangeError::InvalidInput(format!(
            "weight/pole lists must be nonempty and equal length, got {} and {}",
            l.len(),
            a.len()
        )));
    }
    if l.iter().any(|&lj| lj == 0) {
        return Err(RearrangeError::InvalidInput(
            "all resolvent multiplicities must be ≥ 1".into(),
        ));
    }
    if a.iter().any(|&aj| !(aj > 0.0)) {
        return Err(RearrangeError::InvalidInput(
            "all pole positions must be strictly positive".into(),
        ));
    }
    Ok(())
}

fn integrand(l: &[u32], a: &[f64], x: f64) -> Complex64 {
    let mut f = Complex64::new(1.0, 0.0);
    for (&lj, &aj) in l.iter().zip(a) {
        f *= Complex64::new(aj, -x).powi(-(lj as i32));
    }
    Complex64::from_polar(1.0, -x) * f
}

/// Taylor coefficients of F(x) = ∏ (A_j - ix)^{-l_j} at x0, orders 0..=kmax.
fn taylor_at(l: &[u32], a: &[f64], x0: f64, kmax: usize) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); kmax + 1];
    acc[0] = Complex64::new(1.0, 0.0);
    for (&lj, &aj) in l.iter().zip(a) {
        let c = Complex64::new(aj, -x0);
        // (A - i(x0+h))^{-l} = c^{-l} Σ_k C(l+k-1, k) (i/c)^k h^k.
        let mut fac = vec![Complex64::new(0.0, 0.0); kmax + 1];
        let base = c.powi(-(lj as i32));
        let ratio = Complex64::new(0.0, 1.0) / c;
        let mut binom = 1.0f64;
        let mut pw = Complex64::new(1.0, 0.0);
        for (k, slot) in fac.iter_mut().enumerate() {
            if k > 0 {
                binom *= (lj as f64 + k as f64 - 1.0) / k as f64;
                pw *= ratio;
            }
            *slot = base * binom * pw;
        }
        let mut next = vec![Complex64::new(0.0, 0.0); kmax + 1];
        for (i, &ai) in acc.iter().enumerate() {
            for (j, &fj) in fac.iter().enumerate() {
                if i + j <= kmax {
                    next[i + j] += ai * fj;
                }
            }
        }
        acc = next;
    }
    acc
}

/// Tail ∫_X^∞ e^{-ix} F(x) dx by the integration-by-parts series, plus a
/// rigorous remainder bound.
fn tail(l: &[u32], a: &[f64], x0: f64, kterms: usize) -> (Complex64, f64) {
    let coeffs = taylor_at(l, a, x0, kterms);
    let phase = Complex64::from_polar(1.0, -x0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut kfac = 1.0f64;
    let mut mi_pow = Complex64::new(1.0, 0.0); // (-i)^k
    for (k, &ck) in coeffs.iter().enumerate().take(kterms) {
        if k > 0 {
            kfac *= k as f64;
            mi_pow *= Complex64::new(0.0, -1.0);
        }
        sum += mi_pow * ck * kfac;
    }
    let t = Complex64::new(0.0, -1.0) * phase * sum;
    // |F^(K)(x)| ≤ K! C(|l|+K-1, K) x^{-|l|-K}, so the dropped remainder is
    // bounded by K! C(|l|+K-1, K) X^{1-|l|-K} / (|l|+K-1).
    let total: u32 = l.iter().sum();
    let kk = kterms as f64;
    let mut bound = 1.0f64;
    for k in 1..=kterms {
        bound *= k as f64; // K!
        bound *= (total as f64 + k as f64 - 1.0) / k as f64; // binomial factor
    }
    bound *= x0.powf(1.0 - total as f64 - kk) / (total as f64 + kk - 1.0);
    (t, bound)
}

/// (1/2π) ∫_R e^{-ix} ∏ (A_j - ix)^{-l_j} dx to the requested relative
/// tolerance, with an honest error estimate returned alongside the value.
pub fn contour_g_with_error(
    l: &[u32],
    a: &[f64],
    rel_tol: f64,
) -> Result<(f64, f64), RearrangeError> {
    validate(l, a)?;
    let kterms = 12usize;
    let mut x_end = 40.0f64;
    let (g16n, g16w) = gauss_legendre(16);
    let (g24n, g24w) = gauss_legendre(24);

    for _round in 0..8 {
        let (tail_val, tail_bound) = tail(l, a, x_end, kterms);
        let mut panels = (x_end / std::f64::consts::PI).ceil() as usize;
        let mut prev: Option<Complex64> = None;
        for _refine in 0..8 {
            let mut acc = Complex64::new(0.0, 0.0);
            let h = x_end / panels as f64;
            for p in 0..panels {
                let lo = p as f64 * h;
                let (nodes, weights): (&[f64], &[f64]) = if prev.is_none() {
                    (&g16n, &g16w)
                } else {
                    (&g24n, &g24w)
                };
                for (t, w) in nodes.iter().zip(weights) {
                    let x = lo + 0.5 * h * (t + 1.0);
                    acc += integrand(l, a, x) * (0.5 * h * w);
                }
            }
            if let Some(last) = prev {
                let total = acc + tail_val;
                let value = total.re / std::f64::consts::PI;
                let quad_err = (acc - last).norm() / std::f64::consts::PI;
                let err = quad_err + tail_bound / std::f64::consts::PI;
                if err <= rel_tol * value.abs().max(1e-300) {
                    return Ok((value, err));
                }
                if tail_bound / std::f64::consts::PI > 0.5 * rel_tol * value.abs() {
                    break; // grow the finite interval instead
                }
            }
            prev = Some(acc);
            panels *= 2;
        }
        x_end *= 1.7;
    }
    Err(RearrangeError::InvalidInput(format!(
        "contour integral for l={l:?}, A={a:?} failed to converge to rel tol {rel_tol}"
    )))
}

/// Value-only variant of [`contour_g_with_error`].
pub fn contour_g(l: &[u32], a: &[f64], rel_tol: f64) -> Result<f64, RearrangeError> {
    contour_g_with_error(l, a, rel_tol).map(|(v, _)| v)
}

/// Divided difference of e^{-x} over the node list `a_j` repeated `l_j`
/// times, with the sign (-1)^(M-1), M = Σ l_j. This closed form equals
/// `contour_g` and serves as its independent oracle.
pub fn exp_divided_difference(l: &[u32], a: &[f64]) -> Result<f64, RearrangeError> {
    validate(l, a)?;
    let mut nodes = Vec::new();
    for (&lj, &aj) in l.iter().zip(a) {
        nodes.extend(std::iter::repeat(aj).take(lj as usize));
    }
    // Confluent (Hermite) divided-difference table; repeated nodes use
    // f^(k)(a)/k! with f = e^{-x}.
    nodes.sort_by(f64::total_cmp);
    let m = nodes.len();
    let mut col: Vec<f64> = nodes.iter().map(|&x| (-x).exp()).collect();
    let mut table = vec![col.clone()];
    for order in 1..m {
        let mut next = vec![0f64; m - order];
        for i in 0..m - order {
            let x_hi = nodes[i + order];
            let x_lo = nodes[i];
            if (x_hi - x_lo).abs() < 1e-13 {
                // All nodes in the span coincide: f^(order)(x)/order!.
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                next[i] = sign * (-x_lo).exp()
                    / crate::exact::rat_to_f64(&num_rational::BigRational::from_integer(
                        crate::exact::factorial(order as u32),
                    ));
            } else {
                next[i] = (table[order - 1][i + 1] - table[order - 1][i]) / (x_hi - x_lo);
            }
        }
        table.push(next.clone());
        col = next;
    }
    let dd = col[0];
    let sign = if (m - 1) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * dd)
}
