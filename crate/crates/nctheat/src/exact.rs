//! Exact arithmetic used by the symbolic layers.
//!
//! The symbol calculus and the heat-coefficient tables are exact: term
//! coefficients live in the Gaussian rationals Q(i), and coefficients of the
//! conformally reduced heat coefficient are polynomials in the dimension
//! variable with rational coefficients. Nothing in this module rounds.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub};
use std::str::FromStr;

/// Exact rational number.
pub type Rat = BigRational;

/// Rational from an integer pair, panicking on zero denominator.
pub fn rat(num: i64, den: i64) -> Rat {
    assert!(den != 0, "zero denominator");
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Rational from an integer.
pub fn rint(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Exact factorial.
pub fn factorial(n: u32) -> BigInt {
    (1..=u64::from(n)).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Exact binomial coefficient.
pub fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for j in 0..k {
        num *= BigInt::from(n - j);
        den *= BigInt::from(j + 1);
    }
    num / den
}

/// Gamma function at half-integer arguments, exactly.
///
/// `HalfGamma { q, sqrt_pi }` represents `q * pi^(1/2)` when `sqrt_pi` is
/// true, else `q`. Defined for positive `two_x` (the argument is `two_x/2`).
#[derive(Debug, Clone, PartialEq)]
pub struct HalfGamma {
    pub q: Rat,
    pub sqrt_pi: bool,
}

/// Exact Γ(two_x / 2) for two_x ≥ 1.
pub fn gamma_half_exact(two_x: u32) -> HalfGamma {
    assert!(two_x >= 1, "gamma argument must be positive");
    if two_x % 2 == 0 {
        HalfGamma {
            q: Rat::from_integer(factorial(two_x / 2 - 1)),
            sqrt_pi: false,
        }
    } else {
        // Γ(1/2) = √π; Γ(x+1) = xΓ(x) climbs in integer steps of the doubled
        // argument.
        let mut q = Rat::one();
        let mut t = 1;
        while t < two_x {
            q *= rat(i64::from(t), 2);
            t += 2;
        }
        HalfGamma { q, sqrt_pi: true }
    }
}

/// Γ(two_x / 2) as a float.
pub fn gamma_half(two_x: u32) -> f64 {
    let g = gamma_half_exact(two_x);
    let q = rat_to_f64(&g.q);
    if g.sqrt_pi {
        q * std::f64::consts::PI.sqrt()
    } else {
        q
    }
}

/// Lossy conversion of an exact rational to a float.
pub fn rat_to_f64(r: &Rat) -> f64 {
    // String round-trip keeps this dependency-free; magnitudes stay small.
    let num = r.numer();
    let den = r.denom();
    bigint_to_f64(num) / bigint_to_f64(den)
}

fn bigint_to_f64(n: &BigInt) -> f64 {
    n.to_string().parse::<f64>().expect("bigint parses as f64")
}

/// Gaussian rational: an exact element of Q(i).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CRat {
    pub re: Rat,
    pub im: Rat,
}

impl CRat {
    pub fn zero() -> Self {
        CRat {
            re: Rat::zero(),
            im: Rat::zero(),
        }
    }

    pub fn one() -> Self {
        CRat {
            re: Rat::one(),
            im: Rat::zero(),
        }
    }

    pub fn i() -> Self {
        CRat {
            re: Rat::zero(),
            im: Rat::one(),
        }
    }

    pub fn from_rat(r: Rat) -> Self {
        CRat {
            re: r,
            im: Rat::zero(),
        }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rat(rint(n))
    }

    /// `num/den`, real.
    pub fn real(num: i64, den: i64) -> Self {
        Self::from_rat(rat(num, den))
    }

    /// `(num/den) i`, purely imaginary.
    pub fn imag(num: i64, den: i64) -> Self {
        CRat {
            re: Rat::zero(),
            im: rat(num, den),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        CRat {
            re: self.re.clone(),
            im: -self.im.clone(),
        }
    }

    pub fn scale(&self, r: &Rat) -> Self {
        CRat {
            re: &self.re * r,
            im: &self.im * r,
        }
    }

    pub fn to_complex_f64(&self) -> (f64, f64) {
        (rat_to_f64(&self.re), rat_to_f64(&self.im))
    }
}

impl Add for CRat {
    type Output = CRat;
    fn add(self, rhs: CRat) -> CRat {
        CRat {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

impl AddAssign for CRat {
    fn add_assign(&mut self, rhs: CRat) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl Sub for CRat {
    type Output = CRat;
    fn sub(self, rhs: CRat) -> CRat {
        CRat {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

impl Neg for CRat {
    type Output = CRat;
    fn neg(self) -> CRat {
        CRat {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl Mul for CRat {
    type Output = CRat;
    fn mul(self, rhs: CRat) -> CRat {
        &self * &rhs
    }
}

impl Mul for &CRat {
    type Output = CRat;
    fn mul(self, rhs: &CRat) -> CRat {
        CRat {
            re: &self.re * &rhs.re - &self.im * &rhs.im,
            im: &self.re * &rhs.im + &self.im * &rhs.re,
        }
    }
}

impl MulAssign for CRat {
    fn mul_assign(&mut self, rhs: CRat) {
        let p = &*self * &rhs;
        *self = p;
    }
}

impl fmt::Display for CRat {
    /// `a/b` when real, `a/b+c/di` (or `a/b-c/di`) otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            return write!(f, "{}", self.re);
        }
        if self.im.is_negative() {
            write!(f, "{}-{}i", self.re, -self.im.clone())
        } else {
            write!(f, "{}+{}i", self.re, self.im)
        }
    }
}

/// Parse error for exact scalars.
#[derive(Debug, thiserror::Error)]
#[error("invalid exact scalar `{0}`")]
pub struct ParseExactError(String);

impl FromStr for CRat {
    type Err = ParseExactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseExactError(s.to_string());
        let s = s.trim();
        if let Some(body) = s.strip_suffix('i') {
            // Split re and im at the last +/- that is not a leading sign and
            // not inside a fraction.
            let bytes = body.as_bytes();
            let mut split = None;
            for idx in (1..bytes.len()).rev() {
                if (bytes[idx] == b'+' || bytes[idx] == b'-') && bytes[idx - 1] != b'/' {
                    split = Some(idx);
                    break;
                }
            }
            let idx = split.ok_or_else(bad)?;
            let re = Rat::from_str(&body[..idx]).map_err(|_| bad())?;
            let sign = if bytes[idx] == b'-' { -Rat::one() } else { Rat::one() };
            let im = Rat::from_str(&body[idx + 1..]).map_err(|_| bad())? * sign;
            Ok(CRat { re, im })
        } else {
            Ok(CRat {
                re: Rat::from_str(s).map_err(|_| bad())?,
                im: Rat::zero(),
            })
        }
    }
}

impl serde::Serialize for CRat {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for CRat {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Polynomial in the dimension variable m with exact rational coefficients.
///
/// Stored dense in ascending powers; the representation is normalized so the
/// leading stored coefficient is nonzero (zero polynomial stores nothing).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MPoly {
    coeffs: Vec<Rat>,
}

impl MPoly {
    pub fn zero() -> Self {
        MPoly { coeffs: vec![] }
    }

    pub fn constant(c: Rat) -> Self {
        MPoly { coeffs: vec![c] }.normalized()
    }

    pub fn from_ascending(coeffs: Vec<Rat>) -> Self {
        MPoly { coeffs }.normalized()
    }

    /// Convenience constructor from integer coefficients, ascending powers.
    pub fn from_ints(coeffs: &[i64]) -> Self {
        MPoly {
            coeffs: coeffs.iter().map(|&c| rint(c)).collect(),
        }
        .normalized()
    }

    /// The monomial m^1.
    pub fn m() -> Self {
        MPoly {
            coeffs: vec![Rat::zero(), Rat::one()],
        }
    }

    fn normalized(mut self) -> Self {
        while self.coeffs.last().map(Rat::is_zero).unwrap_or(false) {
            self.coeffs.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeffs_ascending(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn eval(&self, m: &Rat) -> Rat {
        let mut acc = Rat::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * m + c;
        }
        acc
    }

    pub fn eval_int(&self, m: i64) -> Rat {
        self.eval(&rint(m))
    }

    /// Exact Lagrange interpolation through `(x, y)` pairs with distinct x.
    ///
    /// The result is the unique polynomial of degree < points.len() through
    /// all points; callers must validate against extra points if the true
    /// degree bound is not known a priori.
    pub fn interpolate(points: &[(Rat, Rat)]) -> Self {
        let n = points.len();
        let mut acc = MPoly::zero();
        for i in 0..n {
            // Basis polynomial ∏_{j≠i} (m - x_j)/(x_i - x_j), times y_i.
            let mut basis = MPoly::constant(points[i].1.clone());
            for j in 0..n {
                if i == j {
                    continue;
                }
                let den = &points[i].0 - &points[j].0;
                assert!(!den.is_zero(), "interpolation nodes must be distinct");
                let lin = MPoly::from_ascending(vec![
                    -&points[j].0 / &den,
                    Rat::one() / den.clone(),
                ]);
                basis = &basis * &lin;
            }
            acc = &acc + &basis;
        }
        acc
    }
}

impl Add for &MPoly {
    type Output = MPoly;
    fn add(self, rhs: &MPoly) -> MPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut coeffs = vec![Rat::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[i] += c;
        }
        for (i, c) in rhs.coeffs.iter().enumerate() {
            coeffs[i] += c;
        }
        MPoly { coeffs }.normalized()
    }
}

impl Sub for &MPoly {
    type Output = MPoly;
    fn sub(self, rhs: &MPoly) -> MPoly {
        let neg = MPoly {
            coeffs: rhs.coeffs.iter().map(|c| -c.clone()).collect(),
        };
        self + &neg
    }
}

impl Mul for &MPoly {
    type Output = MPoly;
    fn mul(self, rhs: &MPoly) -> MPoly {
        if self.is_zero() || rhs.is_zero() {
            return MPoly::zero();
        }
        let mut coeffs = vec![Rat::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        MPoly { coeffs }.normalized()
    }
}

impl fmt::Display for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (pow, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let (sign, mag) = if c.is_negative() {
                ("-", -c.clone())
            } else {
                ("+", c.clone())
            };
            if first {
                if sign == "-" {
                    write!(f, "-")?;
                }
                first = false;
            } else {
                write!(f, " {} ", sign)?;
            }
            let unit_mag = mag.is_one();
            match (pow, unit_mag) {
                (0, _) => write!(f, "{mag}")?,
                (1, true) => write!(f, "m")?,
                (1, false) => write!(f, "{mag}m")?,
                (_, true) => write!(f, "m^{pow}")?,
                (_, false) => write!(f, "{mag}m^{pow}")?,
            }
        }
        Ok(())
    }
}

impl serde::Serialize for MPoly {
    /// Ascending list of exact coefficient strings.
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = ser.serialize_seq(Some(self.coeffs.len()))?;
        for c in &self.coeffs {
            seq.serialize_element(&c.to_string())?;
        }
        seq.end()
    }
}

impl<'de> serde::Deserialize<'de> for MPoly {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(de)?;
        let mut coeffs = Vec::with_capacity(raw.len());
        for s in raw {
            coeffs.push(Rat::from_str(&s).map_err(serde::de::Error::custom)?);
        }
        Ok(MPoly::from_ascending(coeffs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_integer_and_half_integer_values() {
        assert_eq!(gamma_half_exact(2).q, rint(1)); // Γ(1)
        assert_eq!(gamma_half_exact(8).q, rint(6)); // Γ(4) = 3!
        let g32 = gamma_half_exact(3); // Γ(3/2) = √π/2
        assert!(g32.sqrt_pi);
        assert_eq!(g32.q, rat(1, 2));
        let g52 = gamma_half_exact(5); // Γ(5/2) = 3√π/4
        assert_eq!(g52.q, rat(3, 4));
        assert!((gamma_half(1) - std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(12) - 120.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rational_arithmetic_and_roundtrip() {
        let a = CRat::real(3, 4);
        let b = CRat::imag(-1, 2);
        let p = &a * &b;
        assert_eq!(p, CRat::imag(-3, 8));
        assert_eq!(CRat::i() * CRat::i(), CRat::from_int(-1));
        for v in [
            CRat::real(-7, 3),
            CRat::imag(5, 2),
            CRat { re: rat(1, 3), im: rat(-4, 5) },
            CRat::zero(),
        ] {
            let s = v.to_string();
            let back: CRat = s.parse().unwrap();
            assert_eq!(back, v, "roundtrip through `{s}`");
        }
    }

    #[test]
    fn mpoly_display_and_interpolation() {
        let p = MPoly::from_ints(&[8, 6, 1]);
        assert_eq!(p.to_string(), "m^2 + 6m + 8");
        assert_eq!(p.eval_int(2), rint(24));
        let pts: Vec<(Rat, Rat)> = (1..=3).map(|m| (rint(m), p.eval_int(m))).collect();
        let q = MPoly::interpolate(&pts);
        assert_eq!(q, p);
        let r = &p * &MPoly::from_ints(&[0, 1]);
        assert_eq!(r.to_string(), "m^3 + 6m^2 + 8m");
        assert_eq!((&p - &p), MPoly::zero());
    }
}
