//! Commutative collapse oracle for the symbol calculus.
//!
//! When every coefficient commutes, a sandwiched term collapses to
//! `coeff * w^{|alpha|} * xi-monomial * (product of jet variables)` with
//! `w = (p2 - lambda)^{-1}`. This module recomputes the resolvent
//! expansion entirely within that commutative model, using the chain rule
//! `d(w^p) = -p w^{p+1} d(p2)` for both derivatives, and never touching
//! the sandwiched representation. Exact equality of the collapsed
//! noncommutative result against this oracle pins signs, prefactors, and
//! multiplicities independently of the slot bookkeeping.

use std::collections::BTreeMap;

use crate::exact::{rat, CRat};

use super::{Axis, CoeffSymbol, ResolventSum, SymcalcError, XiMono};

/// Monomial key of the commutative model: power of `w`, xi exponents,
/// and a sorted multiset of jet variables (coefficient symbols).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScalKey {
    pub w: u32,
    pub xi: Vec<u8>,
    pub jets: Vec<CoeffSymbol>,
}

/// Exact polynomial in `w`, `xi`, and commuting jet variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalarPoly {
    m: usize,
    terms: BTreeMap<ScalKey, CRat>,
}

impl ScalarPoly {
    pub fn zero(m: usize) -> Self {
        ScalarPoly {
            m,
            terms: BTreeMap::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ScalKey, &CRat)> {
        self.terms.iter()
    }

    pub fn add_mono(&mut self, mut key: ScalKey, coeff: CRat) {
        if coeff.is_zero() {
            return;
        }
        key.jets.sort();
        let entry = self.terms.entry(key).or_insert_with(CRat::zero);
        *entry += coeff;
        let dead: Vec<ScalKey> = self
            .terms
            .iter()
            .filter(|(_, c)| c.is_zero())
            .map(|(k, _)| k.clone())
            .collect();
        for k in dead {
            self.terms.remove(&k);
        }
    }

    pub fn add(&self, other: &ScalarPoly) -> ScalarPoly {
        assert_eq!(self.m, other.m, "dimension mismatch");
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_mono(k.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &CRat) -> ScalarPoly {
        let mut out = Self::zero(self.m);
        for (k, coeff) in &self.terms {
            out.add_mono(k.clone(), coeff.clone() * c.clone());
        }
        out
    }

    pub fn mul(&self, other: &ScalarPoly) -> ScalarPoly {
        assert_eq!(self.m, other.m, "dimension mismatch");
        let mut out = Self::zero(self.m);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let mut jets = ka.jets.clone();
                jets.extend(kb.jets.iter().cloned());
                let xi: Vec<u8> = ka.xi.iter().zip(&kb.xi).map(|(a, b)| a + b).collect();
                out.add_mono(
                    ScalKey {
                        w: ka.w + kb.w,
                        xi,
                        jets,
                    },
                    ca.clone() * cb.clone(),
                );
            }
        }
        out
    }

    /// The resolvent factor `w`.
    pub fn w(m: usize) -> Self {
        let mut p = Self::zero(m);
        p.add_mono(
            ScalKey {
                w: 1,
                xi: vec![0; m],
                jets: Vec::new(),
            },
            CRat::one(),
        );
        p
    }

    fn from_symbol_monomials(m: usize, monos: Vec<(XiMono, Vec<CoeffSymbol>, CRat)>) -> Self {
        let mut p = Self::zero(m);
        for (xi, jets, c) in monos {
            p.add_mono(
                ScalKey {
                    w: 0,
                    xi: xi.0,
                    jets,
                },
                c,
            );
        }
        p
    }

    pub fn p2(m: usize) -> Self {
        let mut monos = Vec::new();
        for i in 1..=(m as Axis) {
            for j in i..=(m as Axis) {
                let c = if i == j { 1 } else { 2 };
                monos.push((
                    XiMono::unit(m, i).mul(&XiMono::unit(m, j)),
                    vec![CoeffSymbol::k(i, j)],
                    CRat::from_int(c),
                ));
            }
        }
        Self::from_symbol_monomials(m, monos)
    }

    pub fn p1(m: usize) -> Self {
        let monos = (1..=(m as Axis))
            .map(|s| (XiMono::unit(m, s), vec![CoeffSymbol::r(s)], CRat::one()))
            .collect();
        Self::from_symbol_monomials(m, monos)
    }

    pub fn p0(m: usize) -> Self {
        Self::from_symbol_monomials(
            m,
            vec![(XiMono::one(m), vec![CoeffSymbol::p0()], CRat::one())],
        )
    }

    /// `-D_s p2 = -2 sum_l k_{sl} xi_l`, the chain-rule factor for d/d xi.
    fn minus_d_p2(m: usize, s: Axis) -> Self {
        let monos = (1..=(m as Axis))
            .map(|l| {
                (
                    XiMono::unit(m, l),
                    vec![CoeffSymbol::k(s, l)],
                    CRat::from_int(-2),
                )
            })
            .collect();
        Self::from_symbol_monomials(m, monos)
    }

    /// `-nabla_s p2`, the chain-rule factor for the derivation.
    fn minus_nabla_p2(m: usize, s: Axis) -> Self {
        let mut monos = Vec::new();
        for i in 1..=(m as Axis) {
            for j in i..=(m as Axis) {
                let c = if i == j { -1 } else { -2 };
                monos.push((
                    XiMono::unit(m, i).mul(&XiMono::unit(m, j)),
                    vec![CoeffSymbol::k(i, j).derived(&[s])],
                    CRat::from_int(c),
                ));
            }
        }
        Self::from_symbol_monomials(m, monos)
    }

    /// d/d xi_s with the chain rule on `w` powers.
    pub fn d_xi(&self, s: Axis) -> ScalarPoly {
        let mut out = Self::zero(self.m);
        let chain = Self::minus_d_p2(self.m, s);
        for (key, coeff) in &self.terms {
            let idx = (s - 1) as usize;
            if key.xi[idx] > 0 {
                let mut xi = key.xi.clone();
                xi[idx] -= 1;
                out.add_mono(
                    ScalKey {
                        w: key.w,
                        xi,
                        jets: key.jets.clone(),
                    },
                    coeff.scale(&rat(key.xi[idx] as i64, 1)),
                );
            }
            if key.w > 0 {
                let mut bumped = Self::zero(self.m);
                bumped.add_mono(
                    ScalKey {
                        w: key.w + 1,
                        xi: key.xi.clone(),
                        jets: key.jets.clone(),
                    },
                    coeff.scale(&rat(key.w as i64, 1)),
                );
                out = out.add(&bumped.mul(&chain));
            }
        }
        out
    }

    /// The derivation along `s`: Leibniz on jets plus the chain rule on `w`.
    pub fn nabla(&self, s: Axis) -> ScalarPoly {
        let mut out = Self::zero(self.m);
        let chain = Self::minus_nabla_p2(self.m, s);
        for (key, coeff) in &self.terms {
            for idx in 0..key.jets.len() {
                let mut jets = key.jets.clone();
                let jet = jets[idx].clone();
                jets[idx] = jet.derived(&[s]);
                out.add_mono(
                    ScalKey {
                        w: key.w,
                        xi: key.xi.clone(),
                        jets,
                    },
                    coeff.clone(),
                );
            }
            if key.w > 0 {
                let mut bumped = Self::zero(self.m);
                bumped.add_mono(
                    ScalKey {
                        w: key.w + 1,
                        xi: key.xi.clone(),
                        jets: key.jets.clone(),
                    },
                    coeff.scale(&rat(key.w as i64, 1)),
                );
                out = out.add(&bumped.mul(&chain));
            }
        }
        out
    }
}

/// Commutative resolvent expansion by the same recursion, computed with
/// scalar arithmetic only.
pub fn scalar_resolvent_terms(m: usize, order: usize) -> Vec<ScalarPoly> {
    let parts = [ScalarPoly::p0(m), ScalarPoly::p1(m), ScalarPoly::p2(m)];
    let minus_w = ScalarPoly::w(m).scale(&CRat::from_int(-1));
    let mut bs = vec![ScalarPoly::w(m)];
    for n in 1..=order {
        let mut acc = ScalarPoly::zero(m);
        for (l, part) in parts.iter().enumerate() {
            for r in 0..n {
                let j = l as i64 - 2 - r as i64 + n as i64;
                if j < 0 {
                    continue;
                }
                acc = acc.add(&scalar_aj(&bs[r], part, j as u32));
            }
        }
        bs.push(acc.mul(&minus_w));
    }
    bs
}

fn scalar_aj(p: &ScalarPoly, q: &ScalarPoly, j: u32) -> ScalarPoly {
    let m = p.m();
    let mut pref = CRat::one();
    for step in 1..=j {
        pref = pref * CRat::i().scale(&rat(-1, step as i64));
    }
    let mut out = ScalarPoly::zero(m);
    let mut tuples: Vec<Vec<Axis>> = vec![Vec::new()];
    for _ in 0..j {
        let mut next = Vec::new();
        for t in &tuples {
            for ax in 1..=(m as Axis) {
                let mut t2 = t.clone();
                t2.push(ax);
                next.push(t2);
            }
        }
        tuples = next;
    }
    for tup in &tuples {
        let mut dp = p.clone();
        let mut nq = q.clone();
        for &ax in tup {
            dp = dp.d_xi(ax);
            nq = nq.nabla(ax);
        }
        out = out.add(&dp.mul(&nq).scale(&pref));
    }
    out
}

/// Collapse a sandwiched sum to the commutative model: `b0 -> w`, slots
/// multiply out, words become jet multisets.
pub fn collapse(sum: &ResolventSum) -> ScalarPoly {
    let m = sum.m();
    let mut out = ScalarPoly::zero(m);
    for (key, coeff) in sum.iter() {
        let mut xi = vec![0u8; m];
        let mut jets = Vec::new();
        for slot in &key.slots {
            for (idx, e) in slot.xi.0.iter().enumerate() {
                xi[idx] += e;
            }
            jets.extend(slot.word.iter().cloned());
        }
        out.add_mono(
            ScalKey {
                w: key.alpha_sum(),
                xi,
                jets,
            },
            coeff.clone(),
        );
    }
    out
}

/// Evaluate a scalar polynomial at explicit rational values for `w`, the
/// `xi` variables, and every jet variable (looked up by symbol). Missing
/// jets are an input error.
pub fn eval_scalar(
    poly: &ScalarPoly,
    w: &CRat,
    xi: &[CRat],
    jets: &BTreeMap<CoeffSymbol, CRat>,
) -> Result<CRat, SymcalcError> {
    if xi.len() != poly.m() {
        return Err(SymcalcError::InvalidInput(format!(
            "xi has {} entries, expected {}",
            xi.len(),
            poly.m()
        )));
    }
    let mut total = CRat::zero();
    for (key, coeff) in poly.iter() {
        let mut v = coeff.clone();
        for _ in 0..key.w {
            v = v * w.clone();
        }
        for (idx, &e) in key.xi.iter().enumerate() {
            for _ in 0..e {
                v = v * xi[idx].clone();
            }
        }
        for jet in &key.jets {
            let jv = jets.get(jet).ok_or_else(|| {
                SymcalcError::InvalidInput(format!("no value supplied for jet {}", jet))
            })?;
            v = v * jv.clone();
        }
        total += v;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcalc::resolvent_terms;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn collapse_of_b0_is_w() {
        let m = 2;
        assert_eq!(collapse(&ResolventSum::b0(m)), ScalarPoly::w(m));
    }

    #[test]
    fn scalar_chain_rule_on_w() {
        // d/d xi_1 (w) = -w^2 D_1 p2; at m = 1 that is -2 k11 xi1 w^2.
        let m = 1;
        let dw = ScalarPoly::w(m).d_xi(1);
        assert_eq!(dw.len(), 1);
        let (key, coeff) = dw.iter().next().unwrap();
        assert_eq!(key.w, 2);
        assert_eq!(key.xi, vec![1]);
        assert_eq!(key.jets, vec![CoeffSymbol::k(1, 1)]);
        assert_eq!(*coeff, CRat::from_int(-2));
    }

    #[test]
    fn collapse_matches_scalar_recursion_through_b2() {
        for m in 1..=3usize {
            let nc = resolvent_terms(m, 2).unwrap();
            let sc = scalar_resolvent_terms(m, 2);
            for n in 0..=2 {
                assert_eq!(
                    collapse(&nc[n]),
                    sc[n],
                    "commutative collapse diverges at order {} for m = {}",
                    n,
                    m
                );
            }
        }
    }

    #[test]
    fn collapse_matches_scalar_recursion_b3_small() {
        for m in 1..=2usize {
            let nc = resolvent_terms(m, 3).unwrap();
            let sc = scalar_resolvent_terms(m, 3);
            assert_eq!(collapse(&nc[3]), sc[3], "order 3 diverges for m = {}", m);
        }
    }

    #[test]
    fn numeric_spot_check_on_random_rationals() {
        // Evaluate collapsed b2 and the oracle b2 at random rational points;
        // exact polynomial equality already implies this, but the numeric
        // route exercises eval_scalar end to end.
        let m = 2;
        let nc = collapse(&resolvent_terms(m, 2).unwrap().remove(2));
        let sc = scalar_resolvent_terms(m, 2).remove(2);
        let mut rng = StdRng::seed_from_u64(7);
        let mut jets = BTreeMap::new();
        let mut jet_list = Vec::new();
        for (key, _) in nc.iter().chain(sc.iter()) {
            for jet in &key.jets {
                if !jet_list.contains(jet) {
                    jet_list.push(jet.clone());
                }
            }
        }
        for jet in jet_list {
            let num = rng.random_range(-9i64..=9);
            let den = rng.random_range(1i64..=7);
            jets.insert(jet, CRat::real(num, den));
        }
        let w = CRat::real(3, 5);
        let xi = vec![CRat::real(2, 3), CRat::real(-1, 2)];
        let a = eval_scalar(&nc, &w, &xi, &jets).unwrap();
        let b = eval_scalar(&sc, &w, &xi, &jets).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_rejects_missing_jets() {
        let m = 1;
        let sc = scalar_resolvent_terms(m, 1).remove(1);
        let err = eval_scalar(&sc, &CRat::one(), &[CRat::one()], &BTreeMap::new());
        assert!(err.is_err());
    }
}
