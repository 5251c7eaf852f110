//! Diagonal reduction of the second heat coefficient.
//!
//! When the quadratic coefficient matrix is diagonal, `k_{ij} = 0` for
//! `i != j`, two simplifications happen at once. A derivative pair `(a, b)`
//! with `a != b` hits an off-diagonal entry of the (now diagonal) covariance
//! and the component vanishes; the same goes for any word factor `k_{ij}`
//! with `i != j`, derived or not. What survives is indexed by a multiset of
//! axes `s_1..s_N`, and the moment functional collapses to a scalar weight:
//!
//! ```text
//! F_{alpha; (s1 s1)...(sN sN)} =
//!     1/(4^N N!) (det A)^{-1/2} (prod_l k_{s_l})^{-1} Fd_{alpha; s1..sN}
//! ```
//!
//! where `Fd` is the reduced functional (symmetric in its index list). A
//! central factor `k_a` sitting in slot `i` of a word is not moment data
//! either: it factors out as `k_a` from slot 1 and as `k_a (1 - z_a^(1))`
//! from slot 2, the `z`-factor recording that the occurrence sits one
//! resolvent group further to the right.
//!
//! [`v2_diagonal`] performs this reduction mechanically on the engine
//! expansion of the second-order term and returns the result in units of
//! `(det A)^{1/2} v_2`. The hand-entered counterpart [`v2_diagonal_tables`]
//! lists the grouped rows of the diagonal form of `v_2`: three part-I rows
//! and ten part-II bundles tagged by the ten tensor shapes
//!
//! ```text
//! L1  (del_s k_s) (x) (del_s k_s)      L6  i (del_s k_s) (x) r_s
//! L2  (del_s k_t) (x) (del_s k_t)      L7  i (del_s k_l) (x) r_s
//! L3  (del_s k_s) (x) (del_s k_t)      L8  i r_s (x) (del_s k_s)
//! L4  (del_s k_t) (x) (del_s k_s)      L9  i r_s (x) (del_s k_l)
//! L5  (del_s k_l) (x) (del_s k_t)      L10 r_s (x) r_s
//! ```
//!
//! (the `i` factors are carried in the coefficients here, so equal shapes
//! merge). All index sums run over full tuples, coincidences included; at a
//! coincidence such as `t = s` the shape `L2` lands on the same key as `L1`
//! and the coefficients accumulate. The equality of the two routes over
//! every axis count is a test and part of the acceptance suite.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exact::{rat, CRat};
use crate::symcalc::{symbol_from_json, symbol_to_json, Axis, CoeffSymbol, SymKind, SymbolJson};

use super::{ComponentSum, Heat2Error, SCHEMA_VERSION};

/// Laurent monomial in the diagonal entries: sorted `(axis, exponent)`
/// pairs, exponents nonzero.
pub type KPowers = Vec<(Axis, i32)>;

/// Product of `(1 - z_axis^(level))` factors: sorted `(axis, level)` pairs,
/// multiplicity by repetition.
pub type ZFactors = Vec<(Axis, u8)>;

/// One reduced term: the moment functional it multiplies.
///
/// `indices` is the (sorted) index list of the reduced functional,
/// `words` the per-slot operator words with central factors removed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DiagKey {
    pub alpha: Vec<u32>,
    pub indices: Vec<Axis>,
    pub words: Vec<Vec<CoeffSymbol>>,
}

impl DiagKey {
    pub fn new(alpha: Vec<u32>, mut indices: Vec<Axis>, words: Vec<Vec<CoeffSymbol>>) -> Self {
        indices.sort_unstable();
        DiagKey {
            alpha,
            indices,
            words,
        }
    }
}

impl fmt::Display for DiagKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alpha: Vec<String> = self.alpha.iter().map(|a| a.to_string()).collect();
        write!(f, "Fd_{{{};", alpha.join(","))?;
        if self.indices.is_empty() {
            write!(f, "-}}")?;
        } else {
            let idx: Vec<String> = self.indices.iter().map(|a| a.to_string()).collect();
            write!(f, "{}}}", idx.join(","))?;
        }
        write!(f, " [")?;
        for (i, word) in self.words.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            if word.is_empty() {
                write!(f, "1")?;
            } else {
                let parts: Vec<String> = word.iter().map(|s| s.to_string()).collect();
                write!(f, "{}", parts.join(" "))?;
            }
        }
        write!(f, "]")
    }
}

/// Exact coefficient of one [`DiagKey`]: a sum of complex rationals, each
/// dressed with a Laurent monomial in the `k_s` and a product of
/// `(1 - z_s^(l))` factors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiagCoeff {
    terms: BTreeMap<(KPowers, ZFactors), CRat>,
}

impl DiagCoeff {
    pub fn zero() -> Self {
        DiagCoeff::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(KPowers, ZFactors), &CRat)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, kpow: KPowers, z: ZFactors, coeff: CRat) {
        if coeff.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry((kpow, z)) {
            Entry::Vacant(e) => {
                e.insert(coeff);
            }
            Entry::Occupied(mut e) => {
                let sum = e.get().clone() + coeff;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&mut self, other: &DiagCoeff) {
        for ((kpow, z), c) in &other.terms {
            self.add_term(kpow.clone(), z.clone(), c.clone());
        }
    }

    pub fn negate(&mut self) {
        for c in self.terms.values_mut() {
            *c = -c.clone();
        }
    }
}

impl fmt::Display for DiagCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for ((kpow, z), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({})", c)?;
            for (a, e) in kpow {
                write!(f, " k{}^{}", a, e)?;
            }
            for (a, l) in z {
                write!(f, " (1-z{}^({}))", a, l)?;
            }
        }
        Ok(())
    }
}

fn normalize_kpow(raw: &[(Axis, i32)]) -> KPowers {
    let mut map: BTreeMap<Axis, i32> = BTreeMap::new();
    for &(a, e) in raw {
        *map.entry(a).or_insert(0) += e;
    }
    map.into_iter().filter(|&(_, e)| e != 0).collect()
}

fn normalize_z(raw: &[(Axis, u8)]) -> ZFactors {
    let mut z: ZFactors = raw.to_vec();
    z.sort_unstable();
    z
}

/// Diagonal form of the second-order contribution, keyed by reduced
/// functional and operator word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagonalSum {
    m: usize,
    terms: BTreeMap<DiagKey, DiagCoeff>,
}

impl DiagonalSum {
    pub fn zero(m: usize) -> Self {
        DiagonalSum {
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

    pub fn iter(&self) -> impl Iterator<Item = (&DiagKey, &DiagCoeff)> {
        self.terms.iter()
    }

    pub fn get(&self, key: &DiagKey) -> Option<&DiagCoeff> {
        self.terms.get(key)
    }

    pub fn add_term(&mut self, key: DiagKey, kpow: &[(Axis, i32)], z: &[(Axis, u8)], coeff: CRat) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(key).or_default();
        entry.add_term(normalize_kpow(kpow), normalize_z(z), coeff);
        // the per-key map prunes zero coefficients itself; drop emptied keys
        self.terms.retain(|_, v| !v.is_zero());
    }

    pub fn filter_alpha(&self, alpha: &[u32]) -> DiagonalSum {
        let mut out = DiagonalSum::zero(self.m);
        for (key, coeff) in &self.terms {
            if key.alpha == alpha {
                out.terms.insert(key.clone(), coeff.clone());
            }
        }
        out
    }

    pub fn pretty(&self) -> String {
        let mut lines = Vec::new();
        for (key, coeff) in &self.terms {
            lines.push(format!("{}  *  {}", key, coeff));
        }
        lines.join("\n")
    }
}

/// `a - b`, empty iff the two agree exactly.
pub fn diff_diagonal(a: &DiagonalSum, b: &DiagonalSum) -> DiagonalSum {
    assert_eq!(a.m, b.m, "dimension mismatch");
    let mut out = DiagonalSum::zero(a.m);
    for (key, coeff) in &a.terms {
        out.terms.insert(key.clone(), coeff.clone());
    }
    for (key, coeff) in &b.terms {
        let mut neg = coeff.clone();
        neg.negate();
        match out.terms.get_mut(key) {
            Some(existing) => {
                existing.add(&neg);
            }
            None => {
                out.terms.insert(key.clone(), neg);
            }
        }
    }
    out.terms.retain(|_, v| !v.is_zero());
    out
}

/// Axis of a diagonal quadratic symbol, `None` when the symbol is not a
/// `k`-entry or is off-diagonal.
fn diag_k_axis(sym: &CoeffSymbol) -> Option<Axis> {
    match sym.kind {
        SymKind::K { i, j } if i == j => Some(i),
        _ => None,
    }
}

fn is_off_diagonal_k(sym: &CoeffSymbol) -> bool {
    matches!(sym.kind, SymKind::K { i, j } if i != j)
}

/// Reduces a component expansion to the diagonal case.
///
/// Off-diagonal derivative pairs and off-diagonal `k`-entries are dropped,
/// the `1/(4^N N!) (prod k)^{-1}` conversion is applied, and central
/// factors are pulled out of the words with their slot-level `z`-factors.
/// The result is expressed in units of `(det A)^{1/2} v_2`.
pub fn diagonal_reduce(sum: &ComponentSum) -> DiagonalSum {
    let mut out = DiagonalSum::zero(sum.m());
    'term: for (key, coeff) in sum.iter() {
        let mut indices: Vec<Axis> = Vec::with_capacity(key.pairs.len());
        for &(a, b) in &key.pairs {
            if a != b {
                continue 'term;
            }
            indices.push(a);
        }
        for word in &key.words {
            if word.iter().any(is_off_diagonal_k) {
                continue 'term;
            }
        }

        let n = indices.len() as u32;
        let mut denom: i64 = 1;
        for j in 1..=n as i64 {
            denom *= 4 * j;
        }
        let weight = coeff.scale(&rat(1, denom));

        let mut kpow: Vec<(Axis, i32)> = indices.iter().map(|&a| (a, -1)).collect();
        let mut z: Vec<(Axis, u8)> = Vec::new();
        let mut words: Vec<Vec<CoeffSymbol>> = Vec::with_capacity(key.words.len());
        for (slot_idx, word) in key.words.iter().enumerate() {
            let mut anchored = Vec::new();
            for sym in word {
                match (sym.is_central(), diag_k_axis(sym)) {
                    (true, Some(a)) => {
                        kpow.push((a, 1));
                        if slot_idx >= 1 {
                            z.push((a, slot_idx as u8));
                        }
                    }
                    _ => anchored.push(sym.clone()),
                }
            }
            words.push(anchored);
        }

        let dkey = DiagKey::new(key.alpha.clone(), indices, words);
        out.add_term(dkey, &kpow, &z, weight);
    }
    out
}

/// Diagonal form of the second-order contribution, from the engine.
pub fn v2_diagonal(m: usize) -> Result<DiagonalSum, Heat2Error> {
    let comp = super::v2_components_engine(m)?;
    Ok(diagonal_reduce(&comp.sum))
}

fn dk(a: Axis, deriv: &[Axis]) -> CoeffSymbol {
    CoeffSymbol::k(a, a).derived(deriv)
}

fn axes(m: usize) -> impl Iterator<Item = Axis> {
    (1..=m as u8).map(|a| a as Axis)
}

/// Hand-entered diagonal term list: part I and the ten part-II bundles.
///
/// Every sum runs over full index tuples (coincidences included). The
/// `i` factors of the mixed shapes `L6..L9` are folded into the
/// coefficients so that equal tensor shapes share a key.
pub fn v2_diagonal_tables(m: usize) -> DiagonalSum {
    let mut out = DiagonalSum::zero(m);
    let half = rat(1, 2);

    // part I, single-slot rows
    for s in axes(m) {
        for l in axes(m) {
            let w = vec![vec![dk(l, &[s, s])]];
            let kw = [(s, 1), (l, -1)];
            out.add_term(DiagKey::new(vec![3, 1], vec![s, l], w.clone()), &kw, &[], CRat::one());
            out.add_term(
                DiagKey::new(vec![2, 1], vec![l], w),
                &kw,
                &[],
                -CRat::from_rat(half.clone()),
            );
        }
        out.add_term(
            DiagKey::new(vec![3, 1], vec![s, s], vec![vec![dk(s, &[s, s])]]),
            &[],
            &[],
            CRat::from_int(2),
        );
        out.add_term(
            DiagKey::new(vec![2, 1], vec![s], vec![vec![CoeffSymbol::r(s).derived(&[s])]]),
            &[],
            &[],
            -CRat::i(),
        );
    }
    out.add_term(
        DiagKey::new(vec![1, 1], vec![], vec![vec![CoeffSymbol::p0()]]),
        &[],
        &[],
        -CRat::one(),
    );

    // part II, gradient-gradient bundles L1..L5
    for s in axes(m) {
        // L1: (del_s k_s) (x) (del_s k_s), weight 1/k_s
        let w1 = vec![vec![dk(s, &[s])], vec![dk(s, &[s])]];
        let kw1 = [(s, -1)];
        out.add_term(
            DiagKey::new(vec![3, 1, 1], vec![s, s, s], w1.clone()),
            &kw1,
            &[],
            CRat::from_int(-8),
        );
        out.add_term(
            DiagKey::new(vec![2, 2, 1], vec![s, s, s], w1.clone()),
            &kw1,
            &[(s, 1)],
            CRat::from_int(-4),
        );
        out.add_term(
            DiagKey::new(vec![2, 1, 1], vec![s, s], w1),
            &kw1,
            &[],
            CRat::from_int(2),
        );
        for t in axes(m) {
            // L2: (del_s k_t) (x) (del_s k_t), weight k_s/k_t^2
            let w2 = vec![vec![dk(t, &[s])], vec![dk(t, &[s])]];
            let kw2 = [(s, 1), (t, -2)];
            out.add_term(
                DiagKey::new(vec![3, 1, 1], vec![s, t, t], w2.clone()),
                &kw2,
                &[],
                CRat::from_int(-2),
            );
            out.add_term(
                DiagKey::new(vec![2, 2, 1], vec![s, t, t], w2.clone()),
                &kw2,
                &[(s, 1)],
                -CRat::one(),
            );
            out.add_term(DiagKey::new(vec![2, 1, 1], vec![t, t], w2), &kw2, &[], CRat::one());

            // L3: (del_s k_s) (x) (del_s k_t), weight 1/k_t
            let w3 = vec![vec![dk(s, &[s])], vec![dk(t, &[s])]];
            let kw3 = [(t, -1)];
            out.add_term(
                DiagKey::new(vec![3, 1, 1], vec![s, s, t], w3.clone()),
                &kw3,
                &[],
                CRat::from_int(-2),
            );
            out.add_term(
                DiagKey::new(vec![2, 2, 1], vec![s, s, t], w3.clone()),
                &kw3,
                &[(s, 1)],
                -CRat::one(),
            );
            out.add_term(DiagKey::new(vec![2, 1, 1], vec![s, t], w3), &kw3, &[], CRat::one());

            // L4: (del_s k_t) (x) (del_s k_s), weight 1/k_t; no third row
            let w4 = vec![vec![dk(t, &[s])], vec![dk(s, &[s])]];
            out.add_term(
                DiagKey::new(vec![3, 1, 1], vec![s, s, t], w4.clone()),
                &kw3,
                &[],
                CRat::from_int(-2),
            );
            out.add_term(
                DiagKey::new(vec![2, 2, 1], vec![s, s, t], w4),
                &kw3,
                &[(s, 1)],
                -CRat::one(),
            );

            for l in axes(m) {
                // L5: (del_s k_l) (x) (del_s k_t), weight k_s/(k_t k_l)
                let w5 = vec![vec![dk(l, &[s])], vec![dk(t, &[s])]];
                let kw5 = [(s, 1), (t, -1), (l, -1)];
                out.add_term(
                    DiagKey::new(vec![3, 1, 1], vec![s, l, t], w5.clone()),
                    &kw5,
                    &[],
                    -CRat::one(),
                );
                out.add_term(
                    DiagKey::new(vec![2, 2, 1], vec![s, l, t], w5.clone()),
                    &kw5,
                    &[(s, 1)],
                    -CRat::from_rat(half.clone()),
                );
                out.add_term(
                    DiagKey::new(vec![2, 1, 1], vec![l, t], w5),
                    &kw5,
                    &[],
                    CRat::from_rat(half.clone()),
                );
            }
        }
    }

    // part II, mixed and first-order bundles L6..L10
    for s in axes(m) {
        let r = CoeffSymbol::r(s);
        // L6: i (del_s k_s) (x) r_s, weight 1/k_s
        out.add_term(
            DiagKey::new(vec![2, 1, 1], vec![s, s], vec![vec![dk(s, &[s])], vec![r.clone()]]),
            &[(s, -1)],
            &[],
            CRat::i(),
        );
        // L8: i r_s (x) (del_s k_s), weight 1/k_s
        let w8 = vec![vec![r.clone()], vec![dk(s, &[s])]];
        out.add_term(
            DiagKey::new(vec![2, 1, 1], vec![s, s], w8.clone()),
            &[(s, -1)],
            &[],
            CRat::i(),
        );
        out.add_term(
            DiagKey::new(vec![1, 2, 1], vec![s, s], w8),
            &[(s, -1)],
            &[(s, 1)],
            CRat::i(),
        );
        // L10: r_s (x) r_s, weight 1/(2 k_s)
        out.add_term(
            DiagKey::new(vec![1, 1, 1], vec![s], vec![vec![r.clone()], vec![r.clone()]]),
            &[(s, -1)],
            &[],
            CRat::from_rat(half.clone()),
        );
        for l in axes(m) {
            let ihalf = CRat::imag(1, 2);
            // L7: i (del_s k_l) (x) r_s, weight 1/(2 k_l)
            out.add_term(
                DiagKey::new(vec![2, 1, 1], vec![s, l], vec![vec![dk(l, &[s])], vec![r.clone()]]),
                &[(l, -1)],
                &[],
                ihalf.clone(),
            );
            // L9: i r_s (x) (del_s k_l), weight 1/(2 k_l)
            let w9 = vec![vec![r.clone()], vec![dk(l, &[s])]];
            out.add_term(
                DiagKey::new(vec![2, 1, 1], vec![s, l], w9.clone()),
                &[(l, -1)],
                &[],
                ihalf.clone(),
            );
            out.add_term(
                DiagKey::new(vec![1, 2, 1], vec![s, l], w9.clone()),
                &[(l, -1)],
                &[(s, 1)],
                ihalf.clone(),
            );
            out.add_term(
                DiagKey::new(vec![1, 1, 1], vec![l], w9),
                &[(l, -1)],
                &[],
                -ihalf,
            );
        }
    }

    out
}

#[derive(Serialize, Deserialize)]
struct DiagTermJson {
    alpha: Vec<u32>,
    indices: Vec<Axis>,
    words: Vec<Vec<SymbolJson>>,
    coeff: Vec<DiagCoeffJson>,
}

#[derive(Serialize, Deserialize)]
struct DiagCoeffJson {
    k: Vec<(Axis, i32)>,
    z: Vec<(Axis, u8)>,
    c: CRat,
}

#[derive(Serialize, Deserialize)]
struct DiagSumJson {
    schema_version: u32,
    m: usize,
    terms: Vec<DiagTermJson>,
}

impl DiagonalSum {
    pub fn to_json(&self) -> String {
        let terms = self
            .terms
            .iter()
            .map(|(key, coeff)| DiagTermJson {
                alpha: key.alpha.clone(),
                indices: key.indices.clone(),
                words: key
                    .words
                    .iter()
                    .map(|w| w.iter().map(symbol_to_json).collect())
                    .collect(),
                coeff: coeff
                    .iter()
                    .map(|((k, z), c)| DiagCoeffJson {
                        k: k.clone(),
                        z: z.clone(),
                        c: c.clone(),
                    })
                    .collect(),
            })
            .collect();
        let doc = DiagSumJson {
            schema_version: SCHEMA_VERSION,
            m: self.m,
            terms,
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<DiagonalSum, Heat2Error> {
        let doc: DiagSumJson =
            serde_json::from_str(text).map_err(|e| Heat2Error::Schema(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Heat2Error::Schema(format!(
                "unsupported schema version {}",
                doc.schema_version
            )));
        }
        let mut out = DiagonalSum::zero(doc.m);
        for term in doc.terms {
            let mut words = Vec::with_capacity(term.words.len());
            for w in &term.words {
                let mut word = Vec::with_capacity(w.len());
                for s in w {
                    word.push(symbol_from_json(s).map_err(|e| Heat2Error::Schema(e.to_string()))?);
                }
                words.push(word);
            }
            for (a, _) in term.coeff.iter().flat_map(|c| c.k.iter()) {
                if *a == 0 || *a as usize > doc.m {
                    return Err(Heat2Error::Schema(format!("axis {} out of range", a)));
                }
            }
            let key = DiagKey::new(term.alpha, term.indices, words);
            for c in term.coeff {
                out.add_term(key.clone(), &c.k, &c.z, c.c);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat2::{pair_pattern_multiplicities, v2_components_engine};

    #[test]
    fn diagonal_tables_match_engine_reduction() {
        // m = 3 is the first dimension with a fully generic three-axis class
        for m in 1..=3 {
            let engine = v2_diagonal(m).unwrap();
            let tables = v2_diagonal_tables(m);
            let residual = diff_diagonal(&engine, &tables);
            assert!(
                residual.is_empty(),
                "m={}: residual has {} keys:\n{}",
                m,
                residual.len(),
                residual.pretty()
            );
        }
    }

    #[test]
    fn off_diagonal_content_is_dropped() {
        let comp = v2_components_engine(2).unwrap();
        let has_off_diag = comp.sum.iter().any(|(key, _)| {
            key.pairs.iter().any(|&(a, b)| a != b)
                || key
                    .words
                    .iter()
                    .any(|w| w.iter().any(is_off_diagonal_k))
        });
        assert!(has_off_diag, "expected off-diagonal components at m = 2");
        let reduced = v2_diagonal(2).unwrap();
        for (key, _) in reduced.iter() {
            for word in &key.words {
                assert!(word.iter().all(|s| !is_off_diagonal_k(s)));
                assert!(word.iter().all(|s| !s.is_central()), "centrals factored out");
            }
        }
    }

    #[test]
    fn slot_two_centrals_factor_with_a_z_level() {
        // the r (x) k grad-k shape: its central sits in slot 2, so the
        // factored weight must carry a level-1 z-factor
        let reduced = v2_diagonal(1).unwrap();
        let key = DiagKey::new(
            vec![1, 2, 1],
            vec![1, 1],
            vec![vec![CoeffSymbol::r(1)], vec![dk(1, &[1])]],
        );
        let coeff = reduced.get(&key).expect("key present");
        let mut expected = DiagCoeff::zero();
        expected.add_term(vec![(1, -1)], vec![(1, 1)], CRat::imag(3, 2));
        assert_eq!(coeff, &expected, "got {}", coeff);
    }

    #[test]
    fn part_one_pure_key_accumulates_coincidences() {
        // at a single axis the cross row and the pure row of the leading
        // part-I bundle pile onto one key with total weight 1 + 2 = 3
        let tables = v2_diagonal_tables(1);
        let key = DiagKey::new(vec![3, 1], vec![1, 1], vec![vec![dk(1, &[1, 1])]]);
        let coeff = tables.get(&key).expect("key present");
        let mut expected = DiagCoeff::zero();
        expected.add_term(vec![], vec![], CRat::from_int(3));
        assert_eq!(coeff, &expected, "got {}", coeff);

        let engine = v2_diagonal(1).unwrap();
        assert_eq!(engine.get(&key), Some(&expected));
    }

    /// Matching-type classification of a pair pattern against the natural
    /// content blocks: which of the given position blocks are matched
    /// internally by the pattern.
    fn internal_blocks(pattern: &[(Axis, Axis)], blocks: &[(Axis, Axis)]) -> usize {
        blocks
            .iter()
            .filter(|b| pattern.iter().any(|p| p == *b))
            .count()
    }

    #[test]
    fn four_index_symmetrizer_splits_as_eight_plus_sixteen() {
        // distinct labels in positions (1)(2)(34): the permutations divide
        // by whether the derivative block {3,4} stays internal
        let mults = pair_pattern_multiplicities(&[1, 2, 3, 4]);
        let block = [(3, 4)];
        let mut internal = 0u64;
        let mut crossed = 0u64;
        for (pattern, count) in &mults {
            if internal_blocks(pattern, &block) == 1 {
                internal += count;
            } else {
                crossed += count;
            }
        }
        assert_eq!(internal, 8);
        assert_eq!(crossed, 16);
    }

    #[test]
    fn six_index_symmetrizer_splits_as_printed() {
        // distinct labels in positions (1)(2)(34)(56): 720 permutations
        // divide by how many of {1,2}, {3,4}, {5,6} remain internal
        let mults = pair_pattern_multiplicities(&[1, 2, 3, 4, 5, 6]);
        let blocks = [(1, 2), (3, 4), (5, 6)];
        let mut by_class = BTreeMap::new();
        for (pattern, count) in &mults {
            let mut tags = Vec::new();
            for (i, b) in blocks.iter().enumerate() {
                if pattern.iter().any(|p| p == b) {
                    tags.push(i);
                }
            }
            *by_class.entry(tags).or_insert(0u64) += count;
        }
        assert_eq!(by_class.get(&vec![]).copied(), Some(384));
        assert_eq!(by_class.get(&vec![0]).copied(), Some(96));
        assert_eq!(by_class.get(&vec![1]).copied(), Some(96));
        assert_eq!(by_class.get(&vec![2]).copied(), Some(96));
        assert_eq!(by_class.get(&vec![0, 1, 2]).copied(), Some(48));
        let total: u64 = by_class.values().sum();
        assert_eq!(total, 720);
    }

    #[test]
    fn diagonal_json_roundtrip() {
        let sum = v2_diagonal_tables(2);
        let text = sum.to_json();
        let back = DiagonalSum::from_json(&text).unwrap();
        assert!(diff_diagonal(&sum, &back).is_empty());
    }
}
