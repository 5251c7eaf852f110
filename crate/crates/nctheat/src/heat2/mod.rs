//! Second heat coefficient assembled from the resolvent parametrix.
//!
//! The second-order parametrix term is a sum of sandwiched products
//! `c · b0^{a0} rho_1 b0^{a1} ... rho_n b0^{an}` ([`crate::symcalc`]). After
//! rearranging all resolvent factors to one side, each such product is
//! evaluated by a moment functional `F_alpha` whose Gaussian part
//! differentiates the slot contents and contracts the derivative directions
//! in pairs. This module performs that contraction combinatorially:
//!
//! * [`expand_components`] turns a sandwiched sum into a sum of *component
//!   terms* `c · F_{alpha; (l1,l2)...}[w_1 | ... | w_n]` keyed by the
//!   resolvent powers, the contracted index pairs, and the coefficient word
//!   left in each slot. Slot contents of odd total degree in the covector
//!   variables integrate to zero and are dropped (the count is reported).
//! * The derivative bookkeeping is done by explicit enumeration of all
//!   `(2N)!` arrangements of the contracted indices, never by a counting
//!   formula. Summing over every arrangement without dividing by stabilizer
//!   orders reproduces exactly the per-slot Taylor factorials: repeated
//!   arrangements stand in for the multinomial weights.
//! * [`v2_general`] lists the grouped form of the second-order term: eight
//!   sandwich shapes (three one-slot, five two-slot) with integer
//!   coefficients, each rebuildable into the exact parametrix term.
//! * [`leibniz_partition`] exposes the underlying derivative splitting: all
//!   assignments of `2N` derivative positions to slots with prescribed
//!   per-slot degrees, together with the Taylor weight `1/prod(beta_i!)`.
//!
//! Submodules: [`tables`] holds the hand-entered expanded component lists
//! that the engine output is compared against; [`diagonal`] reduces
//! components to the simultaneously diagonalizable case; [`conformal`]
//! collapses the diagonal form to one conformal factor and extracts the
//! polynomial-in-dimension coefficients.

pub mod conformal;
pub mod diagonal;
pub mod tables;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{factorial, rint, CRat, Rat};
use crate::symcalc::golden::{sandwich, SlotExpr};
use crate::symcalc::{
    symbol_from_json, symbol_to_json, Axis, CoeffSymbol, ResolventSum, Slot, SymbolJson,
};

/// Schema version for the JSON export of [`ComponentSum`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum Heat2Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("schema error: {0}")]
    Schema(String),
}

/// Contracted index pairs of one moment functional, each pair unordered.
pub type PairList = Vec<(Axis, Axis)>;

/// Sort within each pair, then sort the list of pairs.
pub fn canonical_pairs(mut pairs: PairList) -> PairList {
    for p in pairs.iter_mut() {
        if p.0 > p.1 {
            std::mem::swap(&mut p.0, &mut p.1);
        }
    }
    pairs.sort_unstable();
    pairs
}

// ---------------------------------------------------------------------------
// Component terms.
// ---------------------------------------------------------------------------

/// Key of one fully expanded component term: resolvent powers `alpha`, the
/// pair pattern of the moment functional, and one coefficient word per slot.
/// Invariant: `pairs.len() * 2` equals the total covector degree consumed by
/// the slots, and for the second-order term `pairs.len() == alpha_sum - 2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ComponentKey {
    pub alpha: Vec<u32>,
    pub pairs: PairList,
    pub words: Vec<Vec<CoeffSymbol>>,
}

impl ComponentKey {
    pub fn new(alpha: Vec<u32>, pairs: PairList, words: Vec<Vec<CoeffSymbol>>) -> Self {
        let mut key = ComponentKey {
            alpha,
            pairs,
            words,
        };
        key.canonicalize();
        key
    }

    fn canonicalize(&mut self) {
        self.pairs = canonical_pairs(std::mem::take(&mut self.pairs));
        for word in &mut self.words {
            let mut slot = Slot::new(crate::symcalc::XiMono::one(0), std::mem::take(word));
            slot.sort_central_runs();
            *word = slot.word;
        }
    }

    /// Number of contracted pairs.
    pub fn moment_order(&self) -> usize {
        self.pairs.len()
    }
}

impl fmt::Display for ComponentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alpha: Vec<String> = self.alpha.iter().map(|a| a.to_string()).collect();
        write!(f, "F_{{{};", alpha.join(","))?;
        if self.pairs.is_empty() {
            write!(f, "-")?;
        }
        for (a, b) in &self.pairs {
            write!(f, "({},{})", a, b)?;
        }
        write!(f, "}}[")?;
        for (idx, word) in self.words.iter().enumerate() {
            if idx > 0 {
                write!(f, " | ")?;
            }
            if word.is_empty() {
                write!(f, "1")?;
            }
            for (widx, sym) in word.iter().enumerate() {
                if widx > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", sym)?;
            }
        }
        write!(f, "]")
    }
}

/// Linear combination of component terms with exact coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSum {
    m: usize,
    terms: BTreeMap<ComponentKey, CRat>,
}

impl ComponentSum {
    pub fn zero(m: usize) -> Self {
        ComponentSum {
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

    pub fn iter(&self) -> impl Iterator<Item = (&ComponentKey, &CRat)> {
        self.terms.iter()
    }

    pub fn get(&self, key: &ComponentKey) -> Option<&CRat> {
        self.terms.get(key)
    }

    pub fn add_term(&mut self, key: ComponentKey, coeff: CRat) {
        use std::collections::btree_map::Entry;
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            Entry::Vacant(slot) => {
                slot.insert(coeff);
            }
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += coeff;
                if slot.get().is_zero() {
                    slot.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &ComponentSum) -> ComponentSum {
        assert_eq!(self.m, other.m, "mixed dimensions");
        let mut out = self.clone();
        for (key, coeff) in &other.terms {
            out.add_term(key.clone(), coeff.clone());
        }
        out
    }

    pub fn scale(&self, c: &CRat) -> ComponentSum {
        let mut out = ComponentSum::zero(self.m);
        if c.is_zero() {
            return out;
        }
        for (key, coeff) in &self.terms {
            out.terms.insert(key.clone(), coeff * c);
        }
        out
    }

    /// Terms whose resolvent powers equal `alpha`.
    pub fn filter_alpha(&self, alpha: &[u32]) -> ComponentSum {
        let mut out = ComponentSum::zero(self.m);
        for (key, coeff) in &self.terms {
            if key.alpha == alpha {
                out.terms.insert(key.clone(), coeff.clone());
            }
        }
        out
    }

    /// One line per term, sorted by key; stable under re-runs.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        for (key, coeff) in &self.terms {
            out.push_str(&format!("{} * {}\n", coeff, key));
        }
        out
    }
}

/// Difference `a - b`.
pub fn diff(a: &ComponentSum, b: &ComponentSum) -> ComponentSum {
    a.add(&b.scale(&CRat::from_int(-1)))
}

// ---------------------------------------------------------------------------
// Permutation machinery.
// ---------------------------------------------------------------------------

/// Heap's algorithm; calls `f` on every permutation of `0..n`, identity first.
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            f(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Multiplicity of each contracted pair pattern over all arrangements of the
/// values at the `barred` positions (unbarred positions keep their label).
/// Arrangements are counted with repetition: permutations acting trivially
/// on repeated labels still count, which is what absorbs the per-slot
/// factorial weights of the derivative calculus.
pub fn masked_pair_multiplicities(labels: &[Axis], barred: &[bool]) -> BTreeMap<PairList, u64> {
    assert_eq!(labels.len(), barred.len(), "mask length mismatch");
    assert!(labels.len() % 2 == 0, "odd label count has no pair pattern");
    let bpos: Vec<usize> = (0..labels.len()).filter(|&i| barred[i]).collect();
    let bvals: Vec<Axis> = bpos.iter().map(|&i| labels[i]).collect();
    let mut out: BTreeMap<PairList, u64> = BTreeMap::new();
    let mut w = labels.to_vec();
    for_each_permutation(bpos.len(), |perm| {
        for (slot, &p) in bpos.iter().enumerate() {
            w[p] = bvals[perm[slot]];
        }
        let pairs = canonical_pairs(w.chunks(2).map(|c| (c[0], c[1])).collect());
        *out.entry(pairs).or_insert(0) += 1;
    });
    out
}

/// Fully symmetrized pattern multiplicities: every position participates.
pub fn pair_pattern_multiplicities(labels: &[Axis]) -> BTreeMap<PairList, u64> {
    masked_pair_multiplicities(labels, &vec![true; labels.len()])
}

// ---------------------------------------------------------------------------
// Derivative splitting.
// ---------------------------------------------------------------------------

/// Splitting of `2N` derivative positions over slots with prescribed
/// degrees. `weight` is the Taylor factor `1/prod(beta_i!)`; `assignments`
/// lists every position-to-slot map realizing the degrees. Odd total degree
/// yields no assignments: such terms vanish under the Gaussian moment.
#[derive(Debug, Clone)]
pub struct LeibnizSplit {
    pub weight: Rat,
    pub assignments: Vec<Vec<usize>>,
}

pub fn leibniz_partition(slot_degrees: &[u32]) -> LeibnizSplit {
    let total: u32 = slot_degrees.iter().sum();
    if total % 2 == 1 {
        return LeibnizSplit {
            weight: rint(0),
            assignments: Vec::new(),
        };
    }
    let mut denom = BigInt::from(1);
    for &deg in slot_degrees {
        denom *= factorial(deg);
    }
    let weight = Rat::new(BigInt::from(1), denom);
    let mut assignments = Vec::new();
    let mut remaining: Vec<u32> = slot_degrees.to_vec();
    let mut current = Vec::with_capacity(total as usize);
    fill_assignments(
        total as usize,
        &mut remaining,
        &mut current,
        &mut assignments,
    );
    LeibnizSplit {
        weight,
        assignments,
    }
}

fn fill_assignments(
    left: usize,
    remaining: &mut Vec<u32>,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if left == 0 {
        out.push(current.clone());
        return;
    }
    for slot in 0..remaining.len() {
        if remaining[slot] == 0 {
            continue;
        }
        remaining[slot] -= 1;
        current.push(slot);
        fill_assignments(left - 1, remaining, current, out);
        current.pop();
        remaining[slot] += 1;
    }
}

// ---------------------------------------------------------------------------
// Expansion of sandwiched sums into components.
// ---------------------------------------------------------------------------

/// Result of expanding a sandwiched sum: the component terms plus the number
/// of input terms dropped because their covector degree was odd.
#[derive(Debug, Clone)]
pub struct ComponentExpansion {
    pub sum: ComponentSum,
    pub dropped_odd: usize,
}

/// Expand every sandwiched term into moment components. For each term the
/// covector monomials of all slots are flattened into one label sequence;
/// every arrangement of that sequence is contracted into consecutive pairs
/// and accumulated. The slot words are untouched: only the pair pattern
/// varies over arrangements.
pub fn expand_components(sum: &ResolventSum) -> ComponentExpansion {
    let m = sum.m();
    let mut out = ComponentSum::zero(m);
    let mut dropped = 0usize;
    for (key, coeff) in sum.iter() {
        let mut base: Vec<Axis> = Vec::new();
        for slot in &key.slots {
            base.extend(slot.xi.axes());
        }
        if base.len() % 2 == 1 {
            dropped += 1;
            continue;
        }
        let words: Vec<Vec<CoeffSymbol>> = key.slots.iter().map(|s| s.word.clone()).collect();
        for (pattern, count) in pair_pattern_multiplicities(&base) {
            let ckey = ComponentKey::new(key.alpha.clone(), pattern, words.clone());
            out.add_term(ckey, coeff.scale(&rint(count as i64)));
        }
    }
    ComponentExpansion {
        sum: out,
        dropped_odd: dropped,
    }
}

/// Expansion of the full second-order parametrix term at dimension `m`.
pub fn v2_components_engine(m: usize) -> Result<ComponentExpansion, Heat2Error> {
    let orders = crate::symcalc::resolvent_terms(m, 2)
        .map_err(|e| Heat2Error::InvalidInput(e.to_string()))?;
    let b2 = orders
        .into_iter()
        .nth(2)
        .expect("recursion returns orders 0..=2");
    Ok(expand_components(&b2))
}

// ---------------------------------------------------------------------------
// Grouped (compact) form of the second-order term.
// ---------------------------------------------------------------------------

/// One-slot or two-slot family of the grouped form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V2Part {
    I,
    II,
}

/// One factor of a slot product in the grouped form. The `usize` arguments
/// index into the free-axis tuple of the summand.
#[derive(Debug, Clone, Copy)]
pub enum FactorTag {
    /// Covector derivative of the quadratic symbol part.
    DP2(usize),
    /// Second covector derivative of the quadratic symbol part.
    D2P2(usize, usize),
    /// Algebra derivation of the quadratic symbol part.
    NablaP2(usize),
    /// Second algebra derivation of the quadratic symbol part.
    Nabla2P2(usize, usize),
    /// Mixed derivative `D_a nabla_b` of the quadratic symbol part.
    DNablaP2(usize, usize),
    /// Linear symbol part.
    P1,
    /// Covector derivative of the linear symbol part.
    DP1(usize),
    /// Algebra derivation of the linear symbol part.
    NablaP1(usize),
    /// Constant symbol part.
    P0,
}

const FREE_AXIS_NAMES: [&str; 2] = ["s", "t"];

impl FactorTag {
    fn expr(&self, m: usize, axes: &[Axis]) -> SlotExpr {
        match *self {
            FactorTag::DP2(a) => SlotExpr::d_p2(m, axes[a]),
            FactorTag::D2P2(a, b) => SlotExpr::d2_p2(m, axes[a], axes[b]),
            FactorTag::NablaP2(a) => SlotExpr::nabla_p2(m, axes[a]),
            FactorTag::Nabla2P2(a, b) => SlotExpr::nabla2_p2(m, axes[a], axes[b]),
            FactorTag::DNablaP2(a, b) => SlotExpr::d_nabla_p2(m, axes[a], axes[b]),
            FactorTag::P1 => SlotExpr::p1(m),
            FactorTag::DP1(a) => SlotExpr::d_p1(m, axes[a]),
            FactorTag::NablaP1(a) => SlotExpr::nabla_p1(m, axes[a]),
            FactorTag::P0 => SlotExpr::p0(m),
        }
    }

    fn label(&self) -> String {
        let n = |a: usize| FREE_AXIS_NAMES[a];
        match *self {
            FactorTag::DP2(a) => format!("(D_{} p2)", n(a)),
            FactorTag::D2P2(a, b) => format!("(D2_{}{} p2)", n(a), n(b)),
            FactorTag::NablaP2(a) => format!("(nabla_{} p2)", n(a)),
            FactorTag::Nabla2P2(a, b) => format!("(nabla2_{}{} p2)", n(a), n(b)),
            FactorTag::DNablaP2(a, b) => format!("(D_{} nabla_{} p2)", n(a), n(b)),
            FactorTag::P1 => "(p1)".to_string(),
            FactorTag::DP1(a) => format!("(D_{} p1)", n(a)),
            FactorTag::NablaP1(a) => format!("(nabla_{} p1)", n(a)),
            FactorTag::P0 => "(p0)".to_string(),
        }
    }
}

/// One summand of the grouped second-order term: an integer (or Gaussian
/// integer) coefficient times a sandwich of slot products, summed over the
/// listed number of free axes.
#[derive(Debug, Clone)]
pub struct CompactTerm {
    pub part: V2Part,
    pub alpha: &'static [u32],
    pub coeff: CRat,
    pub free_axes: usize,
    pub slots: &'static [&'static [FactorTag]],
}

impl CompactTerm {
    /// Rebuild the exact sandwiched sum of this summand at dimension `m`.
    pub fn build(&self, m: usize) -> ResolventSum {
        let mut out = ResolventSum::zero(m);
        for axes in axis_tuples(m, self.free_axes) {
            let exprs: Vec<SlotExpr> = self
                .slots
                .iter()
                .map(|factors| {
                    let mut it = factors.iter();
                    let first = it
                        .next()
                        .expect("every slot has at least one factor")
                        .expr(m, &axes);
                    it.fold(first, |acc, tag| acc.mul(&tag.expr(m, &axes)))
                })
                .collect();
            out = out.add(&sandwich(m, self.alpha, &exprs, self.coeff.clone()));
        }
        out
    }
}

impl fmt::Display for CompactTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alpha: Vec<String> = self.alpha.iter().map(|a| a.to_string()).collect();
        write!(f, "({}) ", self.coeff)?;
        if self.free_axes > 0 {
            write!(
                f,
                "sum_{{{}}} ",
                FREE_AXIS_NAMES[..self.free_axes].join(",")
            )?;
        }
        write!(f, "F_{{{}}}[", alpha.join(","))?;
        for (idx, factors) in self.slots.iter().enumerate() {
            if idx > 0 {
                write!(f, " (x) ")?;
            }
            for tag in factors.iter() {
                write!(f, "{}", tag.label())?;
            }
        }
        write!(f, "]")
    }
}

pub(crate) fn axis_tuples(m: usize, n: usize) -> Vec<Vec<Axis>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * m);
        for t in &out {
            for a in 1..=(m as Axis) {
                let mut t2 = t.clone();
                t2.push(a);
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

/// The grouped second-order term: thirteen summands in eight sandwich
/// shapes. Slot products are written left to right in operator order; two
/// slots are separated by one resolvent factor, as recorded in `alpha`.
pub fn v2_general() -> Vec<CompactTerm> {
    use FactorTag::*;
    vec![
        // One-slot family.
        CompactTerm {
            part: V2Part::I,
            alpha: &[2, 1],
            coeff: CRat::real(-1, 2),
            free_axes: 2,
            slots: &[&[D2P2(0, 1), Nabla2P2(0, 1)]],
        },
        CompactTerm {
            part: V2Part::I,
            alpha: &[2, 1],
            coeff: CRat::imag(-1, 1),
            free_axes: 1,
            slots: &[&[DP2(0), NablaP1(0)]],
        },
        CompactTerm {
            part: V2Part::I,
            alpha: &[3, 1],
            coeff: CRat::one(),
            free_axes: 2,
            slots: &[&[DP2(0), DP2(1), Nabla2P2(0, 1)]],
        },
        CompactTerm {
            part: V2Part::I,
            alpha: &[1, 1],
            coeff: CRat::from_int(-1),
            free_axes: 0,
            slots: &[&[P0]],
        },
        // Two-slot family.
        CompactTerm {
            part: V2Part::II,
            alpha: &[2, 1, 1],
            coeff: CRat::one(),
            free_axes: 2,
            slots: &[&[DP2(0), DNablaP2(1, 0)], &[NablaP2(1)]],
        },
        CompactTerm {
            part: V2Part::II,
            alpha: &[2, 1, 1],
            coeff: CRat::one(),
            free_axes: 2,
            slots: &[&[D2P2(0, 1), NablaP2(0)], &[NablaP2(1)]],
        },
        CompactTerm {
            part: V2Part::II,
            alpha: &[2, 1, 1],
            coeff: CRat::imag(1, 1),
            free_axes: 1,
            slots: &[&[DP2(0), NablaP2(0)], &[P1]],
        },
        // The mixed summand: the linear symbol part rides inside the first
        // slot, the derivation lands in the second.
        CompactTerm {
            part: V2Part::II,
            alpha: &[2, 1, 1],
            coeff: CRat::imag(1, 1),
            free_axes: 1,
            slots: &[&[DP2(0), P1], &[NablaP2(0)]],
        },
        CompactTerm {
            part: V2Part::II,
            alpha: &[3, 1, 1],
            coeff: CRat::from_int(-2),
            free_axes: 2,
            slots: &[&[DP2(0), DP2(1), NablaP2(0)], &[NablaP2(1)]],
        },
        CompactTerm {
            part: V2Part::II,
            alpha: &[2, 2, 1],
            coeff: CRat::from_int(-1),
            free_axes: 2,
            slots: &[&[DP2(0), NablaP2(0)], &[DP2(1), NablaP2(1)]],
        },
        CompactTerm {
            part: V2Part::II,
            alpha: &[1, 2, 1],
            coeff: CRat::imag(1, 1),
            free_axes: 1,
            slots: &[&[P1], &[DP2(0), NablaP2(0)]],
        },
        CompactTerm {
            part: V2Part::II,
            alpha: &[1, 1, 1],
            coeff: CRat::one(),
            free_axes: 0,
            slots: &[&[P1], &[P1]],
        },
        CompactTerm {
            part: V2Part::II,
            alpha: &[1, 1, 1],
            coeff: CRat::imag(-1, 1),
            free_axes: 1,
            slots: &[&[DP1(0)], &[NablaP2(0)]],
        },
    ]
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CompTermJson {
    coeff: String,
    alpha: Vec<u32>,
    pairs: Vec<Vec<u8>>,
    words: Vec<Vec<SymbolJson>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CompSumJson {
    schema_version: u32,
    m: usize,
    terms: Vec<CompTermJson>,
}

impl ComponentSum {
    pub fn to_json(&self) -> String {
        let terms: Vec<CompTermJson> = self
            .terms
            .iter()
            .map(|(key, coeff)| CompTermJson {
                coeff: coeff.to_string(),
                alpha: key.alpha.clone(),
                pairs: key.pairs.iter().map(|&(a, b)| vec![a, b]).collect(),
                words: key
                    .words
                    .iter()
                    .map(|w| w.iter().map(symbol_to_json).collect())
                    .collect(),
            })
            .collect();
        let doc = CompSumJson {
            schema_version: SCHEMA_VERSION,
            m: self.m,
            terms,
        };
        serde_json::to_string_pretty(&doc).expect("serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<ComponentSum, Heat2Error> {
        let doc: CompSumJson =
            serde_json::from_str(text).map_err(|e| Heat2Error::Schema(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Heat2Error::Schema(format!(
                "unsupported schema version {}",
                doc.schema_version
            )));
        }
        let mut out = ComponentSum::zero(doc.m);
        for term in doc.terms {
            let coeff: CRat = term
                .coeff
                .parse()
                .map_err(|e: crate::exact::ParseExactError| Heat2Error::Schema(e.to_string()))?;
            if term.alpha.len() != term.words.len() + 1 {
                return Err(Heat2Error::Schema("alpha length must be slots + 1".into()));
            }
            let mut pairs = PairList::new();
            for p in term.pairs {
                if p.len() != 2 {
                    return Err(Heat2Error::Schema("pair must have two entries".into()));
                }
                if p[0] == 0 || p[1] == 0 || p[0] as usize > doc.m || p[1] as usize > doc.m {
                    return Err(Heat2Error::Schema("pair axis out of range".into()));
                }
                pairs.push((p[0], p[1]));
            }
            let mut words = Vec::with_capacity(term.words.len());
            for word in term.words {
                let mut syms = Vec::with_capacity(word.len());
                for s in word {
                    let sym =
                        symbol_from_json(&s).map_err(|e| Heat2Error::Schema(e.to_string()))?;
                    if sym.max_axis() as usize > doc.m {
                        return Err(Heat2Error::Schema(format!(
                            "symbol {} refers to an axis beyond m = {}",
                            sym, doc.m
                        )));
                    }
                    syms.push(sym);
                }
                words.push(syms);
            }
            out.add_term(ComponentKey::new(term.alpha, pairs, words), coeff);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcalc::{resolvent_terms, XiMono};

    fn parametrix_order(m: usize, order: usize) -> ResolventSum {
        resolvent_terms(m, order)
            .expect("valid input")
            .into_iter()
            .nth(order)
            .expect("orders 0..=order")
    }

    #[test]
    fn leibniz_partition_weights_and_counts() {
        let split = leibniz_partition(&[1, 1, 2, 2]);
        assert_eq!(split.weight, rat_q(1, 4));
        assert_eq!(split.assignments.len(), 180);
        for a in &split.assignments {
            assert_eq!(a.len(), 6);
            assert_eq!(a.iter().filter(|&&s| s == 2).count(), 2);
        }

        let single = leibniz_partition(&[2]);
        assert_eq!(single.weight, rat_q(1, 2));
        assert_eq!(single.assignments, vec![vec![0, 0]]);

        let odd = leibniz_partition(&[1, 1, 1]);
        assert!(odd.assignments.is_empty());
    }

    fn rat_q(n: i64, d: i64) -> Rat {
        crate::exact::rat(n, d)
    }

    #[test]
    fn symmetrizer_splits_four_indices_as_eight_plus_sixteen() {
        let mults = pair_pattern_multiplicities(&[1, 2, 3, 3]);
        let total: u64 = mults.values().sum();
        assert_eq!(total, 24);
        assert_eq!(mults.get(&vec![(1, 2), (3, 3)]), Some(&8));
        assert_eq!(mults.get(&vec![(1, 3), (2, 3)]), Some(&16));
        assert_eq!(mults.len(), 2);
    }

    #[test]
    fn symmetrizer_splits_six_indices_with_forty_eight_generic() {
        let mults = pair_pattern_multiplicities(&[1, 1, 2, 2, 3, 3]);
        let total: u64 = mults.values().sum();
        assert_eq!(total, 720);
        assert_eq!(mults.get(&vec![(1, 1), (2, 2), (3, 3)]), Some(&48));

        let partial = pair_pattern_multiplicities(&[1, 1, 1, 1, 2, 2]);
        assert_eq!(partial.get(&vec![(1, 1), (1, 1), (2, 2)]), Some(&144));

        let coincident = pair_pattern_multiplicities(&[1, 1, 1, 1, 1, 1]);
        assert_eq!(coincident.get(&vec![(1, 1), (1, 1), (1, 1)]), Some(&720));
    }

    #[test]
    fn masked_symmetrizer_keeps_unbarred_positions_fixed() {
        // Only the last two positions permute; the first pair is frozen.
        let mults = masked_pair_multiplicities(&[1, 2, 3, 4], &[false, false, true, true]);
        let total: u64 = mults.values().sum();
        assert_eq!(total, 2);
        assert_eq!(mults.get(&vec![(1, 2), (3, 4)]), Some(&2));
    }

    #[test]
    fn odd_degree_terms_all_vanish() {
        let b1 = parametrix_order(2, 1);
        assert!(!b1.is_empty());
        let expansion = expand_components(&b1);
        assert!(expansion.sum.is_empty());
        assert_eq!(expansion.dropped_odd, b1.len());
    }

    #[test]
    fn second_order_expansion_drops_nothing() {
        let b2 = parametrix_order(2, 2);
        let expansion = expand_components(&b2);
        assert_eq!(expansion.dropped_odd, 0);
        assert!(!expansion.sum.is_empty());
    }

    #[test]
    fn two_linear_slots_give_coefficient_two() {
        let m = 2;
        let sum = sandwich(
            m,
            &[1, 1, 1],
            &[SlotExpr::p1(m), SlotExpr::p1(m)],
            CRat::one(),
        );
        let expansion = expand_components(&sum);
        assert_eq!(expansion.dropped_odd, 0);
        let key = ComponentKey::new(
            vec![1, 1, 1],
            vec![(1, 2)],
            vec![vec![CoeffSymbol::r(1)], vec![CoeffSymbol::r(2)]],
        );
        assert_eq!(expansion.sum.get(&key), Some(&CRat::from_int(2)));
        let mirrored = ComponentKey::new(
            vec![1, 1, 1],
            vec![(1, 2)],
            vec![vec![CoeffSymbol::r(2)], vec![CoeffSymbol::r(1)]],
        );
        assert_eq!(expansion.sum.get(&mirrored), Some(&CRat::from_int(2)));
        let diagonal = ComponentKey::new(
            vec![1, 1, 1],
            vec![(1, 1)],
            vec![vec![CoeffSymbol::r(1)], vec![CoeffSymbol::r(1)]],
        );
        assert_eq!(expansion.sum.get(&diagonal), Some(&CRat::from_int(2)));
    }

    #[test]
    fn quadratic_cross_term_collects_minus_four_i() {
        let m = 2;
        let mut sum = ResolventSum::zero(m);
        for s in 1..=(m as Axis) {
            sum = sum.add(&sandwich(
                m,
                &[2, 1],
                &[SlotExpr::d_p2(m, s).mul(&SlotExpr::nabla_p1(m, s))],
                CRat::imag(-1, 1),
            ));
        }
        let expansion = expand_components(&sum);
        let key = ComponentKey::new(
            vec![2, 1],
            vec![(1, 1)],
            vec![vec![CoeffSymbol::k(1, 1), CoeffSymbol::r(1).derived(&[1])]],
        );
        assert_eq!(expansion.sum.get(&key), Some(&CRat::imag(-4, 1)));
    }

    #[test]
    fn empty_moment_component_is_kept() {
        let m = 2;
        let sum = sandwich(m, &[1, 1], &[SlotExpr::p0(m)], CRat::from_int(-1));
        let expansion = expand_components(&sum);
        let key = ComponentKey::new(vec![1, 1], vec![], vec![vec![CoeffSymbol::p0()]]);
        assert_eq!(expansion.sum.get(&key), Some(&CRat::from_int(-1)));
        assert_eq!(expansion.sum.len(), 1);
    }

    #[test]
    fn compact_groups_rebuild_the_engine_term() {
        for m in 1..=2usize {
            let b2 = parametrix_order(m, 2);
            let mut rebuilt = ResolventSum::zero(m);
            for term in v2_general() {
                rebuilt = rebuilt.add(&term.build(m));
            }
            let delta = crate::symcalc::golden::diff(&rebuilt, &b2);
            assert!(delta.is_empty(), "m = {}: residual {:?}", m, delta.len());
        }
    }

    #[test]
    fn compact_list_has_the_stated_shape() {
        let terms = v2_general();
        let mut part_two_alphas: Vec<Vec<u32>> = terms
            .iter()
            .filter(|t| t.part == V2Part::II)
            .map(|t| t.alpha.to_vec())
            .collect();
        part_two_alphas.sort();
        part_two_alphas.dedup();
        assert_eq!(
            part_two_alphas,
            vec![
                vec![1, 1, 1],
                vec![1, 2, 1],
                vec![2, 1, 1],
                vec![2, 2, 1],
                vec![3, 1, 1]
            ]
        );

        let three_one_one: Vec<&CompactTerm> = terms
            .iter()
            .filter(|t| t.alpha == [3, 1, 1])
            .collect();
        assert_eq!(three_one_one.len(), 1);
        assert_eq!(three_one_one[0].coeff, CRat::from_int(-2));

        let constant_row: Vec<&CompactTerm> =
            terms.iter().filter(|t| t.alpha == [1, 1]).collect();
        assert_eq!(constant_row.len(), 1);
        assert_eq!(constant_row[0].coeff, CRat::from_int(-1));
        assert!(matches!(constant_row[0].slots[0][0], FactorTag::P0));
    }

    #[test]
    fn component_json_roundtrip() {
        let m = 2;
        let expansion = expand_components(&parametrix_order(m, 2));
        let text = expansion.sum.to_json();
        let back = ComponentSum::from_json(&text).expect("roundtrip");
        assert_eq!(back, expansion.sum);
    }

    #[test]
    fn component_json_rejects_bad_shapes() {
        let bad_version = r#"{"schema_version": 999, "m": 1, "terms": []}"#;
        assert!(ComponentSum::from_json(bad_version).is_err());

        let bad_pair = r#"{
            "schema_version": 1, "m": 1,
            "terms": [{"coeff": "1", "alpha": [1, 1], "pairs": [[1, 2]],
                       "words": [[{"kind": "P0", "deriv": []}]]}]
        }"#;
        assert!(ComponentSum::from_json(bad_pair).is_err());

        let bad_alpha = r#"{
            "schema_version": 1, "m": 1,
            "terms": [{"coeff": "1", "alpha": [1], "pairs": [],
                       "words": [[{"kind": "P0", "deriv": []}]]}]
        }"#;
        assert!(ComponentSum::from_json(bad_alpha).is_err());
    }

    #[test]
    fn display_is_reader_friendly() {
        let key = ComponentKey::new(
            vec![2, 1, 1],
            vec![(2, 1)],
            vec![
                vec![CoeffSymbol::k(1, 1), CoeffSymbol::r(2).derived(&[1])],
                vec![CoeffSymbol::p0()],
            ],
        );
        assert_eq!(format!("{}", key), "F_{2,1,1;(1,2)}[k11 r2'(1) | p0]");
        let empty = ComponentKey::new(vec![1, 1], vec![], vec![vec![]]);
        assert_eq!(format!("{}", empty), "F_{1,1;-}[1]");
        let _ = XiMono::one(1);
    }
}
