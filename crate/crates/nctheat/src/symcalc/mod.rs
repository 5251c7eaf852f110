//! Noncommutative symbol calculus for elliptic second-order operators.
//!
//! The operators handled here have symbols `p = p2 + p1 + p0` with
//! `p2(xi) = sum k_{ij} xi_i xi_j`, `p1(xi) = sum r_s xi_s`, and `p0`,
//! where the coefficients are elements of a noncommutative algebra
//! carrying commuting derivations `nabla_1 .. nabla_m`.
//!
//! Standing assumption (ellipticity through a common functional calculus):
//! the quadratic coefficient entries `k_{ij}` are symmetric and mutually
//! commuting. Underived `k_{ij}` therefore commute with the leading
//! resolvent factor `b0 = (p2 - lambda)^{-1}` and with each other, while
//! derived coefficients `nabla... k_{ij}` and the lower-order coefficients
//! `r_s`, `p0` are general algebra elements with no commutation assumed.
//!
//! Terms of the resolvent expansion are stored in the sandwiched normal
//! form `coeff * b0^{a_0} rho_1 b0^{a_1} ... rho_n b0^{a_n}` where each
//! slot `rho_i` is a scalar monomial in `xi` times an ordered word of
//! coefficient symbols. Canonicalization merges slots made purely of
//! underived quadratic entries rightward into the next slot (collecting
//! the b0 powers they commute through) and sorts maximal commuting runs
//! inside each word, so mechanically derived expansions land in the same
//! form as hand-collected ones.
//!
//! Two derivatives drive everything:
//! * [`ResolventSum::d_xi`]: d/d xi_s. Acting on `b0^a` it inserts
//!   `-D_s p2` clusters between the powers; acting on a slot it lowers
//!   its xi monomial.
//! * [`ResolventSum::nabla`]: the horizontal derivation. Acting on `b0^a`
//!   it inserts `-nabla_s p2` slots; acting on a word it applies the
//!   Leibniz rule symbol by symbol.

pub mod golden;
pub mod scalar;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{rat, rint, CRat};

/// Errors produced by the symbol calculus layer.
#[derive(Debug, Error)]
pub enum SymcalcError {
    /// Input violated a structural precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A term failed the homogeneity bookkeeping check.
    #[error("homogeneity violation in term `{term}`: xi-degree {found}, expected {expected}")]
    Homogeneity {
        term: String,
        found: i64,
        expected: i64,
    },
    /// Serialized data did not match the schema.
    #[error("schema error: {0}")]
    Schema(String),
}

/// 1-based direction index; directions run over `1..=m`.
pub type Axis = u8;

/// Which coefficient of the operator a symbol factor refers to.
///
/// `K { i, j }` is a quadratic entry (stored with `i <= j`), `R { s }` a
/// first-order coefficient, `P0` the zero-order coefficient.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SymKind {
    K { i: Axis, j: Axis },
    R { s: Axis },
    P0,
}

/// One coefficient symbol: a base coefficient with zero or more
/// derivations applied. `deriv` holds the axes of the applied
/// derivations, kept sorted (derivations commute).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoeffSymbol {
    pub kind: SymKind,
    pub deriv: Vec<Axis>,
}

impl CoeffSymbol {
    /// Quadratic entry `k_{ij}`; indices are symmetrized to `i <= j`.
    pub fn k(i: Axis, j: Axis) -> Self {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        CoeffSymbol {
            kind: SymKind::K { i, j },
            deriv: Vec::new(),
        }
    }

    /// First-order coefficient `r_s`.
    pub fn r(s: Axis) -> Self {
        CoeffSymbol {
            kind: SymKind::R { s },
            deriv: Vec::new(),
        }
    }

    /// Zero-order coefficient.
    pub fn p0() -> Self {
        CoeffSymbol {
            kind: SymKind::P0,
            deriv: Vec::new(),
        }
    }

    /// Apply further derivations (sorted into the existing list).
    pub fn derived(mut self, axes: &[Axis]) -> Self {
        self.deriv.extend_from_slice(axes);
        self.deriv.sort_unstable();
        self
    }

    /// Underived quadratic entries commute with `b0` and one another.
    pub fn is_central(&self) -> bool {
        matches!(self.kind, SymKind::K { .. }) && self.deriv.is_empty()
    }

    pub fn max_axis(&self) -> Axis {
        let base = match self.kind {
            SymKind::K { i, j } => i.max(j),
            SymKind::R { s } => s,
            SymKind::P0 => 0,
        };
        base.max(self.deriv.iter().copied().max().unwrap_or(0))
    }
}

impl fmt::Display for CoeffSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SymKind::K { i, j } => write!(f, "k{}{}", i, j)?,
            SymKind::R { s } => write!(f, "r{}", s)?,
            SymKind::P0 => write!(f, "p0")?,
        }
        if !self.deriv.is_empty() {
            let axes: Vec<String> = self.deriv.iter().map(|a| a.to_string()).collect();
            write!(f, "'({})", axes.join(","))?;
        }
        Ok(())
    }
}

/// Monomial in the scalar covector variables: exponent per direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct XiMono(pub Vec<u8>);

impl XiMono {
    pub fn one(m: usize) -> Self {
        XiMono(vec![0; m])
    }

    pub fn unit(m: usize, s: Axis) -> Self {
        let mut e = vec![0u8; m];
        e[(s - 1) as usize] += 1;
        XiMono(e)
    }

    pub fn deg(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn mul(&self, other: &XiMono) -> XiMono {
        XiMono(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Axes of the monomial listed with multiplicity, ascending.
    pub fn axes(&self) -> Vec<Axis> {
        let mut out = Vec::with_capacity(self.deg() as usize);
        for (idx, &e) in self.0.iter().enumerate() {
            for _ in 0..e {
                out.push((idx + 1) as Axis);
            }
        }
        out
    }

    /// d/d xi_s of the monomial: `(exponent, lowered monomial)` or `None`.
    pub fn lower(&self, s: Axis) -> Option<(u32, XiMono)> {
        let idx = (s - 1) as usize;
        if self.0[idx] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[idx] -= 1;
        Some((self.0[idx] as u32, XiMono(e)))
    }

    fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }
}

impl PartialOrd for XiMono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for XiMono {
    /// Graded lexicographic: total degree first, then exponents.
    fn cmp(&self, other: &Self) -> Ordering {
        self.deg()
            .cmp(&other.deg())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Display for XiMono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return Ok(());
        }
        for (idx, &e) in self.0.iter().enumerate() {
            match e {
                0 => {}
                1 => write!(f, " x{}", idx + 1)?,
                _ => write!(f, " x{}^{}", idx + 1, e)?,
            }
        }
        Ok(())
    }
}

/// One slot of a sandwiched term: a xi monomial times an ordered word of
/// coefficient symbols. The word order is the operator product order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub xi: XiMono,
    pub word: Vec<CoeffSymbol>,
}

impl Slot {
    pub fn new(xi: XiMono, word: Vec<CoeffSymbol>) -> Self {
        Slot { xi, word }
    }

    /// True when every factor commutes with `b0`.
    pub fn is_pure_central(&self) -> bool {
        self.word.iter().all(CoeffSymbol::is_central)
    }

    /// Sort each maximal run of commuting symbols in the word.
    pub(crate) fn sort_central_runs(&mut self) {
        let mut start = 0;
        while start < self.word.len() {
            if !self.word[start].is_central() {
                start += 1;
                continue;
            }
            let mut end = start;
            while end < self.word.len() && self.word[end].is_central() {
                end += 1;
            }
            self.word[start..end].sort();
            start = end;
        }
    }
}

impl PartialOrd for Slot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Slot {
    fn cmp(&self, other: &Self) -> Ordering {
        self.xi
            .cmp(&other.xi)
            .then_with(|| self.word.len().cmp(&other.word.len()))
            .then_with(|| self.word.cmp(&other.word))
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        let mut first = true;
        for sym in &self.word {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{}", sym)?;
            first = false;
        }
        if self.word.is_empty() {
            write!(f, "1")?;
        }
        write!(f, "{})", self.xi)
    }
}

/// Structural part of a term: powers `alpha` and the slots between them.
/// `alpha.len() == slots.len() + 1`; every `alpha` entry is `>= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermKey {
    pub alpha: Vec<u32>,
    pub slots: Vec<Slot>,
}

impl TermKey {
    /// Total xi degree contributed by the slots.
    pub fn xi_degree(&self) -> u32 {
        self.slots.iter().map(|s| s.xi.deg()).sum()
    }

    /// Total number of `b0` factors.
    pub fn alpha_sum(&self) -> u32 {
        self.alpha.iter().sum()
    }

    /// Homogeneity degree in `(xi, sqrt(lambda))`: each `b0` counts -2.
    pub fn degree(&self) -> i64 {
        self.xi_degree() as i64 - 2 * self.alpha_sum() as i64
    }

    /// Bring the key to normal form: sort commuting runs inside each word,
    /// then merge every pure-central slot rightward into its successor,
    /// collecting the `b0` powers it commutes through.
    fn canonicalize(&mut self) {
        for slot in &mut self.slots {
            slot.sort_central_runs();
        }
        let mut i = self.slots.len();
        while i > 0 {
            i -= 1;
            if i + 1 < self.slots.len() && self.slots[i].is_pure_central() {
                let merged = self.slots.remove(i);
                let next = &mut self.slots[i];
                next.xi = merged.xi.mul(&next.xi);
                let mut word = merged.word;
                word.extend(next.word.drain(..));
                next.word = word;
                // b0^{a_i} (central) b0^{a_{i+1}} == b0^{a_i + a_{i+1}} (central).
                let a = self.alpha.remove(i + 1);
                self.alpha[i] += a;
                self.slots[i].sort_central_runs();
                // Re-examine the same position: chains of central slots.
                i += 1;
            }
        }
    }
}

impl PartialOrd for TermKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TermKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.alpha_sum()
            .cmp(&other.alpha_sum())
            .then_with(|| self.alpha.cmp(&other.alpha))
            .then_with(|| self.slots.cmp(&other.slots))
    }
}

impl fmt::Display for TermKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (idx, a) in self.alpha.iter().enumerate() {
            if *a == 1 {
                write!(f, "b0")?;
            } else {
                write!(f, "b0^{}", a)?;
            }
            if idx < self.slots.len() {
                write!(f, " {} ", self.slots[idx])?;
            }
        }
        Ok(())
    }
}

/// A finite sum of sandwiched terms with exact complex-rational
/// coefficients, closed under the operations of the calculus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolventSum {
    m: usize,
    terms: BTreeMap<TermKey, CRat>,
}

impl ResolventSum {
    pub fn zero(m: usize) -> Self {
        ResolventSum {
            m,
            terms: BTreeMap::new(),
        }
    }

    /// The leading factor `b0` itself: `alpha = (1)`, no slots.
    pub fn b0(m: usize) -> Self {
        let mut s = Self::zero(m);
        s.add_term(
            TermKey {
                alpha: vec![1],
                slots: Vec::new(),
            },
            CRat::one(),
        );
        s
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

    pub fn iter(&self) -> impl Iterator<Item = (&TermKey, &CRat)> {
        self.terms.iter()
    }

    /// Insert `coeff * key` after canonicalizing the key; zero
    /// coefficients are dropped so cancellation is automatic.
    pub fn add_term(&mut self, mut key: TermKey, coeff: CRat) {
        debug_assert_eq!(key.alpha.len(), key.slots.len() + 1);
        debug_assert!(key.alpha.iter().all(|&a| a >= 1));
        if coeff.is_zero() {
            return;
        }
        key.canonicalize();
        let entry = self.terms.entry(key).or_insert_with(CRat::zero);
        *entry += coeff;
        // Drop exact cancellations eagerly to keep sums tight.
        let dead: Vec<TermKey> = self
            .terms
            .iter()
            .filter(|(_, c)| c.is_zero())
            .map(|(k, _)| k.clone())
            .collect();
        for k in dead {
            self.terms.remove(&k);
        }
    }

    pub fn add(&self, other: &ResolventSum) -> ResolventSum {
        assert_eq!(self.m, other.m, "dimension mismatch");
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &CRat) -> ResolventSum {
        let mut out = Self::zero(self.m);
        for (k, coeff) in &self.terms {
            out.add_term(k.clone(), coeff.clone() * c.clone());
        }
        out
    }

    /// Re-normalize every term. Sums built through `add_term` are already
    /// canonical; this is the public idempotent entry point.
    pub fn canonicalize(&self) -> ResolventSum {
        let mut out = Self::zero(self.m);
        for (k, c) in &self.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    /// Horizontal derivation along axis `s`. Leibniz over word symbols
    /// plus the insertion rule on each `b0` power:
    /// `nabla_s(b0^a) = -sum_{j=0}^{a-1} b0^{j+1} (nabla_s p2) b0^{a-j}`.
    pub fn nabla(&self, s: Axis) -> ResolventSum {
        assert!(s >= 1 && (s as usize) <= self.m, "axis out of range");
        let mut out = Self::zero(self.m);
        for (key, coeff) in &self.terms {
            // Derive each word symbol in place.
            for (slot_idx, slot) in key.slots.iter().enumerate() {
                for (sym_idx, _) in slot.word.iter().enumerate() {
                    let mut k = key.clone();
                    let sym = k.slots[slot_idx].word[sym_idx].clone();
                    k.slots[slot_idx].word[sym_idx] = sym.derived(&[s]);
                    out.add_term(k, coeff.clone());
                }
            }
            // Insert -nabla_s p2 into each b0 power.
            for (pos, &a) in key.alpha.iter().enumerate() {
                for j in 0..a {
                    for (xi, word, c) in nabla_p2_monomials(self.m, s) {
                        let mut alpha = key.alpha.clone();
                        alpha[pos] = j + 1;
                        alpha.insert(pos + 1, a - j);
                        let mut slots = key.slots.clone();
                        slots.insert(pos, Slot::new(xi, word));
                        out.add_term(
                            TermKey { alpha, slots },
                            coeff.clone() * c.scale(&rat(-1, 1)),
                        );
                    }
                }
            }
        }
        out
    }

    /// d/d xi_s. Lowers slot monomials and inserts `-D_s p2` clusters
    /// into each `b0` power:
    /// `D_s(b0^a) = -sum_{j=0}^{a-1} b0^{j+1} (D_s p2) b0^{a-j}`.
    pub fn d_xi(&self, s: Axis) -> ResolventSum {
        assert!(s >= 1 && (s as usize) <= self.m, "axis out of range");
        let mut out = Self::zero(self.m);
        for (key, coeff) in &self.terms {
            for (slot_idx, slot) in key.slots.iter().enumerate() {
                if let Some((mult, lowered)) = slot.xi.lower(s) {
                    let mut k = key.clone();
                    k.slots[slot_idx].xi = lowered;
                    out.add_term(k, coeff.scale(&rat(mult as i64, 1)));
                }
            }
            for (pos, &a) in key.alpha.iter().enumerate() {
                for j in 0..a {
                    // D_s p2 = 2 sum_l k_{sl} xi_l (literal derivative).
                    for l in 1..=(self.m as Axis) {
                        let mut alpha = key.alpha.clone();
                        alpha[pos] = j + 1;
                        alpha.insert(pos + 1, a - j);
                        let mut slots = key.slots.clone();
                        slots.insert(
                            pos,
                            Slot::new(XiMono::unit(self.m, l), vec![CoeffSymbol::k(s, l)]),
                        );
                        out.add_term(TermKey { alpha, slots }, coeff.scale(&rat(-2, 1)));
                    }
                }
            }
        }
        out
    }

    /// Check `-2 * (number of b0 factors) + (xi degree) == expected` on
    /// every term.
    pub fn validate_homogeneity(&self, expected: i64) -> Result<(), SymcalcError> {
        for (key, _) in &self.terms {
            let found = key.degree();
            if found != expected {
                return Err(SymcalcError::Homogeneity {
                    term: key.to_string(),
                    found,
                    expected,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for ResolventSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (key, coeff)) in self.terms.iter().enumerate() {
            if idx > 0 {
                writeln!(f)?;
            }
            write!(f, "({}) {}", coeff, key)?;
        }
        Ok(())
    }
}

/// Monomials of `nabla_s p2 = sum_{i<=j} (2 - delta_{ij}) (nabla_s k_{ij}) xi_i xi_j`.
fn nabla_p2_monomials(m: usize, s: Axis) -> Vec<(XiMono, Vec<CoeffSymbol>, CRat)> {
    let mut out = Vec::new();
    for i in 1..=(m as Axis) {
        for j in i..=(m as Axis) {
            let c = if i == j { rint(1) } else { rint(2) };
            let xi = XiMono::unit(m, i).mul(&XiMono::unit(m, j));
            out.push((
                xi,
                vec![CoeffSymbol::k(i, j).derived(&[s])],
                CRat::from_rat(c),
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Plain symbol polynomials (no b0 factors) and the star-product terms.
// ---------------------------------------------------------------------------

/// A polynomial symbol: sum of `coeff * xi-monomial * word`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolPoly {
    m: usize,
    terms: BTreeMap<(XiMono, Vec<CoeffSymbol>), CRat>,
}

impl SymbolPoly {
    pub fn zero(m: usize) -> Self {
        SymbolPoly {
            m,
            terms: BTreeMap::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn add_mono(&mut self, xi: XiMono, word: Vec<CoeffSymbol>, coeff: CRat) {
        if coeff.is_zero() {
            return;
        }
        let entry = self
            .terms
            .entry((xi, word))
            .or_insert_with(CRat::zero);
        *entry += coeff;
        let dead: Vec<(XiMono, Vec<CoeffSymbol>)> = self
            .terms
            .iter()
            .filter(|(_, c)| c.is_zero())
            .map(|(k, _)| k.clone())
            .collect();
        for k in dead {
            self.terms.remove(&k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(XiMono, Vec<CoeffSymbol>), &CRat)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Quadratic part `sum_{i<=j} (2 - delta_{ij}) k_{ij} xi_i xi_j`.
    pub fn p2(m: usize) -> Self {
        let mut p = Self::zero(m);
        for i in 1..=(m as Axis) {
            for j in i..=(m as Axis) {
                let c = if i == j { rint(1) } else { rint(2) };
                p.add_mono(
                    XiMono::unit(m, i).mul(&XiMono::unit(m, j)),
                    vec![CoeffSymbol::k(i, j)],
                    CRat::from_rat(c),
                );
            }
        }
        p
    }

    /// First-order part `sum_s r_s xi_s`.
    pub fn p1(m: usize) -> Self {
        let mut p = Self::zero(m);
        for s in 1..=(m as Axis) {
            p.add_mono(XiMono::unit(m, s), vec![CoeffSymbol::r(s)], CRat::one());
        }
        p
    }

    /// Zero-order part.
    pub fn p0(m: usize) -> Self {
        let mut p = Self::zero(m);
        p.add_mono(XiMono::one(m), vec![CoeffSymbol::p0()], CRat::one());
        p
    }

    /// Scalar symbol `|xi|^2` (identity coefficient word).
    pub fn xi_norm_sq(m: usize) -> Self {
        let mut p = Self::zero(m);
        for s in 1..=(m as Axis) {
            let xi = XiMono::unit(m, s).mul(&XiMono::unit(m, s));
            p.add_mono(xi, Vec::new(), CRat::one());
        }
        p
    }

    pub fn nabla(&self, s: Axis) -> SymbolPoly {
        let mut out = Self::zero(self.m);
        for ((xi, word), coeff) in &self.terms {
            if word.is_empty() {
                continue;
            }
            for idx in 0..word.len() {
                let mut w = word.clone();
                let sym = w[idx].clone();
                w[idx] = sym.derived(&[s]);
                out.add_mono(xi.clone(), w, coeff.clone());
            }
        }
        out
    }

    pub fn d_xi(&self, s: Axis) -> SymbolPoly {
        let mut out = Self::zero(self.m);
        for ((xi, word), coeff) in &self.terms {
            if let Some((mult, lowered)) = xi.lower(s) {
                out.add_mono(lowered, word.clone(), coeff.scale(&rat(mult as i64, 1)));
            }
        }
        out
    }

    pub fn mul(&self, other: &SymbolPoly) -> SymbolPoly {
        assert_eq!(self.m, other.m, "dimension mismatch");
        let mut out = Self::zero(self.m);
        for ((xa, wa), ca) in &self.terms {
            for ((xb, wb), cb) in &other.terms {
                let mut w = wa.clone();
                w.extend(wb.iter().cloned());
                out.add_mono(xa.mul(xb), w, ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn add(&self, other: &SymbolPoly) -> SymbolPoly {
        assert_eq!(self.m, other.m, "dimension mismatch");
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_mono(k.0.clone(), k.1.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &CRat) -> SymbolPoly {
        let mut out = Self::zero(self.m);
        for (k, coeff) in &self.terms {
            out.add_mono(k.0.clone(), k.1.clone(), coeff.clone() * c.clone());
        }
        out
    }

    pub fn max_xi_degree(&self) -> u32 {
        self.terms.keys().map(|(xi, _)| xi.deg()).max().unwrap_or(0)
    }
}

/// `j`-th term of the product expansion of symbols:
/// `a_j(p, q) = ((-i)^j / j!) sum_{l_1..l_j} (D_{l_1}..D_{l_j} p)(nabla_{l_1}..nabla_{l_j} q)`.
///
/// `a_0(p, q) = p q`, `a_1(p, q) = -i (D_s p)(nabla_s q)`,
/// `a_2(p, q) = -(1/2) (D^2_{st} p)(nabla^2_{st} q)`.
pub fn star_aj(p: &SymbolPoly, q: &SymbolPoly, j: u32) -> SymbolPoly {
    assert_eq!(p.m(), q.m(), "dimension mismatch");
    let m = p.m();
    if j > p.max_xi_degree() {
        return SymbolPoly::zero(m);
    }
    // (-i)^j / j!
    let mut pref = CRat::one();
    for step in 1..=j {
        pref = pref * CRat::i().scale(&rat(-1, step as i64));
    }
    let mut out = SymbolPoly::zero(m);
    let tuples = axis_tuples(m, j);
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

/// All tuples in `{1..m}^j`.
fn axis_tuples(m: usize, j: u32) -> Vec<Vec<Axis>> {
    let mut tuples: Vec<Vec<Axis>> = vec![Vec::new()];
    for _ in 0..j {
        let mut next = Vec::with_capacity(tuples.len() * m);
        for t in &tuples {
            for ax in 1..=(m as Axis) {
                let mut t2 = t.clone();
                t2.push(ax);
                next.push(t2);
            }
        }
        tuples = next;
    }
    tuples
}

/// `a_j(b, p) * (-b0)` with `b` a sandwiched sum: the building block of
/// the recursion. The `D` derivatives act on `b`, the `nabla` derivatives
/// on the polynomial symbol `p`, and the product appends one slot and one
/// trailing `b0`.
fn aj_append(b: &ResolventSum, p: &SymbolPoly, j: u32) -> ResolventSum {
    assert_eq!(b.m(), p.m(), "dimension mismatch");
    let m = b.m();
    let mut pref = CRat::one();
    for step in 1..=j {
        pref = pref * CRat::i().scale(&rat(-1, step as i64));
    }
    // Trailing (-b0).
    pref = pref.scale(&rat(-1, 1));
    let mut out = ResolventSum::zero(m);
    for tup in &axis_tuples(m, j) {
        let mut db = b.clone();
        let mut np = p.clone();
        for &ax in tup {
            db = db.d_xi(ax);
            np = np.nabla(ax);
        }
        if np.is_empty() {
            continue;
        }
        for (key, bc) in db.iter() {
            for ((xi, word), pc) in np.iter() {
                let mut alpha = key.alpha.clone();
                alpha.push(1);
                let mut slots = key.slots.clone();
                slots.push(Slot::new(xi.clone(), word.clone()));
                out.add_term(
                    TermKey { alpha, slots },
                    bc.clone() * pc.clone() * pref.clone(),
                );
            }
        }
    }
    out
}

/// Terms `b_0, b_1, ..., b_order` of the resolvent expansion of
/// `p = p2 + p1 + p0` in `m` directions, by the recursion
/// `b_N = [ sum_{l=0}^{2} sum_{r=0}^{N-1} a_{l-2-r+N}(b_r, p_l) ] (-b0)`
/// starting from `b_0 = (p2 - lambda)^{-1}`.
///
/// Every returned sum is homogeneous: term `b_N` has degree `-2 - N`
/// when `xi` counts 1 and each `b0` counts -2.
pub fn resolvent_terms(m: usize, order: usize) -> Result<Vec<ResolventSum>, SymcalcError> {
    if m == 0 || m > 16 {
        return Err(SymcalcError::InvalidInput(format!(
            "dimension m = {} out of supported range 1..=16",
            m
        )));
    }
    let parts = [SymbolPoly::p0(m), SymbolPoly::p1(m), SymbolPoly::p2(m)];
    let mut bs = vec![ResolventSum::b0(m)];
    for n in 1..=order {
        let mut acc = ResolventSum::zero(m);
        for l in 0..=2usize {
            for r in 0..n {
                let j = l as i64 - 2 - r as i64 + n as i64;
                if j < 0 {
                    continue;
                }
                acc = acc.add(&aj_append(&bs[r], &parts[l], j as u32));
            }
        }
        acc.validate_homogeneity(-2 - n as i64)?;
        bs.push(acc);
    }
    Ok(bs)
}

// ---------------------------------------------------------------------------
// Serialization of resolvent sums.
// ---------------------------------------------------------------------------

/// Schema version for the JSON export of [`ResolventSum`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct FactorJson {
    xi: Vec<u8>,
    word: Vec<SymbolJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct SymbolJson {
    pub(crate) kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub(crate) i: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub(crate) j: Option<u8>,
    pub(crate) deriv: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TermJson {
    coeff: String,
    alpha: Vec<u32>,
    rhos: Vec<Vec<FactorJson>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SumJson {
    schema_version: u32,
    m: usize,
    terms: Vec<TermJson>,
}

impl ResolventSum {
    /// Export to the JSON schema: each slot is a list of product factors
    /// `{xi, word}`; this writer emits one factor per slot.
    pub fn to_json(&self) -> String {
        let terms: Vec<TermJson> = self
            .terms
            .iter()
            .map(|(key, coeff)| TermJson {
                coeff: coeff.to_string(),
                alpha: key.alpha.clone(),
                rhos: key
                    .slots
                    .iter()
                    .map(|slot| {
                        vec![FactorJson {
                            xi: slot.xi.0.clone(),
                            word: slot.word.iter().map(symbol_to_json).collect(),
                        }]
                    })
                    .collect(),
            })
            .collect();
        let doc = SumJson {
            schema_version: SCHEMA_VERSION,
            m: self.m,
            terms,
        };
        serde_json::to_string_pretty(&doc).expect("serialization cannot fail")
    }

    /// Parse the JSON schema. Multiple factors inside one slot are
    /// multiplied (words concatenate, xi exponents add).
    pub fn from_json(text: &str) -> Result<ResolventSum, SymcalcError> {
        let doc: SumJson =
            serde_json::from_str(text).map_err(|e| SymcalcError::Schema(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(SymcalcError::Schema(format!(
                "unsupported schema version {}",
                doc.schema_version
            )));
        }
        let mut out = ResolventSum::zero(doc.m);
        for term in doc.terms {
            let coeff: CRat = term
                .coeff
                .parse()
                .map_err(|e: crate::exact::ParseExactError| SymcalcError::Schema(e.to_string()))?;
            if term.alpha.len() != term.rhos.len() + 1 {
                return Err(SymcalcError::Schema(
                    "alpha length must be slots + 1".into(),
                ));
            }
            let mut slots = Vec::with_capacity(term.rhos.len());
            for factors in term.rhos {
                if factors.is_empty() {
                    return Err(SymcalcError::Schema("empty slot factor list".into()));
                }
                let mut xi = XiMono::one(doc.m);
                let mut word = Vec::new();
                for f in factors {
                    if f.xi.len() != doc.m {
                        return Err(SymcalcError::Schema(format!(
                            "xi exponent list has length {}, expected {}",
                            f.xi.len(),
                            doc.m
                        )));
                    }
                    xi = xi.mul(&XiMono(f.xi));
                    for s in f.word {
                        word.push(symbol_from_json(&s)?);
                    }
                }
                slots.push(Slot::new(xi, word));
            }
            let key = TermKey {
                alpha: term.alpha,
                slots,
            };
            for sym in key.slots.iter().flat_map(|sl| sl.word.iter()) {
                if sym.max_axis() as usize > doc.m {
                    return Err(SymcalcError::Schema(format!(
                        "symbol {} refers to an axis beyond m = {}",
                        sym, doc.m
                    )));
                }
            }
            out.add_term(key, coeff);
        }
        Ok(out)
    }
}

pub(crate) fn symbol_to_json(sym: &CoeffSymbol) -> SymbolJson {
    match sym.kind {
        SymKind::K { i, j } => SymbolJson {
            kind: "K".into(),
            i: Some(i),
            j: Some(j),
            deriv: sym.deriv.clone(),
        },
        SymKind::R { s } => SymbolJson {
            kind: "R".into(),
            i: Some(s),
            j: None,
            deriv: sym.deriv.clone(),
        },
        SymKind::P0 => SymbolJson {
            kind: "P0".into(),
            i: None,
            j: None,
            deriv: sym.deriv.clone(),
        },
    }
}

pub(crate) fn symbol_from_json(s: &SymbolJson) -> Result<CoeffSymbol, SymcalcError> {
    let sym = match s.kind.as_str() {
        "K" => {
            let i = s.i.ok_or_else(|| SymcalcError::Schema("K needs i".into()))?;
            let j = s.j.ok_or_else(|| SymcalcError::Schema("K needs j".into()))?;
            CoeffSymbol::k(i, j)
        }
        "R" => {
            let i = s.i.ok_or_else(|| SymcalcError::Schema("R needs i".into()))?;
            CoeffSymbol::r(i)
        }
        "P0" => CoeffSymbol::p0(),
        other => {
            return Err(SymcalcError::Schema(format!(
                "unknown symbol kind `{}`",
                other
            )))
        }
    };
    Ok(sym.derived(&s.deriv))
}
