//! Hand-entered reference expansions used as golden fixtures.
//!
//! The first- and second-order resolvent terms are written out here
//! summand by summand in collected form, independently of the recursion
//! code: each summand is a sandwich `coeff * b0^{a_0} rho_1 b0^{a_1} ...`
//! whose slots are built from small factor expressions. The tests assert
//! exact equality with the mechanically derived terms.
//!
//! The second-order part with two slots is usually quoted with eight
//! summands. Expanding the recursion produces nine: the mixed summand
//! `+i b0^2 (D_s p2)(p1) b0 (nabla_s p2) b0` (from the xi-derivative
//! hitting the leading `b0` of `-b0 p1 b0`) completes the list, and the
//! downstream component tables contain exactly its image. Both the
//! recursion and the commutative scalar oracle force it, so the fixture
//! includes it; [`b2_mixed_term`] exposes it separately.

use crate::exact::CRat;

use super::{Axis, CoeffSymbol, ResolventSum, Slot, TermKey, XiMono};

/// A sum of slot-level monomials `(xi, word, coeff)`: one factor of a
/// slot expression. Products concatenate words and merge xi monomials.
#[derive(Debug, Clone)]
pub struct SlotExpr {
    m: usize,
    monos: Vec<(XiMono, Vec<CoeffSymbol>, CRat)>,
}

impl SlotExpr {
    fn new(m: usize) -> Self {
        SlotExpr {
            m,
            monos: Vec::new(),
        }
    }

    fn push(&mut self, xi: XiMono, word: Vec<CoeffSymbol>, coeff: CRat) {
        self.monos.push((xi, word, coeff));
    }

    /// Product of two slot factors (order preserved in the word).
    pub fn mul(&self, other: &SlotExpr) -> SlotExpr {
        assert_eq!(self.m, other.m);
        let mut out = SlotExpr::new(self.m);
        for (xa, wa, ca) in &self.monos {
            for (xb, wb, cb) in &other.monos {
                let mut w = wa.clone();
                w.extend(wb.iter().cloned());
                out.push(xa.mul(xb), w, ca.clone() * cb.clone());
            }
        }
        out
    }

    /// `D_s p2 = 2 sum_l k_{sl} xi_l`.
    pub fn d_p2(m: usize, s: Axis) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        for l in 1..=(m as Axis) {
            e.push(
                XiMono::unit(m, l),
                vec![CoeffSymbol::k(s, l)],
                CRat::from_int(2),
            );
        }
        e
    }

    /// `D^2_{st} p2 = 2 k_{st}` (constant in xi).
    pub fn d2_p2(m: usize, s: Axis, t: Axis) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        e.push(
            XiMono::one(m),
            vec![CoeffSymbol::k(s, t)],
            CRat::from_int(2),
        );
        e
    }

    /// `nabla_s p2 = sum_{i<=j} (2 - delta_{ij}) (nabla_s k_{ij}) xi_i xi_j`.
    pub fn nabla_p2(m: usize, s: Axis) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        for i in 1..=(m as Axis) {
            for j in i..=(m as Axis) {
                let c = if i == j { 1 } else { 2 };
                e.push(
                    XiMono::unit(m, i).mul(&XiMono::unit(m, j)),
                    vec![CoeffSymbol::k(i, j).derived(&[s])],
                    CRat::from_int(c),
                );
            }
        }
        e
    }

    /// `nabla^2_{st} p2`.
    pub fn nabla2_p2(m: usize, s: Axis, t: Axis) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        for i in 1..=(m as Axis) {
            for j in i..=(m as Axis) {
                let c = if i == j { 1 } else { 2 };
                e.push(
                    XiMono::unit(m, i).mul(&XiMono::unit(m, j)),
                    vec![CoeffSymbol::k(i, j).derived(&[s, t])],
                    CRat::from_int(c),
                );
            }
        }
        e
    }

    /// `D_t nabla_s p2 = 2 sum_l (nabla_s k_{tl}) xi_l`.
    pub fn d_nabla_p2(m: usize, t: Axis, s: Axis) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        for l in 1..=(m as Axis) {
            e.push(
                XiMono::unit(m, l),
                vec![CoeffSymbol::k(t, l).derived(&[s])],
                CRat::from_int(2),
            );
        }
        e
    }

    /// `p1 = sum_l r_l xi_l`.
    pub fn p1(m: usize) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        for l in 1..=(m as Axis) {
            e.push(XiMono::unit(m, l), vec![CoeffSymbol::r(l)], CRat::one());
        }
        e
    }

    /// `D_s p1 = r_s`.
    pub fn d_p1(m: usize, s: Axis) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        e.push(XiMono::one(m), vec![CoeffSymbol::r(s)], CRat::one());
        e
    }

    /// `nabla_s p1 = sum_l (nabla_s r_l) xi_l`.
    pub fn nabla_p1(m: usize, s: Axis) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        for l in 1..=(m as Axis) {
            e.push(
                XiMono::unit(m, l),
                vec![CoeffSymbol::r(l).derived(&[s])],
                CRat::one(),
            );
        }
        e
    }

    /// `p0`.
    pub fn p0(m: usize) -> SlotExpr {
        let mut e = SlotExpr::new(m);
        e.push(XiMono::one(m), vec![CoeffSymbol::p0()], CRat::one());
        e
    }
}

/// Build `coeff * b0^{alpha_0} rho_1 b0^{alpha_1} ... rho_n b0^{alpha_n}`
/// by distributing each slot expression into atomic monomials.
pub fn sandwich(m: usize, alpha: &[u32], slots: &[SlotExpr], coeff: CRat) -> ResolventSum {
    assert_eq!(alpha.len(), slots.len() + 1, "alpha length must be slots + 1");
    let mut out = ResolventSum::zero(m);
    // Cartesian product over the monomials of every slot.
    let mut choices: Vec<usize> = vec![0; slots.len()];
    loop {
        let mut slot_objs = Vec::with_capacity(slots.len());
        let mut c = coeff.clone();
        for (slot_expr, &pick) in slots.iter().zip(&choices) {
            let (xi, word, mc) = &slot_expr.monos[pick];
            slot_objs.push(Slot::new(xi.clone(), word.clone()));
            c = c * mc.clone();
        }
        out.add_term(
            TermKey {
                alpha: alpha.to_vec(),
                slots: slot_objs,
            },
            c,
        );
        // Advance the mixed-radix counter.
        let mut pos = 0;
        loop {
            if pos == choices.len() {
                return out;
            }
            choices[pos] += 1;
            if choices[pos] < slots[pos].monos.len() {
                break;
            }
            choices[pos] = 0;
            pos += 1;
        }
    }
}

/// First-order term: `-b0 (p1) b0 - i b0^2 (D_s p2)(nabla_s p2) b0`.
pub fn b1_reference(m: usize) -> ResolventSum {
    let mut out = sandwich(m, &[1, 1], &[SlotExpr::p1(m)], CRat::from_int(-1));
    for s in 1..=(m as Axis) {
        out = out.add(&sandwich(
            m,
            &[2, 1],
            &[SlotExpr::d_p2(m, s).mul(&SlotExpr::nabla_p2(m, s))],
            CRat::imag(-1, 1),
        ));
    }
    out
}

/// One-slot part of the second-order term (four summands):
/// `-1/2 b0^2 (D^2_{st} p2)(nabla^2_{st} p2) b0`
/// `+ b0^3 (D_s p2)(D_t p2)(nabla^2_{st} p2) b0`
/// `- i b0^2 (D_s p2)(nabla_s p1) b0`
/// `- b0 (p0) b0`.
pub fn b2_part_one(m: usize) -> ResolventSum {
    let mut out = ResolventSum::zero(m);
    for s in 1..=(m as Axis) {
        for t in 1..=(m as Axis) {
            out = out.add(&sandwich(
                m,
                &[2, 1],
                &[SlotExpr::d2_p2(m, s, t).mul(&SlotExpr::nabla2_p2(m, s, t))],
                CRat::real(-1, 2),
            ));
            out = out.add(&sandwich(
                m,
                &[3, 1],
                &[SlotExpr::d_p2(m, s)
                    .mul(&SlotExpr::d_p2(m, t))
                    .mul(&SlotExpr::nabla2_p2(m, s, t))],
                CRat::one(),
            ));
        }
        out = out.add(&sandwich(
            m,
            &[2, 1],
            &[SlotExpr::d_p2(m, s).mul(&SlotExpr::nabla_p1(m, s))],
            CRat::imag(-1, 1),
        ));
    }
    out.add(&sandwich(m, &[1, 1], &[SlotExpr::p0(m)], CRat::from_int(-1)))
}

/// Two-slot part of the second-order term: the eight quoted summands.
pub fn b2_part_two_displayed(m: usize) -> ResolventSum {
    let mut out = ResolventSum::zero(m);
    for s in 1..=(m as Axis) {
        for t in 1..=(m as Axis) {
            // b0^2 (D_s p2)(D_t nabla_s p2) b0 (nabla_t p2) b0
            out = out.add(&sandwich(
                m,
                &[2, 1, 1],
                &[
                    SlotExpr::d_p2(m, s).mul(&SlotExpr::d_nabla_p2(m, t, s)),
                    SlotExpr::nabla_p2(m, t),
                ],
                CRat::one(),
            ));
            // - b0^2 (D_s p2)(nabla_s p2) b0^2 (D_t p2)(nabla_t p2) b0
            out = out.add(&sandwich(
                m,
                &[2, 2, 1],
                &[
                    SlotExpr::d_p2(m, s).mul(&SlotExpr::nabla_p2(m, s)),
                    SlotExpr::d_p2(m, t).mul(&SlotExpr::nabla_p2(m, t)),
                ],
                CRat::from_int(-1),
            ));
            // b0^2 (D^2_{st} p2)(nabla_s p2) b0 (nabla_t p2) b0
            out = out.add(&sandwich(
                m,
                &[2, 1, 1],
                &[
                    SlotExpr::d2_p2(m, s, t).mul(&SlotExpr::nabla_p2(m, s)),
                    SlotExpr::nabla_p2(m, t),
                ],
                CRat::one(),
            ));
            // -2 b0^3 (D_s p2)(D_t p2)(nabla_s p2) b0 (nabla_t p2) b0
            out = out.add(&sandwich(
                m,
                &[3, 1, 1],
                &[
                    SlotExpr::d_p2(m, s)
                        .mul(&SlotExpr::d_p2(m, t))
                        .mul(&SlotExpr::nabla_p2(m, s)),
                    SlotExpr::nabla_p2(m, t),
                ],
                CRat::from_int(-2),
            ));
        }
        // + i b0^2 (D_s p2)(nabla_s p2) b0 (p1) b0
        out = out.add(&sandwich(
            m,
            &[2, 1, 1],
            &[
                SlotExpr::d_p2(m, s).mul(&SlotExpr::nabla_p2(m, s)),
                SlotExpr::p1(m),
            ],
            CRat::imag(1, 1),
        ));
        // - i b0 (D_s p1) b0 (nabla_s p2) b0
        out = out.add(&sandwich(
            m,
            &[1, 1, 1],
            &[SlotExpr::d_p1(m, s), SlotExpr::nabla_p2(m, s)],
            CRat::imag(-1, 1),
        ));
        // + i b0 (p1) b0^2 (D_s p2)(nabla_s p2) b0
        out = out.add(&sandwich(
            m,
            &[1, 2, 1],
            &[
                SlotExpr::p1(m),
                SlotExpr::d_p2(m, s).mul(&SlotExpr::nabla_p2(m, s)),
            ],
            CRat::imag(1, 1),
        ));
    }
    // + b0 (p1) b0 (p1) b0
    out.add(&sandwich(
        m,
        &[1, 1, 1],
        &[SlotExpr::p1(m), SlotExpr::p1(m)],
        CRat::one(),
    ))
}

/// The summand missing from the usual eight-term list:
/// `+ i b0^2 (D_s p2)(p1) b0 (nabla_s p2) b0`.
pub fn b2_mixed_term(m: usize) -> ResolventSum {
    let mut out = ResolventSum::zero(m);
    for s in 1..=(m as Axis) {
        out = out.add(&sandwich(
            m,
            &[2, 1, 1],
            &[
                SlotExpr::d_p2(m, s).mul(&SlotExpr::p1(m)),
                SlotExpr::nabla_p2(m, s),
            ],
            CRat::imag(1, 1),
        ));
    }
    out
}

/// Complete second-order reference: one-slot part, two-slot part, and the
/// restored mixed summand (4 + 9 summands in total).
pub fn b2_reference(m: usize) -> ResolventSum {
    b2_part_one(m)
        .add(&b2_part_two_displayed(m))
        .add(&b2_mixed_term(m))
}

/// Difference `a - b`, useful for diffing fixtures against the engine.
pub fn diff(a: &ResolventSum, b: &ResolventSum) -> ResolventSum {
    a.add(&b.scale(&CRat::from_int(-1)))
}
