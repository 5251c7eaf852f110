//! Conformal collapse of the diagonal second heat coefficient.
//!
//! Setting every diagonal entry to one Weyl factor, `k_s = k` for all
//! axes, and deleting the first- and zero-order coefficients turns the
//! diagonal term list into two scalar coefficient functions: one
//! multiplying the Laplacian of the Weyl factor, one multiplying its
//! squared gradient. [`collapse_second_order`] performs that collapse
//! mechanically on [`v2_diagonal`] output; [`v2_conformal_tables`] lifts
//! the per-dimension numbers to exact polynomials in the dimension; and
//! [`v2_conformal`] assembles the resulting coefficient pair as
//! [`SpectralExpr`] values, with the correction terms of the symmetric
//! scaling added on request.
//!
//! Three bookkeeping rules drive the collapse:
//!
//! * Rows whose words touch a first- or zero-order symbol are dropped:
//!   those coefficients vanish for the scaled Laplacians considered here.
//!   Dropped rows are counted, not silently ignored.
//! * With all `k_s` equal, a Laurent monomial in the diagonal entries
//!   becomes a net power of `k`. The net power is a class invariant,
//!   `k^0` on second-derivative rows and `k^{-1}` on gradient pairs (in
//!   units of `(det A)^{1/2} v_2`, so the overall `k^{-m/2}` is already
//!   factored out), and the collapse rejects rows that violate it.
//! * A factor `(1 - z_a^(1))` loses its axis: with one Weyl factor it is
//!   `y_1`, a power of the single modular variable, recorded in the power
//!   column of [`HPoly`]. Gradient pairs have two slots, so shifts beyond
//!   level one cannot occur and are rejected, as is any shift on a
//!   one-slot row.
//!
//! The directional sums collapse by exchangeability. The engine output is
//! symmetric under axis permutation, so summing the surviving row weights
//! of one index class and dividing by the dimension yields the
//! coefficient of the rotation-invariant unit: `Tr(∇²k) = Σ_s ∇_s∇_s k`
//! for part I, `Tr((∇k)(∇k)) = Σ_s (∇_s k)(∇_s k)` for part II.
//!
//! A per-dimension collapse yields numbers, not polynomials.
//! [`v2_conformal_tables`] recovers the coefficients by interpolating the
//! collapse over `m = 1, 2, 3`: degree two suffices because a diagonal
//! row carries at most three free axes and the trace unit absorbs one.
//! The tests re-collapse the grouped term lists at dimensions four
//! through eight, which bounds the degree from above, and pin the result
//! against the hand-entered tables of the spectral-function layer.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use crate::conformal::{
    g_i_table, g_ii_table, j11_expr, j2_expr, j_mixed_expr, ConformalOp, HPoly, SpectralExpr,
};
use crate::exact::{rat, rint, MPoly, Rat};
use crate::symcalc::SymKind;

use super::diagonal::{v2_diagonal, DiagKey, DiagonalSum};
use super::Heat2Error;

/// Index class of one diagonal row under the one-factor specialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum WordClass {
    /// One slot holding a twice-derived diagonal entry, derivative axes
    /// equal: collapses onto `Tr(∇²k)`.
    SecondDerivative,
    /// Two slots, each holding a once-derived diagonal entry, derivative
    /// axes equal across the slots: collapses onto `k^{-1}Tr((∇k)(∇k))`.
    GradientPair,
    /// Any row touching a first- or zero-order coefficient; absent from
    /// the scaled Laplacians.
    LowerOrder,
}

fn classify(key: &DiagKey) -> Result<WordClass, Heat2Error> {
    let second_order = key
        .words
        .iter()
        .flatten()
        .all(|sym| matches!(sym.kind, SymKind::K { .. }));
    if !second_order {
        return Ok(WordClass::LowerOrder);
    }
    let shape_err =
        |detail: &str| Heat2Error::InvalidInput(format!("malformed second-order row {key}: {detail}"));
    let diag_axis = |word: &[crate::symcalc::CoeffSymbol]| -> Result<(u8, Vec<u8>), Heat2Error> {
        let [sym] = word else {
            return Err(shape_err("every slot must hold exactly one symbol"));
        };
        let SymKind::K { i, j } = sym.kind else {
            return Err(shape_err("slot symbol must be a quadratic entry"));
        };
        if i != j {
            return Err(shape_err("off-diagonal entry survived the diagonal reduction"));
        }
        Ok((i, sym.deriv.clone()))
    };
    match key.words.as_slice() {
        [word] => {
            let (_, deriv) = diag_axis(word)?;
            let [a, b] = deriv.as_slice() else {
                return Err(shape_err("a one-slot row must carry two derivatives"));
            };
            if a != b {
                return Err(shape_err("second-derivative axes must coincide"));
            }
            if key.alpha.len() != 2 {
                return Err(shape_err("a one-slot row must have a length-2 index"));
            }
            Ok(WordClass::SecondDerivative)
        }
        [left, right] => {
            let (_, dl) = diag_axis(left)?;
            let (_, dr) = diag_axis(right)?;
            let ([a], [b]) = (dl.as_slice(), dr.as_slice()) else {
                return Err(shape_err("a gradient pair carries one derivative per slot"));
            };
            if a != b {
                return Err(shape_err("gradient axes must coincide across the slots"));
            }
            if key.alpha.len() != 3 {
                return Err(shape_err("a two-slot row must have a length-3 index"));
            }
            Ok(WordClass::GradientPair)
        }
        _ => Err(shape_err("second-order rows have one or two slots")),
    }
}

/// One diagonal term list collapsed to a single conformal factor, in
/// units of `k^{m/2} (det A)^{1/2} v_2` with the trace conventions of the
/// module doc. Keys are [`HPoly`] keys: the functional index and the
/// power of the modular variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollapsedV2 {
    pub m: usize,
    /// Coefficients of `Tr(∇²k)`.
    pub part_i: BTreeMap<(Vec<u32>, u8), Rat>,
    /// Coefficients of `k^{-1} Tr((∇k)(∇k))`.
    pub part_ii: BTreeMap<(Vec<u32>, u8), Rat>,
    /// Rows dropped because they touch first- or zero-order data.
    pub dropped_rows: usize,
}

/// Collapse a diagonal term list to one conformal factor.
///
/// Accepts any diagonal sum over at least one axis; the intended inputs
/// are the engine reduction [`v2_diagonal`] and the grouped hand tables,
/// whose agreement is checked elsewhere. Rows that cannot belong to a
/// second-order diagonal term are reported as errors rather than skipped,
/// so a malformed upstream change cannot fake a collapse.
pub fn collapse_second_order(diag: &DiagonalSum) -> Result<CollapsedV2, Heat2Error> {
    let m = diag.m();
    if m == 0 {
        return Err(Heat2Error::InvalidInput(
            "conformal collapse needs at least one axis".into(),
        ));
    }
    let mut part_i: BTreeMap<(Vec<u32>, u8), Rat> = BTreeMap::new();
    let mut part_ii: BTreeMap<(Vec<u32>, u8), Rat> = BTreeMap::new();
    let mut dropped = 0usize;
    for (key, coeff) in diag.iter() {
        let class = classify(key)?;
        let (bucket, net_power) = match class {
            WordClass::LowerOrder => {
                dropped += 1;
                continue;
            }
            WordClass::SecondDerivative => (&mut part_i, 0i32),
            WordClass::GradientPair => (&mut part_ii, -1i32),
        };
        for ((kpow, zfac), c) in coeff.iter() {
            if !c.im.is_zero() {
                return Err(Heat2Error::InvalidInput(format!(
                    "second-order row {key} carries a complex weight"
                )));
            }
            let net: i32 = kpow.iter().map(|(_, p)| p).sum();
            if net != net_power {
                return Err(Heat2Error::InvalidInput(format!(
                    "row {key} has net Weyl power {net}, class demands {net_power}"
                )));
            }
            if zfac.iter().any(|&(_, level)| level != 1) {
                return Err(Heat2Error::InvalidInput(format!(
                    "row {key} carries a modular shift beyond level one"
                )));
            }
            if class == WordClass::SecondDerivative && !zfac.is_empty() {
                return Err(Heat2Error::InvalidInput(format!(
                    "one-slot row {key} cannot carry a modular shift"
                )));
            }
            let y1_pow = zfac.len() as u8;
            let entry = bucket
                .entry((key.alpha.clone(), y1_pow))
                .or_insert_with(Rat::zero);
            *entry += c.re.clone();
        }
    }
    let per_axis = rat(1, m as i64);
    for bucket in [&mut part_i, &mut part_ii] {
        for v in bucket.values_mut() {
            *v *= per_axis.clone();
        }
        bucket.retain(|_, v| !v.is_zero());
    }
    Ok(CollapsedV2 {
        m,
        part_i,
        part_ii,
        dropped_rows: dropped,
    })
}

/// Engine-derived conformal coefficient tables, exact in the dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConformalTables {
    /// Coefficient of `Tr(∇²k)`.
    pub part_i: HPoly,
    /// Coefficient of `k^{-1} Tr((∇k)(∇k))`.
    pub part_ii: HPoly,
}

/// Dimensions the polynomial fit runs over. Three points fix a quadratic;
/// the degree bound is re-checked at higher dimensions by tests, from the
/// grouped term lists, because the full engine expansion grows steeply
/// with the axis count.
const FIT_DIMS: [usize; 3] = [1, 2, 3];

fn fit_side(samples: &[(usize, &BTreeMap<(Vec<u32>, u8), Rat>)]) -> HPoly {
    let mut keys: BTreeSet<&(Vec<u32>, u8)> = BTreeSet::new();
    for (_, map) in samples {
        keys.extend(map.keys());
    }
    let mut out = HPoly::new();
    for key in keys {
        let points: Vec<(Rat, Rat)> = samples
            .iter()
            .map(|(m, map)| {
                let v = map.get(key).cloned().unwrap_or_else(Rat::zero);
                (rint(*m as i64), v)
            })
            .collect();
        out.add_term(&key.0, key.1, MPoly::interpolate(&points));
    }
    out
}

/// Run the engine collapse over [`FIT_DIMS`] and interpolate the
/// coefficients into exact polynomials in the dimension.
pub fn v2_conformal_tables() -> Result<ConformalTables, Heat2Error> {
    let mut collapsed = Vec::with_capacity(FIT_DIMS.len());
    for &m in &FIT_DIMS {
        collapsed.push(collapse_second_order(&v2_diagonal(m)?)?);
    }
    let i_samples: Vec<(usize, &BTreeMap<(Vec<u32>, u8), Rat>)> =
        collapsed.iter().map(|c| (c.m, &c.part_i)).collect();
    let ii_samples: Vec<(usize, &BTreeMap<(Vec<u32>, u8), Rat>)> =
        collapsed.iter().map(|c| (c.m, &c.part_ii)).collect();
    Ok(ConformalTables {
        part_i: fit_side(&i_samples),
        part_ii: fit_side(&ii_samples),
    })
}

/// Coefficient pair `(G_I, G_II)` of the chosen scaled Laplacian, derived
/// from the engine expansion.
///
/// The one-sided scaling is the direct collapse. The symmetric scaling
/// adds the correction terms that route Weyl-factor derivatives through
/// both sandwich slots: the one-slot correction to the first component,
/// the two-slot and mixed corrections to the second.
pub fn v2_conformal(op: ConformalOp) -> Result<(SpectralExpr, SpectralExpr), Heat2Error> {
    let tables = v2_conformal_tables()?;
    let g_i = tables.part_i.to_expr();
    let g_ii = tables.part_ii.to_expr();
    Ok(match op {
        ConformalOp::DeltaK => (g_i, g_ii),
        ConformalOp::DeltaPhi => (g_i + j2_expr(), g_ii + j11_expr() + j_mixed_expr()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{eval, g_i_expr, g_ii_expr, EvalPoint};
    use crate::exact::CRat;
    use crate::heat2::diagonal::v2_diagonal_tables;
    use crate::rearrange::{Normalization, Tol};
    use crate::symcalc::CoeffSymbol;

    fn collapse_at(m: usize) -> CollapsedV2 {
        collapse_second_order(&v2_diagonal(m).expect("engine expansion")).expect("collapse")
    }

    fn table_values(table: &HPoly, m: usize) -> BTreeMap<(Vec<u32>, u8), Rat> {
        table
            .terms
            .iter()
            .map(|(k, p)| (k.clone(), p.eval_int(m as i64)))
            .filter(|(_, v)| !v.is_zero())
            .collect()
    }

    #[test]
    fn engine_collapse_matches_the_fixture_tables_per_dimension() {
        for m in 1..=3usize {
            let c = collapse_at(m);
            assert_eq!(c.part_i, table_values(&g_i_table(), m), "part I at m = {m}");
            assert_eq!(
                c.part_ii,
                table_values(&g_ii_table(), m),
                "part II at m = {m}"
            );
        }
    }

    #[test]
    fn interpolated_tables_equal_the_fixture_tables_exactly() {
        let t = v2_conformal_tables().expect("tables");
        assert_eq!(t.part_i, g_i_table());
        assert_eq!(t.part_ii, g_ii_table());
    }

    #[test]
    fn grouped_lists_confirm_the_quadratic_fit_at_higher_dimensions() {
        // The fit uses m = 1..3 engine runs; the grouped term lists are
        // cheap at any dimension and bound the degree from above.
        let t = v2_conformal_tables().expect("tables");
        for m in 4..=8usize {
            let c = collapse_second_order(&v2_diagonal_tables(m)).expect("collapse");
            assert_eq!(c.part_i, table_values(&t.part_i, m), "part I at m = {m}");
            assert_eq!(c.part_ii, table_values(&t.part_ii, m), "part II at m = {m}");
        }
    }

    #[test]
    fn lower_order_rows_are_counted_not_lost() {
        let diag = v2_diagonal(2).expect("engine expansion");
        let c = collapse_second_order(&diag).expect("collapse");
        let lower = diag
            .iter()
            .filter(|(key, _)| {
                key.words
                    .iter()
                    .flatten()
                    .any(|s| !matches!(s.kind, SymKind::K { .. }))
            })
            .count();
        assert!(lower > 0, "the expansion must contain first-order rows");
        assert_eq!(c.dropped_rows, lower);
        let kept: usize = c.part_i.len() + c.part_ii.len();
        assert!(kept > 0, "the collapse must keep the second-order rows");
    }

    #[test]
    fn off_diagonal_entries_are_rejected() {
        let mut bad = DiagonalSum::zero(2);
        bad.add_term(
            DiagKey::new(
                vec![3, 1],
                vec![1, 2],
                vec![vec![CoeffSymbol::k(1, 2).derived(&[1, 1])]],
            ),
            &[],
            &[],
            CRat::one(),
        );
        assert!(collapse_second_order(&bad).is_err());
    }

    #[test]
    fn complex_weights_on_second_order_rows_are_rejected() {
        let mut bad = DiagonalSum::zero(2);
        bad.add_term(
            DiagKey::new(
                vec![3, 1],
                vec![1, 1],
                vec![vec![CoeffSymbol::k(1, 1).derived(&[1, 1])]],
            ),
            &[],
            &[],
            CRat::i(),
        );
        assert!(collapse_second_order(&bad).is_err());
    }

    #[test]
    fn stray_weyl_powers_are_rejected() {
        // A second-derivative row is weight-free once the axes merge.
        let mut bad = DiagonalSum::zero(2);
        bad.add_term(
            DiagKey::new(
                vec![3, 1],
                vec![1, 1],
                vec![vec![CoeffSymbol::k(1, 1).derived(&[1, 1])]],
            ),
            &[(1, 1)],
            &[],
            CRat::one(),
        );
        assert!(collapse_second_order(&bad).is_err());
    }

    #[test]
    fn assembled_expressions_match_the_spectral_layer() {
        let point = EvalPoint::new(0.7, 1.6, 3).expect("point");
        let tol = Tol::new(1e-11, 1e-11);
        for op in [ConformalOp::DeltaK, ConformalOp::DeltaPhi] {
            let (g_i, g_ii) = v2_conformal(op).expect("assembly");
            for (got, want, label) in [
                (&g_i, g_i_expr(op), "one-variable part"),
                (&g_ii, g_ii_expr(op), "two-variable part"),
            ] {
                let a = eval(got, point, Normalization::default(), tol)
                    .expect("engine-side eval")
                    .value;
                let b = eval(&want, point, Normalization::default(), tol)
                    .expect("fixture-side eval")
                    .value;
                assert!(
                    (a - b).abs() <= 1e-8 * b.abs().max(1.0),
                    "{label} for {op:?}: {a} vs {b}"
                );
            }
        }
    }
}
