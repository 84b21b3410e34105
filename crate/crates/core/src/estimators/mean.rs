use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::moments::{cc_ols, observed_moments, LinearRelation, MomentTable};

use super::{denominator_threshold, pivot_combinations, sorted_pivots, Aggregate, EstimatorConfig, Quantity, RawEstimate};

/// Mean of MNAR variable `m` from one relation of a pivot on `m` and the other pivots.
///
/// `alpha_m = (alpha_j - c0 - sum_k c_k alpha_k) / c_m`, where `j` is the response
/// and `k` ranges over the regressors other than `m`.
pub fn mean_from_relation<R: LinearRelation>(rel: &R, m: usize, table: &MomentTable) -> Result<f64> {
    let j = rel.response();
    let c_m = rel.coef(m)?;
    let threshold = denominator_threshold(table, j);
    if !(c_m.abs() >= threshold) {
        return Err(Error::DenominatorNearZero { value: c_m });
    }
    let mut numerator = table.mean(j)? - rel.intercept();
    for &k in rel.regressors() {
        if k != m {
            numerator -= rel.coef(k)? * table.mean(k)?;
        }
    }
    Ok(numerator / c_m)
}

/// Regressors for pivot `j` within a combination: `m` first, then the other pivots.
pub(crate) fn pivot_regressors(m: usize, subset: &[usize], j: usize) -> Vec<usize> {
    std::iter::once(m)
        .chain(subset.iter().copied().filter(|&k| k != j))
        .collect()
}

/// Median over pivot combinations of the per-pivot mean estimates of MNAR variable `m`.
///
/// Every `r`-subset of the pivot candidates (or a seeded sample of `max_combos`
/// of them) contributes one raw value per member `j`, from the complete-case fit
/// of `Y_j` on `Y_m` and the other members. Failed fits are skipped.
pub fn estimate_mean_mnar(
    data: &Dataset,
    m: usize,
    pivots: &[usize],
    config: &EstimatorConfig,
) -> Result<Aggregate> {
    let pivots = sorted_pivots(pivots);
    check_inputs(data, m, &pivots, config.rank)?;
    let table = observed_moments(data, &pivots)?;
    mean_with_table(data, m, &pivots, config, &table)
}

pub(crate) fn check_inputs(data: &Dataset, m: usize, pivots: &[usize], r: usize) -> Result<()> {
    let p = data.ncols();
    if m >= p {
        return Err(Error::IndexOutOfRange { index: m, len: p });
    }
    if r == 0 || r >= p {
        return Err(Error::RankOutOfRange { r, p });
    }
    if pivots.contains(&m) {
        return Err(Error::InvalidRoles(format!("variable {m} is listed as a pivot")));
    }
    if pivots.len() < r {
        return Err(Error::InvalidRoles(format!(
            "{} pivot candidates for rank {r}",
            pivots.len()
        )));
    }
    Ok(())
}

pub(crate) fn mean_with_table(
    data: &Dataset,
    m: usize,
    pivots: &[usize],
    config: &EstimatorConfig,
    table: &MomentTable,
) -> Result<Aggregate> {
    let mut raw = Vec::new();
    let mut skipped = 0;
    let mut last_error = None;
    for subset in pivot_combinations(pivots, config.rank, config.max_combos, config.seed) {
        for &j in &subset {
            let value = cc_ols(data, j, &pivot_regressors(m, &subset, j), &[])
                .and_then(|fit| mean_from_relation(&fit, m, table));
            match value {
                Ok(value) => raw.push(RawEstimate {
                    quantity: Quantity::Mean { var: m },
                    pivots: subset.clone(),
                    response: j,
                    value,
                }),
                Err(e) => {
                    skipped += 1;
                    last_error = Some(e);
                }
            }
        }
    }
    Aggregate::from_raw(m, raw, skipped, last_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{population_cc_coefficients, population_moments, PpcaParams};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn oracle_recovers_mean() {
        for seed in 0..20 {
            let params = PpcaParams::random(6, 2, 0.0, seed).unwrap();
            let table = population_moments(&params);
            let rel = population_cc_coefficients(&params, 4, &[0, 5]).unwrap();
            let est = mean_from_relation(&rel, 0, &table).unwrap();
            assert!((est - params.alpha[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_coefficient_rejected() {
        let params = PpcaParams::new(
            DVector::zeros(3),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]),
            0.0,
        )
        .unwrap();
        // Y2 = W2 does not load on Y1 once Y3 = W1 is held fixed
        let rel = population_cc_coefficients(&params, 1, &[0, 2]);
        assert!(rel.is_err());
        let rel = population_cc_coefficients(&params, 2, &[0, 1]).unwrap();
        let table = population_moments(&params);
        let out = mean_from_relation(&rel, 1, &table);
        assert!(matches!(out, Err(Error::DenominatorNearZero { .. })));
    }
}
