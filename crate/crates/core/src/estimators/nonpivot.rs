use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::moments::{cc_ols, LinearRelation, MomentTable};

use super::pivot::residual_cache;
use super::{
    denominator_threshold, pivot_combinations, sorted_pivots, Aggregate, EstimatorConfig, Quantity, RawEstimate,
    VarCovMethod,
};

/// `Cov(Y_m, Y_ell)` from a relation of pivot `j` on `Y_m`, `Y_ell` and pivots `H`.
///
/// Decomposing `Var(Y_j)` over the regressors `R = {m, ell} + H` leaves the
/// `(m, ell)` cross term as the only unknown:
/// `K Cov(Y_m, Y_ell) = Var(Y_j) - qc - sum_k c_k^2 Var(Y_k) - sum_{k<k'} 2 c_k c_k' Cov(Y_k, Y_k')`,
/// with `K = 2 c_m c_ell` and the last sum skipping the `(m, ell)` pair. `qc` is
/// the residual variance left after the regressors, either the conditional
/// residual over fully observed rows or the fit's own residual variance.
pub fn nonpivot_cov_from_relation<R: LinearRelation>(
    rel: &R,
    m: usize,
    ell: usize,
    table: &MomentTable,
    qc: f64,
) -> Result<f64> {
    if m == ell {
        return Err(Error::Precondition(format!(
            "covariance of variable {m} with itself is a variance"
        )));
    }
    let j = rel.response();
    let k_factor = 2.0 * rel.coef(m)? * rel.coef(ell)?;
    if !(k_factor.abs() >= denominator_threshold(table, j)) {
        return Err(Error::KNearZero { value: k_factor });
    }
    let regs = rel.regressors();
    let mut numerator = table.var(j)? - qc;
    for (a, &k) in regs.iter().enumerate() {
        let ck = rel.coef(k)?;
        numerator -= ck * ck * table.var(k)?;
        for &k2 in &regs[a + 1..] {
            if (k == m && k2 == ell) || (k == ell && k2 == m) {
                continue;
            }
            numerator -= 2.0 * ck * rel.coef(k2)? * table.cov(k, k2)?;
        }
    }
    Ok(numerator / k_factor)
}

/// Covariance between MNAR variable `m` and a non-pivot variable `ell`.
///
/// `prior` must already hold the variances of `m` and `ell`, their covariances
/// with the pivots, and the pivot moments. For each `(r - 1)`-subset `T` of the
/// pivots and each `j` in `T`, `Y_j` is regressed on `Y_m`, `Y_ell` and `T - j`
/// over rows where both `m` and `ell` are observed; the result is the median.
pub fn estimate_cov_nonpivot(
    data: &Dataset,
    m: usize,
    ell: usize,
    pivots: &[usize],
    prior: &MomentTable,
    config: &EstimatorConfig,
) -> Result<Aggregate> {
    let pivots = sorted_pivots(pivots);
    check_pair(data, m, ell, &pivots, config.rank)?;
    let qc = residual_cache(data, &pivots, &[m, ell]);
    nonpivot_with_table(data, m, ell, &pivots, config, prior, &qc)
}

fn check_pair(data: &Dataset, m: usize, ell: usize, pivots: &[usize], r: usize) -> Result<()> {
    let p = data.ncols();
    for k in [m, ell] {
        if k >= p {
            return Err(Error::IndexOutOfRange { index: k, len: p });
        }
    }
    if m == ell {
        return Err(Error::Precondition(format!(
            "covariance of variable {m} with itself is a variance"
        )));
    }
    if pivots.contains(&ell) || pivots.contains(&m) {
        return Err(Error::Precondition(format!(
            "pair ({m}, {ell}) involves a pivot variable"
        )));
    }
    if r < 2 {
        return Err(Error::Precondition(
            "non-pivot covariances need rank at least 2".into(),
        ));
    }
    if pivots.len() < r - 1 {
        return Err(Error::InvalidRoles(format!(
            "{} pivot candidates for rank {r}",
            pivots.len()
        )));
    }
    Ok(())
}

pub(crate) fn nonpivot_with_table(
    data: &Dataset,
    m: usize,
    ell: usize,
    pivots: &[usize],
    config: &EstimatorConfig,
    prior: &MomentTable,
    qc: &BTreeMap<usize, Result<f64>>,
) -> Result<Aggregate> {
    let mut raw = Vec::new();
    let mut skipped = 0;
    let mut last_error = None;
    for subset in pivot_combinations(pivots, config.rank - 1, config.max_combos, config.seed) {
        for &j in &subset {
            let regressors: Vec<usize> = [m, ell]
                .into_iter()
                .chain(subset.iter().copied().filter(|&k| k != j))
                .collect();
            let value = cc_ols(data, j, &regressors, &[]).and_then(|fit| {
                let q = match config.method {
                    VarCovMethod::PivotSystem => qc[&j].clone()?,
                    VarCovMethod::Inversion => fit.residual_variance,
                };
                nonpivot_cov_from_relation(&fit, m, ell, prior, q)
            });
            match value {
                Ok(value) => raw.push(RawEstimate {
                    quantity: Quantity::Covariance { a: m, b: ell },
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
