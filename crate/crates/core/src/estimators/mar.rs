use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::moments::{cc_conditional_residual_variance, cc_ols, observed_moments, LinearRelation, MomentTable};

use super::mean::check_inputs;
use super::{
    pivot_combinations, sorted_pivots, Aggregate, EstimatorConfig, MomentEstimates, Provenance, Quantity,
    RawEstimate, VarCovMethod,
};

/// `alpha_m = c0 + sum_k c_k alpha_k` for a regression of `Y_m` on other variables.
pub fn mar_mean_from_relation<R: LinearRelation>(rel: &R, table: &MomentTable) -> Result<f64> {
    let mut acc = rel.intercept();
    for &k in rel.regressors() {
        acc += rel.coef(k)? * table.mean(k)?;
    }
    Ok(acc)
}

/// `Var(Y_m) = q + c^T Var(Y_regressors) c`.
pub fn mar_var_from_relation<R: LinearRelation>(rel: &R, table: &MomentTable, q: f64) -> Result<f64> {
    let regs = rel.regressors();
    let mut acc = q;
    for &a in regs {
        for &b in regs {
            acc += rel.coef(a)? * rel.coef(b)? * table.cov(a, b)?;
        }
    }
    Ok(acc)
}

/// `Cov(Y_m, Y_ell)` for a regressor `ell` of the regression of `Y_m`.
///
/// `c0 a_ell + c_ell (Var_ell + a_ell^2) + sum_{k != ell} c_k (Cov_{ell k} + a_ell a_k) - a_m a_ell`.
pub fn mar_cov_from_relation<R: LinearRelation>(rel: &R, ell: usize, table: &MomentTable) -> Result<f64> {
    let m = rel.response();
    let a_ell = table.mean(ell)?;
    let mut acc = rel.intercept() * a_ell + rel.coef(ell)? * (table.var(ell)? + a_ell * a_ell);
    for &k in rel.regressors() {
        if k != ell {
            acc += rel.coef(k)? * (table.cov(ell, k)? + a_ell * table.mean(k)?);
        }
    }
    Ok(acc - table.mean(m)? * a_ell)
}

/// Moments of a missing variable under a MAR assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct MarEstimate {
    pub alpha: Aggregate,
    pub var: Aggregate,
    /// Covariances with the pivot candidates.
    pub cov: BTreeMap<usize, Aggregate>,
}

/// MAR baseline for variable `m`: regress `Y_m` directly on each pivot subset.
///
/// The residual variance term is the fit's own under [`VarCovMethod::Inversion`]
/// and the conditional residual over fully observed rows under
/// [`VarCovMethod::PivotSystem`].
pub fn estimate_moments_mar(
    data: &Dataset,
    m: usize,
    pivots: &[usize],
    config: &EstimatorConfig,
) -> Result<MarEstimate> {
    let pivots = sorted_pivots(pivots);
    check_inputs(data, m, &pivots, config.rank)?;
    let table = observed_moments(data, &pivots)?;
    mar_pass(data, m, &pivots, config, &table)
}

fn raw(quantity: Quantity, pivots: &[usize], response: usize, value: f64) -> RawEstimate {
    RawEstimate {
        quantity,
        pivots: pivots.to_vec(),
        response,
        value,
    }
}

fn mar_pass(
    data: &Dataset,
    m: usize,
    pivots: &[usize],
    config: &EstimatorConfig,
    table: &MomentTable,
) -> Result<MarEstimate> {
    let q = match config.method {
        VarCovMethod::PivotSystem => Some(cc_conditional_residual_variance(data, m, &[m])),
        VarCovMethod::Inversion => None,
    };
    let subsets = pivot_combinations(pivots, config.rank, config.max_combos, config.seed);
    let mut fits = Vec::new();
    let mut skipped = 0;
    let mut last_error = None;
    for subset in &subsets {
        match cc_ols(data, m, subset, &[]) {
            Ok(fit) => fits.push((subset.clone(), fit)),
            Err(e) => {
                skipped += 1;
                last_error = Some(e);
            }
        }
    }

    let mut alpha_raw = Vec::new();
    let mut var_raw = Vec::new();
    for (subset, fit) in &fits {
        alpha_raw.push(raw(Quantity::Mean { var: m }, subset, m, mar_mean_from_relation(fit, table)?));
        match q.clone().unwrap_or(Ok(fit.residual_variance)) {
            Ok(q) => var_raw.push(raw(
                Quantity::Variance { var: m },
                subset,
                m,
                mar_var_from_relation(fit, table, q)?,
            )),
            Err(e) => last_error = Some(e),
        }
    }
    let alpha = Aggregate::from_raw(m, alpha_raw, skipped, last_error.clone())?;
    let var = Aggregate::from_raw(m, var_raw, skipped, last_error)?;

    let mut with_mean = table.clone();
    with_mean.set_mean(m, alpha.value);
    let mut cov_raw: BTreeMap<usize, Vec<RawEstimate>> = BTreeMap::new();
    for (subset, fit) in &fits {
        for &ell in subset {
            let value = mar_cov_from_relation(fit, ell, &with_mean)?;
            cov_raw
                .entry(ell)
                .or_default()
                .push(raw(Quantity::Covariance { a: m, b: ell }, subset, m, value));
        }
    }
    let cov = cov_raw
        .into_iter()
        .map(|(s, r)| Aggregate::from_raw(m, r, 0, None).map(|a| (s, a)))
        .collect::<Result<_>>()?;
    Ok(MarEstimate { alpha, var, cov })
}

fn mar_nonpivot(
    data: &Dataset,
    m: usize,
    ell: usize,
    pivots: &[usize],
    config: &EstimatorConfig,
    table: &MomentTable,
) -> Result<Aggregate> {
    let mut values = Vec::new();
    let mut skipped = 0;
    let mut last_error = None;
    for subset in pivot_combinations(pivots, config.rank - 1, config.max_combos, config.seed) {
        let regressors: Vec<usize> = std::iter::once(ell).chain(subset.iter().copied()).collect();
        match cc_ols(data, m, &regressors, &[]).and_then(|fit| mar_cov_from_relation(&fit, ell, table)) {
            Ok(v) => values.push(raw(Quantity::Covariance { a: m, b: ell }, &subset, m, v)),
            Err(e) => {
                skipped += 1;
                last_error = Some(e);
            }
        }
    }
    Aggregate::from_raw(m, values, skipped, last_error)
}

/// Mean vector and covariance matrix with the MNAR variables treated as MAR.
pub fn assemble_sigma_mar(data: &Dataset, config: &EstimatorConfig) -> Result<MomentEstimates> {
    data.validate_roles(config.rank)?;
    if config.rank < 2 {
        return Err(Error::Precondition("rank must be at least 2".into()));
    }
    let p = data.ncols();
    let mnar = data.mnar_vars().to_vec();
    let pivots = data.pivot_vars().to_vec();
    let others: Vec<usize> = (0..p).filter(|&k| !data.is_mnar(k)).collect();
    let mut table = observed_moments(data, &others)?;
    let mut provenance = vec![Provenance::Empirical; p * p];
    let cell = |row: usize, col: usize| {
        move |e: Error| Error::Cell {
            row,
            col,
            source: Box::new(e),
        }
    };

    let passes: Vec<_> = mnar
        .par_iter()
        .map(|&m| mar_pass(data, m, &pivots, config, &table).map_err(cell(m, m)))
        .collect();
    for (&m, pass) in mnar.iter().zip(passes) {
        let est = pass?;
        table.set_mean(m, est.alpha.value);
        table.set_cov(m, m, est.var.value);
        MomentEstimates::set_provenance(&mut provenance, p, m, m, Provenance::PivotSystem);
        for (s, agg) in est.cov {
            table.set_cov(m, s, agg.value);
            MomentEstimates::set_provenance(&mut provenance, p, m, s, Provenance::PivotSystem);
        }
    }

    let mut pairs = Vec::new();
    for &m in &mnar {
        for ell in 0..p {
            if ell != m && !data.is_pivot(ell) && !(data.is_mnar(ell) && ell < m) {
                pairs.push((m, ell));
            }
        }
    }
    let prior = table.clone();
    let cross: Vec<_> = pairs
        .par_iter()
        .map(|&(m, ell)| mar_nonpivot(data, m, ell, &pivots, config, &prior).map_err(cell(m, ell)))
        .collect();
    for (&(m, ell), agg) in pairs.iter().zip(cross) {
        table.set_cov(m, ell, agg?.value);
        MomentEstimates::set_provenance(&mut provenance, p, m, ell, Provenance::NonPivot);
    }
    let mut out = MomentEstimates::new(table, provenance);
    out.floor_if_negative();
    Ok(out)
}
