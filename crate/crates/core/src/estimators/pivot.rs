use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, solve_checked, CONDITION_THRESHOLD};
use crate::model::Dataset;
use crate::moments::{cc_conditional_residual_variance, cc_ols, observed_moments, LinearRelation, MomentTable};

use super::mean::{check_inputs, mean_with_table, pivot_regressors};
use super::{
    denominator_threshold, pivot_combinations, sorted_pivots, Aggregate, EstimatorConfig, Quantity, RawEstimate,
    VarCovMethod,
};

/// The linear system `M x = P` whose solution is
/// `x = (Var(Y_m), Cov(Y_m, Y_s) for s in the pivot subset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotSystem {
    pub m_hat: DMatrix<f64>,
    pub p_hat: DVector<f64>,
    /// Pivot whose variance decomposition fills the first row.
    pub pivot_j: usize,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotSolution {
    pub system: PivotSystem,
    pub var_m: f64,
    /// `(s, Cov(Y_m, Y_s))` in subset order.
    pub cov: Vec<(usize, f64)>,
}

/// Builds the pivot system for MNAR variable `m` without solving it.
///
/// `fits` holds one relation per member `k` of `subset`, each regressing `Y_k` on
/// `Y_m` and the other members. `table` supplies the means and covariances of the
/// subset and the mean of `m`; `qc` is the conditional residual variance of the
/// first-row pivot `j`.
///
/// Row 0 decomposes `Var(Y_j)`:
/// `c_m^2 Var(Y_m) + sum_s 2 c_m c_s Cov(Y_m, Y_s) = Var(Y_j) - qc - c^T Var(Y_{S-j}) c`.
/// Row `1 + i` (for `k = subset[i]`) is the product moment with `Y_m`:
/// `-c_m Var(Y_m) + Cov(Y_m, Y_k) - sum_s c_s Cov(Y_m, Y_s) = (c0 + c_m a_m + sum_s c_s a_s - a_k) a_m`.
pub fn build_pivot_system<R: LinearRelation>(
    m: usize,
    j: usize,
    subset: &[usize],
    fits: &[R],
    table: &MomentTable,
    qc: f64,
) -> Result<PivotSystem> {
    let r = subset.len();
    if fits.len() != r {
        return Err(Error::DimensionMismatch(format!(
            "{} fits for a subset of {r} pivots",
            fits.len()
        )));
    }
    let pos = |k: usize| subset.iter().position(|&s| s == k);
    let j_pos = pos(j).ok_or_else(|| Error::Precondition(format!("pivot {j} not in subset")))?;
    for (i, fit) in fits.iter().enumerate() {
        if fit.response() != subset[i] {
            return Err(Error::Precondition(format!(
                "fit {i} has response {} but subset member is {}",
                fit.response(),
                subset[i]
            )));
        }
    }

    let mut a = DMatrix::zeros(r + 1, r + 1);
    let mut b = DVector::zeros(r + 1);

    let fj = &fits[j_pos];
    let cm = fj.coef(m)?;
    a[(0, 0)] = cm * cm;
    let mut rhs = table.var(j)? - qc;
    for (s_pos, &s) in subset.iter().enumerate() {
        if s == j {
            continue;
        }
        let cs = fj.coef(s)?;
        a[(0, 1 + s_pos)] = 2.0 * cm * cs;
        for &t in subset {
            if t == j {
                continue;
            }
            rhs -= cs * fj.coef(t)? * table.cov(s, t)?;
        }
    }
    b[0] = rhs;

    let alpha_m = table.mean(m)?;
    for (k_pos, (&k, fk)) in subset.iter().zip(fits).enumerate() {
        let row = 1 + k_pos;
        let ckm = fk.coef(m)?;
        a[(row, 0)] = -ckm;
        a[(row, 1 + k_pos)] = 1.0;
        let mut fitted_mean = fk.intercept() + ckm * alpha_m;
        for (s_pos, &s) in subset.iter().enumerate() {
            if s == k {
                continue;
            }
            let cs = fk.coef(s)?;
            a[(row, 1 + s_pos)] = -cs;
            fitted_mean += cs * table.mean(s)?;
        }
        b[row] = (fitted_mean - table.mean(k)?) * alpha_m;
    }

    let condition = condition_number(&a);
    Ok(PivotSystem {
        m_hat: a,
        p_hat: b,
        pivot_j: j,
        condition_number: condition,
    })
}

/// Builds and solves the pivot system; see [`build_pivot_system`].
///
/// Fails with [`Error::SingularSystem`] when the condition number exceeds `1e8`.
pub fn solve_pivot_system<R: LinearRelation>(
    m: usize,
    j: usize,
    subset: &[usize],
    fits: &[R],
    table: &MomentTable,
    qc: f64,
) -> Result<PivotSolution> {
    let system = build_pivot_system(m, j, subset, fits, table, qc)?;
    let x = solve_checked(&system.m_hat, &system.p_hat, CONDITION_THRESHOLD)?;
    Ok(PivotSolution {
        var_m: x[0],
        cov: subset.iter().enumerate().map(|(i, &s)| (s, x[1 + i])).collect(),
        system,
    })
}

/// Variance of `m` and its pivot covariances by inverting a single relation.
///
/// `rel` regresses pivot `j` on `Y_m` and `S - j`, with residual variance
/// `resid`. Its normal equations give, for `k` in `S - j`,
/// `c_m Cov(Y_m, Y_k) = Cov(Y_j, Y_k) - sum_s c_s Cov(Y_s, Y_k)`, then
/// `c_m Cov(Y_m, Y_j) = Var(Y_j) - resid - sum_s c_s Cov(Y_s, Y_j)` and
/// `c_m Var(Y_m) = Cov(Y_m, Y_j) - sum_s c_s Cov(Y_m, Y_s)`.
pub fn invert_relation<R: LinearRelation>(
    rel: &R,
    m: usize,
    subset: &[usize],
    table: &MomentTable,
    resid: f64,
) -> Result<PivotInversion> {
    let j = rel.response();
    if !subset.contains(&j) {
        return Err(Error::Precondition(format!("pivot {j} not in subset")));
    }
    let c_m = rel.coef(m)?;
    if !(c_m.abs() >= denominator_threshold(table, j)) {
        return Err(Error::DenominatorNearZero { value: c_m });
    }
    let others: Vec<usize> = subset.iter().copied().filter(|&s| s != j).collect();
    let coefs: Vec<f64> = others.iter().map(|&s| rel.coef(s)).collect::<Result<_>>()?;
    let explained = |k: usize| -> Result<f64> {
        others
            .iter()
            .zip(&coefs)
            .map(|(&s, c)| table.cov(s, k).map(|v| c * v))
            .sum()
    };

    let mut cov = Vec::with_capacity(subset.len());
    for &k in subset {
        let value = if k == j {
            (table.var(j)? - resid - explained(j)?) / c_m
        } else {
            (table.cov(j, k)? - explained(k)?) / c_m
        };
        cov.push((k, value));
    }
    let cov_of = |k: usize| cov.iter().find(|(s, _)| *s == k).map(|(_, v)| *v).unwrap_or(f64::NAN);
    let mut var_m = cov_of(j);
    for (&s, c) in others.iter().zip(&coefs) {
        var_m -= c * cov_of(s);
    }
    var_m /= c_m;
    Ok(PivotInversion { var_m, cov })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotInversion {
    pub var_m: f64,
    /// `(s, Cov(Y_m, Y_s))` in subset order.
    pub cov: Vec<(usize, f64)>,
}

/// Median-aggregated variance of `m` and covariances of `m` with each pivot candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct VarCovEstimate {
    pub var: Aggregate,
    /// Keyed by pivot index; only pivots that appeared in a successful combination.
    pub cov: BTreeMap<usize, Aggregate>,
}

/// Variance of MNAR variable `m` and its covariances with the pivots.
///
/// `alpha_m` is the previously estimated mean of `m`. Every pivot combination and
/// every choice of first-row pivot `j` yields one solved system; each cell is the
/// median of its raw values.
pub fn estimate_varcov_pivot(
    data: &Dataset,
    m: usize,
    pivots: &[usize],
    alpha_m: f64,
    config: &EstimatorConfig,
) -> Result<VarCovEstimate> {
    let pivots = sorted_pivots(pivots);
    check_inputs(data, m, &pivots, config.rank)?;
    let mut table = observed_moments(data, &pivots)?;
    table.set_mean(m, alpha_m);
    let qc = residual_cache(data, &pivots, &[m]);
    varcov_with_table(data, m, &pivots, config, &table, &qc)
}

/// Conditional residual variances for each pivot, computed once.
pub(crate) fn residual_cache(
    data: &Dataset,
    pivots: &[usize],
    condition: &[usize],
) -> BTreeMap<usize, Result<f64>> {
    pivots
        .iter()
        .map(|&j| (j, cc_conditional_residual_variance(data, j, condition)))
        .collect()
}

pub(crate) fn varcov_with_table(
    data: &Dataset,
    m: usize,
    pivots: &[usize],
    config: &EstimatorConfig,
    table: &MomentTable,
    qc: &BTreeMap<usize, Result<f64>>,
) -> Result<VarCovEstimate> {
    let mut var_raw = Vec::new();
    let mut cov_raw: BTreeMap<usize, Vec<RawEstimate>> = BTreeMap::new();
    let mut skipped = 0;
    let mut last_error = None;

    for subset in pivot_combinations(pivots, config.rank, config.max_combos, config.seed) {
        let fits: Result<Vec<_>> = subset
            .iter()
            .map(|&k| cc_ols(data, k, &pivot_regressors(m, &subset, k), &[]))
            .collect();
        let fits = match fits {
            Ok(f) => f,
            Err(e) => {
                skipped += subset.len();
                last_error = Some(e);
                continue;
            }
        };
        for (j_pos, &j) in subset.iter().enumerate() {
            let solved = match config.method {
                VarCovMethod::PivotSystem => qc[&j]
                    .clone()
                    .and_then(|q| solve_pivot_system(m, j, &subset, &fits, table, q))
                    .map(|sol| (sol.var_m, sol.cov)),
                VarCovMethod::Inversion => {
                    let fit = &fits[j_pos];
                    invert_relation(fit, m, &subset, table, fit.residual_variance).map(|inv| (inv.var_m, inv.cov))
                }
            };
            match solved {
                Ok((var_m, cov)) => {
                    var_raw.push(RawEstimate {
                        quantity: Quantity::Variance { var: m },
                        pivots: subset.clone(),
                        response: j,
                        value: var_m,
                    });
                    for (s, value) in cov {
                        cov_raw.entry(s).or_default().push(RawEstimate {
                            quantity: Quantity::Covariance { a: m, b: s },
                            pivots: subset.clone(),
                            response: j,
                            value,
                        });
                    }
                }
                Err(e) => {
                    skipped += 1;
                    last_error = Some(e);
                }
            }
        }
    }

    let var = Aggregate::from_raw(m, var_raw, skipped, last_error)?;
    let cov = cov_raw
        .into_iter()
        .map(|(s, raw)| Aggregate::from_raw(m, raw, 0, None).map(|agg| (s, agg)))
        .collect::<Result<_>>()?;
    Ok(VarCovEstimate { var, cov })
}

/// Mean, then variance and pivot covariances, of one MNAR variable.
pub(crate) fn mnar_pass(
    data: &Dataset,
    m: usize,
    pivots: &[usize],
    config: &EstimatorConfig,
    pivot_table: &MomentTable,
    qc: &BTreeMap<usize, Result<f64>>,
) -> Result<(Aggregate, VarCovEstimate)> {
    let mean = mean_with_table(data, m, pivots, config, pivot_table)?;
    let mut table = pivot_table.clone();
    table.set_mean(m, mean.value);
    let varcov = varcov_with_table(data, m, pivots, config, &table, qc)?;
    Ok((mean, varcov))
}
