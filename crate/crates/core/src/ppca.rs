//! Loading recovery from an estimated covariance and conditional-mean imputation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::listwise_stats;
use crate::error::{Error, Result};
use crate::estimators::{assemble_sigma, EstimatorConfig, MomentEstimates};
use crate::linalg::{asymmetry, submatrix, symmetric_eigen_desc};
use crate::model::Dataset;

/// Rank-`r` loading matrix recovered from an estimated covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadingEstimate {
    /// `r x p`, row `k` is `sqrt(d_k) u_k^T`.
    pub b_hat: DMatrix<f64>,
    /// Eigenvalues of `Sigma - sigma2 I`, descending, before flooring.
    pub eigenvalues: DVector<f64>,
    pub r: usize,
    pub sigma2: f64,
}

impl LoadingEstimate {
    /// Model covariance `B^T B + sigma2 I`.
    pub fn gamma(&self) -> DMatrix<f64> {
        let p = self.b_hat.ncols();
        self.b_hat.transpose() * &self.b_hat + DMatrix::identity(p, p) * self.sigma2
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{}x{} covariance", m.nrows(), m.ncols())));
    }
    let asym = asymmetry(m);
    if !(asym <= 1e-8 * m.amax().max(1.0)) {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigendecomposition of `sigma_hat - sigma2 I`, keeping the top `r` components.
pub fn estimate_loadings(sigma_hat: &DMatrix<f64>, r: usize, sigma2: f64) -> Result<LoadingEstimate> {
    check_symmetric(sigma_hat)?;
    let p = sigma_hat.nrows();
    if r == 0 || r >= p {
        return Err(Error::RankOutOfRange { r, p });
    }
    let shifted = (sigma_hat + sigma_hat.transpose()) * 0.5 - DMatrix::identity(p, p) * sigma2;
    let (values, vectors) = symmetric_eigen_desc(&shifted);
    let b_hat = DMatrix::from_fn(r, p, |k, j| values[k].max(0.0).sqrt() * vectors[(j, k)]);
    Ok(LoadingEstimate {
        b_hat,
        eigenvalues: values,
        r,
        sigma2,
    })
}

/// Mean of the `p - r` smallest eigenvalues of a complete-case covariance, floored at zero.
pub fn estimate_noise(sigma_cc: &DMatrix<f64>, r: usize) -> Result<f64> {
    check_symmetric(sigma_cc)?;
    let p = sigma_cc.nrows();
    if r >= p {
        return Err(Error::RankOutOfRange { r, p });
    }
    let (values, _) = symmetric_eigen_desc(sigma_cc);
    let tail = values.rows(r, p - r);
    Ok((tail.sum() / (p - r) as f64).max(0.0))
}

/// Gaussian conditional-mean imputation of every missing cell.
///
/// Each missing cell of row `i` gets `alpha_m + G_{m,C} G_{C,C}^+ (Y_{i,C} - alpha_C)`,
/// where `G` is the model covariance of `loadings` and `C` is the set of
/// non-MNAR variables observed in that row. Observed cells are copied unchanged.
pub fn impute(data: &Dataset, estimates: &MomentEstimates, loadings: &LoadingEstimate) -> Result<DMatrix<f64>> {
    impute_with_mean(data, &estimates.alpha_hat, loadings)
}

/// [`impute`] with an explicit mean vector.
pub fn impute_with_mean(data: &Dataset, alpha: &DVector<f64>, loadings: &LoadingEstimate) -> Result<DMatrix<f64>> {
    let p = data.ncols();
    if alpha.len() != p || loadings.b_hat.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "data has {p} columns, mean has {}, loadings have {}",
            alpha.len(),
            loadings.b_hat.ncols()
        )));
    }
    let gamma = loadings.gamma();
    if gamma.iter().any(|v| !v.is_finite()) || alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularConditioningBlock);
    }

    // rows grouped by (conditioning set, missing set) share one regression
    let mut patterns: BTreeMap<(Vec<usize>, Vec<usize>), Vec<usize>> = BTreeMap::new();
    for i in 0..data.nrows() {
        let missing: Vec<usize> = (0..p).filter(|&j| !data.is_observed(i, j)).collect();
        if missing.is_empty() {
            continue;
        }
        let cond: Vec<usize> = (0..p).filter(|&j| data.is_observed(i, j) && !data.is_mnar(j)).collect();
        patterns.entry((cond, missing)).or_default().push(i);
    }

    let mut out = data.values().clone();
    let filled: Vec<(usize, usize, f64)> = patterns
        .par_iter()
        .flat_map_iter(|((cond, missing), rows)| {
            let weights = conditional_weights(&gamma, cond, missing);
            rows.iter()
                .flat_map(move |&i| {
                    let centered =
                        DVector::from_iterator(cond.len(), cond.iter().map(|&k| data.values()[(i, k)] - alpha[k]));
                    let pred = &weights * centered;
                    missing
                        .iter()
                        .enumerate()
                        .map(move |(a, &m)| (i, m, alpha[m] + pred[a]))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    for (i, j, v) in filled {
        out[(i, j)] = v;
    }
    Ok(out)
}

/// `G_{missing,cond} G_{cond,cond}^+`, with a spectral pseudo-inverse so that a
/// rank-deficient noiseless block still yields the exact interpolation.
fn conditional_weights(gamma: &DMatrix<f64>, cond: &[usize], missing: &[usize]) -> DMatrix<f64> {
    if cond.is_empty() {
        return DMatrix::zeros(missing.len(), 0);
    }
    let block = submatrix(gamma, cond, cond);
    let cross = submatrix(gamma, missing, cond);
    let inv = match block.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => {
            let (vals, vecs) = symmetric_eigen_desc(&block);
            let tol = 1e-10 * vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let inv_vals = DVector::from_iterator(vals.len(), vals.iter().map(|&v| if v > tol { 1.0 / v } else { 0.0 }));
            &vecs * DMatrix::from_diagonal(&inv_vals) * vecs.transpose()
        }
    };
    cross * inv
}

/// How the pipeline obtains the noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Known(f64),
    /// Trailing-eigenvalue mean of the complete-case covariance; needs more fully
    /// observed rows than variables.
    Estimate,
}

/// Moments, loadings and completed matrix from one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub moments: MomentEstimates,
    pub loadings: LoadingEstimate,
    pub imputed: DMatrix<f64>,
}

/// Moment estimation, loading recovery and imputation in sequence.
pub fn fit_ppca_mnar(data: &Dataset, config: &EstimatorConfig, noise: Noise) -> Result<PipelineOutput> {
    let sigma2 = match noise {
        Noise::Known(s) => s,
        Noise::Estimate => {
            let stats = listwise_stats(data)?;
            if stats.n_rows <= data.ncols() {
                return Err(Error::InsufficientRows {
                    needed: data.ncols() + 1,
                    available: stats.n_rows,
                });
            }
            estimate_noise(&stats.cov, config.rank)?
        }
    };
    let moments = assemble_sigma(data, config)?;
    let loadings = estimate_loadings(&moments.sigma_hat, config.rank, sigma2)?;
    let imputed = impute(data, &moments, &loadings)?;
    Ok(PipelineOutput {
        moments,
        loadings,
        imputed,
    })
}
