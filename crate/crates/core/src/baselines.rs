//! Comparison methods: mean imputation, listwise deletion and soft-impute.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::prediction_error;
use crate::model::Dataset;

/// Observed mean of every column.
pub fn column_means(data: &Dataset) -> Result<DVector<f64>> {
    let p = data.ncols();
    let mut means = DVector::zeros(p);
    for j in 0..p {
        let (sum, count) = (0..data.nrows())
            .filter_map(|i| data.get(i, j))
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 {
            return Err(Error::FullyMissingColumn(j));
        }
        means[j] = sum / count as f64;
    }
    Ok(means)
}

/// Replaces every missing cell by its column's observed mean.
pub fn mean_impute(data: &Dataset) -> Result<DMatrix<f64>> {
    let means = column_means(data)?;
    Ok(DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
        data.get(i, j).unwrap_or(means[j])
    }))
}

/// Moments over fully observed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ListwiseStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_rows: usize,
}

/// Mean and unbiased covariance from the rows without any missing cell.
pub fn listwise_stats(data: &Dataset) -> Result<ListwiseStats> {
    let rows: Vec<usize> = (0..data.nrows()).filter(|&i| data.omega().row_complete(i)).collect();
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, available: n });
    }
    let p = data.ncols();
    let y = DMatrix::from_fn(n, p, |i, j| data.values()[(rows[i], j)]);
    let mean = y.row_mean().transpose();
    let centered = DMatrix::from_fn(n, p, |i, j| y[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    Ok(ListwiseStats { mean, cov, n_rows: n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftImputeOptions {
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once `||Z_new - Z||_F^2 / ||Z||_F^2` falls below this.
    pub tol: f64,
}

impl Default for SoftImputeOptions {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftImputeResult {
    /// Completed matrix with observed cells restored.
    pub imputed: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Relative change at the last iteration.
    pub residual: f64,
    /// `0.5 ||P_obs(Y - Z)||_F^2 + lambda ||Z||_*` after each iteration, on centered data.
    pub objective: Vec<f64>,
    pub rank: usize,
}

/// Observed-mean-centered data with missing cells set to zero, plus the means.
fn centered_fill(data: &Dataset) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let means = column_means(data)?;
    let y = DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
        data.get(i, j).map_or(0.0, |v| v - means[j])
    });
    Ok((y, means))
}

/// Iterative singular-value soft-thresholding on column-centered data.
///
/// Starting from `Z = 0`, repeats `Z <- S_lambda(P_obs(Y) + P_miss(Z))`. The
/// returned matrix adds the column means back and keeps observed cells as given.
pub fn soft_impute(data: &Dataset, opts: SoftImputeOptions) -> Result<SoftImputeResult> {
    if !(opts.lambda >= 0.0) {
        return Err(Error::InvalidParams(format!("lambda must be nonnegative, got {}", opts.lambda)));
    }
    let (y, means) = centered_fill(data)?;
    let (n, p) = y.shape();
    let mut z = DMatrix::zeros(n, p);
    let mut objective = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut rank = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let filled = DMatrix::from_fn(n, p, |i, j| if data.is_observed(i, j) { y[(i, j)] } else { z[(i, j)] });
        let svd = filled.svd(true, true);
        let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        let shrunk: Vec<f64> = svd.singular_values.iter().map(|s| (s - opts.lambda).max(0.0)).collect();
        rank = shrunk.iter().filter(|&&s| s > 0.0).count();
        let mut next = DMatrix::zeros(n, p);
        for (k, &s) in shrunk.iter().enumerate() {
            if s > 0.0 {
                next += u.column(k) * vt.row(k) * s;
            }
        }

        let denom = z.norm_squared();
        let change = (&next - &z).norm_squared();
        residual = if denom > 0.0 {
            change / denom
        } else if change == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        z = next;

        let misfit: f64 = (0..n)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|&(i, j)| data.is_observed(i, j))
            .map(|(i, j)| (y[(i, j)] - z[(i, j)]).powi(2))
            .sum();
        objective.push(0.5 * misfit + opts.lambda * shrunk.iter().sum::<f64>());

        if residual < opts.tol {
            converged = true;
            break;
        }
    }

    let imputed = DMatrix::from_fn(n, p, |i, j| data.get(i, j).unwrap_or(z[(i, j)] + means[j]));
    Ok(SoftImputeResult {
        imputed,
        converged,
        iterations,
        residual,
        objective,
        rank,
    })
}

/// Largest singular value of the centered, zero-filled data.
pub fn top_singular_value(data: &Dataset) -> Result<f64> {
    let (y, _) = centered_fill(data)?;
    Ok(y.singular_values().max())
}

/// Soft-impute at the grid value minimizing the true prediction error.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSoftImpute {
    pub lambda: f64,
    pub error: f64,
    pub result: SoftImputeResult,
}

/// `count` log-spaced values from `0.01 s` to `s`, with `s` the top singular value.
pub fn lambda_grid(top: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    let (lo, hi) = ((0.01 * top).ln(), top.ln());
    (0..count)
        .map(|k| (lo + (hi - lo) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Oracle tuning of soft-impute against the complete matrix `y_true`.
///
/// Evaluates a 20-point log grid concurrently, each point started from zero.
pub fn soft_impute_oracle(
    data: &Dataset,
    y_true: &DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<OracleSoftImpute> {
    let top = top_singular_value(data)?;
    let grid = lambda_grid(top, 20);
    let runs: Vec<Result<OracleSoftImpute>> = grid
        .par_iter()
        .map(|&lambda| {
            let result = soft_impute(data, SoftImputeOptions { lambda, max_iter, tol })?;
            let error = prediction_error(&result.imputed, y_true, data.omega())?;
            Ok(OracleSoftImpute { lambda, error, result })
        })
        .collect();
    let mut best: Option<OracleSoftImpute> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().map_or(true, |b| run.error < b.error) {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::Precondition("empty lambda grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_ppca, Mask, PpcaParams};
    use approx::assert_relative_eq;

    fn with_na(rows: usize, cols: usize, vals: &[f64]) -> Dataset {
        Dataset::from_observed(DMatrix::from_row_slice(rows, cols, vals), vec![], vec![]).unwrap()
    }

    #[test]
    fn mean_impute_two_points() {
        let data = with_na(3, 1, &[1.0, f64::NAN, 3.0]);
        assert_eq!(mean_impute(&data).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn mean_impute_fully_missing() {
        let data = with_na(2, 2, &[1.0, f64::NAN, 2.0, f64::NAN]);
        assert!(matches!(mean_impute(&data), Err(Error::FullyMissingColumn(1))));
    }

    #[test]
    fn listwise_without_missingness_is_full_sample() {
        let params = PpcaParams::random(4, 2, 0.5, 1).unwrap();
        let y = sample_ppca(&params, 30, 2).unwrap();
        let data = Dataset::from_observed(y.clone(), vec![], vec![]).unwrap();
        let stats = listwise_stats(&data).unwrap();
        assert_eq!(stats.n_rows, 30);
        assert_relative_eq!(stats.mean[2], y.column(2).mean(), epsilon = 1e-12);
        assert_relative_eq!(stats.cov[(1, 1)], y.column(1).variance() * 30.0 / 29.0, epsilon = 1e-12);
    }

    #[test]
    fn listwise_biased_under_self_masking() {
        let params = PpcaParams::random(4, 2, 0.3, 3).unwrap();
        let y = sample_ppca(&params, 4000, 5).unwrap();
        let cut = params.alpha[0];
        let mask = Mask::from_fn(4000, 4, |i, j| j != 0 || y[(i, 0)] < cut);
        let data = Dataset::new(y.clone(), mask, vec![0], vec![2, 3]).unwrap();
        assert!(listwise_stats(&data).unwrap().mean[0] < y.column(0).mean() - 0.3);
    }

    #[test]
    fn listwise_needs_two_rows() {
        let data = with_na(2, 2, &[1.0, f64::NAN, 2.0, 3.0]);
        assert!(matches!(listwise_stats(&data), Err(Error::InsufficientRows { .. })));
    }

    #[test]
    fn full_shrinkage_gives_means() {
        let params = PpcaParams::random(5, 2, 0.3, 4).unwrap();
        let y = sample_ppca(&params, 60, 1).unwrap();
        let mask = Mask::from_fn(60, 5, |i, j| (i * 7 + j) % 5 != 0);
        let data = Dataset::new(y, mask, vec![], vec![]).unwrap();
        let top = top_singular_value(&data).unwrap();
        let res = soft_impute(&data, SoftImputeOptions { lambda: top, ..Default::default() }).unwrap();
        assert_eq!(res.rank, 0);
        assert_eq!(res.imputed, mean_impute(&data).unwrap());
    }

    #[test]
    fn zero_lambda_complete_data_is_fixed_point() {
        let params = PpcaParams::random(4, 2, 0.3, 4).unwrap();
        let y = sample_ppca(&params, 20, 1).unwrap();
        let data = Dataset::from_observed(y.clone(), vec![], vec![]).unwrap();
        let res = soft_impute(&data, SoftImputeOptions::default()).unwrap();
        assert_eq!(res.imputed, y);
    }

    #[test]
    fn objective_non_increasing() {
        let params = PpcaParams::random(8, 2, 0.3, 6).unwrap();
        let y = sample_ppca(&params, 80, 2).unwrap();
        let mask = Mask::from_fn(80, 8, |i, j| (i * 3 + j * 5) % 7 != 0);
        let data = Dataset::new(y, mask, vec![], vec![]).unwrap();
        let top = top_singular_value(&data).unwrap();
        let res = soft_impute(&data, SoftImputeOptions { lambda: 0.1 * top, max_iter: 200, tol: 1e-12 }).unwrap();
        for w in res.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(10.0, 20);
        assert_eq!(g.len(), 20);
        assert_relative_eq!(g[0], 0.1, epsilon = 1e-12);
        assert_relative_eq!(g[19], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_lambda_rejected() {
        let data = with_na(2, 1, &[1.0, 2.0]);
        assert!(soft_impute(&data, SoftImputeOptions { lambda: -1.0, ..Default::default() }).is_err());
    }
}
