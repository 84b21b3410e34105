//! Complete-case least squares and empirical moments over observed entries.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::CONDITION_THRESHOLD;
use crate::model::{Dataset, Mask};

/// A linear relation `Y_response = intercept + sum_k coef_k Y_k + noise`.
///
/// Implemented by fitted complete-case regressions and by exact population
/// coefficients, so the estimator formulas run unchanged on either.
pub trait LinearRelation {
    fn response(&self) -> usize;
    fn intercept(&self) -> f64;
    fn regressors(&self) -> &[usize];
    fn coefficient(&self, var: usize) -> Option<f64>;

    /// Coefficient of a variable that must be among the regressors.
    fn coef(&self, var: usize) -> Result<f64> {
        self.coefficient(var).ok_or_else(|| {
            Error::Precondition(format!(
                "variable {var} is not a regressor of the fit for {}",
                self.response()
            ))
        })
    }
}

/// Means and covariances indexed by variable, with NaN marking entries not yet known.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl MomentTable {
    pub fn unknown(p: usize) -> Self {
        Self {
            mean: DVector::from_element(p, f64::NAN),
            cov: DMatrix::from_element(p, p, f64::NAN),
        }
    }

    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        assert_eq!(mean.len(), cov.nrows());
        assert_eq!(cov.nrows(), cov.ncols());
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self, k: usize) -> Result<f64> {
        let v = self.mean[k];
        if v.is_nan() {
            Err(Error::Precondition(format!("mean of variable {k} is not available")))
        } else {
            Ok(v)
        }
    }

    pub fn var(&self, k: usize) -> Result<f64> {
        self.cov(k, k)
    }

    pub fn cov(&self, a: usize, b: usize) -> Result<f64> {
        let v = self.cov[(a, b)];
        if v.is_nan() {
            Err(Error::Precondition(format!(
                "covariance of variables ({a}, {b}) is not available"
            )))
        } else {
            Ok(v)
        }
    }

    pub fn has_mean(&self, k: usize) -> bool {
        !self.mean[k].is_nan()
    }

    pub fn has_cov(&self, a: usize, b: usize) -> bool {
        !self.cov[(a, b)].is_nan()
    }

    pub fn set_mean(&mut self, k: usize, v: f64) {
        self.mean[k] = v;
    }

    /// Sets both `(a, b)` and `(b, a)`.
    pub fn set_cov(&mut self, a: usize, b: usize, v: f64) {
        self.cov[(a, b)] = v;
        self.cov[(b, a)] = v;
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }
}

/// Rows where every column of `needed_cols` is observed.
pub fn cc_rows(omega: &Mask, needed_cols: &[usize]) -> Result<Vec<usize>> {
    for &k in needed_cols {
        if k >= omega.ncols() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: omega.ncols(),
            });
        }
    }
    Ok((0..omega.nrows())
        .filter(|&i| needed_cols.iter().all(|&k| omega.is_observed(i, k)))
        .collect())
}

/// Ordinary least squares fit restricted to a complete-case subsample.
#[derive(Debug, Clone, PartialEq)]
pub struct CcRegression {
    pub response: usize,
    pub regressors: Vec<usize>,
    /// Columns required observed in addition to the response and regressors.
    pub condition_cols: Vec<usize>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub residual_variance: f64,
    pub n_used: usize,
}

impl LinearRelation for CcRegression {
    fn response(&self) -> usize {
        self.response
    }

    fn intercept(&self) -> f64 {
        self.intercept
    }

    fn regressors(&self) -> &[usize] {
        &self.regressors
    }

    fn coefficient(&self, var: usize) -> Option<f64> {
        self.regressors
            .iter()
            .position(|&k| k == var)
            .map(|pos| self.coefficients[pos])
    }
}

/// Complete-case OLS of `response` on `regressors`.
///
/// Rows are those where the response, every regressor and every conditioning
/// column are observed. The centred design is column-scaled and solved by SVD;
/// a scaled condition number above `1e8` is reported as rank deficiency.
pub fn cc_ols(
    data: &Dataset,
    response: usize,
    regressors: &[usize],
    condition_cols: &[usize],
) -> Result<CcRegression> {
    let p = data.ncols();
    for &k in std::iter::once(&response).chain(regressors) {
        if k >= p {
            return Err(Error::IndexOutOfRange { index: k, len: p });
        }
    }
    let mut needed: Vec<usize> = std::iter::once(response)
        .chain(regressors.iter().copied())
        .chain(condition_cols.iter().copied())
        .collect();
    needed.sort_unstable();
    needed.dedup();
    let rows = cc_rows(data.omega(), &needed)?;

    let k = regressors.len();
    let n = rows.len();
    if n < k + 2 {
        return Err(Error::InsufficientRows {
            needed: k + 2,
            available: n,
        });
    }

    let y = DVector::from_iterator(n, rows.iter().map(|&i| data.observed(i, response)));
    let x = DMatrix::from_fn(n, k, |a, b| data.observed(rows[a], regressors[b]));
    let fit = least_squares(&x, &y, Solve::Strict)?;

    Ok(CcRegression {
        response,
        regressors: regressors.to_vec(),
        condition_cols: condition_cols.to_vec(),
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        residual_variance: fit.residual_variance,
        n_used: n,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Solve {
    /// Reject designs whose scaled condition number exceeds the threshold.
    Strict,
    /// Minimum-norm solution, discarding directions below a relative tolerance.
    Pseudo,
}

struct Fit {
    intercept: f64,
    coefficients: Vec<f64>,
    residual_variance: f64,
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, mode: Solve) -> Result<Fit> {
    let (n, k) = x.shape();
    let y_mean = y.mean();
    let x_means: Vec<f64> = (0..k).map(|b| x.column(b).mean()).collect();
    let mut xc = x.clone();
    for b in 0..k {
        xc.column_mut(b).add_scalar_mut(-x_means[b]);
    }
    let yc = y.add_scalar(-y_mean);

    let mut scales = vec![1.0; k];
    for b in 0..k {
        let norm = xc.column(b).norm();
        if norm > 0.0 {
            scales[b] = norm;
            xc.column_mut(b).scale_mut(1.0 / norm);
        } else if mode == Solve::Strict {
            return Err(Error::RankDeficientDesign {
                condition: f64::INFINITY,
            });
        }
    }

    let beta = if k == 0 {
        DVector::zeros(0)
    } else {
        let svd = xc.clone().svd(true, true);
        let max = svd.singular_values.max();
        let min = svd.singular_values.min();
        let eps = match mode {
            Solve::Strict => {
                let condition = if min > 0.0 { max / min } else { f64::INFINITY };
                if !(condition <= CONDITION_THRESHOLD) {
                    return Err(Error::RankDeficientDesign { condition });
                }
                0.0
            }
            Solve::Pseudo => max * 1e-10,
        };
        svd.solve(&yc, eps)
            .map_err(|msg| Error::Precondition(msg.to_string()))?
    };

    let coefficients: Vec<f64> = (0..k).map(|b| beta[b] / scales[b]).collect();
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&x_means)
            .map(|(c, m)| c * m)
            .sum::<f64>();
    let mut ssr = 0.0;
    for a in 0..n {
        let fitted = intercept + (0..k).map(|b| coefficients[b] * x[(a, b)]).sum::<f64>();
        let e = y[a] - fitted;
        ssr += e * e;
    }
    Ok(Fit {
        intercept,
        coefficients,
        residual_variance: (ssr / (n - k - 1) as f64).max(0.0),
    })
}

/// Pairwise-deletion means and covariances for `cols`; other entries stay unknown.
///
/// Each mean and variance uses the rows where that column is observed; each
/// covariance uses the rows where both columns are observed, centred on the
/// joint subsample. All use the unbiased `n - 1` normalisation.
pub fn observed_moments(data: &Dataset, cols: &[usize]) -> Result<MomentTable> {
    let p = data.ncols();
    for &k in cols {
        if k >= p {
            return Err(Error::IndexOutOfRange { index: k, len: p });
        }
    }
    let mut table = MomentTable::unknown(p);
    for (a_pos, &a) in cols.iter().enumerate() {
        let rows = cc_rows(data.omega(), &[a])?;
        if rows.len() < 2 {
            return Err(Error::TooFewObservations {
                what: format!("column {a}"),
            });
        }
        let vals: Vec<f64> = rows.iter().map(|&i| data.observed(i, a)).collect();
        let (mean, var) = mean_var(&vals);
        table.set_mean(a, mean);
        table.set_cov(a, a, var);

        for &b in &cols[..a_pos] {
            if a == b {
                continue;
            }
            let rows = cc_rows(data.omega(), &[a, b])?;
            if rows.len() < 2 {
                return Err(Error::TooFewObservations {
                    what: format!("column pair ({b}, {a})"),
                });
            }
            let xa: Vec<f64> = rows.iter().map(|&i| data.observed(i, a)).collect();
            let xb: Vec<f64> = rows.iter().map(|&i| data.observed(i, b)).collect();
            table.set_cov(a, b, covariance(&xa, &xb));
        }
    }
    Ok(table)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1.0)
}

/// Residual variance of `Y_j` regressed on all other columns over fully observed rows.
///
/// Rows must have every column observed (which subsumes `condition_cols`), and at
/// least `p + 2` such rows are required. The fit uses a pseudo-inverse, so exactly
/// collinear regressors (as in noiseless low-rank data) give a residual of zero
/// rather than an error.
pub fn cc_conditional_residual_variance(
    data: &Dataset,
    j: usize,
    condition_cols: &[usize],
) -> Result<f64> {
    let p = data.ncols();
    if j >= p {
        return Err(Error::IndexOutOfRange { index: j, len: p });
    }
    for &k in condition_cols {
        if k >= p {
            return Err(Error::IndexOutOfRange { index: k, len: p });
        }
    }
    let all: Vec<usize> = (0..p).collect();
    let rows = cc_rows(data.omega(), &all)?;
    if rows.len() < p + 2 {
        return Err(Error::InsufficientRows {
            needed: p + 2,
            available: rows.len(),
        });
    }
    let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.observed(i, j)));
    let x = DMatrix::from_fn(rows.len(), others.len(), |a, b| {
        data.observed(rows[a], others[b])
    });
    Ok(least_squares(&x, &y, Solve::Pseudo)?.residual_variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dataset(rows: &[&[f64]]) -> Dataset {
        let n = rows.len();
        let p = rows[0].len();
        let y = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Dataset::from_observed(y, vec![], vec![]).unwrap()
    }

    #[test]
    fn cc_rows_trivial_and_alternating() {
        let full = Mask::all_observed(4, 2);
        assert_eq!(cc_rows(&full, &[0, 1]).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(cc_rows(&full, &[]).unwrap(), vec![0, 1, 2, 3]);
        let alt = Mask::from_fn(6, 2, |i, j| j == 1 || i % 2 == 0);
        assert_eq!(cc_rows(&alt, &[0]).unwrap(), vec![0, 2, 4]);
        assert!(cc_rows(&alt, &[2]).is_err());
    }

    #[test]
    fn exact_line_interpolated() {
        let rows: Vec<[f64; 2]> = (0..10).map(|i| [2.0 + 3.0 * i as f64, i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let fit = cc_ols(&dataset(&refs), 0, &[1], &[]).unwrap();
        assert_relative_eq!(fit.intercept, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[0], 3.0, epsilon = 1e-12);
        assert!(fit.residual_variance < 1e-20);
        assert_eq!(fit.n_used, 10);
    }

    #[test]
    fn duplicated_regressor_rejected() {
        let rows: Vec<[f64; 3]> = (0..8)
            .map(|i| {
                let x = (i as f64).sin();
                [x + 1.0, x, x]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(matches!(
            cc_ols(&dataset(&refs), 0, &[1, 2], &[]),
            Err(Error::RankDeficientDesign { .. })
        ));
    }

    #[test]
    fn conditioning_column_drops_rows() {
        // columns: y, x, c; c masks rows 1 and 3
        let nan = f64::NAN;
        let ds = dataset(&[
            &[1.0, 0.0, 1.0],
            &[9.0, 1.0, nan],
            &[2.0, 1.0, 1.0],
            &[9.0, 5.0, nan],
            &[6.0, 2.0, 1.0],
        ]);
        let fit = cc_ols(&ds, 0, &[1], &[2]).unwrap();
        // points (0,1), (1,2), (2,6): x̄ = 1, ȳ = 3, Sxy = 5, Sxx = 2
        assert_eq!(fit.n_used, 3);
        assert_relative_eq!(fit.coefficients[0], 2.5, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 0.5, epsilon = 1e-12);
        // residuals 0.5, -1, 0.5 over 3 - 1 - 1 degrees of freedom
        assert_relative_eq!(fit.residual_variance, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn too_few_rows() {
        let ds = dataset(&[&[1.0, 2.0], &[2.0, 3.0]]);
        assert!(matches!(
            cc_ols(&ds, 0, &[1], &[]),
            Err(Error::InsufficientRows { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn constant_column_has_zero_variance() {
        let ds = dataset(&[&[4.0, 1.0], &[4.0, 2.0], &[4.0, 0.0]]);
        let t = observed_moments(&ds, &[0, 1]).unwrap();
        assert_eq!(t.var(0).unwrap(), 0.0);
        assert_eq!(t.cov(0, 1).unwrap(), 0.0);
        assert_relative_eq!(t.var(1).unwrap(), 1.0);
    }

    #[test]
    fn pairwise_deletion() {
        let nan = f64::NAN;
        let ds = dataset(&[&[1.0, 1.0], &[2.0, nan], &[3.0, 5.0], &[6.0, 3.0]]);
        let t = observed_moments(&ds, &[0, 1]).unwrap();
        assert_relative_eq!(t.mean(0).unwrap(), 3.0);
        assert_relative_eq!(t.mean(1).unwrap(), 3.0);
        // joint rows: (1,1), (3,5), (6,3); means 10/3 and 3
        // cross products (-7/3)(-2) + (-1/3)(2) + 0 = 4 over 2
        assert_relative_eq!(t.cov(0, 1).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn too_few_observations_named() {
        let nan = f64::NAN;
        let ds = dataset(&[&[1.0, nan], &[2.0, nan], &[3.0, 1.0]]);
        match observed_moments(&ds, &[0, 1]) {
            Err(Error::TooFewObservations { what }) => assert!(what.contains('1')),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conditional_residual_zero_on_exact_low_rank() {
        let rows: Vec<[f64; 4]> = (0..12)
            .map(|i| {
                let (a, b) = ((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos());
                [a, b, a + b, 2.0 * a - b + 1.0]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let q = cc_conditional_residual_variance(&dataset(&refs), 2, &[]).unwrap();
        assert!(q.abs() < 1e-20, "q = {q}");
    }
}
