use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::moments::{cc_ols, observed_moments};

/// Closed-form estimates for three variables, rank two, with only the first missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyEstimates {
    pub alpha1: f64,
    pub var1: f64,
    pub cov12: f64,
    pub cov13: f64,
}

fn nonzero(value: f64, scale: f64) -> Result<f64> {
    if value.abs() >= 1e-8 * scale {
        Ok(value)
    } else {
        Err(Error::DenominatorNearZero { value })
    }
}

/// Path-tracing estimators for the three-variable example (columns 0, 1, 2).
///
/// With `b21`, `b23` the complete-case slopes of `Y2` on `(Y1, Y3)`, `b31`, `b32`
/// those of `Y3` on `(Y1, Y2)` and `s31` the slope of `Y3` on `Y1` alone:
///
/// * `alpha1 = (alpha2 - b20 - b23 alpha3) / b21`
/// * `Var1 = (Var3 / s31) (1 / b21) (Cov23 / Var3 - b23)`
/// * `Cov12 = (1 / b31) (Cov23 / Var2 - b32) Var2`
/// * `Cov13 = (1 / b21) (Cov23 / Var3 - b23) Var3`
pub fn toy_graphical_estimates(data: &Dataset) -> Result<ToyEstimates> {
    if data.ncols() != 3 {
        return Err(Error::Precondition(format!(
            "the closed forms need exactly 3 variables, got {}",
            data.ncols()
        )));
    }
    for i in 0..data.nrows() {
        if !data.is_observed(i, 1) || !data.is_observed(i, 2) {
            return Err(Error::Precondition(format!(
                "row {i} is missing a value outside the first column"
            )));
        }
    }
    let (y1, y2, y3) = (0, 1, 2);
    let moments = observed_moments(data, &[y2, y3])?;
    let (alpha2, alpha3) = (moments.mean(y2)?, moments.mean(y3)?);
    let (var2, var3, cov23) = (moments.var(y2)?, moments.var(y3)?, moments.cov(y2, y3)?);

    let f2 = cc_ols(data, y2, &[y1, y3], &[])?;
    let f3 = cc_ols(data, y3, &[y1, y2], &[])?;
    let s3 = cc_ols(data, y3, &[y1], &[])?;
    let (b20, b21, b23) = (f2.intercept, f2.coefficients[0], f2.coefficients[1]);
    let (b31, b32) = (f3.coefficients[0], f3.coefficients[1]);
    let s31 = s3.coefficients[0];

    let b21 = nonzero(b21, var2.sqrt())?;
    let b31 = nonzero(b31, var3.sqrt())?;
    let s31 = nonzero(s31, var3.sqrt())?;

    Ok(ToyEstimates {
        alpha1: (alpha2 - b20 - b23 * alpha3) / b21,
        var1: (var3 / s31) * (1.0 / b21) * (cov23 / var3 - b23),
        cov12: (1.0 / b31) * (cov23 / var2 - b32) * var2,
        cov13: (1.0 / b21) * (cov23 / var3 - b23) * var3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{population_covariance, sample_ppca, Mask, PpcaParams};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn noiseless_data_is_exact() {
        let params = PpcaParams::new(
            DVector::from_vec(vec![0.5, 1.0, 1.5]),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.3, 0.8, -0.4, 1.1, 0.6]),
            0.0,
        )
        .unwrap();
        let y = sample_ppca(&params, 4000, 2).unwrap();
        // self-masking on Y1 with a hard threshold keeps exogeneity
        let mask = Mask::from_fn(y.nrows(), 3, |i, j| j != 0 || y[(i, 0)] < 0.9);
        let full_mean = y.column(0).mean();
        let data = Dataset::new(y, mask, vec![0], vec![1, 2]).unwrap();
        let est = toy_graphical_estimates(&data).unwrap();
        let sigma = population_covariance(&params);
        // Y1 is an exact linear function of the pivots, so its full-sample mean is recovered
        assert_relative_eq!(est.alpha1, full_mean, epsilon = 1e-10);
        assert_relative_eq!(est.var1, sigma[(0, 0)], max_relative = 0.15);
        assert_relative_eq!(est.cov12, sigma[(0, 1)], epsilon = 0.1);
        assert_relative_eq!(est.cov13, sigma[(0, 2)], epsilon = 0.1);
    }

    #[test]
    fn rejects_wrong_shape() {
        let y = DMatrix::from_element(5, 4, 1.0);
        let data = Dataset::from_observed(y, vec![], vec![]).unwrap();
        assert!(toy_graphical_estimates(&data).is_err());
    }

    #[test]
    fn matches_single_combination_mean() {
        use crate::estimators::{estimate_mean_mnar, EstimatorConfig};
        for seed in 0..5 {
            let params = PpcaParams::random(3, 2, 0.5, seed).unwrap();
            let y = sample_ppca(&params, 500, seed + 10).unwrap();
            let mask = Mask::from_fn(500, 3, |i, j| j != 0 || y[(i, 0)] < params.alpha[0] + 0.5);
            let data = Dataset::new(y, mask, vec![0], vec![1, 2]).unwrap();
            let toy = toy_graphical_estimates(&data).unwrap();
            let agg = estimate_mean_mnar(&data, 0, &[1, 2], &EstimatorConfig::new(2)).unwrap();
            let same = agg.raw.iter().find(|r| r.response == 1).unwrap();
            assert_relative_eq!(same.value, toy.alpha1, max_relative = 1e-13);
        }
    }
}
