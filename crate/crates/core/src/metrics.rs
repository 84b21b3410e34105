//! Evaluation metrics for loading recovery and imputation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Mask;

/// RV coefficient between two configurations with the same number of columns.
///
/// `RV(A, B) = tr(A^T A B^T B) / sqrt(tr((A^T A)^2) tr((B^T B)^2))`, computed
/// through the small cross products `A B^T`, `A A^T` and `B B^T`.
pub fn rv_coefficient(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} and {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    let aa = (a * a.transpose()).norm();
    let bb = (b * b.transpose()).norm();
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let ab = (a * b.transpose()).norm_squared();
    Ok((ab / (aa * bb)).clamp(0.0, 1.0))
}

/// `||(Y_hat - Y) * (1 - omega)||_F^2 / ||Y * (1 - omega)||_F^2` over missing cells.
pub fn prediction_error(y_hat: &DMatrix<f64>, y_true: &DMatrix<f64>, omega: &Mask) -> Result<f64> {
    if y_hat.shape() != y_true.shape() || y_true.shape() != (omega.nrows(), omega.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?}, truth {:?}, mask {:?}",
            y_hat.shape(),
            y_true.shape(),
            (omega.nrows(), omega.ncols())
        )));
    }
    let (mut num, mut den, mut count) = (0.0, 0.0, 0usize);
    for j in 0..y_true.ncols() {
        for i in 0..y_true.nrows() {
            if !omega.is_observed(i, j) {
                num += (y_hat[(i, j)] - y_true[(i, j)]).powi(2);
                den += y_true[(i, j)].powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::NoMissingCells);
    }
    Ok(num / den)
}
