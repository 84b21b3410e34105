//! Full pipeline: moments, loadings, then conditional-mean imputation of the missing cells.

use ppca_mnar::baselines::mean_impute;
use ppca_mnar::estimators::EstimatorConfig;
use ppca_mnar::harness::{ExperimentConfig, Simulation};
use ppca_mnar::metrics::prediction_error;
use ppca_mnar::ppca::{fit_ppca_mnar, Noise};

fn main() -> ppca_mnar::Result<()> {
    let sim = Simulation::new(ExperimentConfig::self_masked_low_dim())?;
    let rep = sim.replicate(0)?;

    let out = fit_ppca_mnar(&rep.data, &EstimatorConfig::new(2), Noise::Known(0.01))?;
    let omega = rep.data.omega();
    println!("missing cells: {}", omega.missing_count());
    println!("prediction error, MNAR pipeline: {:.4}", prediction_error(&out.imputed, &rep.y_true, omega)?);
    println!(
        "prediction error, mean imputation: {:.4}",
        prediction_error(&mean_impute(&rep.data)?, &rep.y_true, omega)?
    );

    let row = (0..rep.data.nrows()).find(|&i| !omega.row_complete(i)).unwrap_or(0);
    println!("row {row}:");
    for j in 0..rep.data.ncols() {
        let tag = if omega.is_observed(row, j) { "observed" } else { "imputed " };
        println!("  V{:<2} {tag} {:>8.4}  true {:>8.4}", j + 1, out.imputed[(row, j)], rep.y_true[(row, j)]);
    }
    Ok(())
}
