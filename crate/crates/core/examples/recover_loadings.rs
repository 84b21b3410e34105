//! Loading matrix from an estimated covariance, scored by the RV coefficient.

use ppca_mnar::baselines::{listwise_stats, mean_impute};
use ppca_mnar::estimators::{assemble_sigma, EstimatorConfig};
use ppca_mnar::harness::{ExperimentConfig, Simulation};
use ppca_mnar::metrics::rv_coefficient;
use ppca_mnar::ppca::{estimate_loadings, estimate_noise};

fn main() -> ppca_mnar::Result<()> {
    let sim = Simulation::new(ExperimentConfig::self_masked_low_dim())?;
    let rep = sim.replicate(3)?;
    let sigma2 = sim.config.noise_variance();

    let est = assemble_sigma(&rep.data, &EstimatorConfig::new(2))?;
    let loadings = estimate_loadings(&est.sigma_hat, 2, sigma2)?;
    println!("leading eigenvalues: {:.3?}", &loadings.eigenvalues.as_slice()[..4]);
    println!("RV(B_hat, B), MNAR moments: {:.4}", rv_coefficient(&loadings.b_hat, &sim.params.loadings)?);

    let filled = mean_impute(&rep.data)?;
    let centered = &filled - nalgebra::DMatrix::from_fn(filled.nrows(), filled.ncols(), |_, j| filled.column(j).mean());
    let cov = centered.transpose() * &centered / (filled.nrows() - 1) as f64;
    let mean_loadings = estimate_loadings(&cov, 2, sigma2)?;
    println!("RV(B_hat, B), mean imputation: {:.4}", rv_coefficient(&mean_loadings.b_hat, &sim.params.loadings)?);

    match listwise_stats(&rep.data).and_then(|s| estimate_noise(&s.cov, 2)) {
        Ok(s2) => println!("noise variance from complete rows: {s2:.4} (true {sigma2})"),
        Err(e) => println!("noise variance from complete rows unavailable: {e}"),
    }
    Ok(())
}
