//! Every implemented method on one replicate of the low-dimensional self-masked setting.

use ppca_mnar::harness::{run_method, ExperimentConfig, Method, Simulation};
use ppca_mnar::metrics::{prediction_error, rv_coefficient};
use ppca_mnar::model::population_covariance;

fn main() -> ppca_mnar::Result<()> {
    let sim = Simulation::new(ExperimentConfig::self_masked_low_dim())?;
    let rep = sim.replicate(1)?;
    let truth = population_covariance(&sim.params);
    let est = sim.estimator_config();

    println!("truth: alpha_0 {:.4}, Var_0 {:.4}", sim.params.alpha[0], truth[(0, 0)]);
    println!("{:<11} {:>8} {:>8} {:>8} {:>10}", "method", "alpha_0", "Var_0", "RV", "pred err");
    for method in Method::ALL {
        match run_method(method, &rep.data, &rep.y_true, &est, 0.01, (200, 1e-5)) {
            Ok(out) => println!(
                "{:<11} {:>8.4} {:>8.4} {:>8.4} {:>10.4}",
                method.name(),
                out.alpha[0],
                out.sigma[(0, 0)],
                rv_coefficient(&out.b_hat, &sim.params.loadings)?,
                prediction_error(&out.imputed, &rep.y_true, rep.data.omega())?
            ),
            Err(e) => println!("{:<11} {e}", method.name()),
        }
    }
    Ok(())
}
