//! Three variables, rank two, only the first one missing: closed forms against the general estimator.

use ppca_mnar::estimators::{estimate_mean_mnar, toy_graphical_estimates, EstimatorConfig};
use ppca_mnar::model::{population_covariance, sample_ppca, Dataset, Mask, PpcaParams};

fn main() -> ppca_mnar::Result<()> {
    let params = PpcaParams::random(3, 2, 0.05, 7)?;
    let y = sample_ppca(&params, 2000, 6)?;
    let cut = params.alpha[0] + 0.5;
    let mask = Mask::from_fn(2000, 3, |i, j| j != 0 || y[(i, 0)] < cut);
    let data = Dataset::new(y, mask, vec![0], vec![1, 2])?;

    let toy = toy_graphical_estimates(&data)?;
    let truth = population_covariance(&params);
    println!("alpha1 {:.5} (true {:.5})", toy.alpha1, params.alpha[0]);
    println!("Var1   {:.5} (true {:.5})", toy.var1, truth[(0, 0)]);
    println!("Cov12  {:.5} (true {:.5})", toy.cov12, truth[(0, 1)]);
    println!("Cov13  {:.5} (true {:.5})", toy.cov13, truth[(0, 2)]);

    let agg = estimate_mean_mnar(&data, 0, &[1, 2], &EstimatorConfig::new(2))?;
    for raw in &agg.raw {
        println!("general estimator, response {}: {:.17}", raw.response, raw.value);
    }
    println!("closed form:                    {:.17}", toy.alpha1);
    Ok(())
}
