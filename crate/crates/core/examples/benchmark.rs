//! A short Monte Carlo run from a JSON configuration, printed as the results CSV.

use ppca_mnar::harness::{run_benchmark, ExperimentConfig, Method};

fn main() -> ppca_mnar::Result<()> {
    let mut config = ExperimentConfig::self_masked_low_dim();
    config.replications = 3;
    config.methods = vec![Method::Mnar, Method::Mean, Method::EmMar];

    let json = config.to_json()?;
    let config = ExperimentConfig::from_json(&json)?;
    let table = run_benchmark(&config)?;
    print!("{}", table.to_csv_string()?);
    Ok(())
}
