//! Write a masked dataset with NA cells, read it back, and impute it.

use ppca_mnar::estimators::EstimatorConfig;
use ppca_mnar::harness::{default_names, load_csv, write_matrix_csv, ExperimentConfig, Simulation};
use ppca_mnar::ppca::{fit_ppca_mnar, Noise};

fn main() -> ppca_mnar::Result<()> {
    let sim = Simulation::new(ExperimentConfig::self_masked_low_dim())?;
    let rep = sim.replicate(0)?;

    let path = std::env::temp_dir().join("ppca_mnar_example.csv");
    let names = default_names(rep.data.ncols());
    write_matrix_csv(std::fs::File::create(&path)?, &names, rep.data.values(), Some(rep.data.omega()))?;
    println!("wrote {}", path.display());

    let table = load_csv(&path)?;
    assert_eq!(table.data.omega(), rep.data.omega());
    let data = table.data.with_roles((0..7).collect(), vec![7, 8, 9])?;
    let out = fit_ppca_mnar(&data, &EstimatorConfig::new(2), Noise::Known(0.01))?;

    let mut stdout = std::io::stdout().lock();
    let head = out.imputed.rows(0, 3).into_owned();
    write_matrix_csv(&mut stdout, &table.names, &head, None)?;
    Ok(())
}
