//! Draw PPCA data and mask seven variables with a calibrated self-masked logistic mechanism.

use ppca_mnar::model::{apply_mechanism, sample_ppca, Link, MechanismSpec, PpcaParams};

fn main() -> ppca_mnar::Result<()> {
    let params = PpcaParams::random(10, 2, 0.1, 42)?;
    let y = sample_ppca(&params, 1000, 1)?;

    let mut specs = vec![None; 10];
    for (col, slot) in specs.iter_mut().enumerate().take(7) {
        let mut spec = MechanismSpec::self_masked(Link::Logistic, 0.0, 0.0);
        let (mean, sd) = spec.input_law(&params, col);
        spec.phi1 = -3.0 / sd;
        spec.calibrate_intercept(0.5, mean, sd)?;
        *slot = Some(spec);
    }
    let mask = apply_mechanism(&y, &specs, 2)?;

    println!("overall missing fraction: {:.3}", mask.missing_fraction());
    for col in 0..10 {
        println!("  V{:<2} missing {:.3}", col + 1, mask.column_missing_fraction(col));
    }
    let complete = (0..mask.nrows()).filter(|&i| mask.row_complete(i)).count();
    println!("fully observed rows: {complete}");
    Ok(())
}
