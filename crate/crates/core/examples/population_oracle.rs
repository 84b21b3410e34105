//! Estimator formulas fed with exact population coefficients on noiseless data.

use ppca_mnar::estimators::{
    build_pivot_system, invert_relation, mean_from_relation, nonpivot_cov_from_relation, solve_pivot_system,
};
use ppca_mnar::model::{population_cc_coefficients, population_covariance, population_moments, PpcaParams};

fn main() -> ppca_mnar::Result<()> {
    let params = PpcaParams::random(6, 2, 0.0, 3)?;
    let sigma = population_covariance(&params);
    let table = population_moments(&params);
    let (m, subset) = (0, [4, 5]);

    let fits = [
        population_cc_coefficients(&params, 4, &[m, 5])?,
        population_cc_coefficients(&params, 5, &[m, 4])?,
    ];
    println!("alpha_m {:.12} true {:.12}", mean_from_relation(&fits[0], m, &table)?, params.alpha[m]);

    let inv = invert_relation(&fits[0], m, &subset, &table, 0.0)?;
    println!("Var_m   {:.12} true {:.12}", inv.var_m, sigma[(m, m)]);
    for (s, c) in &inv.cov {
        println!("Cov(m,{s}) {:.12} true {:.12}", c, sigma[(m, *s)]);
    }

    let ell = 1;
    let rel = population_cc_coefficients(&params, 5, &[m, ell])?;
    let cov = nonpivot_cov_from_relation(&rel, m, ell, &table, 0.0)?;
    println!("Cov(m,{ell}) {cov:.12} true {:.12}", sigma[(m, ell)]);

    let system = build_pivot_system(m, 4, &subset, &fits, &table, 0.0)?;
    println!("pivot system condition number: {:.3e}", system.condition_number);
    match solve_pivot_system(m, 4, &subset, &fits, &table, 0.0) {
        Ok(sol) => println!("pivot system Var_m {:.12}", sol.var_m),
        Err(e) => println!("pivot system: {e}"),
    }
    Ok(())
}
