//! Moment estimators for MNAR variables built from complete-case regressions.
//!
//! Each estimator exists in two layers: a formula layer generic over
//! [`LinearRelation`](crate::moments::LinearRelation) and
//! [`MomentTable`](crate::moments::MomentTable), and a data layer that fits
//! complete-case regressions over pivot combinations and aggregates the raw
//! values by their median.

mod assemble;
mod combos;
mod mar;
mod mean;
mod nonpivot;
mod pivot;
mod toy;

use serde::Serialize;

pub use assemble::{assemble_sigma, MomentEstimates, Provenance, Warning};
pub use combos::{binomial, pivot_combinations};
pub use mar::{
    assemble_sigma_mar, estimate_moments_mar, mar_cov_from_relation, mar_mean_from_relation,
    mar_var_from_relation, MarEstimate,
};
pub use mean::{estimate_mean_mnar, mean_from_relation};
pub use nonpivot::{estimate_cov_nonpivot, nonpivot_cov_from_relation};
pub use pivot::{
    build_pivot_system, estimate_varcov_pivot, invert_relation, solve_pivot_system, PivotInversion, PivotSolution, PivotSystem,
    VarCovEstimate,
};
pub use toy::{toy_graphical_estimates, ToyEstimates};

/// Settings shared by the combination-based estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Latent dimension `r`.
    pub rank: usize,
    /// Largest number of pivot subsets evaluated per quantity.
    pub max_combos: usize,
    /// Seed for subsampling pivot subsets when there are more than `max_combos`.
    pub seed: u64,
    /// Keep every per-combination raw value in the output.
    pub keep_details: bool,
    /// How variances and covariances of MNAR variables are derived from the fits.
    pub method: VarCovMethod,
}

/// Route from complete-case fits to second moments of an MNAR variable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarCovMethod {
    /// Solve the `(r + 1) x (r + 1)` pivot system with the small-noise terms dropped,
    /// using the conditional residual variance over fully observed rows.
    PivotSystem,
    /// Invert each fitted relation through its normal equations, correcting with
    /// the fit's own residual variance. Exact in the population for any noise level.
    #[default]
    Inversion,
}

impl EstimatorConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_combos: 300,
            seed: 0,
            keep_details: false,
            method: VarCovMethod::default(),
        }
    }
}

/// The quantity a raw per-combination estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quantity {
    Mean { var: usize },
    Variance { var: usize },
    Covariance { a: usize, b: usize },
}

/// One estimate from a single pivot combination and response variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawEstimate {
    pub quantity: Quantity,
    /// The pivot combination, sorted.
    pub pivots: Vec<usize>,
    /// The response variable of the regression that produced the value.
    pub response: usize,
    pub value: f64,
}

/// A median-aggregated estimate with the raw values it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub value: f64,
    pub raw: Vec<RawEstimate>,
    /// Number of combinations that failed and were skipped.
    pub skipped: usize,
}

impl Aggregate {
    pub(crate) fn from_raw(
        var: usize,
        raw: Vec<RawEstimate>,
        skipped: usize,
        last_error: Option<crate::Error>,
    ) -> crate::Result<Self> {
        let values: Vec<f64> = raw.iter().map(|r| r.value).collect();
        match crate::linalg::median(&values) {
            Some(value) => Ok(Self {
                value,
                raw,
                skipped,
            }),
            None => Err(crate::Error::NoSuccessfulCombination {
                var,
                last: Box::new(last_error.unwrap_or_else(|| {
                    crate::Error::Precondition("no pivot combination available".into())
                })),
            }),
        }
    }

    pub fn min_raw(&self) -> f64 {
        self.raw.iter().map(|r| r.value).fold(f64::INFINITY, f64::min)
    }

    pub fn max_raw(&self) -> f64 {
        self.raw.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Rejection threshold for denominators: `1e-8` times the response's standard deviation.
pub(crate) fn denominator_threshold(table: &crate::moments::MomentTable, response: usize) -> f64 {
    let sd = table.var(response).map(f64::sqrt).unwrap_or(1.0);
    if sd.is_finite() && sd > 0.0 {
        1e-8 * sd
    } else {
        1e-8
    }
}

/// Sorted, deduplicated copy of a pivot list.
pub(crate) fn sorted_pivots(pivots: &[usize]) -> Vec<usize> {
    let mut v = pivots.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}
