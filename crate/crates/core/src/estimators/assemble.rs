use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen_desc;
use crate::model::Dataset;
use crate::moments::{observed_moments, MomentTable};

use super::nonpivot::nonpivot_with_table;
use super::pivot::{mnar_pass, residual_cache};
use super::{EstimatorConfig, RawEstimate};

/// How a cell of the covariance estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Pairwise empirical moments of variables that are not MNAR.
    Empirical,
    /// Solved from the pivot system of an MNAR variable.
    PivotSystem,
    /// From the non-pivot covariance decomposition.
    NonPivot,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// An estimated variance came out negative before the final floor.
    NegativeVariance { var: usize, value: f64 },
    /// Negative eigenvalues of the assembled matrix were set to zero.
    EigenvalueFloor { min_eigenvalue: f64 },
    /// Some pivot combinations failed and were left out of a median.
    SkippedCombinations { row: usize, col: usize, count: usize },
}

/// Estimated means and covariance matrix with per-cell provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub alpha_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    provenance: Vec<Provenance>,
    pub details: Vec<RawEstimate>,
    pub warnings: Vec<Warning>,
}

impl MomentEstimates {
    pub(crate) fn new(table: MomentTable, provenance: Vec<Provenance>) -> Self {
        let (alpha_hat, sigma_hat) = table.into_parts();
        Self {
            alpha_hat,
            sigma_hat,
            provenance,
            details: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha_hat.len()
    }

    pub fn provenance(&self, a: usize, b: usize) -> Provenance {
        self.provenance[a * self.dim() + b]
    }

    pub(crate) fn set_provenance(provenance: &mut [Provenance], p: usize, a: usize, b: usize, tag: Provenance) {
        provenance[a * p + b] = tag;
        provenance[b * p + a] = tag;
    }

    /// Replaces the covariance by its projection onto the PSD cone when a variance is negative.
    pub(crate) fn floor_if_negative(&mut self) {
        let p = self.dim();
        for k in 0..p {
            let v = self.sigma_hat[(k, k)];
            if v < 0.0 {
                self.warnings.push(Warning::NegativeVariance { var: k, value: v });
            }
        }
        if !(0..p).any(|k| self.sigma_hat[(k, k)] < 0.0) {
            return;
        }
        let (vals, vecs) = symmetric_eigen_desc(&self.sigma_hat);
        let min_eigenvalue = vals.min();
        let floored = DVector::from_iterator(p, vals.iter().map(|&v| v.max(0.0)));
        let s = &vecs * DMatrix::from_diagonal(&floored) * vecs.transpose();
        self.sigma_hat = (&s + s.transpose()) * 0.5;
        self.warnings.push(Warning::EigenvalueFloor { min_eigenvalue });
    }

}

fn cell_error(row: usize, col: usize) -> impl FnOnce(Error) -> Error {
    move |source| Error::Cell {
        row,
        col,
        source: Box::new(source),
    }
}

/// Full mean vector and covariance matrix under MNAR self-masking.
///
/// Variables outside the MNAR set take pairwise empirical moments. Each MNAR
/// variable gets its mean, variance and pivot covariances from the pivot
/// combinations, and only then are covariances with non-pivot variables
/// filled, so that both variances of every pair are already known.
pub fn assemble_sigma(data: &Dataset, config: &EstimatorConfig) -> Result<MomentEstimates> {
    data.validate_roles(config.rank)?;
    let p = data.ncols();
    let mnar = data.mnar_vars().to_vec();
    let pivots = data.pivot_vars().to_vec();
    let others: Vec<usize> = (0..p).filter(|&k| !data.is_mnar(k)).collect();

    let mut table = observed_moments(data, &others)?;
    let mut provenance = vec![Provenance::Empirical; p * p];
    let qc = residual_cache(data, &pivots, &[]);

    let passes: Vec<_> = mnar
        .par_iter()
        .map(|&m| mnar_pass(data, m, &pivots, config, &table, &qc).map_err(cell_error(m, m)))
        .collect();

    let mut details = Vec::new();
    let mut skip_notes = Vec::new();
    for (&m, pass) in mnar.iter().zip(passes) {
        let (mean, varcov) = pass?;
        table.set_mean(m, mean.value);
        table.set_cov(m, m, varcov.var.value);
        MomentEstimates::set_provenance(&mut provenance, p, m, m, Provenance::PivotSystem);
        skip_notes.push((m, m, mean.skipped + varcov.var.skipped));
        details.extend(mean.raw);
        details.extend(varcov.var.raw);
        for (s, agg) in varcov.cov {
            table.set_cov(m, s, agg.value);
            MomentEstimates::set_provenance(&mut provenance, p, m, s, Provenance::PivotSystem);
            details.extend(agg.raw);
        }
        for &s in &pivots {
            if !table.has_cov(m, s) {
                return Err(cell_error(m, s)(Error::Precondition(
                    "pivot appears in no successful combination".into(),
                )));
            }
        }
    }

    let mut pairs = Vec::new();
    for &m in &mnar {
        for ell in 0..p {
            if ell == m || data.is_pivot(ell) || (data.is_mnar(ell) && ell < m) {
                continue;
            }
            pairs.push((m, ell));
        }
    }
    let prior = table.clone();
    let cross: Vec<_> = pairs
        .par_iter()
        .map(|&(m, ell)| {
            nonpivot_with_table(data, m, ell, &pivots, config, &prior, &qc).map_err(cell_error(m, ell))
        })
        .collect();
    for (&(m, ell), agg) in pairs.iter().zip(cross) {
        let agg = agg?;
        table.set_cov(m, ell, agg.value);
        MomentEstimates::set_provenance(&mut provenance, p, m, ell, Provenance::NonPivot);
        skip_notes.push((m, ell, agg.skipped));
        details.extend(agg.raw);
    }

    let mut out = MomentEstimates::new(table, provenance);
    for (row, col, count) in skip_notes {
        if count > 0 {
            out.warnings.push(Warning::SkippedCombinations { row, col, count });
        }
    }
    if config.keep_details {
        out.details = details;
    }
    out.floor_if_negative();
    Ok(out)
}
