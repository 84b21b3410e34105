use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::VarCovMethod;
use crate::model::{MechanismKind, MechanismSpec, PpcaParams};

use super::bench::Method;

/// Missingness law of one column, with optional calibration targets.
///
/// When `slope_per_sd` is set, `phi1` becomes `slope_per_sd / sd` with `sd` the
/// standard deviation of the mechanism's input. When `target_missing_rate` is
/// set, `phi0` (or the MCAR probability) is solved to hit that rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismEntry {
    pub column: usize,
    #[serde(flatten)]
    pub spec: MechanismSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_per_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_missing_rate: Option<f64>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Mnar, Method::Mar, Method::Mean, Method::Soft, Method::Listwise]
}

fn default_max_combos() -> usize {
    300
}

fn default_soft_max_iter() -> usize {
    200
}

fn default_soft_tol() -> f64 {
    1e-5
}

/// A simulation study: model, missingness, variable roles and methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub r: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    pub alpha_seed: u64,
    pub data_seed: u64,
    pub mechanism_seed: u64,
    pub mechanisms: Vec<MechanismEntry>,
    pub mnar_vars: Vec<usize>,
    pub pivot_vars: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub replications: usize,
    #[serde(default = "default_max_combos")]
    pub max_combos: usize,
    #[serde(default)]
    pub output_path: Option<String>,
    /// Rank given to the estimators; defaults to `r`.
    #[serde(default)]
    pub assumed_rank: Option<usize>,
    /// Noise variance given to the estimators; defaults to `sigma^2`.
    #[serde(default)]
    pub sigma2: Option<f64>,
    /// Estimate the noise variance from complete rows instead.
    #[serde(default)]
    pub estimate_noise: bool,
    #[serde(default)]
    pub varcov_method: VarCovMethod,
    /// Variable whose mean and variance are reported; defaults to the first MNAR variable.
    #[serde(default)]
    pub target_var: Option<usize>,
    /// Covariance cells reported per row.
    #[serde(default)]
    pub cov_pairs: Vec<(usize, usize)>,
    #[serde(default = "default_soft_max_iter")]
    pub soft_max_iter: usize,
    #[serde(default = "default_soft_tol")]
    pub soft_tol: f64,
    /// Fill the wall-time column; off by default so output bytes are reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn rank(&self) -> usize {
        self.assumed_rank.unwrap_or(self.r)
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2.unwrap_or(self.sigma * self.sigma)
    }

    pub fn target(&self) -> Option<usize> {
        self.target_var.or_else(|| self.mnar_vars.first().copied())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p;
        if self.replications == 0 {
            return Err(Error::InvalidParams("replications must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidParams("n must be at least 2".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("invalid noise level {}", self.sigma)));
        }
        for r in [self.r, self.rank()] {
            if r == 0 || r >= p {
                return Err(Error::RankOutOfRange { r, p });
            }
        }
        let roles = self.mnar_vars.iter().chain(&self.pivot_vars).chain(self.target_var.iter());
        for &k in roles.chain(self.cov_pairs.iter().flat_map(|(a, b)| [a, b])) {
            if k >= p {
                return Err(Error::IndexOutOfRange { index: k, len: p });
            }
        }
        if let Some(k) = self.mnar_vars.iter().find(|k| self.pivot_vars.contains(k)) {
            return Err(Error::InvalidRoles(format!("variable {k} is both MNAR and pivot")));
        }
        if self.pivot_vars.len() < self.rank() {
            return Err(Error::InvalidRoles(format!(
                "{} pivot candidates for rank {}",
                self.pivot_vars.len(),
                self.rank()
            )));
        }
        let mut seen = vec![false; p];
        for entry in &self.mechanisms {
            if entry.column >= p {
                return Err(Error::IndexOutOfRange { index: entry.column, len: p });
            }
            if std::mem::replace(&mut seen[entry.column], true) {
                return Err(Error::InvalidParams(format!("two mechanisms for column {}", entry.column)));
            }
            entry.spec.validate(p, self.r)?;
            let pivot = self.pivot_vars.contains(&entry.column);
            if pivot && entry.spec.kind != MechanismKind::Mcar {
                return Err(Error::InvalidRoles(format!(
                    "pivot {} must be fully observed or MCAR",
                    entry.column
                )));
            }
            if let Some(k) = entry.spec.depends_on.iter().find(|k| self.pivot_vars.contains(k)) {
                return Err(Error::InvalidRoles(format!(
                    "mechanism of column {} depends on pivot {k}",
                    entry.column
                )));
            }
            if let Some(rate) = entry.target_missing_rate {
                if !(0.0 < rate && rate < 1.0) {
                    return Err(Error::InvalidParams(format!("target missing rate {rate} outside (0, 1)")));
                }
            }
        }
        Ok(())
    }

    /// True model parameters, fixed across replicates by `alpha_seed`.
    pub fn params(&self) -> Result<PpcaParams> {
        PpcaParams::random(self.p, self.r, self.sigma, self.alpha_seed)
    }

    /// Per-column mechanisms after slope scaling and intercept calibration.
    pub fn resolve_mechanisms(&self, params: &PpcaParams) -> Result<Vec<Option<MechanismSpec>>> {
        let mut specs = vec![None; self.p];
        for entry in &self.mechanisms {
            let mut spec = entry.spec.clone();
            let (mean, sd) = spec.input_law(params, entry.column);
            if let Some(slope) = entry.slope_per_sd {
                spec.phi1 = if sd > 0.0 { slope / sd } else { 0.0 };
            }
            if let Some(rate) = entry.target_missing_rate {
                spec.calibrate_intercept(rate, mean, sd)?;
            }
            specs[entry.column] = Some(spec);
        }
        Ok(specs)
    }

    /// Self-masked logistic MNAR on seven of ten variables, half of each missing,
    /// the last three variables fully observed pivots; 50 replicates.
    pub fn self_masked_low_dim() -> Self {
        let mechanisms = (0..7)
            .map(|column| MechanismEntry {
                column,
                spec: MechanismSpec::self_masked(crate::model::Link::Logistic, 0.0, 0.0),
                slope_per_sd: Some(-3.0),
                target_missing_rate: Some(0.5),
            })
            .collect();
        Self {
            n: 1000,
            p: 10,
            r: 2,
            sigma: 0.1,
            alpha_seed: 42,
            data_seed: 1000,
            mechanism_seed: 5000,
            mechanisms,
            mnar_vars: (0..7).collect(),
            pivot_vars: vec![7, 8, 9],
            methods: default_methods(),
            replications: 50,
            max_combos: default_max_combos(),
            output_path: None,
            assumed_rank: None,
            sigma2: None,
            estimate_noise: false,
            varcov_method: VarCovMethod::default(),
            target_var: Some(0),
            cov_pairs: vec![(0, 1), (0, 7)],
            soft_max_iter: default_soft_max_iter(),
            soft_tol: default_soft_tol(),
            record_wall_time: false,
        }
    }

    /// Ten MNAR variables out of twenty, each missing according to its own value
    /// and two other MNAR variables drawn at random; 20 replicates.
    pub fn general_mnar() -> Self {
        let mnar: Vec<usize> = (0..10).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mechanisms = mnar
            .iter()
            .map(|&m| {
                let others: Vec<usize> = mnar.iter().copied().filter(|&k| k != m).collect();
                let picks = sample(&mut rng, others.len(), 2);
                let deps = vec![m, others[picks.index(0)], others[picks.index(1)]];
                MechanismEntry {
                    column: m,
                    spec: MechanismSpec::general_mnar(0.0, 0.0, deps),
                    slope_per_sd: Some(-3.0),
                    target_missing_rate: Some(0.3),
                }
            })
            .collect();
        Self {
            n: 1000,
            p: 20,
            r: 2,
            sigma: 0.8,
            mechanisms,
            mnar_vars: mnar,
            pivot_vars: (10..20).collect(),
            replications: 20,
            cov_pairs: vec![(0, 1), (0, 10)],
            ..Self::self_masked_low_dim()
        }
    }

    /// Rank-three data with ten self-masked MNAR variables out of twenty,
    /// estimated with `assumed_rank`; 20 replicates.
    pub fn rank_misspecification(assumed_rank: usize) -> Self {
        let mechanisms = (0..10)
            .map(|column| MechanismEntry {
                column,
                spec: MechanismSpec::self_masked(crate::model::Link::Logistic, 0.0, 0.0),
                slope_per_sd: Some(-3.0),
                target_missing_rate: Some(0.3),
            })
            .collect();
        Self {
            n: 1000,
            p: 20,
            r: 3,
            sigma: 0.8,
            mechanisms,
            mnar_vars: (0..10).collect(),
            pivot_vars: (10..20).collect(),
            replications: 20,
            assumed_rank: Some(assumed_rank),
            methods: vec![Method::Mnar],
            cov_pairs: vec![(0, 1), (0, 10)],
            ..Self::self_masked_low_dim()
        }
    }

    /// Looks up a preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "self-masked-low-dim" => Some(Self::self_masked_low_dim()),
            "general-mnar" => Some(Self::general_mnar()),
            "rank-misspecification" => Some(Self::rank_misspecification(2)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["self-masked-low-dim", "general-mnar", "rank-misspecification"] {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
        for r in [2, 3, 4] {
            ExperimentConfig::rank_misspecification(r).validate().unwrap();
        }
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::general_mnar();
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let text = r#"{"n": 100, "p": 5, "r": 2, "sigma": 0.1, "alpha_seed": 1, "data_seed": 2,
            "mechanism_seed": 3, "replications": 1, "mnar_vars": [0], "pivot_vars": [3, 4],
            "mechanisms": [{"column": 0, "kind": "self_masked_probit", "phi0": 0.5, "phi1": -1.0}]}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.max_combos, 300);
        assert_eq!(cfg.methods.len(), 5);
        assert_eq!(cfg.noise_variance(), 0.1f64.powi(2));
        assert_eq!(cfg.target(), Some(0));
    }

    #[test]
    fn rejects_masked_pivot() {
        let mut cfg = ExperimentConfig::self_masked_low_dim();
        cfg.mechanisms[0].column = 8;
        assert!(matches!(cfg.validate(), Err(Error::InvalidRoles(_))));
    }

    #[test]
    fn rejects_zero_replications() {
        let mut cfg = ExperimentConfig::self_masked_low_dim();
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn calibration_hits_target_rate() {
        let cfg = ExperimentConfig::self_masked_low_dim();
        let params = cfg.params().unwrap();
        let specs = cfg.resolve_mechanisms(&params).unwrap();
        let spec = specs[0].as_ref().unwrap();
        let (mean, sd) = spec.input_law(&params, 0);
        assert!((spec.expected_missing_rate(mean, sd) - 0.5).abs() < 1e-9);
        assert!((spec.phi1 * sd + 3.0).abs() < 1e-12);
        assert!(specs[8].is_none());
    }
}
