use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{column_means, listwise_stats, mean_impute, soft_impute_oracle};
use crate::error::{Error, Result};
use crate::estimators::{assemble_sigma_mar, EstimatorConfig};
use crate::metrics::{prediction_error, rv_coefficient};
use crate::model::{apply_mechanism, sample_ppca, Dataset, MechanismSpec, PpcaParams};
use crate::ppca::{estimate_loadings, estimate_noise, fit_ppca_mnar, impute, impute_with_mean, Noise};

use super::config::ExperimentConfig;
use super::csv_io::csv_io;

/// Version of the results CSV layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Methods a benchmark can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Complete-case moment estimation under MNAR, then loadings and imputation.
    Mnar,
    /// The same pipeline with the missing variables treated as MAR.
    Mar,
    Mean,
    /// Soft-impute with the oracle penalty.
    Soft,
    /// Moments from fully observed rows.
    Listwise,
    /// EM for PPCA under MAR. Named for result schemas only.
    EmMar,
    /// Parametric MNAR low-rank model. Named for result schemas only.
    MnarParam,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mnar,
        Method::Mar,
        Method::Mean,
        Method::Soft,
        Method::Listwise,
        Method::EmMar,
        Method::MnarParam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mnar => "mnar",
            Method::Mar => "mar",
            Method::Mean => "mean",
            Method::Soft => "soft",
            Method::Listwise => "listwise",
            Method::EmMar => "em_mar",
            Method::MnarParam => "mnar_param",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Estimates produced by one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub alpha: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub imputed: DMatrix<f64>,
}

fn sample_covariance(y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    let mean = y.row_mean();
    let centered = DMatrix::from_fn(n, y.ncols(), |i, j| y[(i, j)] - mean[j]);
    centered.transpose() * &centered / (n.max(2) - 1) as f64
}

fn from_completed(imputed: DMatrix<f64>, alpha: DVector<f64>, rank: usize, sigma2: f64) -> Result<MethodOutput> {
    let sigma = sample_covariance(&imputed);
    let b_hat = estimate_loadings(&sigma, rank, sigma2)?.b_hat;
    Ok(MethodOutput {
        alpha,
        sigma,
        b_hat,
        imputed,
    })
}

/// Runs a single method. `y_true` is only used by the oracle soft-impute.
pub fn run_method(
    method: Method,
    data: &Dataset,
    y_true: &DMatrix<f64>,
    est: &EstimatorConfig,
    sigma2: f64,
    soft: (usize, f64),
) -> Result<MethodOutput> {
    let rank = est.rank;
    match method {
        Method::Mnar => {
            let out = fit_ppca_mnar(data, est, Noise::Known(sigma2))?;
            Ok(MethodOutput {
                alpha: out.moments.alpha_hat,
                sigma: out.moments.sigma_hat,
                b_hat: out.loadings.b_hat,
                imputed: out.imputed,
            })
        }
        Method::Mar => {
            let moments = assemble_sigma_mar(data, est)?;
            let loadings = estimate_loadings(&moments.sigma_hat, rank, sigma2)?;
            let imputed = impute(data, &moments, &loadings)?;
            Ok(MethodOutput {
                alpha: moments.alpha_hat,
                sigma: moments.sigma_hat,
                b_hat: loadings.b_hat,
                imputed,
            })
        }
        Method::Mean => from_completed(mean_impute(data)?, column_means(data)?, rank, sigma2),
        Method::Soft => {
            let oracle = soft_impute_oracle(data, y_true, soft.0, soft.1)?;
            let imputed = oracle.result.imputed;
            let alpha = imputed.row_mean().transpose();
            from_completed(imputed, alpha, rank, sigma2)
        }
        Method::Listwise => {
            let stats = listwise_stats(data)?;
            let loadings = estimate_loadings(&stats.cov, rank, sigma2)?;
            let imputed = impute_with_mean(data, &stats.mean, &loadings)?;
            Ok(MethodOutput {
                alpha: stats.mean,
                sigma: stats.cov,
                b_hat: loadings.b_hat,
                imputed,
            })
        }
        Method::EmMar | Method::MnarParam => Err(Error::MethodNotImplemented(method.name().into())),
    }
}

/// One row of the results table: a method on a replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub method: Method,
    pub replicate: usize,
    pub alpha_hat: Option<f64>,
    pub var_hat: Option<f64>,
    /// One value per configured covariance pair.
    pub cov: Vec<Option<f64>>,
    pub rv: Option<f64>,
    pub pred_error: Option<f64>,
    pub wall_time: Option<f64>,
    pub error: Option<String>,
}

/// One simulated replicate: the complete matrix and its masked version.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: usize,
    pub y_true: DMatrix<f64>,
    pub data: Dataset,
}

/// A validated experiment with its true parameters and calibrated mechanisms.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ExperimentConfig,
    pub params: PpcaParams,
    pub mechanisms: Vec<Option<MechanismSpec>>,
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let params = config.params()?;
        let mechanisms = config.resolve_mechanisms(&params)?;
        Ok(Self {
            config,
            params,
            mechanisms,
        })
    }

    /// Replicate `index`, drawn from seeds offset by `index`.
    pub fn replicate(&self, index: usize) -> Result<Replicate> {
        let cfg = &self.config;
        let y = sample_ppca(&self.params, cfg.n, cfg.data_seed.wrapping_add(index as u64))?;
        let mask = apply_mechanism(&y, &self.mechanisms, cfg.mechanism_seed.wrapping_add(index as u64))?;
        let data = Dataset::new(y.clone(), mask, cfg.mnar_vars.clone(), cfg.pivot_vars.clone())?;
        Ok(Replicate {
            index,
            y_true: y,
            data,
        })
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        let mut est = EstimatorConfig::new(self.config.rank());
        est.max_combos = self.config.max_combos;
        est.method = self.config.varcov_method;
        est
    }

    /// All configured methods on replicate `index`.
    pub fn run_replicate(&self, index: usize) -> Vec<BenchmarkResult> {
        let cfg = &self.config;
        let failed = |method: Method, e: &Error| BenchmarkResult {
            method,
            replicate: index,
            alpha_hat: None,
            var_hat: None,
            cov: vec![None; cfg.cov_pairs.len()],
            rv: None,
            pred_error: None,
            wall_time: None,
            error: Some(e.to_string()),
        };
        let rep = match self.replicate(index) {
            Ok(rep) => rep,
            Err(e) => return cfg.methods.iter().map(|&m| failed(m, &e)).collect(),
        };
        let sigma2 = if cfg.estimate_noise {
            match listwise_stats(&rep.data).and_then(|s| estimate_noise(&s.cov, cfg.rank())) {
                Ok(s) => s,
                Err(e) => return cfg.methods.iter().map(|&m| failed(m, &e)).collect(),
            }
        } else {
            cfg.noise_variance()
        };
        let est = self.estimator_config();
        let target = cfg.target();

        cfg.methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let out = run_method(method, &rep.data, &rep.y_true, &est, sigma2, (cfg.soft_max_iter, cfg.soft_tol));
                let elapsed = start.elapsed().as_secs_f64();
                match out {
                    Ok(out) => BenchmarkResult {
                        method,
                        replicate: index,
                        alpha_hat: target.map(|m| out.alpha[m]),
                        var_hat: target.map(|m| out.sigma[(m, m)]),
                        cov: cfg.cov_pairs.iter().map(|&(a, b)| Some(out.sigma[(a, b)])).collect(),
                        rv: rv_coefficient(&out.b_hat, &self.params.loadings).ok(),
                        pred_error: prediction_error(&out.imputed, &rep.y_true, rep.data.omega()).ok(),
                        wall_time: cfg.record_wall_time.then_some(elapsed),
                        error: None,
                    },
                    Err(e) => BenchmarkResult {
                        wall_time: cfg.record_wall_time.then_some(elapsed),
                        ..failed(method, &e)
                    },
                }
            })
            .collect()
    }

    /// Every replicate, run concurrently, rows sorted by method then replicate.
    pub fn run(&self) -> BenchmarkTable {
        let mut rows: Vec<BenchmarkResult> = (0..self.config.replications)
            .into_par_iter()
            .flat_map_iter(|rep| self.run_replicate(rep))
            .collect();
        rows.sort_by(|a, b| (a.method.name(), a.replicate).cmp(&(b.method.name(), b.replicate)));
        BenchmarkTable {
            target_var: self.config.target(),
            cov_pairs: self.config.cov_pairs.clone(),
            rows,
        }
    }
}

/// Runs a benchmark described by `config`.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchmarkTable> {
    Ok(Simulation::new(config.clone())?.run())
}

/// Results of a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub target_var: Option<usize>,
    pub cov_pairs: Vec<(usize, usize)>,
    pub rows: Vec<BenchmarkResult>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

impl BenchmarkTable {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["schema_version", "method", "replicate", "target_var", "alpha_hat", "var_hat"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.cov_pairs.iter().map(|(a, b)| format!("cov_{a}_{b}")));
        h.extend(["rv", "pred_error", "wall_time", "error"].iter().map(|s| s.to_string()));
        h
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.header()).map_err(csv_io)?;
        for row in &self.rows {
            let mut rec = vec![
                SCHEMA_VERSION.to_string(),
                row.method.name().to_string(),
                row.replicate.to_string(),
                self.target_var.map(|t| t.to_string()).unwrap_or_default(),
                cell(row.alpha_hat),
                cell(row.var_hat),
            ];
            rec.extend(row.cov.iter().map(|&v| cell(v)));
            rec.extend([
                cell(row.rv),
                cell(row.pred_error),
                cell(row.wall_time),
                row.error.clone().unwrap_or_default(),
            ]);
            wtr.write_record(&rec).map_err(csv_io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Precondition(e.to_string()))
    }

    /// Rows of one method, in replicate order.
    pub fn method_rows(&self, method: Method) -> impl Iterator<Item = &BenchmarkResult> {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::self_masked_low_dim();
        cfg.n = 300;
        cfg.replications = 2;
        cfg
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("em".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn single_mean_row() {
        let mut cfg = small();
        cfg.replications = 1;
        cfg.methods = vec![Method::Mean];
        let table = run_benchmark(&cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].error.is_none());
    }

    #[test]
    fn failing_method_keeps_others() {
        let mut cfg = small();
        cfg.methods = vec![Method::EmMar, Method::Mean, Method::Mnar];
        let table = run_benchmark(&cfg).unwrap();
        assert_eq!(table.rows.len(), 6);
        let names: Vec<_> = table.rows.iter().map(|r| (r.method.name(), r.replicate)).collect();
        assert_eq!(names[0], ("em_mar", 0));
        assert_eq!(names[5], ("mnar", 1));
        for row in &table.rows {
            assert_eq!(row.error.is_some(), row.method == Method::EmMar);
        }
        let text = table.to_csv_string().unwrap();
        assert!(text.starts_with("schema_version,method,replicate,target_var,alpha_hat,var_hat,cov_0_1,cov_0_7,"));
        assert!(text.contains("not implemented"));
    }

    #[test]
    fn replicate_is_rerunnable_alone() {
        let sim = Simulation::new(small()).unwrap();
        let all = sim.run();
        let alone = sim.run_replicate(1);
        let from_all: Vec<_> = all.rows.iter().filter(|r| r.replicate == 1).cloned().collect();
        let mut alone = alone;
        alone.sort_by_key(|r| r.method.name());
        assert_eq!(from_all, alone);
    }
}
