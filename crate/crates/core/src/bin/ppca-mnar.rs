use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ppca_mnar::estimators::{EstimatorConfig, Warning};
use ppca_mnar::harness::{default_names, load_csv, write_matrix_csv, ExperimentConfig, Simulation};
use ppca_mnar::ppca::{fit_ppca_mnar, Noise};
use ppca_mnar::{Error, Result};

#[derive(Parser)]
#[command(name = "ppca-mnar", version, about = "PPCA with MNAR variables: simulate, estimate, impute, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one replicate of an experiment; writes the masked data, its mask and the complete data.
    Simulate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Replicate index to draw.
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        /// Masked data CSV; `.mask.csv` and `.truth.csv` files are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate means, covariance and loadings from a CSV with NA cells; prints JSON.
    Estimate {
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Complete a CSV with NA cells by conditional-mean imputation.
    Impute {
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo benchmark and write the results CSV.
    Bench {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Overrides the configured output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: self-masked-low-dim, general-mnar or rank-misspecification.
    #[arg(long)]
    preset: Option<String>,
    /// Base seed for data and missingness, replacing the configured ones.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of replicates.
    #[arg(long)]
    replications: Option<usize>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_path(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)
                .ok_or_else(|| Error::InvalidParams(format!("unknown preset `{name}`")))?,
            (None, None) => return Err(Error::InvalidParams("one of --config or --preset is required".into())),
        };
        if let Some(seed) = self.seed {
            cfg.data_seed = seed;
            cfg.mechanism_seed = seed.wrapping_add(0x5eed);
        }
        if let Some(reps) = self.replications {
            cfg.replications = reps;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV with a header row; missing cells are NA.
    input: PathBuf,
    /// Number of latent variables.
    #[arg(long)]
    rank: usize,
    /// MNAR variables, as 0-based indices or column names.
    #[arg(long, value_delimiter = ',', required = true)]
    mnar: Vec<String>,
    /// Pivot variables, as 0-based indices or column names.
    #[arg(long, value_delimiter = ',', required = true)]
    pivots: Vec<String>,
    /// Known noise variance.
    #[arg(long, conflicts_with = "estimate_noise", required_unless_present = "estimate_noise")]
    sigma2: Option<f64>,
    /// Estimate the noise variance from the fully observed rows.
    #[arg(long)]
    estimate_noise: bool,
    /// Seed for subsampling pivot combinations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_combos: usize,
}

fn resolve(names: &[String], items: &[String]) -> Result<Vec<usize>> {
    items
        .iter()
        .map(|item| {
            let item = item.trim();
            names
                .iter()
                .position(|n| n == item)
                .or_else(|| item.parse::<usize>().ok().filter(|&k| k < names.len()))
                .ok_or_else(|| Error::InvalidRoles(format!("unknown variable `{item}`")))
        })
        .collect()
}

struct Fitted {
    names: Vec<String>,
    output: ppca_mnar::ppca::PipelineOutput,
}

impl FitArgs {
    fn run(&self) -> Result<Fitted> {
        let table = load_csv(&self.input)?;
        let mnar = resolve(&table.names, &self.mnar)?;
        let pivots = resolve(&table.names, &self.pivots)?;
        let data = table.data.with_roles(mnar, pivots)?;
        let mut config = EstimatorConfig::new(self.rank);
        config.seed = self.seed;
        config.max_combos = self.max_combos;
        let noise = match self.sigma2 {
            Some(s) => Noise::Known(s),
            None => Noise::Estimate,
        };
        let output = fit_ppca_mnar(&data, &config, noise)?;
        Ok(Fitted {
            names: table.names,
            output,
        })
    }
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    variables: &'a [String],
    alpha_hat: Vec<f64>,
    sigma_hat: Vec<Vec<f64>>,
    b_hat: Vec<Vec<f64>>,
    sigma2: f64,
    eigenvalues: Vec<f64>,
    warnings: &'a [Warning],
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            experiment,
            replicate,
            out,
        } => {
            let sim = Simulation::new(experiment.load()?)?;
            let rep = sim.replicate(replicate)?;
            let names = default_names(sim.config.p);
            write_matrix_csv(File::create(&out)?, &names, rep.data.values(), Some(rep.data.omega()))?;
            write_matrix_csv(File::create(sibling(&out, "mask"))?, &names, &rep.data.omega().to_matrix(), None)?;
            write_matrix_csv(File::create(sibling(&out, "truth"))?, &names, &rep.y_true, None)?;
        }
        Command::Estimate { fit, out } => {
            let fitted = fit.run()?;
            let o = &fitted.output;
            let report = EstimateReport {
                variables: &fitted.names,
                alpha_hat: o.moments.alpha_hat.iter().copied().collect(),
                sigma_hat: rows(&o.moments.sigma_hat),
                b_hat: rows(&o.loadings.b_hat),
                sigma2: o.loadings.sigma2,
                eigenvalues: o.loadings.eigenvalues.iter().copied().collect(),
                warnings: &o.moments.warnings,
            };
            let mut w = sink(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
        }
        Command::Impute { fit, out } => {
            let fitted = fit.run()?;
            write_matrix_csv(sink(out.as_deref())?, &fitted.names, &fitted.output.imputed, None)?;
        }
        Command::Bench { experiment, out } => {
            let cfg = experiment.load()?;
            let path = out.or_else(|| cfg.output_path.clone().map(PathBuf::from));
            let table = Simulation::new(cfg)?.run();
            table.write_csv(sink(path.as_deref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
