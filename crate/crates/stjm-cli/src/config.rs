//! Flag parsing and optional key=value config file merging. Flags override
//! file entries; file entries override defaults.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use stjm::DistanceMetric;

#[derive(Debug, Parser)]
#[command(
    name = "stjm",
    about = "Spatio-temporal jump model: fit, simulate, evaluate, grid-search",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Fit the model to a CSV panel and write plot-ready result tables.
    Fit(CommonArgs),
    /// Generate a synthetic panel with known ground-truth states.
    Simulate(CommonArgs),
    /// Run a Monte Carlo study and report balanced accuracy per method.
    Evaluate(CommonArgs),
    /// Search the (lambda, gamma) grid on a simulated scenario.
    Grid(CommonArgs),
}

impl CliCommand {
    pub fn args(&self) -> &CommonArgs {
        match self {
            CliCommand::Fit(a)
            | CliCommand::Simulate(a)
            | CliCommand::Evaluate(a)
            | CliCommand::Grid(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Optional key=value config file; explicit flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Input panel CSV (long format).
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Sidecar schema JSON declaring feature kinds and levels.
    #[arg(long)]
    pub schema: Option<PathBuf>,

    /// Output directory (fit, simulate, grid) or report path (evaluate).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Number of states.
    #[arg(long)]
    pub k: Option<usize>,

    /// Temporal jump penalty.
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Spatial agreement reward.
    #[arg(long)]
    pub gamma: Option<f64>,

    /// Spatial distance metric.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<DistanceMetric>,

    /// Divides spatial distances before exponentiation.
    #[arg(long)]
    pub scale: Option<f64>,

    /// Rolling-feature window in hours (0 disables).
    #[arg(long)]
    pub window: Option<u32>,

    /// Number of random restarts.
    #[arg(long)]
    pub starts: Option<usize>,

    /// Maximum coordinate-descent passes per restart.
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,

    /// Seed for every random draw of the command.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Monte Carlo replicates per scenario.
    #[arg(long)]
    pub reps: Option<usize>,

    /// Named scenario set for evaluate: table1 | table2 | table3.
    #[arg(long)]
    pub scenario: Option<String>,

    /// Simulated time points.
    #[arg(long)]
    pub t: Option<usize>,

    /// Simulated locations.
    #[arg(long)]
    pub m: Option<usize>,

    /// Simulated features.
    #[arg(long)]
    pub p: Option<usize>,

    /// Fraction of time points dropped in simulation.
    #[arg(long)]
    pub gaps: Option<f64>,

    /// Fraction of cells masked as missing in simulation.
    #[arg(long)]
    pub missing: Option<f64>,
}

fn parse_metric(s: &str) -> Result<DistanceMetric, String> {
    match s {
        "euclidean" => Ok(DistanceMetric::Euclidean),
        "haversine" => Ok(DistanceMetric::Haversine),
        other => Err(format!(
            "unknown metric `{other}` (expected euclidean or haversine)"
        )),
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub k: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub metric: DistanceMetric,
    pub scale: f64,
    pub window: u32,
    pub starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub reps: usize,
    pub scenario: Option<String>,
    pub t: Option<usize>,
    pub m: Option<usize>,
    pub p: Option<usize>,
    pub gaps: f64,
    pub missing: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            schema: None,
            out: None,
            k: 3,
            lambda: 0.05,
            gamma: 0.05,
            metric: DistanceMetric::Euclidean,
            scale: 1.0,
            window: 5,
            starts: 10,
            max_iter: 10,
            seed: 0,
            reps: 20,
            scenario: None,
            t: None,
            m: None,
            p: None,
            gaps: 0.0,
            missing: 0.0,
        }
    }
}

impl RunConfig {
    /// Defaults, overridden by the config file, overridden by explicit flags.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &args.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(args);
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let entries = parse_key_values(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        for (key, value) in entries {
            self.apply_entry(&key, &value)
                .with_context(|| format!("config file {}: key `{key}`", path.display()))?;
        }
        Ok(())
    }

    fn apply_entry(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "schema" => self.schema = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "k" => self.k = value.parse().context("expected integer")?,
            "lambda" => self.lambda = value.parse().context("expected number")?,
            "gamma" => self.gamma = value.parse().context("expected number")?,
            "metric" => self.metric = parse_metric(value).map_err(anyhow::Error::msg)?,
            "scale" => self.scale = value.parse().context("expected number")?,
            "window" => self.window = value.parse().context("expected integer")?,
            "starts" => self.starts = value.parse().context("expected integer")?,
            "max-iter" => self.max_iter = value.parse().context("expected integer")?,
            "seed" => self.seed = value.parse().context("expected integer")?,
            "reps" => self.reps = value.parse().context("expected integer")?,
            "scenario" => self.scenario = Some(value.to_string()),
            "t" => self.t = Some(value.parse().context("expected integer")?),
            "m" => self.m = Some(value.parse().context("expected integer")?),
            "p" => self.p = Some(value.parse().context("expected integer")?),
            "gaps" => self.gaps = value.parse().context("expected number")?,
            "missing" => self.missing = value.parse().context("expected number")?,
            other => bail!("unknown key `{other}`"),
        }
        Ok(())
    }

    fn apply_flags(&mut self, args: &CommonArgs) {
        if let Some(v) = &args.input {
            self.input = Some(v.clone());
        }
        if let Some(v) = &args.schema {
            self.schema = Some(v.clone());
        }
        if let Some(v) = &args.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = args.k {
            self.k = v;
        }
        if let Some(v) = args.lambda {
            self.lambda = v;
        }
        if let Some(v) = args.gamma {
            self.gamma = v;
        }
        if let Some(v) = args.metric {
            self.metric = v;
        }
        if let Some(v) = args.scale {
            self.scale = v;
        }
        if let Some(v) = args.window {
            self.window = v;
        }
        if let Some(v) = args.starts {
            self.starts = v;
        }
        if let Some(v) = args.max_iter {
            self.max_iter = v;
        }
        if let Some(v) = args.seed {
            self.seed = v;
        }
        if let Some(v) = args.reps {
            self.reps = v;
        }
        if let Some(v) = &args.scenario {
            self.scenario = Some(v.clone());
        }
        if let Some(v) = args.t {
            self.t = Some(v);
        }
        if let Some(v) = args.m {
            self.m = Some(v);
        }
        if let Some(v) = args.p {
            self.p = Some(v);
        }
        if let Some(v) = args.gaps {
            self.gaps = v;
        }
        if let Some(v) = args.missing {
            self.missing = v;
        }
    }

    pub fn fit_config(&self) -> stjm::FitConfig {
        stjm::FitConfig {
            hyperparams: stjm::Hyperparams {
                k: self.k,
                lambda: self.lambda,
                gamma: self.gamma,
                distance_metric: self.metric,
                distance_scale: self.scale,
                cutoff: None,
                n_starts: self.starts,
                max_iter: self.max_iter,
                seed: self.seed,
            },
            ..Default::default()
        }
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out.as_deref().context("missing required --out path")
    }
}

fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got `{line}`", lineno + 1);
        };
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}
