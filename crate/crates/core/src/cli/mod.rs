//! The `fairfuse` command line.
//!
//! ```text
//! fairfuse generate --demo --out out/
//! fairfuse audit    --corpus out/corpus.csv
//! fairfuse fit ffr  --corpus out/corpus.csv --beta 0.002
//! fairfuse sweep    --corpus out/corpus.csv --beta-grid 1e-5:1e2:50 --budget 0.1
//! fairfuse report   --corpus out/corpus.csv
//! ```
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numerical error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::frontier::{BetaGrid, DistanceMode};
use crate::fusion::{self, Method};
use crate::{Error, Result};
pub use config::RunConfig;

pub const SEED_ENV: &str = "FAIRFUSE_SEED";
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_SPLIT: f64 = 0.7;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    Json,
    #[default]
    Table,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "fairfuse", version, about = "Audit black-box sentiment scorers for gender bias and fuse them fairly")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Scored corpus CSV (default: <out>/corpus.csv).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Output directory (default: out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Split and demo seed; falls back to FAIRFUSE_SEED, then 7.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training fraction of the template-level split.
    #[arg(long, global = true)]
    pub split: Option<f64>,
    /// Fairness-optimization threshold on the [-1, 1] score scale.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Ridge penalty.
    #[arg(long = "lambda", global = true)]
    pub lambda: Option<f64>,
    /// Fairness weight for `fit ffr`; a single-point grid for `sweep`.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// `lo:hi:n` log-spaced grid (beta = 0 is prepended) or a comma list.
    #[arg(long = "beta-grid", global = true)]
    pub beta_grid: Option<String>,
    /// Accuracy budget as a fraction of the OLS error; repeatable.
    #[arg(long = "budget", global = true)]
    pub budgets: Vec<f64>,
    /// Utopia distance: raw or normalized.
    #[arg(long, global = true)]
    pub distance: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Append a constant column so the regression fits an intercept.
    #[arg(long, global = true)]
    pub intercept: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand templates, score them with the configured providers and write the corpus CSV.
    Generate {
        /// Use the bundled synthetic scenario instead of template/provider inputs.
        #[arg(long)]
        demo: bool,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        terms: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Per-modality accuracy error, bias and paired t-test over the whole corpus.
    Audit,
    /// Fit one fusion method on the training split and evaluate it on the test split.
    Fit {
        /// unweighted | weighted | ols | fairness_opt | ffr
        method: String,
    },
    /// Beta sweep, utopia-point selection and accuracy-budget queries.
    Sweep,
    /// Audit plus every fusion method and the frontier summary in one report.
    Report,
}

/// Fully resolved settings: flag, then config file, then default.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: RunConfig,
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub split: f64,
    pub tau: f64,
    pub lambda: f64,
    pub beta: Option<f64>,
    pub betas: Vec<f64>,
    pub budgets: Vec<f64>,
    pub distance: DistanceMode,
    pub format: Format,
    pub intercept: bool,
}

/// Parses either `lo:hi:n[:log]` or a comma-separated list of betas.
pub fn parse_betas(s: &str) -> Result<Vec<f64>> {
    if s.contains(':') {
        return Ok(s.parse::<BetaGrid>()?.values());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad beta {v:?}")))
        })
        .collect()
}

impl Settings {
    pub fn resolve(cli: &Cli, env_seed: Option<String>) -> Result<Self> {
        let config = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let seed = match cli.seed.or(config.seed) {
            Some(s) => s,
            None => match env_seed {
                Some(raw) => raw
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV}={raw:?} is not an integer")))?,
                None => DEFAULT_SEED,
            },
        };
        let out = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| "out".into());
        let corpus = cli
            .corpus
            .clone()
            .or_else(|| config.corpus.clone())
            .unwrap_or_else(|| out.join("corpus.csv"));
        let split = cli.split.or(config.split).unwrap_or(DEFAULT_SPLIT);
        if !(split > 0.0 && split < 1.0) {
            return Err(Error::InvalidParameter(format!("--split {split} outside (0, 1)")));
        }
        let tau = cli.tau.or(config.tau).unwrap_or(fusion::DEFAULT_TAU);
        let lambda = cli.lambda.or(config.lambda).unwrap_or(fusion::DEFAULT_LAMBDA);
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("--lambda {lambda} must be >= 0")));
        }
        let beta = cli.beta.or(config.beta);
        let betas = match (&cli.beta_grid, cli.beta, &config.beta_grid) {
            (Some(g), _, _) => parse_betas(g)?,
            (None, Some(b), _) => vec![b],
            (None, None, Some(g)) => parse_betas(g)?,
            (None, None, None) => BetaGrid::default().values(),
        };
        let budgets = if cli.budgets.is_empty() {
            config.budgets.clone().unwrap_or_else(|| vec![0.10])
        } else {
            cli.budgets.clone()
        };
        let distance = match cli.distance.as_deref().or(config.distance.as_deref()) {
            Some(d) => d.parse()?,
            None => DistanceMode::Raw,
        };
        Ok(Self {
            corpus,
            out,
            seed,
            split,
            tau,
            lambda,
            beta,
            betas,
            budgets,
            distance,
            format: cli.format.unwrap_or_default(),
            intercept: cli.intercept || config.intercept.unwrap_or(false),
            config,
        })
    }
}

fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

/// Runs the CLI with explicit arguments and output streams; returns the exit code.
pub fn run_with<I, T>(args: I, env_seed: Option<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = Settings::resolve(&cli, env_seed).and_then(|settings| match &cli.command {
        Command::Generate {
            demo,
            templates,
            terms,
            annotations,
        } => commands::generate(&settings, *demo, templates.clone(), terms.clone(), annotations.clone(), stdout),
        Command::Audit => commands::audit(&settings, stdout),
        Command::Fit { method } => {
            let method: Method = method.parse()?;
            commands::fit(&settings, method, stdout)
        }
        Command::Sweep => commands::sweep(&settings, stdout),
        Command::Report => commands::report(&settings, stdout),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    let env_seed = std::env::var(SEED_ENV).ok();
    run_with(std::env::args_os(), env_seed, &mut std::io::stdout(), &mut std::io::stderr())
}
