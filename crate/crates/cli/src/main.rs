use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use koopstitch::discovery::DictionaryPolicy;
use koopstitch::stitching::ClassifierMethod;
use koopstitch::{Error, Result};
use koopstitch_cli::config::DictionaryScope;
use koopstitch_cli::{
    cmd_discover, cmd_fit, cmd_predict, cmd_simulate, cmd_spectrum, cmd_stitch, exit_code,
    RunConfig, SeedSubset, Subset,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "koopstitch", version, about = "Koopman operators from time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system from the initial-condition grid.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a Koopman model to all or part of the trajectory data.
    Fit {
        #[command(flatten)]
        common: Common,
        /// `all`, a basin name (`left`, `right`) or `ids:0,4,7`.
        #[arg(long, default_value = "all")]
        subset: String,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues, unit eigenfunction fields and the induced partition.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also attempt a block diagonalization and report defects.
        #[arg(long)]
        block_diagonalize: bool,
    },
    /// Incremental discovery from a seed subset over the remaining data.
    Discover {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "left")]
        seed_subset: String,
        /// Keep only the first trajectories of the seed subset.
        #[arg(long, default_value_t = 1)]
        seed_count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine local models into a block-diagonal stitched model.
    Stitch {
        #[command(flatten)]
        common: Common,
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Propagate the lift of an initial state.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        steps_ahead: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Keep,
    ReseedFromAllData,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    All,
    Subset,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    NearestSnapshot,
    ResidualArgmin,
}

/// Flags overriding the configuration file.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dictionary_size: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    dictionary_seed: Option<u64>,
    #[arg(long, value_enum)]
    dictionary_scope: Option<ScopeArg>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    unit_tol: Option<f64>,
    #[arg(long)]
    rank_tol: Option<f64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    safety: Option<f64>,
    #[arg(long, value_enum)]
    dictionary_policy: Option<PolicyArg>,
    #[arg(long)]
    order_seed: Option<u64>,
    #[arg(long, value_enum)]
    classifier: Option<MethodArg>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(cfg.paths.data, self.data);
        set!(cfg.paths.out_dir, self.out_dir);
        set!(cfg.dt, self.dt);
        set!(cfg.steps, self.steps);
        set!(cfg.dictionary.n, self.dictionary_size);
        set!(cfg.dictionary.sigma, self.sigma);
        set!(cfg.dictionary.seed, self.dictionary_seed);
        set!(cfg.edmd.rel_tol, self.rel_tol);
        set!(cfg.spectral.unit_tol, self.unit_tol);
        set!(cfg.spectral.rank_tol, self.rank_tol);
        set!(cfg.spectral.resolution, self.resolution);
        set!(cfg.spectral.level, self.level);
        set!(cfg.discovery.n, self.horizon);
        set!(cfg.discovery.safety, self.safety);
        set!(cfg.discovery.order_seed, self.order_seed);
        if let Some(s) = self.dictionary_scope {
            cfg.edmd.dictionary_scope = match s {
                ScopeArg::All => DictionaryScope::All,
                ScopeArg::Subset => DictionaryScope::Subset,
            };
        }
        if let Some(p) = self.dictionary_policy {
            cfg.discovery.dictionary_policy = match p {
                PolicyArg::Keep => DictionaryPolicy::Keep,
                PolicyArg::ReseedFromAllData => DictionaryPolicy::ReseedFromAllData,
            };
        }
        if let Some(m) = self.classifier {
            cfg.stitching.method = match m {
                MethodArg::NearestSnapshot => ClassifierMethod::NearestSnapshot,
                MethodArg::ResidualArgmin => ClassifierMethod::ResidualArgmin,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print<T: Serialize>(report: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => print(&cmd_simulate(&common.resolve()?)?),
        Command::Fit {
            common,
            subset,
            label,
            out,
        } => {
            let cfg = common.resolve()?;
            print(&cmd_fit(&cfg, &Subset::parse(&subset)?, label.as_deref(), out.as_deref())?)
        }
        Command::Spectrum {
            common,
            model,
            out,
            block_diagonalize,
        } => {
            let cfg = common.resolve()?;
            let report = cmd_spectrum(&cfg, &model, out.as_deref(), block_diagonalize)?;
            eprintln!("{}", report.summary());
            print(&report)
        }
        Command::Discover {
            common,
            seed_subset,
            seed_count,
            out,
        } => {
            let cfg = common.resolve()?;
            let seed = SeedSubset {
                subset: Subset::parse(&seed_subset)?,
                count: Some(seed_count),
            };
            let report = cmd_discover(&cfg, &seed, out.as_deref())?;
            eprintln!(
                "monotonicity: {}",
                if report.monotone { "pass" } else { "fail" }
            );
            print(&report)
        }
        Command::Stitch { common, models, out } => {
            let cfg = common.resolve()?;
            print(&cmd_stitch(&cfg, &models, out.as_deref())?)
        }
        Command::Predict {
            common,
            model,
            x0,
            steps_ahead,
            out,
        } => {
            let cfg = common.resolve()?;
            if x0.len() != cfg.system.dim() {
                return Err(Error::DimensionMismatch {
                    expected: cfg.system.dim(),
                    got: x0.len(),
                });
            }
            print(&cmd_predict(&cfg, &model, &x0, steps_ahead, out.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
