mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmsv_core::study::ModelSpec;

#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 3.
    Data(String),
    /// Exit code 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Data(m) => write!(f, "data error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<fmsv_core::Error> for CliError {
    fn from(e: fmsv_core::Error) -> Self {
        use fmsv_core::Error as E;
        match e {
            E::Config(_) | E::InvalidArgument(_) => Self::Config(e.to_string()),
            E::Data(_) | E::Csv(_) | E::Io { .. } | E::Json(_) | E::Schema { .. } => Self::Data(e.to_string()),
            E::Numerical(_) => Self::Runtime(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Runtime(_) => 1,
            Self::Config(_) => 2,
            Self::Data(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "fmsv",
    version,
    about = "Factor stochastic-volatility covariance studies and backtests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that reads a run configuration.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set evaluation.mcs.reps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated models, e.g. `dcc,sbekk,fgarch:2,fmsv:2`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write two-column plot-data CSVs.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct SimArgs {
    /// `dgp1` or `dgp2`.
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate batches and write returns and true covariances.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// In-sample accuracy of every model on simulated batches.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Out-of-sample forecast and portfolio evaluation on a returns panel.
    Backtest {
        #[command(flatten)]
        common: Common,
        /// Returns CSV (overrides `returns`).
        #[arg(long)]
        returns: Option<PathBuf>,
    },
    /// Fit one model and store it as a JSON artifact.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        returns: PathBuf,
        /// Model name, e.g. `fmsv:2`.
        #[arg(long)]
        model: String,
        /// Artifact path (defaults to `<out>/model.json`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Covariance forecasts from a stored model after filtering a returns panel.
    Forecast {
        #[command(flatten)]
        common: Common,
        /// Artifact written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        returns: PathBuf,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// Forecast CSV (defaults to `<out>/forecasts.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render a stored evaluation or study report.
    Report {
        /// `eval_report` or `study_report` artifact.
        #[arg(long)]
        input: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn overrides(common: &Common, sim: Option<&SimArgs>) -> Result<Vec<(String, serde_json::Value)>, CliError> {
    use serde_json::json;
    let mut out = Vec::new();
    for s in &common.set {
        out.push(config::parse_override(s)?);
    }
    if let Some(o) = &common.out {
        out.push(("out_dir".into(), json!(o)));
    }
    if let Some(names) = &common.models {
        let specs = names
            .iter()
            .map(|n| n.parse::<ModelSpec>())
            .collect::<Result<Vec<_>, _>>()?;
        out.push((
            "models".into(),
            serde_json::to_value(specs).expect("model specs serialise"),
        ));
    }
    if let Some(seed) = common.seed {
        out.push(("seed".into(), json!(seed)));
    }
    if common.plot_data {
        out.push(("plot_data".into(), json!(true)));
    }
    if let Some(sim) = sim {
        if let Some(d) = &sim.dgp {
            out.push(("dgp".into(), json!(d)));
        }
        for (k, v) in [("p", sim.p), ("t", sim.t), ("batches", sim.batches)] {
            if let Some(v) = v {
                out.push((k.into(), json!(v)));
            }
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, sim } => {
            let cfg = config::load(common.config.as_deref(), &overrides(&common, Some(&sim))?)?;
            commands::simulate(&cfg)
        }
        Command::Benchmark { common, sim } => {
            let cfg = config::load(common.config.as_deref(), &overrides(&common, Some(&sim))?)?;
            cfg.check_simulated_dimension()?;
            commands::benchmark(&cfg)
        }
        Command::Backtest { common, returns } => {
            let mut ov = overrides(&common, None)?;
            if let Some(r) = returns {
                ov.push(("returns".into(), serde_json::json!(r)));
            }
            let cfg = config::load(common.config.as_deref(), &ov)?;
            commands::backtest(&cfg)
        }
        Command::Fit {
            common,
            returns,
            model,
            output,
        } => {
            let cfg = config::load(common.config.as_deref(), &overrides(&common, None)?)?;
            let spec: ModelSpec = model.parse()?;
            let output = output.unwrap_or_else(|| cfg.out_dir.join("model.json"));
            commands::fit(&cfg, spec, &returns, &output)
        }
        Command::Forecast {
            common,
            model,
            returns,
            horizon,
            output,
        } => {
            let cfg = config::load(common.config.as_deref(), &overrides(&common, None)?)?;
            let output = output.unwrap_or_else(|| cfg.out_dir.join("forecasts.csv"));
            commands::forecast(&cfg, &model, &returns, horizon, &output)
        }
        Command::Report { input, csv } => commands::report(&input, csv.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
