use std::path::Path;

use fmsv_core::baselines::{cov1para_shrinkage, sample_covariance, StaticCov};
use fmsv_core::data_io::{
    artifact_from_str, load_returns_csv, persist_artifact, write_two_column_csv, CovPath, ReturnsPanel,
};
use fmsv_core::evaluate::EvalReport;
use fmsv_core::forecaster::{psd_guard, rolling_path, RollingForecaster, Static};
use fmsv_core::garch::{
    fit_dcc, fit_fgarch, fit_sbekk, BekkFit, BekkForecaster, DccFit, DccForecaster, FgarchFit, FgarchForecaster,
};
use fmsv_core::msv::{fit_fmsv, forecast_covariance, FmsvModel};
use fmsv_core::study::{run_backtest, run_benchmark, simulate_dgp, ModelSpec, StudyReport, METRICS};

use crate::config::RunConfig;
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// File-name stem for a model label (`1/p` → `equal_weight`).
fn file_stem(name: &str) -> String {
    if name == "1/p" {
        return "equal_weight".into();
    }
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn load_panel(path: &Path) -> Result<ReturnsPanel, CliError> {
    load_returns_csv(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    create_dir(&cfg.out_dir)?;
    for b in 0..cfg.batches {
        let seed = cfg.seed + b as u64;
        let sim = simulate_dgp(cfg.dgp, cfg.p, cfg.t, seed, cfg.dgp2_coupling)?;
        let dir = cfg.out_dir.join(format!("batch_{b:03}"));
        sim.export(&dir)?;
        println!("batch {b}: seed {seed} -> {}", dir.display());
    }
    Ok(())
}

pub fn benchmark(cfg: &RunConfig) -> Result<(), CliError> {
    let bench = cfg.benchmark();
    let report = run_benchmark(&bench)?;
    create_dir(&cfg.out_dir)?;
    let table = report.to_eval_report();
    table.write_csv(cfg.out_dir.join("benchmark.csv"))?;
    persist_artifact(&report, cfg.out_dir.join("study_report.json"))?;
    let timings: String = std::iter::once("model,runtime_s\n".to_string())
        .chain(report.models.iter().map(|m| format!("{},{}\n", m.name, m.runtime_secs)))
        .collect();
    write_text(&cfg.out_dir.join("timings.csv"), &timings)?;
    for m in &report.models {
        for f in &m.failures {
            eprintln!("{}: {f}", m.name);
        }
    }
    if cfg.plot_data {
        write_benchmark_plots(&report, &cfg.out_dir.join("plot"))?;
    }
    print!("{}", table.to_text());
    Ok(())
}

fn write_benchmark_plots(report: &StudyReport, dir: &Path) -> Result<(), CliError> {
    create_dir(dir)?;
    for m in &report.models {
        for (k, metric) in METRICS.iter().enumerate() {
            let rows: Vec<(f64, f64)> = m
                .per_batch
                .iter()
                .enumerate()
                .filter_map(|(b, a)| a.map(|a| (b as f64, [a.d_e, a.d_f, a.d_s, a.d_b][k])))
                .collect();
            write_two_column_csv(
                dir.join(format!("{}_{metric}.csv", file_stem(&m.name))),
                ("batch", metric),
                &rows,
            )?;
        }
    }
    Ok(())
}

pub fn backtest(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .returns
        .as_ref()
        .ok_or_else(|| CliError::Config("backtest needs a returns file (--returns or `returns`)".into()))?;
    let panel = load_panel(path)?;
    let result = run_backtest(&panel, &cfg.backtest())?;
    create_dir(&cfg.out_dir)?;
    result.report.write_csv(cfg.out_dir.join("backtest.csv"))?;
    persist_artifact(&result.report, cfg.out_dir.join("eval_report.json"))?;
    for (name, err) in &result.failures {
        eprintln!("{name}: failed: {err}");
    }
    if cfg.plot_data {
        let dir = cfg.out_dir.join("plot");
        create_dir(&dir)?;
        for m in &result.models {
            let stem = file_stem(&m.name);
            for (kind, pr) in [("gmvp", &m.gmvp), ("rpp", &m.rpp)] {
                let mut acc = 0.0;
                let rows: Vec<(f64, f64)> = pr
                    .returns
                    .iter()
                    .enumerate()
                    .map(|(t, r)| {
                        acc += r;
                        ((result.t_star + t) as f64, acc)
                    })
                    .collect();
                write_two_column_csv(
                    dir.join(format!("{stem}_{kind}_cumret.csv")),
                    ("t", "cumulative_return"),
                    &rows,
                )?;
            }
            if let Some(d) = &m.distances {
                for (metric, series) in METRICS.iter().zip([&d.d_e, &d.d_f, &d.d_s, &d.d_b]) {
                    let rows: Vec<(f64, f64)> = series
                        .iter()
                        .enumerate()
                        .map(|(t, v)| ((result.t_star + t) as f64, *v))
                        .collect();
                    write_two_column_csv(dir.join(format!("{stem}_{metric}.csv")), ("t", metric), &rows)?;
                }
            }
        }
    }
    print!("{}", result.report.to_text());
    Ok(())
}

/// Any artifact `fit` can produce.
enum Fitted {
    Dcc(DccFit),
    Sbekk(BekkFit),
    Fgarch(FgarchFit),
    Fmsv(Box<FmsvModel>),
    Static(StaticCov),
}

pub fn fit(cfg: &RunConfig, spec: ModelSpec, returns: &Path, output: &Path) -> Result<(), CliError> {
    let panel = load_panel(returns)?;
    let p = panel.n_assets();
    if let Some(m) = spec.factors() {
        if m == 0 || m >= p {
            return Err(CliError::Config(format!("{spec}: need 1 <= m < p (p = {p})")));
        }
    }
    let values = &panel.values;
    let opts = &cfg.options;
    let fitted = match spec {
        ModelSpec::Dcc => Fitted::Dcc(fit_dcc(values, opts.likelihood_for(p))?),
        ModelSpec::Sbekk => Fitted::Sbekk(fit_sbekk(values, opts.likelihood_for(p))?),
        ModelSpec::Fgarch { m } => Fitted::Fgarch(fit_fgarch(values, m)?),
        ModelSpec::Fmsv { m } => Fitted::Fmsv(Box::new(fit_fmsv(values, m, &opts.fmsv_options())?)),
        ModelSpec::Sample => Fitted::Static(sample_covariance(values)?),
        ModelSpec::Cov1Para => Fitted::Static(cov1para_shrinkage(values)?),
        ModelSpec::EqualWeight => return Err(CliError::Config("1/p has no model to fit".into())),
    };
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    match &fitted {
        Fitted::Dcc(f) => persist_artifact(f, output)?,
        Fitted::Sbekk(f) => persist_artifact(f, output)?,
        Fitted::Fgarch(f) => persist_artifact(f, output)?,
        Fitted::Fmsv(f) => persist_artifact(f.as_ref(), output)?,
        Fitted::Static(f) => persist_artifact(f, output)?,
    }
    println!("{spec} fitted on {} x {} -> {}", panel.n_obs(), p, output.display());
    Ok(())
}

fn load_fitted(path: &Path) -> Result<Fitted, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let head: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let schema = head
        .get("schema")
        .and_then(|s| s.as_str())
        .unwrap_or_default()
        .to_string();
    let fitted = match schema.as_str() {
        "dcc" => Fitted::Dcc(artifact_from_str(&text)?),
        "sbekk" => Fitted::Sbekk(artifact_from_str(&text)?),
        "fgarch" => Fitted::Fgarch(artifact_from_str(&text)?),
        "fmsv" => Fitted::Fmsv(Box::new(artifact_from_str(&text)?)),
        "static_cov" => Fitted::Static(artifact_from_str(&text)?),
        other => {
            return Err(CliError::Data(format!(
                "{}: not a fitted model (schema '{other}')",
                path.display()
            )))
        }
    };
    Ok(fitted)
}

pub fn forecast(cfg: &RunConfig, model: &Path, returns: &Path, horizon: usize, output: &Path) -> Result<(), CliError> {
    if horizon == 0 {
        return Err(CliError::Config("horizon must be >= 1".into()));
    }
    let fitted = load_fitted(model)?;
    let panel = load_panel(returns)?;
    let lognormal = cfg.options.lognormal_correction;
    let path = match fitted {
        Fitted::Fmsv(m) => {
            let p = m.factor.loadings.nrows();
            if p != panel.n_assets() {
                return Err(CliError::Data(format!(
                    "model has {p} assets, panel has {}",
                    panel.n_assets()
                )));
            }
            let raw = forecast_covariance(&m, &panel.values, horizon, lognormal)?;
            CovPath::new(raw.matrices.into_iter().map(psd_guard).collect())
        }
        other => {
            if horizon > 1 {
                return Err(CliError::Config(
                    "horizons beyond one step are available for fMSV models only".into(),
                ));
            }
            let mut f: Box<dyn RollingForecaster> = match other {
                Fitted::Dcc(f) => Box::new(DccForecaster::new(&f)),
                Fitted::Sbekk(f) => Box::new(BekkForecaster::new(&f)),
                Fitted::Fgarch(f) => Box::new(FgarchForecaster::new(&f)),
                Fitted::Static(s) => Box::new(Static(s.matrix)),
                Fitted::Fmsv(_) => unreachable!("handled above"),
            };
            let dim = f.forecast().nrows();
            if dim != panel.n_assets() {
                return Err(CliError::Data(format!(
                    "model has {dim} assets, panel has {}",
                    panel.n_assets()
                )));
            }
            rolling_path(f.as_mut(), &panel.values, panel.n_obs())?;
            CovPath::new(vec![psd_guard(f.forecast())])
        }
    };
    let labels: Vec<String> = (1..=horizon).map(|h| format!("T+{h}")).collect();
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    path.write_vech_csv(&labels, output)?;
    println!("{horizon} forecast(s) -> {}", output.display());
    Ok(())
}

pub fn report(input: &Path, csv: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let head: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let table: EvalReport = match head.get("schema").and_then(|s| s.as_str()) {
        Some("eval_report") => artifact_from_str(&text)?,
        Some("study_report") => artifact_from_str::<StudyReport>(&text)?.to_eval_report(),
        other => {
            return Err(CliError::Data(format!(
                "{}: not a report (schema {})",
                input.display(),
                other.unwrap_or("missing")
            )))
        }
    };
    if let Some(out) = csv {
        table.write_csv(out)?;
    }
    print!("{}", table.to_text());
    Ok(())
}
