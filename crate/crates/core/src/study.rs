//! Simulation benchmarks and out-of-sample backtests over a set of models.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cov1para_shrinkage, sample_covariance};
use crate::data_io::{split_sample, Artifact, CovPath, ReturnsPanel};
use crate::error::{ensure, Error, Result};
use crate::evaluate::{
    distance_series, gmvp_losses, mcs_test, portfolio_metrics, realized_proxy, rpp_losses, weight_path,
    AverageDistances, DistanceSeries, EvalReport, McsOptions, PortfolioKind, PortfolioResult, DEFAULT_B,
};
use crate::factor_model::EmOptions;
use crate::forecaster::{rolling_path, RollingForecaster, Static};
use crate::garch::{
    fit_dcc, fit_fgarch, fit_sbekk, BekkForecaster, DccForecaster, FgarchForecaster, LikelihoodMode,
    FULL_LIKELIHOOD_MAX_ASSETS,
};
use crate::msv::{fit_fmsv, FmsvOptions, MsvOptions};
use crate::simulate::{gen_dgp1, gen_dgp2_with, Dgp2Coupling, SimOutput};
use crate::sparse_var::CvOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Dcc,
    Sbekk,
    Fgarch {
        m: usize,
    },
    Fmsv {
        m: usize,
    },
    Sample,
    Cov1Para,
    /// Equal weights; portfolio benchmark only.
    EqualWeight,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dcc => write!(f, "DCC"),
            Self::Sbekk => write!(f, "sBEKK"),
            Self::Fgarch { m } => write!(f, "fGARCH_{m}"),
            Self::Fmsv { m } => write!(f, "fMSV_{m}"),
            Self::Sample => write!(f, "SCov"),
            Self::Cov1Para => write!(f, "Cov1Para"),
            Self::EqualWeight => write!(f, "1/p"),
        }
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = Error;

    /// Accepts `dcc`, `sbekk`, `fgarch:m`, `fmsv:m`, `scov`, `cov1para` and `1/p`
    /// (case-insensitive; `_` also separates the factor count).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let plain = match lower.as_str() {
            "dcc" => Some(Self::Dcc),
            "sbekk" => Some(Self::Sbekk),
            "scov" | "sample" => Some(Self::Sample),
            "cov1para" => Some(Self::Cov1Para),
            "1/p" | "ew" | "equal_weight" => Some(Self::EqualWeight),
            _ => None,
        };
        if let Some(spec) = plain {
            return Ok(spec);
        }
        let (name, arg) = lower
            .split_once([':', '_'])
            .ok_or_else(|| Error::Config(format!("unknown model '{s}' (factor models need a count, e.g. fmsv:2)")))?;
        let m: usize = arg
            .parse()
            .map_err(|_| Error::Config(format!("model '{s}': bad factor count '{arg}'")))?;
        let spec = match name {
            "fgarch" => Self::Fgarch { m },
            "fmsv" => Self::Fmsv { m },
            _ => return Err(Error::Config(format!("unknown model '{s}'"))),
        };
        Ok(spec)
    }
}

impl ModelSpec {
    pub fn factors(&self) -> Option<usize> {
        match self {
            Self::Fgarch { m } | Self::Fmsv { m } => Some(*m),
            _ => None,
        }
    }

    /// The models compared in the simulation tables: DCC, sBEKK, fGARCH_m, fMSV_m.
    pub fn simulation_set(ms: &[usize]) -> Vec<ModelSpec> {
        let mut v = vec![Self::Dcc, Self::Sbekk];
        v.extend(ms.iter().map(|&m| Self::Fgarch { m }));
        v.extend(ms.iter().map(|&m| Self::Fmsv { m }));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub q: usize,
    pub gamma: f64,
    pub cv_ratio: f64,
    pub penalize_intercept: bool,
    pub trim_step2: bool,
    pub lognormal_correction: bool,
    /// Forces the DCC/sBEKK likelihood; otherwise chosen from the asset count.
    pub likelihood: Option<LikelihoodMode>,
    pub full_likelihood_max_assets: usize,
    pub em_max_iter: usize,
    pub em_tol: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        let cv = CvOptions::default();
        let em = EmOptions::default();
        Self {
            q: 10,
            gamma: cv.gamma,
            cv_ratio: cv.ratio,
            penalize_intercept: cv.penalize_intercept,
            trim_step2: false,
            lognormal_correction: false,
            likelihood: None,
            full_likelihood_max_assets: FULL_LIKELIHOOD_MAX_ASSETS,
            em_max_iter: em.max_iter,
            em_tol: em.tol,
        }
    }
}

impl ModelOptions {
    pub fn fmsv_options(&self) -> FmsvOptions {
        FmsvOptions {
            em: EmOptions {
                max_iter: self.em_max_iter,
                tol: self.em_tol,
                ..EmOptions::default()
            },
            msv: MsvOptions {
                q: self.q,
                cv: CvOptions {
                    ratio: self.cv_ratio,
                    gamma: self.gamma,
                    penalize_intercept: self.penalize_intercept,
                    ..CvOptions::default()
                },
                trim_step2: self.trim_step2,
            },
        }
    }

    pub fn likelihood_for(&self, p: usize) -> LikelihoodMode {
        self.likelihood.unwrap_or(if p <= self.full_likelihood_max_assets {
            LikelihoodMode::Full
        } else {
            LikelihoodMode::Composite
        })
    }
}

fn check_factors(spec: ModelSpec, p: usize) -> Result<()> {
    if let Some(m) = spec.factors() {
        ensure!(m >= 1 && m < p, InvalidArgument, "{spec}: need 1 <= m < p (p={p})");
    }
    Ok(())
}

/// Fits `spec` on `values` and returns a forecaster positioned before row 0.
pub fn fit_forecaster(
    spec: ModelSpec,
    values: &DMatrix<f64>,
    opts: &ModelOptions,
) -> Result<Box<dyn RollingForecaster + Send>> {
    let p = values.ncols();
    check_factors(spec, p)?;
    Ok(match spec {
        ModelSpec::Dcc => Box::new(DccForecaster::new(&fit_dcc(values, opts.likelihood_for(p))?)),
        ModelSpec::Sbekk => Box::new(BekkForecaster::new(&fit_sbekk(values, opts.likelihood_for(p))?)),
        ModelSpec::Fgarch { m } => Box::new(FgarchForecaster::new(&fit_fgarch(values, m)?)),
        ModelSpec::Fmsv { m } => {
            Box::new(fit_fmsv(values, m, &opts.fmsv_options())?.forecaster(opts.lognormal_correction)?)
        }
        ModelSpec::Sample => Box::new(Static(sample_covariance(values)?.matrix)),
        ModelSpec::Cov1Para => Box::new(Static(cov1para_shrinkage(values)?.matrix)),
        ModelSpec::EqualWeight => return Err(Error::InvalidArgument("1/p has no covariance forecast".into())),
    })
}

/// Full-sample fit and in-sample path `Ĥ_1..Ĥ_T`. The fMSV path uses smoothed states.
pub fn in_sample_path(spec: ModelSpec, values: &DMatrix<f64>, opts: &ModelOptions) -> Result<CovPath> {
    check_factors(spec, values.ncols())?;
    if let ModelSpec::Fmsv { m } = spec {
        let model = fit_fmsv(values, m, &opts.fmsv_options())?;
        return model.smoothed_path(values, opts.lognormal_correction);
    }
    let mut f = fit_forecaster(spec, values, opts)?;
    rolling_path(f.as_mut(), values, 0)
}

/// One-step forecasts for rows `t_star..T`. Parameters come from rows
/// `[t − t_star, t)` at each refit point; with `refit_every = None` a single fit
/// on the first `t_star` rows is used throughout.
pub fn out_of_sample_path(
    spec: ModelSpec,
    values: &DMatrix<f64>,
    t_star: usize,
    opts: &ModelOptions,
    refit_every: Option<usize>,
) -> Result<CovPath> {
    let t_len = values.nrows();
    ensure!(
        t_star >= 1 && t_star < t_len,
        InvalidArgument,
        "split point must lie inside the sample"
    );
    let step = refit_every.unwrap_or(t_len - t_star).max(1);
    let mut out = Vec::with_capacity(t_len - t_star);
    let mut start = t_star;
    while start < t_len {
        let end = (start + step).min(t_len);
        let window = values.rows(start - t_star, t_star).into_owned();
        let mut f = fit_forecaster(spec, &window, opts)?;
        let feed = values.rows(start - t_star, end - (start - t_star)).into_owned();
        out.extend(rolling_path(f.as_mut(), &feed, t_star)?.matrices);
        start = end;
    }
    Ok(CovPath::new(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    Dgp1,
    Dgp2,
}

pub fn simulate_dgp(dgp: Dgp, p: usize, t_len: usize, seed: u64, coupling: Dgp2Coupling) -> Result<SimOutput> {
    match dgp {
        Dgp::Dgp1 => gen_dgp1(p, t_len, seed),
        Dgp::Dgp2 => gen_dgp2_with(p, t_len, seed, coupling),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub dgp: Dgp,
    pub p: usize,
    pub t: usize,
    pub batches: usize,
    pub seed: u64,
    pub dgp2_coupling: Dgp2Coupling,
    pub models: Vec<ModelSpec>,
    pub options: ModelOptions,
    pub b: u32,
    pub mcs: McsOptions,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            dgp: Dgp::Dgp1,
            p: 20,
            t: 2000,
            batches: 10,
            seed: 1,
            dgp2_coupling: Dgp2Coupling::default(),
            models: ModelSpec::simulation_set(&[1, 2, 3]),
            options: ModelOptions::default(),
            b: DEFAULT_B,
            mcs: McsOptions {
                reps: 1000,
                ..McsOptions::default()
            },
        }
    }
}

pub const METRICS: [&str; 4] = ["D_E", "D_F", "D_S", "D_3"];

fn metric_columns(s: &DistanceSeries) -> [&[f64]; 4] {
    [&s.d_e, &s.d_f, &s.d_s, &s.d_b]
}

fn metric_values(a: &AverageDistances) -> [f64; 4] {
    [a.d_e, a.d_f, a.d_s, a.d_b]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelSpec,
    pub name: String,
    /// Batch averages of the per-date mean distances (successful batches only).
    pub mean: Option<AverageDistances>,
    pub per_batch: Vec<Option<AverageDistances>>,
    /// Share of batches in which the model belongs to the MCS, per metric.
    pub mcs_rate: [f64; 4],
    pub failures: Vec<String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: BenchmarkConfig,
    pub models: Vec<ModelSummary>,
}

impl Artifact for StudyReport {
    const SCHEMA: &'static str = "study_report";
    const VERSION: u32 = 1;
}

impl StudyReport {
    pub fn summary(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Table of batch-averaged distances and MCS membership rates. Runtimes are
    /// left out so the table is reproducible byte for byte.
    pub fn to_eval_report(&self) -> EvalReport {
        let mut cols: Vec<&str> = METRICS.to_vec();
        cols.extend(["MCS_D_E", "MCS_D_F", "MCS_D_S", "MCS_D_3", "failures"]);
        let title = format!(
            "In-sample accuracy, {:?}, p={}, T={}, {} batches",
            self.config.dgp, self.config.p, self.config.t, self.config.batches
        );
        let mut r = EvalReport::new(title, &cols);
        for m in &self.models {
            let mut v: Vec<Option<f64>> = match &m.mean {
                Some(a) => metric_values(a).iter().map(|&x| Some(x)).collect(),
                None => vec![None; 4],
            };
            v.extend(m.mcs_rate.iter().map(|&x| Some(x)));
            v.push(Some(m.failures.len() as f64));
            r.push(m.name.clone(), v).expect("column count");
        }
        r
    }
}

struct BatchOutcome {
    distances: Vec<std::result::Result<(DistanceSeries, f64), String>>,
}

fn run_batch(cfg: &BenchmarkConfig, batch: usize) -> Result<BatchOutcome> {
    let sim = simulate_dgp(cfg.dgp, cfg.p, cfg.t, cfg.seed + batch as u64, cfg.dgp2_coupling)?;
    let distances = cfg
        .models
        .iter()
        .map(|&spec| {
            let t0 = Instant::now();
            let res = in_sample_path(spec, &sim.returns, &cfg.options)
                .and_then(|path| distance_series(&sim.true_cov, &path, cfg.b));
            res.map(|s| (s, t0.elapsed().as_secs_f64())).map_err(|e| e.to_string())
        })
        .collect();
    Ok(BatchOutcome { distances })
}

/// MCS p-values per model for one loss column set; models with missing or
/// non-finite losses get `None`.
fn mcs_p_values(columns: &[Option<&[f64]>], opts: &McsOptions) -> Vec<Option<f64>> {
    let eligible: Vec<usize> = (0..columns.len())
        .filter(|&k| columns[k].is_some_and(|c| c.iter().all(|v| v.is_finite())))
        .collect();
    let mut out = vec![None; columns.len()];
    if eligible.len() == 1 {
        out[eligible[0]] = Some(1.0);
    }
    if eligible.len() < 2 {
        return out;
    }
    let n = columns[eligible[0]].map_or(0, |c| c.len());
    let losses = DMatrix::from_fn(n, eligible.len(), |t, j| columns[eligible[j]].unwrap()[t]);
    if let Ok(res) = mcs_test(&losses, opts) {
        for (j, &k) in eligible.iter().enumerate() {
            out[k] = Some(res.p_values[j]);
        }
    }
    out
}

/// In-sample accuracy of every model against the simulated truth, averaged over batches.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<StudyReport> {
    ensure!(cfg.batches >= 1, Config, "batches must be >= 1");
    ensure!(!cfg.models.is_empty(), Config, "no models configured");
    ensure!(
        !cfg.models.contains(&ModelSpec::EqualWeight),
        Config,
        "1/p is a portfolio benchmark only"
    );
    for &spec in &cfg.models {
        if let Some(m) = spec.factors() {
            ensure!(m >= 1 && m < cfg.p, Config, "{spec}: need 1 <= m < p");
        }
    }
    let outcomes = (0..cfg.batches)
        .into_par_iter()
        .map(|b| run_batch(cfg, b))
        .collect::<Result<Vec<_>>>()?;

    let k = cfg.models.len();
    let mut rates = vec![[0.0f64; 4]; k];
    for o in &outcomes {
        for metric in 0..4 {
            let cols: Vec<Option<&[f64]>> = o
                .distances
                .iter()
                .map(|d| d.as_ref().ok().map(|(s, _)| metric_columns(s)[metric]))
                .collect();
            let mcs = McsOptions {
                seed: cfg.mcs.seed.wrapping_add(metric as u64),
                ..cfg.mcs
            };
            for (i, pv) in mcs_p_values(&cols, &mcs).into_iter().enumerate() {
                if pv.is_some_and(|v| v >= cfg.mcs.alpha) {
                    rates[i][metric] += 1.0 / cfg.batches as f64;
                }
            }
        }
    }

    let models = cfg
        .models
        .iter()
        .enumerate()
        .map(|(i, &spec)| {
            let per_batch: Vec<Option<AverageDistances>> = outcomes
                .iter()
                .map(|o| o.distances[i].as_ref().ok().map(|(s, _)| s.average()))
                .collect();
            let failures: Vec<String> = outcomes
                .iter()
                .enumerate()
                .filter_map(|(b, o)| o.distances[i].as_ref().err().map(|e| format!("batch {b}: {e}")))
                .collect();
            let ok: Vec<&AverageDistances> = per_batch.iter().flatten().collect();
            let mean = (!ok.is_empty()).then(|| {
                let n = ok.len() as f64;
                let finite_s: Vec<f64> = ok.iter().map(|a| a.d_s).filter(|v| v.is_finite()).collect();
                AverageDistances {
                    d_e: ok.iter().map(|a| a.d_e).sum::<f64>() / n,
                    d_f: ok.iter().map(|a| a.d_f).sum::<f64>() / n,
                    d_s: if finite_s.is_empty() {
                        f64::INFINITY
                    } else {
                        finite_s.iter().sum::<f64>() / finite_s.len() as f64
                    },
                    d_b: ok.iter().map(|a| a.d_b).sum::<f64>() / n,
                    d_s_excluded: ok.iter().map(|a| a.d_s_excluded).sum(),
                }
            });
            let runtime_secs = outcomes
                .iter()
                .filter_map(|o| o.distances[i].as_ref().ok().map(|(_, t)| *t))
                .sum::<f64>();
            ModelSummary {
                model: spec,
                name: spec.to_string(),
                mean,
                per_batch,
                mcs_rate: rates[i],
                failures,
                runtime_secs,
            }
        })
        .collect();
    Ok(StudyReport {
        config: cfg.clone(),
        models,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub models: Vec<ModelSpec>,
    pub options: ModelOptions,
    pub split_ratio: f64,
    pub proxy_a: f64,
    pub b: u32,
    pub mcs: McsOptions,
    pub refit_every: Option<usize>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        let mut models = vec![ModelSpec::EqualWeight, ModelSpec::Sample, ModelSpec::Cov1Para];
        models.extend(ModelSpec::simulation_set(&[1, 2, 3]));
        Self {
            models,
            options: ModelOptions::default(),
            split_ratio: 0.75,
            proxy_a: 0.01,
            b: DEFAULT_B,
            mcs: McsOptions {
                reps: 1000,
                ..McsOptions::default()
            },
            refit_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBacktest {
    pub model: ModelSpec,
    pub name: String,
    /// Out-of-sample forecasts (absent for 1/p).
    pub forecasts: Option<CovPath>,
    pub distances: Option<DistanceSeries>,
    pub gmvp: PortfolioResult,
    pub rpp: PortfolioResult,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub report: EvalReport,
    pub models: Vec<ModelBacktest>,
    /// Models whose fit or evaluation failed, with the error.
    pub failures: Vec<(String, String)>,
    pub t_star: usize,
    pub oos_dates: Vec<String>,
}

impl BacktestResult {
    pub fn model(&self, name: &str) -> Option<&ModelBacktest> {
        self.models.iter().find(|m| m.name == name)
    }
}

pub const BACKTEST_COLUMNS: [&str; 16] = [
    "D_E", "D_F", "D_S", "D_3", "MCS_D_E", "MCS_D_F", "MCS_D_S", "MCS_D_3", "GMVP_AVG", "GMVP_SD", "GMVP_IR",
    "GMVP_MCS", "RPP_AVG", "RPP_SD", "RPP_IR", "RPP_MCS",
];

fn evaluate_model(
    spec: ModelSpec,
    panel: &ReturnsPanel,
    t_star: usize,
    proxy: &CovPath,
    cfg: &BacktestConfig,
) -> Result<ModelBacktest> {
    let t0 = Instant::now();
    let oos = panel.values.rows(t_star, panel.n_obs() - t_star).into_owned();
    let p = panel.n_assets();
    let (forecasts, distances, gmvp_w, rpp_w) = if spec == ModelSpec::EqualWeight {
        let w = DMatrix::from_element(oos.nrows(), p, 1.0 / p as f64);
        (None, None, w.clone(), w)
    } else {
        let path = out_of_sample_path(spec, &panel.values, t_star, &cfg.options, cfg.refit_every)?;
        let d = distance_series(proxy, &path, cfg.b)?;
        let gw = weight_path(&path, PortfolioKind::Gmvp)?;
        let rw = weight_path(&path, PortfolioKind::Rpp)?;
        (Some(path), Some(d), gw, rw)
    };
    Ok(ModelBacktest {
        model: spec,
        name: spec.to_string(),
        forecasts,
        distances,
        gmvp: portfolio_metrics(&gmvp_w, &oos)?,
        rpp: portfolio_metrics(&rpp_w, &oos)?,
        runtime_secs: t0.elapsed().as_secs_f64(),
    })
}

fn retained_flags(
    returns: &[&[f64]],
    losses: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    opts: &McsOptions,
) -> Vec<Option<f64>> {
    if returns.len() < 2 {
        return vec![None; returns.len()];
    }
    let n = returns[0].len();
    let r = DMatrix::from_fn(n, returns.len(), |t, k| returns[k][t]);
    match mcs_test(&losses(&r), opts) {
        Ok(res) => res.p_values.into_iter().map(Some).collect(),
        Err(_) => vec![None; returns.len()],
    }
}

/// In-sample fit on the first `split_ratio` share of the panel, one-step
/// forecasts over the rest, evaluated against the realized proxy and through
/// GMVP/RPP portfolios. The MCS columns hold p-values.
pub fn run_backtest(panel: &ReturnsPanel, cfg: &BacktestConfig) -> Result<BacktestResult> {
    ensure!(!cfg.models.is_empty(), Config, "no models configured");
    let split = split_sample(panel, cfg.split_ratio)?;
    let t_star = split.t_star;
    let proxy = realized_proxy(&panel.values, t_star, cfg.proxy_a)?;

    let mut specs = cfg.models.clone();
    if !specs.contains(&ModelSpec::EqualWeight) {
        specs.insert(0, ModelSpec::EqualWeight);
    }
    let outcomes: Vec<(ModelSpec, Result<ModelBacktest>)> = specs
        .par_iter()
        .map(|&s| (s, evaluate_model(s, panel, t_star, &proxy, cfg)))
        .collect();
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for (spec, res) in outcomes {
        match res {
            Ok(m) => models.push(m),
            Err(e) => failures.push((spec.to_string(), e.to_string())),
        }
    }

    let mut dist_p = vec![[None; 4]; models.len()];
    for metric in 0..4 {
        let cols: Vec<Option<&[f64]>> = models
            .iter()
            .map(|m| m.distances.as_ref().map(|d| metric_columns(d)[metric]))
            .collect();
        let opts = McsOptions {
            seed: cfg.mcs.seed.wrapping_add(metric as u64),
            ..cfg.mcs
        };
        for (i, pv) in mcs_p_values(&cols, &opts).into_iter().enumerate() {
            dist_p[i][metric] = pv;
        }
    }
    let gmvp_returns: Vec<&[f64]> = models.iter().map(|m| m.gmvp.returns.as_slice()).collect();
    let rpp_returns: Vec<&[f64]> = models.iter().map(|m| m.rpp.returns.as_slice()).collect();
    let gmvp_p = retained_flags(
        &gmvp_returns,
        gmvp_losses,
        &McsOptions {
            seed: cfg.mcs.seed.wrapping_add(10),
            ..cfg.mcs
        },
    );
    let rpp_p = retained_flags(
        &rpp_returns,
        rpp_losses,
        &McsOptions {
            seed: cfg.mcs.seed.wrapping_add(11),
            ..cfg.mcs
        },
    );

    let title = format!(
        "Out-of-sample evaluation, p={}, T*={}, T={}",
        panel.n_assets(),
        t_star,
        panel.n_obs()
    );
    let mut report = EvalReport::new(title, &BACKTEST_COLUMNS);
    for (i, m) in models.iter().enumerate() {
        let mut v: Vec<Option<f64>> = match &m.distances {
            Some(d) => metric_values(&d.average()).iter().map(|&x| Some(x)).collect(),
            None => vec![None; 4],
        };
        v.extend(dist_p[i]);
        v.extend([Some(m.gmvp.avg), Some(m.gmvp.sd), m.gmvp.ir, gmvp_p[i]]);
        v.extend([Some(m.rpp.avg), Some(m.rpp.sd), m.rpp.ir, rpp_p[i]]);
        report.push(m.name.clone(), v)?;
    }
    Ok(BacktestResult {
        report,
        models,
        failures,
        t_star,
        oos_dates: panel.dates[t_star..].to_vec(),
    })
}
