//! Run configuration: a JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use fmsv_core::evaluate::{McsOptions, DEFAULT_B};
use fmsv_core::simulate::Dgp2Coupling;
use fmsv_core::study::{BacktestConfig, BenchmarkConfig, Dgp, ModelOptions, ModelSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub b: u32,
    pub proxy_a: f64,
    pub split_ratio: f64,
    pub mcs: McsOptions,
    pub refit_every: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let bt = BacktestConfig::default();
        Self {
            b: DEFAULT_B,
            proxy_a: bt.proxy_a,
            split_ratio: bt.split_ratio,
            mcs: bt.mcs,
            refit_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dgp: Dgp,
    pub dgp2_coupling: Dgp2Coupling,
    pub p: usize,
    pub t: usize,
    pub batches: usize,
    pub seed: u64,
    /// Command-specific defaults apply when absent.
    pub models: Option<Vec<ModelSpec>>,
    pub options: ModelOptions,
    pub evaluation: EvaluationConfig,
    pub out_dir: PathBuf,
    pub returns: Option<PathBuf>,
    pub plot_data: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchmarkConfig::default();
        Self {
            dgp: bench.dgp,
            dgp2_coupling: bench.dgp2_coupling,
            p: bench.p,
            t: bench.t,
            batches: bench.batches,
            seed: bench.seed,
            models: None,
            options: ModelOptions::default(),
            evaluation: EvaluationConfig::default(),
            out_dir: PathBuf::from("out"),
            returns: None,
            plot_data: false,
        }
    }
}

/// Sets `value` at a dotted key path, creating intermediate objects.
pub fn set_key(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("bad override key '{key}'")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override '{key}': '{part}' is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// `key=value`; the value is read as JSON and falls back to a plain string.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{s}' is not of the form key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    let origin = path.map_or_else(|| "command line".to_string(), |p| p.display().to_string());
    // with overrides the merged document is re-rendered, so positions refer to it
    let (doc, origin) = if overrides.is_empty() {
        (text, origin)
    } else {
        let mut root: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        for (k, v) in overrides {
            set_key(&mut root, k, v.clone())?;
        }
        let merged = serde_json::to_string_pretty(&root).map_err(|e| CliError::Config(e.to_string()))?;
        (merged, format!("{origin} with overrides"))
    };
    let cfg: RunConfig = serde_json::from_str(&doc)
        .map_err(|e| CliError::Config(format!("{origin}: {e}\n{}", excerpt(&doc, e.line()))))?;
    cfg.validate()?;
    Ok(cfg)
}

fn excerpt(text: &str, line: usize) -> String {
    text.lines()
        .nth(line.saturating_sub(1))
        .map_or_else(String::new, |l| format!("  --> line {line}: {}", l.trim()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.p < 2 {
            return bad(format!("p must be >= 2, got {}", self.p));
        }
        if self.t < 2 {
            return bad(format!("t must be >= 2, got {}", self.t));
        }
        if self.batches == 0 {
            return bad("batches must be >= 1".into());
        }
        if !(self.evaluation.split_ratio > 0.0 && self.evaluation.split_ratio < 1.0) {
            return bad(format!(
                "evaluation.split_ratio must lie in (0, 1), got {}",
                self.evaluation.split_ratio
            ));
        }
        if !(0.0..=1.0).contains(&self.evaluation.proxy_a) {
            return bad(format!(
                "evaluation.proxy_a must lie in [0, 1], got {}",
                self.evaluation.proxy_a
            ));
        }
        if self.evaluation.b < 2 {
            return bad("evaluation.b must be >= 2".into());
        }
        if !(self.evaluation.mcs.alpha > 0.0 && self.evaluation.mcs.alpha < 1.0) || self.evaluation.mcs.reps == 0 {
            return bad("evaluation.mcs needs alpha in (0, 1) and reps >= 1".into());
        }
        if self.evaluation.refit_every == Some(0) {
            return bad("evaluation.refit_every must be >= 1".into());
        }
        if !(self.options.cv_ratio > 0.0 && self.options.cv_ratio < 1.0) {
            return bad("options.cv_ratio must lie in (0, 1)".into());
        }
        if self.options.q == 0 {
            return bad("options.q must be >= 1".into());
        }
        for spec in self.models.iter().flatten() {
            if spec.factors() == Some(0) {
                return bad(format!("{spec}: need at least one factor"));
            }
        }
        Ok(())
    }

    /// Factor counts against the simulated dimension; panels are checked on load.
    pub fn check_simulated_dimension(&self) -> Result<(), CliError> {
        for spec in self.models.iter().flatten() {
            if let Some(m) = spec.factors() {
                if m >= self.p {
                    return Err(CliError::Config(format!("{spec}: need m < p (p = {})", self.p)));
                }
            }
        }
        Ok(())
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        let defaults = BenchmarkConfig::default();
        BenchmarkConfig {
            dgp: self.dgp,
            p: self.p,
            t: self.t,
            batches: self.batches,
            seed: self.seed,
            dgp2_coupling: self.dgp2_coupling,
            models: self.models.clone().unwrap_or(defaults.models),
            options: self.options,
            b: self.evaluation.b,
            mcs: self.evaluation.mcs,
        }
    }

    pub fn backtest(&self) -> BacktestConfig {
        let defaults = BacktestConfig::default();
        BacktestConfig {
            models: self.models.clone().unwrap_or(defaults.models),
            options: self.options,
            split_ratio: self.evaluation.split_ratio,
            proxy_a: self.evaluation.proxy_a,
            b: self.evaluation.b,
            mcs: self.evaluation.mcs,
            refit_every: self.evaluation.refit_every,
        }
    }
}
