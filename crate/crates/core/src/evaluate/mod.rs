//! Accuracy distances, portfolio construction and the model confidence set.

mod distances;
mod mcs;
mod portfolio;

pub use distances::{
    average_distances, distance_series, distances, AverageDistances, DistanceSeries, DistanceSet, DEFAULT_B,
};
pub use mcs::{
    default_block_len, gmvp_losses, mcs_test, rpp_losses, BootstrapInfo, McsOptions, McsResult, McsStatistic,
};
pub use portfolio::{
    annualized_metrics, gmvp_weights, portfolio_metrics, realized_proxy, risk_contributions, rpp_weights, weight_path,
    PortfolioKind, PortfolioMetrics, PortfolioResult, RppSolution, TRADING_DAYS,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_io::Artifact;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    /// Aligned with [`EvalReport::columns`]; `None` marks an undefined value.
    pub values: Vec<Option<f64>>,
}

/// Model × metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Artifact for EvalReport {
    const SCHEMA: &'static str = "eval_report";
    const VERSION: u32 = 1;
}

impl EvalReport {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, model: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        ensure!(
            values.len() == self.columns.len(),
            InvalidArgument,
            "row has {} values, report has {} columns",
            values.len(),
            self.columns.len()
        );
        self.rows.push(ReportRow {
            model: model.into(),
            values,
        });
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn value(&self, model: &str, column: &str) -> Option<f64> {
        let j = self.column(column)?;
        self.rows.iter().find(|r| r.model == model)?.values[j]
    }

    /// CSV with a `model` column; undefined values are written as `NA`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut header = vec!["model".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.model.clone()];
            rec.extend(
                row.values
                    .iter()
                    .map(|v| v.map_or_else(|| "NA".to_string(), |x| x.to_string())),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Fixed-width text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n{:<14}", self.title, "model");
        for c in &self.columns {
            out.push_str(&format!("{c:>14}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<14}", r.model));
            for v in &r.values {
                match v {
                    Some(x) => out.push_str(&format!("{x:>14.4}")),
                    None => out.push_str(&format!("{:>14}", "NA")),
                }
            }
            out.push('\n');
        }
        out
    }
}
