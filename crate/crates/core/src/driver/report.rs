//! Metrics rows, run summaries and strategy comparison tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentReport;
use crate::acquisition::Strategy;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "stage,labeled_id,queried_id,queried_ambiguous,queried_ood,cumulative_cost,test_accuracy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: usize,
    pub labeled_id: usize,
    pub queried_id: usize,
    pub queried_ambiguous: usize,
    pub queried_ood: usize,
    pub cumulative_cost: usize,
    /// Percent.
    pub test_accuracy: f64,
}

impl StageMetrics {
    pub fn queried(&self) -> usize {
        self.queried_id + self.queried_ambiguous + self.queried_ood
    }

    pub fn describe(&self) -> String {
        format!(
            "labeled iD {}, queried {}/{}/{}, cost {}, acc {:.2}%",
            self.labeled_id,
            self.queried_id,
            self.queried_ambiguous,
            self.queried_ood,
            self.cumulative_cost,
            self.test_accuracy
        )
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.4}",
            self.stage,
            self.labeled_id,
            self.queried_id,
            self.queried_ambiguous,
            self.queried_ood,
            self.cumulative_cost,
            self.test_accuracy
        )
    }
}

pub fn metrics_csv(rows: &[StageMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Cumulative cost per accuracy point, rounded to two decimals.
pub fn cost_per_accuracy(cost: usize, accuracy: f64) -> Result<f64> {
    if !(accuracy > 0.0) {
        return Err(Error::ZeroAccuracy);
    }
    Ok((cost as f64 / accuracy * 100.0).round() / 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub stages: usize,
    pub labeled_id: usize,
    pub final_accuracy: f64,
    pub final_cost: usize,
    pub cost_per_accuracy: Option<f64>,
    pub exhausted: bool,
}

impl RunSummary {
    pub fn from_report(report: &ExperimentReport) -> Self {
        let last = report.metrics.last();
        let acc = last.map_or(0.0, |m| m.test_accuracy);
        let cost = last.map_or(0, |m| m.cumulative_cost);
        Self {
            strategy: report.strategy.as_str().to_string(),
            seed: report.seed,
            stages: report.metrics.len(),
            labeled_id: last.map_or(0, |m| m.labeled_id),
            final_accuracy: acc,
            final_cost: cost,
            cost_per_accuracy: cost_per_accuracy(cost, acc).ok(),
            exhausted: report.exhausted,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|reason| Error::MalformedSummary {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let s: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if !s.final_accuracy.is_finite() || s.final_accuracy < 0.0 {
            return Err(format!("bad final_accuracy {}", s.final_accuracy));
        }
        Ok(s)
    }

    /// Table label for the strategy, or the raw name when unknown.
    pub fn label(&self) -> String {
        self.strategy
            .parse::<Strategy>()
            .map(|s| s.label().to_string())
            .unwrap_or_else(|_| self.strategy.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub strategy: String,
    pub accuracy: f64,
    pub cost: usize,
    pub cost_per_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<CompareRow>,
}

/// Rows sorted by Cost/Acc. ascending (then by strategy label). Needs at
/// least two summaries.
pub fn compare_summaries(summaries: &[RunSummary]) -> Result<ComparisonTable> {
    if summaries.len() < 2 {
        return Err(Error::config("summaries", "need at least two run summaries"));
    }
    let mut rows = summaries
        .iter()
        .map(|s| {
            Ok(CompareRow {
                strategy: s.label(),
                accuracy: s.final_accuracy,
                cost: s.final_cost,
                cost_per_accuracy: cost_per_accuracy(s.final_cost, s.final_accuracy)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.cost_per_accuracy
            .total_cmp(&b.cost_per_accuracy)
            .then_with(|| a.strategy.cmp(&b.strategy))
    });
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.strategy.len())
            .chain(["Strategy".len()])
            .max()
            .unwrap_or(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>7}  {:>8}  {:>9}", "Strategy", "Acc.", "Cost", "Cost/Acc.");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.2}  {:>8}  {:>9.2}",
                r.strategy, r.accuracy, r.cost, r.cost_per_accuracy
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,accuracy,cost,cost_per_accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.2},{},{:.2}",
                r.strategy, r.accuracy, r.cost, r.cost_per_accuracy
            );
        }
        out
    }
}
