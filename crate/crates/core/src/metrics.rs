//! Specification-quality metrics and per-run records.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_g9;

/// Number of recent episodes averaged by the episode-safety metric.
pub const EPISODE_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SafeSetSource {
    Oracle,
    Tabular,
    Deep,
}

/// Membership per evaluation state, thresholded at `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSetEstimate {
    pub member: Vec<bool>,
    pub alpha: f64,
    pub source: SafeSetSource,
}

impl SafeSetEstimate {
    /// `value <= alpha`, ties included.
    pub fn from_values(values: &[f64], alpha: f64, source: SafeSetSource) -> Self {
        Self { member: values.iter().map(|&v| v <= alpha).collect(), alpha, source }
    }

    pub fn len(&self) -> usize {
        self.member.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member.is_empty()
    }

    pub fn size(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn is_subset_of(&self, other: &SafeSetEstimate) -> bool {
        self.member.iter().zip(&other.member).all(|(&a, &b)| !a || b)
    }

    /// Keeps only the states where `mask` is set, preserving order.
    pub fn restrict(&self, mask: &[bool]) -> Self {
        Self {
            member: self.member.iter().zip(mask).filter(|(_, &k)| k).map(|(&m, _)| m).collect(),
            alpha: self.alpha,
            source: self.source,
        }
    }
}

fn check_same_len(a: &SafeSetEstimate, b: &SafeSetEstimate) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
            context: "safe-set estimate vs truth",
        });
    }
    Ok(())
}

/// `|estimate ∩ truth| / |truth|`.
pub fn ratio_correct(estimate: &SafeSetEstimate, truth: &SafeSetEstimate) -> Result<f64> {
    check_same_len(estimate, truth)?;
    let truth_size = truth.size();
    if truth_size == 0 {
        return Err(Error::EmptyTruthSet);
    }
    let hits = estimate.member.iter().zip(&truth.member).filter(|(&e, &t)| e && t).count();
    Ok(hits as f64 / truth_size as f64)
}

/// `|estimate ∩ truth^c| / total_states`.
pub fn ratio_false_positive(
    estimate: &SafeSetEstimate,
    truth: &SafeSetEstimate,
    total_states: usize,
) -> Result<f64> {
    check_same_len(estimate, truth)?;
    if total_states == 0 {
        return Err(Error::param("total_states", "must be positive"));
    }
    let wrong = estimate.member.iter().zip(&truth.member).filter(|(&e, &t)| e && !t).count();
    Ok(wrong as f64 / total_states as f64)
}

/// Outcomes of the most recent episodes (`true` = safe).
#[derive(Debug, Clone, Default)]
pub struct EpisodeLog {
    outcomes: VecDeque<bool>,
    completed: u64,
}

impl EpisodeLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, safe: bool) {
        if self.outcomes.len() == EPISODE_WINDOW {
            self.outcomes.pop_front();
        }
        self.outcomes.push_back(safe);
        self.completed += 1;
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Average episode safety; `None` until an episode has finished.
    pub fn episode_safety(&self) -> Option<f64> {
        if self.outcomes.is_empty() {
            return None;
        }
        let safe = self.outcomes.iter().filter(|&&s| s).count();
        Some(safe as f64 / self.outcomes.len() as f64)
    }
}

pub fn episode_safety(log: &EpisodeLog) -> Option<f64> {
    log.episode_safety()
}

/// One evaluation point of a training run. `aes` is NaN before any episode ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub env_steps: u64,
    pub r_c: f64,
    pub r_fp: f64,
    pub aes: f64,
    pub epsilon: f64,
}

pub const METRICS_HEADER: [&str; 6] = ["iteration", "env_steps", "r_c", "r_fp", "aes", "epsilon"];

/// Time series of metrics for one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub algo: String,
    pub env: String,
    pub seed: u64,
    pub alpha: f64,
    pub config: serde_json::Value,
    #[serde(skip)]
    pub rows: Vec<MetricsRow>,
}

impl ExperimentRecord {
    pub fn new(algo: &str, env: &str, seed: u64, alpha: f64, config: serde_json::Value) -> Self {
        Self { algo: algo.into(), env: env.into(), seed, alpha, config, rows: Vec::new() }
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_metrics_csv(&self.rows, path)
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.env_steps.to_string(),
            fmt_g9(r.r_c),
            fmt_g9(r.r_fp),
            fmt_g9(r.aes),
            fmt_g9(r.epsilon),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(Error::format(path, "unexpected metrics header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| Error::format(path, format!("column {i}: {e}")))
        };
        rows.push(MetricsRow {
            iteration: rec[0].parse().map_err(|e| Error::format(path, format!("iteration: {e}")))?,
            env_steps: rec[1].parse().map_err(|e| Error::format(path, format!("env_steps: {e}")))?,
            r_c: f(2)?,
            r_fp: f(3)?,
            aes: f(4)?,
            epsilon: f(5)?,
        });
    }
    Ok(rows)
}
