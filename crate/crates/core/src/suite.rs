//! Single runs, seed suites, and their CSV artifacts.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::deep::{run_actor_critic, save_networks, DeepRun};
use crate::error::{Error, Result};
use crate::io::{fmt_g9, write_safe_set_csv};
use crate::mdp::FiniteMdp;
use crate::metrics::{write_metrics_csv, ExperimentRecord, MetricsRow};
use crate::oracle::{optimal_unsafety, DEFAULT_TOL};
use crate::tabular::{run_tabular, Algo, TabularRun};

pub const BAND_NOTE: &str = "# band: mean +/- sample sd";
pub const METRICS: [&str; 4] = ["r_c", "r_fp", "aes", "epsilon"];

#[derive(Debug, Clone)]
pub enum Artifact {
    Tabular(TabularRun),
    Deep(Box<DeepRun>),
}

/// A finished run: its metrics record, the learned model, and the finite MDP
/// whose states index `safe_set.csv`.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub record: ExperimentRecord,
    pub artifact: Artifact,
    pub mdp: FiniteMdp,
}

impl TrainOutput {
    /// Writes `metrics.csv`, `qtables.bin` or `weights.bin`, and `safe_set.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_metrics_csv(&self.record.rows, dir.join("metrics.csv"))?;
        let ns = self.mdp.num_states();
        let values = match &self.artifact {
            Artifact::Tabular(run) => {
                run.state.tables.save(dir.join("qtables.bin"))?;
                let (v, _) = run.state.tables.state_values(&run.state.ss_policy);
                v
            }
            Artifact::Deep(run) => {
                save_networks(dir.join("weights.bin"), &run.bundle.networks())?;
                let mut v = vec![1.0; ns];
                let mut free = (0..ns).filter(|&s| !self.mdp.is_target(s));
                for &x in &run.values {
                    v[free.next().expect("evaluation grid matches the discretization")] = x;
                }
                v
            }
        };
        let member: Vec<bool> = values.iter().map(|&x| x <= self.record.alpha).collect();
        write_safe_set_csv(dir.join("safe_set.csv"), &self.mdp, &values, &member)
    }
}

/// Runs one `(algo, seed)` combination of `config`.
pub fn train(config: &RunConfig, algo: Algo, seed: u64) -> Result<TrainOutput> {
    config.validate()?;
    let mdp = config.finite_mdp()?;
    match config.mode() {
        Mode::Tabular => {
            let v = optimal_unsafety(&mdp, DEFAULT_TOL)?;
            let truth: Vec<bool> = v.values.iter().map(|&x| x <= config.alpha).collect();
            let tc = config.tabular_config(seed);
            let run = run_tabular(&mdp, &truth, algo, &tc)?;
            let mut record =
                ExperimentRecord::new(algo.name(), config.env.name(), seed, config.alpha, serde_json::to_value(&tc)?);
            record.rows = run.rows.clone();
            Ok(TrainOutput { record, artifact: Artifact::Tabular(run), mdp })
        }
        Mode::Deep => {
            let dc = config.deep_config(algo, seed);
            let run = run_actor_critic(&config.integrator_config(), &dc)?;
            let mut record =
                ExperimentRecord::new(algo.name(), config.env.name(), seed, config.alpha, serde_json::to_value(&dc)?);
            record.rows = run.rows.clone();
            Ok(TrainOutput { record, artifact: Artifact::Deep(Box::new(run)), mdp })
        }
    }
}

/// One line of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub iteration: usize,
    pub env_steps: u64,
    pub metric: String,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    /// Records ordered by algorithm (as configured), then seed.
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<(Algo, Vec<AggregateRow>)>,
}

impl SuiteResult {
    pub fn records_for(&self, algo: Algo) -> impl Iterator<Item = &ExperimentRecord> {
        self.records.iter().filter(move |r| r.algo == algo.name())
    }

    /// `<out>/<algo>/aggregate.csv` and `<out>/<algo>/seed_<k>/metrics.csv`.
    pub fn write(&self, out: impl AsRef<Path>) -> Result<()> {
        let out = out.as_ref();
        for r in &self.records {
            let dir = out.join(&r.algo).join(format!("seed_{}", r.seed));
            std::fs::create_dir_all(&dir)?;
            r.write_csv(dir.join("metrics.csv"))?;
        }
        for (algo, rows) in &self.aggregates {
            write_aggregate_csv(rows, out.join(algo.name()).join("aggregate.csv"))?;
        }
        Ok(())
    }
}

/// Runs every `(algo, seed)` pair of `config` in parallel and aggregates per algorithm.
pub fn run_suite(config: &RunConfig, seeds: &[u64]) -> Result<SuiteResult> {
    config.validate()?;
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return Err(Error::param("seeds", "must list at least one seed"));
    }
    let jobs: Vec<(Algo, u64)> =
        config.algos.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let records = jobs
        .par_iter()
        .map(|&(algo, seed)| {
            train(config, algo, seed).map(|o| o.record).map_err(|e| Error::RunFailed {
                name: format!("{algo}/seed_{seed}"),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut aggregates = Vec::new();
    for &algo in &config.algos {
        let runs: Vec<&ExperimentRecord> = records.iter().filter(|r| r.algo == algo.name()).collect();
        let series: Vec<&[MetricsRow]> = runs.iter().map(|r| r.rows.as_slice()).collect();
        aggregates.push((algo, aggregate(&series)?));
    }
    Ok(SuiteResult { records, aggregates })
}

/// Mean and `mean +/- sample sd` band per evaluation point and metric. NaN
/// entries (AES before the first episode) are left out of the statistics.
pub fn aggregate(series: &[&[MetricsRow]]) -> Result<Vec<AggregateRow>> {
    let Some(first) = series.first() else {
        return Err(Error::param("series", "nothing to aggregate"));
    };
    for s in series {
        if s.len() != first.len() || s.iter().zip(*first).any(|(a, b)| a.iteration != b.iteration) {
            return Err(Error::param("series", "runs disagree on their evaluation points"));
        }
    }
    let mut out = Vec::new();
    for (i, row) in first.iter().enumerate() {
        for metric in METRICS {
            let xs: Vec<f64> = series
                .iter()
                .map(|s| metric_value(&s[i], metric))
                .filter(|x| !x.is_nan())
                .collect();
            let (mean, sd) = mean_sd(&xs);
            let env_steps = series.iter().map(|s| s[i].env_steps).max().unwrap_or(row.env_steps);
            out.push(AggregateRow {
                iteration: row.iteration,
                env_steps,
                metric: metric.into(),
                mean,
                lo: mean - sd,
                hi: mean + sd,
            });
        }
    }
    Ok(out)
}

pub fn metric_value(row: &MetricsRow, metric: &str) -> f64 {
    match metric {
        "r_c" => row.r_c,
        "r_fp" => row.r_fp,
        "aes" => row.aes,
        "epsilon" => row.epsilon,
        _ => f64::NAN,
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = format!("{BAND_NOTE}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "env_steps", "metric", "mean", "lo", "hi"])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.env_steps.to_string(),
            r.metric.clone(),
            fmt_g9(r.mean),
            fmt_g9(r.lo),
            fmt_g9(r.hi),
        ])?;
    }
    text.push_str(std::str::from_utf8(&w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("ascii"));
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_aggregate_csv(path: impl AsRef<Path>) -> Result<Vec<AggregateRow>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Extracts one metric as `iteration, env_steps, mean, lo, hi`.
pub fn plotdata(rows: &[AggregateRow], metric: &str, path: impl AsRef<Path>) -> Result<usize> {
    if !METRICS.contains(&metric) {
        return Err(Error::param("metric", format!("unknown metric {metric:?}")));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "env_steps", "mean", "lo", "hi"])?;
    let mut n = 0;
    for r in rows.iter().filter(|r| r.metric == metric) {
        w.write_record([r.iteration.to_string(), r.env_steps.to_string(), fmt_g9(r.mean), fmt_g9(r.lo), fmt_g9(r.hi)])?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}
