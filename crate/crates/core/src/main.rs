use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use safeset::config::{EnvKind, Mode, RunConfig};
use safeset::io::{read_safe_set_csv, write_safe_set_csv};
use safeset::mdp::FiniteMdp;
use safeset::metrics::{ratio_correct, ratio_false_positive, SafeSetEstimate, SafeSetSource};
use safeset::oracle::{optimal_unsafety, DEFAULT_TOL};
use safeset::suite::{plotdata, read_aggregate_csv, run_suite, train};
use safeset::tabular::Algo;
use safeset::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "spec", version, about = "Probabilistic safe sets: oracle, learners, and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal unsafety and the oracle safe set of a finite MDP.
    Oracle {
        #[command(flatten)]
        source: MdpSource,
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one learner and write its metrics, model, and safe set.
    Train(TrainArgs),
    /// Compare an estimated safe set with the ground truth.
    Metrics {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every configured algorithm over a list of seeds and aggregate.
    Suite {
        #[arg(long)]
        config: PathBuf,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "0..9")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract one metric of an aggregate file as plot-ready columns.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "r_c")]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the finite MDP of an environment config.
    ExportMdp {
        #[command(flatten)]
        source: EnvSource,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EnvSource {
    /// TOML config; overrides --env.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "integrator")]
    env: String,
}

impl EnvSource {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::new(self.env.parse()?)),
        }
    }
}

#[derive(Args)]
struct MdpSource {
    /// MDP file in JSON format.
    #[arg(long, conflicts_with_all = ["config", "env"])]
    mdp: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
}

impl MdpSource {
    fn load(&self) -> Result<FiniteMdp> {
        if let Some(p) = &self.mdp {
            return FiniteMdp::load(p);
        }
        EnvSource { config: self.config.clone(), env: self.env.clone().unwrap_or_else(|| "integrator".into()) }
            .load()?
            .finite_mdp()
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value = "ess")]
    algo: String,
    #[command(flatten)]
    source: EnvSource,
    #[arg(long)]
    alpha: Option<f64>,
    /// Improvement iterations (tabular).
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    steps_per_iter: Option<u64>,
    /// Environment steps (deep).
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidParameter { name: "seeds", reason: format!("cannot parse {spec:?}") };
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Oracle { source, alpha, out } => {
            let mdp = source.load()?;
            let v = optimal_unsafety(&mdp, DEFAULT_TOL)?;
            let member: Vec<bool> = v.values.iter().map(|&x| x <= alpha).collect();
            write_safe_set_csv(&out, &mdp, &v.values, &member)?;
            let size = (0..mdp.num_states()).filter(|&s| !mdp.is_target(s) && member[s]).count();
            eprintln!("{} sweeps, residual {:.3e}, |S*| = {size}", v.sweeps, v.residual);
        }
        Command::Train(args) => {
            let mut cfg = args.source.load()?;
            if args.source.config.is_none() && cfg.env == EnvKind::Integrator && args.mode.as_deref() == Some("deep") {
                cfg.env = EnvKind::IntegratorCont;
            }
            if let Some(m) = &args.mode {
                cfg.mode = Some(m.parse::<Mode>()?);
            }
            if let Some(a) = args.alpha {
                cfg.alpha = a;
            }
            if let Some(n) = args.iters {
                cfg.tabular.iterations = n;
            }
            if let Some(n) = args.steps_per_iter {
                cfg.tabular.steps_per_iter = n;
            }
            if let Some(n) = args.steps {
                cfg.deep.total_steps = n;
            }
            let algo: Algo = args.algo.parse()?;
            let out = train(&cfg, algo, args.seed.unwrap_or(cfg.seed))?;
            out.write(&args.out)?;
            if let Some(last) = out.record.last() {
                eprintln!("final r_c {:.4} r_fp {:.4} aes {:.3}", last.r_c, last.r_fp, last.aes);
            }
        }
        Command::Metrics { estimate, truth, out } => {
            let est = read_safe_set_csv(&estimate)?;
            let tru = read_safe_set_csv(&truth)?;
            let index: std::collections::HashMap<usize, bool> =
                est.iter().map(|r| (r.state_index, r.in_safe_set)).collect();
            let mut e = Vec::with_capacity(tru.len());
            for r in &tru {
                let m = index.get(&r.state_index).ok_or_else(|| Error::Format {
                    path: estimate.clone(),
                    reason: format!("state {} missing from the estimate", r.state_index),
                })?;
                e.push(*m);
            }
            let alpha = f64::NAN;
            let e = SafeSetEstimate { member: e, alpha, source: SafeSetSource::Tabular };
            let t = SafeSetEstimate {
                member: tru.iter().map(|r| r.in_safe_set).collect(),
                alpha,
                source: SafeSetSource::Oracle,
            };
            let both = e.member.iter().zip(&t.member).filter(|(a, b)| **a && **b).count();
            let report = json!({
                "r_c": ratio_correct(&e, &t)?,
                "r_fp": ratio_false_positive(&e, &t, t.len())?,
                "sizes": { "estimate": e.size(), "truth": t.size(), "intersection": both, "total": t.len() },
            });
            std::fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")?;
        }
        Command::Suite { config, seeds, out } => {
            let cfg = RunConfig::load(&config)?;
            let result = run_suite(&cfg, &parse_seeds(&seeds)?)?;
            result.write(&out)?;
            for (algo, rows) in &result.aggregates {
                if let Some(r) = rows.iter().rev().find(|r| r.metric == "r_c") {
                    eprintln!("{algo}: final r_c {:.4} [{:.4}, {:.4}]", r.mean, r.lo, r.hi);
                }
            }
        }
        Command::Plotdata { input, metric, out } => {
            let rows = read_aggregate_csv(&input)?;
            plotdata(&rows, &metric, &out)?;
        }
        Command::ExportMdp { source, out } => {
            source.load()?.finite_mdp()?.save(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
