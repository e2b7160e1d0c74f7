//! Monte Carlo regret sweeps over many independent realizations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, PolicyChoice, PolicyConfig, RegretMode};
use crate::distributions::RngStream;
use crate::environments::{oracle_arm, Environment};
use crate::error::{Error, Result};
use crate::policies::{Policy, PolicySettings};

/// Label offset for policy streams derived from a realization stream. The
/// environment uses labels 1 and 2.
const POLICY_STREAM_BASE: u64 = 1000;

/// Choices and regret of one policy over one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationTrace {
    pub chosen: Vec<usize>,
    pub oracle: Vec<usize>,
    pub instant_regret: Vec<f64>,
    pub degenerate_events: u64,
}

impl RealizationTrace {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.instant_regret
            .iter()
            .map(|r| {
                acc += r;
                acc
            })
            .collect()
    }

    pub fn total_regret(&self) -> f64 {
        self.instant_regret.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationResult {
    pub realization: usize,
    /// One trace per policy, in config order. Empty when aborted.
    pub traces: Vec<RealizationTrace>,
    pub aborted: Option<String>,
}

/// Across-realization summary for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub policy: String,
    pub mean_instant: Vec<f64>,
    pub mean_cumulative: Vec<f64>,
    /// Sample standard deviation (zero with a single realization).
    pub std_cumulative: Vec<f64>,
    pub realizations: usize,
    pub degenerate_events: u64,
}

impl RegretTrace {
    pub fn final_mean(&self) -> f64 {
        self.mean_cumulative.last().copied().unwrap_or(0.0)
    }

    /// Standard error of the final mean cumulative regret.
    pub fn final_standard_error(&self) -> f64 {
        let s = self.std_cumulative.last().copied().unwrap_or(0.0);
        s / (self.realizations.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub policies: Vec<String>,
    pub horizon: usize,
    pub realizations: Vec<RealizationResult>,
    pub traces: Vec<RegretTrace>,
}

impl ExperimentResult {
    pub fn aborted(&self) -> usize {
        self.realizations.iter().filter(|r| r.aborted.is_some()).count()
    }

    /// More than 1% of realizations aborted.
    pub fn exceeds_abort_limit(&self) -> bool {
        self.aborted() * 100 > self.realizations.len()
    }

    pub fn trace(&self, policy: &str) -> Option<&RegretTrace> {
        self.traces.iter().find(|t| t.policy == policy)
    }

    /// Final cumulative regret of `policy` in every completed realization.
    pub fn final_regrets(&self, policy: &str) -> Vec<f64> {
        let Some(p) = self.policies.iter().position(|n| n == policy) else {
            return Vec::new();
        };
        self.realizations
            .iter()
            .filter(|r| r.aborted.is_none())
            .map(|r| r.traces[p].total_regret())
            .collect()
    }
}

fn run_policy(
    cfg: &ExperimentConfig,
    index: usize,
    policy: &PolicyConfig,
    realization: usize,
) -> Result<RealizationTrace> {
    let stream = RngStream::with_stream(cfg.seed, realization as u64);
    let mut env = Environment::new(cfg.environment.clone(), &stream)?;
    let mut learner = match policy.choice {
        PolicyChoice::Oracle => None,
        PolicyChoice::Policy(kind) => {
            let settings = PolicySettings {
                particles: policy.particles.unwrap_or(cfg.particles),
                alpha: policy.alpha,
                resampling: cfg.resampling,
            };
            let dynamics = policy.dynamics.resolve(&cfg.environment);
            Some(Policy::new(
                kind,
                settings,
                cfg.environment.model.clone(),
                &dynamics,
                stream.derive(POLICY_STREAM_BASE + index as u64),
            )?)
        }
    };
    let horizon = cfg.horizon;
    let mut trace = RealizationTrace {
        chosen: Vec::with_capacity(horizon),
        oracle: Vec::with_capacity(horizon),
        instant_regret: Vec::with_capacity(horizon),
        degenerate_events: 0,
    };
    let mut x = vec![0.0; cfg.environment.model.context_dim()];
    for _ in 0..horizon {
        env.begin_round()?;
        x.copy_from_slice(env.context());
        let best = oracle_arm(env.means());
        let arm = match learner.as_mut() {
            Some(p) => p.select(&x)?,
            None => best,
        };
        let pseudo = env.means()[best] - env.means()[arm];
        let best_reward = match cfg.regret_mode {
            RegretMode::Realized if best != arm => Some(env.sample_reward(best)?),
            _ => None,
        };
        let reward = env.play(arm)?.reward;
        let regret = match cfg.regret_mode {
            RegretMode::Pseudo => pseudo,
            RegretMode::Realized => best_reward.map_or(0.0, |b| b - reward),
        };
        if let Some(p) = learner.as_mut() {
            p.update(arm, &x, reward)?;
        }
        trace.chosen.push(arm);
        trace.oracle.push(best);
        trace.instant_regret.push(regret);
    }
    trace.degenerate_events = learner.map_or(0, |p| p.degenerate_events());
    Ok(trace)
}

/// Runs every policy on realization `r`. All policies face the same
/// environment seed. Numeric failures abort the realization; other errors
/// are returned.
pub fn run_realization(cfg: &ExperimentConfig, r: usize) -> Result<RealizationResult> {
    let mut traces = Vec::with_capacity(cfg.policies.len());
    for (i, p) in cfg.policies.iter().enumerate() {
        match run_policy(cfg, i, p, r) {
            Ok(t) => traces.push(t),
            Err(e) if e.is_numeric_failure() => {
                return Ok(RealizationResult {
                    realization: r,
                    traces: Vec::new(),
                    aborted: Some(format!("policy {}: {e}", p.name)),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RealizationResult {
        realization: r,
        traces,
        aborted: None,
    })
}

/// Runs all realizations on `cfg.jobs` worker threads. Results are
/// identical for any thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let runs: Vec<Result<RealizationResult>> = if cfg.jobs <= 1 {
        (0..cfg.realizations).map(|r| run_realization(cfg, r)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::config("experiment.jobs", e.to_string()))?;
        pool.install(|| {
            (0..cfg.realizations)
                .into_par_iter()
                .map(|r| run_realization(cfg, r))
                .collect()
        })
    };
    let realizations = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let policies: Vec<String> = cfg.policies.iter().map(|p| p.name.clone()).collect();
    let traces = policies
        .iter()
        .enumerate()
        .map(|(i, name)| aggregate(name, i, cfg.horizon, &realizations))
        .collect();
    Ok(ExperimentResult {
        policies,
        horizon: cfg.horizon,
        realizations,
        traces,
    })
}

fn aggregate(name: &str, index: usize, horizon: usize, runs: &[RealizationResult]) -> RegretTrace {
    let done: Vec<&RealizationTrace> = runs
        .iter()
        .filter(|r| r.aborted.is_none())
        .map(|r| &r.traces[index])
        .collect();
    let n = done.len();
    let cumulative: Vec<Vec<f64>> = done.iter().map(|t| t.cumulative_regret()).collect();
    let mut mean_instant = vec![0.0; horizon];
    let mut mean_cumulative = vec![0.0; horizon];
    let mut std_cumulative = vec![0.0; horizon];
    if n > 0 {
        for t in 0..horizon {
            mean_instant[t] = done.iter().map(|r| r.instant_regret[t]).sum::<f64>() / n as f64;
            let mean = cumulative.iter().map(|c| c[t]).sum::<f64>() / n as f64;
            mean_cumulative[t] = mean;
            if n > 1 {
                let ss: f64 = cumulative.iter().map(|c| (c[t] - mean).powi(2)).sum();
                std_cumulative[t] = (ss / (n - 1) as f64).sqrt();
            }
        }
    } else {
        mean_instant.fill(f64::NAN);
        mean_cumulative.fill(f64::NAN);
        std_cumulative.fill(f64::NAN);
    }
    RegretTrace {
        policy: name.to_string(),
        mean_instant,
        mean_cumulative,
        std_cumulative,
        realizations: n,
        degenerate_events: done.iter().map(|t| t.degenerate_events).sum(),
    }
}

pub const SUMMARY_FILE: &str = "cumulative_regret.csv";
pub const RAW_FILE: &str = "raw_regret.csv";

pub fn write_summary_csv<W: Write>(result: &ExperimentResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "policy,t,mean_instant_regret,mean_cum_regret,std_cum_regret")?;
    for tr in &result.traces {
        for t in 0..result.horizon {
            writeln!(
                w,
                "{},{},{},{},{}",
                tr.policy,
                t + 1,
                tr.mean_instant[t],
                tr.mean_cumulative[t],
                tr.std_cumulative[t]
            )?;
        }
    }
    w.flush()
}

pub fn write_raw_csv<W: Write>(result: &ExperimentResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "policy,realization,t,chosen_arm,oracle_arm,instant_regret")?;
    for (p, name) in result.policies.iter().enumerate() {
        for run in result.realizations.iter().filter(|r| r.aborted.is_none()) {
            let tr = &run.traces[p];
            for t in 0..tr.chosen.len() {
                writeln!(
                    w,
                    "{name},{},{},{},{},{}",
                    run.realization,
                    t + 1,
                    tr.chosen[t],
                    tr.oracle[t],
                    tr.instant_regret[t]
                )?;
            }
        }
    }
    w.flush()
}

/// Writes the summary (and optionally raw) CSV into `dir`, creating it.
pub fn write_outputs(result: &ExperimentResult, dir: &Path, raw: bool) -> Result<Vec<PathBuf>> {
    let io = |p: &Path, e: std::io::Error| Error::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    let summary = dir.join(SUMMARY_FILE);
    let f = File::create(&summary).map_err(|e| io(&summary, e))?;
    write_summary_csv(result, BufWriter::new(f)).map_err(|e| io(&summary, e))?;
    written.push(summary);
    if raw {
        let path = dir.join(RAW_FILE);
        let f = File::create(&path).map_err(|e| io(&path, e))?;
        write_raw_csv(result, BufWriter::new(f)).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
