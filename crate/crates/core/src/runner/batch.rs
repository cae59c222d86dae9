//! Batch evaluation across seeded environments with per-step metrics and
//! coverage-over-time summaries.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{Env, EpisodeConfig, Termination};
use crate::error::{Result, SimError};
use crate::runner::oracle::{feasible_coverage, FeasibleSet, OracleParams};
use crate::runner::policy::{OrbitParams, OrbitPolicy, Policy, PolicyKind, RandomPolicy};
use crate::seeding::{derive_seed, episode_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub episode: EpisodeConfig,
    pub env_count: usize,
    pub episodes_per_env: usize,
    /// Obstacle counts to evaluate, one block of episodes each.
    pub obstacle_counts: Vec<usize>,
    pub policy: PolicyKind,
    pub master_seed: u64,
    /// Half-width of the distance band used by the coverage metric (m).
    pub band: f64,
    pub oracle: OracleParams,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            episode: EpisodeConfig::default(),
            env_count: 512,
            episodes_per_env: 6,
            obstacle_counts: vec![0, 4, 9, 14, 19],
            policy: PolicyKind::Orbit,
            master_seed: 0,
            band: 0.2,
            oracle: OracleParams::default(),
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.env_count == 0 || self.episodes_per_env == 0 || self.obstacle_counts.is_empty() {
            return Err(SimError::invalid("env_count, episodes_per_env and obstacle_counts must be non-empty"));
        }
        if self.policy == PolicyKind::Bridge {
            return Err(SimError::invalid("the bridge policy runs through the bridge server, not run_batch"));
        }
        self.episode.validate()
    }
}

/// One CSV row per control step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub obstacles: usize,
    pub env_id: usize,
    pub episode: usize,
    pub step: u64,
    pub time: f64,
    /// Fraction of feasible faces inspected within the band.
    pub coverage: f64,
    pub f: f64,
    pub v: f64,
    pub p: f64,
    /// Coverage functional of the active label.
    #[serde(rename = "F")]
    pub cumulative_f: f64,
    pub active_label: u32,
    pub termination: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub obstacles: usize,
    pub env_id: usize,
    pub episode: usize,
    pub seed: u64,
    pub steps: u64,
    pub termination: Termination,
    pub final_coverage: f64,
    pub feasible_faces: usize,
    pub total_faces: usize,
    pub episode_return: f64,
    /// Coverage after each step.
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageBin {
    pub time: f64,
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub obstacles: usize,
    pub episodes: usize,
    pub mean_final_coverage: f64,
    /// Crash share in percent, dynamics faults included.
    pub crash_pct: f64,
    pub timeout_pct: f64,
    pub faults: usize,
    pub bins: Vec<CoverageBin>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub rows: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeSummary>,
    pub reports: Vec<CoverageReport>,
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    } else {
        sorted[i]
    }
}

/// Feasible-face coverage of every scheduled label. An empty feasible set
/// counts as fully covered.
pub fn episode_coverage(env: &Env, feasible: &[FeasibleSet], band: f64) -> f64 {
    let total: usize = feasible.iter().map(|s| s.faces.len()).sum();
    if total == 0 {
        return 1.0;
    }
    let covered: usize = feasible
        .iter()
        .filter_map(|s| env.ledgers().get(&s.label).map(|l| s.covered(l, band)))
        .sum();
    covered as f64 / total as f64
}

pub fn make_policy(kind: PolicyKind, config: &EpisodeConfig, seed: u64) -> Result<Box<dyn Policy>> {
    match kind {
        PolicyKind::Random => Ok(Box::new(RandomPolicy::new(seed))),
        PolicyKind::Orbit => Ok(Box::new(OrbitPolicy::new(config, OrbitParams::default()))),
        PolicyKind::Bridge => Err(SimError::invalid("bridge policy has no in-process implementation")),
    }
}

/// Runs one episode to termination, returning its rows and summary.
pub fn run_episode(
    env: &mut Env,
    policy: &mut dyn Policy,
    seed: u64,
    batch: &BatchConfig,
    (obstacles, env_id, episode): (usize, usize, usize),
) -> Result<(Vec<MetricsRow>, EpisodeSummary)> {
    let mut obs = env.reset(seed)?;
    policy.reset(derive_seed(seed, 5), env.d_ref());
    let mut feasible = Vec::new();
    for &label in env.scheduler().labels() {
        feasible.push(feasible_coverage(
            env.scene(),
            label,
            &env.config().camera,
            env.d_ref(),
            batch.band,
            &batch.oracle,
        )?);
    }
    let mut rows = Vec::new();
    let mut curve = Vec::new();
    let mut ret = 0.0;
    loop {
        let action = policy.act(&obs);
        let r = env.step(action)?;
        let coverage = episode_coverage(env, &feasible, batch.band);
        ret += r.reward.total();
        curve.push(coverage);
        rows.push(MetricsRow {
            obstacles,
            env_id,
            episode,
            step: r.info.step,
            time: r.info.time,
            coverage,
            f: r.reward.f,
            v: r.reward.v,
            p: r.reward.p,
            cumulative_f: r.info.coverage,
            active_label: r.info.active_label,
            termination: r.termination.as_str(),
        });
        obs = r.observation;
        if r.termination.is_terminal() {
            let summary = EpisodeSummary {
                obstacles,
                env_id,
                episode,
                seed,
                steps: r.info.step,
                termination: r.termination,
                final_coverage: coverage,
                feasible_faces: feasible.iter().map(|s| s.faces.len()).sum(),
                total_faces: feasible.iter().map(|s| s.face_count).sum(),
                episode_return: ret,
                coverage: curve,
            };
            return Ok((rows, summary));
        }
    }
}

/// Runs every (obstacle count, environment, episode) combination.
/// Environments run in parallel; output order is by obstacle count, then
/// environment, then episode, then step, independent of scheduling.
pub fn run_batch(batch: &BatchConfig) -> Result<BatchResult> {
    batch.validate()?;
    let mut rows = Vec::new();
    let mut episodes = Vec::new();
    let mut reports = Vec::new();
    for &obstacles in &batch.obstacle_counts {
        let mut config = batch.episode.clone();
        config.room.obstacle_count = obstacles;
        let block_seed = derive_seed(batch.master_seed, obstacles as u64);
        let per_env: Vec<(Vec<MetricsRow>, Vec<EpisodeSummary>)> = (0..batch.env_count)
            .into_par_iter()
            .map(|env_id| {
                let mut env = Env::new(config.clone())?;
                let mut policy = make_policy(batch.policy, &config, 0)?;
                let mut rows = Vec::new();
                let mut sums = Vec::new();
                for ep in 0..batch.episodes_per_env {
                    let seed = episode_seed(block_seed, env_id as u64, ep as u64);
                    let (r, s) = run_episode(&mut env, policy.as_mut(), seed, batch, (obstacles, env_id, ep))?;
                    rows.extend(r);
                    sums.push(s);
                }
                Ok((rows, sums))
            })
            .collect::<Result<_>>()?;
        let mut block = Vec::new();
        for (r, s) in per_env {
            rows.extend(r);
            block.extend(s);
        }
        reports.push(summarize(obstacles, &block, config.episode_length, config.dynamics.control_dt));
        episodes.extend(block);
    }
    Ok(BatchResult { rows, episodes, reports })
}

/// Aggregates episode summaries into 1 s coverage bins and termination rates.
pub fn summarize(obstacles: usize, episodes: &[EpisodeSummary], episode_length: f64, control_dt: f64) -> CoverageReport {
    let n = episodes.len();
    let crashes = episodes
        .iter()
        .filter(|e| matches!(e.termination, Termination::Crash | Termination::Fault))
        .count();
    let faults = episodes.iter().filter(|e| e.termination == Termination::Fault).count();
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    let mean_final = if n == 0 {
        0.0
    } else {
        episodes.iter().map(|e| e.final_coverage).sum::<f64>() / n as f64
    };
    let steps_per_bin = (1.0 / control_dt).round().max(1.0) as usize;
    let bin_count = episode_length.ceil() as usize;
    let bins = (1..=bin_count)
        .map(|b| {
            let mut vals: Vec<f64> = episodes
                .iter()
                .filter_map(|e| {
                    let idx = (b * steps_per_bin).min(e.coverage.len());
                    (idx > 0).then(|| e.coverage[idx - 1])
                })
                .collect();
            vals.sort_by(f64::total_cmp);
            let mean = if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            CoverageBin {
                time: b as f64,
                mean,
                p5: percentile(&vals, 0.05),
                p95: percentile(&vals, 0.95),
            }
        })
        .collect();
    CoverageReport {
        obstacles,
        episodes: n,
        mean_final_coverage: mean_final,
        crash_pct: pct(crashes),
        timeout_pct: pct(n - crashes),
        faults,
        bins,
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let io = |e: csv::Error| SimError::io(path, std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

/// Coverage curves, one row per (obstacle count, time bin).
pub fn write_curves_csv(reports: &[CoverageReport], path: &Path) -> Result<()> {
    let io = |e: csv::Error| SimError::io(path, std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["obstacles", "time", "mean", "p5", "p95"]).map_err(io)?;
    for r in reports {
        for b in &r.bins {
            w.write_record([
                r.obstacles.to_string(),
                b.time.to_string(),
                b.mean.to_string(),
                b.p5.to_string(),
                b.p95.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| SimError::io(path, e))
}
