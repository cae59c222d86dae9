//! Wall-clock throughput of the full step pipeline.

use std::time::Instant;

use rayon::prelude::*;

use crate::env::{Env, EpisodeConfig, StageTimings};
use crate::error::Result;
use crate::runner::policy::{Policy, RandomPolicy};
use crate::seeding::{derive_seed, episode_seed};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Throughput {
    pub steps: u64,
    pub seconds: f64,
}

impl Throughput {
    pub fn steps_per_sec(&self) -> f64 {
        if self.steps == 0 || self.seconds <= 0.0 {
            0.0
        } else {
            self.steps as f64 / self.seconds
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub env_count: usize,
    pub steps_per_env: u64,
    pub threads: usize,
    /// One environment stepping alone.
    pub single: Throughput,
    pub single_timings: StageTimings,
    /// All environments stepping concurrently.
    pub parallel: Throughput,
    pub parallel_timings: StageTimings,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "envs {}  steps/env {}  threads {}\nsingle   {:>10.1} steps/s ({} steps in {:.3} s)\nparallel {:>10.1} steps/s ({} steps in {:.3} s)\n",
            self.env_count,
            self.steps_per_env,
            self.threads,
            self.single.steps_per_sec(),
            self.single.steps,
            self.single.seconds,
            self.parallel.steps_per_sec(),
            self.parallel.steps,
            self.parallel.seconds,
        );
        s.push_str("stage timings per step (parallel run, summed over threads):\n");
        let n = self.parallel_timings.steps.max(1) as f64;
        let total = self.parallel_timings.total().as_secs_f64();
        for (name, d) in self.parallel_timings.stages() {
            let share = if total > 0.0 { 100.0 * d.as_secs_f64() / total } else { 0.0 };
            s.push_str(&format!("  {name:<12} {:>9.1} us  {share:>5.1}%\n", d.as_secs_f64() * 1e6 / n));
        }
        s
    }
}

/// Steps `env` with random actions, resetting on termination.
fn drive(env: &mut Env, steps: u64, seed: u64) -> Result<u64> {
    let mut policy = RandomPolicy::new(derive_seed(seed, 9));
    let mut episode = 0u64;
    let mut obs = env.reset(episode_seed(seed, 0, episode))?;
    env.reset_timings();
    for _ in 0..steps {
        let r = env.step(policy.act(&obs))?;
        obs = r.observation;
        if r.termination.is_terminal() {
            episode += 1;
            obs = env.reset(episode_seed(seed, 0, episode))?;
        }
    }
    Ok(steps)
}

/// Runs one environment for `steps` steps, then `env_count` environments
/// for `steps` steps each in parallel.
pub fn bench(config: &EpisodeConfig, env_count: usize, steps: u64, seed: u64) -> Result<BenchReport> {
    let mut env = Env::new(config.clone())?;
    let t = Instant::now();
    let n = if steps > 0 { drive(&mut env, steps, seed)? } else { 0 };
    let single = Throughput {
        steps: n,
        seconds: t.elapsed().as_secs_f64(),
    };
    let single_timings = *env.timings();

    let mut envs = (0..env_count)
        .map(|_| Env::new(config.clone()))
        .collect::<Result<Vec<_>>>()?;
    let t = Instant::now();
    let counts = envs
        .par_iter_mut()
        .enumerate()
        .map(|(i, env)| if steps > 0 { drive(env, steps, derive_seed(seed, i as u64 + 1)) } else { Ok(0) })
        .collect::<Result<Vec<u64>>>()?;
    let parallel = Throughput {
        steps: counts.iter().sum(),
        seconds: t.elapsed().as_secs_f64(),
    };
    let mut parallel_timings = StageTimings::default();
    for env in &envs {
        parallel_timings.add(env.timings());
    }
    Ok(BenchReport {
        env_count,
        steps_per_env: steps,
        threads: rayon::current_num_threads(),
        single,
        single_timings,
        parallel,
        parallel_timings,
    })
}
