//! Episode replay files: the config and seed, then one record per step.
//!
//! Layout (little-endian): `b"SRLR"`, version u16, seed u64, config length
//! u32, config TOML bytes, then 29-byte records of action 4×f32, reward
//! `f, v, p` 3×f32 and termination code u8.

use std::fs;
use std::path::Path;

use crate::env::{Env, EpisodeConfig, Termination};
use crate::error::{Result, SimError};
use crate::runner::Policy;
use crate::seeding::derive_seed;

const MAGIC: &[u8; 4] = b"SRLR";
const VERSION: u16 = 1;
const RECORD_LEN: usize = 29;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayRecord {
    pub action: [f32; 4],
    pub reward: [f32; 3],
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub config: EpisodeConfig,
    pub seed: u64,
    pub records: Vec<ReplayRecord>,
}

impl Replay {
    pub fn new(config: EpisodeConfig, seed: u64) -> Self {
        Replay {
            config,
            seed,
            records: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config.to_toml_string();
        let mut out = Vec::with_capacity(18 + cfg.len() + RECORD_LEN * self.records.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        for r in &self.records {
            for a in r.action {
                out.extend_from_slice(&a.to_le_bytes());
            }
            for x in r.reward {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.push(r.termination.code());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: String| SimError::parse("replay", m);
        if bytes.len() < 18 || &bytes[..4] != MAGIC {
            return Err(err("bad magic or truncated header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let seed = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let cfg_len = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
        let body = bytes.get(18..18 + cfg_len).ok_or_else(|| err("truncated config".into()))?;
        let text = std::str::from_utf8(body).map_err(|e| err(e.to_string()))?;
        let config = EpisodeConfig::from_toml_str(text)?;
        let rest = &bytes[18 + cfg_len..];
        if rest.len() % RECORD_LEN != 0 {
            return Err(err(format!("{} trailing bytes after the last record", rest.len() % RECORD_LEN)));
        }
        let f32_at = |c: &[u8], i: usize| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().unwrap());
        let mut records = Vec::with_capacity(rest.len() / RECORD_LEN);
        for c in rest.chunks_exact(RECORD_LEN) {
            let termination =
                Termination::from_code(c[28]).ok_or_else(|| err(format!("bad termination code {}", c[28])))?;
            records.push(ReplayRecord {
                action: [f32_at(c, 0), f32_at(c, 1), f32_at(c, 2), f32_at(c, 3)],
                reward: [f32_at(c, 4), f32_at(c, 5), f32_at(c, 6)],
                termination,
            });
        }
        Ok(Replay { config, seed, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| SimError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| SimError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Runs `policy` for one episode from `seed` and records every step.
pub fn record_episode(config: &EpisodeConfig, seed: u64, policy: &mut dyn Policy) -> Result<Replay> {
    let mut env = Env::new(config.clone())?;
    let mut obs = env.reset(seed)?;
    policy.reset(derive_seed(seed, 5), env.d_ref());
    let mut replay = Replay::new(config.clone(), seed);
    loop {
        let action = policy.act(&obs);
        let r = env.step(action)?;
        replay.records.push(ReplayRecord {
            action,
            reward: [r.reward.f as f32, r.reward.v as f32, r.reward.p as f32],
            termination: r.termination,
        });
        if r.termination.is_terminal() {
            return Ok(replay);
        }
        obs = r.observation;
    }
}

/// First step whose re-simulated reward or termination differs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub step: usize,
    pub recorded: ReplayRecord,
    pub replayed: ReplayRecord,
}

/// Re-runs the recorded actions. Returns the environment in its final state
/// and the first mismatch, if any. Rewards are compared as stored (f32 bits).
pub fn verify(replay: &Replay) -> Result<(Env, Option<ReplayMismatch>)> {
    let mut env = Env::new(replay.config.clone())?;
    env.reset(replay.seed)?;
    for (i, rec) in replay.records.iter().enumerate() {
        let r = env.step(rec.action)?;
        let replayed = ReplayRecord {
            action: rec.action,
            reward: [r.reward.f as f32, r.reward.v as f32, r.reward.p as f32],
            termination: r.termination,
        };
        let same_bits = replayed.reward.iter().zip(&rec.reward).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same_bits || replayed.termination != rec.termination {
            return Ok((
                env,
                Some(ReplayMismatch {
                    step: i,
                    recorded: *rec,
                    replayed,
                }),
            ));
        }
    }
    Ok((env, None))
}
