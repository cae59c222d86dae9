//! Scripted baseline policies acting on observations only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EpisodeConfig, Observation};
use crate::geom::Vec3;
use crate::mapping::{local_offset, LOCAL_N};
use crate::sensors::CameraModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Orbit,
    /// An external process drives the environments over the bridge.
    Bridge,
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(PolicyKind::Random),
            "orbit" => Ok(PolicyKind::Orbit),
            "bridge" => Ok(PolicyKind::Bridge),
            _ => Err(format!("unknown policy {s:?} (expected random, orbit or bridge)")),
        }
    }
}

pub trait Policy: Send {
    /// Called at every episode start.
    fn reset(&mut self, seed: u64, d_ref: f64);
    fn act(&mut self, obs: &Observation) -> [f32; 4];
}

/// Uniform actions in `[-1, 1]⁴`.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn reset(&mut self, seed: u64, _d_ref: f64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, _obs: &Observation) -> [f32; 4] {
        std::array::from_fn(|_| self.rng.random_range(-1.0f32..=1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitParams {
    pub search_yaw_rate: f64,
    pub yaw_gain: f64,
    pub range_gain: f64,
    pub max_radial: f64,
    pub strafe_speed: f64,
    pub sweep_speed: f64,
    /// Vertical overshoot beyond the estimated object extent (m).
    pub sweep_margin: f64,
    pub z_gain: f64,
    /// Occupied cells nearer than this shape the command (m).
    pub avoid_radius: f64,
    /// Inside this distance the command is pushed away (m).
    pub push_radius: f64,
    pub push_speed: f64,
    /// Steps without a sighting after which the target estimate is dropped.
    pub forget_after: u32,
}

impl Default for OrbitParams {
    fn default() -> Self {
        OrbitParams {
            search_yaw_rate: 0.8,
            yaw_gain: 1.5,
            range_gain: 1.0,
            max_radial: 0.5,
            strafe_speed: 0.6,
            sweep_speed: 0.04,
            sweep_margin: 0.3,
            z_gain: 1.0,
            avoid_radius: 0.6,
            push_radius: 0.35,
            push_speed: 0.3,
            forget_after: 50,
        }
    }
}

/// Search by spinning and wandering; once the target is seen, hold range
/// `d_ref`, keep it centered, strafe around it and sweep vertically over
/// its estimated height.
pub struct OrbitPolicy {
    params: OrbitParams,
    camera: CameraModel,
    rays: Vec<Vec3>,
    w_max: [f64; 4],
    resolution: f64,
    d_ref: f64,
    rng: ChaCha8Rng,
    // Memory.
    seen: Option<(Vec3, Vec3)>,
    strafe_dir: f64,
    z_target: f64,
    z_dir: f64,
    blocked_steps: u32,
    search_steps: u32,
    lost_steps: u32,
    wander_heading: f64,
}

impl OrbitPolicy {
    pub fn new(config: &EpisodeConfig, params: OrbitParams) -> Self {
        OrbitPolicy {
            params,
            rays: config.camera.pixel_rays(),
            camera: config.camera.clone(),
            w_max: config.w_max,
            resolution: config.map_resolution,
            d_ref: config.reward.d_ref,
            rng: ChaCha8Rng::seed_from_u64(0),
            seen: None,
            strafe_dir: 1.0,
            z_target: f64::NAN,
            z_dir: 1.0,
            blocked_steps: 0,
            search_steps: 0,
            lost_steps: 0,
            wander_heading: 0.0,
        }
    }

    /// World-frame bounds of every target point observed so far.
    pub fn target_estimate(&self) -> Option<(Vec3, Vec3)> {
        self.seen
    }

    /// Body-frame velocity and yaw-rate command before scaling.
    pub fn command(&mut self, obs: &Observation) -> (Vec3, f64) {
        let p = Vec3::new(obs.state[0], obs.state[1], obs.state[2]);
        let [qx, qy, qz, qw] = [obs.state[3], obs.state[4], obs.state[5], obs.state[6]];
        let yaw = (2.0 * (qw * qz + qx * qy)).atan2(1.0 - 2.0 * (qy * qy + qz * qz));
        let (s, c) = yaw.sin_cos();
        let to_world = |v: &Vec3| Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
        let cam_pos = p + to_world(&self.camera.offset.position);

        let mut depths = Vec::new();
        let mut col_sum = 0.0;
        for (i, &d) in obs.masked_depth.iter().enumerate() {
            if d > 0.0 {
                depths.push(d);
                col_sum += (i % self.camera.width) as f64 + 0.5;
                let ray = self.camera.offset.orientation * self.rays[i];
                let w = cam_pos + to_world(&(ray * d));
                self.seen = Some(match self.seen {
                    None => (w, w),
                    Some((lo, hi)) => (lo.inf(&w), hi.sup(&w)),
                });
            }
        }

        let prm = self.params;
        if depths.is_empty() {
            self.lost_steps += 1;
            // The target may have changed (label schedule); forget stale memory.
            if self.lost_steps > prm.forget_after {
                self.seen = None;
            }
        } else {
            self.lost_steps = 0;
        }
        let mut yaw_rate;
        let mut v = Vec3::zeros();
        if !depths.is_empty() {
            self.search_steps = 0;
            let centroid = col_sum / depths.len() as f64;
            let half = 0.5 * self.camera.width as f64;
            yaw_rate = -prm.yaw_gain * (centroid - half) / half;
            let mid = depths.len() / 2;
            let (_, &mut median, _) = depths.select_nth_unstable_by(mid, f64::total_cmp);
            let err = median - self.d_ref;
            v.x = (prm.range_gain * err).clamp(-prm.max_radial, prm.max_radial);
            v.y = self.strafe_dir * prm.strafe_speed * (1.0 - err.abs() / 0.5).max(0.0);
        } else if let Some((lo, hi)) = self.seen {
            // Lost sight: turn back toward the estimated target and keep range.
            let center = (lo + hi) * 0.5;
            let to = center - p;
            let bearing = to.y.atan2(to.x) - yaw;
            let bearing = bearing.sin().atan2(bearing.cos());
            yaw_rate = (prm.yaw_gain * bearing).clamp(-1.0, 1.0);
            let radius = 0.5 * ((hi.x - lo.x).max(hi.y - lo.y)) + self.d_ref;
            let horiz = (to.x * to.x + to.y * to.y).sqrt();
            if bearing.abs() < 0.5 {
                v.x = (prm.range_gain * (horiz - radius)).clamp(-prm.max_radial, prm.max_radial);
            }
        } else {
            self.search_steps += 1;
            yaw_rate = prm.search_yaw_rate;
            // After each full turn without a sighting, wander for a while.
            let turn_steps = (std::f64::consts::TAU / prm.search_yaw_rate / 0.1) as u32;
            let phase = self.search_steps % (turn_steps + 30);
            if phase == turn_steps {
                self.wander_heading = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            }
            if phase >= turn_steps {
                let h = self.wander_heading - yaw;
                v.x = 0.5 * h.cos();
                v.y = 0.5 * h.sin();
                yaw_rate = 0.0;
            }
        }

        // Vertical: sweep over the estimated extent, or hover at mid height.
        if self.z_target.is_nan() {
            self.z_target = p.z;
        }
        let (z_lo, z_hi) = match self.seen {
            Some((lo, hi)) => (lo.z - prm.sweep_margin, hi.z + prm.sweep_margin),
            None => (1.0, 2.0),
        };
        self.z_target += self.z_dir * prm.sweep_speed * 0.1;
        if self.z_target > z_hi {
            self.z_target = z_hi;
            self.z_dir = -1.0;
        } else if self.z_target < z_lo {
            self.z_target = z_lo;
            self.z_dir = 1.0;
        }
        v.z = (prm.z_gain * (self.z_target - p.z)).clamp(-prm.max_radial, prm.max_radial);

        let wanted_strafe = v.y;
        let wanted_climb = v.z;
        self.avoid(obs, &mut v);
        if wanted_climb.abs() > 0.05 && v.z * wanted_climb < 0.25 * wanted_climb * wanted_climb {
            // Vertical sweep blocked by floor, ceiling or the target itself.
            self.z_dir = -wanted_climb.signum();
            self.z_target = p.z;
        }
        if wanted_strafe.abs() > 0.1 && v.y * wanted_strafe < 0.5 * wanted_strafe * wanted_strafe {
            self.blocked_steps += 1;
            if self.blocked_steps >= 10 {
                self.strafe_dir = -self.strafe_dir;
                self.blocked_steps = 0;
            }
        } else {
            self.blocked_steps = 0;
        }
        if yaw_rate.is_nan() {
            yaw_rate = 0.0;
        }
        (v, yaw_rate)
    }

    /// Removes the component of `v` toward the nearest occupied cell of
    /// each surface within `avoid_radius`, and pushes away from those inside
    /// `push_radius`.
    fn avoid(&self, obs: &Observation, v: &mut Vec3) {
        let reach = (self.params.avoid_radius / self.resolution).ceil() as usize;
        let c = LOCAL_N / 2;
        let range = c.saturating_sub(reach)..=(c + reach).min(LOCAL_N - 1);
        let mut near: Vec<(f64, Vec3)> = Vec::new();
        for i in range.clone() {
            for j in range.clone() {
                for k in range.clone() {
                    if obs.local_occupancy[(i * LOCAL_N + j) * LOCAL_N + k] != 1 {
                        continue;
                    }
                    let off = local_offset(i, j, k, self.resolution);
                    let d = off.norm();
                    if d > 0.0 && d <= self.params.avoid_radius {
                        near.push((d, off / d));
                    }
                }
            }
        }
        if near.is_empty() {
            return;
        }
        // One representative per surface: a cell is kept only if no nearer
        // kept cell lies within 60 degrees of it.
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut kept: Vec<(f64, Vec3)> = Vec::new();
        for (d, u) in near {
            if kept.iter().all(|(_, k)| k.dot(&u) < 0.5) {
                kept.push((d, u));
            }
        }
        kept.reverse();
        let near = kept;
        let block = |v: &mut Vec3, u: &Vec3| {
            let toward = v.dot(u);
            if toward > 0.0 {
                *v -= u * toward;
            }
        };
        for (_, u) in &near {
            block(v, u);
        }
        let pr = self.params.push_radius;
        let push: Vec3 = near
            .iter()
            .filter(|(d, _)| *d < pr)
            .map(|(d, u)| -u * ((pr - d) / pr))
            .sum();
        if push.norm() > 1e-9 {
            *v += push.normalize() * self.params.push_speed;
        }
        // The push may lean toward a cell on the far side; the nearest wins.
        block(v, &near[near.len() - 1].1);
    }

    /// Scales a body-frame command into `[-1, 1]⁴`. The linear part is
    /// shrunk uniformly so its direction is preserved.
    pub fn to_action(&self, v: &Vec3, yaw_rate: f64) -> [f32; 4] {
        let mut s: f64 = 1.0;
        for i in 0..3 {
            if v[i].abs() > self.w_max[i] {
                s = s.min(self.w_max[i] / v[i].abs());
            }
        }
        let norm = |x: f64, w: f64| if w > 0.0 { (x / w).clamp(-1.0, 1.0) } else { 0.0 };
        [
            norm(v.x * s, self.w_max[0]) as f32,
            norm(v.y * s, self.w_max[1]) as f32,
            norm(v.z * s, self.w_max[2]) as f32,
            norm(yaw_rate, self.w_max[3]) as f32,
        ]
    }
}

impl Policy for OrbitPolicy {
    fn reset(&mut self, seed: u64, d_ref: f64) {
        self.d_ref = d_ref;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.seen = None;
        self.strafe_dir = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
        self.z_target = f64::NAN;
        self.z_dir = 1.0;
        self.blocked_steps = 0;
        self.search_steps = 0;
        self.lost_steps = 0;
        self.wander_heading = 0.0;
    }

    fn act(&mut self, obs: &Observation) -> [f32; 4] {
        let (v, yaw_rate) = self.command(obs);
        self.to_action(&v, yaw_rate)
    }
}
