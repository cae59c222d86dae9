//! The inspection episode: observation assembly, 10 Hz control over 100 Hz
//! physics, termination and semantic-label scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    perturb_state_observation, scale_action, substep, DynamicsParams, NoiseParams, RobotState, ACTION_DIM,
    STATE_DIM,
};
use crate::error::{Result, SimError};
use crate::geom::Vec3;
use crate::mapping::{extract_local, GlobalOccupancy, LocalAlignment, VisitGrid};
use crate::reward::{
    collision_penalty, focus_mask, semantic_search_reward, FaceLedger, RewardBreakdown, RewardParams,
};
use crate::scene::{generate_room, import_scene, RoomSpec, Scene};
use crate::seeding::derive_seed;
use crate::sensors::{
    apply_depth_noise, apply_mask_dropout, lidar_scan_with_rays, render_with_rays, CameraModel, DepthImage, Frame,
    LidarModel, SegMask,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub label: u32,
    /// Inspection time once the timer has started (s).
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Episode length (s).
    pub episode_length: f64,
    pub room: RoomSpec,
    /// Load this scene manifest instead of generating rooms.
    pub scene: Option<PathBuf>,
    /// When set, `d_ref` is drawn uniformly from this range at every reset.
    pub d_ref_range: Option<[f64; 2]>,
    pub w_max: [f64; ACTION_DIM],
    pub dynamics: DynamicsParams,
    pub noise: NoiseParams,
    pub reward: RewardParams,
    pub camera: CameraModel,
    pub lidar: LidarModel,
    pub map_resolution: f64,
    pub local_alignment: LocalAlignment,
    /// Labels to inspect in order. Empty: the lowest semantic label, no switching.
    pub semantic_schedule: Vec<ScheduleEntry>,
    /// Half-width of the depth band around `d_ref` that starts the inspection timer (m).
    pub schedule_margin: f64,
    pub spawn_clearance: f64,
    pub spawn_attempts: u32,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            episode_length: 90.0,
            room: RoomSpec::default(),
            scene: None,
            d_ref_range: None,
            w_max: [1.0; ACTION_DIM],
            dynamics: DynamicsParams::default(),
            noise: NoiseParams::default(),
            reward: RewardParams::default(),
            camera: CameraModel::default(),
            lidar: LidarModel::default(),
            map_resolution: 0.1,
            local_alignment: LocalAlignment::Yaw,
            semantic_schedule: Vec::new(),
            schedule_margin: 0.2,
            spawn_clearance: 0.5,
            spawn_attempts: 10_000,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: EpisodeConfig = toml::from_str(text).map_err(|e| SimError::parse("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SimError::Parse { message, .. } => SimError::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.episode_length.is_finite() && self.episode_length > 0.0) {
            return Err(SimError::invalid("episode_length must be positive"));
        }
        if self.scene.is_none() {
            self.room.validate()?;
        }
        if let Some([a, b]) = self.d_ref_range {
            if !(a > 0.0 && a <= b && b.is_finite()) {
                return Err(SimError::invalid("d_ref_range must satisfy 0 < lo <= hi"));
            }
        }
        if self.w_max.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SimError::invalid("w_max entries must be non-negative"));
        }
        self.dynamics.validate()?;
        self.noise.validate()?;
        self.reward.validate()?;
        self.camera.validate()?;
        self.lidar.validate()?;
        if !(self.map_resolution.is_finite() && self.map_resolution > 0.0) {
            return Err(SimError::invalid("map_resolution must be positive"));
        }
        for e in &self.semantic_schedule {
            if !(e.budget.is_finite() && e.budget > 0.0) || e.label == 0 {
                return Err(SimError::invalid(format!("bad schedule entry {e:?}")));
            }
        }
        if !(self.schedule_margin >= 0.0 && self.spawn_clearance >= 0.0) || self.spawn_attempts == 0 {
            return Err(SimError::invalid("schedule_margin, spawn_clearance and spawn_attempts out of range"));
        }
        Ok(())
    }

    /// Number of control steps in an episode.
    pub fn max_steps(&self) -> u64 {
        (self.episode_length / self.dynamics.control_dt).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Running,
    Crash,
    Timeout,
    /// Non-finite dynamics; treated as a crash but counted separately.
    Fault,
}

impl Termination {
    pub fn is_terminal(self) -> bool {
        self != Termination::Running
    }

    /// Code used in replay files and metrics.
    pub fn code(self) -> u8 {
        match self {
            Termination::Running => 0,
            Termination::Crash => 1,
            Termination::Timeout => 2,
            Termination::Fault => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Termination::Running,
            1 => Termination::Crash,
            2 => Termination::Timeout,
            3 => Termination::Fault,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Running => "running",
            Termination::Crash => "crash",
            Termination::Timeout => "timeout",
            Termination::Fault => "fault",
        }
    }
}

/// What the policy sees each step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observation {
    /// Noisy `p, q (x, y, z, w), v, ω`.
    pub state: [f64; STATE_DIM],
    pub prev_action: [f64; ACTION_DIM],
    /// Noisy depth times the (possibly corrupted) semantic mask, row-major.
    pub masked_depth: Vec<f64>,
    /// Local occupancy, `-1` unknown, `0` free, `1` occupied.
    pub local_occupancy: Vec<i8>,
    pub local_svs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub step: u64,
    pub time: f64,
    /// Coverage functional of the active label's ledger.
    pub coverage: f64,
    pub active_label: u32,
    pub n_t: u64,
    /// Mesh distance at the final pose, capped at 1 m.
    pub clearance: f64,
    pub action_clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub termination: Termination,
    pub info: StepInfo,
}

/// Accumulated wall time per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub dynamics: Duration,
    pub lidar: Duration,
    pub map: Duration,
    pub render: Duration,
    pub reward: Duration,
    pub extract: Duration,
    pub observation: Duration,
    pub steps: u64,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.dynamics + self.lidar + self.map + self.render + self.reward + self.extract + self.observation
    }

    pub fn add(&mut self, other: &StageTimings) {
        self.dynamics += other.dynamics;
        self.lidar += other.lidar;
        self.map += other.map;
        self.render += other.render;
        self.reward += other.reward;
        self.extract += other.extract;
        self.observation += other.observation;
        self.steps += other.steps;
    }

    pub fn stages(&self) -> [(&'static str, Duration); 7] {
        [
            ("dynamics", self.dynamics),
            ("lidar", self.lidar),
            ("map", self.map),
            ("render", self.render),
            ("reward", self.reward),
            ("extract", self.extract),
            ("observation", self.observation),
        ]
    }
}

/// One label's inspection window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEvent {
    pub label: u32,
    /// Step whose frame first showed the label inside the depth band.
    pub timer_start: Option<u64>,
    /// Step at which the next label became active.
    pub switched_at: Option<u64>,
}

/// Walks a list of labels, starting each label's timer when it first
/// appears at inspection range and moving on once its budget is spent.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelScheduler {
    labels: Vec<u32>,
    budgets: Vec<Option<u64>>,
    active: usize,
    events: Vec<ScheduleEvent>,
    band: (f64, f64),
}

impl LabelScheduler {
    /// `budgets` are in control steps; `None` never expires.
    pub fn new(labels: Vec<u32>, budgets: Vec<Option<u64>>, d_ref: f64, margin: f64) -> Self {
        assert_eq!(labels.len(), budgets.len());
        assert!(!labels.is_empty(), "schedule must not be empty");
        let events = vec![ScheduleEvent {
            label: labels[0],
            timer_start: None,
            switched_at: None,
        }];
        LabelScheduler {
            labels,
            budgets,
            active: 0,
            events,
            band: (d_ref - margin, d_ref + margin),
        }
    }

    pub fn active_label(&self) -> u32 {
        self.labels[self.active]
    }

    /// Scheduled labels in inspection order.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn events(&self) -> &[ScheduleEvent] {
        &self.events
    }

    /// Feeds the frame rendered after control step `step`. Returns the new
    /// active label if it changed.
    pub fn advance(&mut self, mask: &SegMask, depth: &DepthImage, step: u64) -> Option<u32> {
        let ev = self.events.last_mut().expect("one event per visited label");
        if ev.timer_start.is_none() {
            let (lo, hi) = self.band;
            let in_band = mask
                .values
                .iter()
                .zip(&depth.values)
                .any(|(&m, &d)| m != 0 && d >= lo && d <= hi);
            if in_band {
                ev.timer_start = Some(step);
            }
        }
        let (Some(start), Some(budget)) = (ev.timer_start, self.budgets[self.active]) else {
            return None;
        };
        if step < start + budget || self.active + 1 >= self.labels.len() {
            return None;
        }
        ev.switched_at = Some(step);
        self.active += 1;
        let label = self.labels[self.active];
        self.events.push(ScheduleEvent {
            label,
            timer_start: None,
            switched_at: None,
        });
        Some(label)
    }
}

/// A single inspection environment.
pub struct Env {
    config: EpisodeConfig,
    fixed_scene: Option<Arc<Scene>>,
    scene: Arc<Scene>,
    camera_rays: Vec<Vec3>,
    lidar_rays: Vec<Vec3>,
    focus: SegMask,
    state: RobotState,
    occupancy: GlobalOccupancy,
    visits: VisitGrid,
    ledgers: BTreeMap<u32, FaceLedger>,
    scheduler: LabelScheduler,
    reward_params: RewardParams,
    dynamics_rng: ChaCha8Rng,
    obs_rng: ChaCha8Rng,
    step: u64,
    max_steps: u64,
    termination: Termination,
    prev_action: [f64; ACTION_DIM],
    last_frame: Option<Frame>,
    episode_seed: u64,
    timings: StageTimings,
}

impl Env {
    pub fn new(config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        let fixed_scene = match &config.scene {
            Some(path) => Some(Arc::new(import_scene(path)?)),
            None => None,
        };
        Self::build(config, fixed_scene)
    }

    /// Uses `scene` for every episode instead of generating rooms.
    pub fn with_scene(config: EpisodeConfig, scene: Arc<Scene>) -> Result<Self> {
        config.validate()?;
        Self::build(config, Some(scene))
    }

    fn build(config: EpisodeConfig, fixed_scene: Option<Arc<Scene>>) -> Result<Self> {
        let scene = match &fixed_scene {
            Some(s) => s.clone(),
            None => {
                let mut room = config.room.clone();
                room.seed = config.seed;
                Arc::new(generate_room(&room)?)
            }
        };
        Ok(Env {
            camera_rays: config.camera.pixel_rays(),
            lidar_rays: config.lidar.ray_directions(),
            focus: focus_mask(config.camera.width, config.camera.height, config.reward.focus_fraction),
            occupancy: GlobalOccupancy::new(scene.bounds(), config.map_resolution),
            visits: VisitGrid::new(scene.bounds(), config.map_resolution),
            state: RobotState::at_rest(scene.bounds().center(), 0.0),
            ledgers: BTreeMap::new(),
            scheduler: LabelScheduler::new(vec![1], vec![None], 1.0, 0.0),
            reward_params: config.reward,
            dynamics_rng: ChaCha8Rng::seed_from_u64(0),
            obs_rng: ChaCha8Rng::seed_from_u64(0),
            step: 0,
            max_steps: config.max_steps(),
            termination: Termination::Timeout,
            prev_action: [0.0; ACTION_DIM],
            last_frame: None,
            episode_seed: config.seed,
            timings: StageTimings::default(),
            fixed_scene,
            scene,
            config,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn occupancy(&self) -> &GlobalOccupancy {
        &self.occupancy
    }

    pub fn visits(&self) -> &VisitGrid {
        &self.visits
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dynamics.control_dt
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn episode_seed(&self) -> u64 {
        self.episode_seed
    }

    pub fn d_ref(&self) -> f64 {
        self.reward_params.d_ref
    }

    pub fn reward_params(&self) -> &RewardParams {
        &self.reward_params
    }

    pub fn active_label(&self) -> u32 {
        self.scheduler.active_label()
    }

    pub fn scheduler(&self) -> &LabelScheduler {
        &self.scheduler
    }

    /// Ledgers of every label that has been active this episode.
    pub fn ledgers(&self) -> &BTreeMap<u32, FaceLedger> {
        &self.ledgers
    }

    /// Noise-free frame from the last reset or step.
    pub fn last_frame(&self) -> Option<&Frame> {
        self.last_frame.as_ref()
    }

    pub fn timings(&self) -> &StageTimings {
        &self.timings
    }

    pub fn reset_timings(&mut self) {
        self.timings = StageTimings::default();
    }

    /// Starts an episode. The room (unless a fixed scene is in use), spawn
    /// pose, `d_ref` draw and all noise streams derive from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.episode_seed = seed;
        if self.fixed_scene.is_none() {
            let mut room = self.config.room.clone();
            room.seed = seed;
            let scene = generate_room(&room)?;
            if scene.bounds() != self.scene.bounds() {
                self.occupancy = GlobalOccupancy::new(scene.bounds(), self.config.map_resolution);
                self.visits = VisitGrid::new(scene.bounds(), self.config.map_resolution);
            }
            self.scene = Arc::new(scene);
        }
        self.occupancy.clear();
        self.visits.clear();

        let mut spawn_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        self.dynamics_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
        self.obs_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
        let mut dref_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4));

        self.reward_params = self.config.reward;
        if let Some([lo, hi]) = self.config.d_ref_range {
            self.reward_params.d_ref = if lo < hi { dref_rng.random_range(lo..=hi) } else { lo };
        }

        let (labels, budgets) = self.schedule_lists()?;
        let dt = self.config.dynamics.control_dt;
        let budgets = budgets.into_iter().map(|b| b.map(|s| (s / dt).round() as u64)).collect();
        self.scheduler = LabelScheduler::new(labels, budgets, self.reward_params.d_ref, self.config.schedule_margin);
        self.ledgers.clear();
        self.open_ledger(self.scheduler.active_label())?;

        self.state = self.spawn(&mut spawn_rng)?;
        self.step = 0;
        self.termination = Termination::Running;
        self.prev_action = [0.0; ACTION_DIM];

        let scan = lidar_scan_with_rays(&self.scene, &self.config.lidar, &self.lidar_rays, &self.state.pose());
        self.occupancy.integrate_pointcloud(&scan);
        self.visits.record_visit(&self.state.p);
        let frame = self.render();
        let local = extract_local(&self.occupancy, &self.visits, &self.state.pose(), self.config.local_alignment);
        let obs = self.observe(&frame, local.occupancy, local.svs);
        self.last_frame = Some(frame);
        Ok(obs)
    }

    fn schedule_lists(&self) -> Result<(Vec<u32>, Vec<Option<f64>>)> {
        if self.config.semantic_schedule.is_empty() {
            let first = *self
                .scene
                .semantic_labels()
                .first()
                .ok_or_else(|| SimError::invalid("scene has no semantic object"))?;
            return Ok((vec![first], vec![None]));
        }
        let mut labels = Vec::new();
        let mut budgets = Vec::new();
        for e in &self.config.semantic_schedule {
            if self.scene.object_for_label(e.label).is_none() {
                return Err(SimError::invalid(format!("schedule label {} not in scene", e.label)));
            }
            labels.push(e.label);
            budgets.push(Some(e.budget));
        }
        Ok((labels, budgets))
    }

    fn open_ledger(&mut self, label: u32) -> Result<()> {
        let id = self
            .scene
            .object_for_label(label)
            .ok_or_else(|| SimError::invalid(format!("label {label} not in scene")))?;
        let faces = self.scene.objects()[id].mesh.face_count();
        self.ledgers
            .entry(label)
            .or_insert_with(|| FaceLedger::new(id as u32, faces, &self.reward_params));
        Ok(())
    }

    fn spawn(&self, rng: &mut ChaCha8Rng) -> Result<RobotState> {
        let b = self.scene.bounds();
        let c = self.config.spawn_clearance;
        let z_margin = c.max(0.5);
        let lo = Vec3::new(b.min.x + c, b.min.y + c, b.min.z + z_margin);
        let hi = Vec3::new(b.max.x - c, b.max.y - c, b.max.z - z_margin);
        if (0..3).any(|i| lo[i] > hi[i]) {
            return Err(SimError::Generation {
                seed: self.episode_seed,
                reason: "room too small for spawn clearance".into(),
            });
        }
        for _ in 0..self.config.spawn_attempts {
            let p = Vec3::new(
                rng.random_range(lo.x..=hi.x),
                rng.random_range(lo.y..=hi.y),
                rng.random_range(lo.z..=hi.z),
            );
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            if self.scene.distance_to_surface(&p, c) >= c && !self.scene.is_inside_solid(&p) {
                return Ok(RobotState::at_rest(p, yaw));
            }
        }
        Err(SimError::Generation {
            seed: self.episode_seed,
            reason: format!("no spawn pose with {c} m clearance after {} attempts", self.config.spawn_attempts),
        })
    }

    fn render(&mut self) -> Frame {
        let t = Instant::now();
        let frame = render_with_rays(
            &self.scene,
            &self.config.camera,
            &self.camera_rays,
            &self.state.pose(),
            Some(self.scheduler.active_label()),
        );
        self.timings.render += t.elapsed();
        frame
    }

    fn observe(&mut self, frame: &Frame, local_occupancy: Vec<i8>, local_svs: Vec<f64>) -> Observation {
        let t = Instant::now();
        let noise = &self.config.noise;
        let state = perturb_state_observation(&self.state, noise, &mut self.obs_rng).to_array();
        let depth = apply_depth_noise(&frame.depth, &mut self.obs_rng, noise.depth_k_sigma);
        let mask = apply_mask_dropout(&frame.mask, &mut self.obs_rng, noise.mask_dropout);
        let masked_depth = depth
            .values
            .iter()
            .zip(&mask.values)
            .map(|(&d, &m)| if m != 0 { d } else { 0.0 })
            .collect();
        self.timings.observation += t.elapsed();
        Observation {
            state,
            prev_action: self.prev_action,
            masked_depth,
            local_occupancy,
            local_svs,
        }
    }

    /// Advances one control step. Actions are clamped into `[-1, 1]`.
    pub fn step(&mut self, action: [f32; ACTION_DIM]) -> Result<StepResult> {
        if self.last_frame.is_none() {
            return Err(SimError::State("step called before reset".into()));
        }
        if self.termination.is_terminal() {
            return Err(SimError::State(format!(
                "step called on a terminated episode ({})",
                self.termination.as_str()
            )));
        }
        let a = action.map(f64::from);
        let (cmd, clamped) = scale_action(&a, &self.config.w_max);

        let t = Instant::now();
        let radius = self.config.dynamics.collision_radius;
        let mut outcome = Termination::Running;
        let mut clearance = 1.0;
        for _ in 0..self.config.dynamics.substeps() {
            match substep(
                &self.state,
                &cmd,
                &self.config.dynamics,
                self.config.noise.wrench_std,
                &mut self.dynamics_rng,
            ) {
                Ok(s) => self.state = s,
                Err(SimError::DynamicsFault(msg)) => {
                    log::warn!("episode {}: {msg}", self.episode_seed);
                    outcome = Termination::Fault;
                    break;
                }
                Err(e) => return Err(e),
            }
            clearance = self.scene.distance_to_surface(&self.state.p, 1.0);
            // A substep moves far less than the radius, so the body cannot
            // pass through a surface between checks.
            if clearance <= radius {
                outcome = Termination::Crash;
                break;
            }
        }
        self.timings.dynamics += t.elapsed();
        self.step += 1;
        self.prev_action = a.map(|x| if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 });

        let pose = self.state.pose();
        let t = Instant::now();
        let scan = lidar_scan_with_rays(&self.scene, &self.config.lidar, &self.lidar_rays, &pose);
        self.timings.lidar += t.elapsed();
        let t = Instant::now();
        self.occupancy.integrate_pointcloud(&scan);
        self.visits.record_visit(&self.state.p);
        self.timings.map += t.elapsed();

        let frame = self.render();

        let t = Instant::now();
        let label = self.scheduler.active_label();
        let ledger = self.ledgers.get_mut(&label).expect("active label has a ledger");
        let f = ledger.update(&frame.faces, &frame.depth, &self.focus)?;
        let coverage = ledger.coverage();
        self.timings.reward += t.elapsed();

        let t = Instant::now();
        let local = extract_local(&self.occupancy, &self.visits, &pose, self.config.local_alignment);
        self.timings.extract += t.elapsed();

        let t = Instant::now();
        let v = semantic_search_reward(local.n_t, &self.reward_params);
        let p = collision_penalty(&local.occupancy, self.config.map_resolution, self.reward_params.d_coll);
        if let Some(next) = self.scheduler.advance(&frame.mask, &frame.depth, self.step) {
            self.open_ledger(next)?;
        }
        self.timings.reward += t.elapsed();

        if outcome == Termination::Running && self.step >= self.max_steps {
            outcome = Termination::Timeout;
        }
        self.termination = outcome;

        let observation = self.observe(&frame, local.occupancy, local.svs);
        self.last_frame = Some(frame);
        self.timings.steps += 1;
        Ok(StepResult {
            observation,
            reward: RewardBreakdown { f, v, p },
            termination: outcome,
            info: StepInfo {
                step: self.step,
                time: self.time(),
                coverage,
                active_label: label,
                n_t: local.n_t,
                clearance,
                action_clamped: clamped,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> EpisodeConfig {
        EpisodeConfig {
            episode_length: 2.0,
            room: RoomSpec {
                length: 6.0,
                width: 6.0,
                height: 3.0,
                obstacle_count: 0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn mask_and_depth(hit: Option<f64>) -> (SegMask, DepthImage) {
        let mut mask = SegMask {
            width: 2,
            height: 1,
            values: vec![0, 0],
        };
        let mut depth = DepthImage::zeros(2, 1, 10.0);
        depth.values[0] = 0.4;
        if let Some(d) = hit {
            mask.values[1] = 1;
            depth.values[1] = d;
        }
        (mask, depth)
    }

    #[test]
    fn config_toml_roundtrip() {
        let cfg = small_config();
        let text = cfg.to_toml_string();
        assert_eq!(EpisodeConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = EpisodeConfig::from_toml_str("episode_length = 30.0\n[room]\nobstacle_count = 4\n").unwrap();
        assert_eq!(partial.episode_length, 30.0);
        assert_eq!(partial.room.obstacle_count, 4);
        assert_eq!(partial.reward, RewardParams::default());
        assert!(EpisodeConfig::from_toml_str("bogus_key = 1").is_err());
        assert!(EpisodeConfig::from_toml_str("episode_length = -1.0").is_err());
    }

    #[test]
    fn same_seed_same_first_observation() {
        let mut a = Env::new(small_config()).unwrap();
        let mut b = Env::new(small_config()).unwrap();
        assert_eq!(a.reset(5).unwrap(), b.reset(5).unwrap());
        assert_ne!(a.reset(6).unwrap(), b.reset(5).unwrap());
    }

    #[test]
    fn observation_shapes_and_masking() {
        let mut env = Env::new(small_config()).unwrap();
        let obs = env.reset(1).unwrap();
        assert_eq!(obs.masked_depth.len(), 96 * 54);
        assert_eq!(obs.local_occupancy.len(), 21 * 21 * 21);
        assert_eq!(obs.local_svs.len(), 21 * 21 * 21);
        assert_eq!(obs.prev_action, [0.0; 4]);
        let frame = env.last_frame().unwrap();
        for (d, m) in obs.masked_depth.iter().zip(&frame.mask.values) {
            if *m == 0 {
                assert_eq!(*d, 0.0);
            }
        }
    }

    #[test]
    fn hover_runs_to_timeout() {
        let mut cfg = small_config();
        cfg.noise = NoiseParams::none();
        let mut env = Env::new(cfg).unwrap();
        env.reset(3).unwrap();
        let mut last_v = f64::INFINITY;
        for k in 1..=20 {
            let r = env.step([0.0; 4]).unwrap();
            assert!(r.reward.v < last_v || k == 1);
            assert!(r.reward.v > 0.0 && r.reward.v <= 0.1);
            last_v = r.reward.v;
            let expect = if k == 20 { Termination::Timeout } else { Termination::Running };
            assert_eq!(r.termination, expect, "step {k}");
        }
        assert!(matches!(env.step([0.0; 4]), Err(SimError::State(_))));
    }

    #[test]
    fn step_before_reset_is_rejected() {
        let mut env = Env::new(small_config()).unwrap();
        assert!(matches!(env.step([0.0; 4]), Err(SimError::State(_))));
    }

    #[test]
    fn flying_into_a_wall_crashes() {
        let mut cfg = small_config();
        cfg.episode_length = 60.0;
        cfg.noise = NoiseParams::none();
        let mut env = Env::new(cfg).unwrap();
        env.reset(9).unwrap();
        let mut end = None;
        for _ in 0..600 {
            let r = env.step([0.0, 0.0, -1.0, 0.0]).unwrap();
            if r.termination.is_terminal() {
                end = Some(r);
                break;
            }
        }
        let r = end.expect("episode ended");
        assert_eq!(r.termination, Termination::Crash);
        assert!(r.info.clearance <= env.config().dynamics.collision_radius);
    }

    #[test]
    fn scheduler_never_switches_without_sighting() {
        let mut s = LabelScheduler::new(vec![1, 2], vec![Some(5), Some(5)], 1.0, 0.2);
        let (mask, depth) = mask_and_depth(None);
        for k in 1..100 {
            assert_eq!(s.advance(&mask, &depth, k), None);
        }
        assert_eq!(s.active_label(), 1);
        // Out of band sightings do not start the timer either.
        let (mask, depth) = mask_and_depth(Some(1.5));
        assert_eq!(s.advance(&mask, &depth, 100), None);
        assert_eq!(s.events()[0].timer_start, None);
    }

    #[test]
    fn scheduler_switches_after_budget() {
        let mut s = LabelScheduler::new(vec![3, 1, 2], vec![Some(500), Some(500), Some(500)], 1.0, 0.2);
        let (seen, depth_seen) = mask_and_depth(Some(1.1));
        let (unseen, depth_unseen) = mask_and_depth(None);
        assert_eq!(s.advance(&seen, &depth_seen, 7), None);
        for k in 8..507 {
            assert_eq!(s.advance(&unseen, &depth_unseen, k), None, "step {k}");
        }
        assert_eq!(s.advance(&unseen, &depth_unseen, 507), Some(1));
        assert_eq!(s.advance(&seen, &depth_seen, 600), None);
        assert_eq!(s.advance(&seen, &depth_seen, 1100), Some(2));
        assert_eq!(s.advance(&seen, &depth_seen, 1101), None);
        assert_eq!(s.advance(&seen, &depth_seen, 5000), None);
        let ev = s.events();
        assert_eq!(ev.len(), 3);
        assert_eq!((ev[0].label, ev[0].timer_start, ev[0].switched_at), (3, Some(7), Some(507)));
        assert_eq!((ev[1].label, ev[1].timer_start, ev[1].switched_at), (1, Some(600), Some(1100)));
        assert_eq!((ev[2].label, ev[2].timer_start, ev[2].switched_at), (2, Some(1101), None));
    }
}
