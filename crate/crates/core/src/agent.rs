//! Robot state, action scaling, first-order velocity-tracking dynamics and
//! observation noise.

use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geom::{yaw_of, Pose, Vec3};

/// Length of the flattened state vector: p (3), q as x,y,z,w (4), v (3), ω (3).
pub const STATE_DIM: usize = 13;
pub const ACTION_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub p: Vec3,
    pub q: UnitQuaternion<f64>,
    pub v: Vec3,
    pub omega: Vec3,
}

impl RobotState {
    pub fn at_rest(p: Vec3, yaw: f64) -> Self {
        RobotState {
            p,
            q: UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw),
            v: Vec3::zeros(),
            omega: Vec3::zeros(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.p, self.q)
    }

    pub fn yaw(&self) -> f64 {
        yaw_of(&self.q)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let q = self.q.quaternion();
        [
            self.p.x, self.p.y, self.p.z, q.i, q.j, q.k, q.w, self.v.x, self.v.y, self.v.z, self.omega.x,
            self.omega.y, self.omega.z,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionCommand {
    /// Body-frame velocity reference (m/s).
    pub v_ref: Vec3,
    /// Yaw-rate reference (rad/s).
    pub yaw_rate: f64,
}

impl ActionCommand {
    pub fn hover() -> Self {
        ActionCommand {
            v_ref: Vec3::zeros(),
            yaw_rate: 0.0,
        }
    }
}

/// Clamps `a` into `[-1, 1]` and scales element-wise by `w_max`. Non-finite
/// entries become 0. Returns the command and whether anything was clamped.
pub fn scale_action(a: &[f64; ACTION_DIM], w_max: &[f64; ACTION_DIM]) -> (ActionCommand, bool) {
    let mut clamped = false;
    let mut u = [0.0; ACTION_DIM];
    for i in 0..ACTION_DIM {
        let x = if a[i].is_finite() { a[i] } else { 0.0 };
        let c = x.clamp(-1.0, 1.0);
        clamped |= c != a[i];
        u[i] = c * w_max[i];
    }
    if clamped {
        log::debug!("action {a:?} clamped into [-1, 1]");
    }
    (
        ActionCommand {
            v_ref: Vec3::new(u[0], u[1], u[2]),
            yaw_rate: u[3],
        },
        clamped,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    pub tau_v: f64,
    pub tau_w: f64,
    pub physics_dt: f64,
    pub control_dt: f64,
    /// Mesh distance at or below which the robot counts as crashed (m).
    pub collision_radius: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            tau_v: 0.2,
            tau_w: 0.1,
            physics_dt: 0.01,
            control_dt: 0.1,
            collision_radius: 0.15,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !(finite_pos(self.tau_v) && finite_pos(self.tau_w)) {
            return Err(SimError::invalid("time constants must be positive"));
        }
        if !(finite_pos(self.physics_dt) && finite_pos(self.control_dt)) || self.physics_dt > self.control_dt {
            return Err(SimError::invalid("need 0 < physics_dt <= control_dt"));
        }
        let ratio = self.control_dt / self.physics_dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(SimError::invalid("control_dt must be an integer multiple of physics_dt"));
        }
        if !(self.collision_radius.is_finite() && self.collision_radius >= 0.0) {
            return Err(SimError::invalid("collision_radius must be non-negative"));
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.control_dt / self.physics_dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Std of the per-substep disturbance acceleration (m/s², rad/s² for yaw).
    pub wrench_std: f64,
    /// Half-widths of the uniform state-observation noise.
    pub position: f64,
    pub orientation: f64,
    pub velocity: f64,
    pub angular_velocity: f64,
    /// Depth noise std is `depth_k_sigma · d`.
    pub depth_k_sigma: f64,
    /// Probability of dropping a positive mask pixel in the observation.
    pub mask_dropout: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            wrench_std: 0.1,
            position: 0.02,
            orientation: 0.01,
            velocity: 0.05,
            angular_velocity: 0.05,
            depth_k_sigma: 0.01,
            mask_dropout: 0.0,
        }
    }
}

impl NoiseParams {
    pub fn none() -> Self {
        NoiseParams {
            wrench_std: 0.0,
            position: 0.0,
            orientation: 0.0,
            velocity: 0.0,
            angular_velocity: 0.0,
            depth_k_sigma: 0.0,
            mask_dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.wrench_std,
            self.position,
            self.orientation,
            self.velocity,
            self.angular_velocity,
            self.depth_k_sigma,
        ];
        if vals.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(SimError::invalid("noise parameters must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.mask_dropout) {
            return Err(SimError::invalid("mask_dropout must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One physics substep. The first-order tracking model is discretized with
/// a zero-order hold on the reference, so velocity, position and yaw follow
/// the continuous-time response exactly between disturbances.
pub fn substep<R: Rng + ?Sized>(
    state: &RobotState,
    cmd: &ActionCommand,
    params: &DynamicsParams,
    wrench_std: f64,
    rng: &mut R,
) -> Result<RobotState> {
    let dt = params.physics_dt;
    let yaw = state.yaw();
    let (s, c) = yaw.sin_cos();
    let v_ref = Vec3::new(c * cmd.v_ref.x - s * cmd.v_ref.y, s * cmd.v_ref.x + c * cmd.v_ref.y, cmd.v_ref.z);

    let kv = -(-dt / params.tau_v).exp_m1();
    let kw = -(-dt / params.tau_w).exp_m1();
    let dv = state.v - v_ref;
    let dw = state.omega.z - cmd.yaw_rate;
    let p = state.p + v_ref * dt + dv * (params.tau_v * kv);
    let yaw_next = yaw + cmd.yaw_rate * dt + dw * (params.tau_w * kw);
    let q = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw_next);

    let mut v = state.v - dv * kv;
    let mut wz = state.omega.z - dw * kw;
    if wrench_std > 0.0 {
        let mut n = || -> f64 { rng.sample::<f64, _>(StandardNormal) * wrench_std * dt };
        v += Vec3::new(n(), n(), n());
        wz += n();
    }
    let next = RobotState {
        p,
        q,
        v,
        omega: Vec3::new(0.0, 0.0, wz),
    };
    if !next.is_finite() {
        return Err(SimError::DynamicsFault(format!("non-finite state after substep: {:?}", next.to_array())));
    }
    Ok(next)
}

/// Runs `substeps` physics substeps with a constant command.
pub fn step_dynamics<R: Rng + ?Sized>(
    state: &RobotState,
    cmd: &ActionCommand,
    params: &DynamicsParams,
    noise: &NoiseParams,
    rng: &mut R,
    substeps: usize,
) -> Result<RobotState> {
    let mut s = *state;
    for _ in 0..substeps {
        s = substep(&s, cmd, params, noise.wrench_std, rng)?;
    }
    Ok(s)
}

/// Adds uniform noise in `[-b, b]` to every field and re-normalizes the quaternion.
pub fn perturb_state_observation<R: Rng + ?Sized>(state: &RobotState, noise: &NoiseParams, rng: &mut R) -> RobotState {
    let mut u = |b: f64| -> f64 {
        if b > 0.0 {
            rng.random_range(-b..=b)
        } else {
            0.0
        }
    };
    let jitter = |v: &Vec3, b: f64, u: &mut dyn FnMut(f64) -> f64| Vec3::new(v.x + u(b), v.y + u(b), v.z + u(b));
    let p = jitter(&state.p, noise.position, &mut u);
    let q = state.q.quaternion();
    let b = noise.orientation;
    let noisy = Quaternion::new(q.w + u(b), q.i + u(b), q.j + u(b), q.k + u(b));
    let q = if noisy.norm() > 1e-12 {
        UnitQuaternion::from_quaternion(noisy)
    } else {
        state.q
    };
    let v = jitter(&state.v, noise.velocity, &mut u);
    let omega = jitter(&state.omega, noise.angular_velocity, &mut u);
    RobotState { p, q, v, omega }
}
