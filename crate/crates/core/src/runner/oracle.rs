//! Feasible-coverage oracle: which faces of a semantic object could be
//! inspected at all from collision-free viewpoints in the distance band.

use crate::error::{Result, SimError};
use crate::geom::{Pose, Vec3};
use crate::reward::{FaceLedger, FocusRect, RewardParams};
use crate::scene::Scene;
use crate::sensors::CameraModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    /// Viewpoint lattice spacing (m).
    pub grid: f64,
    pub yaw_bins: usize,
    /// Viewpoints closer than this to any surface are discarded (m).
    pub collision_radius: f64,
    pub focus_fraction: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            grid: 0.2,
            yaw_bins: 16,
            collision_radius: 0.15,
            focus_fraction: RewardParams::default().focus_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub label: u32,
    pub object_id: usize,
    pub face_count: usize,
    /// Sorted feasible face ids.
    pub faces: Vec<usize>,
}

impl FeasibleSet {
    pub fn fraction(&self) -> f64 {
        if self.face_count == 0 {
            return 0.0;
        }
        self.faces.len() as f64 / self.face_count as f64
    }

    pub fn contains(&self, face: usize) -> bool {
        self.faces.binary_search(&face).is_ok()
    }

    /// Number of feasible faces whose best observed distance lies within
    /// `band` of the ledger's `d_ref`.
    pub fn covered(&self, ledger: &FaceLedger, band: f64) -> usize {
        self.faces
            .iter()
            .filter(|&&f| {
                ledger
                    .best_distance(f)
                    .is_some_and(|d| (d - ledger.d_ref()).abs() <= band + 1e-12)
            })
            .count()
    }
}

/// A face is feasible if, from some lattice viewpoint at least
/// `collision_radius` from every surface, its centroid lies within
/// `[d_ref − band, d_ref + band]`, is the first thing a ray toward it hits,
/// and projects inside the focus rectangle for one of the yaw bins (camera
/// level, body roll and pitch zero).
pub fn feasible_coverage(
    scene: &Scene,
    label: u32,
    camera: &CameraModel,
    d_ref: f64,
    band: f64,
    params: &OracleParams,
) -> Result<FeasibleSet> {
    let object_id = scene
        .object_for_label(label)
        .ok_or_else(|| SimError::invalid(format!("label {label} not in scene")))?;
    if !(params.grid > 0.0 && params.yaw_bins > 0 && band >= 0.0 && d_ref > 0.0) {
        return Err(SimError::invalid("oracle parameters out of range"));
    }
    let object = &scene.objects()[object_id];
    let world = object.world_mesh();
    let n = world.face_count();
    let centroids: Vec<Vec3> = (0..n).map(|f| world.face_centroid(f)).collect();
    let (lo, hi) = (d_ref - band, d_ref + band);
    let focus = FocusRect::new(camera.width, camera.height, params.focus_fraction);
    let cams: Vec<Pose> = (0..params.yaw_bins)
        .map(|k| {
            let yaw = k as f64 * std::f64::consts::TAU / params.yaw_bins as f64;
            camera.world_pose(&Pose::from_yaw(Vec3::zeros(), yaw))
        })
        .collect();

    let slack = camera.offset.position.norm();
    let region = object.world_aabb().expanded(hi + slack);
    let room = scene.bounds();
    let axis = |i: usize| {
        let a = (region.min[i].max(room.min[i]) / params.grid).ceil() as i64;
        let b = (region.max[i].min(room.max[i]) / params.grid).floor() as i64;
        a..=b
    };
    let mut feasible = vec![false; n];
    let mut remaining = n;
    'outer: for i in axis(0) {
        for j in axis(1) {
            for k in axis(2) {
                let p = Vec3::new(i as f64, j as f64, k as f64) * params.grid;
                // Camera mount offsets move the optical center by at most `slack`.
                let candidates: Vec<usize> = (0..n)
                    .filter(|&f| !feasible[f] && {
                        let d = (centroids[f] - p).norm();
                        d >= lo - slack && d <= hi + slack
                    })
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                if scene.distance_to_surface(&p, params.collision_radius) < params.collision_radius
                    || scene.is_inside_solid(&p)
                {
                    continue;
                }
                for f in candidates {
                    if face_visible(scene, camera, &cams, &focus, &p, &centroids[f], (lo, hi), object_id, f) {
                        feasible[f] = true;
                        remaining -= 1;
                        if remaining == 0 {
                            break 'outer;
                        }
                    }
                }
            }
        }
    }
    Ok(FeasibleSet {
        label,
        object_id,
        face_count: n,
        faces: (0..n).filter(|&f| feasible[f]).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn face_visible(
    scene: &Scene,
    camera: &CameraModel,
    cams: &[Pose],
    focus: &FocusRect,
    body: &Vec3,
    centroid: &Vec3,
    (lo, hi): (f64, f64),
    object_id: usize,
    face: usize,
) -> bool {
    let mut tested: Option<Vec3> = None;
    for cam in cams {
        let origin = body + cam.position;
        let to = centroid - origin;
        let dist = to.norm();
        if dist < lo || dist > hi {
            continue;
        }
        let rel = cam.orientation.inverse_transform_vector(&to);
        if !camera.project(&rel).is_some_and(|(col, row)| focus.contains_point(col, row)) {
            continue;
        }
        if tested == Some(origin) {
            continue;
        }
        tested = Some(origin);
        if let Some(hit) = scene.raycast(&origin, &(to / dist), dist + 1e-6) {
            if hit.object_id as usize == object_id && hit.face_id as usize == face {
                return true;
            }
        }
    }
    false
}
