//! Procedural room generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::{primitive_mesh, semantic_target, ObjectKind, Primitive, TriMesh};
use super::{Scene, SceneObject, OBSTACLE_LABEL};
use crate::error::{Result, SimError};
use crate::geom::{Aabb, Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SemanticShape {
    /// 60-face cuboid.
    #[default]
    Cuboid,
    /// 60-face cylinder (15 segments).
    Cylinder,
}

/// Validation ranges for room dimensions and obstacle counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomLimits {
    pub length: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
    pub max_obstacles: usize,
}

impl Default for RoomLimits {
    fn default() -> Self {
        RoomLimits {
            length: [4.0, 20.0],
            width: [4.0, 20.0],
            height: [2.0, 8.0],
            max_obstacles: 19,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomSpec {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub obstacle_count: usize,
    pub semantic_count: usize,
    pub seed: u64,
    pub semantic_shape: SemanticShape,
    /// Side length range of semantic targets (m).
    pub semantic_size: [f64; 2],
    pub wall_thickness: f64,
    pub limits: RoomLimits,
}

impl Default for RoomSpec {
    fn default() -> Self {
        RoomSpec {
            length: 10.0,
            width: 10.0,
            height: 4.0,
            obstacle_count: 0,
            semantic_count: 1,
            seed: 0,
            semantic_shape: SemanticShape::Cuboid,
            semantic_size: [0.5, 1.5],
            wall_thickness: 0.2,
            limits: RoomLimits::default(),
        }
    }
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64, r: [f64; 2]| v.is_finite() && v >= r[0] && v <= r[1];
        if !in_range(self.length, self.limits.length)
            || !in_range(self.width, self.limits.width)
            || !in_range(self.height, self.limits.height)
        {
            return Err(SimError::invalid(format!(
                "room {}x{}x{} outside limits {:?}",
                self.length, self.width, self.height, self.limits
            )));
        }
        if self.obstacle_count > self.limits.max_obstacles {
            return Err(SimError::invalid(format!(
                "obstacle_count {} exceeds {}",
                self.obstacle_count, self.limits.max_obstacles
            )));
        }
        if self.semantic_count == 0 {
            return Err(SimError::invalid("semantic_count must be at least 1"));
        }
        let [lo, hi] = self.semantic_size;
        if !(lo > 0.0 && hi >= lo) {
            return Err(SimError::invalid("semantic_size must be a positive range"));
        }
        if hi > self.height || hi * 1.5 > self.length.min(self.width) {
            return Err(SimError::invalid("semantic targets do not fit in the room"));
        }
        if !(self.wall_thickness > 0.0) {
            return Err(SimError::invalid("wall_thickness must be positive"));
        }
        Ok(())
    }

    pub fn interior(&self) -> Aabb {
        Aabb::new(Vec3::zeros(), Vec3::new(self.length, self.width, self.height))
    }
}

const PLACEMENT_RETRIES: usize = 200;
const SEMANTIC_SEPARATION: f64 = 0.3;

/// Builds a room deterministically from `spec`: six wall slabs, then semantic
/// targets (labels `1..=semantic_count`), then obstacles.
pub fn generate_room(spec: &RoomSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let interior = spec.interior();
    let mut objects = shell(spec)?;

    let mut semantic_boxes: Vec<Aabb> = Vec::new();
    for i in 0..spec.semantic_count {
        let label = (i + 1) as u32;
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let size = Vec3::new(
                rng.random_range(spec.semantic_size[0]..=spec.semantic_size[1]),
                rng.random_range(spec.semantic_size[0]..=spec.semantic_size[1]),
                rng.random_range(spec.semantic_size[0]..=spec.semantic_size[1]),
            );
            let mesh = match spec.semantic_shape {
                SemanticShape::Cuboid => semantic_target(size)?,
                SemanticShape::Cylinder => primitive_mesh(&Primitive::Cylinder {
                    radius: 0.5 * size.x,
                    height: size.z,
                    segments: 15,
                })?,
            };
            let kind = match spec.semantic_shape {
                SemanticShape::Cuboid => ObjectKind::Box,
                SemanticShape::Cylinder => ObjectKind::Cylinder,
            };
            let yaw = rng.random_range(0.0..std::f64::consts::TAU);
            let Some(obj) = place(&mut rng, mesh, kind, yaw, &interior, label) else {
                continue;
            };
            let b = obj.world_aabb();
            if semantic_boxes.iter().any(|o| o.expanded(SEMANTIC_SEPARATION).overlaps(&b)) {
                continue;
            }
            semantic_boxes.push(b);
            objects.push(obj);
            placed = true;
            break;
        }
        if !placed {
            return Err(SimError::Generation {
                seed: spec.seed,
                reason: format!("could not place semantic target {label}"),
            });
        }
    }

    for i in 0..spec.obstacle_count {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let (kind, mesh, yaw) = random_obstacle(&mut rng, spec.height)?;
            let Some(obj) = place(&mut rng, mesh, kind, yaw, &interior, OBSTACLE_LABEL) else {
                continue;
            };
            let b = obj.world_aabb();
            if semantic_boxes.iter().any(|s| s.overlaps(&b)) {
                continue;
            }
            objects.push(obj);
            placed = true;
            break;
        }
        if !placed {
            return Err(SimError::Generation {
                seed: spec.seed,
                reason: format!("could not place obstacle {i}"),
            });
        }
    }

    Scene::new(objects, interior)
}

fn shell(spec: &RoomSpec) -> Result<Vec<SceneObject>> {
    let (l, w, h, t) = (spec.length, spec.width, spec.height, spec.wall_thickness);
    // (min, max) corners of each slab, all outside the interior.
    let slabs = [
        (Vec3::new(-t, -t, -t), Vec3::new(l + t, w + t, 0.0)),
        (Vec3::new(-t, -t, h), Vec3::new(l + t, w + t, h + t)),
        (Vec3::new(-t, -t, 0.0), Vec3::new(0.0, w + t, h)),
        (Vec3::new(l, -t, 0.0), Vec3::new(l + t, w + t, h)),
        (Vec3::new(0.0, -t, 0.0), Vec3::new(l, 0.0, h)),
        (Vec3::new(0.0, w, 0.0), Vec3::new(l, w + t, h)),
    ];
    slabs
        .iter()
        .map(|(lo, hi)| {
            let mesh = primitive_mesh(&Primitive::Box {
                size: hi - lo,
                subdivisions: [1, 1, 1],
            })?;
            let pose = Pose::new((lo + hi) * 0.5, Default::default());
            Ok(SceneObject::new(ObjectKind::Wall, mesh, pose, OBSTACLE_LABEL))
        })
        .collect()
}

fn random_obstacle(rng: &mut ChaCha8Rng, room_height: f64) -> Result<(ObjectKind, TriMesh, f64)> {
    let yaw = rng.random_range(0.0..std::f64::consts::TAU);
    Ok(match rng.random_range(0..3u8) {
        0 => {
            let size = Vec3::new(
                rng.random_range(0.3..=1.5),
                rng.random_range(0.3..=1.5),
                rng.random_range(0.3..=room_height.min(2.0)),
            );
            let mesh = primitive_mesh(&Primitive::Box {
                size,
                subdivisions: [1, 1, 1],
            })?;
            (ObjectKind::Box, mesh, yaw)
        }
        1 => {
            let mesh = primitive_mesh(&Primitive::Cylinder {
                radius: rng.random_range(0.1..=0.4),
                height: rng.random_range(0.5..=room_height),
                segments: 16,
            })?;
            (ObjectKind::Cylinder, mesh, yaw)
        }
        _ => {
            let mesh = primitive_mesh(&Primitive::Sphere {
                radius: rng.random_range(0.2..=0.7),
                segments: 16,
            })?;
            (ObjectKind::Sphere, mesh, 0.0)
        }
    })
}

/// Uniform position such that the rotated object lies inside `interior`.
fn place(
    rng: &mut ChaCha8Rng,
    mesh: TriMesh,
    kind: ObjectKind,
    yaw: f64,
    interior: &Aabb,
    label: u32,
) -> Option<SceneObject> {
    let rotated = SceneObject::new(kind, mesh, Pose::from_yaw(Vec3::zeros(), yaw), label);
    let local = rotated.world_aabb();
    let lo = interior.min - local.min;
    let hi = interior.max - local.max;
    if (0..3).any(|i| lo[i] > hi[i]) {
        return None;
    }
    let pos = Vec3::new(
        rng.random_range(lo.x..=hi.x),
        rng.random_range(lo.y..=hi.y),
        rng.random_range(lo.z..=hi.z),
    );
    let SceneObject { kind, mesh, label, .. } = rotated;
    Some(SceneObject::new(kind, mesh, Pose::from_yaw(pos, yaw), label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let spec = RoomSpec {
            obstacle_count: 9,
            seed: 42,
            ..RoomSpec::default()
        };
        assert_eq!(generate_room(&spec).unwrap(), generate_room(&spec).unwrap());
        let other = generate_room(&RoomSpec { seed: 43, ..spec.clone() }).unwrap();
        assert_ne!(generate_room(&spec).unwrap(), other);
    }

    #[test]
    fn obstacle_counts() {
        let empty = generate_room(&RoomSpec::default()).unwrap();
        assert_eq!(empty.objects().len(), 6 + 1);
        assert_eq!(empty.objects().iter().filter(|o| o.kind == ObjectKind::Wall).count(), 6);

        let nine = generate_room(&RoomSpec {
            obstacle_count: 9,
            seed: 7,
            ..RoomSpec::default()
        })
        .unwrap();
        let obstacles = nine
            .objects()
            .iter()
            .filter(|o| o.kind != ObjectKind::Wall && o.label == OBSTACLE_LABEL)
            .count();
        assert_eq!(obstacles, 9);
        assert_eq!(nine.semantic_labels(), vec![1]);
    }

    #[test]
    fn objects_stay_inside_and_avoid_semantics() {
        for seed in 0..30 {
            let spec = RoomSpec {
                length: 6.0,
                width: 5.0,
                obstacle_count: 19,
                semantic_count: 2,
                seed,
                ..RoomSpec::default()
            };
            let scene = match generate_room(&spec) {
                Ok(s) => s,
                Err(SimError::Generation { seed: s, .. }) => {
                    assert_eq!(s, seed);
                    continue;
                }
                Err(e) => panic!("{e}"),
            };
            let interior = spec.interior().expanded(1e-9);
            let sem: Vec<Aabb> = scene.objects().iter().filter(|o| o.is_semantic()).map(|o| o.world_aabb()).collect();
            for o in scene.objects().iter().filter(|o| o.kind != ObjectKind::Wall) {
                assert!(interior.contains_box(&o.world_aabb()));
                if !o.is_semantic() {
                    assert!(sem.iter().all(|s| !s.overlaps(&o.world_aabb())));
                }
            }
            for o in scene.objects().iter().filter(|o| o.is_semantic()) {
                assert_eq!(o.mesh.face_count(), 60);
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            RoomSpec { length: 3.0, ..RoomSpec::default() },
            RoomSpec { height: 9.0, ..RoomSpec::default() },
            RoomSpec { obstacle_count: 20, ..RoomSpec::default() },
            RoomSpec { semantic_count: 0, ..RoomSpec::default() },
        ];
        for spec in bad {
            assert!(matches!(generate_room(&spec), Err(SimError::InvalidArgument(_))));
        }
    }

    #[test]
    fn crowded_room_reports_seed() {
        let spec = RoomSpec {
            length: 4.0,
            width: 4.0,
            height: 2.0,
            semantic_count: 12,
            semantic_size: [1.2, 1.3],
            seed: 99,
            ..RoomSpec::default()
        };
        match generate_room(&spec) {
            Err(SimError::Generation { seed, .. }) => assert_eq!(seed, 99),
            other => panic!("expected generation error, got {other:?}"),
        }
    }
}
