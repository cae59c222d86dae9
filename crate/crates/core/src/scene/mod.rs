//! Scene geometry: objects, room generation and ray queries.

mod bvh;
mod generate;
mod manifest;
mod mesh;

pub use bvh::{hit_precedes, Bvh, SceneTriangle};
pub use generate::{generate_room, RoomLimits, RoomSpec, SemanticShape};
pub use manifest::{export_scene, import_scene};
pub use mesh::{primitive_mesh, semantic_target, ObjectKind, Primitive, TriMesh, MIN_SEGMENTS, SEMANTIC_TARGET_SUBDIVISIONS};

use std::collections::BTreeSet;

use crate::error::{Result, SimError};
use crate::geom::{Aabb, Pose, Vec3};

/// Label of plain obstacles and walls.
pub const OBSTACLE_LABEL: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub kind: ObjectKind,
    /// Mesh in the object's local frame.
    pub mesh: TriMesh,
    pub pose: Pose,
    /// 0 for obstacles, otherwise a unique semantic class.
    pub label: u32,
}

impl SceneObject {
    pub fn new(kind: ObjectKind, mesh: TriMesh, pose: Pose, label: u32) -> Self {
        SceneObject {
            kind,
            mesh,
            pose,
            label,
        }
    }

    pub fn world_mesh(&self) -> TriMesh {
        self.mesh.transformed(&self.pose)
    }

    pub fn world_aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for v in self.mesh.vertices() {
            b.grow(&self.pose.transform_point(v));
        }
        b
    }

    pub fn is_semantic(&self) -> bool {
        self.label != OBSTACLE_LABEL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub object_id: u32,
    pub face_id: u32,
    pub label: u32,
}

/// Immutable scene with a BVH over every world-space triangle.
#[derive(Debug, Clone)]
pub struct Scene {
    objects: Vec<SceneObject>,
    bounds: Aabb,
    bvh: Bvh,
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.objects == other.objects && self.bounds == other.bounds
    }
}

impl Scene {
    /// `bounds` is the free interior of the room.
    pub fn new(objects: Vec<SceneObject>, bounds: Aabb) -> Result<Scene> {
        if bounds.is_empty() {
            return Err(SimError::invalid("scene bounds are empty"));
        }
        let mut seen = BTreeSet::new();
        for (i, o) in objects.iter().enumerate() {
            if (o.pose.orientation.as_ref().norm() - 1.0).abs() > 1e-6 {
                return Err(SimError::invalid(format!("object {i} orientation is not unit-norm")));
            }
            if o.is_semantic() && !seen.insert(o.label) {
                return Err(SimError::invalid(format!("semantic label {} used twice", o.label)));
            }
        }
        let mut tris = Vec::new();
        for (oid, o) in objects.iter().enumerate() {
            let world = o.world_mesh();
            for f in 0..world.face_count() {
                let [a, b, c] = world.triangle(f);
                tris.push(SceneTriangle::new(a, b, c, oid as u32, f as u32));
            }
        }
        Ok(Scene {
            bvh: Bvh::build(tris),
            objects,
            bounds,
        })
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Box enclosing all geometry, shell included.
    pub fn geometry_bounds(&self) -> Aabb {
        self.objects
            .iter()
            .fold(self.bounds, |acc, o| acc.union(&o.world_aabb()))
    }

    pub fn object_for_label(&self, label: u32) -> Option<usize> {
        if label == OBSTACLE_LABEL {
            return None;
        }
        self.objects.iter().position(|o| o.label == label)
    }

    pub fn semantic_labels(&self) -> Vec<u32> {
        self.objects.iter().filter(|o| o.is_semantic()).map(|o| o.label).collect()
    }

    pub fn label_of(&self, object_id: u32) -> u32 {
        self.objects[object_id as usize].label
    }

    fn make_hit(&self, origin: &Vec3, dir: &Vec3, t: f64, tri: &SceneTriangle) -> Hit {
        Hit {
            t,
            point: origin + dir * t,
            object_id: tri.object_id,
            face_id: tri.face_id,
            label: self.objects[tri.object_id as usize].label,
        }
    }

    /// Nearest hit within `t_max`; `dir` must be unit length.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        self.bvh
            .intersect(origin, dir, t_max)
            .map(|(t, i)| self.make_hit(origin, dir, t, &self.bvh.triangles()[i]))
    }

    /// Linear scan over every triangle. Reference for `raycast`.
    pub fn raycast_brute_force(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        let mut best: Option<(f64, &SceneTriangle)> = None;
        for tri in self.bvh.triangles() {
            if let Some(t) = tri.intersect(origin, dir, t_max) {
                if best.map_or(true, |(bt, b)| hit_precedes(t, tri, bt, b)) {
                    best = Some((t, tri));
                }
            }
        }
        best.map(|(t, tri)| self.make_hit(origin, dir, t, tri))
    }

    /// Distance from `p` to the nearest surface, capped at `max_dist`.
    pub fn distance_to_surface(&self, p: &Vec3, max_dist: f64) -> f64 {
        self.bvh.nearest(p, max_dist).map_or(max_dist, |(d, _)| d)
    }

    pub fn distance_to_surface_brute_force(&self, p: &Vec3) -> f64 {
        self.bvh
            .triangles()
            .iter()
            .map(|t| (t.closest_point(p) - p).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// True if `p` lies inside a closed object (parity of crossings along a
    /// fixed skew direction), or outside the room interior.
    pub fn is_inside_solid(&self, p: &Vec3) -> bool {
        if !self.bounds.contains(p) {
            return true;
        }
        let dir = Vec3::new(0.267_261_24, 0.534_522_48, 0.801_783_73).normalize();
        let mut crossings = vec![0u32; self.objects.len()];
        for tri in self.bvh.triangles() {
            if tri.intersect(p, &dir, f64::INFINITY).is_some() {
                crossings[tri.object_id as usize] += 1;
            }
        }
        self.objects
            .iter()
            .zip(&crossings)
            .any(|(o, &c)| o.kind != ObjectKind::Wall && c % 2 == 1)
    }

    pub fn world_triangle(&self, object_id: usize, face_id: usize) -> [Vec3; 3] {
        let o = &self.objects[object_id];
        let [a, b, c] = o.mesh.triangle(face_id);
        [
            o.pose.transform_point(&a),
            o.pose.transform_point(&b),
            o.pose.transform_point(&c),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cube_scene(center: Vec3) -> Scene {
        let mesh = primitive_mesh(&Primitive::Box {
            size: Vec3::new(1.0, 1.0, 1.0),
            subdivisions: [1, 1, 1],
        })
        .unwrap();
        let obj = SceneObject::new(ObjectKind::Box, mesh, Pose::new(center, Default::default()), 1);
        Scene::new(vec![obj], Aabb::new(Vec3::repeat(-10.0), Vec3::repeat(10.0))).unwrap()
    }

    #[test]
    fn ray_hits_cube_face() {
        let scene = unit_cube_scene(Vec3::new(2.0, 0.0, 0.0));
        let hit = scene.raycast(&Vec3::zeros(), &Vec3::x(), 10.0).unwrap();
        assert!((hit.t - 1.5).abs() < 1e-12);
        assert_eq!(hit.label, 1);
        assert!(scene.raycast(&Vec3::zeros(), &Vec3::y(), 10.0).is_none());
        assert!(scene.raycast(&Vec3::zeros(), &Vec3::x(), 1.0).is_none());
    }

    #[test]
    fn bvh_leaves_partition_triangles() {
        let scene = generate_room(&RoomSpec {
            obstacle_count: 19,
            seed: 3,
            ..RoomSpec::default()
        })
        .unwrap();
        let mut ranges = scene.bvh().leaf_ranges();
        ranges.sort_by_key(|r| r.start);
        let mut next = 0;
        for r in ranges {
            assert_eq!(r.start, next);
            next = r.end;
        }
        assert_eq!(next, scene.bvh().triangles().len());
        let total: usize = scene.objects().iter().map(|o| o.mesh.face_count()).sum();
        assert_eq!(total, next);
    }

    #[test]
    fn nearest_matches_brute_force() {
        let scene = generate_room(&RoomSpec {
            obstacle_count: 9,
            seed: 11,
            ..RoomSpec::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = *scene.bounds();
        for _ in 0..300 {
            let p = Vec3::new(
                rng.random_range(b.min.x..b.max.x),
                rng.random_range(b.min.y..b.max.y),
                rng.random_range(b.min.z..b.max.z),
            );
            let fast = scene.distance_to_surface(&p, 100.0);
            let slow = scene.distance_to_surface_brute_force(&p);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn inside_solid_detection() {
        let scene = unit_cube_scene(Vec3::new(2.0, 0.0, 0.0));
        assert!(scene.is_inside_solid(&Vec3::new(2.1, 0.05, -0.1)));
        assert!(!scene.is_inside_solid(&Vec3::new(0.0, 0.0, 0.0)));
        assert!(scene.is_inside_solid(&Vec3::new(50.0, 0.0, 0.0)));
    }

    #[test]
    fn duplicate_semantic_labels_rejected() {
        let mesh = semantic_target(Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let a = SceneObject::new(ObjectKind::Box, mesh.clone(), Pose::identity(), 2);
        let b = SceneObject::new(ObjectKind::Box, mesh, Pose::from_yaw(Vec3::x() * 3.0, 0.0), 2);
        assert!(Scene::new(vec![a, b], Aabb::new(Vec3::repeat(-5.0), Vec3::repeat(5.0))).is_err());
    }
}
