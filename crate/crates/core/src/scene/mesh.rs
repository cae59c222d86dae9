//! Triangle meshes and primitive tessellation.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geom::{Aabb, Pose, Vec3};

/// Indexed triangle mesh. Face ids are the dense range `0..face_count()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(SimError::invalid("mesh needs at least one face"));
        }
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= vertices.len()) {
                return Err(SimError::invalid(format!("face {i} references a missing vertex")));
            }
        }
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(SimError::invalid(format!("vertex {v} is not finite")));
        }
        let mesh = TriMesh { vertices, faces };
        for i in 0..mesh.face_count() {
            if mesh.face_area(i) <= 1e-14 {
                return Err(SimError::invalid(format!("face {i} has zero area")));
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.face_count()).map(|f| self.face_area(f)).sum()
    }

    pub fn face_centroid(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (a + b + c) / 3.0
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn transformed(&self, pose: &Pose) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Closed 2-manifold check: every undirected edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().all(|&c| c == 2)
    }

    /// Signed volume via the divergence theorem; positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        (0..self.face_count())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Parses the `v`/`f` subset of Wavefront OBJ. Polygons are fan-triangulated,
    /// `f a/b/c` texture/normal references and negative indices are accepted.
    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| SimError::parse(format!("obj line {}", line_no + 1), e.to_string()))?;
                    if coords.len() != 3 {
                        return Err(SimError::parse(format!("obj line {}", line_no + 1), "vertex needs 3 coordinates"));
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in parts {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| SimError::parse(format!("obj line {}", line_no + 1), format!("bad index {tok:?}")))?;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            -1
                        };
                        if resolved < 0 {
                            return Err(SimError::parse(format!("obj line {}", line_no + 1), format!("bad index {tok:?}")));
                        }
                        idx.push(resolved as u32);
                    }
                    if idx.len() < 3 {
                        return Err(SimError::parse(format!("obj line {}", line_no + 1), "face needs 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriMesh::new(vertices, faces)
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            // `{:?}` on f64 is the shortest round-trip representation.
            let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Box,
    Cylinder,
    Sphere,
    Wall,
    Imported,
}

impl ObjectKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectKind::Box => "box",
            ObjectKind::Cylinder => "cylinder",
            ObjectKind::Sphere => "sphere",
            ObjectKind::Wall => "wall",
            ObjectKind::Imported => "imported",
        }
    }
}

/// Parametric primitive, centered on its local origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Full side lengths; each side split into a grid of `subdivisions` cells.
    Box { size: Vec3, subdivisions: [u32; 3] },
    /// Axis along local z.
    Cylinder { radius: f64, height: f64, segments: u32 },
    /// UV sphere with `segments` meridians and `segments / 2` latitude bands.
    Sphere { radius: f64, segments: u32 },
}

pub const MIN_SEGMENTS: u32 = 8;

/// Subdivision of the default inspection target: one cell across x and y,
/// seven bands up z, giving 4·(1 + 7 + 7) = 60 triangles.
pub const SEMANTIC_TARGET_SUBDIVISIONS: [u32; 3] = [1, 1, 7];

/// Default inspection target: a cuboid tessellated to exactly 60 faces.
pub fn semantic_target(size: Vec3) -> Result<TriMesh> {
    primitive_mesh(&Primitive::Box {
        size,
        subdivisions: SEMANTIC_TARGET_SUBDIVISIONS,
    })
}

pub fn primitive_mesh(primitive: &Primitive) -> Result<TriMesh> {
    match *primitive {
        Primitive::Box { size, subdivisions } => {
            if size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
                return Err(SimError::invalid(format!("box dimensions must be positive, got {size:?}")));
            }
            if subdivisions.iter().any(|&n| n == 0) {
                return Err(SimError::invalid("box subdivisions must be at least 1"));
            }
            Ok(box_mesh(size, subdivisions))
        }
        Primitive::Cylinder {
            radius,
            height,
            segments,
        } => {
            if !(radius > 0.0) || !(height > 0.0) {
                return Err(SimError::invalid(format!(
                    "cylinder dimensions must be positive, got r={radius} h={height}"
                )));
            }
            if segments < MIN_SEGMENTS {
                return Err(SimError::invalid(format!("cylinder needs at least {MIN_SEGMENTS} segments")));
            }
            Ok(cylinder_mesh(radius, height, segments))
        }
        Primitive::Sphere { radius, segments } => {
            if !(radius > 0.0) {
                return Err(SimError::invalid(format!("sphere radius must be positive, got {radius}")));
            }
            if segments < MIN_SEGMENTS {
                return Err(SimError::invalid(format!("sphere needs at least {MIN_SEGMENTS} segments")));
            }
            Ok(sphere_mesh(radius, segments))
        }
    }
}

fn box_mesh(size: Vec3, n: [u32; 3]) -> TriMesh {
    let half = size * 0.5;
    let mut index: HashMap<[u32; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |lattice: [u32; 3], vertices: &mut Vec<Vec3>| -> u32 {
        *index.entry(lattice).or_insert_with(|| {
            let p = Vec3::new(
                -half.x + size.x * lattice[0] as f64 / n[0] as f64,
                -half.y + size.y * lattice[1] as f64 / n[1] as f64,
                -half.z + size.z * lattice[2] as f64 / n[2] as f64,
            );
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };
    let mut faces = Vec::new();
    for axis in 0..3 {
        let u = (axis + 1) % 3;
        let v = (axis + 2) % 3;
        for positive in [false, true] {
            let fixed = if positive { n[axis] } else { 0 };
            for iu in 0..n[u] {
                for iv in 0..n[v] {
                    let corner = |du: u32, dv: u32| {
                        let mut l = [0u32; 3];
                        l[axis] = fixed;
                        l[u] = iu + du;
                        l[v] = iv + dv;
                        l
                    };
                    let p00 = vertex(corner(0, 0), &mut vertices);
                    let p10 = vertex(corner(1, 0), &mut vertices);
                    let p11 = vertex(corner(1, 1), &mut vertices);
                    let p01 = vertex(corner(0, 1), &mut vertices);
                    if positive {
                        faces.push([p00, p10, p11]);
                        faces.push([p00, p11, p01]);
                    } else {
                        faces.push([p00, p11, p10]);
                        faces.push([p00, p01, p11]);
                    }
                }
            }
        }
    }
    TriMesh { vertices, faces }
}

fn cylinder_mesh(radius: f64, height: f64, segments: u32) -> TriMesh {
    let s = segments;
    let h = height * 0.5;
    let mut vertices = Vec::with_capacity(2 * s as usize + 2);
    for z in [-h, h] {
        for i in 0..s {
            let a = std::f64::consts::TAU * i as f64 / s as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, -h));
    let top_center = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, h));
    let mut faces = Vec::with_capacity(4 * s as usize);
    for i in 0..s {
        let j = (i + 1) % s;
        let (b0, b1, t0, t1) = (i, j, s + i, s + j);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        faces.push([bottom_center, b1, b0]);
        faces.push([top_center, t0, t1]);
    }
    TriMesh { vertices, faces }
}

fn sphere_mesh(radius: f64, segments: u32) -> TriMesh {
    let s = segments;
    let bands = (segments / 2).max(2);
    let mut vertices = Vec::new();
    vertices.push(Vec3::new(0.0, 0.0, radius));
    for ring in 1..bands {
        let polar = std::f64::consts::PI * ring as f64 / bands as f64;
        for i in 0..s {
            let a = std::f64::consts::TAU * i as f64 / s as f64;
            vertices.push(Vec3::new(
                radius * polar.sin() * a.cos(),
                radius * polar.sin() * a.sin(),
                radius * polar.cos(),
            ));
        }
    }
    let south = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, -radius));
    let ring_start = |ring: u32| 1 + (ring - 1) * s;
    let mut faces = Vec::new();
    for i in 0..s {
        let j = (i + 1) % s;
        faces.push([0, ring_start(1) + i, ring_start(1) + j]);
    }
    for ring in 1..bands - 1 {
        let (r0, r1) = (ring_start(ring), ring_start(ring + 1));
        for i in 0..s {
            let j = (i + 1) % s;
            faces.push([r0 + i, r1 + i, r1 + j]);
            faces.push([r0 + i, r1 + j, r0 + j]);
        }
    }
    let last = ring_start(bands - 1);
    for i in 0..s {
        let j = (i + 1) % s;
        faces.push([south, last + j, last + i]);
    }
    TriMesh { vertices, faces }
}
