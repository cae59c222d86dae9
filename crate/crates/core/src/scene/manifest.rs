//! Scene manifest: a TOML key-value file plus one OBJ per object.
//!
//! ```toml
//! bounds_min = [0.0, 0.0, 0.0]
//! bounds_max = [10.0, 10.0, 4.0]
//!
//! [[object]]
//! kind = "box"
//! mesh = "object_006.obj"
//! position = [3.1, 4.2, 1.0]
//! orientation = [0.0, 0.0, 0.38, 0.92]   # x, y, z, w
//! label = 1
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::mesh::{ObjectKind, TriMesh};
use super::{Scene, SceneObject};
use crate::error::{Result, SimError};
use crate::geom::{Aabb, Pose, Vec3};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    bounds_min: [f64; 3],
    bounds_max: [f64; 3],
    #[serde(default, rename = "object")]
    objects: Vec<ManifestObject>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestObject {
    kind: ObjectKind,
    mesh: String,
    position: [f64; 3],
    orientation: [f64; 4],
    label: u32,
}

/// Writes `manifest.toml` and `object_NNN.obj` files into `dir`.
pub fn export_scene(scene: &Scene, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let mut objects = Vec::new();
    for (i, o) in scene.objects().iter().enumerate() {
        let name = format!("object_{i:03}.obj");
        let path = dir.join(&name);
        fs::write(&path, o.mesh.to_obj_string()).map_err(|e| SimError::io(&path, e))?;
        let q = o.pose.orientation.as_ref();
        objects.push(ManifestObject {
            kind: o.kind,
            mesh: name,
            position: o.pose.position.into(),
            orientation: [q.i, q.j, q.k, q.w],
            label: o.label,
        });
    }
    let manifest = Manifest {
        bounds_min: scene.bounds().min.into(),
        bounds_max: scene.bounds().max.into(),
        objects,
    };
    let text = toml::to_string(&manifest).map_err(|e| SimError::parse("scene manifest", e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| SimError::io(&path, e))
}

/// Loads a manifest; mesh paths are resolved relative to the manifest.
pub fn import_scene(manifest_path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(manifest_path).map_err(|e| SimError::io(manifest_path, e))?;
    let manifest: Manifest = toml::from_str(&text)
        .map_err(|e| SimError::parse(manifest_path.display().to_string(), e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut objects = Vec::with_capacity(manifest.objects.len());
    for o in manifest.objects {
        let mesh_path = base.join(&o.mesh);
        let obj_text = fs::read_to_string(&mesh_path).map_err(|e| SimError::io(&mesh_path, e))?;
        let mesh = TriMesh::from_obj_str(&obj_text)?;
        let [x, y, z, w] = o.orientation;
        let orientation = UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z));
        let pose = Pose::new(Vec3::from(o.position), orientation);
        objects.push(SceneObject::new(o.kind, mesh, pose, o.label));
    }
    Scene::new(
        objects,
        Aabb::new(Vec3::from(manifest.bounds_min), Vec3::from(manifest.bounds_max)),
    )
}
