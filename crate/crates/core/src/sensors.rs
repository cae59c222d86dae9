//! Headless depth/segmentation/face-index rendering and the simulated lidar.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geom::{Pose, Vec3};
use crate::scene::Scene;

/// Pinhole camera looking along body +x with +y left and +z up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub max_range: f64,
    /// Camera pose in the body frame.
    pub offset: Pose,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            h_fov_deg: 87.0,
            v_fov_deg: 58.0,
            width: 96,
            height: 54,
            max_range: 10.0,
            offset: Pose::identity(),
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(SimError::invalid("camera width/height must be positive"));
        }
        for fov in [self.h_fov_deg, self.v_fov_deg] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(SimError::invalid(format!("camera fov {fov} outside (0, 180)")));
            }
        }
        if !(self.max_range > 0.0) {
            return Err(SimError::invalid("camera max_range must be positive"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Focal lengths in pixels `(fx, fy)`.
    pub fn focal(&self) -> (f64, f64) {
        let fx = 0.5 * self.width as f64 / (0.5 * self.h_fov_deg.to_radians()).tan();
        let fy = 0.5 * self.height as f64 / (0.5 * self.v_fov_deg.to_radians()).tan();
        (fx, fy)
    }

    /// Unit ray through the center of pixel `(row, col)` in the camera frame.
    pub fn pixel_ray(&self, row: usize, col: usize) -> Vec3 {
        let (fx, fy) = self.focal();
        let u = col as f64 + 0.5 - 0.5 * self.width as f64;
        let v = row as f64 + 0.5 - 0.5 * self.height as f64;
        Vec3::new(1.0, -u / fx, -v / fy).normalize()
    }

    /// Row-major unit rays for every pixel, camera frame.
    pub fn pixel_rays(&self) -> Vec<Vec3> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .map(|(r, c)| self.pixel_ray(r, c))
            .collect()
    }

    /// Continuous pixel coordinates `(col, row)` of a camera-frame point in
    /// front of the camera.
    pub fn project(&self, p_cam: &Vec3) -> Option<(f64, f64)> {
        if p_cam.x <= 0.0 {
            return None;
        }
        let (fx, fy) = self.focal();
        let col = 0.5 * self.width as f64 - fx * p_cam.y / p_cam.x;
        let row = 0.5 * self.height as f64 - fy * p_cam.z / p_cam.x;
        Some((col, row))
    }

    pub fn world_pose(&self, body: &Pose) -> Pose {
        body.compose(&self.offset)
    }
}

/// Range-to-surface image, row-major. Invalid pixels are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub max_range: f64,
    pub values: Vec<f64>,
}

impl DepthImage {
    pub fn zeros(width: usize, height: usize, max_range: f64) -> Self {
        DepthImage {
            width,
            height,
            max_range,
            values: vec![0.0; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl SegMask {
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FaceRef {
    pub object_id: u32,
    pub face_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceIndexImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<FaceRef>>,
}

/// The three mutually consistent images of one camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub depth: DepthImage,
    pub mask: SegMask,
    pub faces: FaceIndexImage,
}

/// Renders depth, the mask of `active_label` and the face-index image from
/// the camera mounted on `body`. One ray per pixel.
pub fn render(scene: &Scene, camera: &CameraModel, body: &Pose, active_label: Option<u32>) -> Frame {
    let rays = camera.pixel_rays();
    render_with_rays(scene, camera, &rays, body, active_label)
}

/// As [`render`] with precomputed camera-frame rays from [`CameraModel::pixel_rays`].
pub fn render_with_rays(
    scene: &Scene,
    camera: &CameraModel,
    rays: &[Vec3],
    body: &Pose,
    active_label: Option<u32>,
) -> Frame {
    let n = camera.pixel_count();
    debug_assert_eq!(rays.len(), n);
    let cam = camera.world_pose(body);
    let mut depth = DepthImage::zeros(camera.width, camera.height, camera.max_range);
    let mut mask = vec![0u8; n];
    let mut faces = vec![None; n];
    for (i, ray) in rays.iter().enumerate() {
        let dir = cam.transform_vector(ray);
        if let Some(hit) = scene.raycast(&cam.position, &dir, camera.max_range) {
            depth.values[i] = hit.t;
            faces[i] = Some(FaceRef {
                object_id: hit.object_id,
                face_id: hit.face_id,
            });
            if active_label == Some(hit.label) && hit.label != crate::scene::OBSTACLE_LABEL {
                mask[i] = 1;
            }
        }
    }
    Frame {
        depth,
        mask: SegMask {
            width: camera.width,
            height: camera.height,
            values: mask,
        },
        faces: FaceIndexImage {
            width: camera.width,
            height: camera.height,
            values: faces,
        },
    }
}

/// Adds zero-mean Gaussian noise with standard deviation `k_sigma * d` to
/// every valid pixel, clamped to `[0, max_range]`. Invalid pixels stay 0.
pub fn apply_depth_noise<R: Rng + ?Sized>(depth: &DepthImage, rng: &mut R, k_sigma: f64) -> DepthImage {
    let mut out = depth.clone();
    if k_sigma <= 0.0 {
        return out;
    }
    for d in out.values.iter_mut() {
        if *d > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            *d = (*d + k_sigma * *d * z).clamp(0.0, depth.max_range);
        }
    }
    out
}

/// Clears each set mask pixel with probability `p`.
pub fn apply_mask_dropout<R: Rng + ?Sized>(mask: &SegMask, rng: &mut R, p: f64) -> SegMask {
    let mut out = mask.clone();
    if p <= 0.0 {
        return out;
    }
    for m in out.values.iter_mut() {
        if *m != 0 && rng.random::<f64>() < p {
            *m = 0;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarModel {
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub h_rays: usize,
    pub v_rays: usize,
    pub max_range: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        LidarModel {
            h_fov_deg: 360.0,
            v_fov_deg: 90.0,
            h_rays: 128,
            v_rays: 16,
            max_range: 10.0,
        }
    }
}

impl LidarModel {
    pub fn validate(&self) -> Result<()> {
        if self.h_rays == 0 || self.v_rays == 0 {
            return Err(SimError::invalid("lidar ray counts must be at least 1"));
        }
        if !(self.h_fov_deg > 0.0 && self.h_fov_deg <= 360.0) || !(self.v_fov_deg >= 0.0 && self.v_fov_deg <= 180.0) {
            return Err(SimError::invalid("lidar fov out of range"));
        }
        if !(self.max_range > 0.0) {
            return Err(SimError::invalid("lidar max_range must be positive"));
        }
        Ok(())
    }

    /// Azimuth angles (rad, body frame). A full circle excludes the duplicate endpoint.
    pub fn azimuths(&self) -> Vec<f64> {
        let fov = self.h_fov_deg.to_radians();
        if self.h_fov_deg >= 360.0 {
            (0..self.h_rays).map(|i| fov * i as f64 / self.h_rays as f64).collect()
        } else {
            spread(fov, self.h_rays)
        }
    }

    /// Elevation angles (rad), symmetric about the horizon with inclusive endpoints.
    pub fn elevations(&self) -> Vec<f64> {
        spread(self.v_fov_deg.to_radians(), self.v_rays)
    }

    /// Unit ray directions in the body frame, elevation-major.
    pub fn ray_directions(&self) -> Vec<Vec3> {
        let az = self.azimuths();
        self.elevations()
            .into_iter()
            .flat_map(|el| {
                az.iter()
                    .map(move |&a| Vec3::new(el.cos() * a.cos(), el.cos() * a.sin(), el.sin()))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

fn spread(fov: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -0.5 * fov + fov * i as f64 / (n - 1) as f64).collect()
}

/// One lidar sweep. Misses carry the max-range endpoint with `hit = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub origin: Vec3,
    pub points: Vec<Vec3>,
    pub hit: Vec<bool>,
}

impl PointCloud {
    pub fn empty(origin: Vec3) -> Self {
        PointCloud {
            origin,
            points: Vec::new(),
            hit: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn lidar_scan(scene: &Scene, lidar: &LidarModel, body: &Pose) -> PointCloud {
    lidar_scan_with_rays(scene, lidar, &lidar.ray_directions(), body)
}

pub fn lidar_scan_with_rays(scene: &Scene, lidar: &LidarModel, rays: &[Vec3], body: &Pose) -> PointCloud {
    let origin = body.position;
    let mut points = Vec::with_capacity(rays.len());
    let mut hit = Vec::with_capacity(rays.len());
    for r in rays {
        let dir = body.transform_vector(r);
        match scene.raycast(&origin, &dir, lidar.max_range) {
            Some(h) => {
                points.push(h.point);
                hit.push(true);
            }
            None => {
                points.push(origin + dir * lidar.max_range);
                hit.push(false);
            }
        }
    }
    PointCloud { origin, points, hit }
}

/// Binary PGM of depth scaled so `max_range` maps to 255.
pub fn write_depth_pgm(depth: &DepthImage, path: &Path) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n255\n", depth.width, depth.height).into_bytes();
    buf.extend(
        depth
            .values
            .iter()
            .map(|&d| ((d / depth.max_range).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, buf).map_err(|e| SimError::io(path, e))
}

/// Binary PBM (1 = black) of the mask.
pub fn write_mask_pbm(mask: &SegMask, path: &Path) -> Result<()> {
    let mut buf = format!("P4\n{} {}\n", mask.width, mask.height).into_bytes();
    let row_bytes = mask.width.div_ceil(8);
    for r in 0..mask.height {
        let mut row = vec![0u8; row_bytes];
        for c in 0..mask.width {
            if mask.values[r * mask.width + c] != 0 {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        buf.write_all(&row).map_err(|e| SimError::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| SimError::io(path, e))
}
