//! World-frame occupancy and visit maps, ray carving, and ego-centric
//! local extraction.
//!
//! The world lattice is anchored at the world origin: cell `c` covers
//! `[c·r, (c+1)·r)` on each axis. Both maps are stored densely over a fixed
//! region (normally the room plus a margin); reads outside it return the
//! default (unknown / zero visits) and writes outside it are dropped.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geom::{Aabb, Pose, Vec3};
use crate::sensors::PointCloud;

pub const DEFAULT_RESOLUTION: f64 = 0.1;
/// Local grid side length in cells.
pub const LOCAL_N: usize = 21;
pub const LOCAL_CELLS: usize = LOCAL_N * LOCAL_N * LOCAL_N;
pub const LOCAL_CENTER: usize = LOCAL_N / 2;

pub type CellIndex = [i32; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i8)]
pub enum CellState {
    Unknown = -1,
    Free = 0,
    Occupied = 1,
}

impl CellState {
    pub fn from_i8(v: i8) -> Option<CellState> {
        match v {
            -1 => Some(CellState::Unknown),
            0 => Some(CellState::Free),
            1 => Some(CellState::Occupied),
            _ => None,
        }
    }
}

/// `floor` for values well inside the i32 range, without a libm call.
#[inline(always)]
fn floor_i32(x: f64) -> i32 {
    let i = x as i32;
    if (i as f64) > x {
        i - 1
    } else {
        i
    }
}

#[inline]
pub fn cell_of(p: &Vec3, resolution: f64) -> CellIndex {
    [
        floor_i32(p.x / resolution),
        floor_i32(p.y / resolution),
        floor_i32(p.z / resolution),
    ]
}

pub fn cell_center(c: &CellIndex, resolution: f64) -> Vec3 {
    Vec3::new(
        (c[0] as f64 + 0.5) * resolution,
        (c[1] as f64 + 0.5) * resolution,
        (c[2] as f64 + 0.5) * resolution,
    )
}

/// Dense block of cells with a fallback value outside.
#[derive(Debug, Clone, PartialEq)]
struct DenseGrid<T> {
    min: CellIndex,
    dims: [usize; 3],
    data: Vec<T>,
    outside: T,
}

impl<T: Copy> DenseGrid<T> {
    fn covering(bounds: &Aabb, resolution: f64, fill: T) -> Self {
        let lo = cell_of(&bounds.min, resolution);
        let hi = cell_of(&bounds.max, resolution);
        let min = [lo[0] - 1, lo[1] - 1, lo[2] - 1];
        let dims = [
            (hi[0] - min[0] + 2) as usize,
            (hi[1] - min[1] + 2) as usize,
            (hi[2] - min[2] + 2) as usize,
        ];
        DenseGrid {
            min,
            dims,
            data: vec![fill; dims[0] * dims[1] * dims[2]],
            outside: fill,
        }
    }

    #[inline]
    fn offset(&self, c: &CellIndex) -> Option<usize> {
        let x = c[0].wrapping_sub(self.min[0]) as u32 as usize;
        let y = c[1].wrapping_sub(self.min[1]) as u32 as usize;
        let z = c[2].wrapping_sub(self.min[2]) as u32 as usize;
        if x < self.dims[0] && y < self.dims[1] && z < self.dims[2] {
            Some((z * self.dims[1] + y) * self.dims[0] + x)
        } else {
            None
        }
    }

    #[inline]
    fn get(&self, c: &CellIndex) -> T {
        self.offset(c).map_or(self.outside, |i| self.data[i])
    }

    #[inline]
    fn slot(&mut self, c: &CellIndex) -> Option<&mut T> {
        self.offset(c).map(move |i| &mut self.data[i])
    }

    fn contains(&self, c: &CellIndex) -> bool {
        self.offset(c).is_some()
    }
}

/// Amanatides–Woo traversal of every cell pierced by the segment `o → e`,
/// in order, ending with the cell containing `e`.
pub fn traverse(o: &Vec3, e: &Vec3, resolution: f64, out: &mut Vec<CellIndex>) {
    traverse_with(o, e, resolution, |c| out.push(c));
}

/// As [`traverse`], calling `visit` on each cell instead of collecting.
#[inline]
pub fn traverse_with(o: &Vec3, e: &Vec3, resolution: f64, mut visit: impl FnMut(CellIndex)) {
    let start = cell_of(o, resolution);
    let end = cell_of(e, resolution);
    visit(start);
    if start == end {
        return;
    }
    let d = e - o;
    let dir = d / d.norm();
    let mut cell = start;
    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for i in 0..3 {
        if dir[i] > 0.0 {
            step[i] = 1;
            t_max[i] = ((cell[i] + 1) as f64 * resolution - o[i]) / dir[i];
            t_delta[i] = resolution / dir[i];
        } else if dir[i] < 0.0 {
            step[i] = -1;
            t_max[i] = (cell[i] as f64 * resolution - o[i]) / dir[i];
            t_delta[i] = -resolution / dir[i];
        }
    }
    // Each boundary crossing moves one axis by one cell, so the walk from
    // start to end takes exactly the Manhattan distance in steps.
    let budget: i32 = (0..3).map(|i| (end[i] - start[i]).abs()).sum();
    let [mut tx, mut ty, mut tz] = t_max;
    let [dx, dy, dz] = t_delta;
    for _ in 0..budget {
        // Smallest t_max, lowest axis on ties. Kept in scalars and selects so
        // the loop compiles without data-dependent branches.
        let ax = tx <= ty && tx <= tz;
        let ay = !ax && ty <= tz;
        let az = !ax && !ay;
        cell[0] += step[0] * ax as i32;
        cell[1] += step[1] * ay as i32;
        cell[2] += step[2] * az as i32;
        tx += if ax { dx } else { 0.0 };
        ty += if ay { dy } else { 0.0 };
        tz += if az { dz } else { 0.0 };
        visit(cell);
    }
    // Rounding can walk a neighbouring path; the endpoint cell is authoritative.
    if cell != end {
        visit(end);
    }
}

/// Tri-state world occupancy map.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOccupancy {
    resolution: f64,
    grid: DenseGrid<i8>,
}

impl GlobalOccupancy {
    pub fn new(bounds: &Aabb, resolution: f64) -> Self {
        GlobalOccupancy {
            resolution,
            grid: DenseGrid::covering(bounds, resolution, CellState::Unknown as i8),
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn get(&self, c: &CellIndex) -> CellState {
        match self.grid.get(c) {
            1 => CellState::Occupied,
            0 => CellState::Free,
            _ => CellState::Unknown,
        }
    }

    pub fn get_point(&self, p: &Vec3) -> CellState {
        self.get(&cell_of(p, self.resolution))
    }

    #[inline]
    pub(crate) fn raw(&self, c: &CellIndex) -> i8 {
        self.grid.get(c)
    }

    pub fn set(&mut self, c: &CellIndex, state: CellState) {
        if let Some(v) = self.grid.slot(c) {
            *v = state as i8;
        }
    }

    pub fn contains(&self, c: &CellIndex) -> bool {
        self.grid.contains(c)
    }

    pub fn clear(&mut self) {
        self.grid.data.fill(CellState::Unknown as i8);
    }

    /// Number of cells in each state `(unknown, free, occupied)` within the stored region.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut n = (0, 0, 0);
        for &v in &self.grid.data {
            match v {
                1 => n.2 += 1,
                0 => n.1 += 1,
                _ => n.0 += 1,
            }
        }
        n
    }

    /// Carves free space along every ray, then marks hit cells occupied.
    /// A cell both carved and hit in the same cloud ends occupied.
    pub fn integrate_pointcloud(&mut self, cloud: &PointCloud) {
        let grid = &mut self.grid;
        for p in &cloud.points {
            // Hit endpoints are carved too; the marking pass below overrides them.
            traverse_with(&cloud.origin, p, self.resolution, |c| {
                if let Some(v) = grid.slot(&c) {
                    *v = CellState::Free as i8;
                }
            });
        }
        for (p, &hit) in cloud.points.iter().zip(&cloud.hit) {
            if hit {
                let c = cell_of(p, self.resolution);
                self.set(&c, CellState::Occupied);
            }
        }
    }

    /// Flat binary snapshot:
    /// `b"SIMP"`, version u16, origin 3×f64 (world min corner), resolution f64,
    /// extents 3×u32, then one i8 per cell with x fastest, then y, then z.
    /// All little-endian.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(50 + self.grid.data.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        for i in 0..3 {
            out.extend_from_slice(&(self.grid.min[i] as f64 * self.resolution).to_le_bytes());
        }
        out.extend_from_slice(&self.resolution.to_le_bytes());
        for i in 0..3 {
            out.extend_from_slice(&(self.grid.dims[i] as u32).to_le_bytes());
        }
        out.extend(self.grid.data.iter().map(|&v| v as u8));
        out
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| SimError::parse("map snapshot", m);
        if bytes.len() < 50 || &bytes[0..4] != SNAPSHOT_MAGIC {
            return Err(err("bad magic or truncated header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != SNAPSHOT_VERSION {
            return Err(err(&format!("unsupported version {version}")));
        }
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let resolution = f(30);
        let dims = [u(38), u(42), u(46)];
        let min = [
            (f(6) / resolution).round() as i32,
            (f(14) / resolution).round() as i32,
            (f(22) / resolution).round() as i32,
        ];
        let n = dims[0] * dims[1] * dims[2];
        if bytes.len() != 50 + n {
            return Err(err(&format!("payload is {} bytes, expected {n}", bytes.len() - 50)));
        }
        let data: Vec<i8> = bytes[50..].iter().map(|&b| b as i8).collect();
        if data.iter().any(|&v| CellState::from_i8(v).is_none()) {
            return Err(err("cell value outside {-1, 0, 1}"));
        }
        Ok(GlobalOccupancy {
            resolution,
            grid: DenseGrid {
                min,
                dims,
                data,
                outside: CellState::Unknown as i8,
            },
        })
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        fs::write(path, self.snapshot_bytes()).map_err(|e| SimError::io(path, e))
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"SIMP";
const SNAPSHOT_VERSION: u16 = 1;

/// Per-cell visit counters from the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitGrid {
    resolution: f64,
    grid: DenseGrid<u32>,
    total: u64,
}

impl VisitGrid {
    pub fn new(bounds: &Aabb, resolution: f64) -> Self {
        VisitGrid {
            resolution,
            grid: DenseGrid::covering(bounds, resolution, 0),
            total: 0,
        }
    }

    pub fn record_visit(&mut self, position: &Vec3) {
        let c = cell_of(position, self.resolution);
        if let Some(v) = self.grid.slot(&c) {
            *v += 1;
            self.total += 1;
        }
    }

    pub fn count(&self, c: &CellIndex) -> u32 {
        self.grid.get(c)
    }

    pub fn count_at(&self, p: &Vec3) -> u32 {
        self.count(&cell_of(p, self.resolution))
    }

    /// Number of recorded samples.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn clear(&mut self) {
        self.grid.data.fill(0);
        self.total = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocalAlignment {
    /// Rotate by heading only; the local z axis stays vertical.
    #[default]
    Yaw,
    /// Rotate by the full body orientation.
    Full,
}

/// Ego-centric view of both maps. Flat index `(i·21 + j)·21 + k` with
/// `i` along body +x (forward), `j` along +y (left), `k` along +z (up);
/// the robot sits at `(10, 10, 10)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalContext {
    pub occupancy: Vec<i8>,
    pub svs: Vec<f64>,
    /// Sum of visit counts over the 21³ samples.
    pub n_t: u64,
}

impl LocalContext {
    pub fn index(i: usize, j: usize, k: usize) -> usize {
        (i * LOCAL_N + j) * LOCAL_N + k
    }
}

/// Body-frame offset of local cell `(i, j, k)` from the robot.
pub fn local_offset(i: usize, j: usize, k: usize, resolution: f64) -> Vec3 {
    Vec3::new(
        (i as f64 - LOCAL_CENTER as f64) * resolution,
        (j as f64 - LOCAL_CENTER as f64) * resolution,
        (k as f64 - LOCAL_CENTER as f64) * resolution,
    )
}

/// Samples both maps at the rotated local cell centers (nearest cell).
/// Each SVS value is `-p ln p` with `p = count / N_t`, and 0 for unvisited
/// cells or when `N_t = 0`.
pub fn extract_local(occ: &GlobalOccupancy, visits: &VisitGrid, body: &Pose, alignment: LocalAlignment) -> LocalContext {
    let r = occ.resolution;
    let rot = match alignment {
        LocalAlignment::Yaw => nalgebra::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), body.yaw()),
        LocalAlignment::Full => body.orientation,
    };
    let m = rot.to_rotation_matrix();
    let m = m.matrix();
    let ex = m.column(0).into_owned();
    let ey = m.column(1).into_owned();
    let ez = m.column(2).into_owned();
    let mut occupancy = vec![0i8; LOCAL_CELLS];
    let mut counts = vec![0u32; LOCAL_CELLS];
    let c = LOCAL_CENTER as f64;
    let mut idx = 0;
    for i in 0..LOCAL_N {
        let pi = body.position + ex * ((i as f64 - c) * r);
        for j in 0..LOCAL_N {
            let pj = pi + ey * ((j as f64 - c) * r);
            for k in 0..LOCAL_N {
                let p = pj + ez * ((k as f64 - c) * r);
                let cell = cell_of(&p, r);
                occupancy[idx] = occ.raw(&cell);
                counts[idx] = visits.count(&cell);
                idx += 1;
            }
        }
    }
    let n_t: u64 = counts.iter().map(|&c| c as u64).sum();
    let svs = svs_values(&counts, n_t);
    LocalContext { occupancy, svs, n_t }
}

/// `-p ln p` per cell with `p = count / total`.
pub fn svs_values(counts: &[u32], total: u64) -> Vec<f64> {
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    let n = total as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                let p = c as f64 / n;
                -p * p.ln()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> Aabb {
        Aabb::new(Vec3::repeat(-3.0), Vec3::repeat(3.0))
    }

    #[test]
    fn single_ray_carves_and_marks() {
        let mut map = GlobalOccupancy::new(&room(), 0.1);
        let cloud = PointCloud {
            origin: Vec3::zeros(),
            points: vec![Vec3::new(1.0, 0.0, 0.0)],
            hit: vec![true],
        };
        map.integrate_pointcloud(&cloud);
        for x in 0..10 {
            assert_eq!(map.get(&[x, 0, 0]), CellState::Free, "cell {x}");
        }
        assert_eq!(map.get(&[10, 0, 0]), CellState::Occupied);
        assert_eq!(map.get(&[11, 0, 0]), CellState::Unknown);
        assert_eq!(map.get(&[-1, 0, 0]), CellState::Unknown);
        assert_eq!(map.counts(), (map.counts().0, 10, 1));
    }

    #[test]
    fn empty_cloud_is_noop() {
        let mut map = GlobalOccupancy::new(&room(), 0.1);
        let before = map.clone();
        map.integrate_pointcloud(&PointCloud::empty(Vec3::zeros()));
        assert_eq!(map, before);
    }

    #[test]
    fn misses_carve_full_ray_and_occupied_wins() {
        let mut map = GlobalOccupancy::new(&room(), 0.1);
        let cloud = PointCloud {
            origin: Vec3::new(0.05, 0.05, 0.05),
            points: vec![Vec3::new(0.55, 0.05, 0.05), Vec3::new(1.05, 0.05, 0.05)],
            hit: vec![true, false],
        };
        map.integrate_pointcloud(&cloud);
        // Second ray carves through cell 5, first ray hits it.
        assert_eq!(map.get(&[5, 0, 0]), CellState::Occupied);
        assert_eq!(map.get(&[10, 0, 0]), CellState::Free);
        // A later cloud passing through the hit overwrites it.
        map.integrate_pointcloud(&PointCloud {
            origin: cloud.origin,
            points: vec![Vec3::new(1.05, 0.05, 0.05)],
            hit: vec![true],
        });
        assert_eq!(map.get(&[5, 0, 0]), CellState::Free);
        assert_eq!(map.get(&[10, 0, 0]), CellState::Occupied);
    }

    #[test]
    fn visits_accumulate() {
        let mut v = VisitGrid::new(&room(), 0.1);
        for _ in 0..10 {
            v.record_visit(&Vec3::new(0.01, 0.02, 0.03));
        }
        assert_eq!(v.count(&[0, 0, 0]), 10);
        for s in 0..10 {
            v.record_visit(&Vec3::new(0.05 + 0.1 * s as f64, 1.0, 1.0));
        }
        assert_eq!(v.total(), 20);
        for s in 0..10 {
            assert_eq!(v.count_at(&Vec3::new(0.05 + 0.1 * s as f64, 1.0, 1.0)), 1);
        }
        v.record_visit(&Vec3::new(0.09, 0.01, 0.01));
        assert_eq!(v.count(&[0, 0, 0]), 11);
    }

    #[test]
    fn local_window_rotates_with_yaw() {
        let mut occ = GlobalOccupancy::new(&room(), 0.1);
        let robot = Vec3::new(0.05, 0.05, 0.05);
        occ.set(&cell_of(&(robot + Vec3::new(0.0, 1.0, 0.0)), 0.1), CellState::Occupied);
        let visits = VisitGrid::new(&room(), 0.1);
        let body = Pose::from_yaw(robot, std::f64::consts::FRAC_PI_2);
        let local = extract_local(&occ, &visits, &body, LocalAlignment::Yaw);
        let occupied: Vec<usize> = (0..LOCAL_CELLS).filter(|&i| local.occupancy[i] == 1).collect();
        assert_eq!(occupied, vec![LocalContext::index(20, 10, 10)]);
        assert_eq!(local.n_t, 0);
        assert!(local.svs.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_visited_cell_has_zero_score() {
        let occ = GlobalOccupancy::new(&room(), 0.1);
        let mut visits = VisitGrid::new(&room(), 0.1);
        for _ in 0..7 {
            visits.record_visit(&Vec3::new(0.05, 0.05, 0.05));
        }
        let local = extract_local(&occ, &visits, &Pose::from_yaw(Vec3::new(0.05, 0.05, 0.05), 0.0), LocalAlignment::Yaw);
        assert_eq!(local.n_t, 7);
        assert!(local.svs.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut occ = GlobalOccupancy::new(&Aabb::new(Vec3::zeros(), Vec3::new(1.0, 0.5, 0.3)), 0.1);
        occ.set(&[2, 1, 0], CellState::Occupied);
        occ.set(&[3, 1, 0], CellState::Free);
        let bytes = occ.snapshot_bytes();
        let back = GlobalOccupancy::from_snapshot_bytes(&bytes).unwrap();
        assert_eq!(back.get(&[2, 1, 0]), CellState::Occupied);
        assert_eq!(back.get(&[3, 1, 0]), CellState::Free);
        assert_eq!(back.snapshot_bytes(), bytes);
        assert!(GlobalOccupancy::from_snapshot_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
