//! Reference implementations shared by the integration and acceptance tests.
//! They trade speed for directness and share no code with the library paths
//! they check.

#![allow(dead_code)]

use std::collections::HashMap;

use semantic_inspect::geom::Vec3;
use semantic_inspect::mapping::CellIndex;
use semantic_inspect::sensors::{FaceIndexImage, PointCloud};

/// Overlap below this (in segment parameter units) counts as a touch, not a crossing.
pub const GRAZE: f64 = 1e-9;

/// Cell crossed by a segment: where it enters and how long it stays, both
/// as fractions of the segment.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub cell: CellIndex,
    pub t_enter: f64,
    pub overlap: f64,
}

/// Every cell whose box meets the segment `o → e`, by clipping the segment
/// against each candidate box. Sorted by entry parameter.
pub fn crossings(o: &Vec3, e: &Vec3, res: f64) -> Vec<Crossing> {
    let lo = |a: f64, b: f64| (a.min(b) / res).floor() as i32 - 1;
    let hi = |a: f64, b: f64| (a.max(b) / res).floor() as i32 + 1;
    let d = e - o;
    let mut out = Vec::new();
    for x in lo(o.x, e.x)..=hi(o.x, e.x) {
        for y in lo(o.y, e.y)..=hi(o.y, e.y) {
            for z in lo(o.z, e.z)..=hi(o.z, e.z) {
                let cell = [x, y, z];
                let (mut t0, mut t1) = (0.0f64, 1.0f64);
                let mut empty = false;
                for a in 0..3 {
                    let (bmin, bmax) = (cell[a] as f64 * res, (cell[a] + 1) as f64 * res);
                    if d[a] == 0.0 {
                        if o[a] < bmin || o[a] >= bmax {
                            empty = true;
                        }
                        continue;
                    }
                    let (ta, tb) = ((bmin - o[a]) / d[a], (bmax - o[a]) / d[a]);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if !empty && t1 >= t0 - GRAZE {
                    out.push(Crossing { cell, t_enter: t0, overlap: t1 - t0 });
                }
            }
        }
    }
    out.sort_by(|a, b| a.t_enter.total_cmp(&b.t_enter));
    out
}

/// Compares a traversal against [`crossings`]: every cell the segment
/// truly crosses must appear, in order, and every visited cell must at
/// least touch the segment. Returns the number of cells compared.
pub fn check_traversal(o: &Vec3, e: &Vec3, res: f64, visited: &[CellIndex]) -> Result<usize, String> {
    let all = crossings(o, e, res);
    let end = [0, 1, 2].map(|a| (e[a] / res).floor() as i32);
    let required: Vec<CellIndex> = all
        .iter()
        .filter(|c| c.overlap > GRAZE || c.cell == end)
        .map(|c| c.cell)
        .collect();
    let touching: Vec<CellIndex> = all.iter().map(|c| c.cell).collect();
    for c in visited {
        if !touching.contains(c) {
            return Err(format!("visited {c:?}, which the segment never touches"));
        }
    }
    let kept: Vec<CellIndex> = visited.iter().copied().filter(|c| required.contains(c)).collect();
    if kept != required {
        return Err(format!("crossed cells {required:?}\nvisited {visited:?}"));
    }
    Ok(required.len())
}

/// Map built by carving every ray with [`crossings`] and then marking hit
/// endpoints. Cells absent from the map are unknown.
pub fn carve_reference(cloud: &PointCloud, res: f64) -> HashMap<CellIndex, i8> {
    let mut map = HashMap::new();
    for p in &cloud.points {
        let end = [0, 1, 2].map(|a| (p[a] / res).floor() as i32);
        for c in crossings(&cloud.origin, p, res) {
            if c.overlap > GRAZE || c.cell == end {
                map.insert(c.cell, 0);
            }
        }
    }
    for (p, &hit) in cloud.points.iter().zip(&cloud.hit) {
        if hit {
            map.insert([0, 1, 2].map(|a| (p[a] / res).floor() as i32), 1);
        }
    }
    map
}

/// Per-face mean depth of one frame over in-focus pixels of `object_id`.
pub fn frame_face_means(
    faces: &FaceIndexImage,
    depth: &[f64],
    focus: &[u8],
    object_id: u32,
    face_count: usize,
) -> Vec<Option<f64>> {
    let mut acc: Vec<Vec<f64>> = vec![Vec::new(); face_count];
    for i in 0..depth.len() {
        if focus[i] == 0 || depth[i] <= 0.0 {
            continue;
        }
        if let Some(fr) = faces.values[i] {
            if fr.object_id == object_id {
                acc[fr.face_id as usize].push(depth[i]);
            }
        }
    }
    acc.into_iter()
        .map(|v| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

/// Recomputes the coverage functional from the complete frame history:
/// each face scores at the frame mean closest to `d_ref`.
pub fn rescan_coverage(history: &[Vec<Option<f64>>], alpha: f64, beta: f64, d_ref: f64) -> f64 {
    let Some(first) = history.first() else { return 0.0 };
    (0..first.len())
        .map(|f| {
            history
                .iter()
                .filter_map(|frame| frame[f])
                .map(|d| alpha * (-beta * (d - d_ref) * (d - d_ref)).exp())
                .fold(0.0, f64::max)
        })
        .sum()
}

/// Face reward of the last frame in `history` when every strict
/// improvement pays the full new score.
pub fn rescan_literal_step(history: &[Vec<Option<f64>>], alpha: f64, beta: f64, d_ref: f64) -> f64 {
    let Some((last, before)) = history.split_last() else { return 0.0 };
    (0..last.len())
        .filter_map(|f| {
            let d = last[f]?;
            let best_before = before.iter().filter_map(|fr| fr[f]).map(|b| (b - d_ref).abs()).fold(f64::INFINITY, f64::min);
            ((d - d_ref).abs() < best_before).then(|| alpha * (-beta * (d - d_ref) * (d - d_ref)).exp())
        })
        .sum()
}
