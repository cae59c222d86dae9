//! Per-step reward: face-coverage term with its best-distance ledger, the
//! visit-count search bonus, and the proximity penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::mapping::{LOCAL_CENTER, LOCAL_N};
use crate::sensors::{DepthImage, FaceIndexImage, SegMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Pay `n − s_f` on improvement; the episode sum of `f` equals the final `F`.
    #[default]
    Increment,
    /// Pay the full new score `n` on every improvement.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    /// Per-face peak score; `None` means `1 / face count`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub d_ref: f64,
    pub d_coll: f64,
    /// Focus rectangle side as a fraction of the image side.
    pub focus_fraction: f64,
    pub mode: RewardMode,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            alpha: None,
            beta: std::f64::consts::LN_2 / (0.25 * 0.25),
            gamma: 0.1,
            delta: 0.01,
            d_ref: 1.0,
            d_coll: 0.3,
            focus_fraction: 0.5,
            mode: RewardMode::Increment,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if let Some(a) = self.alpha {
            if !pos(a) {
                return Err(SimError::invalid("alpha must be positive"));
            }
        }
        if !(pos(self.beta) && pos(self.gamma) && pos(self.delta)) {
            return Err(SimError::invalid("beta, gamma and delta must be positive"));
        }
        if !pos(self.d_ref) || !(self.d_coll.is_finite() && self.d_coll >= 0.0) {
            return Err(SimError::invalid("d_ref must be positive and d_coll non-negative"));
        }
        if !(self.focus_fraction > 0.0 && self.focus_fraction <= 1.0) {
            return Err(SimError::invalid("focus_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn alpha_for(&self, face_count: usize) -> f64 {
        self.alpha.unwrap_or(1.0 / face_count.max(1) as f64)
    }
}

/// Score of a face observed at mean distance `d`.
pub fn face_score(d: f64, alpha: f64, beta: f64, d_ref: f64) -> f64 {
    alpha * (-beta * (d - d_ref).powi(2)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub f: f64,
    pub v: f64,
    pub p: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.f + self.v + self.p
    }
}

/// Centered rectangle covering `fraction` of each image side. Sizes are
/// floored; an odd leftover pixel goes to the high side, so the rectangle
/// sits one pixel toward the low side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FocusRect {
    pub col0: usize,
    pub row0: usize,
    pub cols: usize,
    pub rows: usize,
}

impl FocusRect {
    pub fn new(width: usize, height: usize, fraction: f64) -> Self {
        let cols = ((width as f64 * fraction).floor() as usize).clamp(1, width.max(1));
        let rows = ((height as f64 * fraction).floor() as usize).clamp(1, height.max(1));
        FocusRect {
            col0: (width - cols) / 2,
            row0: (height - rows) / 2,
            cols,
            rows,
        }
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.col0 && col < self.col0 + self.cols && row >= self.row0 && row < self.row0 + self.rows
    }

    /// Same test for fractional pixel coordinates.
    pub fn contains_point(&self, col: f64, row: f64) -> bool {
        col >= self.col0 as f64
            && col < (self.col0 + self.cols) as f64
            && row >= self.row0 as f64
            && row < (self.row0 + self.rows) as f64
    }
}

pub fn focus_mask(width: usize, height: usize, fraction: f64) -> SegMask {
    let rect = FocusRect::new(width, height, fraction);
    let mut values = vec![0u8; width * height];
    for row in rect.row0..rect.row0 + rect.rows {
        for col in rect.col0..rect.col0 + rect.cols {
            values[row * width + col] = 1;
        }
    }
    SegMask { width, height, values }
}

/// Best-distance record for every face of one semantic object.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceLedger {
    object_id: u32,
    alpha: f64,
    beta: f64,
    d_ref: f64,
    mode: RewardMode,
    best: Vec<Option<f64>>,
    score: Vec<f64>,
    coverage: f64,
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl FaceLedger {
    pub fn new(object_id: u32, face_count: usize, params: &RewardParams) -> Self {
        FaceLedger {
            object_id,
            alpha: params.alpha_for(face_count),
            beta: params.beta,
            d_ref: params.d_ref,
            mode: params.mode,
            best: vec![None; face_count],
            score: vec![0.0; face_count],
            coverage: 0.0,
            sums: vec![0.0; face_count],
            counts: vec![0; face_count],
        }
    }

    pub fn object_id(&self) -> u32 {
        self.object_id
    }

    pub fn face_count(&self) -> usize {
        self.best.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d_ref(&self) -> f64 {
        self.d_ref
    }

    /// Best mean distance seen so far for `face`.
    pub fn best_distance(&self, face: usize) -> Option<f64> {
        self.best[face]
    }

    pub fn score(&self, face: usize) -> f64 {
        self.score[face]
    }

    /// Cumulative coverage functional `F = Σ s_f`.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    /// Scores every face visible inside `focus` this frame. Returns the face
    /// reward `f` for the step.
    pub fn update(&mut self, faces: &FaceIndexImage, depth: &DepthImage, focus: &SegMask) -> Result<f64> {
        if (faces.width, faces.height) != (depth.width, depth.height)
            || (faces.width, faces.height) != (focus.width, focus.height)
        {
            return Err(SimError::invalid(format!(
                "image shapes differ: faces {}x{}, depth {}x{}, focus {}x{}",
                faces.width, faces.height, depth.width, depth.height, focus.width, focus.height
            )));
        }
        self.sums.fill(0.0);
        self.counts.fill(0);
        for ((face, &d), &m) in faces.values.iter().zip(&depth.values).zip(&focus.values) {
            if m == 0 || d <= 0.0 {
                continue;
            }
            if let Some(fr) = face {
                if fr.object_id == self.object_id {
                    let i = fr.face_id as usize;
                    if i < self.sums.len() {
                        self.sums[i] += d;
                        self.counts[i] += 1;
                    }
                }
            }
        }
        let mut reward = 0.0;
        for i in 0..self.best.len() {
            if self.counts[i] == 0 {
                continue;
            }
            let d = self.sums[i] / self.counts[i] as f64;
            let improved = match self.best[i] {
                None => true,
                Some(b) => (d - self.d_ref).abs() < (b - self.d_ref).abs(),
            };
            if !improved {
                continue;
            }
            let n = face_score(d, self.alpha, self.beta, self.d_ref);
            reward += match self.mode {
                RewardMode::Increment => n - self.score[i],
                RewardMode::Literal => n,
            };
            self.score[i] = n;
            self.best[i] = Some(d);
        }
        self.coverage = self.score.iter().sum();
        Ok(reward)
    }
}

/// `γ·exp(−δ·N_t)`.
pub fn semantic_search_reward(n_t: u64, params: &RewardParams) -> f64 {
    params.gamma * (-params.delta * n_t as f64).exp()
}

/// −1 if any occupied local cell center lies strictly within `d_coll` of
/// the grid center, else 0. Distances are compared in squared cell units,
/// with the threshold rounded to 1e-9 so that e.g. 0.3 m at 0.1 m cells is
/// exactly 9 and a cell at exactly `d_coll` does not count.
pub fn collision_penalty(local_occupancy: &[i8], resolution: f64, d_coll: f64) -> f64 {
    debug_assert_eq!(local_occupancy.len(), LOCAL_N * LOCAL_N * LOCAL_N);
    let ratio = d_coll / resolution;
    let limit = (ratio * ratio * 1e9).round() / 1e9;
    let reach = (ratio.ceil() as usize).min(LOCAL_CENTER);
    let c = LOCAL_CENTER;
    for i in c - reach..=c + reach {
        let di = i as i64 - c as i64;
        for j in c - reach..=c + reach {
            let dj = j as i64 - c as i64;
            for k in c - reach..=c + reach {
                let dk = k as i64 - c as i64;
                let d2 = (di * di + dj * dj + dk * dk) as f64;
                if d2 < limit && local_occupancy[(i * LOCAL_N + j) * LOCAL_N + k] == 1 {
                    return -1.0;
                }
            }
        }
    }
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{LocalContext, LOCAL_CELLS};
    use crate::sensors::FaceRef;

    fn frame(w: usize, h: usize, pixels: &[(usize, u32, f64)]) -> (FaceIndexImage, DepthImage) {
        let mut faces = FaceIndexImage {
            width: w,
            height: h,
            values: vec![None; w * h],
        };
        let mut depth = DepthImage::zeros(w, h, 10.0);
        for &(i, face, d) in pixels {
            faces.values[i] = Some(FaceRef {
                object_id: 7,
                face_id: face,
            });
            depth.values[i] = d;
        }
        (faces, depth)
    }

    #[test]
    fn focus_rect_examples() {
        let r = FocusRect::new(96, 54, 0.5);
        assert_eq!(r, FocusRect { col0: 24, row0: 13, cols: 48, rows: 27 });
        assert_eq!(focus_mask(96, 54, 0.5).count(), 1296);
        let m = focus_mask(2, 2, 0.5);
        assert_eq!(m.values, vec![1, 0, 0, 0]);
        for (w, h) in [(5, 7), (10, 3), (1, 1), (33, 20)] {
            let n = focus_mask(w, h, 0.5).count() as f64;
            let full = (w * h) as f64;
            let fw = (w as f64 / 2.0).floor().max(1.0);
            let fh = (h as f64 / 2.0).floor().max(1.0);
            assert_eq!(n, fw * fh, "{w}x{h}");
            assert!(n <= full);
        }
    }

    #[test]
    fn first_view_at_reference_pays_alpha() {
        let params = RewardParams::default();
        let mut ledger = FaceLedger::new(7, 60, &params);
        let focus = SegMask { width: 4, height: 1, values: vec![1; 4] };
        let (faces, depth) = frame(4, 1, &[(0, 3, 1.0), (1, 3, 1.0)]);
        let f = ledger.update(&faces, &depth, &focus).unwrap();
        assert!((f - 1.0 / 60.0).abs() < 1e-12);
        assert!((f - 0.016667).abs() < 1e-6);
        assert_eq!(ledger.update(&faces, &depth, &focus).unwrap(), 0.0);
        assert_eq!(ledger.best_distance(3), Some(1.0));
    }

    #[test]
    fn half_score_then_full() {
        let params = RewardParams::default();
        let mut ledger = FaceLedger::new(7, 60, &params);
        let alpha = ledger.alpha();
        let focus = SegMask { width: 1, height: 1, values: vec![1] };
        let (faces, depth) = frame(1, 1, &[(0, 0, 1.25)]);
        let f1 = ledger.update(&faces, &depth, &focus).unwrap();
        assert!((f1 - 0.5 * alpha).abs() < 1e-12);
        let (faces, depth) = frame(1, 1, &[(0, 0, 1.0)]);
        let f2 = ledger.update(&faces, &depth, &focus).unwrap();
        assert!((f2 - 0.5 * alpha).abs() < 1e-12);
        assert!((ledger.coverage() - alpha).abs() < 1e-12);

        let literal = RewardParams {
            mode: RewardMode::Literal,
            ..params
        };
        let mut ledger = FaceLedger::new(7, 60, &literal);
        let (faces, depth) = frame(1, 1, &[(0, 0, 1.25)]);
        ledger.update(&faces, &depth, &focus).unwrap();
        let (faces, depth) = frame(1, 1, &[(0, 0, 1.0)]);
        assert!((ledger.update(&faces, &depth, &focus).unwrap() - alpha).abs() < 1e-12);
        assert!((ledger.coverage() - alpha).abs() < 1e-12);
    }

    #[test]
    fn only_focus_pixels_of_this_object_count() {
        let params = RewardParams::default();
        let mut ledger = FaceLedger::new(7, 4, &params);
        let focus = SegMask { width: 3, height: 1, values: vec![0, 1, 1] };
        let (mut faces, depth) = frame(3, 1, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        faces.values[2] = Some(FaceRef { object_id: 8, face_id: 2 });
        ledger.update(&faces, &depth, &focus).unwrap();
        assert_eq!(ledger.best_distance(0), None);
        assert_eq!(ledger.best_distance(1), Some(1.0));
        assert_eq!(ledger.best_distance(2), None);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut ledger = FaceLedger::new(7, 4, &RewardParams::default());
        let (faces, depth) = frame(3, 1, &[]);
        let focus = SegMask { width: 2, height: 1, values: vec![1; 2] };
        assert!(matches!(ledger.update(&faces, &depth, &focus), Err(SimError::InvalidArgument(_))));
    }

    #[test]
    fn search_reward_values() {
        let p = RewardParams::default();
        assert_eq!(semantic_search_reward(0, &p), p.gamma);
        assert!((semantic_search_reward(100, &p) - 0.1 * (-1f64).exp()).abs() < 1e-15);
        assert!((semantic_search_reward(100, &p) - 0.036788).abs() < 1e-6);
        assert!(semantic_search_reward(10, &p) > semantic_search_reward(11, &p));
    }

    #[test]
    fn penalty_boundary() {
        let c = LOCAL_CENTER;
        let with = |di: i32, dj: i32, dk: i32| {
            let mut g = vec![0i8; LOCAL_CELLS];
            let idx = |d: i32| (c as i32 + d) as usize;
            g[LocalContext::index(idx(di), idx(dj), idx(dk))] = 1;
            collision_penalty(&g, 0.1, 0.3)
        };
        assert_eq!(with(2, 1, 1), -1.0); // 0.245 m
        assert_eq!(with(3, 0, 0), 0.0); // exactly 0.30 m
        assert_eq!(with(0, -3, 0), 0.0);
        assert_eq!(with(2, 2, 0), -1.0); // 0.283 m
        assert_eq!(with(3, 1, 0), 0.0); // 0.316 m
        assert_eq!(with(0, 0, 0), -1.0);
        assert_eq!(collision_penalty(&vec![0i8; LOCAL_CELLS], 0.1, 0.3), 0.0);
        // Unknown cells never count.
        assert_eq!(collision_penalty(&vec![-1i8; LOCAL_CELLS], 0.1, 0.3), 0.0);
    }
}
