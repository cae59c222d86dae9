//! Bounding volume hierarchy over world-space scene triangles.
//!
//! Built with binned SAH. Traversal visits the nearer child first and
//! prunes a node only when its entry distance is strictly greater than the
//! best hit so far, so equal-distance candidates are still compared by the
//! `(t, object_id, face_id)` ordering and results match a linear scan.

use crate::geom::{Aabb, Vec3, RAY_T_MIN};

/// A triangle with its scene payload. `e1`/`e2` are edge vectors from `v0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneTriangle {
    pub v0: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub object_id: u32,
    pub face_id: u32,
}

impl SceneTriangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3, object_id: u32, face_id: u32) -> Self {
        SceneTriangle {
            v0: a,
            e1: b - a,
            e2: c - a,
            object_id,
            face_id,
        }
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.v0, self.v0 + self.e1, self.v0 + self.e2]
    }

    pub fn aabb(&self) -> Aabb {
        let [a, b, c] = self.vertices();
        Aabb::from_points([a, b, c].iter())
    }

    pub fn centroid(&self) -> Vec3 {
        self.v0 + (self.e1 + self.e2) / 3.0
    }

    /// Möller–Trumbore on the stored edges, inclusive edges, both sides.
    #[inline]
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<f64> {
        let pvec = dir.cross(&self.e2);
        let det = self.e1.dot(&pvec);
        if det == 0.0 {
            return None;
        }
        let inv_det = 1.0 / det;
        let tvec = origin - self.v0;
        let u = tvec.dot(&pvec) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let qvec = tvec.cross(&self.e1);
        let v = dir.dot(&qvec) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = self.e2.dot(&qvec) * inv_det;
        if t > RAY_T_MIN && t <= t_max {
            Some(t)
        } else {
            None
        }
    }

    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let [a, b, c] = self.vertices();
        crate::geom::closest_point_on_triangle(p, &a, &b, &c)
    }
}

/// Ordering used to pick among hits: nearest first, then ids.
#[inline]
pub fn hit_precedes(t: f64, tri: &SceneTriangle, best_t: f64, best: &SceneTriangle) -> bool {
    (t, tri.object_id, tri.face_id) < (best_t, best.object_id, best.face_id)
}

/// Ray prepared for repeated slab tests. Planes are picked by direction
/// sign, so each axis costs two subtractions and two multiplies. Zero
/// direction components give infinite inverses; the resulting NaNs are
/// ignored by `max`/`min`, which keeps the test conservative.
struct SlabRay {
    o: [f64; 3],
    inv: [f64; 3],
    neg: [bool; 3],
}

impl SlabRay {
    fn new(origin: &Vec3, dir: &Vec3) -> Self {
        let inv = [1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z];
        SlabRay {
            o: [origin.x, origin.y, origin.z],
            inv,
            neg: [inv[0] < 0.0, inv[1] < 0.0, inv[2] < 0.0],
        }
    }

    #[inline(always)]
    fn entry(&self, b: &Aabb, t_max: f64) -> Option<f64> {
        let (lo, hi) = (&b.min, &b.max);
        let axis = |i: usize| {
            let (n, f) = if self.neg[i] { (hi[i], lo[i]) } else { (lo[i], hi[i]) };
            ((n - self.o[i]) * self.inv[i], (f - self.o[i]) * self.inv[i])
        };
        let (nx, fx) = axis(0);
        let (ny, fy) = axis(1);
        let (nz, fz) = axis(2);
        let t0 = nx.max(ny).max(nz).max(0.0);
        let t1 = fx.min(fy).min(fz).min(t_max);
        if t0 <= t1 {
            Some(t0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle. Interior: index of left child (right = left + 1).
    first: u32,
    /// Triangle count; zero marks an interior node.
    count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    triangles: Vec<SceneTriangle>,
}

const LEAF_SIZE: usize = 4;
const BINS: usize = 12;
const MAX_SAH_DEPTH: usize = 60;
/// Node boxes are inflated so rounding in the slab test can never cull a
/// triangle hit the linear scan would report.
const BOX_PAD: f64 = 1e-7;

impl Bvh {
    pub fn build(mut triangles: Vec<SceneTriangle>) -> Self {
        let mut nodes = Vec::with_capacity(2 * triangles.len().max(1));
        let n = triangles.len();
        nodes.push(Node {
            bounds: Aabb::empty(),
            first: 0,
            count: n as u32,
        });
        if n > 0 {
            let mut centroids: Vec<Vec3> = triangles.iter().map(|t| t.centroid()).collect();
            let mut boxes: Vec<Aabb> = triangles.iter().map(|t| t.aabb()).collect();
            build_node(&mut nodes, 0, &mut triangles, &mut centroids, &mut boxes, 0, n, 0);
        }
        Bvh { nodes, triangles }
    }

    /// Triangles in traversal order.
    pub fn triangles(&self) -> &[SceneTriangle] {
        &self.triangles
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Leaf triangle ranges; these partition `0..triangles().len()`.
    pub fn leaf_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        if self.triangles.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.count > 0 {
                out.push(node.first as usize..(node.first + node.count) as usize);
            } else {
                stack.push(node.first as usize);
                stack.push(node.first as usize + 1);
            }
        }
        out
    }

    /// Nearest hit as `(t, triangle index)`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<(f64, usize)> {
        if self.triangles.is_empty() {
            return None;
        }
        let ray = SlabRay::new(origin, dir);
        let mut best: Option<(f64, usize)> = None;
        let mut best_t = t_max;
        // Each entry carries the node's entry distance so subtrees queued
        // before a closer hit was found can be skipped on pop.
        let mut stack = [(0u32, 0.0f64); 128];
        let mut sp = 0usize;
        let Some(t_root) = ray.entry(&self.nodes[0].bounds, t_max) else {
            return None;
        };
        stack[sp] = (0, t_root);
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let (idx, t_entry) = stack[sp];
            if t_entry > best_t {
                continue;
            }
            let node = &self.nodes[idx as usize];
            if node.count > 0 {
                let start = node.first as usize;
                for i in start..start + node.count as usize {
                    let tri = &self.triangles[i];
                    if let Some(t) = tri.intersect(origin, dir, best_t) {
                        let better = match best {
                            None => true,
                            Some((bt, bi)) => hit_precedes(t, tri, bt, &self.triangles[bi]),
                        };
                        if better {
                            best = Some((t, i));
                            best_t = t;
                        }
                    }
                }
                continue;
            }
            let l = node.first;
            let r = l + 1;
            let tl = ray.entry(&self.nodes[l as usize].bounds, best_t);
            let tr = ray.entry(&self.nodes[r as usize].bounds, best_t);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    let (near, far) = if a <= b { ((l, a), (r, b)) } else { ((r, b), (l, a)) };
                    stack[sp] = far;
                    stack[sp + 1] = near;
                    sp += 2;
                }
                (Some(a), None) => {
                    stack[sp] = (l, a);
                    sp += 1;
                }
                (None, Some(b)) => {
                    stack[sp] = (r, b);
                    sp += 1;
                }
                (None, None) => {}
            }
        }
        best
    }

    /// Closest surface point within `max_dist`, as `(distance, triangle index)`.
    pub fn nearest(&self, p: &Vec3, max_dist: f64) -> Option<(f64, usize)> {
        if self.triangles.is_empty() {
            return None;
        }
        let mut best_sq = max_dist * max_dist;
        let mut best: Option<usize> = None;
        let mut stack = [0u32; 128];
        let mut sp = 1usize;
        stack[0] = 0;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.distance_sq(p) > best_sq {
                continue;
            }
            if node.count > 0 {
                let start = node.first as usize;
                for i in start..start + node.count as usize {
                    let q = self.triangles[i].closest_point(p);
                    let d = (q - p).norm_squared();
                    if d < best_sq || (d == best_sq && best.is_none()) {
                        best_sq = d;
                        best = Some(i);
                    }
                }
                continue;
            }
            let l = node.first as usize;
            let r = l + 1;
            let dl = self.nodes[l].bounds.distance_sq(p);
            let dr = self.nodes[r].bounds.distance_sq(p);
            let (near, far) = if dl <= dr { (l, r) } else { (r, l) };
            stack[sp] = far as u32;
            stack[sp + 1] = near as u32;
            sp += 2;
        }
        best.map(|i| (best_sq.sqrt(), i))
    }
}

#[allow(clippy::too_many_arguments)]
fn build_node(
    nodes: &mut Vec<Node>,
    index: usize,
    tris: &mut [SceneTriangle],
    centroids: &mut [Vec3],
    boxes: &mut [Aabb],
    start: usize,
    end: usize,
    depth: usize,
) {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for i in start..end {
        bounds = bounds.union(&boxes[i]);
        cbounds.grow(&centroids[i]);
    }
    nodes[index].bounds = bounds.expanded(BOX_PAD);
    nodes[index].first = start as u32;
    nodes[index].count = (end - start) as u32;
    let count = end - start;
    if count <= LEAF_SIZE {
        return;
    }

    let extent = cbounds.extent();
    let leaf_cost = count as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for axis in 0..3 {
        if extent[axis] <= 0.0 {
            continue;
        }
        let mut bin_boxes = [Aabb::empty(); BINS];
        let mut bin_counts = [0usize; BINS];
        let scale = BINS as f64 / extent[axis];
        for i in start..end {
            let b = (((centroids[i][axis] - cbounds.min[axis]) * scale) as usize).min(BINS - 1);
            bin_counts[b] += 1;
            bin_boxes[b] = bin_boxes[b].union(&boxes[i]);
        }
        let mut left_area = [0.0; BINS];
        let mut left_count = [0usize; BINS];
        let mut acc = Aabb::empty();
        let mut n = 0;
        for b in 0..BINS {
            acc = acc.union(&bin_boxes[b]);
            n += bin_counts[b];
            left_area[b] = acc.surface_area();
            left_count[b] = n;
        }
        let mut acc = Aabb::empty();
        let mut n = 0;
        let parent_area = bounds.surface_area().max(1e-300);
        for b in (1..BINS).rev() {
            acc = acc.union(&bin_boxes[b]);
            n += bin_counts[b];
            let nl = left_count[b - 1];
            if nl == 0 || n == 0 {
                continue;
            }
            let cost = 0.5 + (left_area[b - 1] * nl as f64 + acc.surface_area() * n as f64) / parent_area;
            let split = cbounds.min[axis] + b as f64 / scale;
            if best.map_or(true, |(c, _, _)| cost < c) {
                best = Some((cost, axis, split));
            }
        }
    }

    let mid = match best {
        // Deep trees fall through to a median split, which bounds depth.
        _ if depth >= MAX_SAH_DEPTH => start,
        Some((cost, axis, split)) if cost < leaf_cost || count > 4 * LEAF_SIZE => {
            partition(tris, centroids, boxes, start, end, |c| c[axis] < split)
        }
        _ => return,
    };
    let mid = if mid == start || mid == end {
        // All centroids coincide on the split: fall back to a median split.
        let axis = extent.imax();
        let mut order: Vec<usize> = (start..end).collect();
        order.sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let t2: Vec<_> = order.iter().map(|&i| tris[i]).collect();
        let c2: Vec<_> = order.iter().map(|&i| centroids[i]).collect();
        let b2: Vec<_> = order.iter().map(|&i| boxes[i]).collect();
        tris[start..end].copy_from_slice(&t2);
        centroids[start..end].copy_from_slice(&c2);
        boxes[start..end].copy_from_slice(&b2);
        start + count / 2
    } else {
        mid
    };

    let left = nodes.len();
    nodes.push(Node {
        bounds: Aabb::empty(),
        first: 0,
        count: 0,
    });
    nodes.push(Node {
        bounds: Aabb::empty(),
        first: 0,
        count: 0,
    });
    nodes[index].first = left as u32;
    nodes[index].count = 0;
    build_node(nodes, left, tris, centroids, boxes, start, mid, depth + 1);
    build_node(nodes, left + 1, tris, centroids, boxes, mid, end, depth + 1);
}

fn partition(
    tris: &mut [SceneTriangle],
    centroids: &mut [Vec3],
    boxes: &mut [Aabb],
    start: usize,
    end: usize,
    goes_left: impl Fn(&Vec3) -> bool,
) -> usize {
    let mut i = start;
    let mut j = end;
    while i < j {
        if goes_left(&centroids[i]) {
            i += 1;
        } else {
            j -= 1;
            tris.swap(i, j);
            centroids.swap(i, j);
            boxes.swap(i, j);
        }
    }
    i
}
