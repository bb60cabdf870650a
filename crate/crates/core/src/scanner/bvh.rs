//! Bounding-volume hierarchy over a triangle soup, in f64.

use crate::geometry::{Aabb3, Vec3};
use crate::mesh::TriangleMesh;

/// Hits closer than this along the ray are ignored.
pub const T_MIN: f64 = 1e-9;
const LEAF_SIZE: usize = 4;
const PARALLEL_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
    /// Barycentric weights of vertices 1 and 2.
    pub u: f64,
    pub v: f64,
}

impl Hit {
    /// Strict ordering by `(t, triangle)`.
    pub fn better_than(&self, other: &Hit) -> bool {
        self.t < other.t || (self.t == other.t && self.triangle < other.triangle)
    }
}

/// Möller–Trumbore ray/triangle test. `dir` need not be normalized; the
/// returned `t` is in units of `dir`.
pub fn intersect_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < PARALLEL_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > T_MIN).then_some((t, u, v))
}

/// Closest point on a triangle to `p`.
pub fn closest_point_on_triangle(p: &Vec3, tri: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb3,
    /// Leaf: range into `order`; inner: child indices.
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    triangles: Vec<[Vec3; 3]>,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let triangles: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|t| mesh.triangle(t)).collect();
        Self::from_triangles(triangles)
    }

    pub fn from_triangles(triangles: Vec<[Vec3; 3]>) -> Self {
        let mut bvh = Self { order: (0..triangles.len()).collect(), triangles, nodes: Vec::new() };
        if !bvh.triangles.is_empty() {
            let centroids: Vec<Vec3> = bvh.triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
            bvh.build(0, bvh.order.len(), &centroids);
        }
        bvh
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.triangles
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let bounds = Aabb3::from_points(self.order[start..end].iter().flat_map(|&t| self.triangles[t].iter()));
        let index = self.nodes.len();
        self.nodes.push(Node { bounds, start, count: end - start, left: 0, right: 0 });
        if end - start <= LEAF_SIZE {
            return index;
        }
        let cb = Aabb3::from_points(self.order[start..end].iter().map(|&t| &centroids[t]));
        let size = cb.size();
        let axis = if size.x >= size.y && size.x >= size.z {
            0
        } else if size.y >= size.z {
            1
        } else {
            2
        };
        if size[axis] <= 0.0 {
            return index;
        }
        let mid = (start + end) / 2;
        // Ties on the centroid fall back to the triangle index so the tree
        // shape is a pure function of the input.
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
        });
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        let node = &mut self.nodes[index];
        node.count = 0;
        node.left = left;
        node.right = right;
        index
    }

    /// Nearest hit with `t <= t_max`; equal `t` resolves to the lower
    /// triangle index.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let limit = best.map_or(t_max, |h| h.t);
            match node.bounds.ray_entry(origin, &inv, limit) {
                None => continue,
                Some(entry) if entry > limit => continue,
                _ => {}
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    if let Some((tt, u, v)) = intersect_triangle(origin, dir, &self.triangles[t]) {
                        let hit = Hit { t: tt, triangle: t, u, v };
                        if tt <= t_max && best.is_none_or(|b| hit.better_than(&b)) {
                            best = Some(hit);
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        best
    }

    /// Unaccelerated reference for [`Bvh::intersect`].
    pub fn intersect_brute_force(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some((tt, u, v)) = intersect_triangle(origin, dir, tri) {
                let hit = Hit { t: tt, triangle: t, u, v };
                if tt <= t_max && best.is_none_or(|b| hit.better_than(&b)) {
                    best = Some(hit);
                }
            }
        }
        best
    }

    /// Visits every triangle whose box lies within `radius_sq` of `p`,
    /// letting `visit` shrink the radius as it goes.
    pub fn nearest_visit(&self, p: &Vec3, mut radius_sq: f64, mut visit: impl FnMut(usize, f64) -> f64) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.distance_sq(p) > radius_sq {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    let q = closest_point_on_triangle(p, &self.triangles[t]);
                    radius_sq = visit(t, (q - p).norm_squared());
                }
            } else {
                let (l, r) = (node.left, node.right);
                let dl = self.nodes[l].bounds.distance_sq(p);
                let dr = self.nodes[r].bounds.distance_sq(p);
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
    }
}
