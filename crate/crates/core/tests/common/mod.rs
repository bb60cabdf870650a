//! Fixtures and independent reference implementations shared by the
//! integration tests. Nothing here calls into the library code it checks.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use scenesynth::geometry::{Aabb3, Orientation, Vec3};
use scenesynth::layout::{Placement, SceneLayout};
use scenesynth::pipeline::PipelineConfig;
use scenesynth::relations::{Direction, DirectionalKind, SpatialRelation};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn demo_manifest() -> PathBuf {
    repo_root().join("assets/demo/manifest.json")
}

/// The shipped desk-scale config, writing to `out`.
pub fn desk_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&repo_root().join("configs/desk.toml")).expect("desk config parses");
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn demo_pair_map() -> BTreeMap<String, String> {
    serde_json::from_slice(&std::fs::read(repo_root().join("assets/demo/pair_map.json")).unwrap()).unwrap()
}

/// Every file below `root`, keyed by relative path.
pub fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

// ---------------------------------------------------------------- FPS

/// Greedy farthest point sampling, recomputing every distance from scratch.
pub fn fps_oracle(points: &[[f64; 3]], k: usize, first: usize) -> Vec<usize> {
    if points.len() <= k {
        return (0..points.len()).collect();
    }
    if k == 0 {
        return Vec::new();
    }
    let d2 = |a: &[f64; 3], b: &[f64; 3]| {
        let (x, y, z) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
        x * x + y * y + z * z
    };
    let mut chosen = vec![first];
    while chosen.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            let nearest = chosen.iter().map(|&c| d2(p, &points[c])).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| nearest > bd) {
                best = Some((nearest, i));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

// ---------------------------------------------------------------- layout

/// Plain-grid layout problem: objects are `(width, depth)` in meters,
/// relations refer to earlier objects by index.
#[derive(Debug, Clone)]
pub struct GridProblem {
    pub nx: usize,
    pub ny: usize,
    pub cell: f64,
    pub dims: Vec<[f64; 2]>,
    pub relations: Vec<Vec<OracleRelation>>,
}

#[derive(Debug, Clone, Copy)]
pub enum OracleRelation {
    Facing(u8),
    AgainstWall,
    Clearance(f64),
    Near(usize, f64),
    Far(usize, f64),
    Beside(usize),
    /// 0 front, 1 behind, 2 right, 3 left.
    Cone(usize, u8),
    FaceToward(usize),
}

impl OracleRelation {
    pub fn to_library(self, ids: &[String]) -> SpatialRelation {
        let r = |i: usize| ids[i].clone();
        match self {
            OracleRelation::Facing(q) => SpatialRelation::Facing {
                direction: [Direction::N, Direction::W, Direction::S, Direction::E][q as usize],
            },
            OracleRelation::AgainstWall => SpatialRelation::AgainstWall,
            OracleRelation::Clearance(d) => SpatialRelation::Clearance { min_dist: d },
            OracleRelation::Near(i, d) => SpatialRelation::Near { reference: r(i), max_dist: d },
            OracleRelation::Far(i, d) => SpatialRelation::Far { reference: r(i), min_dist: d },
            OracleRelation::Beside(i) => SpatialRelation::Beside { reference: r(i) },
            OracleRelation::Cone(i, c) => SpatialRelation::Directional {
                kind: [DirectionalKind::InFrontOf, DirectionalKind::Behind, DirectionalKind::RightOf, DirectionalKind::LeftOf]
                    [c as usize],
                reference: r(i),
            },
            OracleRelation::FaceToward(i) => SpatialRelation::FaceToward { reference: r(i) },
        }
    }
}

/// A footprint on the oracle grid. `quarter` counts counter-clockwise
/// quarter turns; 0 faces +y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePose {
    pub i: usize,
    pub j: usize,
    pub w: usize,
    pub h: usize,
    pub quarter: u8,
}

const EPS: f64 = 1e-9;

fn cells(extent: f64, cell: f64) -> usize {
    let n = (extent / cell - EPS).ceil();
    if n < 1.0 {
        1
    } else {
        n as usize
    }
}

impl GridProblem {
    pub fn footprint(&self, obj: usize, quarter: u8) -> (usize, usize) {
        let [a, b] = self.dims[obj];
        if quarter % 2 == 1 {
            (cells(b, self.cell), cells(a, self.cell))
        } else {
            (cells(a, self.cell), cells(b, self.cell))
        }
    }

    fn center(&self, p: &OraclePose) -> (f64, f64) {
        ((p.i as f64 + p.w as f64 * 0.5) * self.cell, (p.j as f64 + p.h as f64 * 0.5) * self.cell)
    }

    fn cell_taken(prefix: &[OraclePose], x: usize, y: usize) -> bool {
        prefix.iter().any(|p| x >= p.i && x < p.i + p.w && y >= p.j && y < p.j + p.h)
    }

    /// Local (right, front) coordinates of `offset` for an object turned by
    /// `quarter`.
    fn local(quarter: u8, offset: (f64, f64)) -> (f64, f64) {
        let theta = quarter as f64 * std::f64::consts::FRAC_PI_2;
        let (s, c) = theta.sin_cos();
        let right = (c, s);
        let front = (-s, c);
        (offset.0 * right.0 + offset.1 * right.1, offset.0 * front.0 + offset.1 * front.1)
    }

    fn cone(quarter: u8, offset: (f64, f64), which: u8) -> bool {
        let (x, y) = Self::local(quarter, offset);
        if x.abs() < EPS && y.abs() < EPS {
            return false;
        }
        match which {
            0 => y > 0.0 && x.abs() <= y + EPS,
            1 => y < 0.0 && x.abs() <= -y + EPS,
            2 => x > 0.0 && y.abs() <= x + EPS,
            _ => x < 0.0 && y.abs() <= -x + EPS,
        }
    }

    /// Does `pose` for the next object satisfy `rel` given earlier `prefix`?
    pub fn holds(&self, rel: &OracleRelation, pose: &OraclePose, prefix: &[OraclePose]) -> bool {
        let dist = |other: &OraclePose| {
            let (a, b) = (self.center(pose), self.center(other));
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        };
        match *rel {
            OracleRelation::Facing(q) => pose.quarter == q,
            OracleRelation::AgainstWall => pose.i == 0 || pose.j == 0 || pose.i + pose.w == self.nx || pose.j + pose.h == self.ny,
            OracleRelation::Clearance(d) => {
                let depth = cells(d, self.cell) as i64;
                let (i, j, w, h) = (pose.i as i64, pose.j as i64, pose.w as i64, pose.h as i64);
                let strip: Vec<(i64, i64)> = match pose.quarter {
                    0 => (0..w).flat_map(|x| (0..depth).map(move |y| (i + x, j + h + y))).collect(),
                    1 => (0..h).flat_map(|y| (1..=depth).map(move |x| (i - x, j + y))).collect(),
                    2 => (0..w).flat_map(|x| (1..=depth).map(move |y| (i + x, j - y))).collect(),
                    _ => (0..h).flat_map(|y| (0..depth).map(move |x| (i + w + x, j + y))).collect(),
                };
                strip.iter().all(|&(x, y)| {
                    x >= 0
                        && y >= 0
                        && (x as usize) < self.nx
                        && (y as usize) < self.ny
                        && !Self::cell_taken(prefix, x as usize, y as usize)
                })
            }
            OracleRelation::Near(r, d) => dist(&prefix[r]) <= d + EPS,
            OracleRelation::Far(r, d) => dist(&prefix[r]) >= d - EPS,
            OracleRelation::Beside(r) => {
                let o = &prefix[r];
                let c = self.cell;
                let gap = |a0: usize, a1: usize, b0: usize, b1: usize| {
                    let (a0, a1, b0, b1) = (a0 as f64 * c, a1 as f64 * c, b0 as f64 * c, b1 as f64 * c);
                    (b0 - a1).max(a0 - b1).max(0.0)
                };
                let gx = gap(pose.i, pose.i + pose.w, o.i, o.i + o.w);
                let gy = gap(pose.j, pose.j + pose.h, o.j, o.j + o.h);
                (gx * gx + gy * gy).sqrt() <= 0.3 + EPS
            }
            OracleRelation::Cone(r, which) => {
                let (s, o) = (self.center(pose), self.center(&prefix[r]));
                Self::cone(prefix[r].quarter, (s.0 - o.0, s.1 - o.1), which)
            }
            OracleRelation::FaceToward(r) => {
                let (s, o) = (self.center(pose), self.center(&prefix[r]));
                Self::cone(pose.quarter, (o.0 - s.0, o.1 - s.1), 0)
            }
        }
    }

    /// Every admissible pose of object `prefix.len()`.
    pub fn candidates(&self, prefix: &[OraclePose]) -> Vec<OraclePose> {
        let obj = prefix.len();
        let mut out = Vec::new();
        for quarter in 0..4u8 {
            let (w, h) = self.footprint(obj, quarter);
            if w > self.nx || h > self.ny {
                continue;
            }
            for j in 0..=self.ny - h {
                for i in 0..=self.nx - w {
                    let pose = OraclePose { i, j, w, h, quarter };
                    let free = prefix.iter().all(|p| i + w <= p.i || p.i + p.w <= i || j + h <= p.j || p.j + p.h <= j);
                    if free && self.relations[obj].iter().all(|r| self.holds(r, &pose, prefix)) {
                        out.push(pose);
                    }
                }
            }
        }
        out
    }

    /// Longest placeable prefix by exhaustive search, or `None` when more
    /// than `node_cap` poses would have to be visited.
    pub fn exhaustive_max(&self, node_cap: usize) -> Option<usize> {
        fn go(p: &GridProblem, prefix: &mut Vec<OraclePose>, nodes: &mut usize, cap: usize, best: &mut usize) -> bool {
            *best = (*best).max(prefix.len());
            if prefix.len() == p.dims.len() {
                return true;
            }
            for pose in p.candidates(prefix) {
                *nodes += 1;
                if *nodes > cap {
                    return false;
                }
                prefix.push(pose);
                let ok = go(p, prefix, nodes, cap, best);
                prefix.pop();
                if !ok {
                    return false;
                }
                if *best == p.dims.len() {
                    return true;
                }
            }
            true
        }
        let mut best = 0;
        let mut nodes = 0;
        go(self, &mut Vec::new(), &mut nodes, node_cap, &mut best).then_some(best)
    }

    /// Checks a solver result against the problem. Returns a description of
    /// the first problem found.
    pub fn check_solution(&self, placements: &[Placement]) -> Result<(), String> {
        let mut prefix: Vec<OraclePose> = Vec::new();
        for (k, p) in placements.iter().enumerate() {
            let quarter = (p.orientation.degrees() / 90) as u8;
            let (w, h) = self.footprint(k, quarter);
            let pose = OraclePose { i: p.anchor_cell.0, j: p.anchor_cell.1, w, h, quarter };
            if (w, h) != p.footprint {
                return Err(format!("object {k}: footprint {:?}, expected {:?}", p.footprint, (w, h)));
            }
            if pose.i + w > self.nx || pose.j + h > self.ny {
                return Err(format!("object {k} leaves the grid"));
            }
            if !self.candidates(&prefix).contains(&pose) {
                return Err(format!("object {k} at {pose:?} overlaps or violates a relation"));
            }
            prefix.push(pose);
        }
        Ok(())
    }
}

pub fn quarter_of(o: Orientation) -> u8 {
    (o.degrees() / 90) as u8
}

// ---------------------------------------------------------------- collisions

fn open_overlap(a: &Aabb3, b: &Aabb3, axes: usize) -> bool {
    (0..axes).all(|k| a.min[k] < b.max[k] - 1e-9 && b.min[k] < a.max[k] - 1e-9)
}

/// Same-surface footprint overlaps and wall/floor box intersections in a
/// solved scene layout.
pub fn layout_collisions(layout: &SceneLayout) -> Vec<String> {
    let mut out = Vec::new();
    let pairs = |ps: &[Placement], axes: usize, out: &mut Vec<String>| {
        for (a, pa) in ps.iter().enumerate() {
            for pb in &ps[a + 1..] {
                if open_overlap(&pa.world_aabb, &pb.world_aabb, axes) {
                    out.push(format!("{} / {}", pa.object_id, pb.object_id));
                }
            }
        }
    };
    pairs(&layout.floor.placements, 2, &mut out);
    pairs(&layout.wall.placements, 3, &mut out);
    for w in &layout.wall.placements {
        for f in &layout.floor.placements {
            if open_overlap(&w.world_aabb, &f.world_aabb, 3) {
                out.push(format!("wall {} / floor {}", w.object_id, f.object_id));
            }
        }
    }
    for s in &layout.supported {
        pairs(&s.solution.placements, 2, &mut out);
    }
    out
}

// ---------------------------------------------------------------- analytic geometry

/// Distance from `p` to the surface of the box `[min, max]`.
pub fn box_surface_distance(p: &Vec3, min: [f64; 3], max: [f64; 3]) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::INFINITY;
    for k in 0..3 {
        let below = min[k] - p[k];
        let above = p[k] - max[k];
        let d = below.max(above);
        if d > 0.0 {
            outside += d * d;
        }
        inside = inside.min(-d);
    }
    if outside > 0.0 {
        outside.sqrt()
    } else {
        inside.max(0.0)
    }
}

/// Distance from a point inside an open-top room to its floor and walls.
pub fn room_surface_distance(p: &Vec3, w: f64, d: f64) -> f64 {
    [p.x.abs(), (w - p.x).abs(), p.y.abs(), (d - p.y).abs(), p.z.abs()].into_iter().fold(f64::INFINITY, f64::min)
}
