//! Grid-based sequential placement with depth-first search.
//!
//! Objects of one group are placed in order on a discretized surface. For
//! each object the solver enumerates `(orientation, cell)` candidates in a
//! seeded shuffled order and keeps those that fit on free cells and satisfy
//! every relation against earlier objects. When an object has no candidate
//! the current prefix is saved and the search backtracks into the previous
//! object. The longest saved prefix wins; later objects are skipped.

mod grid;
mod predicates;
mod surface;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb3, Orientation, RigidTransform};
use crate::relations::{ObjectSpec, RelationAssignment, SpatialRelation};
use crate::scene::RoomSpec;
use crate::seeding::{derive_seed, rng_from_seed};
use crate::selection::SupporterRef;

pub use grid::{cells_for, footprint_cells, CellRect, PlacementGrid};
pub use predicates::{footprint_gap, relation_holds, GridPose, BESIDE_MAX_GAP};
pub use surface::{Surface, SurfaceFrame, WallSegment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid solver budget: {0}")]
    InvalidBudget(String),
    #[error("relation assignment does not match the object order: {0}")]
    RelationOrder(String),
    #[error("invalid layout config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub object_id: String,
    pub anchor_cell: (usize, usize),
    /// Footprint size in cells at `orientation`.
    pub footprint: (usize, usize),
    /// Rotation in the grid frame.
    pub orientation: Orientation,
    pub world_transform: RigidTransform,
    pub world_aabb: Aabb3,
}

impl Placement {
    pub fn rect(&self) -> CellRect {
        CellRect::new(self.anchor_cell.0, self.anchor_cell.1, self.footprint.0, self.footprint.1)
    }

    pub fn grid_pose(&self) -> GridPose {
        GridPose { rect: self.rect(), orientation: self.orientation, world_yaw: self.world_transform.yaw_deg }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBudget {
    pub max_nodes: usize,
    pub max_saved_solutions: usize,
}

impl Default for SolverBudget {
    fn default() -> Self {
        Self { max_nodes: 50_000, max_saved_solutions: 100 }
    }
}

impl SolverBudget {
    pub fn unlimited() -> Self {
        Self { max_nodes: usize::MAX, max_saved_solutions: usize::MAX }
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.max_nodes == 0 || self.max_saved_solutions == 0 {
            return Err(LayoutError::InvalidBudget("max_nodes and max_saved_solutions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Search trace, useful when tuning budgets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes: usize,
    pub dead_ends: usize,
    pub saved_solutions: usize,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutSolution {
    pub placements: Vec<Placement>,
    pub placed_count: usize,
    pub skipped: Vec<String>,
    pub stats: SolverStats,
}

impl LayoutSolution {
    /// Every object skipped, nothing searched.
    pub fn all_skipped(objects: &[ObjectSpec]) -> Self {
        Self { skipped: objects.iter().map(|o| o.id.clone()).collect(), ..Self::default() }
    }

    pub fn get(&self, object_id: &str) -> Option<&Placement> {
        self.placements.iter().find(|p| p.object_id == object_id)
    }
}

/// Cells where `object` can go at `orientation` on a plain horizontal grid.
/// `grid` occupancy must already include `placed`.
pub fn feasible_cells(
    object: &ObjectSpec,
    grid: &PlacementGrid,
    relations: &[SpatialRelation],
    placed: &[Placement],
    orientation: Orientation,
) -> Vec<(usize, usize)> {
    Surface::plain(grid.clone()).feasible_cells(object, relations, placed, orientation)
}

/// [`solve_on_surface`] on a plain horizontal grid without obstacles.
pub fn solve_group(
    objects: &[ObjectSpec],
    relations: &RelationAssignment,
    grid: &PlacementGrid,
    budget: SolverBudget,
    seed: u64,
) -> Result<LayoutSolution, LayoutError> {
    solve_on_surface(objects, relations, &Surface::plain(grid.clone()), budget, seed)
}

type ResolvedRelations = Vec<Vec<(SpatialRelation, Option<usize>)>>;

fn resolve_relations(objects: &[ObjectSpec], relations: &RelationAssignment) -> Result<ResolvedRelations, LayoutError> {
    if relations.order.is_empty() && relations.relations.is_empty() {
        return Ok(vec![Vec::new(); objects.len()]);
    }
    if relations.order.len() != objects.len() || relations.relations.len() != objects.len() {
        return Err(LayoutError::RelationOrder(format!(
            "{} objects, {} ordered ids, {} relation lists",
            objects.len(),
            relations.order.len(),
            relations.relations.len()
        )));
    }
    let mut index = HashMap::new();
    let mut out = Vec::with_capacity(objects.len());
    for (k, (object, id)) in objects.iter().zip(&relations.order).enumerate() {
        if &object.id != id {
            return Err(LayoutError::RelationOrder(format!("position {k}: object {:?} vs {:?}", object.id, id)));
        }
        let resolved = relations.relations[k]
            .iter()
            .map(|rel| (rel.clone(), rel.reference().and_then(|r| index.get(r).copied())))
            .collect();
        out.push(resolved);
        index.insert(object.id.as_str(), k);
    }
    Ok(out)
}

struct Saved {
    placements: Vec<Placement>,
    order: usize,
}

struct Search<'a> {
    surface: &'a Surface,
    objects: &'a [ObjectSpec],
    relations: ResolvedRelations,
    candidates: Vec<Option<Vec<u32>>>,
    grid: PlacementGrid,
    prefix: Vec<Placement>,
    budget: SolverBudget,
    seed: u64,
    saved: Vec<Saved>,
    discovered: usize,
    stats: SolverStats,
    stop: bool,
}

const CELL_BITS: u32 = 30;

impl Search<'_> {
    fn unpack(&self, code: u32) -> (Orientation, CellRect) {
        let orientation = Orientation::ALL[(code >> CELL_BITS) as usize];
        let cell = (code & ((1 << CELL_BITS) - 1)) as usize;
        let (w, h) = self.surface.footprint(&self.objects[self.prefix.len()].dims, orientation);
        (orientation, CellRect::new(cell % self.grid.nx, cell / self.grid.nx, w, h))
    }

    /// Candidates passing every check that ignores earlier placements,
    /// in seeded shuffled order.
    fn static_candidates(&self, depth: usize) -> Vec<u32> {
        let object = &self.objects[depth];
        let rels = &self.relations[depth];
        if rels.iter().any(|(rel, r)| rel.reference().is_some() && r.is_none()) {
            log::debug!("{}: relation references an unknown object, no candidates", object.id);
            return Vec::new();
        }
        let mut out = Vec::new();
        for &orientation in self.surface.orientations() {
            let (w, h) = self.surface.footprint(&object.dims, orientation);
            if w > self.grid.nx || h > self.grid.ny {
                continue;
            }
            for j in 0..=self.grid.ny - h {
                for i in 0..=self.grid.nx - w {
                    let rect = CellRect::new(i, j, w, h);
                    let Some((transform, aabb)) = self.surface.static_fit(object, &rect, orientation) else {
                        continue;
                    };
                    let pose = GridPose { rect, orientation, world_yaw: transform.yaw_deg };
                    let static_ok = rels
                        .iter()
                        .filter(|(rel, _)| predicates::is_static(rel))
                        .all(|(rel, _)| relation_holds(rel, &self.grid, &pose, None));
                    if static_ok && !aabb.is_empty() {
                        out.push(((orientation.quarter_turns() as u32) << CELL_BITS) | (j * self.grid.nx + i) as u32);
                    }
                }
            }
        }
        out.shuffle(&mut rng_from_seed(derive_seed(self.seed, &[depth as u64])));
        out
    }

    fn dynamic_fit(&self, depth: usize, orientation: Orientation, rect: &CellRect) -> Option<Placement> {
        if self.grid.occupied_in(rect) != 0 {
            return None;
        }
        let object = &self.objects[depth];
        let (transform, aabb) = self.surface.world_box(object, rect, orientation)?;
        if self.surface.checks_prefix_volumes() && self.prefix.iter().any(|p| p.world_aabb.intersects(&aabb)) {
            return None;
        }
        let pose = GridPose { rect: *rect, orientation, world_yaw: transform.yaw_deg };
        let ok = self.relations[depth]
            .iter()
            .filter(|(rel, _)| !predicates::is_static(rel))
            .all(|(rel, r)| relation_holds(rel, &self.grid, &pose, r.map(|k| self.prefix[k].grid_pose()).as_ref()));
        ok.then(|| Placement {
            object_id: object.id.clone(),
            anchor_cell: (rect.i, rect.j),
            footprint: (rect.w, rect.h),
            orientation,
            world_transform: transform,
            world_aabb: aabb,
        })
    }

    fn save(&mut self) {
        let order = self.discovered;
        self.discovered += 1;
        self.stats.saved_solutions += 1;
        if self.saved.len() < self.budget.max_saved_solutions {
            self.saved.push(Saved { placements: self.prefix.clone(), order });
            return;
        }
        // Full: evict the shortest (earliest among equals) if strictly beaten.
        let worst = self
            .saved
            .iter()
            .enumerate()
            .min_by_key(|(_, s)| (s.placements.len(), s.order))
            .map(|(k, _)| k)
            .unwrap();
        if self.prefix.len() > self.saved[worst].placements.len() {
            self.saved[worst] = Saved { placements: self.prefix.clone(), order };
        }
    }

    fn dfs(&mut self) {
        let depth = self.prefix.len();
        if depth == self.objects.len() {
            self.save();
            self.stop = true;
            return;
        }
        if self.candidates[depth].is_none() {
            self.candidates[depth] = Some(self.static_candidates(depth));
        }
        let count = self.candidates[depth].as_ref().unwrap().len();
        let mut any = false;
        for k in 0..count {
            let code = self.candidates[depth].as_ref().unwrap()[k];
            let (orientation, rect) = self.unpack(code);
            let Some(placement) = self.dynamic_fit(depth, orientation, &rect) else {
                continue;
            };
            any = true;
            if self.stats.nodes >= self.budget.max_nodes {
                self.stats.budget_exhausted = true;
                self.save();
                self.stop = true;
                return;
            }
            self.stats.nodes += 1;
            self.grid.set_rect(&rect, true);
            self.prefix.push(placement);
            self.dfs();
            self.prefix.pop();
            self.grid.set_rect(&rect, false);
            if self.stop {
                return;
            }
        }
        if !any {
            self.stats.dead_ends += 1;
            self.save();
        }
    }
}

/// Depth-first placement of `objects` (in order) on `surface`.
pub fn solve_on_surface(
    objects: &[ObjectSpec],
    relations: &RelationAssignment,
    surface: &Surface,
    budget: SolverBudget,
    seed: u64,
) -> Result<LayoutSolution, LayoutError> {
    budget.validate()?;
    let resolved = resolve_relations(objects, relations)?;
    if surface.grid.cell_count() >= 1 << CELL_BITS {
        return Err(LayoutError::InvalidGrid("too many cells".into()));
    }
    let mut search = Search {
        surface,
        objects,
        relations: resolved,
        candidates: vec![None; objects.len()],
        grid: surface.grid.clone(),
        prefix: Vec::with_capacity(objects.len()),
        budget,
        seed,
        saved: Vec::new(),
        discovered: 0,
        stats: SolverStats::default(),
        stop: false,
    };
    search.dfs();
    let best = search
        .saved
        .into_iter()
        .max_by(|a, b| a.placements.len().cmp(&b.placements.len()).then(b.order.cmp(&a.order)))
        .map(|s| s.placements)
        .unwrap_or_default();
    let placed_count = best.len();
    Ok(LayoutSolution {
        skipped: objects[placed_count..].iter().map(|o| o.id.clone()).collect(),
        placements: best,
        placed_count,
        stats: search.stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub floor_cell: f64,
    pub wall_cell: f64,
    pub support_cell: f64,
    /// Lowest mounting height on walls, meters.
    pub wall_min_height: f64,
    pub budget: SolverBudget,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { floor_cell: 0.1, wall_cell: 0.1, support_cell: 0.1, wall_min_height: 0.3, budget: SolverBudget::default() }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        for (name, v) in [("floor_cell", self.floor_cell), ("wall_cell", self.wall_cell), ("support_cell", self.support_cell)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(LayoutError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.wall_min_height.is_finite() && self.wall_min_height >= 0.0) {
            return Err(LayoutError::InvalidConfig("wall_min_height must be >= 0".into()));
        }
        self.budget.validate()
    }
}

pub fn solve_floor(
    objects: &[ObjectSpec],
    relations: &RelationAssignment,
    room: &RoomSpec,
    config: &LayoutConfig,
    seed: u64,
) -> Result<LayoutSolution, LayoutError> {
    solve_on_surface(objects, relations, &Surface::floor(room, config.floor_cell)?, config.budget, seed)
}

/// Walls are unfolded into one strip so the search picks the wall as part
/// of the cell choice. Floor placements are 3D obstacles.
pub fn solve_wall(
    objects: &[ObjectSpec],
    relations: &RelationAssignment,
    room: &RoomSpec,
    floor: &[Placement],
    config: &LayoutConfig,
    seed: u64,
) -> Result<LayoutSolution, LayoutError> {
    let obstacles = floor.iter().map(|p| p.world_aabb).collect();
    let surface = Surface::walls(room, config.wall_cell, config.wall_min_height)?.with_obstacles(obstacles);
    solve_on_surface(objects, relations, &surface, config.budget, seed)
}

/// Objects on the top face of `supporter`; everything is skipped when the
/// supporter was not placed. `obstacles` should hold every other placed box.
pub fn solve_supported(
    objects: &[ObjectSpec],
    relations: &RelationAssignment,
    supporter: Option<&Placement>,
    obstacles: Vec<Aabb3>,
    room: &RoomSpec,
    config: &LayoutConfig,
    seed: u64,
) -> Result<LayoutSolution, LayoutError> {
    let Some(supporter) = supporter else {
        return Ok(LayoutSolution::all_skipped(objects));
    };
    let surface = Surface::top_of(&supporter.world_aabb, room, config.support_cell)?.with_obstacles(obstacles);
    solve_on_surface(objects, relations, &surface, config.budget, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportedGroup {
    pub supporter: SupporterRef,
    pub objects: Vec<ObjectSpec>,
}

/// Every candidate of a scene, split by placement surface.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneObjects {
    pub floor: Vec<ObjectSpec>,
    pub wall: Vec<ObjectSpec>,
    pub supported: Vec<SupportedGroup>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneRelations {
    pub floor: RelationAssignment,
    pub wall: RelationAssignment,
    pub supported: Vec<RelationAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportedLayout {
    pub supporter: SupporterRef,
    pub solution: LayoutSolution,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub floor: LayoutSolution,
    pub wall: LayoutSolution,
    pub supported: Vec<SupportedLayout>,
}

impl SceneLayout {
    pub fn placements(&self) -> impl Iterator<Item = &Placement> {
        self.floor
            .placements
            .iter()
            .chain(&self.wall.placements)
            .chain(self.supported.iter().flat_map(|s| &s.solution.placements))
    }

    pub fn placed_count(&self) -> usize {
        self.placements().count()
    }
}

/// Floor, then walls, then each supported group in order.
pub fn solve_scene(
    objects: &SceneObjects,
    relations: &SceneRelations,
    room: &RoomSpec,
    config: &LayoutConfig,
    seed: u64,
) -> Result<SceneLayout, LayoutError> {
    config.validate()?;
    if relations.supported.len() != objects.supported.len() && !relations.supported.is_empty() {
        return Err(LayoutError::RelationOrder("one relation assignment per supported group expected".into()));
    }
    let floor = solve_floor(&objects.floor, &relations.floor, room, config, derive_seed(seed, &[0]))?;
    let wall = solve_wall(&objects.wall, &relations.wall, room, &floor.placements, config, derive_seed(seed, &[1]))?;
    let mut supported: Vec<SupportedLayout> = Vec::with_capacity(objects.supported.len());
    let empty = RelationAssignment::default();
    for (g, group) in objects.supported.iter().enumerate() {
        let supporter = match group.supporter {
            SupporterRef::Floor(k) => objects.floor.get(k).and_then(|o| floor.get(&o.id)),
            SupporterRef::Wall(k) => objects.wall.get(k).and_then(|o| wall.get(&o.id)),
        };
        let obstacles = floor
            .placements
            .iter()
            .chain(&wall.placements)
            .chain(supported.iter().flat_map(|s| &s.solution.placements))
            .filter(|p| Some(&p.object_id) != supporter.map(|s| &s.object_id))
            .map(|p| p.world_aabb)
            .collect();
        let rels = relations.supported.get(g).unwrap_or(&empty);
        let solution =
            solve_supported(&group.objects, rels, supporter, obstacles, room, config, derive_seed(seed, &[2, g as u64]))?;
        supported.push(SupportedLayout { supporter: group.supporter, solution });
    }
    Ok(SceneLayout { floor, wall, supported })
}
