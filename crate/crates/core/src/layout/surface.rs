use serde::{Deserialize, Serialize};

use super::grid::{footprint_cells, CellRect, PlacementGrid};
use super::predicates::{relation_holds, GridPose};
use super::{LayoutError, Placement};
use crate::geometry::{Aabb3, Orientation, RigidTransform, Vec3};
use crate::relations::{ObjectSpec, SpatialRelation};
use crate::scene::RoomSpec;

const BOUNDS_TOL: f64 = 1e-9;

/// One wall in the unfolded strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    /// First strip column belonging to this wall.
    pub start_cell: usize,
    pub cells: usize,
    /// World xy where the wall's `u` axis starts.
    pub origin: [f64; 2],
    /// Unit direction of `u` along the wall.
    pub u_dir: [f64; 2],
    /// Yaw of objects mounted here; their front points into the room.
    pub yaw: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SurfaceFrame {
    /// Grid coordinates are world xy; objects stand at `height`.
    Horizontal { height: f64 },
    /// Grid columns run around the room, rows go up from the grid origin.
    WallStrip { walls: Vec<WallSegment> },
}

/// A placement surface: its grid, how grid cells map to the world, and the
/// fixed 3D boxes candidates must avoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub grid: PlacementGrid,
    pub frame: SurfaceFrame,
    pub obstacles: Vec<Aabb3>,
    pub bounds: Option<Aabb3>,
}

impl Surface {
    pub fn plain(grid: PlacementGrid) -> Self {
        Self { grid, frame: SurfaceFrame::Horizontal { height: 0.0 }, obstacles: Vec::new(), bounds: None }
    }

    pub fn floor(room: &RoomSpec, cell: f64) -> Result<Self, LayoutError> {
        let grid = PlacementGrid::covering([0.0, 0.0], room.width, room.depth, cell)?;
        Ok(Self { bounds: Some(room.aabb()), ..Self::plain(grid) })
    }

    /// The four walls unfolded counter-clockwise from the south-west corner:
    /// south (+x), east (+y), north (-x), west (-y).
    pub fn walls(room: &RoomSpec, cell: f64, min_height: f64) -> Result<Self, LayoutError> {
        let specs = [
            (room.width, [0.0, 0.0], [1.0, 0.0], Orientation::Deg0),
            (room.depth, [room.width, 0.0], [0.0, 1.0], Orientation::Deg90),
            (room.width, [room.width, room.depth], [-1.0, 0.0], Orientation::Deg180),
            (room.depth, [0.0, room.depth], [0.0, -1.0], Orientation::Deg270),
        ];
        let mut walls = Vec::with_capacity(4);
        let mut start = 0;
        for (len, origin, u_dir, yaw) in specs {
            let cells = PlacementGrid::covering([0.0, 0.0], len, 0.0, cell)?.nx;
            walls.push(WallSegment { start_cell: start, cells, origin, u_dir, yaw });
            start += cells;
        }
        let seams = walls.iter().map(|w| w.start_cell).collect();
        let grid = PlacementGrid::covering([0.0, min_height], start as f64 * cell, room.height - min_height, cell)?;
        // covering() may lose a column to rounding; keep the exact total
        let grid = PlacementGrid::new(grid.origin, cell, start, grid.ny)?.with_seams(seams);
        Ok(Self { grid, frame: SurfaceFrame::WallStrip { walls }, obstacles: Vec::new(), bounds: Some(room.aabb()) })
    }

    /// The top face of `support`.
    pub fn top_of(support: &Aabb3, room: &RoomSpec, cell: f64) -> Result<Self, LayoutError> {
        let size = support.size();
        let grid = PlacementGrid::covering([support.min[0], support.min[1]], size.x, size.y, cell)?;
        Ok(Self {
            grid,
            frame: SurfaceFrame::Horizontal { height: support.max[2] },
            obstacles: Vec::new(),
            bounds: Some(room.aabb()),
        })
    }

    pub fn with_obstacles(mut self, obstacles: Vec<Aabb3>) -> Self {
        self.obstacles = obstacles;
        self
    }

    pub fn orientations(&self) -> &'static [Orientation] {
        match self.frame {
            SurfaceFrame::Horizontal { .. } => &Orientation::ALL,
            SurfaceFrame::WallStrip { .. } => &[Orientation::Deg0],
        }
    }

    /// Footprint in cells. Wall objects occupy width x height.
    pub fn footprint(&self, dims: &[f64; 3], orientation: Orientation) -> (usize, usize) {
        let extent = match self.frame {
            SurfaceFrame::Horizontal { .. } => [dims[0], dims[1]],
            SurfaceFrame::WallStrip { .. } => [dims[0], dims[2]],
        };
        footprint_cells(extent, orientation, self.grid.cell_size)
    }

    /// Wall placements can meet across corners, so they are checked in 3D
    /// against each other; flat surfaces rely on cell disjointness.
    pub fn checks_prefix_volumes(&self) -> bool {
        matches!(self.frame, SurfaceFrame::WallStrip { .. })
    }

    /// World pose and box of `object` centered on `rect`. `None` when the
    /// rect straddles a wall corner.
    pub fn world_box(
        &self,
        object: &ObjectSpec,
        rect: &CellRect,
        orientation: Orientation,
    ) -> Option<(RigidTransform, Aabb3)> {
        let [w, d, h] = object.dims;
        let center = self.grid.rect_center(rect);
        match &self.frame {
            SurfaceFrame::Horizontal { height } => {
                let (hx, hy) = if orientation.swaps_axes() { (d / 2.0, w / 2.0) } else { (w / 2.0, d / 2.0) };
                let t = RigidTransform::new(orientation, Vec3::new(center[0], center[1], *height));
                let aabb = Aabb3 {
                    min: [center[0] - hx, center[1] - hy, *height],
                    max: [center[0] + hx, center[1] + hy, height + h],
                };
                Some((t, aabb))
            }
            SurfaceFrame::WallStrip { walls } => {
                if self.grid.crosses_seam(rect) {
                    return None;
                }
                let wall = walls.iter().rev().find(|s| s.start_cell <= rect.i)?;
                if rect.i + rect.w > wall.start_cell + wall.cells {
                    return None;
                }
                let u = center[0] - wall.start_cell as f64 * self.grid.cell_size;
                let z0 = center[1] - h / 2.0;
                let (nx, ny) = wall.yaw.forward();
                let px = wall.origin[0] + wall.u_dir[0] * u + nx * d / 2.0;
                let py = wall.origin[1] + wall.u_dir[1] * u + ny * d / 2.0;
                let yaw = wall.yaw.compose(orientation);
                let (hx, hy) = if yaw.swaps_axes() { (d / 2.0, w / 2.0) } else { (w / 2.0, d / 2.0) };
                let t = RigidTransform::new(yaw, Vec3::new(px, py, z0));
                let aabb = Aabb3 { min: [px - hx, py - hy, z0], max: [px + hx, py + hy, z0 + h] };
                Some((t, aabb))
            }
        }
    }

    /// [`Surface::world_box`] plus room bounds and fixed obstacles.
    pub fn static_fit(
        &self,
        object: &ObjectSpec,
        rect: &CellRect,
        orientation: Orientation,
    ) -> Option<(RigidTransform, Aabb3)> {
        let (t, aabb) = self.world_box(object, rect, orientation)?;
        if let Some(b) = &self.bounds {
            if !b.contains(&aabb, BOUNDS_TOL) {
                return None;
            }
        }
        if self.obstacles.iter().any(|o| o.intersects(&aabb)) {
            return None;
        }
        Some((t, aabb))
    }

    /// Anchor cells where `object` fits at `orientation` and satisfies every
    /// relation. `self.grid` occupancy must already include `placed`.
    pub fn feasible_cells(
        &self,
        object: &ObjectSpec,
        relations: &[SpatialRelation],
        placed: &[Placement],
        orientation: Orientation,
    ) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if !self.orientations().contains(&orientation) {
            return out;
        }
        let (w, h) = self.footprint(&object.dims, orientation);
        if w > self.grid.nx || h > self.grid.ny {
            return out;
        }
        let references: Option<Vec<Option<GridPose>>> = relations
            .iter()
            .map(|rel| match rel.reference() {
                Some(r) => placed.iter().find(|p| p.object_id == r).map(|p| Some(p.grid_pose())),
                None => Some(None),
            })
            .collect();
        let Some(references) = references else {
            return out;
        };
        for j in 0..=self.grid.ny - h {
            for i in 0..=self.grid.nx - w {
                let rect = CellRect::new(i, j, w, h);
                if !self.grid.rect_free(&rect) {
                    continue;
                }
                let Some((t, aabb)) = self.static_fit(object, &rect, orientation) else {
                    continue;
                };
                if self.checks_prefix_volumes() && placed.iter().any(|p| p.world_aabb.intersects(&aabb)) {
                    continue;
                }
                let pose = GridPose { rect, orientation, world_yaw: t.yaw_deg };
                if relations.iter().zip(&references).all(|(rel, r)| relation_holds(rel, &self.grid, &pose, r.as_ref())) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}
