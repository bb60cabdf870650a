//! Relation predicates evaluated in a surface's grid frame.

use super::grid::{cells_for, CellRect, PlacementGrid};
use crate::geometry::Orientation;
use crate::relations::{DirectionalKind, SpatialRelation};

/// Maximum footprint gap for `beside`, meters.
pub const BESIDE_MAX_GAP: f64 = 0.3;

const TOL: f64 = 1e-9;

/// Where an object sits on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPose {
    pub rect: CellRect,
    /// Rotation within the grid frame; defines the object's local axes.
    pub orientation: Orientation,
    /// Yaw in the world frame; what `facing` compares against.
    pub world_yaw: Orientation,
}

fn center(grid: &PlacementGrid, p: &GridPose) -> [f64; 2] {
    grid.rect_center(&p.rect)
}

fn center_distance(grid: &PlacementGrid, a: &GridPose, b: &GridPose) -> f64 {
    let (ca, cb) = (center(grid, a), center(grid, b));
    (ca[0] - cb[0]).hypot(ca[1] - cb[1])
}

/// Euclidean distance between two footprint rectangles (0 when touching).
pub fn footprint_gap(grid: &PlacementGrid, a: &CellRect, b: &CellRect) -> f64 {
    let (amin, amax) = grid.rect_extent(a);
    let (bmin, bmax) = grid.rect_extent(b);
    let gx = (bmin[0] - amax[0]).max(amin[0] - bmax[0]).max(0.0);
    let gy = (bmin[1] - amax[1]).max(amin[1] - bmax[1]).max(0.0);
    gx.hypot(gy)
}

/// Which 45-degree cone around `frame`'s local axes contains `offset`.
/// Cone boundaries belong to both neighbours.
fn in_cone(frame: Orientation, offset: [f64; 2], kind: DirectionalKind) -> bool {
    let (x, y) = frame.unrotate2(offset[0], offset[1]);
    if x.abs() < TOL && y.abs() < TOL {
        return false;
    }
    match kind {
        DirectionalKind::InFrontOf => y > 0.0 && x.abs() <= y + TOL,
        DirectionalKind::Behind => y < 0.0 && x.abs() <= -y + TOL,
        DirectionalKind::RightOf => x > 0.0 && y.abs() <= x + TOL,
        DirectionalKind::LeftOf => x < 0.0 && y.abs() <= -x + TOL,
    }
}

/// Evaluates one relation for `subject`. `reference` must be the pose of the
/// relation's reference object when it has one; `grid` carries the occupancy
/// of everything placed before the subject.
pub fn relation_holds(
    relation: &SpatialRelation,
    grid: &PlacementGrid,
    subject: &GridPose,
    reference: Option<&GridPose>,
) -> bool {
    let needs_ref = relation.reference().is_some();
    let r = match (needs_ref, reference) {
        (true, None) => return false,
        (_, r) => r,
    };
    match relation {
        SpatialRelation::Facing { direction } => subject.world_yaw == direction.orientation(),
        SpatialRelation::AgainstWall => grid.touches_boundary(&subject.rect),
        SpatialRelation::Clearance { min_dist } => {
            let depth = cells_for(*min_dist, grid.cell_size);
            grid.strip_ahead(&subject.rect, subject.orientation, depth)
                .is_some_and(|strip| grid.occupied_in(&strip) == 0)
        }
        SpatialRelation::Near { max_dist, .. } => center_distance(grid, subject, r.unwrap()) <= max_dist + TOL,
        SpatialRelation::Far { min_dist, .. } => center_distance(grid, subject, r.unwrap()) >= min_dist - TOL,
        SpatialRelation::Beside { .. } => footprint_gap(grid, &subject.rect, &r.unwrap().rect) <= BESIDE_MAX_GAP + TOL,
        SpatialRelation::Directional { kind, .. } => {
            let r = r.unwrap();
            let (cs, cr) = (center(grid, subject), center(grid, r));
            in_cone(r.orientation, [cs[0] - cr[0], cs[1] - cr[1]], *kind)
        }
        SpatialRelation::FaceToward { .. } => {
            let r = r.unwrap();
            let (cs, cr) = (center(grid, subject), center(grid, r));
            in_cone(subject.orientation, [cr[0] - cs[0], cr[1] - cs[1]], DirectionalKind::InFrontOf)
        }
    }
}

/// True for relations whose outcome depends only on the subject's own pose.
pub fn is_static(relation: &SpatialRelation) -> bool {
    matches!(relation, SpatialRelation::Facing { .. } | SpatialRelation::AgainstWall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::Direction;

    fn pose(i: usize, j: usize, w: usize, h: usize, o: Orientation) -> GridPose {
        GridPose { rect: CellRect::new(i, j, w, h), orientation: o, world_yaw: o }
    }

    #[test]
    fn directional_cones_follow_reference_frame() {
        let g = PlacementGrid::new([0.0, 0.0], 0.1, 9, 9).unwrap();
        let reference = pose(4, 4, 1, 1, Orientation::Deg90);
        // Deg90 faces -x, so its right is +y.
        let above = pose(4, 7, 1, 1, Orientation::Deg0);
        let left_side = pose(1, 4, 1, 1, Orientation::Deg0);
        let rel = |kind| SpatialRelation::Directional { kind, reference: "r".into() };
        assert!(relation_holds(&rel(DirectionalKind::RightOf), &g, &above, Some(&reference)));
        assert!(!relation_holds(&rel(DirectionalKind::LeftOf), &g, &above, Some(&reference)));
        assert!(relation_holds(&rel(DirectionalKind::InFrontOf), &g, &left_side, Some(&reference)));
        let diagonal = pose(6, 6, 1, 1, Orientation::Deg0);
        assert!(relation_holds(&rel(DirectionalKind::RightOf), &g, &diagonal, Some(&reference)));
        assert!(relation_holds(&rel(DirectionalKind::Behind), &g, &diagonal, Some(&reference)));
    }

    #[test]
    fn beside_uses_gap() {
        let g = PlacementGrid::new([0.0, 0.0], 0.1, 20, 20).unwrap();
        let a = pose(0, 0, 2, 2, Orientation::Deg0);
        let rel = SpatialRelation::Beside { reference: "a".into() };
        assert!(relation_holds(&rel, &g, &pose(5, 0, 1, 1, Orientation::Deg0), Some(&a)));
        assert!(!relation_holds(&rel, &g, &pose(6, 0, 1, 1, Orientation::Deg0), Some(&a)));
        // 0.3 gap on both axes is 0.42 m away
        assert!(!relation_holds(&rel, &g, &pose(5, 5, 1, 1, Orientation::Deg0), Some(&a)));
    }

    #[test]
    fn clearance_needs_free_strip() {
        let mut g = PlacementGrid::new([0.0, 0.0], 0.1, 5, 5).unwrap();
        let s = pose(0, 0, 1, 1, Orientation::Deg0);
        let rel = SpatialRelation::Clearance { min_dist: 0.25 };
        assert!(relation_holds(&rel, &g, &s, None));
        g.occupy_cell(0, 3);
        assert!(!relation_holds(&rel, &g, &s, None));
        assert!(relation_holds(&SpatialRelation::Clearance { min_dist: 0.2 }, &g, &s, None));
    }

    #[test]
    fn facing_and_missing_reference() {
        let g = PlacementGrid::new([0.0, 0.0], 0.1, 5, 5).unwrap();
        let s = pose(0, 0, 1, 1, Orientation::Deg180);
        assert!(relation_holds(&SpatialRelation::Facing { direction: Direction::S }, &g, &s, None));
        assert!(!relation_holds(&SpatialRelation::Facing { direction: Direction::N }, &g, &s, None));
        assert!(!relation_holds(&SpatialRelation::Beside { reference: "x".into() }, &g, &s, None));
    }
}
