use serde::{Deserialize, Serialize};

use super::LayoutError;
use crate::geometry::Orientation;

const CELL_EPS: f64 = 1e-9;

/// Axis-aligned block of cells: columns `i..i + w`, rows `j..j + h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRect {
    pub i: usize,
    pub j: usize,
    pub w: usize,
    pub h: usize,
}

impl CellRect {
    pub fn new(i: usize, j: usize, w: usize, h: usize) -> Self {
        Self { i, j, w, h }
    }

    pub fn overlaps(&self, other: &CellRect) -> bool {
        self.i < other.i + other.w && other.i < self.i + self.w && self.j < other.j + other.h && other.j < self.j + self.h
    }

    /// Center in cell units.
    pub fn center_cells(&self) -> (f64, f64) {
        (self.i as f64 + self.w as f64 / 2.0, self.j as f64 + self.h as f64 / 2.0)
    }
}

/// Number of cells an extent occupies: at least one, never truncated.
pub fn cells_for(extent: f64, cell_size: f64) -> usize {
    ((extent / cell_size - CELL_EPS).ceil() as usize).max(1)
}

/// Footprint size in cells of a `(width, depth)` object at `orientation`.
pub fn footprint_cells(dims: [f64; 2], orientation: Orientation, cell_size: f64) -> (usize, usize) {
    let (a, b) = if orientation.swaps_axes() { (dims[1], dims[0]) } else { (dims[0], dims[1]) };
    (cells_for(a, cell_size), cells_for(b, cell_size))
}

/// Uniform occupancy grid over a rectangle of some surface.
///
/// Occupancy queries are O(1) through a summed-area table refreshed on every
/// write. Optional seams split the columns into independent segments that a
/// footprint may not straddle (used for the unfolded walls).
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    occupancy: Vec<bool>,
    prefix: Vec<u32>,
    seams: Vec<usize>,
}

impl PlacementGrid {
    pub fn new(origin: [f64; 2], cell_size: f64, nx: usize, ny: usize) -> Result<Self, LayoutError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(LayoutError::InvalidGrid(format!("cell size must be > 0, got {cell_size}")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(LayoutError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            origin,
            cell_size,
            nx,
            ny,
            occupancy: vec![false; nx * ny],
            prefix: vec![0; (nx + 1) * (ny + 1)],
            seams: Vec::new(),
        })
    }

    /// Largest grid of whole cells inside a `width x depth` rectangle.
    pub fn covering(origin: [f64; 2], width: f64, depth: f64, cell_size: f64) -> Result<Self, LayoutError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(LayoutError::InvalidGrid(format!("cell size must be > 0, got {cell_size}")));
        }
        let n = |len: f64| (len.max(0.0) / cell_size + CELL_EPS).floor() as usize;
        Self::new(origin, cell_size, n(width), n(depth))
    }

    pub fn with_seams(mut self, mut seams: Vec<usize>) -> Self {
        seams.sort_unstable();
        seams.dedup();
        self.seams = seams;
        self
    }

    pub fn seams(&self) -> &[usize] {
        &self.seams
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.occupancy[j * self.nx + i]
    }

    pub fn contains_rect(&self, r: &CellRect) -> bool {
        r.w > 0 && r.h > 0 && r.i + r.w <= self.nx && r.j + r.h <= self.ny
    }

    pub fn crosses_seam(&self, r: &CellRect) -> bool {
        self.seams.iter().any(|&s| r.i < s && s < r.i + r.w)
    }

    fn refresh_prefix(&mut self) {
        let stride = self.nx + 1;
        for j in 0..self.ny {
            let mut row = 0u32;
            for i in 0..self.nx {
                row += self.occupancy[j * self.nx + i] as u32;
                self.prefix[(j + 1) * stride + i + 1] = self.prefix[j * stride + i + 1] + row;
            }
        }
    }

    /// Occupied cells inside `r`, which must lie within the grid.
    pub fn occupied_in(&self, r: &CellRect) -> u32 {
        let stride = self.nx + 1;
        let at = |i: usize, j: usize| self.prefix[j * stride + i];
        at(r.i + r.w, r.j + r.h) + at(r.i, r.j) - at(r.i, r.j + r.h) - at(r.i + r.w, r.j)
    }

    /// True when `r` lies inside the grid and every covered cell is free.
    pub fn rect_free(&self, r: &CellRect) -> bool {
        self.contains_rect(r) && self.occupied_in(r) == 0
    }

    pub fn set_rect(&mut self, r: &CellRect, occupied: bool) {
        for j in r.j..r.j + r.h {
            for i in r.i..r.i + r.w {
                self.occupancy[j * self.nx + i] = occupied;
            }
        }
        self.refresh_prefix();
    }

    pub fn occupy_cell(&mut self, i: usize, j: usize) {
        self.set_rect(&CellRect::new(i, j, 1, 1), true);
    }

    /// Rectangle in surface coordinates: `(min, max)`.
    pub fn rect_extent(&self, r: &CellRect) -> ([f64; 2], [f64; 2]) {
        let c = self.cell_size;
        (
            [self.origin[0] + r.i as f64 * c, self.origin[1] + r.j as f64 * c],
            [self.origin[0] + (r.i + r.w) as f64 * c, self.origin[1] + (r.j + r.h) as f64 * c],
        )
    }

    pub fn rect_center(&self, r: &CellRect) -> [f64; 2] {
        let (ci, cj) = r.center_cells();
        [self.origin[0] + ci * self.cell_size, self.origin[1] + cj * self.cell_size]
    }

    pub fn touches_boundary(&self, r: &CellRect) -> bool {
        r.i == 0 || r.j == 0 || r.i + r.w == self.nx || r.j + r.h == self.ny
    }

    /// Strip of `depth` cells directly ahead of `r` when facing `orientation`,
    /// or `None` if it would leave the grid.
    pub fn strip_ahead(&self, r: &CellRect, orientation: Orientation, depth: usize) -> Option<CellRect> {
        match orientation {
            Orientation::Deg0 => Some(CellRect::new(r.i, r.j + r.h, r.w, depth)),
            Orientation::Deg180 => r.j.checked_sub(depth).map(|j| CellRect::new(r.i, j, r.w, depth)),
            Orientation::Deg90 => r.i.checked_sub(depth).map(|i| CellRect::new(i, r.j, depth, r.h)),
            Orientation::Deg270 => Some(CellRect::new(r.i + r.w, r.j, depth, r.h)),
        }
        .filter(|s| depth == 0 || self.contains_rect(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footprint_rounds_up_and_swaps() {
        assert_eq!(footprint_cells([0.3, 0.15], Orientation::Deg0, 0.1), (3, 2));
        assert_eq!(footprint_cells([0.3, 0.15], Orientation::Deg90, 0.1), (2, 3));
        assert_eq!(footprint_cells([0.01, 0.01], Orientation::Deg0, 0.1), (1, 1));
    }

    #[test]
    fn occupancy_counts_match_naive() {
        let mut g = PlacementGrid::new([0.0, 0.0], 0.1, 7, 5).unwrap();
        g.set_rect(&CellRect::new(1, 1, 2, 3), true);
        g.occupy_cell(6, 4);
        for i in 0..7 {
            for j in 0..5 {
                for w in 1..=7 - i {
                    for h in 1..=5 - j {
                        let r = CellRect::new(i, j, w, h);
                        let naive = (j..j + h)
                            .flat_map(|y| (i..i + w).map(move |x| (x, y)))
                            .filter(|&(x, y)| g.is_occupied(x, y))
                            .count() as u32;
                        assert_eq!(g.occupied_in(&r), naive);
                    }
                }
            }
        }
    }

    #[test]
    fn strips_stay_inside() {
        let g = PlacementGrid::new([0.0, 0.0], 0.1, 4, 4).unwrap();
        let r = CellRect::new(0, 0, 1, 1);
        assert!(g.strip_ahead(&r, Orientation::Deg180, 1).is_none());
        assert!(g.strip_ahead(&r, Orientation::Deg90, 1).is_none());
        assert_eq!(g.strip_ahead(&r, Orientation::Deg0, 3), Some(CellRect::new(0, 1, 1, 3)));
        assert!(g.strip_ahead(&r, Orientation::Deg270, 4).is_none());
    }
}
