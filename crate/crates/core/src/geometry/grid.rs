use serde::{Deserialize, Serialize};

use super::Point2;
use crate::error::{Error, Result};

/// Default upper bound on `n_cols * n_rows` for any raster.
pub const DEFAULT_MAX_CELLS: u64 = 100_000_000;

/// A north-up raster frame.
///
/// `(origin_x, origin_y)` is the center of the upper-left cell. Columns grow
/// toward +x and rows toward −y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl GridGeometry {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, n_cols: usize, n_rows: usize) -> Result<Self> {
        Self::with_cap(origin_x, origin_y, cell_size, n_cols, n_rows, DEFAULT_MAX_CELLS)
    }

    pub fn with_cap(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        n_cols: usize,
        n_rows: usize,
        max_cells: u64,
    ) -> Result<Self> {
        if !(origin_x.is_finite() && origin_y.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!("cell size must be positive, got {cell_size}")));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(Error::InvalidGrid(format!("empty grid {n_cols}x{n_rows}")));
        }
        let cells = (n_cols as u64).saturating_mul(n_rows as u64);
        if cells > max_cells {
            return Err(Error::GridTooLarge { cells, cap: max_cells });
        }
        Ok(Self {
            origin_x,
            origin_y,
            cell_size,
            n_cols,
            n_rows,
        })
    }

    /// Grid of `cell_size` cells whose centers span the box.
    ///
    /// Cell centers are snapped to multiples of `cell_size`; the first and last
    /// centers lie on or outside the box edges.
    pub fn covering(min: Point2, max: Point2, cell_size: f64, max_cells: u64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!("cell size must be positive, got {cell_size}")));
        }
        if max.x < min.x || max.y < min.y {
            return Err(Error::InvalidGrid("extent has negative size".into()));
        }
        let x0 = (min.x / cell_size).floor() * cell_size;
        let y0 = (max.y / cell_size).ceil() * cell_size;
        let cols = ((max.x - x0) / cell_size).ceil() + 1.0;
        let rows = ((y0 - min.y) / cell_size).ceil() + 1.0;
        if cols * rows > max_cells as f64 {
            return Err(Error::GridTooLarge {
                cells: (cols * rows).min(u64::MAX as f64) as u64,
                cap: max_cells,
            });
        }
        Self::with_cap(x0, y0, cell_size, cols as usize, rows as usize, max_cells)
    }

    pub fn len(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2 {
        Point2::new(
            self.origin_x + col as f64 * self.cell_size,
            self.origin_y - row as f64 * self.cell_size,
        )
    }

    /// Cell whose footprint contains `p`, if inside the grid.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin_x) / self.cell_size + 0.5).floor();
        let r = ((self.origin_y - p.y) / self.cell_size + 0.5).floor();
        if c < 0.0 || r < 0.0 || c >= self.n_cols as f64 || r >= self.n_rows as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    /// Center of the lower-left cell.
    pub fn lower_left_center(&self) -> Point2 {
        self.cell_center(0, self.n_rows - 1)
    }
}
