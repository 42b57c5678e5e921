//! Cell discretization of the rectangular domain of interest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest supported cell count along either axis.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least {MIN_CELLS} cells per axis, got {nx}x{ny}")]
    TooFewCells { nx: usize, ny: usize },
    #[error("domain extent must be positive and finite, got {x} x {y} m")]
    BadExtent { x: f64, y: f64 },
    #[error("grid mismatch: {0}")]
    Mismatch(String),
}

/// Rectangular domain `[0, extent_x] x [0, extent_y]` split into `nx * ny`
/// equal cells.
///
/// Arrays defined on the grid are indexed `[iy, ix]`, with row 0 at `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoiGrid {
    extent_x: f64,
    extent_y: f64,
    nx: usize,
    ny: usize,
}

impl DoiGrid {
    pub fn new(extent_x: f64, extent_y: f64, nx: usize, ny: usize) -> Result<Self, GridError> {
        if !(extent_x.is_finite() && extent_y.is_finite() && extent_x > 0.0 && extent_y > 0.0) {
            return Err(GridError::BadExtent {
                x: extent_x,
                y: extent_y,
            });
        }
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(GridError::TooFewCells { nx, ny });
        }
        Ok(Self {
            extent_x,
            extent_y,
            nx,
            ny,
        })
    }

    pub fn square(extent: f64, n: usize) -> Result<Self, GridError> {
        Self::new(extent, extent, n, n)
    }

    /// Grid fine enough to hold `cells_per_wavelength` cells per free-space
    /// wavelength along both axes.
    pub fn with_resolution(
        extent_x: f64,
        extent_y: f64,
        wavelength: f64,
        cells_per_wavelength: f64,
    ) -> Result<Self, GridError> {
        let target = wavelength / cells_per_wavelength;
        // Shave rounding noise so exact multiples do not gain a cell.
        let nx = (extent_x / target - 1e-9).ceil() as usize;
        let ny = (extent_y / target - 1e-9).ceil() as usize;
        Self::new(extent_x, extent_y, nx, ny)
    }

    pub fn extent_x(&self) -> f64 {
        self.extent_x
    }

    pub fn extent_y(&self) -> f64 {
        self.extent_y
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.extent_x / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.extent_y / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Radius of the disc with the same area as one cell.
    pub fn equivalent_radius(&self) -> f64 {
        (self.cell_area() / std::f64::consts::PI).sqrt()
    }

    /// `(rows, cols)` shape of arrays living on this grid.
    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center of cell `(ix, iy)` in meters.
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [(ix as f64 + 0.5) * self.dx(), (iy as f64 + 0.5) * self.dy()]
    }

    pub fn same_domain(&self, other: &DoiGrid) -> bool {
        self == other
    }

    pub fn ensure_same(&self, other: &DoiGrid) -> Result<(), GridError> {
        if self.same_domain(other) {
            Ok(())
        } else {
            Err(GridError::Mismatch(format!(
                "{}x{} over {}x{} m vs {}x{} over {}x{} m",
                self.nx,
                self.ny,
                self.extent_x,
                self.extent_y,
                other.nx,
                other.ny,
                other.extent_x,
                other.extent_y
            )))
        }
    }
}
