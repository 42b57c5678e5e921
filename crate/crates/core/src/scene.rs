//! Random single-object scenes and their rasterization.
//!
//! A scene is one homogeneous object drawn from four families (circle,
//! square, triangle, ring) placed somewhere inside the domain. Rasterization
//! is plain cell-center inclusion: a cell belongs to the object iff its
//! center lies inside the shape, so masks are exactly binary.
//!
//! Permittivities are quoted with a non-negative imaginary part for loss
//! (`4 + 0.4i`, `77 + 7i`). The field solver in [`crate::em`] documents how
//! that maps onto its time convention.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::DoiGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid shape configuration: {0}")]
    Config(String),
    #[error("shape does not fit the domain: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Ring,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Circle,
        ShapeKind::Square,
        ShapeKind::Triangle,
        ShapeKind::Ring,
    ];

    pub fn index(self) -> usize {
        match self {
            ShapeKind::Circle => 0,
            ShapeKind::Square => 1,
            ShapeKind::Triangle => 2,
            ShapeKind::Ring => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Ring => "ring",
        }
    }
}

impl std::fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SceneError::Config(format!("unknown shape kind {s:?}")))
    }
}

/// Shape geometry relative to the object center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    Circle {
        radius: f64,
    },
    /// Square of side `side`, rotated counter-clockwise by `rotation` radians.
    Square {
        side: f64,
        rotation: f64,
    },
    /// Vertex offsets from the center.
    Triangle {
        vertices: [[f64; 2]; 3],
    },
    Ring {
        outer: f64,
        inner: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub center: [f64; 2],
    pub geometry: Geometry,
    pub permittivity: Complex64,
}

impl ShapeSpec {
    pub fn kind(&self) -> ShapeKind {
        match self.geometry {
            Geometry::Circle { .. } => ShapeKind::Circle,
            Geometry::Square { .. } => ShapeKind::Square,
            Geometry::Triangle { .. } => ShapeKind::Triangle,
            Geometry::Ring { .. } => ShapeKind::Ring,
        }
    }

    /// Point-in-shape test; boundary points count as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let x = p[0] - self.center[0];
        let y = p[1] - self.center[1];
        match self.geometry {
            Geometry::Circle { radius } => x * x + y * y <= radius * radius,
            Geometry::Ring { outer, inner } => {
                let r2 = x * x + y * y;
                r2 <= outer * outer && r2 >= inner * inner
            }
            Geometry::Square { side, rotation } => {
                let (s, c) = rotation.sin_cos();
                let u = c * x + s * y;
                let v = -s * x + c * y;
                let h = side / 2.0;
                u.abs() <= h && v.abs() <= h
            }
            Geometry::Triangle { vertices } => {
                let [a, b, c] = vertices;
                let d1 = edge_sign([x, y], a, b);
                let d2 = edge_sign([x, y], b, c);
                let d3 = edge_sign([x, y], c, a);
                let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(has_neg && has_pos)
            }
        }
    }

    /// Half widths of the axis-aligned bounding box around the center.
    pub fn half_extents(&self) -> [f64; 2] {
        match self.geometry {
            Geometry::Circle { radius } => [radius, radius],
            Geometry::Ring { outer, .. } => [outer, outer],
            Geometry::Square { side, rotation } => {
                let (s, c) = rotation.sin_cos();
                let h = side / 2.0 * (c.abs() + s.abs());
                [h, h]
            }
            Geometry::Triangle { vertices } => {
                let hx = vertices.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
                let hy = vertices.iter().map(|v| v[1].abs()).fold(0.0, f64::max);
                [hx, hy]
            }
        }
    }

    /// Checks the geometric invariants and that the shape stays `margin`
    /// away from every wall of `grid`.
    pub fn validate(&self, grid: &DoiGrid, margin: f64) -> Result<(), SceneError> {
        let eps = self.permittivity;
        if !(eps.re.is_finite() && eps.im.is_finite()) || eps.re < 1.0 || eps.im < 0.0 {
            return Err(SceneError::Domain(format!(
                "permittivity {eps} needs re >= 1 and im >= 0"
            )));
        }
        match self.geometry {
            Geometry::Circle { radius } if !(radius > 0.0) => {
                return Err(SceneError::Domain(format!("circle radius {radius}")));
            }
            Geometry::Square { side, .. } if !(side > 0.0) => {
                return Err(SceneError::Domain(format!("square side {side}")));
            }
            Geometry::Ring { outer, inner } if !(inner > 0.0 && inner < outer) => {
                return Err(SceneError::Domain(format!(
                    "ring needs 0 < inner < outer, got {inner} / {outer}"
                )));
            }
            Geometry::Triangle { vertices } => {
                let [a, b, c] = vertices;
                let twice_area = edge_sign(a, b, c).abs();
                let longest = [dist2(a, b), dist2(b, c), dist2(c, a)]
                    .into_iter()
                    .fold(0.0, f64::max);
                if !(twice_area > 1e-9 * longest) {
                    return Err(SceneError::Domain("degenerate triangle".into()));
                }
            }
            _ => {}
        }
        let [hx, hy] = self.half_extents();
        let [cx, cy] = self.center;
        let tol = 1e-12 * grid.extent_x().max(grid.extent_y());
        if cx - hx < margin - tol
            || cx + hx > grid.extent_x() - margin + tol
            || cy - hy < margin - tol
            || cy + hy > grid.extent_y() - margin + tol
        {
            return Err(SceneError::Domain(format!(
                "{} at ({cx:.3}, {cy:.3}) with half extents ({hx:.3}, {hy:.3}) leaves the domain",
                self.kind()
            )));
        }
        Ok(())
    }
}

fn edge_sign(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Sampling ranges for the four shape families. All lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeConfig {
    /// Relative draw weights in [`ShapeKind::ALL`] order.
    pub family_weights: [f64; 4],
    pub circle_radius: [f64; 2],
    pub square_side: [f64; 2],
    pub triangle_circumradius: [f64; 2],
    /// Per-vertex angular jitter as a fraction of 60 degrees, and radial
    /// shrink fraction; in `[0, 1)`.
    pub triangle_jitter: f64,
    pub ring_outer_radius: [f64; 2],
    /// Inner radius as a fraction of the outer radius.
    pub ring_inner_ratio: [f64; 2],
    /// Minimum clearance between the object and the domain walls.
    pub margin: f64,
    pub palette: Vec<Complex64>,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            family_weights: [1.0; 4],
            circle_radius: [0.15, 0.6],
            square_side: [0.3, 1.0],
            triangle_circumradius: [0.25, 0.7],
            triangle_jitter: 0.25,
            ring_outer_radius: [0.25, 0.7],
            ring_inner_ratio: [0.4, 0.75],
            margin: 0.0,
            palette: vec![Complex64::new(4.0, 0.4), Complex64::new(77.0, 7.0)],
        }
    }
}

impl ShapeConfig {
    /// Same configuration restricted to a single family.
    pub fn only(&self, kind: ShapeKind) -> Self {
        let mut cfg = self.clone();
        cfg.family_weights = [0.0; 4];
        cfg.family_weights[kind.index()] = 1.0;
        cfg
    }

    /// Largest size parameter of `kind` that fits inside `grid` in any
    /// orientation and position.
    fn max_fitting_size(&self, kind: ShapeKind, grid: &DoiGrid) -> f64 {
        let half_room = grid.extent_x().min(grid.extent_y()) / 2.0 - self.margin;
        match kind {
            ShapeKind::Circle | ShapeKind::Ring | ShapeKind::Triangle => half_room,
            // half diagonal of a square is side / sqrt(2)
            ShapeKind::Square => half_room * std::f64::consts::SQRT_2,
        }
    }

    fn size_range(&self, kind: ShapeKind) -> [f64; 2] {
        match kind {
            ShapeKind::Circle => self.circle_radius,
            ShapeKind::Square => self.square_side,
            ShapeKind::Triangle => self.triangle_circumradius,
            ShapeKind::Ring => self.ring_outer_radius,
        }
    }

    pub fn validate(&self, grid: &DoiGrid) -> Result<(), SceneError> {
        let cfg_err = |m: String| Err(SceneError::Config(m));
        if self
            .family_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
            || self.family_weights.iter().sum::<f64>() <= 0.0
        {
            return cfg_err(format!("family weights {:?}", self.family_weights));
        }
        if self.palette.is_empty() {
            return cfg_err("permittivity palette is empty".into());
        }
        for eps in &self.palette {
            if !(eps.re >= 1.0 && eps.im >= 0.0 && eps.re.is_finite() && eps.im.is_finite()) {
                return cfg_err(format!("palette entry {eps} needs re >= 1, im >= 0"));
            }
        }
        if !(self.margin >= 0.0) {
            return cfg_err(format!("margin {}", self.margin));
        }
        if !(0.0..1.0).contains(&self.triangle_jitter) {
            return cfg_err(format!("triangle jitter {}", self.triangle_jitter));
        }
        let [rlo, rhi] = self.ring_inner_ratio;
        if !(rlo > 0.0 && rlo <= rhi && rhi < 1.0) {
            return cfg_err(format!("ring inner ratio {:?}", self.ring_inner_ratio));
        }
        for kind in ShapeKind::ALL {
            if self.family_weights[kind.index()] == 0.0 {
                continue;
            }
            let [lo, hi] = self.size_range(kind);
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return cfg_err(format!("{kind} size range [{lo}, {hi}]"));
            }
            let fit = self.max_fitting_size(kind, grid);
            if lo > fit {
                return cfg_err(format!(
                    "{kind} minimum size {lo} m exceeds the {fit:.3} m that fits with margin {}",
                    self.margin
                ));
            }
        }
        Ok(())
    }
}

/// Draws one shape. Identical generator state and configuration give an
/// identical shape.
pub fn sample_shape<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ShapeConfig,
    grid: &DoiGrid,
) -> Result<ShapeSpec, SceneError> {
    cfg.validate(grid)?;
    let families = WeightedIndex::new(cfg.family_weights)
        .map_err(|e| SceneError::Config(format!("family weights: {e}")))?;
    let kind = ShapeKind::ALL[families.sample(rng)];
    let [lo, hi] = cfg.size_range(kind);
    let hi = hi.min(cfg.max_fitting_size(kind, grid));
    let size = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };

    let geometry = match kind {
        ShapeKind::Circle => Geometry::Circle { radius: size },
        ShapeKind::Square => Geometry::Square {
            side: size,
            rotation: rng.random_range(0.0..PI / 2.0),
        },
        ShapeKind::Triangle => {
            let base = rng.random_range(0.0..TAU);
            let j = cfg.triangle_jitter;
            let mut vertices = [[0.0; 2]; 3];
            for (i, v) in vertices.iter_mut().enumerate() {
                let jitter = if j > 0.0 {
                    rng.random_range(-j..=j) * PI / 3.0
                } else {
                    0.0
                };
                let shrink = if j > 0.0 {
                    rng.random_range(0.0..=j)
                } else {
                    0.0
                };
                let angle = base + TAU * i as f64 / 3.0 + jitter;
                let r = size * (1.0 - shrink);
                *v = [r * angle.cos(), r * angle.sin()];
            }
            Geometry::Triangle { vertices }
        }
        ShapeKind::Ring => {
            let [a, b] = cfg.ring_inner_ratio;
            let ratio = if b > a { rng.random_range(a..=b) } else { a };
            Geometry::Ring {
                outer: size,
                inner: size * ratio,
            }
        }
    };

    let mut spec = ShapeSpec {
        center: [0.0, 0.0],
        geometry,
        permittivity: cfg.palette[0],
    };
    let [hx, hy] = spec.half_extents();
    let m = cfg.margin;
    let x_range = (m + hx, grid.extent_x() - m - hx);
    let y_range = (m + hy, grid.extent_y() - m - hy);
    spec.center = [uniform_or_mid(rng, x_range), uniform_or_mid(rng, y_range)];
    spec.permittivity = cfg.palette[rng.random_range(0..cfg.palette.len())];
    spec.validate(grid, m)?;
    Ok(spec)
}

fn uniform_or_mid<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        0.5 * (lo + hi)
    }
}

/// Binary object mask; 1 marks object cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMask {
    pub grid: DoiGrid,
    pub pixels: Array2<u8>,
}

impl GroundTruthMask {
    pub fn object_pixels(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }
}

/// Permittivity contrast `chi = eps_r - 1` on a grid, zero outside objects.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMap {
    pub grid: DoiGrid,
    pub chi: Array2<Complex64>,
}

impl ContrastMap {
    pub fn zeros(grid: DoiGrid) -> Self {
        Self {
            grid,
            chi: Array2::zeros(grid.shape()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.chi.iter().all(|c| *c == Complex64::new(0.0, 0.0))
    }
}

/// Cell-center rasterization of `spec` onto `grid`.
pub fn rasterize(
    spec: &ShapeSpec,
    grid: &DoiGrid,
) -> Result<(GroundTruthMask, ContrastMap), SceneError> {
    spec.validate(grid, 0.0)?;
    let contrast = spec.permittivity - 1.0;
    let (ny, nx) = grid.shape();
    let mut pixels = Array2::<u8>::zeros((ny, nx));
    let mut chi = Array2::<Complex64>::zeros((ny, nx));

    // Only visit the cells under the bounding box.
    let [hx, hy] = spec.half_extents();
    let [cx, cy] = spec.center;
    let ix0 = (((cx - hx) / grid.dx()).floor().max(0.0)) as usize;
    let ix1 = (((cx + hx) / grid.dx()).ceil() as usize).min(nx);
    let iy0 = (((cy - hy) / grid.dy()).floor().max(0.0)) as usize;
    let iy1 = (((cy + hy) / grid.dy()).ceil() as usize).min(ny);
    for iy in iy0..iy1 {
        for ix in ix0..ix1 {
            if spec.contains(grid.cell_center(ix, iy)) {
                pixels[[iy, ix]] = 1;
                chi[[iy, ix]] = contrast;
            }
        }
    }
    let mask = GroundTruthMask {
        grid: *grid,
        pixels,
    };
    if mask.object_pixels() == 0 {
        return Err(SceneError::Domain(format!(
            "{} is smaller than one {:.4} m cell",
            spec.kind(),
            grid.dx()
        )));
    }
    Ok((mask, ContrastMap { grid: *grid, chi }))
}
