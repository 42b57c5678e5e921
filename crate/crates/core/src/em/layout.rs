use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{green::green_at_distance, ForwardError};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Transceiver nodes on the boundary of a rectangular domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLayout {
    positions: Vec<[f64; 2]>,
    extent: [f64; 2],
    frequency: f64,
    wavenumber: f64,
    source_amplitude: f64,
}

impl NodeLayout {
    /// `m` nodes equally spaced along the perimeter of
    /// `[0, extent_x] x [0, extent_y]`, counter-clockwise from the bottom
    /// edge, with half a spacing of offset from the corner `(0, 0)`.
    ///
    /// The source amplitude is normalized so that the free-space incident
    /// power at the farthest node pair is exactly 1.
    pub fn perimeter(
        extent_x: f64,
        extent_y: f64,
        m: usize,
        frequency: f64,
    ) -> Result<Self, ForwardError> {
        if m < 3 {
            return Err(ForwardError::Config(format!(
                "need at least 3 nodes, got {m}"
            )));
        }
        if !(extent_x > 0.0 && extent_y > 0.0) {
            return Err(ForwardError::Config(format!(
                "domain extent {extent_x} x {extent_y}"
            )));
        }
        let perimeter = 2.0 * (extent_x + extent_y);
        let step = perimeter / m as f64;
        let positions = (0..m)
            .map(|i| point_on_perimeter((i as f64 + 0.5) * step, extent_x, extent_y))
            .collect();
        Self::from_positions(positions, [extent_x, extent_y], frequency)
    }

    /// Arbitrary node positions; each must lie on the domain boundary.
    pub fn from_positions(
        positions: Vec<[f64; 2]>,
        extent: [f64; 2],
        frequency: f64,
    ) -> Result<Self, ForwardError> {
        if positions.len() < 3 {
            return Err(ForwardError::Config(format!(
                "need at least 3 nodes, got {}",
                positions.len()
            )));
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(ForwardError::Config(format!("frequency {frequency} Hz")));
        }
        let tol = 1e-9 * extent[0].max(extent[1]);
        for p in &positions {
            let on_x_wall = (p[0].abs() < tol || (p[0] - extent[0]).abs() < tol)
                && (-tol..=extent[1] + tol).contains(&p[1]);
            let on_y_wall = (p[1].abs() < tol || (p[1] - extent[1]).abs() < tol)
                && (-tol..=extent[0] + tol).contains(&p[0]);
            if !(on_x_wall || on_y_wall) {
                return Err(ForwardError::Config(format!(
                    "node ({}, {}) is not on the domain boundary",
                    p[0], p[1]
                )));
            }
        }
        for (i, a) in positions.iter().enumerate() {
            for b in &positions[..i] {
                if a == b {
                    return Err(ForwardError::Config(format!(
                        "duplicate node position ({}, {})",
                        a[0], a[1]
                    )));
                }
            }
        }
        let wavenumber = 2.0 * PI * frequency / SPEED_OF_LIGHT;
        let farthest = positions
            .iter()
            .flat_map(|a| positions.iter().map(move |b| dist(*a, *b)))
            .fold(0.0, f64::max);
        let source_amplitude = 1.0 / green_at_distance(wavenumber, farthest).norm();
        Ok(Self {
            positions,
            extent,
            frequency,
            wavenumber,
            source_amplitude,
        })
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.source_amplitude = amplitude;
        self
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn m(&self) -> usize {
        self.positions.len()
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency
    }

    pub fn source_amplitude(&self) -> f64 {
        self.source_amplitude
    }

    /// Receiver node indices for transmitter `tx`, increasing, skipping `tx`.
    pub fn receivers(&self, tx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.m()).filter(move |&r| r != tx)
    }

    /// Row of receiver `rx` in column `tx` of a measurement matrix.
    pub fn receiver_slot(tx: usize, rx: usize) -> Option<usize> {
        match rx.cmp(&tx) {
            std::cmp::Ordering::Less => Some(rx),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(rx - 1),
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn point_on_perimeter(s: f64, w: f64, h: f64) -> [f64; 2] {
    if s < w {
        [s, 0.0]
    } else if s < w + h {
        [w, s - w]
    } else if s < 2.0 * w + h {
        [w - (s - w - h), h]
    } else {
        [0.0, h - (s - 2.0 * w - h)]
    }
}
