//! 2D scalar (TM) frequency-domain forward scattering.
//!
//! # Conventions
//!
//! Fields carry the engineering time factor `exp(+j w t)`, so outgoing
//! cylindrical waves are `H0^(2)` and the free-space Green's function of
//! `(laplacian + k^2) g = -delta` is `g = (-j/4) H0^(2)(k |r - r'|)`.
//!
//! Scene permittivities are quoted with a non-negative imaginary part for
//! loss (`4 + 0.4i`). Under `exp(+j w t)` a lossy medium has a negative
//! imaginary part, so every solver entry point works with the conjugated
//! contrast `conj(chi)`. Powers are invariant under global conjugation, so
//! the resulting phaseless data is the same as an `exp(-j w t)` solve with
//! `chi` itself.
//!
//! # Discretization
//!
//! The total field solves the Lippmann-Schwinger equation
//! `u - k^2 G[conj(chi) u] = u_inc` on the cells of a [`DoiGrid`]. Each cell
//! is replaced by the disc of equal area; the Green's function is integrated
//! analytically over that disc for every source cell, including the singular
//! self cell. The resulting kernel depends only on cell offsets, so the
//! operator is applied with a zero-padded FFT convolution and the system is
//! solved with BiCGSTAB.

mod green;
mod layout;
mod measure;
mod mie;
mod operator;
mod solver;

pub use green::{disc_coupling_weight, green2d, green_at_distance, self_cell_coupling};
pub use layout::{NodeLayout, SPEED_OF_LIGHT};
pub use measure::{
    incident_field, simulate_measurements, solve_total_field, FieldGrid, FieldKind,
    ForwardSimulator, IncidentField, MeasurementMatrix, NoiseSpec, PowerUnit, Simulation,
    SolvedField,
};
pub use mie::{mie_cylinder_reference, minimum_terms, recommended_terms};
pub use operator::{apply_ls_operator, GreenKernel, LsOperator};
pub use solver::{bicgstab, SolveStats, SolverConfig};

use thiserror::Error;

use crate::grid::GridError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForwardError {
    #[error("Green's function evaluated at coincident points")]
    Singularity,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("cylinder series not converged: {0}")]
    Accuracy(String),
    #[error("invalid input: {0}")]
    Input(String),
}
