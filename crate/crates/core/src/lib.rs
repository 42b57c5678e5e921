//! Numerical core of the phaseless WiFi imaging workbench.
//!
//! The crate covers the pure parts of the pipeline:
//!
//! * [`scene`]: random single-object scenes and their rasterization into
//!   binary masks and permittivity-contrast maps,
//! * [`em`]: the 2D TM volume-integral forward solver that turns a contrast
//!   map into the phaseless power matrix seen by a ring of transceivers,
//!   together with the analytic cylinder series used to validate it,
//! * [`physbase`]: the linearized (Rytov) phaseless baseline inversion with
//!   threshold segmentation and mask resampling,
//! * [`metrics`]: IoU and report aggregation.
//!
//! File formats, configuration and the command line live in the `wisp-cli`
//! crate.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod em;
pub mod grid;
pub mod metrics;
pub mod physbase;
pub mod scene;

pub use grid::{DoiGrid, GridError};
pub use num_complex::Complex64;
