use std::f64::consts::PI;

use num_complex::Complex64;

use super::ForwardError;
use crate::bessel::{hankel2_0, hankel2_1, j1};

const MINUS_J_QUARTER: Complex64 = Complex64::new(0.0, -0.25);

/// Free-space 2D Green's function `(-j/4) H0^(2)(k |r_obs - r_src|)`.
pub fn green2d(k: f64, r_src: [f64; 2], r_obs: [f64; 2]) -> Result<Complex64, ForwardError> {
    let rho = (r_obs[0] - r_src[0]).hypot(r_obs[1] - r_src[1]);
    if rho == 0.0 {
        return Err(ForwardError::Singularity);
    }
    Ok(green_at_distance(k, rho))
}

/// Green's function at a known positive separation.
pub fn green_at_distance(k: f64, rho: f64) -> Complex64 {
    MINUS_J_QUARTER * hankel2_0(k * rho)
}

/// Ratio between the Green's function integrated over a disc of radius `a`
/// and its value at the disc center, valid for observers outside the disc:
/// `int_disc g dA = (2 pi a J1(k a) / k) g(center)`.
pub fn disc_coupling_weight(k: f64, a: f64) -> f64 {
    2.0 * PI * a * j1(k * a) / k
}

/// `k^2` times the Green's function integrated over a disc of radius `a`
/// centred on the observer: `-1 + (-j pi k a / 2) H1^(2)(k a)`.
pub fn self_cell_coupling(k: f64, a: f64) -> Complex64 {
    let ka = k * a;
    Complex64::new(0.0, -PI * ka / 2.0) * hankel2_1(ka) - 1.0
}
