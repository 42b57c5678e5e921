use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ForwardError;

/// Forward-solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Forward grid resolution in cells per free-space wavelength.
    pub cells_per_wavelength: f64,
    /// Target relative residual `||Op(u) - u_inc|| / ||u_inc||`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// FFT size as a multiple of the block being solved (>= 2).
    pub pad_factor: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cells_per_wavelength: 15.0,
            tolerance: 1e-6,
            max_iterations: 10_000,
            pad_factor: 2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ForwardError> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(ForwardError::Config(format!(
                "solver tolerance {} must lie in (0, 1)",
                self.tolerance
            )));
        }
        if !(self.cells_per_wavelength >= 8.0 && self.cells_per_wavelength.is_finite()) {
            return Err(ForwardError::Config(format!(
                "cells per wavelength {} must be at least 8",
                self.cells_per_wavelength
            )));
        }
        if self.max_iterations == 0 {
            return Err(ForwardError::Config(
                "max iterations must be positive".into(),
            ));
        }
        if self.pad_factor < 2 {
            return Err(ForwardError::Config(format!(
                "pad factor {} must be at least 2",
                self.pad_factor
            )));
        }
        Ok(())
    }
}

/// Per-solve statistics, emitted to run logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub matvecs: usize,
    /// True relative residual of the returned solution.
    pub residual: f64,
    pub unknowns: usize,
    pub seconds: f64,
}

impl SolveStats {
    pub fn trivial(unknowns: usize) -> Self {
        Self {
            iterations: 0,
            matvecs: 0,
            residual: 0.0,
            unknowns,
            seconds: 0.0,
        }
    }
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// BiCGSTAB for `A x = b`, with `A` given as `apply(x, out)`.
///
/// Starts from `x0` (or zero). Convergence is declared on the true residual;
/// if the recurrence residual drifts below tolerance while the true one has
/// not, the iteration restarts from the current iterate.
pub fn bicgstab<F>(
    mut apply: F,
    b: &[Complex64],
    x0: Option<&[Complex64]>,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(Vec<Complex64>, SolveStats), ForwardError>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let start = Instant::now();
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let b_norm = norm(b);
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![zero; n],
    };
    let mut stats = SolveStats::trivial(n);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        stats.seconds = start.elapsed().as_secs_f64();
        return Ok((x, stats));
    }
    let target = tolerance * b_norm;

    let mut r = vec![zero; n];
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut s = vec![zero; n];
    let mut t = vec![zero; n];

    let true_residual = |x: &[Complex64], r: &mut [Complex64], apply: &mut F| {
        apply(x, r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        norm(r)
    };

    let mut r_norm = true_residual(&x, &mut r, &mut apply);
    stats.matvecs += 1;
    while r_norm > target {
        if stats.iterations >= max_iterations {
            return Err(ForwardError::NotConverged {
                iterations: stats.iterations,
                residual: r_norm / b_norm,
            });
        }
        // (Re)start the recurrence from the current true residual.
        let r_hat = r.clone();
        let mut rho_prev = Complex64::new(1.0, 0.0);
        let mut alpha = Complex64::new(1.0, 0.0);
        let mut omega = Complex64::new(1.0, 0.0);
        v.iter_mut().for_each(|e| *e = zero);
        p.iter_mut().for_each(|e| *e = zero);

        loop {
            if stats.iterations >= max_iterations {
                break;
            }
            stats.iterations += 1;
            let rho = dotc(&r_hat, &r);
            if rho.norm() <= f64::MIN_POSITIVE || omega.norm() <= f64::MIN_POSITIVE {
                break;
            }
            let beta = (rho / rho_prev) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            apply(&p, &mut v);
            stats.matvecs += 1;
            let denom = dotc(&r_hat, &v);
            if denom.norm() <= f64::MIN_POSITIVE {
                break;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * p[i];
                }
                break;
            }
            apply(&s, &mut t);
            stats.matvecs += 1;
            let tt = dotc(&t, &t).re;
            omega = if tt > 0.0 { dotc(&t, &s) / tt } else { zero };
            for i in 0..n {
                x[i] += alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) <= target {
                break;
            }
            rho_prev = rho;
        }
        r_norm = true_residual(&x, &mut r, &mut apply);
        stats.matvecs += 1;
    }
    stats.residual = r_norm / b_norm;
    stats.seconds = start.elapsed().as_secs_f64();
    Ok((x, stats))
}
