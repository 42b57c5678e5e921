//! Integer-order Bessel and Hankel functions.
//!
//! Real-argument values come from `puruspe`; the complex-argument
//! logarithmic derivative needed by the cylinder series is computed here
//! from the backward continued fraction for `J_n / J_{n-1}`.

use num_complex::Complex64;

pub fn j0(x: f64) -> f64 {
    puruspe::Jn(0, x)
}

pub fn j1(x: f64) -> f64 {
    puruspe::Jn(1, x)
}

pub fn y0(x: f64) -> f64 {
    puruspe::Yn(0, x)
}

pub fn y1(x: f64) -> f64 {
    puruspe::Yn(1, x)
}

/// `H0^(2)(x) = J0(x) - i Y0(x)` for `x > 0`.
pub fn hankel2_0(x: f64) -> Complex64 {
    Complex64::new(j0(x), -y0(x))
}

/// `H1^(2)(x) = J1(x) - i Y1(x)` for `x > 0`.
pub fn hankel2_1(x: f64) -> Complex64 {
    Complex64::new(j1(x), -y1(x))
}

/// `J_n(x)` for `n = 0..=n_max`.
pub fn bessel_j_orders(n_max: usize, x: f64) -> Vec<f64> {
    (0..=n_max as u32).map(|n| puruspe::Jn(n, x)).collect()
}

/// `Y_n(x)` for `n = 0..=n_max`, by upward recurrence (stable for Y).
pub fn bessel_y_orders(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(y0(x));
    if n_max >= 1 {
        out.push(y1(x));
    }
    for n in 1..n_max {
        let next = 2.0 * n as f64 / x * out[n] - out[n - 1];
        out.push(next);
    }
    out
}

/// `H_n^(2)(x)` for `n = 0..=n_max`.
pub fn hankel2_orders(n_max: usize, x: f64) -> Vec<Complex64> {
    bessel_j_orders(n_max, x)
        .into_iter()
        .zip(bessel_y_orders(n_max, x))
        .map(|(j, y)| Complex64::new(j, -y))
        .collect()
}

/// Derivatives `f_n'(x)` from values `f_0..f_N` of any cylinder function
/// family, via `f_n' = f_{n-1} - (n/x) f_n` and `f_0' = -f_1`.
///
/// The last entry needs `f_{N+1}`, so the output is one shorter than the input.
pub fn derivatives<T>(values: &[T], x: T) -> Vec<T>
where
    T: Copy
        + std::ops::Sub<Output = T>
        + std::ops::Mul<Output = T>
        + std::ops::Div<Output = T>
        + std::ops::Neg<Output = T>
        + From<f64>,
{
    let n_max = values.len().saturating_sub(1);
    let mut out = Vec::with_capacity(n_max);
    if n_max == 0 {
        return out;
    }
    out.push(-values[1]);
    for n in 1..n_max {
        out.push(values[n - 1] - T::from(n as f64) / x * values[n]);
    }
    out
}

/// Logarithmic derivatives `J_n'(z) / J_n(z)` for `n = 0..=n_max` and
/// complex `z`.
///
/// Uses the ratios `r_n = J_n / J_{n-1}` from the backward recurrence
/// `1 / r_n = 2n / z - r_{n+1}`, started well above both `n_max` and `|z|`,
/// which is stable and never forms `J_n` itself.
pub fn bessel_j_log_derivatives(n_max: usize, z: Complex64) -> Vec<Complex64> {
    let start = n_max.max(z.norm().ceil() as usize) + 60 + (z.norm().sqrt() * 4.0) as usize;
    let mut ratios = vec![Complex64::new(0.0, 0.0); start + 2];
    let mut r = Complex64::new(0.0, 0.0);
    for n in (1..=start).rev() {
        r = 1.0 / (Complex64::new(2.0 * n as f64, 0.0) / z - r);
        ratios[n] = r;
    }
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(-ratios[1]);
    for (n, r) in ratios.iter().enumerate().take(n_max + 1).skip(1) {
        out.push(1.0 / r - n as f64 / z);
    }
    out
}
