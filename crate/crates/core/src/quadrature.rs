//! Closed-form integrals of piecewise-linear data against a decaying exponential.
//!
//! On an interval of length `h` with kernel rate `λ` and `z = λh`,
//!
//! ```text
//! ∫_0^h e^{-λu} (u/h)   du = h · ramp_up(z)     ramp_up(z)   = ∫_0^1 x e^{-zx} dx
//! ∫_0^h e^{-λu} (1-u/h) du = h · ramp_down(z)   ramp_down(z) = ∫_0^1 (1-x) e^{-zx} dx
//! ```
//!
//! Both closed forms cancel catastrophically as `z → 0`; below
//! [`SERIES_THRESHOLD`] the Taylor series is summed instead.

/// `|z|` below which the power series is used.
pub const SERIES_THRESHOLD: f64 = 0.5;

const SERIES_TERMS: usize = 24;

/// `∫_0^1 x e^{-zx} dx = (1 - (1+z)e^{-z}) / z²`
pub fn ramp_up(z: f64) -> f64 {
    if z.abs() < SERIES_THRESHOLD {
        // Σ (-z)^n / (n! (n+2))
        let mut term = 1.0; // (-z)^n / n!
        let mut sum = 0.0;
        for n in 0..SERIES_TERMS {
            sum += term / (n as f64 + 2.0);
            term *= -z / (n as f64 + 1.0);
        }
        sum
    } else {
        let e = (-z).exp();
        (1.0 - (1.0 + z) * e) / (z * z)
    }
}

/// `∫_0^1 (1-x) e^{-zx} dx = (z - 1 + e^{-z}) / z²`
pub fn ramp_down(z: f64) -> f64 {
    if z.abs() < SERIES_THRESHOLD {
        // Σ (-z)^n / (n+2)!
        let mut term = 0.5;
        let mut sum = 0.0;
        for n in 0..SERIES_TERMS {
            sum += term;
            term *= -z / (n as f64 + 3.0);
        }
        sum
    } else {
        (z - 1.0 + (-z).exp()) / (z * z)
    }
}

/// `∫_0^1 e^{-zx} dx = (1 - e^{-z}) / z`
pub fn flat(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z / 2.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Integral over `[t_j, t_j + h]` of `A(t) e^{-λ(t - t_j)}` where `A` is linear and
/// chosen so the integrand equals `f_left` and `f_right` at the endpoints.
/// Exact when the data are themselves `f_left · e^{-λ(t-t_j)}`.
pub fn exact_kernel_interval(f_left: f64, f_right: f64, lambda: f64, h: f64) -> f64 {
    let z = lambda * h;
    let left = f_left * ramp_down(z);
    // f_right · e^{z} · ramp_up(z), evaluated without overflowing e^{z}.
    let right = if f_right == 0.0 {
        0.0
    } else if z < 700.0 {
        f_right * ramp_down(-z)
    } else {
        (f_right.ln() + z).exp() * ramp_up(z)
    };
    h * (left + right)
}

pub fn trapezoid_interval(f_left: f64, f_right: f64, h: f64) -> f64 {
    0.5 * h * (f_left + f_right)
}
