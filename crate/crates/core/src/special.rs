//! Scalar density helpers shared by the observation models and the
//! pseudo-likelihood.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Log-density of Gamma(shape, rate) at `x > 0`.
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// `ln C(n, k)` via log-gamma.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Exact binomial log-pmf, including the degenerate `p = 0` / `p = 1` ends.
pub fn binomial_ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `1 - Phi(z)`, accurate far into both tails.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// `ln(1 - Phi(z))`.
pub fn std_normal_ln_sf(z: f64) -> f64 {
    if z < 30.0 {
        std_normal_sf(z).ln()
    } else {
        // Asymptotic tail: ln(phi(z)/z * (1 - 1/z^2 + 3/z^4))
        let z2 = z * z;
        -0.5 * z2 - (2.0 * PI).sqrt().ln() - z.ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// Inverse Mills ratio `phi(z) / (1 - Phi(z))`.
///
/// Above `z = 8` the ratio of two tiny numbers is replaced by its
/// asymptotic series.
pub fn inverse_mills(z: f64) -> f64 {
    if z >= 8.0 {
        let z2 = z * z;
        z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2))
    } else {
        std_normal_pdf(z) / std_normal_sf(z)
    }
}
