//! Draws and moments for a normal distribution truncated below, used to
//! complete censored survival responses.

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// P(Z > z) for a standard normal, accurate far into the upper tail.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Inverse of [`std_normal_sf`].
pub fn std_normal_sf_inv(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

/// Hazard phi(z) / P(Z > z) of the standard normal, with an asymptotic
/// continuation where the survival function underflows.
pub fn std_normal_hazard(z: f64) -> f64 {
    let sf = std_normal_sf(z);
    if sf > 1e-290 {
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        pdf / sf
    } else {
        // Mills ratio expansion; only reachable for z far beyond any data.
        z + 1.0 / z
    }
}

/// Sample X ~ Normal(mean, sd^2) conditioned on X > lower, by inverting the
/// survival function. The tail branch keeps the draw finite when the
/// truncation point sits where the normal survival function underflows.
pub fn draw_above<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lower: f64) -> f64 {
    let alpha = (lower - mean) / sd;
    let u: f64 = rng.gen(); // in [0, 1)
    let sf_alpha = std_normal_sf(alpha);
    let target = sf_alpha * (1.0 - u);
    if target > 1e-290 {
        let z = std_normal_sf_inv(target);
        // Inversion can land a hair below the bound through rounding.
        mean + sd * z.max(alpha)
    } else {
        // Approximate the conditional law by an exponential tail with rate
        // alpha (valid as alpha -> infinity).
        let alpha = alpha.max(1.0);
        mean + sd * (alpha - (1.0 - u).ln() / alpha)
    }
}

/// Mean and variance of Normal(mean, sd^2) truncated to (lower, infinity).
pub fn moments_above(mean: f64, sd: f64, lower: f64) -> (f64, f64) {
    let alpha = (lower - mean) / sd;
    let h = std_normal_hazard(alpha);
    let m = mean + sd * h;
    let var = sd * sd * (1.0 + alpha * h - h * h).max(0.0);
    (m, var)
}
