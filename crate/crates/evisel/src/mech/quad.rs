//! Log-space integration of `lambda0 * exp(-lambda0*lambda) * h(lambda)`
//! over the positive half-line, where only `ln h` is available and may be
//! strongly scaled.

use super::MechError;
use crate::numeric::{log_sum_exp, LAGUERRE_64, LAGUERRE_96};
use serde::{Deserialize, Serialize};

/// Relative disagreement between the 64- and 96-node rules beyond which the
/// trapezoid fallback takes over.
pub const GAUSS_RULE_TOL: f64 = 1e-6;
/// Upper end of the fallback integration range, in units of `1/lambda0`;
/// the exponential prior leaves ~2e-22 of its mass beyond it.
pub const FALLBACK_RANGE: f64 = 50.0;
/// Successive trapezoid refinements must agree to this relative tolerance.
pub const FALLBACK_TOL: f64 = 1e-7;
/// Hard cap on trapezoid panels before giving up.
pub const FALLBACK_MAX_PANELS: usize = 1 << 18;

/// How an integral was computed and how much to trust it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct QuadDiagnostics {
    pub nodes_used: usize,
    /// Relative disagreement between the reported value and the next
    /// refinement (96-node rule, or the previous trapezoid level).
    pub rel_error: f64,
    pub fell_back: bool,
}

fn rel_disagreement(log_a: f64, log_b: f64) -> f64 {
    ((log_a - log_b).exp() - 1.0).abs()
}

/// `ln integral_0^inf lambda0 e^{-lambda0 l} h(l) dl` given `ln h`.
///
/// Substituting `u = lambda0 * l` reduces the integral to the Gauss-Laguerre
/// weight; the 64-node estimate is checked against 96 nodes and a bisected
/// trapezoid on `[0, 50/lambda0]` takes over when the rules disagree.
pub fn log_exp_prior_integral<F>(
    lambda0: f64,
    mut log_h: F,
) -> Result<(f64, QuadDiagnostics), MechError>
where
    F: FnMut(f64) -> Result<f64, MechError>,
{
    let mut terms64 = Vec::with_capacity(LAGUERRE_64.len());
    for q in LAGUERRE_64.iter() {
        terms64.push(q.ln_weight + log_h(q.node / lambda0)?);
    }
    let log64 = log_sum_exp(&terms64);
    let mut terms96 = Vec::with_capacity(LAGUERRE_96.len());
    for q in LAGUERRE_96.iter() {
        terms96.push(q.ln_weight + log_h(q.node / lambda0)?);
    }
    let log96 = log_sum_exp(&terms96);
    let rel = rel_disagreement(log64, log96);
    if rel <= GAUSS_RULE_TOL && log64.is_finite() {
        return Ok((
            log64,
            QuadDiagnostics {
                nodes_used: LAGUERRE_64.len(),
                rel_error: rel,
                fell_back: false,
            },
        ));
    }
    log_trapezoid_fallback(lambda0, &mut log_h)
}

/// Bisected trapezoid in log space. The full integrand
/// `lambda0 e^{-lambda0 l} h(l)` is evaluated on a uniform grid that doubles
/// until two successive levels agree.
fn log_trapezoid_fallback<F>(
    lambda0: f64,
    log_h: &mut F,
) -> Result<(f64, QuadDiagnostics), MechError>
where
    F: FnMut(f64) -> Result<f64, MechError>,
{
    let upper = FALLBACK_RANGE / lambda0;
    let log_f = |l: f64, log_h: &mut F| -> Result<f64, MechError> {
        if l == 0.0 {
            // kernel limit at lambda=0 exists but is cheapest to skip:
            // the integrand weight at one endpoint of ~1e5 panels is
            // negligible, so treat ln f(0) as the f(h) neighbour would.
            return log_h(1e-12_f64.max(upper * 1e-12)).map(|v| v + lambda0.ln());
        }
        log_h(l).map(|v| v + lambda0.ln() - lambda0 * l)
    };

    let mut panels = 1024usize;
    let mut values: Vec<f64> = Vec::with_capacity(panels + 1);
    for k in 0..=panels {
        values.push(log_f(upper * k as f64 / panels as f64, log_h)?);
    }
    let estimate = |values: &[f64], step: f64| -> f64 {
        let mut terms = Vec::with_capacity(values.len());
        for (k, v) in values.iter().enumerate() {
            let w = if k == 0 || k == values.len() - 1 {
                step / 2.0
            } else {
                step
            };
            terms.push(v + w.ln());
        }
        log_sum_exp(&terms)
    };
    let mut current = estimate(&values, upper / panels as f64);
    loop {
        // interleave midpoints to double the resolution
        let mut refined = Vec::with_capacity(values.len() * 2 - 1);
        for k in 0..values.len() - 1 {
            refined.push(values[k]);
            let mid = upper * (2 * k + 1) as f64 / (2 * panels) as f64;
            refined.push(log_f(mid, log_h)?);
        }
        refined.push(*values.last().unwrap());
        panels *= 2;
        values = refined;
        let next = estimate(&values, upper / panels as f64);
        let rel = rel_disagreement(current, next);
        if rel <= FALLBACK_TOL && next.is_finite() {
            return Ok((
                next,
                QuadDiagnostics {
                    nodes_used: values.len(),
                    rel_error: rel,
                    fell_back: true,
                },
            ));
        }
        current = next;
        if panels > FALLBACK_MAX_PANELS {
            return Err(MechError::QuadratureNotConverged { rel_error: rel });
        }
    }
}
