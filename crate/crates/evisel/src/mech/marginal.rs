//! Closed-form null and quadrature-based GP marginal likelihoods, and the
//! base-10 log Bayes factors built from them.
//!
//! With `b_n = (n + nu0)/2`, `a = nu0 tau0^2` and `c_n = n + 1 + 1/g`, the
//! intercept null `y = mu + e`, `mu ~ N(0, tau^2 g/(1+g))`,
//! `tau^2 ~ IG(nu0/2, nu0 tau0^2/2)` integrates to
//!
//! ```text
//! ln m0 = S - ln(g/(1+g))/2 - ln(c_n)/2 - b_n ln(a + sum y^2 - (sum y)^2/c_n)
//! ```
//!
//! and the GP model `y ~ N(0, tau^2 (K~ + I))`,
//! `K~ = g exp(-||u-v||^2/lambda^2)`, `lambda ~ Exp(lambda0)`, to
//!
//! ```text
//! ln m1 = S + ln integral lambda0 e^{-lambda0 l}
//!                 |K~+I|^{-1/2} (y' (K~+I)^{-1} y + a)^{-b_n} dl
//! ```
//!
//! where `S` collects the normalizers shared by both models.

use super::quad::{log_exp_prior_integral, QuadDiagnostics};
use super::{GpHyperParams, MechError};
use crate::numeric::cholesky_with_jitter;
use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{LN_10, PI};

/// Kernel jitter starts at `1e-8 * g` and escalates tenfold.
const JITTER_INITIAL_OVER_G: f64 = 1e-8;
/// Jitter beyond `1e-4 * g` is a factorization failure.
const JITTER_MAX_OVER_G: f64 = 1e-4;
/// Pivot-squared to largest-diagonal ratio below which a centered Gram
/// matrix is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// Sample-size-resolved constants shared by every marginal at a given `n`.
#[derive(Debug, Clone, Copy)]
pub struct LbfConstants {
    pub n: usize,
    pub g: f64,
    /// `(n + nu0) / 2`, the common inverse-gamma shape after integration.
    pub b_n: f64,
    /// `nu0 * tau0^2`, the additive constant in every quadratic form.
    pub a: f64,
    /// `n + 1 + 1/g`, the intercept's combined posterior precision scale.
    pub c_n: f64,
    pub lambda0: f64,
    /// Normalizers common to null, GP, and linear marginals.
    pub log_shared: f64,
}

impl LbfConstants {
    pub fn new(n: usize, hyper: &GpHyperParams) -> Result<Self, MechError> {
        hyper.validate()?;
        if n < 3 {
            return Err(MechError::TooFewSamples { n });
        }
        let g = hyper.g_at(n);
        let nf = n as f64;
        let b_n = (nf + hyper.nu0) / 2.0;
        let a = hyper.nu0 * hyper.tau0_sq;
        let c_n = nf + 1.0 + 1.0 / g;
        let log_shared = -(nf / 2.0) * (2.0 * PI).ln() + (hyper.nu0 / 2.0) * (a / 2.0).ln()
            - ln_gamma(hyper.nu0 / 2.0)
            + ln_gamma(b_n)
            + b_n * 2f64.ln();
        Ok(Self {
            n,
            g,
            b_n,
            a,
            c_n,
            lambda0: hyper.lambda0,
            log_shared,
        })
    }
}

fn check_response(y: &DVector<f64>, c: &LbfConstants) -> Result<(), MechError> {
    if y.len() != c.n {
        return Err(MechError::InvalidHyper(format!(
            "response length {} does not match constants built for n={}",
            y.len(),
            c.n
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MechError::NonFinite);
    }
    Ok(())
}

/// Log marginal likelihood of the intercept-only null.
pub fn log_marginal_null(y: &DVector<f64>, c: &LbfConstants) -> Result<f64, MechError> {
    check_response(y, c)?;
    let s1: f64 = y.sum();
    let s2: f64 = y.iter().map(|v| v * v).sum();
    let q = c.a + s2 - s1 * s1 / c.c_n;
    if q <= 0.0 {
        return Err(MechError::NonPositiveQuadForm);
    }
    Ok(c.log_shared - 0.5 * (c.g / (1.0 + c.g)).ln() - 0.5 * c.c_n.ln() - c.b_n * q.ln())
}

fn squared_distances(x: &DMatrix<f64>) -> Result<DMatrix<f64>, MechError> {
    let n = x.nrows();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = (0..x.ncols())
                .map(|k| {
                    let diff = x[(i, k)] - x[(j, k)];
                    diff * diff
                })
                .sum();
            if !d.is_finite() {
                return Err(MechError::NonFiniteDistance);
            }
            d2[(i, j)] = d;
            d2[(j, i)] = d;
        }
    }
    Ok(d2)
}

/// Squared-exponential kernel without the `tau^2` factor:
/// `K~(u, v) = g exp(-||u-v||^2 / lambda^2)`, so the diagonal is exactly `g`.
pub fn build_kernel(x: &DMatrix<f64>, lambda: f64, g: f64) -> Result<DMatrix<f64>, MechError> {
    if !(lambda.is_finite() && lambda > 0.0 && g.is_finite() && g > 0.0) {
        return Err(MechError::InvalidHyper(format!(
            "kernel needs positive lambda and g, got lambda={lambda}, g={g}"
        )));
    }
    let d2 = squared_distances(x)?;
    Ok(kernel_from_distances(&d2, lambda, g))
}

fn kernel_from_distances(d2: &DMatrix<f64>, lambda: f64, g: f64) -> DMatrix<f64> {
    let inv_l2 = 1.0 / (lambda * lambda);
    let mut k = DMatrix::zeros(d2.nrows(), d2.ncols());
    for i in 0..d2.nrows() {
        k[(i, i)] = g;
        for j in (i + 1)..d2.ncols() {
            let v = g * (-d2[(i, j)] * inv_l2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Log marginal likelihood of the GP model, integrating the length scale
/// against its exponential prior by quadrature.
pub fn log_marginal_gp(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    c: &LbfConstants,
) -> Result<(f64, QuadDiagnostics), MechError> {
    check_response(y, c)?;
    if x.ncols() == 0 {
        return Err(MechError::EmptyDesign);
    }
    if x.nrows() != c.n {
        return Err(MechError::InvalidHyper(format!(
            "design has {} rows, expected {}",
            x.nrows(),
            c.n
        )));
    }
    let d2 = squared_distances(x)?;
    let jitter_lo = JITTER_INITIAL_OVER_G * c.g;
    let jitter_hi = JITTER_MAX_OVER_G * c.g;
    let log_h = |lambda: f64| -> Result<f64, MechError> {
        let mut m = kernel_from_distances(&d2, lambda, c.g);
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0;
        }
        let (chol, _) = cholesky_with_jitter(&m, jitter_lo, jitter_hi)
            .ok_or(MechError::FactorizationFailure { jitter_max: jitter_hi })?;
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = y.dot(&chol.solve(y));
        if quad + c.a <= 0.0 {
            return Err(MechError::NonPositiveQuadForm);
        }
        Ok(-0.5 * logdet - c.b_n * (quad + c.a).ln())
    };
    let (log_integral, diag) = log_exp_prior_integral(c.lambda0, log_h)?;
    Ok((c.log_shared + log_integral, diag))
}

/// A scored GP-versus-null comparison.
#[derive(Debug, Clone, Copy)]
pub struct LbfOutcome {
    /// Base-10 log Bayes factor.
    pub lbf: f64,
    pub log_marginal_gp: f64,
    pub log_marginal_null: f64,
    pub diagnostics: QuadDiagnostics,
}

pub fn log_bayes_factor(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    c: &LbfConstants,
) -> Result<LbfOutcome, MechError> {
    let (lmg, diagnostics) = log_marginal_gp(y, x, c)?;
    let lmn = log_marginal_null(y, c)?;
    let lbf = (lmg - lmn) / LN_10;
    if !lbf.is_finite() {
        return Err(MechError::NonFinite);
    }
    Ok(LbfOutcome {
        lbf,
        log_marginal_gp: lmg,
        log_marginal_null: lmn,
        diagnostics,
    })
}

/// Base-10 log Bayes factor of the linear alternative `y = X beta + e`,
/// `beta ~ N(0, g tau^2 (X'X)^{-1})`, against the same intercept null.
///
/// Columns are centered first (the null owns the intercept direction), so a
/// constant column makes the design singular.
pub fn log_bayes_factor_linear(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    c: &LbfConstants,
) -> Result<f64, MechError> {
    check_response(y, c)?;
    if x.ncols() == 0 {
        return Err(MechError::EmptyDesign);
    }
    if x.nrows() != c.n {
        return Err(MechError::InvalidHyper(format!(
            "design has {} rows, expected {}",
            x.nrows(),
            c.n
        )));
    }
    let mut xc = x.clone();
    crate::data::center_columns(&mut xc);
    let gram = xc.transpose() * &xc;
    let max_diag = gram.diagonal().iter().copied().fold(0.0_f64, f64::max);
    let chol = Cholesky::new(gram).ok_or(MechError::SingularDesign)?;
    let min_pivot_sq = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v * v)
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot_sq > SINGULAR_PIVOT_RATIO * max_diag) {
        return Err(MechError::SingularDesign);
    }
    let b = xc.transpose() * y;
    let y_hat_sq = b.dot(&chol.solve(&b));
    let s1: f64 = y.sum();
    let s2: f64 = y.iter().map(|v| v * v).sum();
    let q_lin = c.a + s2 - c.g / (1.0 + c.g) * y_hat_sq;
    if q_lin <= 0.0 {
        return Err(MechError::NonPositiveQuadForm);
    }
    let d = x.ncols() as f64;
    let lm_lin =
        c.log_shared - 0.5 * d * (1.0 + c.g).ln() - c.b_n * q_lin.ln();
    let q_null = c.a + s2 - s1 * s1 / c.c_n;
    if q_null <= 0.0 {
        return Err(MechError::NonPositiveQuadForm);
    }
    let lm_null =
        c.log_shared - 0.5 * (c.g / (1.0 + c.g)).ln() - 0.5 * c.c_n.ln() - c.b_n * q_null.ln();
    let lbf = (lm_lin - lm_null) / LN_10;
    if !lbf.is_finite() {
        return Err(MechError::NonFinite);
    }
    Ok(lbf)
}
