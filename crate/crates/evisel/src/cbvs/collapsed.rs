//! Collapsed posterior over the inclusion vector, with beta, omega, and
//! sigma integrated out analytically:
//!
//! ```text
//!   ln pi(gamma | y) = -1/2 ln|X A X' + I|
//!                      - ((n + nu)/2) ln{ nu lambda + y' (X A X' + I)^-1 y }
//!                      + sum_j [ gamma_j ln p_j + (1 - gamma_j) ln(1 - p_j) ]
//!                      + const
//! ```
//!
//! The n x n determinant and solve reduce to the p x p matrix
//! C = A^-1 + X'X: ln|X A X' + I| = ln|C| + ln|A| and
//! y'(X A X' + I)^-1 y = y'y - b' C^-1 b with b = X'y.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{CbvsConfig, CbvsError, Design, SelectablePriors};
use crate::data::{OmicsDataset, Outcome};

/// Design cross-products reused across gamma evaluations. Rebuild `xty` and
/// `yty` (`refresh_response`) whenever latent responses change; the Gram
/// matrix depends only on the design.
pub struct CollapsedCache {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl CollapsedCache {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> CollapsedCache {
        CollapsedCache {
            gram: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.dot(y),
            n: x.nrows(),
        }
    }

    pub fn refresh_response(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) {
        self.xty = x.tr_mul(y);
        self.yty = y.dot(y);
    }
}

/// Prior variance of each coefficient (the diagonal of A) for a given
/// inclusion vector over the selectable block.
pub fn a_diagonal(design: &Design, gamma: &[u8], cfg: &CbvsConfig) -> Vec<f64> {
    assert_eq!(gamma.len(), design.n_selectable());
    let mut a = vec![cfg.v1; design.p()];
    for (k, g) in gamma.iter().enumerate() {
        a[design.selectable.start + k] = if *g == 1 { cfg.v1 } else { cfg.v0 };
    }
    a
}

/// Factor of C = A^-1 + X'X together with the pieces of the collapsed
/// density that depend on it. Kept so samplers can reuse the factorization
/// for conditional draws of beta.
pub struct CollapsedFactor {
    pub chol: Cholesky<f64, nalgebra::Dyn>,
    pub log_det_c: f64,
    pub log_det_a: f64,
}

impl CollapsedFactor {
    pub fn new(cache: &CollapsedCache, a_diag: &[f64]) -> Result<CollapsedFactor, CbvsError> {
        let mut c = cache.gram.clone();
        let mut log_det_a = 0.0;
        for (j, a) in a_diag.iter().enumerate() {
            c[(j, j)] += a.recip();
            log_det_a += a.ln();
        }
        let chol = Cholesky::new(c).ok_or(CbvsError::FactorizationFailure {
            what: "factoring the collapsed posterior matrix",
        })?;
        let log_det_c = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(CollapsedFactor {
            chol,
            log_det_c,
            log_det_a,
        })
    }

    /// y'(X A X' + I)^-1 y for the response captured in `cache`.
    pub fn quad_form(&self, cache: &CollapsedCache) -> f64 {
        cache.yty - cache.xty.dot(&self.chol.solve(&cache.xty))
    }

    /// Conditional posterior mean of beta given this inclusion pattern.
    pub fn beta_mean(&self, cache: &CollapsedCache) -> DVector<f64> {
        self.chol.solve(&cache.xty)
    }
}

/// Bernoulli part of the collapsed density.
pub fn log_prior_gamma(gamma: &[u8], priors: &SelectablePriors) -> f64 {
    gamma
        .iter()
        .zip(&priors.prior_mean)
        .map(|(g, p)| if *g == 1 { p.ln() } else { (1.0 - p).ln() })
        .sum()
}

pub fn log_posterior_from_parts(
    factor: &CollapsedFactor,
    cache: &CollapsedCache,
    gamma: &[u8],
    priors: &SelectablePriors,
    cfg: &CbvsConfig,
) -> Result<f64, CbvsError> {
    let quad = factor.quad_form(cache);
    let scale = cfg.nu * cfg.lambda_sig + quad;
    if !(scale > 0.0) {
        return Err(CbvsError::NonFinite {
            what: "collapsed posterior quadratic form",
        });
    }
    let value = -0.5 * (factor.log_det_c + factor.log_det_a)
        - 0.5 * (cache.n as f64 + cfg.nu) * scale.ln()
        + log_prior_gamma(gamma, priors);
    if !value.is_finite() {
        return Err(CbvsError::NonFinite {
            what: "collapsed log posterior",
        });
    }
    Ok(value)
}

pub fn log_collapsed_with_cache(
    cache: &CollapsedCache,
    design: &Design,
    gamma: &[u8],
    priors: &SelectablePriors,
    cfg: &CbvsConfig,
) -> Result<f64, CbvsError> {
    let a_diag = a_diagonal(design, gamma, cfg);
    let factor = CollapsedFactor::new(cache, &a_diag)?;
    log_posterior_from_parts(&factor, cache, gamma, priors, cfg)
}

/// Collapsed log posterior of one inclusion vector, up to an additive
/// constant. Survival outcomes are accepted only when fully observed.
pub fn log_collapsed_posterior(
    gamma: &[u8],
    ds: &OmicsDataset,
    priors: &[crate::calibration::CalibratedPrior],
    cfg: &CbvsConfig,
) -> Result<f64, CbvsError> {
    cfg.validate()?;
    let design = super::assemble_design(ds);
    let aligned = SelectablePriors::align(&design, priors)?;
    if gamma.len() != design.n_selectable() {
        return Err(CbvsError::BadConfig {
            reason: format!(
                "gamma has {} entries for {} selectable covariates",
                gamma.len(),
                design.n_selectable()
            ),
        });
    }
    let y = match &ds.outcome {
        Outcome::Continuous { y } => y.clone(),
        Outcome::Survival { log_time, event } => {
            if event.iter().any(|e| *e == 0) {
                return Err(CbvsError::CensoredOutcome);
            }
            log_time.clone()
        }
    };
    let cache = CollapsedCache::new(&design.x, &y);
    log_collapsed_with_cache(&cache, &design, gamma, &aligned, cfg)
}

/// Exact posterior over all 2^k inclusion vectors (k = selectable count,
/// capped at 20). Entry m corresponds to the gamma whose j-th bit of m is
/// gamma_j.
pub fn enumerate_models(
    cache: &CollapsedCache,
    design: &Design,
    priors: &SelectablePriors,
    cfg: &CbvsConfig,
) -> Result<Vec<f64>, CbvsError> {
    let k = design.n_selectable();
    assert!(k <= 20, "exhaustive enumeration is capped at 2^20 models");
    let mut log_post = Vec::with_capacity(1 << k);
    let mut gamma = vec![0u8; k];
    for mask in 0u32..(1u32 << k) {
        for (j, g) in gamma.iter_mut().enumerate() {
            *g = ((mask >> j) & 1) as u8;
        }
        log_post.push(log_collapsed_with_cache(cache, design, &gamma, priors, cfg)?);
    }
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}
