//! Full Gibbs sampler: systematic scan over the conjugate conditionals
//!
//! ```text
//!   beta    | rest ~ Normal(C^-1 X'y, sigma^2 C^-1),   C = X'X + A^-1
//!   sigma^2 | rest ~ InvGamma((n + p + nu)/2, (nu lambda + RSS + beta' A^-1 beta)/2)
//!   gamma_j | rest ~ Bernoulli from the spike-vs-slab density ratio at beta_j
//!   omega_j | gamma_j ~ Beta(F_j + gamma_j, 1/F_j + 1 - gamma_j)
//! ```
//!
//! with censored survival responses completed from their truncated normal
//! conditionals at the top of each sweep.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::collapsed::a_diagonal;
use super::engine::FitEngine;
use super::truncnorm;
use super::{Algorithm, CbvsConfig, CbvsError, CbvsFit, FitProblem, ModelState};

pub(crate) struct GibbsEngine;

impl FitEngine for GibbsEngine {
    fn name(&self) -> &'static str {
        "gibbs"
    }

    fn fit(&self, problem: &FitProblem<'_>, cfg: &CbvsConfig) -> Result<CbvsFit, CbvsError> {
        fit_gibbs(problem, cfg)
    }
}

pub(crate) fn draw_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let g = GammaDist::new(shape, 1.0).expect("positive shape");
    scale / g.sample(rng)
}

pub(crate) fn draw_omega<R: Rng + ?Sized>(rng: &mut R, f: f64, gamma: u8) -> f64 {
    let a = f + f64::from(gamma);
    let b = f.recip() + 1.0 - f64::from(gamma);
    let draw: f64 = BetaDist::new(a, b).expect("positive shapes").sample(rng);
    // a small shape parameter concentrates mass so close to an endpoint
    // that the sampler can emit exactly 0 or 1; keep log(omega) and
    // log(1 - omega) finite
    draw.clamp(1e-12, 1.0 - 1e-12)
}

/// Initial completed response: censored entries start at their bound plus
/// the configured offset in outcome standard deviations.
pub(crate) fn init_latent(problem: &FitProblem<'_>, cfg: &CbvsConfig) -> DVector<f64> {
    let mut y = problem.y.clone();
    if problem.is_censored() {
        let sd = crate::numeric::sample_variance(y.as_slice()).sqrt().max(1e-6);
        for &i in &problem.censored {
            y[i] += cfg.survival.latent_init_offset * sd;
        }
    }
    y
}

struct LogJointParts {
    ln_beta_norm: Vec<f64>,
}

impl LogJointParts {
    fn new(f_values: &[f64]) -> LogJointParts {
        let ln_beta_norm = f_values
            .iter()
            .map(|f| ln_gamma(*f) + ln_gamma(f.recip()) - ln_gamma(f + f.recip()))
            .collect();
        LogJointParts { ln_beta_norm }
    }

    /// Completed-data log joint density, up to nothing: every normalizing
    /// constant is included so traces are comparable across configurations.
    fn eval(
        &self,
        state: &ModelState,
        rss: f64,
        a_diag: &[f64],
        problem: &FitProblem<'_>,
        cfg: &CbvsConfig,
    ) -> f64 {
        let n = state.y_latent.len() as f64;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let s2 = state.sigma_sq;
        let mut value = -0.5 * n * (ln_2pi + s2.ln()) - rss / (2.0 * s2);
        for (j, a) in a_diag.iter().enumerate() {
            value -= 0.5 * (ln_2pi + (s2 * a).ln());
            value -= state.beta[j] * state.beta[j] / (2.0 * s2 * a);
        }
        for (k, (&g, &w)) in state.gamma.iter().zip(&state.omega).enumerate() {
            value += if g == 1 { w.ln() } else { (1.0 - w).ln() };
            let f = problem.priors.f_value[k];
            value += (f - 1.0) * w.ln() + (f.recip() - 1.0) * (1.0 - w).ln()
                - self.ln_beta_norm[k];
        }
        let a0 = 0.5 * cfg.nu;
        let b0 = 0.5 * cfg.nu * cfg.lambda_sig;
        value += a0 * b0.ln() - ln_gamma(a0) - (a0 + 1.0) * s2.ln() - b0 / s2;
        value
    }
}

pub fn fit_gibbs(problem: &FitProblem<'_>, cfg: &CbvsConfig) -> Result<CbvsFit, CbvsError> {
    cfg.validate()?;
    let design = problem.design;
    let (n, p, k) = (design.n(), design.p(), design.n_selectable());
    let sel_start = design.selectable.start;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let y_latent = init_latent(problem, cfg);
    let sigma_sq = crate::numeric::sample_variance(y_latent.as_slice()).max(1e-12);
    let mut state = ModelState {
        beta: DVector::zeros(p),
        gamma: problem
            .priors
            .prior_mean
            .iter()
            .map(|pm| u8::from(rng.gen::<f64>() < *pm))
            .collect(),
        omega: problem.priors.prior_mean.clone(),
        sigma_sq,
        y_latent,
    };

    let gram = design.x.tr_mul(&design.x);
    let mut xty = design.x.tr_mul(&state.y_latent);
    let parts = LogJointParts::new(&problem.priors.f_value);
    let ratio_term = 0.5 * (cfg.v0 / cfg.v1).ln();
    let prec_gap = cfg.v0.recip() - cfg.v1.recip();

    let retained = (cfg.iterations - cfg.burn_in).div_ceil(cfg.thin);
    let mut pip_acc = vec![0.0f64; k];
    let mut beta_acc = DVector::<f64>::zeros(p);
    let mut sigma_acc = 0.0f64;
    let mut trace = Vec::with_capacity(retained);
    let trace_gamma = cfg.record_gamma_trace && k <= 64;
    let mut gamma_trace = if trace_gamma {
        Some(Vec::with_capacity(retained))
    } else {
        None
    };

    for t in 0..cfg.iterations {
        // Complete censored responses from their truncated conditionals.
        if problem.is_censored() {
            let sd = state.sigma_sq.sqrt();
            for &i in &problem.censored {
                let mean = design.x.row(i).transpose().dot(&state.beta);
                state.y_latent[i] = truncnorm::draw_above(&mut rng, mean, sd, problem.y[i]);
            }
            xty = design.x.tr_mul(&state.y_latent);
        }

        let a_diag = a_diagonal(design, &state.gamma, cfg);
        let mut c = gram.clone();
        for (j, a) in a_diag.iter().enumerate() {
            c[(j, j)] += a.recip();
        }
        let chol = nalgebra::Cholesky::new(c).ok_or(CbvsError::FactorizationFailure {
            what: "drawing beta in the Gibbs sweep",
        })?;
        let mean = chol.solve(&xty);
        let z = DVector::from_fn(p, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let noise = chol
            .l()
            .tr_solve_lower_triangular(&z)
            .ok_or(CbvsError::FactorizationFailure {
                what: "back-substituting the beta draw",
            })?;
        state.beta = &mean + state.sigma_sq.sqrt() * noise;

        let resid = &state.y_latent - &(&design.x * &state.beta);
        let rss = resid.norm_squared();
        let prior_quad: f64 = a_diag
            .iter()
            .enumerate()
            .map(|(j, a)| state.beta[j] * state.beta[j] / a)
            .sum();
        let shape = 0.5 * (n as f64 + p as f64 + cfg.nu);
        let scale = 0.5 * (cfg.nu * cfg.lambda_sig + rss + prior_quad);
        state.sigma_sq = draw_inverse_gamma(&mut rng, shape, scale);

        for j in 0..k {
            let b = state.beta[sel_start + j];
            let w = state.omega[j];
            let log_odds = (w / (1.0 - w)).ln() + ratio_term
                + b * b * prec_gap / (2.0 * state.sigma_sq);
            let p_incl = 1.0 / (1.0 + (-log_odds).exp());
            state.gamma[j] = u8::from(rng.gen::<f64>() < p_incl);
        }
        for j in 0..k {
            state.omega[j] = draw_omega(&mut rng, problem.priors.f_value[j], state.gamma[j]);
        }

        if t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            for j in 0..k {
                pip_acc[j] += f64::from(state.gamma[j]);
            }
            beta_acc += &state.beta;
            sigma_acc += state.sigma_sq.sqrt();
            // A_gamma changed when gamma flipped after the beta draw; the
            // trace is evaluated at the current state.
            let a_now = a_diagonal(design, &state.gamma, cfg);
            let resid_now = &state.y_latent - &(&design.x * &state.beta);
            let value = parts.eval(&state, resid_now.norm_squared(), &a_now, problem, cfg);
            if !value.is_finite() {
                return Err(CbvsError::NonFinite {
                    what: "Gibbs log posterior trace",
                });
            }
            trace.push(value);
            if let Some(tr) = gamma_trace.as_mut() {
                let mut mask = 0u64;
                for (j, g) in state.gamma.iter().enumerate() {
                    mask |= u64::from(*g) << j;
                }
                tr.push(mask);
            }
        }
    }

    let count = trace.len() as f64;
    let beta_std: Vec<f64> = beta_acc.iter().map(|b| b / count).collect();
    Ok(CbvsFit {
        algorithm: Algorithm::Gibbs,
        seed: cfg.seed,
        config: cfg.clone(),
        covariate_ids: design.selectable_ids().to_vec(),
        pip: pip_acc.iter().map(|v| v / count).collect(),
        column_ids: design.column_ids.clone(),
        beta_raw: design.beta_to_raw(&beta_std),
        beta_std,
        sigma_hat: sigma_acc / count,
        log_post_trace: trace,
        acceptance_rate: None,
        em_iterations: None,
        em_objective: None,
        gamma_trace,
    })
}

/// Used by conjugacy diagnostics: run the sampler with gamma pinned to a
/// fixed pattern (no gamma or omega updates).
pub fn fit_gibbs_pinned(
    problem: &FitProblem<'_>,
    cfg: &CbvsConfig,
    gamma: &[u8],
) -> Result<CbvsFit, CbvsError> {
    cfg.validate()?;
    let design = problem.design;
    let (n, p) = (design.n(), design.p());
    assert_eq!(gamma.len(), design.n_selectable());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let y_latent = init_latent(problem, cfg);
    let mut sigma_sq = crate::numeric::sample_variance(y_latent.as_slice()).max(1e-12);
    let gram = design.x.tr_mul(&design.x);
    let xty = design.x.tr_mul(&y_latent);
    let a_diag = a_diagonal(design, gamma, cfg);

    let mut beta_acc = DVector::<f64>::zeros(p);
    let mut sigma_acc = 0.0;
    let mut count = 0.0;
    for t in 0..cfg.iterations {
        let mut c = gram.clone();
        for (j, a) in a_diag.iter().enumerate() {
            c[(j, j)] += a.recip();
        }
        let chol = nalgebra::Cholesky::new(c).ok_or(CbvsError::FactorizationFailure {
            what: "drawing beta with pinned gamma",
        })?;
        let mean = chol.solve(&xty);
        let z = DVector::from_fn(p, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let noise = chol
            .l()
            .tr_solve_lower_triangular(&z)
            .ok_or(CbvsError::FactorizationFailure {
                what: "back-substituting the pinned beta draw",
            })?;
        let beta = &mean + sigma_sq.sqrt() * noise;
        let resid = &y_latent - &(&design.x * &beta);
        let prior_quad: f64 = a_diag
            .iter()
            .enumerate()
            .map(|(j, a)| beta[j] * beta[j] / a)
            .sum();
        let shape = 0.5 * (n as f64 + p as f64 + cfg.nu);
        let scale = 0.5 * (cfg.nu * cfg.lambda_sig + resid.norm_squared() + prior_quad);
        sigma_sq = draw_inverse_gamma(&mut rng, shape, scale);
        if t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            beta_acc += &beta;
            sigma_acc += sigma_sq.sqrt();
            count += 1.0;
        }
    }
    let beta_std: Vec<f64> = beta_acc.iter().map(|b| b / count).collect();
    Ok(CbvsFit {
        algorithm: Algorithm::Gibbs,
        seed: cfg.seed,
        config: cfg.clone(),
        covariate_ids: design.selectable_ids().to_vec(),
        pip: gamma.iter().map(|g| f64::from(*g)).collect(),
        column_ids: design.column_ids.clone(),
        beta_raw: design.beta_to_raw(&beta_std),
        beta_std,
        sigma_hat: sigma_acc / count,
        log_post_trace: Vec::new(),
        acceptance_rate: None,
        em_iterations: None,
        em_objective: None,
        gamma_trace: None,
    })
}
