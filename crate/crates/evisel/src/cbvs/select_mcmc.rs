//! Metropolis search over the inclusion lattice using the collapsed
//! posterior, with Add / Delete / Swap proposals chosen uniformly and the
//! stated fallbacks when a move is impossible. Coefficients come from a
//! model-averaging pass: at every retained iteration (sigma, beta) are drawn
//! from their conditional posterior given the current model and combined
//! across iterations.
//!
//! Add and Delete proposals are not symmetric (they pick uniformly among
//! zeros respectively ones), so by default the acceptance ratio carries the
//! reverse-proposal correction that makes the collapsed posterior the exact
//! stationary law. `literal_acceptance` drops the correction to follow the
//! plain min{1, exp(delta)} rule verbatim.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::collapsed::{
    a_diagonal, log_posterior_from_parts, CollapsedCache, CollapsedFactor,
};
use super::engine::FitEngine;
use super::gibbs::{draw_inverse_gamma, init_latent};
use super::truncnorm;
use super::{Algorithm, BmaWeighting, CbvsConfig, CbvsError, CbvsFit, FitProblem};

pub(crate) struct SelectMcmcEngine;

impl FitEngine for SelectMcmcEngine {
    fn name(&self) -> &'static str {
        "select-mcmc"
    }

    fn fit(&self, problem: &FitProblem<'_>, cfg: &CbvsConfig) -> Result<CbvsFit, CbvsError> {
        fit_selection_mcmc(problem, cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Add,
    Delete,
    Swap,
}

/// Map a uniformly chosen move to the one actually performed, following the
/// fallback rules: Add with nothing to add becomes Delete, Delete with
/// nothing to delete becomes Add, and Swap falls back in the same way.
fn resolve_move(pick: u8, n_ones: usize, k: usize) -> Move {
    match pick {
        0 => {
            if n_ones == k {
                Move::Delete
            } else {
                Move::Add
            }
        }
        1 => {
            if n_ones == 0 {
                Move::Add
            } else {
                Move::Delete
            }
        }
        _ => {
            if n_ones == 0 {
                Move::Add
            } else if n_ones == k {
                Move::Delete
            } else {
                Move::Swap
            }
        }
    }
}

/// Probability that the executed move is an Add at a state with `n_ones`
/// inclusions (out of k): 1/3 normally, 1 when every move falls back to Add.
fn prob_exec_add(n_ones: usize) -> f64 {
    if n_ones == 0 {
        1.0
    } else {
        1.0 / 3.0
    }
}

fn prob_exec_delete(n_ones: usize, k: usize) -> f64 {
    if n_ones == k {
        1.0
    } else {
        1.0 / 3.0
    }
}

fn nth_index_with(gamma: &[u8], value: u8, rank: usize) -> usize {
    gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| **g == value)
        .nth(rank)
        .map(|(j, _)| j)
        .expect("rank within count")
}

/// Streaming convex combination of coefficient draws. The softmax variant
/// rescales on the fly so only the running maximum log posterior matters;
/// the literal variant uses max(-log posterior, 0) weights directly.
struct BmaAccumulator {
    mode: BmaWeighting,
    max_log: f64,
    weighted: DVector<f64>,
    weight_sum: f64,
    plain_sum: DVector<f64>,
    count: f64,
}

impl BmaAccumulator {
    fn new(p: usize, mode: BmaWeighting) -> BmaAccumulator {
        BmaAccumulator {
            mode,
            max_log: f64::NEG_INFINITY,
            weighted: DVector::zeros(p),
            weight_sum: 0.0,
            plain_sum: DVector::zeros(p),
            count: 0.0,
        }
    }

    fn push(&mut self, log_post: f64, beta: &DVector<f64>) {
        self.plain_sum += beta;
        self.count += 1.0;
        match self.mode {
            BmaWeighting::Softmax => {
                if log_post > self.max_log {
                    if self.max_log.is_finite() {
                        let rescale = (self.max_log - log_post).exp();
                        self.weighted *= rescale;
                        self.weight_sum *= rescale;
                    }
                    self.max_log = log_post;
                }
                let w = (log_post - self.max_log).exp();
                self.weighted += w * beta;
                self.weight_sum += w;
            }
            BmaWeighting::LiteralNegLog => {
                let w = (-log_post).max(0.0);
                self.weighted += w * beta;
                self.weight_sum += w;
            }
        }
    }

    fn finish(self) -> Vec<f64> {
        if self.weight_sum > 0.0 {
            (self.weighted / self.weight_sum).iter().copied().collect()
        } else {
            // Degenerate weights (possible only in the literal mode when
            // every log posterior is non-negative): fall back to the plain
            // average of draws.
            (self.plain_sum / self.count).iter().copied().collect()
        }
    }
}

pub fn fit_selection_mcmc(
    problem: &FitProblem<'_>,
    cfg: &CbvsConfig,
) -> Result<CbvsFit, CbvsError> {
    cfg.validate()?;
    let design = problem.design;
    let (n, p, k) = (design.n(), design.p(), design.n_selectable());
    if k == 0 {
        return Err(CbvsError::AllMovesImpossible);
    }
    let priors = problem.priors;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut y = init_latent(problem, cfg);
    let mut cache = CollapsedCache::new(&design.x, &y);
    let mut gamma: Vec<u8> = priors
        .prior_mean
        .iter()
        .map(|pm| u8::from(rng.gen::<f64>() < *pm))
        .collect();
    let mut n_ones = gamma.iter().filter(|g| **g == 1).count();
    let mut factor = CollapsedFactor::new(&cache, &a_diagonal(design, &gamma, cfg))?;
    let mut log_post = log_posterior_from_parts(&factor, &cache, &gamma, priors, cfg)?;

    let retained = (cfg.iterations - cfg.burn_in).div_ceil(cfg.thin);
    let mut pip_acc = vec![0.0f64; k];
    let mut bma = BmaAccumulator::new(p, cfg.bma_weighting);
    let mut sigma_acc = 0.0f64;
    let mut trace = Vec::with_capacity(retained);
    let trace_gamma = cfg.record_gamma_trace && k <= 64;
    let mut gamma_trace = if trace_gamma {
        Some(Vec::with_capacity(retained))
    } else {
        None
    };
    let mut accepted = 0usize;

    for t in 0..cfg.iterations {
        let mv = resolve_move(rng.gen_range(0..3u8), n_ones, k);
        let mut proposal = gamma.clone();
        // Log proposal-density correction ln q(new -> old) - ln q(old -> new);
        // zero for Swap by symmetry.
        let mut hastings = 0.0;
        match mv {
            Move::Add => {
                let zeros = k - n_ones;
                let j = nth_index_with(&gamma, 0, rng.gen_range(0..zeros));
                proposal[j] = 1;
                let fwd = prob_exec_add(n_ones) / zeros as f64;
                let rev = prob_exec_delete(n_ones + 1, k) / (n_ones + 1) as f64;
                hastings = (rev / fwd).ln();
            }
            Move::Delete => {
                let j = nth_index_with(&gamma, 1, rng.gen_range(0..n_ones));
                proposal[j] = 0;
                let fwd = prob_exec_delete(n_ones, k) / n_ones as f64;
                let rev = prob_exec_add(n_ones - 1) / (k - n_ones + 1) as f64;
                hastings = (rev / fwd).ln();
            }
            Move::Swap => {
                let zeros = k - n_ones;
                let j0 = nth_index_with(&gamma, 0, rng.gen_range(0..zeros));
                let j1 = nth_index_with(&gamma, 1, rng.gen_range(0..n_ones));
                proposal[j0] = 1;
                proposal[j1] = 0;
            }
        }
        let factor_new = CollapsedFactor::new(&cache, &a_diagonal(design, &proposal, cfg))?;
        let log_post_new = log_posterior_from_parts(&factor_new, &cache, &proposal, priors, cfg)?;
        let mut delta = log_post_new - log_post;
        if !cfg.literal_acceptance {
            delta += hastings;
        }
        let u: f64 = rng.gen();
        if u.ln() < delta {
            gamma = proposal;
            n_ones = gamma.iter().filter(|g| **g == 1).count();
            factor = factor_new;
            log_post = log_post_new;
            accepted += 1;
        }

        // Conditional (sigma, beta) draw given the current model; it feeds
        // the model average and, under censoring, the imputation sweep.
        let quad = factor.quad_form(&cache);
        let sigma_sq = draw_inverse_gamma(
            &mut rng,
            0.5 * (n as f64 + cfg.nu),
            0.5 * (cfg.nu * cfg.lambda_sig + quad),
        );
        let mean = factor.beta_mean(&cache);
        let z = DVector::from_fn(p, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let noise = factor
            .chol
            .l()
            .tr_solve_lower_triangular(&z)
            .ok_or(CbvsError::FactorizationFailure {
                what: "back-substituting the model-averaged beta draw",
            })?;
        let beta = &mean + sigma_sq.sqrt() * noise;

        if t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            for (j, g) in gamma.iter().enumerate() {
                pip_acc[j] += f64::from(*g);
            }
            bma.push(log_post, &beta);
            sigma_acc += sigma_sq.sqrt();
            trace.push(log_post);
            if let Some(tr) = gamma_trace.as_mut() {
                let mut mask = 0u64;
                for (j, g) in gamma.iter().enumerate() {
                    mask |= u64::from(*g) << j;
                }
                tr.push(mask);
            }
        }

        if problem.is_censored() {
            let sd = sigma_sq.sqrt();
            for &i in &problem.censored {
                let mean_i = design.x.row(i).transpose().dot(&beta);
                y[i] = truncnorm::draw_above(&mut rng, mean_i, sd, problem.y[i]);
            }
            cache.refresh_response(&design.x, &y);
            // Same factor, new response: refresh the collapsed density.
            log_post = log_posterior_from_parts(&factor, &cache, &gamma, priors, cfg)?;
        }
    }

    let count = trace.len() as f64;
    let beta_std = bma.finish();
    Ok(CbvsFit {
        algorithm: Algorithm::SelectMcmc,
        seed: cfg.seed,
        config: cfg.clone(),
        covariate_ids: design.selectable_ids().to_vec(),
        pip: pip_acc.iter().map(|v| v / count).collect(),
        column_ids: design.column_ids.clone(),
        beta_raw: design.beta_to_raw(&beta_std),
        beta_std,
        sigma_hat: sigma_acc / count,
        log_post_trace: trace,
        acceptance_rate: Some(accepted as f64 / cfg.iterations as f64),
        em_iterations: None,
        em_objective: None,
        gamma_trace,
    })
}
