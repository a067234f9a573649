//! Accuracy and behavior checks for the numerical stack, one test per
//! advertised guarantee. Each test prints a `criterion N: PASS`/`FAIL`
//! line and enforces its own wall-clock budget, so this target doubles
//! as a release checklist. The marginal-likelihood checks compare against
//! brute-force quadrature oracles built here from the generative densities,
//! not against the library's own algebra.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use evisel::calibration::{calibrate, CalibratedPrior, CalibrationConfig};
use evisel::cbvs::collapsed::{enumerate_models, CollapsedCache};
use evisel::cbvs::emvs::{fit_emvs, random_instance};
use evisel::cbvs::gibbs::{fit_gibbs, fit_gibbs_pinned};
use evisel::cbvs::select_mcmc::fit_selection_mcmc;
use evisel::cbvs::{assemble_design, Algorithm, CbvsConfig, FitProblem, SelectablePriors};
use evisel::data::Outcome;
use evisel::fdr::{select_fdr, FdrRule};
use evisel::mech::{
    log_bayes_factor, log_bayes_factor_linear, log_marginal_gp, log_marginal_null, GpHyperParams,
    LbfConstants,
};
use evisel::sim::{
    calibrate_xi, class_slot, generate_nonlinear, generate_sim1, run_benchmark, BenchMethod,
    BenchScenario, Sim1Layout, XI_MEDIAN_TARGETS,
};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

fn conclude(number: u32, pass: bool, budget: Duration, elapsed: Duration, detail: &str) {
    let verdict = if pass && elapsed <= budget { "PASS" } else { "FAIL" };
    println!("criterion {number}: {verdict} ({detail}, took {elapsed:.1?} of {budget:?})");
    assert!(pass, "criterion {number}: {detail}");
    assert!(
        elapsed <= budget,
        "criterion {number} overran its budget: {elapsed:?} > {budget:?}"
    );
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

// ---------------------------------------------------------------------------
// criterion 1: the evidence-to-prior map hits its anchor values, and zero or
// negative evidence collapses to the uniform Beta(1, 1).

#[test]
fn criterion_01_calibration_anchor_values() {
    let start = Instant::now();
    let cfg = CalibrationConfig::default();

    let anchors = [(0.25, 0.502), (0.75, 0.543), (1.5, 0.726), (3.0, 0.962)];
    let mut worst_anchor = 0.0f64;
    for (lbf, want) in anchors {
        let got = calibrate(lbf, &cfg).unwrap().prior_mean;
        worst_anchor = worst_anchor.max((got - want).abs());
    }

    let mut worst_flat = 0.0f64;
    for lbf in [0.0, -0.3, -5.0] {
        let p = calibrate(lbf, &cfg).unwrap();
        worst_flat = worst_flat
            .max((p.beta_a - 1.0).abs())
            .max((p.beta_b - 1.0).abs());
    }

    let elapsed = start.elapsed();
    conclude(
        1,
        worst_anchor <= 1e-3 && worst_flat <= 1e-12,
        Duration::from_millis(500),
        elapsed,
        &format!("anchor dev {worst_anchor:.2e} (tol 1e-3), flat-prior dev {worst_flat:.2e} (tol 1e-12)"),
    );
}

// ---------------------------------------------------------------------------
// criterion 2: closed-form and quadrature marginals against brute force.
//
// The null oracle integrates the generative joint
//   N(y; mu 1, tau^2 I) N(mu; 0, tau^2 g/(1+g)) IG(tau^2; nu0/2, nu0 tau0^2/2)
// over a nested Simpson grid in (ln tau^2, mu); the mu slice is exactly
// Gaussian, so a grid centered on its conditional mean with +-12 sd cover
// leaves truncation error far below the comparison tolerance. The GP oracle
// integrates the length-scale prior on a dense uniform lambda grid.

/// log of a composite Simpson integral given log integrand values at an odd
/// number of equally spaced nodes.
fn log_simpson(log_values: &[f64], h: f64) -> f64 {
    assert!(log_values.len() >= 3 && log_values.len() % 2 == 1);
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for (i, v) in log_values.iter().enumerate() {
        let w = if i == 0 || i == log_values.len() - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * (v - max).exp();
    }
    max + (sum * h / 3.0).ln()
}

fn oracle_null_marginal(y: &DVector<f64>, g: f64, nu0: f64, tau0_sq: f64) -> f64 {
    let n = y.len();
    let nf = n as f64;
    let ln_2pi = (2.0 * PI).ln();
    let s = g / (1.0 + g);
    let alpha = 0.5 * nu0;
    let beta = 0.5 * nu0 * tau0_sq;
    // conditional mean of mu does not depend on tau^2; its sd does
    let mu_prec = nf + 1.0 + 1.0 / g;
    let mu_center = y.sum() / mu_prec;

    const T_NODES: usize = 2001;
    const MU_NODES: usize = 801;
    let (t_lo, t_hi) = (-15.0, 10.0);
    let th = (t_hi - t_lo) / (T_NODES - 1) as f64;
    let mut outer = Vec::with_capacity(T_NODES);
    let mut inner = vec![0.0f64; MU_NODES];
    for it in 0..T_NODES {
        let t = t_lo + th * it as f64;
        let tau_sq = t.exp();
        let sd = (tau_sq / mu_prec).sqrt();
        let mu_lo = mu_center - 12.0 * sd;
        let mh = 24.0 * sd / (MU_NODES - 1) as f64;
        for (im, slot) in inner.iter_mut().enumerate() {
            let mu = mu_lo + mh * im as f64;
            let sse: f64 = y.iter().map(|v| (v - mu) * (v - mu)).sum();
            let log_lik = -0.5 * nf * (ln_2pi + t) - sse / (2.0 * tau_sq);
            let log_mu = -0.5 * (ln_2pi + t + s.ln()) - mu * mu / (2.0 * tau_sq * s);
            *slot = log_lik + log_mu;
        }
        let log_inner = log_simpson(&inner, mh);
        let log_tau = alpha * beta.ln() - ln_gamma(alpha) - (alpha + 1.0) * t - beta * (-t).exp();
        // + t is the Jacobian of tau^2 = e^t
        outer.push(log_inner + log_tau + t);
    }
    log_simpson(&outer, th)
}

fn oracle_gp_marginal(y: &DVector<f64>, x: &DMatrix<f64>, c: &LbfConstants, nu0: f64) -> f64 {
    let n = y.len();
    let nf = n as f64;
    let log_shared = -0.5 * nf * (2.0 * PI).ln() + 0.5 * nu0 * (c.a / 2.0).ln()
        - ln_gamma(0.5 * nu0)
        + ln_gamma(c.b_n)
        + c.b_n * 2f64.ln();

    let mut d2 = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = (0..x.ncols()).map(|k| (x[(i, k)] - x[(j, k)]).powi(2)).sum();
            d2[(i, j)] = d;
            d2[(j, i)] = d;
        }
    }

    const L_NODES: usize = 20_001;
    let (lo, hi) = (1e-8, 60.0);
    let h = (hi - lo) / (L_NODES - 1) as f64;
    let mut vals = Vec::with_capacity(L_NODES);
    for il in 0..L_NODES {
        let lam = lo + h * il as f64;
        let inv_l2 = 1.0 / (lam * lam);
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c.g + 1.0;
            for j in (i + 1)..n {
                let v = c.g * (-d2[(i, j)] * inv_l2).exp();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        // eigenvalues are >= 1, so the plain factorization cannot fail
        let chol = Cholesky::new(m).expect("oracle kernel factors");
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = y.dot(&chol.solve(y));
        vals.push(c.lambda0.ln() - c.lambda0 * lam - 0.5 * logdet - c.b_n * (quad + c.a).ln());
    }
    log_shared + log_simpson(&vals, h)
}

#[test]
fn criterion_02_marginals_match_brute_force_integration() {
    let start = Instant::now();
    let hyper = GpHyperParams::default();

    let mut worst_null = 0.0f64;
    for i in 0..20u64 {
        let n = 5 + i as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + i);
        let shift = rng.gen_range(-2.0..2.0);
        let scale = rng.gen_range(0.3..2.5);
        let y = DVector::from_fn(n, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            shift + scale * z
        });
        let c = LbfConstants::new(n, &hyper).unwrap();
        let got = log_marginal_null(&y, &c).unwrap();
        let want = oracle_null_marginal(&y, c.g, hyper.nu0, hyper.tau0_sq);
        worst_null = worst_null.max(((got - want) / want).abs());
    }

    let mut worst_gp = 0.0f64;
    for i in 0..10u64 {
        let n = 8 + i as usize;
        let d = 1 + (i as usize) % 3;
        let mut rng = ChaCha8Rng::seed_from_u64(2_000 + i);
        let x = DMatrix::from_fn(n, d, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            z
        });
        let y = DVector::from_fn(n, |r, _| {
            let z: f64 = rng.sample(StandardNormal);
            match i % 3 {
                0 => (2.0 * x[(r, 0)]).sin() * 1.5 + 0.3 * z,
                1 => z,
                _ => x[(r, 0)] * x[(r, 0)] - 1.0 + 0.5 * z,
            }
        });
        let c = LbfConstants::new(n, &hyper).unwrap();
        let (got, _) = log_marginal_gp(&y, &x, &c).unwrap();
        let want = oracle_gp_marginal(&y, &x, &c, hyper.nu0);
        worst_gp = worst_gp.max(((got - want) / want).abs());
    }

    let elapsed = start.elapsed();
    conclude(
        2,
        worst_null <= 1e-6 && worst_gp <= 1e-5,
        Duration::from_secs(120),
        elapsed,
        &format!(
            "null rel dev {worst_null:.2e} over 20 instances (tol 1e-6), \
             gp rel dev {worst_gp:.2e} over 10 instances (tol 1e-5)"
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 3: with eight selectable covariates the selection chain's visit
// frequencies match the exhaustively enumerated model posterior in total
// variation, for three independent chain seeds.

#[test]
fn criterion_03_selection_chain_matches_exhaustive_posterior() {
    let start = Instant::now();
    let ds = random_instance(30, 4, 4, 7);
    let design = assemble_design(&ds);
    assert_eq!(design.n_selectable(), 8);

    // calibrated priors at spread-out evidence values so inclusion odds differ
    let cal = CalibrationConfig::default();
    let lbfs = [3.0, 1.5, 0.75, 0.0, 2.2, 1.0, 0.4, -0.5];
    let priors: Vec<CalibratedPrior> = design
        .selectable_ids()
        .iter()
        .zip(lbfs)
        .map(|(id, lbf)| {
            let mut p = calibrate(lbf, &cal).unwrap();
            p.covariate_id = id.clone();
            p
        })
        .collect();
    let aligned = SelectablePriors::align(&design, &priors).unwrap();

    let y = match &ds.outcome {
        Outcome::Continuous { y } => y.clone(),
        _ => unreachable!(),
    };
    let cache = CollapsedCache::new(&design.x, &y);

    let mut cfg = CbvsConfig::default();
    cfg.algorithm = Algorithm::SelectMcmc;
    cfg.iterations = 50_000;
    cfg.burn_in = 10_000;
    cfg.record_gamma_trace = true;

    let exact = enumerate_models(&cache, &design, &aligned, &cfg).unwrap();
    let problem = FitProblem::new(&design, &ds.outcome, &aligned).unwrap();

    let mut worst_tv = 0.0f64;
    for seed in [101, 202, 303] {
        cfg.seed = seed;
        let fit = fit_selection_mcmc(&problem, &cfg).unwrap();
        let masks = fit.gamma_trace.expect("trace was requested");
        let total = masks.len() as f64;
        let mut freq = vec![0.0f64; exact.len()];
        for m in &masks {
            freq[*m as usize] += 1.0;
        }
        let tv: f64 = 0.5
            * exact
                .iter()
                .zip(&freq)
                .map(|(p, f)| (p - f / total).abs())
                .sum::<f64>();
        worst_tv = worst_tv.max(tv);
    }

    let elapsed = start.elapsed();
    conclude(
        3,
        worst_tv < 0.05,
        Duration::from_secs(300),
        elapsed,
        &format!("worst TV over 3 seeds {worst_tv:.4} (tol 0.05, 50k iterations, 2^8 models)"),
    );
}

// ---------------------------------------------------------------------------
// criterion 4: with the inclusion vector pinned, the Gibbs draws leave a
// normal-inverse-gamma posterior whose beta mean is the ridge solve
// (X'X + A^-1)^-1 X'y. The chain estimate must land within 3 Monte Carlo
// standard errors, estimated from independent replicate chains.

#[test]
fn criterion_04_pinned_gibbs_matches_conjugate_mean() {
    let start = Instant::now();
    let ds = random_instance(60, 3, 0, 21);
    let design = assemble_design(&ds);
    let priors = SelectablePriors::uniform(design.n_selectable());
    let problem = FitProblem::new(&design, &ds.outcome, &priors).unwrap();
    let gamma: Vec<u8> = vec![1, 0, 1];

    let mut cfg = CbvsConfig::default();
    cfg.algorithm = Algorithm::Gibbs;
    cfg.iterations = 3_000;
    cfg.burn_in = 500;

    // conjugate closed form, built from the stated prior variances
    let mut a_diag = vec![cfg.v1; design.p()];
    for (k, g) in gamma.iter().enumerate() {
        a_diag[design.selectable.start + k] = if *g == 1 { cfg.v1 } else { cfg.v0 };
    }
    let mut c_mat = design.x.tr_mul(&design.x);
    for (j, a) in a_diag.iter().enumerate() {
        c_mat[(j, j)] += a.recip();
    }
    let want = Cholesky::new(c_mat)
        .expect("conjugate system factors")
        .solve(&design.x.tr_mul(&problem.y));

    const CHAINS: usize = 24;
    let p = design.p();
    let mut chain_means = vec![Vec::with_capacity(CHAINS); p];
    for seed in 0..CHAINS as u64 {
        cfg.seed = seed + 1;
        let fit = fit_gibbs_pinned(&problem, &cfg, &gamma).unwrap();
        for j in 0..p {
            chain_means[j].push(fit.beta_std[j]);
        }
    }

    let mut worst_ratio = 0.0f64;
    for j in 0..p {
        let m = chain_means[j].iter().sum::<f64>() / CHAINS as f64;
        let var = chain_means[j]
            .iter()
            .map(|v| (v - m) * (v - m))
            .sum::<f64>()
            / (CHAINS - 1) as f64;
        let se = (var / CHAINS as f64).sqrt();
        assert!(se > 0.0, "degenerate chain spread at coordinate {j}");
        worst_ratio = worst_ratio.max((m - want[j]).abs() / se);
    }

    let elapsed = start.elapsed();
    conclude(
        4,
        worst_ratio <= 3.0,
        Duration::from_secs(60),
        elapsed,
        &format!("worst |mean - closed form| of {worst_ratio:.2} standard errors ({CHAINS} chains, tol 3)"),
    );
}

// ---------------------------------------------------------------------------
// criterion 5: the EM mode finder and the Gibbs posterior mean agree on the
// layered simulation, loosely at n = 50 and tightly at n = 800, measured as
// the mean squared difference over the 200 selectable coefficients.

#[test]
fn criterion_05_emvs_tracks_gibbs_estimates() {
    let start = Instant::now();
    let hyper = GpHyperParams::default();
    let layout = Sim1Layout::standard();
    let cal = CalibrationConfig::default();
    // effect sizes found once at n = 50; the comparison only needs a fixed,
    // sensible generator, not per-n recalibration
    let xi = calibrate_xi(&XI_MEDIAN_TARGETS, 50, &hyper, 613).unwrap();

    let mut detail = String::new();
    let mut pass = true;
    for (n, bound) in [(50usize, 1.0f64), (800, 0.15)] {
        let mut msds = Vec::with_capacity(10);
        for rep in 0..10u64 {
            let sim = generate_sim1(n, &layout, &xi.xi, 9_000 + n as u64 + rep).unwrap();
            let design = assemble_design(&sim.dataset);
            // priors from the class-level evidence targets, skipping the
            // mechanistic stage the classes were built to reproduce
            let priors: Vec<CalibratedPrior> = design
                .selectable_ids()
                .iter()
                .enumerate()
                .map(|(j, id)| {
                    let target = XI_MEDIAN_TARGETS[class_slot(sim.truth.classes[j])];
                    let mut p = calibrate(target, &cal).unwrap();
                    p.covariate_id = id.clone();
                    p
                })
                .collect();
            let aligned = SelectablePriors::align(&design, &priors).unwrap();
            let problem = FitProblem::new(&design, &sim.dataset.outcome, &aligned).unwrap();

            let mut gcfg = CbvsConfig::default();
            gcfg.algorithm = Algorithm::Gibbs;
            gcfg.iterations = 2_500;
            gcfg.burn_in = 500;
            gcfg.seed = 31 + rep;
            let gibbs = fit_gibbs(&problem, &gcfg).unwrap();

            let mut ecfg = gcfg.clone();
            ecfg.algorithm = Algorithm::Emvs;
            let emvs = fit_emvs(&problem, &ecfg).unwrap();

            let k = design.n_selectable() as f64;
            let msd = design
                .selectable
                .clone()
                .map(|j| (gibbs.beta_std[j] - emvs.beta_std[j]).powi(2))
                .sum::<f64>()
                / k;
            msds.push(msd);
        }
        let mean = msds.iter().sum::<f64>() / msds.len() as f64;
        let max = msds.iter().copied().fold(0.0f64, f64::max);
        pass &= mean < bound;
        detail.push_str(&format!("n={n}: mean msd {mean:.4} (max {max:.4}, bound {bound}); "));
    }

    let elapsed = start.elapsed();
    conclude(5, pass, Duration::from_secs(1_800), elapsed, detail.trim_end_matches("; "));
}

// ---------------------------------------------------------------------------
// criterion 6: on the standard benchmark scenario, calibrated priors beat
// uniform priors on AUC: the median gap is at least 0.02 and a one-sided
// sign test over the paired replicates is significant at 5%.

/// P(Binomial(m, 1/2) >= wins), exact.
fn sign_test_p(m: usize, wins: usize) -> f64 {
    let mut tail = 0.0f64;
    for i in wins..=m {
        let mut c = 0.0f64; // ln C(m, i)
        for j in 0..i {
            c += ((m - j) as f64).ln() - ((j + 1) as f64).ln();
        }
        tail += c.exp();
    }
    tail / 2f64.powi(m as i32)
}

#[test]
fn criterion_06_calibration_lifts_benchmark_auc() {
    let start = Instant::now();
    let scenario = BenchScenario::default();
    let report = run_benchmark(&scenario).unwrap();
    assert!(
        report.failures.is_empty(),
        "benchmark replicates failed: {:?}",
        report.failures
    );

    let auc_of = |method: BenchMethod| -> Vec<f64> {
        let mut by_rep = vec![f64::NAN; scenario.replicates];
        for row in report.rows.iter().filter(|r| r.method == method) {
            by_rep[row.replicate] = row.metrics.auc;
        }
        assert!(by_rep.iter().all(|v| v.is_finite()));
        by_rep
    };
    let calibrated = auc_of(BenchMethod::CbvsCalibrated);
    let uniform = auc_of(BenchMethod::CbvsUncalibrated);

    let gap = median(&calibrated) - median(&uniform);
    let mut wins = 0usize;
    let mut informative = 0usize;
    for (a, b) in calibrated.iter().zip(&uniform) {
        if a != b {
            informative += 1;
            if a > b {
                wins += 1;
            }
        }
    }
    let p = if informative == 0 { 1.0 } else { sign_test_p(informative, wins) };

    let elapsed = start.elapsed();
    conclude(
        6,
        gap >= 0.02 && p < 0.05,
        Duration::from_secs(3_600),
        elapsed,
        &format!(
            "median AUC gap {gap:.4} (needs >= 0.02), sign test p {p:.4} \
             ({wins}/{informative} wins, needs < 0.05)"
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 7: on the five-covariate response family, the GP evidence
// overtakes the linear evidence once at least 40% of the terms are
// nonlinear, and the linear model holds its ground on the fully linear case.

#[test]
fn criterion_07_gp_evidence_tracks_nonlinearity() {
    let start = Instant::now();
    let n = 100;
    let c = LbfConstants::new(n, &GpHyperParams::default()).unwrap();

    let mut med_gp = [0.0f64; 6];
    let mut med_lin = [0.0f64; 6];
    for level in 0..=5usize {
        let mut gp = Vec::with_capacity(100);
        let mut lin = Vec::with_capacity(100);
        for rep in 0..100u64 {
            let inst = generate_nonlinear(level, n, 40_000 + 1_000 * level as u64 + rep).unwrap();
            let mut y = inst.y.clone();
            let mean = y.sum() / n as f64;
            y.apply(|v| *v -= mean);
            gp.push(log_bayes_factor(&y, &inst.x, &c).unwrap().lbf);
            lin.push(log_bayes_factor_linear(&y, &inst.x, &c).unwrap());
        }
        med_gp[level] = median(&gp);
        med_lin[level] = median(&lin);
    }

    let gp_wins = (2..=5).all(|l| med_gp[l] > med_lin[l]);
    let linear_holds = med_lin[0] >= med_gp[0];

    let elapsed = start.elapsed();
    let margins: Vec<String> = (0..=5)
        .map(|l| format!("{}%: {:+.1}", 20 * l, med_gp[l] - med_lin[l]))
        .collect();
    conclude(
        7,
        gp_wins && linear_holds,
        Duration::from_secs(1_200),
        elapsed,
        &format!("median gp-minus-linear lbf by nonlinear share [{}]", margins.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// criterion 8: the EM objective trace never decreases, on 50 random
// instances, with no tolerance.

#[test]
fn criterion_08_emvs_objective_never_decreases() {
    let start = Instant::now();
    let mut checked_steps = 0usize;
    let mut violations = 0usize;
    let mut worst_drop = 0.0f64;
    for i in 0..50u64 {
        let n = 30 + (i as usize % 5) * 10;
        let q_g = 2 + i as usize % 4;
        let q_p = i as usize % 3;
        let ds = random_instance(n, q_g, q_p, 500 + i);
        let design = assemble_design(&ds);
        let priors = SelectablePriors::uniform(design.n_selectable());
        let problem = FitProblem::new(&design, &ds.outcome, &priors).unwrap();
        let fit = fit_emvs(&problem, &CbvsConfig::default()).unwrap();
        for w in fit.log_post_trace.windows(2) {
            checked_steps += 1;
            if w[1] < w[0] {
                violations += 1;
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
        }
    }

    let elapsed = start.elapsed();
    conclude(
        8,
        violations == 0,
        Duration::from_secs(120),
        elapsed,
        &format!("{violations} decreases in {checked_steps} EM steps across 50 instances (worst drop {worst_drop:.2e})"),
    );
}

// ---------------------------------------------------------------------------
// criterion 9: the FDR cut reproduces hand-worked examples exactly, and
// shrinking alpha never grows the selected set.

#[test]
fn criterion_09_fdr_worked_examples_and_monotonicity() {
    let start = Instant::now();

    // sum rule, crossing inside the list: running p sums .05 .15 .30 1.10,
    // the first sum at or above alpha = 0.2 is rank 3, which stays selected
    let a = select_fdr(&[0.95, 0.90, 0.85, 0.20], 0.2, FdrRule::CumulativeSum).unwrap();
    assert_eq!(a.j_star, 3);
    assert_eq!(a.selected_indices(), vec![0, 1, 2]);
    for (rank, want) in [0.05, 0.15, 0.30, 1.10].iter().enumerate() {
        assert!((a.ranked[rank].cum_stat - want).abs() < 1e-12);
    }

    // sum rule, no crossing: total exclusion mass 0.016 never reaches 0.9,
    // so everything is kept
    let b = select_fdr(&[0.999, 0.995, 0.99], 0.9, FdrRule::CumulativeSum).unwrap();
    assert_eq!(b.j_star, 3);
    assert_eq!(b.selected_indices(), vec![0, 1, 2]);

    // mean rule: running means .03 .065 .17667 .245, the longest prefix at
    // or below alpha = 0.12 has length 2; a lone p of .5 selects nothing
    let c = select_fdr(&[0.97, 0.90, 0.60, 0.55], 0.12, FdrRule::CumulativeMean).unwrap();
    assert_eq!(c.j_star, 2);
    assert_eq!(c.selected_indices(), vec![0, 1]);
    let empty = select_fdr(&[0.5], 0.49, FdrRule::CumulativeMean).unwrap();
    assert_eq!(empty.j_star, 0);

    let mut rng = ChaCha8Rng::seed_from_u64(4_242);
    let mut checked = 0usize;
    for rule in [FdrRule::CumulativeSum, FdrRule::CumulativeMean] {
        for _ in 0..1_000 {
            let len = rng.gen_range(1..=40);
            let pips: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
            let alpha_hi = rng.gen_range(0.02..1.0);
            let alpha_lo = rng.gen_range(0.01..alpha_hi);
            let small = select_fdr(&pips, alpha_lo, rule).unwrap();
            let large = select_fdr(&pips, alpha_hi, rule).unwrap();
            let kept: HashSet<usize> = large.selected_indices().into_iter().collect();
            for idx in small.selected_indices() {
                assert!(
                    kept.contains(&idx),
                    "alpha {alpha_lo} selected {idx}, missing at alpha {alpha_hi} under {rule}"
                );
            }
            checked += 1;
        }
    }

    let elapsed = start.elapsed();
    conclude(
        9,
        checked == 2_000,
        Duration::from_secs(10),
        elapsed,
        &format!("3 worked examples exact, nesting held on {checked} random alpha pairs"),
    );
}
