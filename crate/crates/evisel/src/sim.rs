//! Synthetic-data generators and the benchmark harness. The main generator
//! reproduces a layered design: each downstream covariate has one upstream
//! driver, the signal strength of that link sets the functional evidence
//! class, and the outcome effect sizes sweep three bands so that every
//! evidence/effect combination is covered.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::cbvs::CbvsError;
use crate::data::{
    BiomarkerMap, DataError, GeneLink, MatrixBlock, OmicsDataset, Outcome,
};
use crate::fdr::FdrError;
use crate::mech::{
    classify_evidence, log_bayes_factor, EvidenceClass, GpHyperParams, LbfConstants, MechError,
};

mod bench;
mod metrics;

pub use bench::{
    run_benchmark, BenchFailure, BenchMethod, BenchReport, BenchScenario, MethodAggregate,
    ReplicateRecord,
};
pub use metrics::{compute_metrics, SimMetrics};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(
        "bisection for the {class} class failed: target median {target} not bracketed \
         (endpoints gave {lo_value:.3} and {hi_value:.3})"
    )]
    BisectionFailed {
        class: EvidenceClass,
        target: f64,
        lo_value: f64,
        hi_value: f64,
    },
    #[error("nonlinearity level must be 0..=5, got {level}")]
    LevelOutOfRange { level: usize },
    #[error("truth vector needs at least one positive and one negative")]
    DegenerateTruth,
    #[error("mismatched input lengths: {detail}")]
    LengthMismatch { detail: String },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("bad scenario: {reason}")]
    BadScenario { reason: String },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Mech(#[from] MechError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Cbvs(#[from] CbvsError),
    #[error(transparent)]
    Fdr(#[from] FdrError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Splitmix64 finalizer keyed by an index; decorrelates per-replicate seeds
/// drawn from one master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome effect-size band of one covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectBand {
    Zero,
    Low,
    Medium,
    High,
}

impl EffectBand {
    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            EffectBand::Zero => 0.0,
            EffectBand::Low => rng.gen_range(0.0..0.2),
            EffectBand::Medium => rng.gen_range(0.4..0.6),
            EffectBand::High => rng.gen_range(0.9..1.1),
        }
    }
}

pub const EVIDENCE_ORDER: [EvidenceClass; 4] = [
    EvidenceClass::None,
    EvidenceClass::Substantial,
    EvidenceClass::Strong,
    EvidenceClass::Decisive,
];

/// Slot of a class in per-class arrays (`xi`, median targets).
pub fn class_slot(class: EvidenceClass) -> usize {
    match class {
        EvidenceClass::None => 0,
        EvidenceClass::Substantial => 1,
        EvidenceClass::Strong => 2,
        EvidenceClass::Decisive => 3,
    }
}

/// Static covariate design of the layered simulation: 200 covariates, the
/// first 60 sweep all four evidence classes crossed with three effect bands
/// (five covariates per cell), the next ten are strong/decisive checkpoints
/// with zero effect, and the remaining 130 carry neither evidence nor effect.
#[derive(Debug, Clone)]
pub struct Sim1Layout {
    pub classes: Vec<EvidenceClass>,
    pub bands: Vec<EffectBand>,
}

impl Sim1Layout {
    pub fn standard() -> Self {
        let mut classes = Vec::with_capacity(200);
        let mut bands = Vec::with_capacity(200);
        for class in EVIDENCE_ORDER {
            for band in [EffectBand::Low, EffectBand::Medium, EffectBand::High] {
                for _ in 0..5 {
                    classes.push(class);
                    bands.push(band);
                }
            }
        }
        for class in [EvidenceClass::Strong, EvidenceClass::Decisive] {
            for _ in 0..5 {
                classes.push(class);
                bands.push(EffectBand::Zero);
            }
        }
        while classes.len() < 200 {
            classes.push(EvidenceClass::None);
            bands.push(EffectBand::Zero);
        }
        Sim1Layout { classes, bands }
    }

    pub fn p(&self) -> usize {
        self.classes.len()
    }

    pub fn signal_count(&self) -> usize {
        self.bands.iter().filter(|b| **b != EffectBand::Zero).count()
    }
}

/// Generating truth attached to one simulated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sim1Truth {
    pub beta: Vec<f64>,
    /// Mechanistic effect size of each covariate's upstream link.
    pub xi: Vec<f64>,
    pub classes: Vec<EvidenceClass>,
    pub bands: Vec<EffectBand>,
}

impl Sim1Truth {
    /// True inclusion indicator: the covariate sits in a nonzero effect band.
    pub fn signal(&self) -> Vec<bool> {
        self.bands.iter().map(|b| *b != EffectBand::Zero).collect()
    }
}

pub struct Sim1Replicate {
    pub dataset: OmicsDataset,
    pub map: BiomarkerMap,
    pub truth: Sim1Truth,
}

/// Draws one replicate: effect sizes first, then per covariate the upstream
/// column followed by its downstream column, then the outcome noise. The
/// expression blocks are left uncentered.
pub fn generate_sim1(
    n: usize,
    layout: &Sim1Layout,
    xi_by_class: &[f64; 4],
    seed: u64,
) -> Result<Sim1Replicate, SimError> {
    let p = layout.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = layout.bands.iter().map(|b| b.draw(&mut rng)).collect();
    let xi: Vec<f64> = layout
        .classes
        .iter()
        .map(|c| xi_by_class[class_slot(*c)])
        .collect();

    let mut u = DMatrix::<f64>::zeros(n, p);
    let mut x = DMatrix::<f64>::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            u[(i, j)] = rng.sample(StandardNormal);
        }
        for i in 0..n {
            let noise: f64 = rng.sample(StandardNormal);
            x[(i, j)] = xi[j] * u[(i, j)] + noise;
        }
    }
    let beta_v = DVector::from_column_slice(&beta);
    let mean = &x * &beta_v;
    let y = DVector::from_fn(n, |i, _| {
        let noise: f64 = rng.sample(StandardNormal);
        mean[i] + noise
    });

    let gene_ids: Vec<String> = (0..p).map(|j| format!("x{j:03}")).collect();
    let up_ids: Vec<String> = (0..p).map(|j| format!("u{j:03}")).collect();
    let sample_ids: Vec<String> = (0..n).map(|i| format!("s{i:04}")).collect();
    let map = BiomarkerMap {
        genes: gene_ids
            .iter()
            .enumerate()
            .map(|(j, id)| GeneLink {
                gene_id: id.clone(),
                gene_col: j,
                upstream_cols: vec![j],
            })
            .collect(),
        proteins: Vec::new(),
    };
    let dataset = OmicsDataset::new(
        sample_ids,
        MatrixBlock::new(u, up_ids)?,
        vec!["sim".to_string(); p],
        MatrixBlock::new(x, gene_ids)?,
        MatrixBlock::empty(n),
        None,
        Outcome::Continuous { y },
    )?;
    let truth = Sim1Truth {
        beta,
        xi,
        classes: layout.classes.clone(),
        bands: layout.bands.clone(),
    };
    Ok(Sim1Replicate {
        dataset,
        map,
        truth,
    })
}

/// Fixed bank of single-covariate probe draws used to map a mechanistic
/// effect size to a Monte-Carlo median lbf. The same draws serve every
/// probed effect size, which makes the median a deterministic function and
/// keeps bisection stable.
pub struct XiProbes {
    upstream: Vec<DVector<f64>>,
    noise: Vec<DVector<f64>>,
    consts: LbfConstants,
}

impl XiProbes {
    pub fn new(
        n: usize,
        count: usize,
        hyper: &GpHyperParams,
        seed: u64,
    ) -> Result<Self, SimError> {
        let consts = LbfConstants::new(n, hyper)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| {
            DVector::from_fn(n, |_, _| {
                let v: f64 = rng.sample(StandardNormal);
                v
            })
        };
        let mut upstream = Vec::with_capacity(count);
        let mut noise = Vec::with_capacity(count);
        for _ in 0..count {
            upstream.push(draw(&mut rng));
            noise.push(draw(&mut rng));
        }
        Ok(XiProbes {
            upstream,
            noise,
            consts,
        })
    }

    /// Median lbf of the single-upstream mechanistic model at effect size
    /// `xi` over the probe bank.
    pub fn median_lbf(&self, xi: f64) -> Result<f64, SimError> {
        let lbfs: Vec<f64> = self
            .upstream
            .par_iter()
            .zip(self.noise.par_iter())
            .map(|(u, e)| {
                let x = u * xi + e;
                let design = DMatrix::from_column_slice(u.len(), 1, u.as_slice());
                log_bayes_factor(&x, &design, &self.consts).map(|o| o.lbf)
            })
            .collect::<Result<_, _>>()?;
        Ok(crate::numeric::median(&lbfs))
    }
}

/// Number of probe replicates behind each median evaluation.
pub const XI_PROBE_COUNT: usize = 50;
/// Bisection targets: one median lbf per evidence class, sitting near the
/// middle of each class's bin.
pub const XI_MEDIAN_TARGETS: [f64; 4] = [0.1, 0.75, 1.5, 3.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiCalibration {
    /// Mechanistic effect size per evidence class; the no-evidence class is
    /// pinned at zero.
    pub xi: [f64; 4],
    /// Median lbf realized at the returned effect sizes.
    pub achieved_median: [f64; 4],
}

/// Finds, per evidence class, the upstream effect size whose Monte-Carlo
/// median lbf hits the class target, by bisection over [0, 5].
pub fn calibrate_xi(
    targets: &[f64; 4],
    n: usize,
    hyper: &GpHyperParams,
    seed: u64,
) -> Result<XiCalibration, SimError> {
    let probes = XiProbes::new(n, XI_PROBE_COUNT, hyper, seed)?;
    let mut xi = [0.0_f64; 4];
    let mut achieved = [0.0_f64; 4];
    achieved[0] = probes.median_lbf(0.0)?;

    for slot in 1..4 {
        let class = EVIDENCE_ORDER[slot];
        let target = targets[slot];
        let (mut lo, mut hi) = (0.0_f64, 5.0_f64);
        let f_lo = probes.median_lbf(lo)?;
        let f_hi = probes.median_lbf(hi)?;
        if !(f_lo < target && target < f_hi) {
            return Err(SimError::BisectionFailed {
                class,
                target,
                lo_value: f_lo,
                hi_value: f_hi,
            });
        }
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..40 {
            mid = 0.5 * (lo + hi);
            let fm = probes.median_lbf(mid)?;
            if (fm - target).abs() < 5e-3 {
                break;
            }
            if fm < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-4 {
                mid = 0.5 * (lo + hi);
                break;
            }
        }
        let fm = probes.median_lbf(mid)?;
        if classify_evidence(fm)? != class {
            return Err(SimError::BisectionFailed {
                class,
                target,
                lo_value: fm,
                hi_value: fm,
            });
        }
        xi[slot] = mid;
        achieved[slot] = fm;
    }
    Ok(XiCalibration {
        xi,
        achieved_median: achieved,
    })
}

/// One draw from the nonlinearity study: five uniform covariates and an
/// outcome whose first `level` terms use the nonlinear forms.
pub struct NonlinearInstance {
    pub level: usize,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Shared coefficients of both the linear and nonlinear branches.
    pub beta: [f64; 5],
}

pub const NONLINEAR_BETA: [f64; 5] = [10.0, -15.0, 10.0, -8.0, 20.0];

/// The five component functions with unit coefficients; the mean response is
/// their beta-weighted sum.
fn nonlinear_components(row: &[f64]) -> [f64; 5] {
    [
        row[0].cos(),
        row[1] * row[1],
        (-row[2]).exp() * row[1],
        row[2].sin() * row[3].cos(),
        row[0] * row[4],
    ]
}

pub fn generate_nonlinear(level: usize, n: usize, seed: u64) -> Result<NonlinearInstance, SimError> {
    generate_nonlinear_with_noise(level, n, seed, 1.0)
}

/// `noise_sd = 0` gives the noiseless variant used for generator checks.
pub fn generate_nonlinear_with_noise(
    level: usize,
    n: usize,
    seed: u64,
    noise_sd: f64,
) -> Result<NonlinearInstance, SimError> {
    if level > 5 {
        return Err(SimError::LevelOutOfRange { level });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 5, |_, _| rng.gen::<f64>());
    let y = DVector::from_fn(n, |i, _| {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let parts = nonlinear_components(&row);
        let mut mean = 0.0;
        for j in 0..5 {
            let term = if j < level { parts[j] } else { row[j] };
            mean += NONLINEAR_BETA[j] * term;
        }
        let noise: f64 = rng.sample(StandardNormal);
        mean + noise_sd * noise
    });
    Ok(NonlinearInstance {
        level,
        x,
        y,
        beta: NONLINEAR_BETA,
    })
}
