//! Maps per-biomarker evidence scores onto Beta hyperpriors for the
//! inclusion probabilities used downstream by the selection model.
//!
//! The map is a smoothed logistic composition:
//!
//! ```text
//!   s* = max(s, floor)
//!   G(s) = (1/2) [ {1 + (s*/midpoint)^(-exponent)}^(-1) + 1 ]
//!   F(s) = scale * G(s)^power
//!   omega ~ Beta(F, 1/F),  E[omega] = F^2 / (F^2 + 1)
//! ```
//!
//! Zero or negative evidence collapses to Beta(1,1), i.e. a uniform prior;
//! with the defaults the prior mean rises steeply between scores 1 and 2 and
//! saturates just below 256/257.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mech::{Axis, MechanisticResult};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("evidence value is not finite")]
    NonFinite,
    #[error("cannot aggregate an empty evidence vector")]
    EmptyEvidence,
    #[error("precision weights unusable: {reason}")]
    WeightMismatch { reason: String },
    #[error("evidence refers to `{id}`, which is not in the covariate order")]
    UnknownCovariate { id: String },
    #[error("invalid calibration constants: {reason}")]
    BadConfig { reason: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {msg}")]
    BadPriorsRow {
        path: String,
        line: usize,
        msg: String,
    },
}

/// Tuning constants of the evidence-to-prior map. The defaults keep
/// `F(0) = 1` because `scale = 2^power`; if you change one of those two,
/// change the other to preserve the uniform prior at zero evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Truncation floor applied before the logistic, so small and negative
    /// scores all land on the same uniform prior.
    pub floor: f64,
    pub midpoint: f64,
    pub exponent: f64,
    pub power: i32,
    pub scale: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            floor: 1e-6,
            midpoint: 3.0,
            exponent: 2.75,
            power: 4,
            scale: 16.0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |reason: &str| {
            Err(CalibrationError::BadConfig {
                reason: reason.to_string(),
            })
        };
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return bad("floor must be a positive finite number");
        }
        if !(self.midpoint > 0.0 && self.midpoint.is_finite()) {
            return bad("midpoint must be a positive finite number");
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return bad("exponent must be a positive finite number");
        }
        if self.power < 1 {
            return bad("power must be at least 1");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale must be a positive finite number");
        }
        Ok(())
    }
}

/// Beta hyperprior for one covariate's inclusion probability. The shape
/// product `beta_a * beta_b` is 1 by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibratedPrior {
    /// Empty until attached to a covariate by [`calibrate_all`].
    pub covariate_id: String,
    /// Aggregated evidence score the prior was derived from.
    pub s: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub prior_mean: f64,
}

/// How to collapse several evidence scores for one covariate into a scalar.
/// Proteins carry up to two scores (driver and cascading); genes carry one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationScheme {
    Average,
    Maximal,
    PrecisionWeighted { weights: Vec<f64> },
}

pub fn calibrate(
    lbf: f64,
    cfg: &CalibrationConfig,
) -> Result<CalibratedPrior, CalibrationError> {
    if !lbf.is_finite() {
        return Err(CalibrationError::NonFinite);
    }
    let s_star = lbf.max(cfg.floor);
    let logistic = (1.0 + (s_star / cfg.midpoint).powf(-cfg.exponent)).recip();
    let g = 0.5 * (logistic + 1.0);
    let f = cfg.scale * g.powi(cfg.power);
    Ok(CalibratedPrior {
        covariate_id: String::new(),
        s: lbf,
        beta_a: f,
        beta_b: f.recip(),
        prior_mean: f * f / (f * f + 1.0),
    })
}

pub fn aggregate(
    evidence: &[f64],
    scheme: &AggregationScheme,
) -> Result<f64, CalibrationError> {
    if evidence.is_empty() {
        return Err(CalibrationError::EmptyEvidence);
    }
    if evidence.iter().any(|e| !e.is_finite()) {
        return Err(CalibrationError::NonFinite);
    }
    match scheme {
        AggregationScheme::Average => {
            Ok(evidence.iter().sum::<f64>() / evidence.len() as f64)
        }
        AggregationScheme::Maximal => {
            Ok(evidence.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }
        AggregationScheme::PrecisionWeighted { weights } => {
            if weights.len() != evidence.len() {
                return Err(CalibrationError::WeightMismatch {
                    reason: format!(
                        "{} weights for {} evidence entries",
                        weights.len(),
                        evidence.len()
                    ),
                });
            }
            if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(CalibrationError::WeightMismatch {
                    reason: "weights must all be finite and strictly positive".into(),
                });
            }
            let total: f64 = weights.iter().sum();
            Ok(evidence
                .iter()
                .zip(weights)
                .map(|(e, w)| e * w)
                .sum::<f64>()
                / total)
        }
    }
}

// Slot of an axis inside a per-axis weight vector.
fn axis_slot(axis: Axis) -> usize {
    match axis {
        Axis::DriverGene => 0,
        Axis::DriverProtein => 1,
        Axis::CascadingProtein => 2,
    }
}

/// One prior per entry of `covariate_order`, in that order. Covariates with
/// no evidence rows get the uniform prior. For `PrecisionWeighted` the
/// weight vector is indexed by axis (driver gene, driver protein, cascading
/// protein), since different covariates carry different axis subsets.
pub fn calibrate_all(
    results: &[MechanisticResult],
    scheme: &AggregationScheme,
    covariate_order: &[String],
    cfg: &CalibrationConfig,
) -> Result<Vec<CalibratedPrior>, CalibrationError> {
    cfg.validate()?;
    if let AggregationScheme::PrecisionWeighted { weights } = scheme {
        if weights.len() != 3 {
            return Err(CalibrationError::WeightMismatch {
                reason: format!(
                    "per-axis weighting needs exactly 3 weights, got {}",
                    weights.len()
                ),
            });
        }
    }
    let mut by_id: HashMap<&str, Vec<(Axis, f64)>> = HashMap::new();
    for r in results {
        by_id
            .entry(r.biomarker_id.as_str())
            .or_default()
            .push((r.axis, r.lbf));
    }
    for id in by_id.keys() {
        if !covariate_order.iter().any(|c| c == id) {
            return Err(CalibrationError::UnknownCovariate {
                id: (*id).to_string(),
            });
        }
    }
    covariate_order
        .iter()
        .map(|id| {
            let s = match by_id.get(id.as_str()) {
                None => 0.0,
                Some(entries) => {
                    let lbfs: Vec<f64> = entries.iter().map(|(_, l)| *l).collect();
                    let local = match scheme {
                        AggregationScheme::PrecisionWeighted { weights } => {
                            AggregationScheme::PrecisionWeighted {
                                weights: entries
                                    .iter()
                                    .map(|(axis, _)| weights[axis_slot(*axis)])
                                    .collect(),
                            }
                        }
                        other => other.clone(),
                    };
                    aggregate(&lbfs, &local)?
                }
            };
            let mut prior = calibrate(s, cfg)?;
            prior.covariate_id = id.clone();
            Ok(prior)
        })
        .collect()
}

pub fn priors_to_csv(priors: &[CalibratedPrior]) -> String {
    let mut out = String::from("covariate_id,s,beta_a,beta_b,prior_mean\n");
    for p in priors {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.covariate_id, p.s, p.beta_a, p.beta_b, p.prior_mean
        )
        .unwrap();
    }
    out
}

pub fn priors_from_csv(path: &Path) -> Result<Vec<CalibratedPrior>, CalibrationError> {
    let text = std::fs::read_to_string(path).map_err(|source| CalibrationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |line: usize, msg: String| CalibrationError::BadPriorsRow {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "covariate_id,s,beta_a,beta_b,prior_mean" => {}
        Some((_, header)) => {
            return Err(bad(1, format!("unexpected header `{}`", header.trim())))
        }
        None => return Err(bad(1, "empty priors file".into())),
    }
    let mut priors = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(idx + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let num = |j: usize| -> Result<f64, CalibrationError> {
            fields[j]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(idx + 1, format!("`{}` is not a number", fields[j].trim())))
        };
        let prior = CalibratedPrior {
            covariate_id: fields[0].trim().to_string(),
            s: num(1)?,
            beta_a: num(2)?,
            beta_b: num(3)?,
            prior_mean: num(4)?,
        };
        if !(prior.beta_a > 0.0 && prior.beta_b > 0.0 && prior.prior_mean.is_finite()) {
            return Err(bad(idx + 1, "shape parameters must be positive".into()));
        }
        priors.push(prior);
    }
    Ok(priors)
}
