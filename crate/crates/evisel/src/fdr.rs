//! Turns posterior inclusion probabilities into a selected set with an
//! FDR-style cut. Two rules are offered: the cumulative-sum rule (default)
//! selects the shortest prefix whose summed exclusion probabilities reach
//! alpha, and the cumulative-mean rule keeps the longest prefix whose mean
//! exclusion probability stays below alpha.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FdrError {
    #[error("no inclusion probabilities were given")]
    EmptyInput,
    #[error("alpha must lie in (0, 1], got {alpha}")]
    AlphaOutOfRange { alpha: f64 },
    #[error("inclusion probability {value} at position {index} is outside [0, 1]")]
    InvalidPip { index: usize, value: f64 },
    #[error("{ids} ids were given for {pips} probabilities")]
    IdLengthMismatch { ids: usize, pips: usize },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FdrRule {
    /// Sort p_j = 1 - pip_j ascending and select the prefix ending at the
    /// first index whose running sum reaches alpha. When the total sum never
    /// reaches alpha the whole vector is selected.
    #[serde(rename = "paper")]
    CumulativeSum,
    /// Longest prefix whose running mean of p_j stays at or below alpha.
    /// May select nothing.
    CumulativeMean,
}

impl FdrRule {
    pub fn name(self) -> &'static str {
        match self {
            FdrRule::CumulativeSum => "paper",
            FdrRule::CumulativeMean => "cumulative-mean",
        }
    }
}

impl fmt::Display for FdrRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FdrRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(FdrRule::CumulativeSum),
            "cumulative-mean" => Ok(FdrRule::CumulativeMean),
            other => Err(format!(
                "unknown fdr rule {other:?}; expected paper or cumulative-mean"
            )),
        }
    }
}

/// One covariate in the exclusion-probability ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedCovariate {
    /// Position in the pip vector passed to [`select_fdr`].
    pub index: usize,
    pub covariate_id: String,
    pub pip: f64,
    /// Exclusion probability 1 - pip.
    pub p: f64,
    /// Running sum of p for the sum rule, running mean for the mean rule.
    pub cum_stat: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub alpha: f64,
    pub rule: FdrRule,
    /// All covariates sorted by ascending p, ties kept in input order.
    pub ranked: Vec<RankedCovariate>,
    /// Number of selected covariates; the selected set is ranked[..j_star].
    pub j_star: usize,
}

impl SelectionResult {
    pub fn selected(&self) -> &[RankedCovariate] {
        &self.ranked[..self.j_star]
    }

    /// Original pip-vector positions of the selected covariates.
    pub fn selected_indices(&self) -> Vec<usize> {
        self.selected().iter().map(|r| r.index).collect()
    }

    pub fn to_csv(&self, path: &Path) -> Result<(), FdrError> {
        let io_err = |source| FdrError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = Vec::new();
        writeln!(out, "covariate_id,pip,p,cum_stat,selected").map_err(io_err)?;
        for row in &self.ranked {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{}",
                row.covariate_id,
                row.pip,
                row.p,
                row.cum_stat,
                u8::from(row.selected)
            )
            .map_err(io_err)?;
        }
        std::fs::write(path, out).map_err(io_err)
    }

    pub fn to_json(&self, path: &Path) -> Result<(), FdrError> {
        let body = serde_json::to_string_pretty(self).expect("selection result serializes");
        std::fs::write(path, body).map_err(|source| FdrError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Ranks by exclusion probability and cuts at the rule's index. Ids default
/// to the pip-vector position; use [`select_fdr_labeled`] to attach names.
pub fn select_fdr(pips: &[f64], alpha: f64, rule: FdrRule) -> Result<SelectionResult, FdrError> {
    select_impl(pips, alpha, rule, None)
}

pub fn select_fdr_labeled(
    ids: &[String],
    pips: &[f64],
    alpha: f64,
    rule: FdrRule,
) -> Result<SelectionResult, FdrError> {
    if ids.len() != pips.len() {
        return Err(FdrError::IdLengthMismatch {
            ids: ids.len(),
            pips: pips.len(),
        });
    }
    select_impl(pips, alpha, rule, Some(ids))
}

fn select_impl(
    pips: &[f64],
    alpha: f64,
    rule: FdrRule,
    ids: Option<&[String]>,
) -> Result<SelectionResult, FdrError> {
    if pips.is_empty() {
        return Err(FdrError::EmptyInput);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(FdrError::AlphaOutOfRange { alpha });
    }
    for (index, &value) in pips.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(FdrError::InvalidPip { index, value });
        }
    }

    let mut order: Vec<usize> = (0..pips.len()).collect();
    // p and pip order identically, so sorting by descending pip with the
    // index tie-break gives the ascending-p ranking directly.
    order.sort_by(|&a, &b| pips[b].total_cmp(&pips[a]).then(a.cmp(&b)));

    let mut ranked: Vec<RankedCovariate> = Vec::with_capacity(order.len());
    let mut running = 0.0;
    for (rank, &index) in order.iter().enumerate() {
        let p = 1.0 - pips[index];
        running += p;
        let cum_stat = match rule {
            FdrRule::CumulativeSum => running,
            FdrRule::CumulativeMean => running / (rank + 1) as f64,
        };
        ranked.push(RankedCovariate {
            index,
            covariate_id: match ids {
                Some(ids) => ids[index].clone(),
                None => index.to_string(),
            },
            pip: pips[index],
            p,
            cum_stat,
            selected: false,
        });
    }

    let j_star = match rule {
        // First crossing is included; no crossing means alpha is effectively
        // no constraint, so everything is kept.
        FdrRule::CumulativeSum => ranked
            .iter()
            .position(|r| r.cum_stat >= alpha)
            .map_or(ranked.len(), |j| j + 1),
        FdrRule::CumulativeMean => ranked
            .iter()
            .rposition(|r| r.cum_stat <= alpha)
            .map_or(0, |j| j + 1),
    };
    for row in &mut ranked[..j_star] {
        row.selected = true;
    }

    Ok(SelectionResult {
        alpha,
        rule,
        ranked,
        j_star,
    })
}
