//! Selection-performance metrics. AUC and its partial variant are
//! threshold-free over the PIP ranking; the confusion-matrix metrics are
//! evaluated at the handed-in selected set.

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimMetrics {
    pub auc: f64,
    /// Partial AUC over false-positive rates up to 0.2, rescaled to [0, 1].
    pub auc20: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub mcc: f64,
}

fn check_lengths(truth: &[bool], pips: &[f64], selected: &[bool]) -> Result<(), SimError> {
    if truth.len() != pips.len() || truth.len() != selected.len() {
        return Err(SimError::LengthMismatch {
            detail: format!(
                "truth {}, pips {}, selected {}",
                truth.len(),
                pips.len(),
                selected.len()
            ),
        });
    }
    if truth.is_empty() {
        return Err(SimError::DegenerateTruth);
    }
    if pips.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { what: "pips" });
    }
    Ok(())
}

pub fn compute_metrics(
    truth: &[bool],
    pips: &[f64],
    selected: &[bool],
) -> Result<SimMetrics, SimError> {
    check_lengths(truth, pips, selected)?;
    let npos = truth.iter().filter(|t| **t).count();
    let nneg = truth.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(SimError::DegenerateTruth);
    }

    let auc = auc_midrank(truth, pips);
    let auc20 = partial_auc(truth, pips, 0.2) / 0.2;

    let mut tp = 0.0_f64;
    let mut fp = 0.0_f64;
    let mut tn = 0.0_f64;
    let mut fnn = 0.0_f64;
    for (t, s) in truth.iter().zip(selected) {
        match (t, s) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (false, false) => tn += 1.0,
            (true, false) => fnn += 1.0,
        }
    }
    let tpr = tp / (tp + fnn);
    let fpr = fp / (fp + tn);
    let denom = ((tp + fp) * (tp + fnn) * (tn + fp) * (tn + fnn)).sqrt();
    let mcc = if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fnn) / denom
    };

    Ok(SimMetrics {
        auc,
        auc20,
        tpr,
        fpr,
        mcc,
    })
}

/// Rank-statistic AUC with midranks on ties; equals the pairwise comparison
/// count (ties at half weight) over all positive/negative pairs.
fn auc_midrank(truth: &[bool], scores: &[f64]) -> f64 {
    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank = vec![0.0_f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // ranks are 1-based; tied entries share the average rank
        let mid = 0.5 * ((i + 1) + j) as f64;
        for &k in &idx[i..j] {
            rank[k] = mid;
        }
        i = j;
    }
    let npos = truth.iter().filter(|t| **t).count() as f64;
    let nneg = truth.len() as f64 - npos;
    let rank_sum: f64 = truth
        .iter()
        .zip(&rank)
        .filter_map(|(t, r)| t.then_some(*r))
        .sum();
    (rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg)
}

/// ROC polyline from (0,0) to (1,1); tied scores collapse into one diagonal
/// segment.
fn roc_points(truth: &[bool], scores: &[f64]) -> Vec<(f64, f64)> {
    let n = scores.len();
    let npos = truth.iter().filter(|t| **t).count() as f64;
    let nneg = n as f64 - npos;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0_f64, 0.0_f64);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..j] {
            if truth[k] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        pts.push((fp / nneg, tp / npos));
        i = j;
    }
    pts
}

/// Area under the ROC polyline for false-positive rates in [0, cap].
fn partial_auc(truth: &[bool], scores: &[f64], cap: f64) -> f64 {
    let pts = roc_points(truth, scores);
    let mut area = 0.0;
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x0 >= cap {
            break;
        }
        let xe = x1.min(cap);
        let ye = if x1 > x0 {
            y0 + (y1 - y0) * (xe - x0) / (x1 - x0)
        } else {
            y1
        };
        area += (xe - x0) * 0.5 * (y0 + ye);
        if x1 >= cap {
            break;
        }
    }
    area
}
