//! Mechanistic evidence layer. Each biomarker is regressed on its upstream
//! regulators with a Gaussian-process model and scored by a base-10 log
//! Bayes factor against an intercept-only null:
//!
//! ```text
//! driver gene:        G_j ~ GP(C_j, M_j)
//! driver protein:     P_j ~ GP(C_j, M_j)
//! cascading protein:  P_j ~ GP(G_j, C_j, M_j)
//! ```
//!
//! with squared-exponential kernel `g tau^2 exp(-||u - v||^2 / lambda^2)`,
//! `tau^2 ~ IG(nu0/2, nu0 tau0^2/2)`, `lambda ~ Exp(lambda0)`, and the null
//! `y = mu + e`, `mu ~ N(0, tau^2 g/(1+g))`.

mod marginal;
mod quad;

pub use marginal::{
    build_kernel, log_bayes_factor, log_bayes_factor_linear, log_marginal_gp, log_marginal_null,
    LbfConstants, LbfOutcome,
};
pub use quad::{log_exp_prior_integral, QuadDiagnostics, FALLBACK_RANGE, GAUSS_RULE_TOL};

use crate::data::{BiomarkerMap, OmicsDataset};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MechError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("need at least 3 samples, got {n}")]
    TooFewSamples { n: usize },
    #[error("design matrix has no columns")]
    EmptyDesign,
    #[error("non-finite pairwise distance in mechanistic design")]
    NonFiniteDistance,
    #[error("kernel factorization failed even with jitter up to {jitter_max:.1e}")]
    FactorizationFailure { jitter_max: f64 },
    #[error("quadratic form in marginal likelihood is not positive")]
    NonPositiveQuadForm,
    #[error("quadrature failed to converge (relative disagreement {rel_error:.2e})")]
    QuadratureNotConverged { rel_error: f64 },
    #[error("design matrix is singular after centering")]
    SingularDesign,
    #[error("non-finite value where a finite one is required")]
    NonFinite,
    #[error("column {id:?} of block {block} is not centered")]
    NotCentered { block: String, id: String },
    #[error("bad mechanistic result row at line {line}: {msg}")]
    BadSuiteRow { line: usize, msg: String },
}

/// Hyperparameters of the GP marginal and its null.
///
/// `g` scales both the kernel and the null's intercept prior; `None` means
/// "use the sample size", resolved when constants are built.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GpHyperParams {
    pub nu0: f64,
    pub tau0_sq: f64,
    pub lambda0: f64,
    pub g: Option<f64>,
}

impl Default for GpHyperParams {
    fn default() -> Self {
        Self {
            nu0: 3.0,
            tau0_sq: 1.0,
            lambda0: 1.0,
            g: None,
        }
    }
}

impl GpHyperParams {
    pub fn validate(&self) -> Result<(), MechError> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(MechError::InvalidHyper(format!("{name} must be positive, got {v}")))
            }
        };
        check("nu0", self.nu0)?;
        check("tau0_sq", self.tau0_sq)?;
        check("lambda0", self.lambda0)?;
        if let Some(g) = self.g {
            check("g", g)?;
        }
        Ok(())
    }

    /// The effective `g` at sample size `n`.
    pub fn g_at(&self, n: usize) -> f64 {
        self.g.unwrap_or(n as f64)
    }
}

/// Evidence bins on the base-10 log Bayes factor; bins are closed on the
/// left: none < 0.5 <= substantial < 1 <= strong < 2 <= decisive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceClass {
    None,
    Substantial,
    Strong,
    Decisive,
}

impl fmt::Display for EvidenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EvidenceClass::None => "none",
            EvidenceClass::Substantial => "substantial",
            EvidenceClass::Strong => "strong",
            EvidenceClass::Decisive => "decisive",
        };
        f.write_str(s)
    }
}

pub fn classify_evidence(lbf: f64) -> Result<EvidenceClass, MechError> {
    if !lbf.is_finite() {
        return Err(MechError::NonFinite);
    }
    Ok(if lbf < 0.5 {
        EvidenceClass::None
    } else if lbf < 1.0 {
        EvidenceClass::Substantial
    } else if lbf < 2.0 {
        EvidenceClass::Strong
    } else {
        EvidenceClass::Decisive
    })
}

/// Which mechanistic regression produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    DriverGene,
    DriverProtein,
    CascadingProtein,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::DriverGene => "driver_gene",
            Axis::DriverProtein => "driver_protein",
            Axis::CascadingProtein => "cascading_protein",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "driver_gene" => Ok(Axis::DriverGene),
            "driver_protein" => Ok(Axis::DriverProtein),
            "cascading_protein" => Ok(Axis::CascadingProtein),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

/// One scored biomarker/axis pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanisticResult {
    pub biomarker_id: String,
    pub axis: Axis,
    /// Base-10 log Bayes factor, GP model over intercept null.
    pub lbf: f64,
    pub evidence: EvidenceClass,
    pub diagnostics: QuadDiagnostics,
}

/// A biomarker/axis pair whose evidence computation failed; the suite keeps
/// going and records why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechFailure {
    pub biomarker_id: String,
    pub axis: Axis,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MechSuiteResult {
    pub results: Vec<MechanisticResult>,
    pub failures: Vec<MechFailure>,
}

impl MechSuiteResult {
    /// `biomarker_id,axis,lbf,evidence_class,quad_error` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("biomarker_id,axis,lbf,evidence_class,quad_error\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.biomarker_id, r.axis, r.lbf, r.evidence, r.diagnostics.rel_error
            ));
        }
        out
    }

    /// Parses rows written by [`to_csv`]. The CSV only carries the
    /// quadrature error, so reloaded diagnostics have zero nodes and no
    /// fallback flag; the evidence class is recomputed from the lbf.
    pub fn from_csv(text: &str) -> Result<MechSuiteResult, MechError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header))
                if header.trim() == "biomarker_id,axis,lbf,evidence_class,quad_error" => {}
            _ => {
                return Err(MechError::BadSuiteRow {
                    line: 1,
                    msg: "missing or wrong header".into(),
                })
            }
        }
        let mut results = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| MechError::BadSuiteRow {
                line: idx + 1,
                msg: msg.into(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let axis: Axis = fields[1].parse().map_err(|_| bad("unknown axis"))?;
            let lbf: f64 = fields[2].parse().map_err(|_| bad("unparsable lbf"))?;
            let rel_error: f64 = fields[4].parse().map_err(|_| bad("unparsable quad_error"))?;
            results.push(MechanisticResult {
                biomarker_id: fields[0].to_string(),
                axis,
                lbf,
                evidence: classify_evidence(lbf)?,
                diagnostics: QuadDiagnostics {
                    nodes_used: 0,
                    rel_error,
                    fell_back: false,
                },
            });
        }
        Ok(MechSuiteResult {
            results,
            failures: Vec::new(),
        })
    }
}

fn check_centered(ds: &OmicsDataset) -> Result<(), MechError> {
    for (name, block) in [("genes", &ds.genes), ("proteins", &ds.proteins)] {
        for j in 0..block.ncols() {
            let col = block.values.column(j);
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if mean.abs() > 1e-8 * sd.max(1e-8) {
                return Err(MechError::NotCentered {
                    block: name.to_string(),
                    id: block.col_ids[j].clone(),
                });
            }
        }
    }
    Ok(())
}

struct MechTask {
    biomarker_id: String,
    axis: Axis,
    response: DVector<f64>,
    design: DMatrix<f64>,
}

/// Runs every mechanistic regression the biomarker map defines. Tasks run in
/// parallel; the output order is fixed (genes in map order, then per protein
/// the driver axis followed by the cascading axis when a coding gene is
/// mapped). Per-task failures land in `failures` without aborting the rest.
pub fn run_mechanistic_suite(
    ds: &OmicsDataset,
    map: &BiomarkerMap,
    hyper: &GpHyperParams,
) -> Result<MechSuiteResult, MechError> {
    hyper.validate()?;
    if ds.n() < 3 {
        return Err(MechError::TooFewSamples { n: ds.n() });
    }
    check_centered(ds)?;
    let consts = LbfConstants::new(ds.n(), hyper)?;

    let select = |cols: &[usize]| -> DMatrix<f64> {
        let picked: Vec<_> = cols.iter().map(|&c| ds.upstream.values.column(c)).collect();
        DMatrix::from_columns(&picked)
    };
    let mut tasks = Vec::new();
    for g in &map.genes {
        tasks.push(MechTask {
            biomarker_id: g.gene_id.clone(),
            axis: Axis::DriverGene,
            response: ds.genes.column(g.gene_col),
            design: select(&g.upstream_cols),
        });
    }
    for p in &map.proteins {
        tasks.push(MechTask {
            biomarker_id: p.protein_id.clone(),
            axis: Axis::DriverProtein,
            response: ds.proteins.column(p.protein_col),
            design: select(&p.upstream_cols),
        });
        if let Some(gc) = p.coding_gene_col {
            let mut cols = vec![ds.genes.values.column(gc)];
            cols.extend(p.upstream_cols.iter().map(|&c| ds.upstream.values.column(c)));
            tasks.push(MechTask {
                biomarker_id: p.protein_id.clone(),
                axis: Axis::CascadingProtein,
                response: ds.proteins.column(p.protein_col),
                design: DMatrix::from_columns(&cols),
            });
        }
    }

    let outcomes: Vec<Result<MechanisticResult, MechFailure>> = tasks
        .par_iter()
        .map(|t| {
            log_bayes_factor(&t.response, &t.design, &consts)
                .and_then(|out| {
                    Ok(MechanisticResult {
                        biomarker_id: t.biomarker_id.clone(),
                        axis: t.axis,
                        lbf: out.lbf,
                        evidence: classify_evidence(out.lbf)?,
                        diagnostics: out.diagnostics,
                    })
                })
                .map_err(|e| MechFailure {
                    biomarker_id: t.biomarker_id.clone(),
                    axis: t.axis,
                    error: e.to_string(),
                })
        })
        .collect();

    let mut suite = MechSuiteResult::default();
    for o in outcomes {
        match o {
            Ok(r) => suite.results.push(r),
            Err(f) => suite.failures.push(f),
        }
    }
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{GeneLink, MatrixBlock, Outcome, ProteinLink};
    use nalgebra::DVector;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    #[test]
    fn classify_bins_are_left_closed() {
        assert_eq!(classify_evidence(0.49).unwrap(), EvidenceClass::None);
        assert_eq!(classify_evidence(0.5).unwrap(), EvidenceClass::Substantial);
        assert_eq!(classify_evidence(1.0).unwrap(), EvidenceClass::Strong);
        assert_eq!(classify_evidence(2.0).unwrap(), EvidenceClass::Decisive);
        assert_eq!(classify_evidence(-3.0).unwrap(), EvidenceClass::None);
        assert!(classify_evidence(f64::NAN).is_err());
    }

    fn demo_dataset(n: usize, seed: u64) -> (OmicsDataset, BiomarkerMap) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut norm = || -> f64 { rng.sample(rand_distr::StandardNormal) };
        let u = DMatrix::from_fn(n, 2, |_, _| norm());
        // gene 0 strongly driven by upstream 0, gene 1 pure noise
        let mut g = DMatrix::from_fn(n, 2, |_, _| 0.3 * norm());
        for i in 0..n {
            g[(i, 0)] += 1.5 * u[(i, 0)];
        }
        // protein driven by its coding gene
        let mut p = DMatrix::from_fn(n, 1, |_, _| 0.3 * norm());
        for i in 0..n {
            p[(i, 0)] += 1.2 * g[(i, 0)];
        }
        crate::data::center_columns(&mut g);
        crate::data::center_columns(&mut p);
        let y = DVector::from_fn(n, |i, _| g[(i, 0)] + 0.5 * norm());
        let ds = OmicsDataset::new(
            (0..n).map(|i| format!("S{i}")).collect(),
            MatrixBlock::new(u, vec!["cna_GA".into(), "cna_GB".into()]).unwrap(),
            vec!["cna".into(); 2],
            MatrixBlock::new(g, vec!["GA".into(), "GB".into()]).unwrap(),
            MatrixBlock::new(p, vec!["PA".into()]).unwrap(),
            None,
            Outcome::Continuous { y },
        )
        .unwrap();
        let map = BiomarkerMap {
            genes: vec![
                GeneLink { gene_id: "GA".into(), gene_col: 0, upstream_cols: vec![0] },
                GeneLink { gene_id: "GB".into(), gene_col: 1, upstream_cols: vec![1] },
            ],
            proteins: vec![ProteinLink {
                protein_id: "PA".into(),
                protein_col: 0,
                coding_gene_col: Some(0),
                upstream_cols: vec![0],
            }],
        };
        (ds, map)
    }

    #[test]
    fn suite_produces_one_row_per_axis() {
        let (ds, map) = demo_dataset(60, 7);
        let suite = run_mechanistic_suite(&ds, &map, &GpHyperParams::default()).unwrap();
        assert!(suite.failures.is_empty());
        let axes: Vec<(String, Axis)> = suite
            .results
            .iter()
            .map(|r| (r.biomarker_id.clone(), r.axis))
            .collect();
        assert_eq!(
            axes,
            vec![
                ("GA".into(), Axis::DriverGene),
                ("GB".into(), Axis::DriverGene),
                ("PA".into(), Axis::DriverProtein),
                ("PA".into(), Axis::CascadingProtein),
            ]
        );
        // the driven gene should dominate the noise gene
        assert!(suite.results[0].lbf > suite.results[1].lbf);
        // strong linear signal: decisive evidence expected at n=60
        assert_eq!(suite.results[0].evidence, EvidenceClass::Decisive);
    }

    #[test]
    fn suite_requires_centered_expression() {
        let (mut ds, map) = demo_dataset(40, 8);
        for i in 0..ds.n() {
            ds.genes.values[(i, 0)] += 5.0;
        }
        let res = run_mechanistic_suite(&ds, &map, &GpHyperParams::default());
        assert!(matches!(res, Err(MechError::NotCentered { .. })));
    }

    #[test]
    fn csv_has_expected_header() {
        let (ds, map) = demo_dataset(40, 9);
        let suite = run_mechanistic_suite(&ds, &map, &GpHyperParams::default()).unwrap();
        let csv = suite.to_csv();
        assert!(csv.starts_with("biomarker_id,axis,lbf,evidence_class,quad_error\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn csv_round_trips() {
        let (ds, map) = demo_dataset(40, 11);
        let suite = run_mechanistic_suite(&ds, &map, &GpHyperParams::default()).unwrap();
        let back = MechSuiteResult::from_csv(&suite.to_csv()).unwrap();
        assert_eq!(back.results.len(), suite.results.len());
        for (a, b) in suite.results.iter().zip(&back.results) {
            assert_eq!(a.biomarker_id, b.biomarker_id);
            assert_eq!(a.axis, b.axis);
            assert_eq!(a.evidence, b.evidence);
            assert!((a.lbf - b.lbf).abs() < 1e-12);
            assert!((a.diagnostics.rel_error - b.diagnostics.rel_error).abs() < 1e-15);
        }

        assert!(MechSuiteResult::from_csv("nope\n").is_err());
        assert!(MechSuiteResult::from_csv(
            "biomarker_id,axis,lbf,evidence_class,quad_error\ng,sideways,1.0,Strong,0\n"
        )
        .is_err());
    }
}
