//! Sample-aligned multi-omics data: upstream regulators (copy number,
//! methylation, ...), gene expression, protein expression, optional clinical
//! covariates, and a continuous or right-censored survival outcome, plus the
//! biomarker map tying genes/proteins to their upstream columns.

mod ingest;

pub use ingest::{load_dataset, DroppedSample, IngestConfig, IngestReport, PlatformFile};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: malformed header: {detail}")]
    BadHeader { file: String, detail: String },
    #[error("{file}: row {row}, column {col}: cannot parse {value:?} as a number")]
    NonNumericCell {
        file: String,
        row: String,
        col: String,
        value: String,
    },
    #[error("{file}: duplicate sample id {id:?}")]
    DuplicateSampleId { file: String, id: String },
    #[error("no sample id is shared by all input files")]
    EmptyIntersection,
    #[error("{file}: line {line}: {detail}")]
    MalformedMapLine {
        file: String,
        line: usize,
        detail: String,
    },
    #[error("biomarker map references unknown column or biomarker {id:?}")]
    DanglingIndex { id: String },
    #[error("duplicate biomarker id {id:?} in map")]
    DuplicateBiomarkerId { id: String },
    #[error("biomarker {id:?} has an empty upstream column list")]
    EmptyUpstreamList { id: String },
    #[error("{file}: survival time {value} for sample {id:?} is not positive")]
    NonPositiveTime { file: String, id: String, value: f64 },
    #[error("{file}: event indicator {value:?} for sample {id:?} is not 0 or 1")]
    BadEventIndicator { file: String, id: String, value: String },
    #[error("non-finite value in {block} column {col:?}")]
    NonFiniteValue { block: String, col: String },
    #[error("{detail}")]
    ShapeMismatch { detail: String },
}

/// A named block of the dataset: an `n x q` matrix with one id per column.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBlock {
    pub values: DMatrix<f64>,
    pub col_ids: Vec<String>,
}

impl MatrixBlock {
    pub fn new(values: DMatrix<f64>, col_ids: Vec<String>) -> Result<Self, DataError> {
        if values.ncols() != col_ids.len() {
            return Err(DataError::ShapeMismatch {
                detail: format!(
                    "matrix has {} columns but {} column ids",
                    values.ncols(),
                    col_ids.len()
                ),
            });
        }
        Ok(Self { values, col_ids })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            values: DMatrix::zeros(n, 0),
            col_ids: Vec::new(),
        }
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn col_index(&self, id: &str) -> Option<usize> {
        self.col_ids.iter().position(|c| c == id)
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.values.column(j).into_owned()
    }

    fn check_finite(&self, block: &str) -> Result<(), DataError> {
        for j in 0..self.ncols() {
            if self.values.column(j).iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFiniteValue {
                    block: block.to_string(),
                    col: self.col_ids[j].clone(),
                });
            }
        }
        Ok(())
    }
}

/// Regression outcome. Survival times are stored on the log scale; the
/// natural-scale times from input files are logged at ingestion.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Continuous { y: DVector<f64> },
    /// `event[i] = 1` means the event was observed (`log_time` is the exact
    /// log survival time); 0 means right-censored (`log_time` is a lower
    /// bound on the latent log time).
    Survival { log_time: DVector<f64>, event: Vec<u8> },
}

impl Outcome {
    pub fn len(&self) -> usize {
        match self {
            Outcome::Continuous { y } => y.len(),
            Outcome::Survival { log_time, .. } => log_time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The observed response used by model fitting: `y` for continuous
    /// outcomes, log time for survival.
    pub fn observed(&self) -> &DVector<f64> {
        match self {
            Outcome::Continuous { y } => y,
            Outcome::Survival { log_time, .. } => log_time,
        }
    }

    pub fn events(&self) -> Option<&[u8]> {
        match self {
            Outcome::Continuous { .. } => None,
            Outcome::Survival { event, .. } => Some(event),
        }
    }
}

/// The full sample-aligned dataset.
#[derive(Debug, Clone)]
pub struct OmicsDataset {
    pub sample_ids: Vec<String>,
    pub upstream: MatrixBlock,
    /// Platform label (e.g. "cna", "meth") for each upstream column.
    pub upstream_platforms: Vec<String>,
    pub genes: MatrixBlock,
    pub proteins: MatrixBlock,
    pub covariates: Option<MatrixBlock>,
    pub outcome: Outcome,
}

impl OmicsDataset {
    pub fn new(
        sample_ids: Vec<String>,
        upstream: MatrixBlock,
        upstream_platforms: Vec<String>,
        genes: MatrixBlock,
        proteins: MatrixBlock,
        covariates: Option<MatrixBlock>,
        outcome: Outcome,
    ) -> Result<Self, DataError> {
        let n = sample_ids.len();
        if n < 3 {
            return Err(DataError::ShapeMismatch {
                detail: format!("need at least 3 samples, got {n}"),
            });
        }
        let mut seen = HashSet::new();
        for id in &sample_ids {
            if !seen.insert(id.clone()) {
                return Err(DataError::DuplicateSampleId {
                    file: "<dataset>".into(),
                    id: id.clone(),
                });
            }
        }
        for (name, block) in [("upstream", &upstream), ("genes", &genes), ("proteins", &proteins)]
        {
            if block.values.nrows() != n {
                return Err(DataError::ShapeMismatch {
                    detail: format!("{name} block has {} rows, expected {n}", block.values.nrows()),
                });
            }
            block.check_finite(name)?;
        }
        if let Some(b) = &covariates {
            if b.values.nrows() != n {
                return Err(DataError::ShapeMismatch {
                    detail: format!("covariate block has {} rows, expected {n}", b.values.nrows()),
                });
            }
            b.check_finite("covariates")?;
        }
        if upstream_platforms.len() != upstream.ncols() {
            return Err(DataError::ShapeMismatch {
                detail: "one platform label per upstream column required".into(),
            });
        }
        if outcome.len() != n {
            return Err(DataError::ShapeMismatch {
                detail: format!("outcome has {} entries, expected {n}", outcome.len()),
            });
        }
        if outcome.observed().iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue {
                block: "outcome".into(),
                col: String::new(),
            });
        }
        if let Outcome::Survival { event, .. } = &outcome {
            if let Some(bad) = event.iter().find(|e| **e > 1) {
                return Err(DataError::BadEventIndicator {
                    file: "<dataset>".into(),
                    id: String::new(),
                    value: bad.to_string(),
                });
            }
        }
        Ok(Self {
            sample_ids,
            upstream,
            upstream_platforms,
            genes,
            proteins,
            covariates,
            outcome,
        })
    }

    pub fn n(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn q_u(&self) -> usize {
        self.upstream.ncols()
    }

    pub fn q_g(&self) -> usize {
        self.genes.ncols()
    }

    pub fn q_p(&self) -> usize {
        self.proteins.ncols()
    }

    pub fn q_b(&self) -> usize {
        self.covariates.as_ref().map_or(0, MatrixBlock::ncols)
    }

    /// Centers gene, protein, and clinical-covariate columns in place.
    /// Upstream columns are left alone (the mechanistic kernel only sees
    /// pairwise distances).
    pub fn center_expression(&mut self) {
        center_columns(&mut self.genes.values);
        center_columns(&mut self.proteins.values);
        if let Some(b) = &mut self.covariates {
            center_columns(&mut b.values);
        }
    }

    /// Selected-covariate universe for the outcome model: gene ids followed
    /// by protein ids.
    pub fn covariate_ids(&self) -> Vec<String> {
        let mut ids = self.genes.col_ids.clone();
        ids.extend(self.proteins.col_ids.iter().cloned());
        ids
    }
}

/// Subtracts each column mean in place and returns the means.
pub fn center_columns(m: &mut DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut means = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let mu = m.column(j).sum() / n as f64;
        for i in 0..n {
            m[(i, j)] -= mu;
        }
        means.push(mu);
    }
    means
}

/// A gene's mechanistic inputs: its expression column and the upstream
/// columns regulating it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GeneLink {
    pub gene_id: String,
    /// Column of the gene block holding this gene's expression.
    pub gene_col: usize,
    /// Columns of the upstream block regulating this gene.
    pub upstream_cols: Vec<usize>,
}

/// A protein's mechanistic inputs. `coding_gene_col` indexes the gene block
/// and is absent for proteins without a measured coding gene, which then
/// only get the driver axis.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ProteinLink {
    pub protein_id: String,
    pub protein_col: usize,
    pub coding_gene_col: Option<usize>,
    pub upstream_cols: Vec<usize>,
}

/// Biomarker map: which upstream columns (and coding gene, for proteins)
/// feed each modeled biomarker.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, Default)]
pub struct BiomarkerMap {
    pub genes: Vec<GeneLink>,
    pub proteins: Vec<ProteinLink>,
}

impl BiomarkerMap {
    /// Validates ids and index ranges against a dataset.
    pub fn validate(&self, ds: &OmicsDataset) -> Result<(), DataError> {
        let mut ids = HashSet::new();
        for g in &self.genes {
            if !ids.insert(format!("gene:{}", g.gene_id)) {
                return Err(DataError::DuplicateBiomarkerId { id: g.gene_id.clone() });
            }
            if g.gene_col >= ds.q_g() {
                return Err(DataError::DanglingIndex { id: g.gene_id.clone() });
            }
            if g.upstream_cols.is_empty() {
                return Err(DataError::EmptyUpstreamList { id: g.gene_id.clone() });
            }
            if g.upstream_cols.iter().any(|&c| c >= ds.q_u()) {
                return Err(DataError::DanglingIndex { id: g.gene_id.clone() });
            }
        }
        for p in &self.proteins {
            if !ids.insert(format!("protein:{}", p.protein_id)) {
                return Err(DataError::DuplicateBiomarkerId { id: p.protein_id.clone() });
            }
            if p.protein_col >= ds.q_p() {
                return Err(DataError::DanglingIndex { id: p.protein_id.clone() });
            }
            if let Some(gc) = p.coding_gene_col {
                if gc >= ds.q_g() {
                    return Err(DataError::DanglingIndex { id: p.protein_id.clone() });
                }
            }
            if p.upstream_cols.is_empty() {
                return Err(DataError::EmptyUpstreamList { id: p.protein_id.clone() });
            }
            if p.upstream_cols.iter().any(|&c| c >= ds.q_u()) {
                return Err(DataError::DanglingIndex { id: p.protein_id.clone() });
            }
        }
        Ok(())
    }

    /// Parses the line-oriented map format and resolves ids against the
    /// dataset:
    ///
    /// ```text
    /// gene <gene_id> <upstream_col_id,...>
    /// protein <protein_id> <coding_gene_id|-> <upstream_col_id,...>
    /// ```
    ///
    /// Blank lines and lines starting with `#` are skipped.
    pub fn load(path: &Path, ds: &OmicsDataset) -> Result<Self, DataError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: file.clone(),
            source,
        })?;
        let mut map = BiomarkerMap::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let malformed = |detail: &str| DataError::MalformedMapLine {
                file: file.clone(),
                line: lineno + 1,
                detail: detail.to_string(),
            };
            let parse_upstream = |spec: &str| -> Result<Vec<usize>, DataError> {
                spec.split(',')
                    .filter(|s| !s.is_empty())
                    .map(|id| {
                        ds.upstream
                            .col_index(id)
                            .ok_or_else(|| DataError::DanglingIndex { id: id.to_string() })
                    })
                    .collect()
            };
            match fields.as_slice() {
                ["gene", gene_id, upstream] => {
                    let gene_col = ds
                        .genes
                        .col_index(gene_id)
                        .ok_or_else(|| DataError::DanglingIndex { id: gene_id.to_string() })?;
                    map.genes.push(GeneLink {
                        gene_id: gene_id.to_string(),
                        gene_col,
                        upstream_cols: parse_upstream(upstream)?,
                    });
                }
                ["protein", protein_id, coding, upstream] => {
                    let protein_col = ds
                        .proteins
                        .col_index(protein_id)
                        .ok_or_else(|| DataError::DanglingIndex { id: protein_id.to_string() })?;
                    let coding_gene_col = if *coding == "-" {
                        None
                    } else {
                        Some(ds.genes.col_index(coding).ok_or_else(|| {
                            DataError::DanglingIndex { id: coding.to_string() }
                        })?)
                    };
                    map.proteins.push(ProteinLink {
                        protein_id: protein_id.to_string(),
                        protein_col,
                        coding_gene_col,
                        upstream_cols: parse_upstream(upstream)?,
                    });
                }
                ["gene", ..] => return Err(malformed("expected: gene <id> <upstream,...>")),
                ["protein", ..] => {
                    return Err(malformed("expected: protein <id> <gene|-> <upstream,...>"))
                }
                _ => return Err(malformed("unknown record type")),
            }
        }
        map.validate(ds)?;
        Ok(map)
    }

    /// Writes the same line format `load` reads.
    pub fn save(&self, path: &Path, ds: &OmicsDataset) -> Result<(), DataError> {
        let mut out = String::new();
        let upstream_ids = |cols: &[usize]| {
            cols.iter()
                .map(|&c| ds.upstream.col_ids[c].as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        for g in &self.genes {
            out.push_str(&format!("gene {} {}\n", g.gene_id, upstream_ids(&g.upstream_cols)));
        }
        for p in &self.proteins {
            let coding = match p.coding_gene_col {
                Some(gc) => ds.genes.col_ids[gc].as_str(),
                None => "-",
            };
            out.push_str(&format!(
                "protein {} {} {}\n",
                p.protein_id,
                coding,
                upstream_ids(&p.upstream_cols)
            ));
        }
        std::fs::write(path, out).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
