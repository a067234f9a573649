//! File ingestion: delimited matrices with a sample-id column and feature-id
//! header, the two-shape outcome file, and sample alignment across files.

use super::{DataError, MatrixBlock, OmicsDataset, Outcome};
use nalgebra::{DMatrix, DVector};
use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

/// One upstream matrix file and the platform tag applied to its columns.
#[derive(Debug, Clone)]
pub struct PlatformFile {
    pub platform: String,
    pub path: PathBuf,
}

/// Where to find each block and how to prepare it.
#[derive(Debug, Clone)]
pub struct IngestConfig {
    /// Upstream files in column order; may be empty for runs that only fit
    /// the outcome model.
    pub upstream: Vec<PlatformFile>,
    pub genes: PathBuf,
    pub proteins: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub outcome: PathBuf,
    /// Center gene/protein/covariate columns after alignment. Mechanistic
    /// fitting requires it; the intercept of the outcome model does not.
    pub center: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedSample {
    pub file: String,
    pub sample_id: String,
}

/// What alignment did to the inputs.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub n_common: usize,
    /// Samples present in some file but not in the common intersection.
    pub dropped: Vec<DroppedSample>,
}

struct RawMatrix {
    file: String,
    sample_ids: Vec<String>,
    col_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Tab wins if the header contains one, otherwise comma.
fn sniff_delimiter(text: &str) -> u8 {
    match text.lines().next() {
        Some(h) if h.contains('\t') => b'\t',
        _ => b',',
    }
}

fn parse_matrix(path: &Path) -> Result<RawMatrix, DataError> {
    let file = path.display().to_string();
    let text = read_to_string(path)?;
    let delim = sniff_delimiter(&text);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| DataError::BadHeader {
            file: file.clone(),
            detail: "empty file".into(),
        })?
        .map_err(|e| DataError::BadHeader {
            file: file.clone(),
            detail: e.to_string(),
        })?;
    if header.len() < 2 {
        return Err(DataError::BadHeader {
            file,
            detail: "need a sample-id column plus at least one feature column".into(),
        });
    }
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut sample_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| DataError::BadHeader {
            file: file.clone(),
            detail: e.to_string(),
        })?;
        if rec.len() != col_ids.len() + 1 {
            return Err(DataError::ShapeMismatch {
                detail: format!(
                    "{file}: row {:?} has {} fields, expected {}",
                    rec.get(0).unwrap_or(""),
                    rec.len(),
                    col_ids.len() + 1
                ),
            });
        }
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateSampleId { file, id });
        }
        let mut row = Vec::with_capacity(col_ids.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumericCell {
                file: file.clone(),
                row: id.clone(),
                col: col_ids[j].clone(),
                value: cell.to_string(),
            })?;
            row.push(v);
        }
        sample_ids.push(id);
        rows.push(row);
    }
    Ok(RawMatrix {
        file,
        sample_ids,
        col_ids,
        rows,
    })
}

enum RawOutcome {
    Continuous(HashMap<String, f64>),
    Survival(HashMap<String, (f64, u8)>),
}

struct OutcomeFile {
    file: String,
    sample_ids: Vec<String>,
    raw: RawOutcome,
}

fn parse_outcome(path: &Path) -> Result<OutcomeFile, DataError> {
    let file = path.display().to_string();
    let text = read_to_string(path)?;
    let delim = sniff_delimiter(&text);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| DataError::BadHeader {
            file: file.clone(),
            detail: "empty file".into(),
        })?
        .map_err(|e| DataError::BadHeader {
            file: file.clone(),
            detail: e.to_string(),
        })?;
    let cols: Vec<String> = header.iter().map(|c| c.to_ascii_lowercase()).collect();
    let survival = match cols.len() {
        2 if cols[1] == "value" => false,
        3 if cols[1] == "time" && cols[2] == "event" => true,
        _ => {
            return Err(DataError::BadHeader {
                file,
                detail: format!(
                    "expected header sample_id,value or sample_id,time,event; got {:?}",
                    header.iter().collect::<Vec<_>>()
                ),
            })
        }
    };
    let mut sample_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut cont = HashMap::new();
    let mut surv = HashMap::new();
    for rec in records {
        let rec = rec.map_err(|e| DataError::BadHeader {
            file: file.clone(),
            detail: e.to_string(),
        })?;
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateSampleId { file, id });
        }
        let num = |j: usize, col: &str| -> Result<f64, DataError> {
            rec.get(j)
                .and_then(|c| c.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::NonNumericCell {
                    file: file.clone(),
                    row: id.clone(),
                    col: col.to_string(),
                    value: rec.get(j).unwrap_or("").to_string(),
                })
        };
        if survival {
            let time = num(1, "time")?;
            if time <= 0.0 {
                return Err(DataError::NonPositiveTime { file, id, value: time });
            }
            let ev = rec.get(2).unwrap_or("");
            let event = match ev {
                "0" => 0u8,
                "1" => 1u8,
                _ => {
                    return Err(DataError::BadEventIndicator {
                        file,
                        id,
                        value: ev.to_string(),
                    })
                }
            };
            // natural-scale times on disk, log scale in memory
            surv.insert(id.clone(), (time.ln(), event));
        } else {
            cont.insert(id.clone(), num(1, "value")?);
        }
        sample_ids.push(id);
    }
    Ok(OutcomeFile {
        file,
        sample_ids,
        raw: if survival {
            RawOutcome::Survival(surv)
        } else {
            RawOutcome::Continuous(cont)
        },
    })
}

/// Loads every block, intersects sample ids across all files, re-orders rows
/// to the common set (ordered by first appearance in the first matrix file),
/// and reports dropped samples.
pub fn load_dataset(cfg: &IngestConfig) -> Result<(OmicsDataset, IngestReport), DataError> {
    let mut upstream_raw = Vec::new();
    for pf in &cfg.upstream {
        upstream_raw.push((pf.platform.clone(), parse_matrix(&pf.path)?));
    }
    let genes_raw = parse_matrix(&cfg.genes)?;
    let proteins_raw = cfg.proteins.as_deref().map(parse_matrix).transpose()?;
    let covariates_raw = cfg.covariates.as_deref().map(parse_matrix).transpose()?;
    let outcome_raw = parse_outcome(&cfg.outcome)?;

    // Intersection in order of appearance in the first matrix file.
    let mut id_lists: Vec<(&str, &[String])> = Vec::new();
    for (_, m) in &upstream_raw {
        id_lists.push((&m.file, &m.sample_ids));
    }
    id_lists.push((&genes_raw.file, &genes_raw.sample_ids));
    if let Some(m) = &proteins_raw {
        id_lists.push((&m.file, &m.sample_ids));
    }
    if let Some(m) = &covariates_raw {
        id_lists.push((&m.file, &m.sample_ids));
    }
    id_lists.push((&outcome_raw.file, &outcome_raw.sample_ids));

    let sets: Vec<HashSet<&String>> = id_lists
        .iter()
        .map(|(_, ids)| ids.iter().collect())
        .collect();
    let common: Vec<String> = id_lists[0]
        .1
        .iter()
        .filter(|id| sets.iter().all(|s| s.contains(id)))
        .cloned()
        .collect();
    if common.is_empty() {
        return Err(DataError::EmptyIntersection);
    }
    let common_set: HashSet<&String> = common.iter().collect();
    let mut report = IngestReport {
        n_common: common.len(),
        dropped: Vec::new(),
    };
    for (file, ids) in &id_lists {
        for id in ids.iter() {
            if !common_set.contains(id) {
                report.dropped.push(DroppedSample {
                    file: file.to_string(),
                    sample_id: id.clone(),
                });
            }
        }
    }

    let align = |m: &RawMatrix| -> MatrixBlock {
        let idx: HashMap<&String, usize> =
            m.sample_ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let values = DMatrix::from_fn(common.len(), m.col_ids.len(), |i, j| {
            m.rows[idx[&common[i]]][j]
        });
        MatrixBlock {
            values,
            col_ids: m.col_ids.clone(),
        }
    };

    let n = common.len();
    let mut upstream_cols = Vec::new();
    let mut upstream_ids = Vec::new();
    let mut upstream_platforms = Vec::new();
    for (platform, m) in &upstream_raw {
        let block = align(m);
        for j in 0..block.ncols() {
            upstream_cols.push(block.values.column(j).into_owned());
            upstream_ids.push(block.col_ids[j].clone());
            upstream_platforms.push(platform.clone());
        }
    }
    let upstream = if upstream_cols.is_empty() {
        MatrixBlock::empty(n)
    } else {
        MatrixBlock {
            values: DMatrix::from_columns(&upstream_cols),
            col_ids: upstream_ids,
        }
    };

    let mut genes = align(&genes_raw);
    let mut proteins = proteins_raw.as_ref().map(&align).unwrap_or_else(|| MatrixBlock::empty(n));
    let mut covariates = covariates_raw.as_ref().map(&align);
    if cfg.center {
        super::center_columns(&mut genes.values);
        super::center_columns(&mut proteins.values);
        if let Some(b) = &mut covariates {
            super::center_columns(&mut b.values);
        }
    }

    let outcome = match &outcome_raw.raw {
        RawOutcome::Continuous(map) => Outcome::Continuous {
            y: DVector::from_iterator(n, common.iter().map(|id| map[id])),
        },
        RawOutcome::Survival(map) => Outcome::Survival {
            log_time: DVector::from_iterator(n, common.iter().map(|id| map[id].0)),
            event: common.iter().map(|id| map[id].1).collect(),
        },
    };

    let ds = OmicsDataset::new(
        common,
        upstream,
        upstream_platforms,
        genes,
        proteins,
        covariates,
        outcome,
    )?;
    Ok((ds, report))
}
