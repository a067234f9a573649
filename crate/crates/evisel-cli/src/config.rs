//! The declarative run configuration. One TOML file names the input files
//! and fixes every tunable; command-line flags override the handful of
//! knobs that vary between runs (seed, algorithm, alpha, output directory).
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! genes = "gexp.csv"
//! proteins = "prot.csv"
//! outcome = "outcome.csv"
//! map = "biomarkers.map"
//!
//! [[data.upstream]]
//! platform = "cna"
//! path = "cna.csv"
//!
//! [calibration.scheme]
//! kind = "average"
//!
//! [cbvs]
//! algorithm = "gibbs"
//! iterations = 4000
//! burn_in = 1000
//!
//! [fdr]
//! alpha = 0.1
//! rule = "paper"
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file, so a config can travel with its data.

use evisel::calibration::{AggregationScheme, CalibrationConfig};
use evisel::cbvs::CbvsConfig;
use evisel::data::{IngestConfig, PlatformFile};
use evisel::fdr::FdrRule;
use evisel::mech::GpHyperParams;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::errors::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub data: Option<DataSection>,
    #[serde(default)]
    pub mech: GpHyperParams,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub cbvs: CbvsConfig,
    #[serde(default)]
    pub fdr: FdrSection,
    /// Hash of the config file bytes, recorded in run manifests. Not a TOML
    /// key; filled in by [`FileConfig::load`].
    #[serde(skip)]
    pub sha256: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub upstream: Vec<UpstreamEntry>,
    pub genes: PathBuf,
    pub proteins: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub outcome: PathBuf,
    pub map: PathBuf,
    #[serde(default = "default_center")]
    pub center: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpstreamEntry {
    pub platform: String,
    pub path: PathBuf,
}

fn default_center() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub scheme: AggregationScheme,
    pub constants: CalibrationConfig,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            scheme: AggregationScheme::Average,
            constants: CalibrationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdrSection {
    pub alpha: f64,
    pub rule: FdrRule,
}

impl Default for FdrSection {
    fn default() -> Self {
        FdrSection {
            alpha: 0.10,
            rule: FdrRule::CumulativeSum,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&p);
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::io(path, source))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        cfg.sha256 = sha256_hex(text.as_bytes());
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(dir) = &mut cfg.out_dir {
            resolve(base, dir);
        }
        if let Some(data) = &mut cfg.data {
            for entry in &mut data.upstream {
                resolve(base, &mut entry.path);
            }
            resolve(base, &mut data.genes);
            if let Some(p) = &mut data.proteins {
                resolve(base, p);
            }
            if let Some(p) = &mut data.covariates {
                resolve(base, p);
            }
            resolve(base, &mut data.outcome);
            resolve(base, &mut data.map);
        }
        Ok(cfg)
    }

    /// The `[data]` section, or a usage error for commands that need one.
    pub fn data(&self) -> Result<&DataSection, CliError> {
        self.data.as_ref().ok_or_else(|| {
            CliError::Usage("this command needs a [data] section in the config file".into())
        })
    }
}

impl DataSection {
    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            upstream: self
                .upstream
                .iter()
                .map(|u| PlatformFile {
                    platform: u.platform.clone(),
                    path: u.path.clone(),
                })
                .collect(),
            genes: self.genes.clone(),
            proteins: self.proteins.clone(),
            covariates: self.covariates.clone(),
            outcome: self.outcome.clone(),
            center: self.center,
        }
    }
}
