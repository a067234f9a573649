//! Stage execution. Each subcommand body lives here as a function taking
//! explicit input paths, and `pipeline` chains the same four functions with
//! each stage reading the previous stage's file from the output directory.
//! That makes "pipeline" and "run the commands by hand" identical at the
//! file level by construction.

use std::path::Path;
use std::time::Instant;

use evisel::calibration::{calibrate_all, priors_from_csv, priors_to_csv};
use evisel::cbvs::{self, CbvsConfig};
use evisel::data::{load_dataset, BiomarkerMap, OmicsDataset};
use evisel::fdr::{select_fdr_labeled, FdrRule};
use evisel::mech::{run_mechanistic_suite, MechSuiteResult};
use evisel::sim::{run_benchmark, BenchScenario};
use serde::Serialize;

use crate::config::{sha256_hex, FileConfig};
use crate::errors::CliError;

pub const MECHANISTIC_CSV: &str = "mechanistic.csv";
pub const MECHANISTIC_JSON: &str = "mechanistic.json";
pub const PRIORS_CSV: &str = "priors.csv";
pub const FIT_CSV: &str = "fit.csv";
pub const FIT_JSON: &str = "fit.json";
pub const SELECTION_CSV: &str = "selection.csv";
pub const SELECTION_JSON: &str = "selection.json";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Accounting for one executed stage.
#[derive(Debug, Serialize)]
pub struct StageRecord {
    pub name: &'static str,
    pub wall_ms: u128,
    pub outputs: Vec<String>,
}

/// Written next to the primary outputs, never byte-compared across runs:
/// wall times vary, everything else is pinned by (config, seed).
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: &'static str,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn new(config_sha256: String, seed: Option<u64>) -> Manifest {
        Manifest {
            config_sha256,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            stages: Vec::new(),
        }
    }

    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&out.join(MANIFEST_JSON), &body)
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|source| CliError::io(path, source))
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::io(out, source))
}

fn load_configured_dataset(cfg: &FileConfig) -> Result<(OmicsDataset, BiomarkerMap), CliError> {
    let data = cfg.data()?;
    let (ds, report) = load_dataset(&data.ingest_config())?;
    if !report.dropped.is_empty() {
        eprintln!(
            "note: {} sample(s) dropped while aligning files (kept {})",
            report.dropped.len(),
            report.n_common
        );
    }
    let map = BiomarkerMap::load(&data.map, &ds)?;
    Ok((ds, map))
}

/// Scores every biomarker axis and writes the results as CSV plus a JSON
/// document that also carries the per-biomarker failure ledger. Individual
/// failures do not fail the command; a run where nothing succeeded does.
pub fn stage_mechanistic(cfg: &FileConfig, out: &Path) -> Result<Vec<String>, CliError> {
    ensure_out_dir(out)?;
    let (ds, map) = load_configured_dataset(cfg)?;
    let suite = run_mechanistic_suite(&ds, &map, &cfg.mech)?;
    if !suite.failures.is_empty() {
        for f in &suite.failures {
            eprintln!("warning: {} ({}): {}", f.biomarker_id, f.axis, f.error);
        }
        if suite.results.is_empty() {
            return Err(CliError::Numeric(format!(
                "all {} mechanistic fits failed; first failure: {} ({}): {}",
                suite.failures.len(),
                suite.failures[0].biomarker_id,
                suite.failures[0].axis,
                suite.failures[0].error
            )));
        }
    }
    write_file(&out.join(MECHANISTIC_CSV), &suite.to_csv())?;
    let json = serde_json::to_string_pretty(&suite).expect("suite serializes");
    write_file(&out.join(MECHANISTIC_JSON), &json)?;
    println!(
        "mechanistic: {} result(s), {} failure(s) -> {}",
        suite.results.len(),
        suite.failures.len(),
        out.join(MECHANISTIC_CSV).display()
    );
    Ok(vec![MECHANISTIC_CSV.into(), MECHANISTIC_JSON.into()])
}

/// Aggregates per-axis evidence and maps it onto Beta hyperpriors, one row
/// per selectable covariate (genes then proteins, dataset order).
pub fn stage_calibrate(
    cfg: &FileConfig,
    evidence: &Path,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    ensure_out_dir(out)?;
    let (ds, _) = load_configured_dataset(cfg)?;
    let text =
        std::fs::read_to_string(evidence).map_err(|source| CliError::io(evidence, source))?;
    let suite = MechSuiteResult::from_csv(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", evidence.display())))?;
    let order = ds.covariate_ids();
    let priors = calibrate_all(
        &suite.results,
        &cfg.calibration.scheme,
        &order,
        &cfg.calibration.constants,
    )?;
    write_file(&out.join(PRIORS_CSV), &priors_to_csv(&priors))?;
    println!(
        "calibrate: {} prior(s) -> {}",
        priors.len(),
        out.join(PRIORS_CSV).display()
    );
    Ok(vec![PRIORS_CSV.into()])
}

/// Fits the outcome model with the selected algorithm and writes the full
/// fit as JSON plus a per-covariate CSV of inclusion probabilities.
pub fn stage_cbvs(
    cfg: &FileConfig,
    priors_path: &Path,
    cbvs_cfg: &CbvsConfig,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    ensure_out_dir(out)?;
    let (ds, _) = load_configured_dataset(cfg)?;
    let priors = priors_from_csv(priors_path)?;
    let fit = cbvs::fit(&ds, &priors, cbvs_cfg)?;
    write_file(&out.join(FIT_CSV), &fit.to_csv())?;
    let json = serde_json::to_string_pretty(&fit).expect("fit serializes");
    write_file(&out.join(FIT_JSON), &json)?;
    let extra = match (fit.em_iterations, fit.acceptance_rate) {
        (Some(it), _) => format!(", em_iterations {it}"),
        (None, Some(rate)) => format!(", acceptance {rate:.3}"),
        _ => String::new(),
    };
    println!(
        "cbvs: {} on {} covariate(s), sigma_hat {:.4}{extra} -> {}",
        fit.algorithm,
        fit.covariate_ids.len(),
        fit.sigma_hat,
        out.join(FIT_CSV).display()
    );
    Ok(vec![FIT_CSV.into(), FIT_JSON.into()])
}

/// Reads the `covariate_id,pip` columns of a fit CSV.
fn read_pips(path: &Path) -> Result<(Vec<String>, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::io(path, source))?;
    let bad = |line: usize, msg: String| {
        CliError::Data(format!("{}, line {line}: {msg}", path.display()))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "covariate_id,pip,beta_std,beta_raw" => {}
        Some((_, h)) => return Err(bad(1, format!("unexpected header `{}`", h.trim()))),
        None => return Err(bad(1, "empty fit file".into())),
    }
    let mut ids = Vec::new();
    let mut pips = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(idx + 1, "expected 4 fields".into()));
        }
        let pip: f64 = fields[1]
            .parse()
            .map_err(|_| bad(idx + 1, format!("unparsable pip `{}`", fields[1])))?;
        ids.push(fields[0].to_string());
        pips.push(pip);
    }
    Ok((ids, pips))
}

/// Ranks the fit's inclusion probabilities and cuts at the requested false
/// discovery level.
pub fn stage_fdr(
    fit_csv: &Path,
    alpha: f64,
    rule: FdrRule,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    ensure_out_dir(out)?;
    let (ids, pips) = read_pips(fit_csv)?;
    let selection = select_fdr_labeled(&ids, &pips, alpha, rule)?;
    selection.to_csv(&out.join(SELECTION_CSV))?;
    selection.to_json(&out.join(SELECTION_JSON))?;
    println!(
        "fdr: {} of {} selected at alpha {} ({}) -> {}",
        selection.j_star,
        selection.ranked.len(),
        alpha,
        rule,
        out.join(SELECTION_CSV).display()
    );
    Ok(vec![SELECTION_CSV.into(), SELECTION_JSON.into()])
}

/// Runs all four stages in order, reading each stage's input from the
/// previous stage's output file, and records a manifest of what happened.
pub fn run_pipeline(
    cfg: &FileConfig,
    cbvs_cfg: &CbvsConfig,
    alpha: f64,
    rule: FdrRule,
    out: &Path,
) -> Result<(), CliError> {
    let mut manifest = Manifest::new(cfg.sha256.clone(), Some(cbvs_cfg.seed));
    let timed = |name: &'static str,
                     manifest: &mut Manifest,
                     run: &mut dyn FnMut() -> Result<Vec<String>, CliError>|
     -> Result<(), CliError> {
        let start = Instant::now();
        let outputs = run()?;
        manifest.stages.push(StageRecord {
            name,
            wall_ms: start.elapsed().as_millis(),
            outputs,
        });
        Ok(())
    };
    timed("mechanistic", &mut manifest, &mut || {
        stage_mechanistic(cfg, out)
    })?;
    timed("calibrate", &mut manifest, &mut || {
        stage_calibrate(cfg, &out.join(MECHANISTIC_CSV), out)
    })?;
    timed("cbvs", &mut manifest, &mut || {
        stage_cbvs(cfg, &out.join(PRIORS_CSV), cbvs_cfg, out)
    })?;
    timed("fdr", &mut manifest, &mut || {
        stage_fdr(&out.join(FIT_CSV), alpha, rule, out)
    })?;
    manifest.write(out)?;
    println!("pipeline: manifest -> {}", out.join(MANIFEST_JSON).display());
    Ok(())
}

/// Runs the replicated benchmark and writes its tables plus a manifest.
pub fn run_simulate(
    scenario: &BenchScenario,
    scenario_sha256: String,
    out: &Path,
) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let start = Instant::now();
    let report = run_benchmark(scenario)?;
    report.write_outputs(out)?;
    for agg in &report.aggregates {
        println!(
            "simulate: {} median auc {:.4}, auc20 {:.4}, mcc {:.4} ({} replicate(s))",
            agg.method.name(),
            agg.median.auc,
            agg.median.auc20,
            agg.median.mcc,
            agg.replicates
        );
    }
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!(
                "warning: replicate {} / {}: {}",
                f.replicate,
                f.method.name(),
                f.error
            );
        }
    }
    let mut manifest = Manifest::new(scenario_sha256, Some(scenario.seed));
    manifest.stages.push(StageRecord {
        name: "simulate",
        wall_ms: start.elapsed().as_millis(),
        outputs: vec![
            "metrics.csv".into(),
            "metrics_long.csv".into(),
            "metrics.json".into(),
        ],
    });
    manifest.write(out)?;
    Ok(())
}

/// Loads a scenario TOML, or falls back to the stock benchmark. Returns the
/// scenario together with the hash of whatever bytes defined it and whether
/// the file pinned a seed itself.
pub fn load_scenario(
    path: Option<&Path>,
) -> Result<(BenchScenario, String, bool), CliError> {
    match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|source| CliError::io(p, source))?;
            let scenario: BenchScenario = toml::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            let has_seed = text
                .parse::<toml::Table>()
                .map(|t| t.contains_key("seed"))
                .unwrap_or(false);
            Ok((scenario, sha256_hex(text.as_bytes()), has_seed))
        }
        None => {
            let scenario = BenchScenario::default();
            let text = toml::to_string(&scenario)
                .map_err(|e| CliError::Data(format!("default scenario: {e}")))?;
            Ok((scenario, sha256_hex(text.as_bytes()), false))
        }
    }
}
