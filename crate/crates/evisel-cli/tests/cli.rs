//! Behavioral checks against the compiled binary: exit codes, stage
//! composition, and the bundled example.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../sample_data/tiny")
        .canonicalize()
        .expect("bundled sample data present")
}

fn evisel(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_evisel"));
    for var in [
        "EVISEL_CONFIG",
        "EVISEL_OUT",
        "EVISEL_SEED",
        "EVISEL_ALGO",
        "EVISEL_ALPHA",
        "EVISEL_FDR_RULE",
        "EVISEL_JOBS",
    ] {
        cmd.env_remove(var);
    }
    cmd.args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn bundled_config() -> String {
    sample_dir().join("pipeline.toml").display().to_string()
}

/// A config equivalent to the bundled one but with absolute paths, a
/// swappable outcome file and fewer iterations, written into `dir`.
fn write_config(dir: &Path, outcome: &Path, seed: Option<u64>) -> PathBuf {
    let s = sample_dir();
    let mut text = String::new();
    if let Some(seed) = seed {
        text.push_str(&format!("seed = {seed}\n"));
    }
    text.push_str(&format!(
        r#"
[data]
genes = "{genes}"
proteins = "{proteins}"
outcome = "{outcome}"
map = "{map}"

[[data.upstream]]
platform = "cna"
path = "{cna}"

[[data.upstream]]
platform = "meth"
path = "{meth}"

[cbvs]
algorithm = "gibbs"
iterations = 600
burn_in = 150
"#,
        genes = s.join("gexp.csv").display(),
        proteins = s.join("prot.csv").display(),
        outcome = outcome.display(),
        map = s.join("biomarkers.map").display(),
        cna = s.join("cna.csv").display(),
        meth = s.join("meth.csv").display(),
    ));
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Uniform priors over the six bundled covariates, enough to drive `cbvs`
/// without running the upstream stages.
fn write_uniform_priors(dir: &Path) -> PathBuf {
    let mut text = String::from("covariate_id,s,beta_a,beta_b,prior_mean\n");
    for id in ["GA", "GB", "GC", "PA", "PB", "PC"] {
        text.push_str(&format!("{id},0,1,1,0.5\n"));
    }
    let path = dir.join("priors.csv");
    fs::write(&path, text).unwrap();
    path
}

const PRIMARY_OUTPUTS: [&str; 7] = [
    "mechanistic.csv",
    "mechanistic.json",
    "priors.csv",
    "fit.csv",
    "fit.json",
    "selection.csv",
    "selection.json",
];

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(evisel(&["--help"]).status.code(), Some(0));
    assert_eq!(evisel(&["--version"]).status.code(), Some(0));
    assert_eq!(evisel(&["pipeline", "--help"]).status.code(), Some(0));
}

#[test]
fn bad_flags_exit_64() {
    assert_eq!(evisel(&["no-such-command"]).status.code(), Some(64));
    assert_eq!(evisel(&["cbvs", "--bogus-flag"]).status.code(), Some(64));
    // out is mandatory
    assert_eq!(
        evisel(&["fdr", "--alpha", "0.1"]).status.code(),
        Some(64)
    );
}

#[test]
fn pipeline_matches_manual_composition() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled_config();
    let auto = tmp.path().join("auto");
    let manual = tmp.path().join("manual");

    let out = evisel(&["pipeline", "--config", &cfg, "--out", auto.to_str().unwrap()]);
    assert!(out.status.success(), "pipeline failed: {}", stderr_of(&out));
    for stage in ["mechanistic", "calibrate", "cbvs", "fdr"] {
        let out = evisel(&[stage, "--config", &cfg, "--out", manual.to_str().unwrap()]);
        assert!(out.status.success(), "{stage} failed: {}", stderr_of(&out));
    }

    for name in PRIMARY_OUTPUTS {
        let a = fs::read(auto.join(name)).unwrap();
        let m = fs::read(manual.join(name)).unwrap();
        assert_eq!(a, m, "{name} differs between pipeline and manual run");
    }
    let manifest = fs::read_to_string(auto.join("manifest.json")).unwrap();
    for stage in ["mechanistic", "calibrate", "cbvs", "fdr"] {
        assert!(manifest.contains(&format!("\"name\": \"{stage}\"")));
    }
    assert!(!manual.join("manifest.json").exists());
}

#[test]
fn bundled_example_has_eight_mechanistic_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = evisel(&[
        "mechanistic",
        "--config",
        &bundled_config(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv = fs::read_to_string(out_dir.join("mechanistic.csv")).unwrap();
    // 3 driver-gene + 3 driver-protein + 2 cascading (PC has no coding gene)
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(csv.matches("driver_gene").count(), 3);
    assert_eq!(csv.matches("driver_protein").count(), 3);
    assert_eq!(csv.matches("cascading_protein").count(), 2);

    let rerun_dir = tmp.path().join("rerun");
    let rerun = evisel(&[
        "mechanistic",
        "--config",
        &bundled_config(),
        "--out",
        rerun_dir.to_str().unwrap(),
    ]);
    assert!(rerun.status.success());
    assert_eq!(
        fs::read(out_dir.join("mechanistic.csv")).unwrap(),
        fs::read(rerun_dir.join("mechanistic.csv")).unwrap()
    );
}

#[test]
fn missing_map_file_is_io_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    // break only the map path; the other absolute paths still resolve
    let cfg = write_config(tmp.path(), &sample_dir().join("outcome.csv"), Some(1));
    let broken = fs::read_to_string(&cfg)
        .unwrap()
        .replace("biomarkers.map", "nowhere.map");
    fs::write(&cfg, broken).unwrap();

    let out = evisel(&[
        "mechanistic",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("nowhere.map"));
}

#[test]
fn unknown_algo_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = evisel(&[
        "cbvs",
        "--config",
        &bundled_config(),
        "--algo",
        "sampler",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(64));
    assert!(stderr_of(&out).contains("sampler"));
}

#[test]
fn stochastic_commands_require_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &sample_dir().join("outcome.csv"), None);
    let out = evisel(&[
        "cbvs",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(64));
    assert!(stderr_of(&out).contains("seed"));
}

#[test]
fn alpha_out_of_range_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let fit = tmp.path().join("fit.csv");
    fs::write(
        &fit,
        "covariate_id,pip,beta_std,beta_raw\na,0.9,0.1,0.1\nb,0.2,0.0,0.0\n",
    )
    .unwrap();
    let out = evisel(&[
        "fdr",
        "--fit",
        fit.to_str().unwrap(),
        "--alpha",
        "1.5",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn fdr_rule_flag_toggles_selection_rule_field() {
    let tmp = tempfile::tempdir().unwrap();
    let fit = tmp.path().join("fit.csv");
    fs::write(
        &fit,
        "covariate_id,pip,beta_std,beta_raw\na,0.99,0.5,0.5\nb,0.8,0.2,0.2\nc,0.1,0.0,0.0\n",
    )
    .unwrap();
    for (flag, expect) in [("paper", "\"paper\""), ("cumulative-mean", "\"cumulative-mean\"")] {
        let out_dir = tmp.path().join(flag);
        let out = evisel(&[
            "fdr",
            "--fit",
            fit.to_str().unwrap(),
            "--alpha",
            "0.2",
            "--fdr-rule",
            flag,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
        let json = fs::read_to_string(out_dir.join("selection.json")).unwrap();
        assert!(json.contains(&format!("\"rule\": {expect}")));
    }
}

#[test]
fn emvs_smoke_reports_em_iterations() {
    let tmp = tempfile::tempdir().unwrap();
    let priors = write_uniform_priors(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = evisel(&[
        "cbvs",
        "--config",
        &bundled_config(),
        "--algo",
        "emvs",
        "--priors",
        priors.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("em_iterations"), "stdout: {stdout}");
    let json = fs::read_to_string(out_dir.join("fit.json")).unwrap();
    assert!(json.contains("\"em_iterations\""));
}

#[test]
fn survival_with_all_events_matches_continuous_on_log_time() {
    let tmp = tempfile::tempdir().unwrap();
    // derive the continuous twin with the very ln() ingestion applies, so
    // the two outcome vectors agree to the last bit
    let surv = fs::read_to_string(sample_dir().join("outcome_survival.csv")).unwrap();
    let mut twin = String::from("sample_id,value\n");
    for line in surv.lines().skip(1) {
        let mut it = line.split(',');
        let sid = it.next().unwrap();
        let time: f64 = it.next().unwrap().parse().unwrap();
        assert_eq!(it.next(), Some("1"), "bundled survival file is all events");
        twin.push_str(&format!("{sid},{:.17e}\n", time.ln()));
    }
    let twin_path = tmp.path().join("outcome_ln.csv");
    fs::write(&twin_path, twin).unwrap();

    let priors = write_uniform_priors(tmp.path());
    let mut fits = Vec::new();
    for (tag, outcome) in [
        ("surv", sample_dir().join("outcome_survival.csv")),
        ("cont", twin_path.clone()),
    ] {
        let dir = tmp.path().join(tag);
        fs::create_dir_all(&dir).unwrap();
        let cfg = write_config(&dir, &outcome, Some(3));
        let out_dir = dir.join("out");
        let out = evisel(&[
            "cbvs",
            "--config",
            cfg.to_str().unwrap(),
            "--priors",
            priors.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{tag}: {}", stderr_of(&out));
        fits.push(fs::read(out_dir.join("fit.csv")).unwrap());
    }
    assert_eq!(fits[0], fits[1], "fully observed survival must match the log-time fit");
}

#[test]
fn simulate_runs_a_small_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("scenario.toml");
    fs::write(
        &scenario,
        r#"
n = 40
replicates = 1
alpha = 0.1
methods = ["cbvs-uncalibrated"]
engine = "gibbs"
iterations = 400
burn_in = 100
"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");

    // scenario file has no seed and none was passed
    let missing = evisel(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(64));

    let out = evisel(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for name in ["metrics.csv", "metrics_long.csv", "metrics.json", "manifest.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let long = fs::read_to_string(out_dir.join("metrics_long.csv")).unwrap();
    // header plus 5 metrics for the single replicate
    assert_eq!(long.lines().count(), 6);
    let manifest = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 5"));
}
