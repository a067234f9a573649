//! Final sign-off check for the binary: rerunning the chained pipeline on
//! the bundled example with the same config and seed must reproduce every
//! primary output byte for byte. The manifest is exempt (it carries wall
//! times) and is checked for structure instead.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn sample_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../sample_data/tiny/pipeline.toml")
        .canonicalize()
        .expect("bundled sample data present")
}

#[test]
fn criterion_10_pipeline_rerun_is_byte_identical() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sample_config();

    let run = |dir: &Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_evisel"))
            .args(["pipeline", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir)
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "pipeline failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    run(&first);
    run(&second);

    let mut all_identical = true;
    for name in [
        "mechanistic.csv",
        "mechanistic.json",
        "priors.csv",
        "fit.csv",
        "fit.json",
        "selection.csv",
        "selection.json",
    ] {
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        if a != b {
            all_identical = false;
            eprintln!("criterion 10: {name} differs between reruns");
        }
    }
    for dir in [&first, &second] {
        let manifest = fs::read_to_string(dir.join("manifest.json")).unwrap();
        for stage in ["mechanistic", "calibrate", "cbvs", "fdr"] {
            assert!(manifest.contains(&format!("\"name\": \"{stage}\"")));
        }
    }

    let elapsed = started.elapsed();
    let in_budget = elapsed.as_secs() < 120;
    println!(
        "criterion 10: {} (two pipeline runs in {:.1?}, budget 2 min)",
        if all_identical && in_budget { "PASS" } else { "FAIL" },
        elapsed
    );
    assert!(all_identical, "primary outputs changed between reruns");
    assert!(in_budget, "runtime budget exceeded: {elapsed:.1?}");
}
