//! Replicated benchmark contrasting the evidence-calibrated fit against the
//! same model with all evidence zeroed out (uniform inclusion priors).
//! Replicates run in parallel on derived seeds; outputs are sorted before
//! writing so reruns are byte-identical.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    calibrate_xi, compute_metrics, derive_seed, generate_sim1, Sim1Layout, SimError, SimMetrics,
    XI_MEDIAN_TARGETS,
};
use crate::calibration::{calibrate, calibrate_all, AggregationScheme, CalibrationConfig};
use crate::cbvs::{self, Algorithm, CbvsConfig};
use crate::fdr::{select_fdr, FdrRule};
use crate::mech::{run_mechanistic_suite, GpHyperParams};
use crate::numeric::quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMethod {
    CbvsCalibrated,
    CbvsUncalibrated,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::CbvsCalibrated => "cbvs-calibrated",
            BenchMethod::CbvsUncalibrated => "cbvs-uncalibrated",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchScenario {
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub fdr_rule: FdrRule,
    pub methods: Vec<BenchMethod>,
    pub engine: Algorithm,
    pub iterations: usize,
    pub burn_in: usize,
    /// Median-lbf targets per evidence class for the upstream effect search.
    pub xi_targets: [f64; 4],
}

impl Default for BenchScenario {
    fn default() -> Self {
        BenchScenario {
            n: 50,
            replicates: 20,
            seed: 17,
            alpha: 0.10,
            fdr_rule: FdrRule::CumulativeSum,
            methods: vec![BenchMethod::CbvsCalibrated, BenchMethod::CbvsUncalibrated],
            engine: Algorithm::Gibbs,
            iterations: 2500,
            burn_in: 500,
            xi_targets: XI_MEDIAN_TARGETS,
        }
    }
}

impl BenchScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: String| Err(SimError::BadScenario { reason });
        if self.n < 10 {
            return bad(format!("need n >= 10, got {}", self.n));
        }
        if self.replicates == 0 {
            return bad("need at least one replicate".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        if self.iterations <= self.burn_in {
            return bad(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            ));
        }
        Ok(())
    }

    fn cbvs_config(&self, fit_seed: u64) -> CbvsConfig {
        CbvsConfig {
            algorithm: self.engine,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: fit_seed,
            ..CbvsConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub method: BenchMethod,
    pub replicate: usize,
    pub seed: u64,
    pub metrics: SimMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: BenchMethod,
    pub replicates: usize,
    pub median: SimMetrics,
    pub q25: SimMetrics,
    pub q75: SimMetrics,
    pub iqr: SimMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchFailure {
    pub method: BenchMethod,
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: BenchScenario,
    /// Upstream effect size per evidence class used by every replicate.
    pub xi: [f64; 4],
    pub rows: Vec<ReplicateRecord>,
    pub aggregates: Vec<MethodAggregate>,
    pub failures: Vec<BenchFailure>,
}

fn aggregate_field(values: &[SimMetrics], pick: impl Fn(&SimMetrics) -> f64) -> (f64, f64, f64) {
    let v: Vec<f64> = values.iter().map(&pick).collect();
    (
        quantile(&v, 0.5),
        quantile(&v, 0.25),
        quantile(&v, 0.75),
    )
}

fn aggregate(method: BenchMethod, values: &[SimMetrics]) -> MethodAggregate {
    let mut median = SimMetrics {
        auc: 0.0,
        auc20: 0.0,
        tpr: 0.0,
        fpr: 0.0,
        mcc: 0.0,
    };
    let mut q25 = median;
    let mut q75 = median;
    let mut iqr = median;
    type Field = (
        fn(&SimMetrics) -> f64,
        fn(&mut SimMetrics) -> &mut f64,
    );
    let fields: [Field; 5] = [
        (|m| m.auc, |m| &mut m.auc),
        (|m| m.auc20, |m| &mut m.auc20),
        (|m| m.tpr, |m| &mut m.tpr),
        (|m| m.fpr, |m| &mut m.fpr),
        (|m| m.mcc, |m| &mut m.mcc),
    ];
    for (get, set) in fields {
        let (med, lo, hi) = aggregate_field(values, get);
        *set(&mut median) = med;
        *set(&mut q25) = lo;
        *set(&mut q75) = hi;
        *set(&mut iqr) = hi - lo;
    }
    MethodAggregate {
        method,
        replicates: values.len(),
        median,
        q25,
        q75,
        iqr,
    }
}

/// Runs one replicate end to end and returns one metrics row per method.
/// The mechanistic scores are computed once and shared; the uncalibrated arm
/// replaces every lbf with zero before calibration.
fn run_replicate(
    scenario: &BenchScenario,
    layout: &Sim1Layout,
    xi: &[f64; 4],
    replicate: usize,
) -> (Vec<ReplicateRecord>, Vec<BenchFailure>) {
    let seed = derive_seed(scenario.seed, replicate as u64 + 1);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let fail = |method: BenchMethod, error: String| BenchFailure {
        method,
        replicate,
        seed,
        error,
    };

    let prepared: Result<_, SimError> = (|| {
        let mut rep = generate_sim1(scenario.n, layout, xi, seed)?;
        rep.dataset.center_expression();
        let suite = run_mechanistic_suite(&rep.dataset, &rep.map, &GpHyperParams::default())?;
        Ok((rep, suite))
    })();
    let (rep, suite) = match prepared {
        Ok(v) => v,
        Err(e) => {
            for &method in &scenario.methods {
                failures.push(fail(method, e.to_string()));
            }
            return (rows, failures);
        }
    };

    let order = rep.dataset.covariate_ids();
    let cal_cfg = CalibrationConfig::default();
    let truth = rep.truth.signal();
    for (m_idx, &method) in scenario.methods.iter().enumerate() {
        let attempt: Result<SimMetrics, SimError> = (|| {
            let priors = match method {
                BenchMethod::CbvsCalibrated => {
                    calibrate_all(&suite.results, &AggregationScheme::Average, &order, &cal_cfg)?
                }
                BenchMethod::CbvsUncalibrated => {
                    let flat = calibrate(0.0, &cal_cfg)?;
                    order
                        .iter()
                        .map(|id| {
                            let mut p = flat.clone();
                            p.covariate_id = id.clone();
                            p
                        })
                        .collect()
                }
            };
            let cfg = scenario.cbvs_config(derive_seed(seed, 1000 + m_idx as u64));
            let fit = cbvs::fit(&rep.dataset, &priors, &cfg)?;
            let selection = select_fdr(&fit.pip, scenario.alpha, scenario.fdr_rule)?;
            let mut selected = vec![false; fit.pip.len()];
            for idx in selection.selected_indices() {
                selected[idx] = true;
            }
            Ok(compute_metrics(&truth, &fit.pip, &selected)?)
        })();
        match attempt {
            Ok(metrics) => rows.push(ReplicateRecord {
                method,
                replicate,
                seed,
                metrics,
            }),
            Err(e) => failures.push(fail(method, e.to_string())),
        }
    }
    (rows, failures)
}

pub fn run_benchmark(scenario: &BenchScenario) -> Result<BenchReport, SimError> {
    scenario.validate()?;
    let layout = Sim1Layout::standard();
    // Probing the evidence map is quadrature-heavy, so the search runs at a
    // capped sample size; the found effect sizes are reused at scenario.n.
    let probe_n = scenario.n.min(100);
    let xi = calibrate_xi(
        &scenario.xi_targets,
        probe_n,
        &GpHyperParams::default(),
        derive_seed(scenario.seed, 0),
    )?
    .xi;

    let per_rep: Vec<_> = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_replicate(scenario, &layout, &xi, r))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_rep {
        rows.extend(r);
        failures.extend(f);
    }
    let method_slot = |m: BenchMethod| scenario.methods.iter().position(|x| *x == m).unwrap();
    rows.sort_by_key(|r| (method_slot(r.method), r.replicate));
    failures.sort_by_key(|f| (method_slot(f.method), f.replicate));

    let mut aggregates = Vec::new();
    for &method in &scenario.methods {
        let values: Vec<SimMetrics> = rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.metrics)
            .collect();
        if !values.is_empty() {
            aggregates.push(aggregate(method, &values));
        }
    }

    Ok(BenchReport {
        scenario: scenario.clone(),
        xi,
        rows,
        aggregates,
        failures,
    })
}

impl BenchReport {
    pub fn metrics_for(&self, method: BenchMethod) -> Vec<SimMetrics> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.metrics)
            .collect()
    }

    /// Wide table: one row per replicate plus one median row per method.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("method,row,seed,auc,auc20,tpr,fpr,mcc\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method.name(),
                r.replicate,
                r.seed,
                r.metrics.auc,
                r.metrics.auc20,
                r.metrics.tpr,
                r.metrics.fpr,
                r.metrics.mcc
            ));
        }
        for a in &self.aggregates {
            out.push_str(&format!(
                "{},median,,{},{},{},{},{}\n",
                a.method.name(),
                a.median.auc,
                a.median.auc20,
                a.median.tpr,
                a.median.fpr,
                a.median.mcc
            ));
        }
        out
    }

    /// Long table, one metric value per row; convenient for plotting.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("method,replicate,seed,metric,value\n");
        for r in &self.rows {
            for (name, value) in [
                ("auc", r.metrics.auc),
                ("auc20", r.metrics.auc20),
                ("tpr", r.metrics.tpr),
                ("fpr", r.metrics.fpr),
                ("mcc", r.metrics.mcc),
            ] {
                out.push_str(&format!(
                    "{},{},{},{name},{value}\n",
                    r.method.name(),
                    r.replicate,
                    r.seed
                ));
            }
        }
        out
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<(), SimError> {
        let write = |name: &str, body: String| -> Result<(), SimError> {
            let path = dir.join(name);
            let mut file = std::fs::File::create(&path).map_err(|source| SimError::Io {
                path: path.clone(),
                source,
            })?;
            file.write_all(body.as_bytes()).map_err(|source| SimError::Io {
                path: path.clone(),
                source,
            })
        };
        write("metrics.csv", self.metrics_csv())?;
        write("metrics_long.csv", self.long_csv())?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        write("metrics.json", json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scenario() -> BenchScenario {
        BenchScenario {
            n: 40,
            replicates: 2,
            seed: 99,
            iterations: 400,
            burn_in: 100,
            ..BenchScenario::default()
        }
    }

    #[test]
    fn scenario_validation() {
        let mut s = BenchScenario::default();
        s.replicates = 0;
        assert!(matches!(s.validate(), Err(SimError::BadScenario { .. })));
        let mut s = BenchScenario::default();
        s.burn_in = s.iterations;
        assert!(s.validate().is_err());
        assert!(BenchScenario::default().validate().is_ok());
    }

    #[test]
    fn row_counts_and_determinism() {
        let scenario = tiny_scenario();
        let a = run_benchmark(&scenario).unwrap();
        assert!(a.failures.is_empty(), "{:?}", a.failures);
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.aggregates.len(), 2);

        let b = run_benchmark(&scenario).unwrap();
        assert_eq!(a.metrics_csv(), b.metrics_csv());
        assert_eq!(a.long_csv(), b.long_csv());
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );

        // 4 replicate rows + 2 aggregate rows + header
        assert_eq!(a.metrics_csv().lines().count(), 7);
        assert_eq!(a.long_csv().lines().count(), 1 + 4 * 5);
    }

    #[test]
    fn outputs_land_on_disk() {
        let scenario = BenchScenario {
            replicates: 1,
            methods: vec![BenchMethod::CbvsUncalibrated],
            ..tiny_scenario()
        };
        let report = run_benchmark(&scenario).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write_outputs(dir.path()).unwrap();
        for name in ["metrics.csv", "metrics_long.csv", "metrics.json"] {
            assert!(dir.path().join(name).is_file(), "{name} missing");
        }
        let body = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
        let back: BenchReport = serde_json::from_str(&body).unwrap();
        assert_eq!(back.rows.len(), report.rows.len());
    }
}
