//! `evisel`: score mechanistic evidence, calibrate it into priors, fit the
//! outcome selection model, and threshold the result, either one stage at a
//! time or as a chained pipeline. Every command is deterministic given its
//! config file and seed; reruns produce byte-identical primary outputs.
//!
//! Flags can also arrive through `EVISEL_*` environment variables (one per
//! flag, e.g. `EVISEL_SEED` for `--seed`).

mod config;
mod errors;
mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use evisel::cbvs::{Algorithm, CbvsConfig};
use evisel::fdr::FdrRule;

use config::FileConfig;
use errors::CliError;

#[derive(Parser)]
#[command(
    name = "evisel",
    version,
    about = "Evidence-calibrated variable selection over matched omics layers"
)]
struct Cli {
    /// Worker threads for per-biomarker and per-replicate parallelism
    /// (default: all cores; results do not depend on the thread count).
    #[arg(long, global = true, env = "EVISEL_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score each biomarker's regulation axes as log Bayes factors
    Mechanistic {
        /// Run configuration (TOML; needs a [data] section)
        #[arg(long, env = "EVISEL_CONFIG")]
        config: PathBuf,
        /// Output directory (fixed filenames inside)
        #[arg(long, env = "EVISEL_OUT")]
        out: PathBuf,
    },
    /// Collapse mechanistic scores into Beta inclusion hyperpriors
    Calibrate {
        #[arg(long, env = "EVISEL_CONFIG")]
        config: PathBuf,
        /// Mechanistic results CSV (default: <out>/mechanistic.csv)
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long, env = "EVISEL_OUT")]
        out: PathBuf,
    },
    /// Fit the spike-and-slab outcome model under the calibrated priors
    Cbvs {
        #[arg(long, env = "EVISEL_CONFIG")]
        config: PathBuf,
        /// Calibrated priors CSV (default: <out>/priors.csv)
        #[arg(long)]
        priors: Option<PathBuf>,
        /// RNG seed; required here or as `seed` in the config file
        #[arg(long, env = "EVISEL_SEED")]
        seed: Option<u64>,
        /// Fitting algorithm: gibbs, select-mcmc or emvs
        #[arg(long, env = "EVISEL_ALGO")]
        algo: Option<String>,
        #[arg(long, env = "EVISEL_OUT")]
        out: PathBuf,
    },
    /// Threshold posterior inclusion probabilities at a false discovery level
    Fdr {
        /// Fit CSV carrying a pip column (default: <out>/fit.csv)
        #[arg(long)]
        fit: Option<PathBuf>,
        /// False discovery level in (0, 1]
        #[arg(long, env = "EVISEL_ALPHA")]
        alpha: Option<f64>,
        /// Selection rule: paper or cumulative-mean
        #[arg(long = "fdr-rule", env = "EVISEL_FDR_RULE")]
        fdr_rule: Option<String>,
        /// Optional config file supplying [fdr] defaults
        #[arg(long, env = "EVISEL_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, env = "EVISEL_OUT")]
        out: PathBuf,
    },
    /// Run the replicated synthetic benchmark
    Simulate {
        /// Scenario TOML; omitted means the stock benchmark
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Master seed; required here or as `seed` in the scenario file
        #[arg(long, env = "EVISEL_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "EVISEL_OUT")]
        out: PathBuf,
    },
    /// Chain mechanistic, calibrate, cbvs and fdr, then write a manifest
    Pipeline {
        #[arg(long, env = "EVISEL_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "EVISEL_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "EVISEL_ALGO")]
        algo: Option<String>,
        #[arg(long, env = "EVISEL_ALPHA")]
        alpha: Option<f64>,
        #[arg(long = "fdr-rule", env = "EVISEL_FDR_RULE")]
        fdr_rule: Option<String>,
        #[arg(long, env = "EVISEL_OUT")]
        out: PathBuf,
    },
}

/// Merge the config's [cbvs] table with the flags that override it. The
/// seed has no default on purpose: a stochastic run must name one.
fn resolved_cbvs_config(
    cfg: &FileConfig,
    seed: Option<u64>,
    algo: Option<&str>,
) -> Result<CbvsConfig, CliError> {
    let mut out = cfg.cbvs.clone();
    out.seed = seed.or(cfg.seed).ok_or_else(|| {
        CliError::Usage("a seed is required: pass --seed or set `seed` in the config".into())
    })?;
    if let Some(name) = algo {
        out.algorithm = name.parse::<Algorithm>()?;
    }
    Ok(out)
}

fn parse_rule(flag: Option<&str>, fallback: FdrRule) -> Result<FdrRule, CliError> {
    match flag {
        Some(s) => s.parse::<FdrRule>().map_err(CliError::Usage),
        None => Ok(fallback),
    }
}

/// Pin the global worker pool before any parallel stage runs. A `None`
/// leaves rayon's own default (all cores).
fn init_pool(jobs: Option<usize>) {
    if let Some(jobs) = jobs {
        if jobs > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        }
    }
}

fn run(jobs: Option<usize>, command: Command) -> Result<(), CliError> {
    match command {
        Command::Mechanistic { config, out } => {
            let cfg = FileConfig::load(&config)?;
            init_pool(jobs.or(cfg.jobs));
            stages::stage_mechanistic(&cfg, &out)?;
        }
        Command::Calibrate {
            config,
            evidence,
            out,
        } => {
            let cfg = FileConfig::load(&config)?;
            let evidence = evidence.unwrap_or_else(|| out.join(stages::MECHANISTIC_CSV));
            stages::stage_calibrate(&cfg, &evidence, &out)?;
        }
        Command::Cbvs {
            config,
            priors,
            seed,
            algo,
            out,
        } => {
            let cfg = FileConfig::load(&config)?;
            let cbvs_cfg = resolved_cbvs_config(&cfg, seed, algo.as_deref())?;
            let priors = priors.unwrap_or_else(|| out.join(stages::PRIORS_CSV));
            stages::stage_cbvs(&cfg, &priors, &cbvs_cfg, &out)?;
        }
        Command::Fdr {
            fit,
            alpha,
            fdr_rule,
            config,
            out,
        } => {
            let fdr_defaults = match config {
                Some(path) => FileConfig::load(&path)?.fdr,
                None => Default::default(),
            };
            let alpha = alpha.unwrap_or(fdr_defaults.alpha);
            let rule = parse_rule(fdr_rule.as_deref(), fdr_defaults.rule)?;
            let fit = fit.unwrap_or_else(|| out.join(stages::FIT_CSV));
            stages::stage_fdr(&fit, alpha, rule, &out)?;
        }
        Command::Simulate {
            scenario,
            seed,
            out,
        } => {
            init_pool(jobs);
            let (mut scenario, sha, file_has_seed) =
                stages::load_scenario(scenario.as_deref())?;
            match seed {
                Some(s) => scenario.seed = s,
                None if file_has_seed => {}
                None => {
                    return Err(CliError::Usage(
                        "a seed is required: pass --seed or set `seed` in the scenario file"
                            .into(),
                    ))
                }
            }
            stages::run_simulate(&scenario, sha, &out)?;
        }
        Command::Pipeline {
            config,
            seed,
            algo,
            alpha,
            fdr_rule,
            out,
        } => {
            let cfg = FileConfig::load(&config)?;
            init_pool(jobs.or(cfg.jobs));
            let cbvs_cfg = resolved_cbvs_config(&cfg, seed, algo.as_deref())?;
            let alpha = alpha.unwrap_or(cfg.fdr.alpha);
            let rule = parse_rule(fdr_rule.as_deref(), cfg.fdr.rule)?;
            stages::run_pipeline(&cfg, &cbvs_cfg, alpha, rule, &out)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own exit code for bad usage is 2; this tool reserves 2
            // for I/O and reports usage problems as 64.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.jobs, cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
