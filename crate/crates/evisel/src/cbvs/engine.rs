//! Runtime registry of fitting engines. Each engine implements [`FitEngine`]
//! and is looked up by the name carried in the configuration, so callers
//! (and the CLI) switch algorithms without compile-time dispatch.

use super::emvs::EmvsEngine;
use super::gibbs::GibbsEngine;
use super::select_mcmc::SelectMcmcEngine;
use super::{CbvsConfig, CbvsError, CbvsFit, FitProblem};

pub trait FitEngine: Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, problem: &FitProblem<'_>, cfg: &CbvsConfig) -> Result<CbvsFit, CbvsError>;
}

static ENGINES: &[&dyn FitEngine] = &[&GibbsEngine, &SelectMcmcEngine, &EmvsEngine];

pub fn registered_engines() -> impl Iterator<Item = &'static dyn FitEngine> {
    ENGINES.iter().copied()
}

pub fn engine_by_name(name: &str) -> Option<&'static dyn FitEngine> {
    registered_engines().find(|e| e.name() == name)
}
