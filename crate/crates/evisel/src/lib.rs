//! Two-layer Bayesian integration of multi-omics regression data.
//!
//! The first layer fits per-biomarker Gaussian-process regressions of
//! expression on upstream regulators and summarizes each as a base-10 log
//! Bayes factor ([`mech`]). The second layer turns those scores into Beta
//! hyperpriors on inclusion ([`calibration`]) and fits a spike-and-slab
//! regression of a clinical outcome on all expression covariates under
//! those priors ([`cbvs`]), with FDR-style reporting on the posterior
//! inclusion probabilities ([`fdr`]). [`sim`] holds the synthetic-data
//! generators and benchmark metrics used to validate the pipeline.

pub mod calibration;
pub mod cbvs;
pub mod data;
pub mod fdr;
pub mod mech;
pub mod numeric;
pub mod sim;
