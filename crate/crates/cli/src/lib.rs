//! Experiment harness: sweeps the mechanism parameters over a scenario and
//! writes deterministic CSV artifacts.
//!
//! Four experiment families: cost-of-privacy sweeps over `(epsilon, r, m)`,
//! the dummy-impact pairing against identifiability-matched noise, IBU
//! recovery of the query-location distribution, and synthetic scenario
//! generation. Every family derives one seed per sweep cell from the master
//! seed, so runs are byte-reproducible.

pub mod config;
pub mod dummy_impact;
pub mod gen;
pub mod ibu_exp;
pub mod sweep;

pub use config::{ExperimentConfig, ExperimentError, ExperimentResult};
