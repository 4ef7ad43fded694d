//! Command-line runner for the trion spin-photon interface simulator:
//! configuration loading and validation, scenario pipelines, deterministic
//! data outputs with run manifests, and the bundled reference experiments.

pub mod config;
pub mod manifest;
pub mod output;
pub mod reproduce;
pub mod scenario;
