//! Run manifests: enough metadata to re-run any output exactly.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    /// SHA-256 of the configuration text.
    pub config_sha256: String,
    pub master_seed: u64,
    pub rng_algorithm: &'static str,
    pub artifact_version: &'static str,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(config_text: &str, master_seed: u64, wall_clock_seconds: f64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_text.as_bytes());
        Self {
            config_sha256: format!("{:x}", hasher.finalize()),
            master_seed,
            rng_algorithm: trion_core::rng::RNG_ALGORITHM,
            artifact_version: env!("CARGO_PKG_VERSION"),
            wall_clock_seconds,
        }
    }
}
