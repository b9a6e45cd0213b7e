use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Written next to every run's outputs. Everything except the two wall-clock
/// fields is a function of the scenario and seed.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    /// SHA-256 of the JSON-serialised scenario(s), seed included.
    pub scenario_sha256: String,
    pub seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<PathBuf>,
    pub tool_version: &'static str,
}

impl RunManifest {
    pub fn new<T: Serialize + ?Sized>(scenario: &str, hashed: &T, seed: u64, started: SystemTime, outputs: Vec<PathBuf>) -> Self {
        let json = serde_json::to_vec(hashed).expect("scenarios serialise");
        let digest = Sha256::digest(&json);
        Self {
            scenario: scenario.to_string(),
            scenario_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
            started_unix_s: unix(started),
            finished_unix_s: unix(SystemTime::now()),
            outputs,
            tool_version: env!("CARGO_PKG_VERSION"),
        }
    }
}

fn unix(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}
