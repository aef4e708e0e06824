//! Run manifest: echoes the config, seed and code version, and lists every
//! output file with its content hash.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub quantum_actual: u64,
    pub config: String,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

impl Manifest {
    pub fn new(
        command: &str,
        seed: u64,
        quantum_actual: u64,
        config_text: &str,
        artifacts: &[(String, String)],
    ) -> Manifest {
        let outputs = artifacts
            .iter()
            .map(|(path, content)| OutputEntry {
                path: path.clone(),
                sha256: hex::encode(Sha256::digest(content.as_bytes())),
            })
            .collect();
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            quantum_actual,
            config: config_text.to_string(),
            outputs,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }
}
