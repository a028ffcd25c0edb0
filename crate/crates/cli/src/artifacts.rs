//! Output directory, config hash and run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use qsd::io::Table;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// First 64 bits of SHA-256 over the canonical settings, as 16 hex digits.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    format!("{:016x}", u64::from_be_bytes(word))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    tool_version: &'a str,
    subcommand: &'a str,
    master_seed: Option<u64>,
    started_unix: u64,
    finished_unix: u64,
    settings: &'a str,
    outputs: &'a [String],
}

/// One run's output directory. Every file it writes is tagged with the
/// config hash and seed.
pub struct Run {
    dir: PathBuf,
    subcommand: &'static str,
    settings: String,
    hash: String,
    seed: Option<u64>,
    started: u64,
    outputs: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Run {
    /// `settings` holds everything that determines the numeric payload
    /// except the seed.
    pub fn start(dir: &Path, subcommand: &'static str, settings: String, seed: Option<u64>) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Run {
            dir: dir.to_path_buf(),
            subcommand,
            hash: config_hash(&settings),
            settings,
            seed,
            started: unix_now(),
            outputs: Vec::new(),
        })
    }

    fn seed_label(&self) -> String {
        self.seed.map_or_else(|| "none".to_string(), |s| s.to_string())
    }

    pub fn csv(&mut self, name: &str, table: Table) -> Result<(), CliError> {
        let table = table.with_provenance("config_hash", &self.hash).with_provenance("seed", self.seed_label());
        table.write_file(&self.dir.join(name))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// JSON payload with a `provenance` object added at the top level.
    pub fn json(&mut self, name: &str, value: impl Serialize) -> Result<(), CliError> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::Numeric(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("provenance".into(), serde_json::json!({ "config_hash": self.hash, "seed": self.seed }));
        }
        let text = serde_json::to_string_pretty(&v).map_err(|e| CliError::Numeric(e.to_string()))?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(self) -> Result<(), CliError> {
        let m = Manifest {
            config_hash: &self.hash,
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            master_seed: self.seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            settings: &self.settings,
            outputs: &self.outputs,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Numeric(e.to_string()))?;
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        println!("wrote {} files to {} (config_hash {})", self.outputs.len() + 1, self.dir.display(), self.hash);
        Ok(())
    }
}
