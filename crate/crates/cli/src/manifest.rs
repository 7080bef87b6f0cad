use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_secs: f64,
}

pub fn digest_file(path: &Path) -> Result<String, Failure> {
    let bytes =
        std::fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Collects inputs and outputs of one subcommand run.
pub struct Run {
    subcommand: String,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    started: Instant,
}

impl Run {
    pub fn start(subcommand: &str, out: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(out)
            .map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
        Ok(Self {
            subcommand: subcommand.into(),
            out: out.to_path_buf(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let d = digest_file(path)?;
        self.inputs.insert(path.display().to_string(), d);
        Ok(())
    }

    /// Writes `name` in the output directory.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        self.outputs.insert(
            name.into(),
            format!("{:x}", Sha256::digest(contents.as_bytes())),
        );
        Ok(())
    }

    pub fn finish(self, config: serde_json::Value, seed: Option<u64>) -> Result<(), Failure> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.out.join(MANIFEST_FILE);
        std::fs::write(&path, text + "\n")
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    }
}
