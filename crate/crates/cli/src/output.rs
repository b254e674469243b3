//! Output directory layout: `config.toml`, `metadata.json`, `diagnostics.csv`,
//! `final.ckpt` (or `abort.ckpt`) and per-experiment tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use rqnls_core::diagnostics::csv_float;
use rqnls_core::dynamics::CylinderRecord;
use rqnls_core::grid::BUMP_FORMULA_ID;
use rqnls_core::resonance::DOMINANCE_CONSTANT;

use crate::checkpoint::{save_checkpoint, Snapshot};
use crate::Failure;

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const ABORT_CHECKPOINT: &str = "abort.ckpt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub program: String,
    pub command: String,
    pub system: String,
    pub config_sha256: String,
    pub seed: u64,
    pub tuple_order: String,
    pub bump_formula: String,
    pub dominance_constant: f64,
    pub method: String,
    pub beta: f64,
    pub outcome: String,
    pub checkpoint: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resumed_from: Option<String>,
    pub warnings: Vec<String>,
    pub columns: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Metadata {
    pub fn new(command: &str, system: &str, config_text: &str, seed: u64) -> Self {
        Metadata {
            program: format!("rqnls {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            system: system.into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            tuple_order: "lexicographic".into(),
            bump_formula: BUMP_FORMULA_ID.into(),
            dominance_constant: DOMINANCE_CONSTANT,
            method: String::new(),
            beta: 0.0,
            outcome: "completed".into(),
            checkpoint: FINAL_CHECKPOINT.into(),
            resumed_from: None,
            warnings: Vec::new(),
            columns: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.extra.insert(key.into(), value.into());
        self
    }
}

pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(root)
            .map_err(|e| Failure::Usage(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(OutputDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| Failure::Abort(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn checkpoint(&self, name: &str, snap: &Snapshot) -> Result<PathBuf, Failure> {
        let p = self.path(name);
        save_checkpoint(&p, snap).map_err(|e| Failure::Abort(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn metadata(&self, meta: &Metadata) -> Result<PathBuf, Failure> {
        let mut text = serde_json::to_string_pretty(meta).expect("metadata serializes");
        text.push('\n');
        self.write("metadata.json", &text)
    }
}

pub const CYLINDER_COLUMNS: [&str; 10] = [
    "t",
    "step",
    "mass",
    "momentum",
    "energy_kinetic",
    "energy_sextic",
    "energy_total",
    "virial",
    "l2_norm",
    "dx_norm",
];

pub fn cylinder_csv(records: &[CylinderRecord]) -> String {
    let mut s = CYLINDER_COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let cols: Vec<String> = [
            r.mass,
            r.momentum,
            r.energy.kinetic,
            r.energy.sextic,
            r.energy.total,
            r.virial,
            r.l2_norm,
            r.dx_norm,
        ]
        .into_iter()
        .map(csv_float)
        .collect();
        writeln!(s, "{},{},{}", csv_float(r.t), r.step, cols.join(",")).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
