//! Binary checkpoints: `RQNLS1`, a little-endian `u32` header length, a JSON
//! header, then the samples as little-endian `f64` pairs `(re, im)`.
//!
//! Resonant payloads are mode-major (modes in lexicographic order, then x).
//! Cylinder payloads are y-major (then x).

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rqnls_core::dynamics::CylinderField;
use rqnls_core::dynamics::SimState;
use rqnls_core::{Dim, Grid1D, ModeLayout, SpectralField};

use crate::config::System;

pub const MAGIC: &[u8; 6] = b"RQNLS1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: magic bytes {0:?} differ from \"RQNLS1\"")]
    Magic(Vec<u8>),
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("size disagreement: header describes {expected} payload bytes, file holds {found}")]
    Size { expected: usize, found: usize },
    #[error("checkpoint format version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error(transparent)]
    Core(#[from] rqnls_core::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub system: System,
    pub dim: usize,
    #[serde(rename = "J")]
    pub cutoff: i64,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Ny", default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(rename = "L")]
    pub half_width: f64,
    pub t: f64,
    pub step: i64,
    pub dt: f64,
    pub mode_order: String,
    pub fft_norm: String,
    pub endianness: String,
}

/// The state stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot {
    Resonant(SimState),
    Cylinder {
        field: CylinderField,
        /// Truncation the run was configured with.
        cutoff: i64,
        step: i64,
        dt: f64,
    },
}

impl Snapshot {
    pub fn system(&self) -> System {
        match self {
            Snapshot::Resonant(s) if s.field.dim() == Dim::Two => System::Resonant2d,
            Snapshot::Resonant(_) => System::Resonant1d,
            Snapshot::Cylinder { .. } => System::Cylinder,
        }
    }

    pub fn step(&self) -> i64 {
        match self {
            Snapshot::Resonant(s) => s.step,
            Snapshot::Cylinder { step, .. } => *step,
        }
    }

    pub fn header(&self) -> Header {
        let (grid, dim, cutoff, ny, step, dt) = match self {
            Snapshot::Resonant(s) => (s.field.grid(), s.field.dim(), s.field.cutoff(), None, s.step, s.dt),
            Snapshot::Cylinder { field, cutoff, step, dt } => {
                (field.grid(), Dim::One, *cutoff, Some(field.ny()), *step, *dt)
            }
        };
        Header {
            format_version: FORMAT_VERSION,
            system: self.system(),
            dim: dim.rank(),
            cutoff,
            nx: grid.nx(),
            ny,
            half_width: grid.half_width(),
            t: step as f64 * dt,
            step,
            dt,
            mode_order: "lex".into(),
            fft_norm: "unitary".into(),
            endianness: "LE".into(),
        }
    }

    fn values(&self) -> &[Complex64] {
        match self {
            Snapshot::Resonant(s) => s.field.values(),
            Snapshot::Cylinder { field, .. } => field.values(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let values = self.values();
        let mut out = Vec::with_capacity(10 + header.len() + 16 * values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() {
            return Err(CheckpointError::Truncated(format!("{} bytes, no magic", bytes.len())));
        }
        if &bytes[..6] != MAGIC {
            return Err(CheckpointError::Magic(bytes[..6].to_vec()));
        }
        if bytes.len() < 10 {
            return Err(CheckpointError::Truncated("no header length".into()));
        }
        let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let body = &bytes[10..];
        if body.len() < hlen {
            return Err(CheckpointError::Truncated(format!(
                "header length {hlen} but only {} bytes follow",
                body.len()
            )));
        }
        let raw: serde_json::Value =
            serde_json::from_slice(&body[..hlen]).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let found = raw.get("format_version").and_then(|v| v.as_u64());
        match found {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(CheckpointError::Version {
                    found: v as u32,
                    supported: FORMAT_VERSION,
                })
            }
            None => return Err(CheckpointError::Header("missing format_version".into())),
        }
        let h: Header = serde_json::from_value(raw).map_err(|e| CheckpointError::Header(e.to_string()))?;
        for (key, got, want) in [
            ("mode_order", &h.mode_order, "lex"),
            ("fft_norm", &h.fft_norm, "unitary"),
            ("endianness", &h.endianness, "LE"),
        ] {
            if got != want {
                return Err(CheckpointError::Header(format!("{key} = {got:?}, expected {want:?}")));
            }
        }
        let dim = Dim::from_rank(h.dim)?;
        if dim != h.system.dim() {
            return Err(CheckpointError::Header(format!("dim {} does not match system {}", h.dim, h.system.name())));
        }
        let grid = Grid1D::new(h.half_width, h.nx)?;
        let rows = match h.system {
            System::Cylinder => h
                .ny
                .ok_or_else(|| CheckpointError::Header("cylinder checkpoint without Ny".into()))?,
            _ => ModeLayout::new(dim, h.cutoff)?.len(),
        };
        let n = rows * h.nx;
        let payload = &body[hlen..];
        if payload.len() != 16 * n {
            return Err(CheckpointError::Size {
                expected: 16 * n,
                found: payload.len(),
            });
        }
        let values: Vec<Complex64> = payload
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(match h.system {
            System::Cylinder => {
                let mut field = CylinderField::zeros(&grid, rows)?;
                field.values_mut().copy_from_slice(&values);
                Snapshot::Cylinder {
                    field,
                    cutoff: h.cutoff,
                    step: h.step,
                    dt: h.dt,
                }
            }
            _ => {
                let field = SpectralField::from_values(&grid, ModeLayout::new(dim, h.cutoff)?, values)?;
                let mut state = SimState::new(field, h.dt)?;
                state.step = h.step;
                Snapshot::Resonant(state)
            }
        })
    }
}

pub fn save_checkpoint(path: &Path, snap: &Snapshot) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&snap.to_bytes())?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Snapshot, CheckpointError> {
    Snapshot::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rqnls_core::random::{random_field, RandomFieldSpec};

    fn state() -> Snapshot {
        let g = Grid1D::new(12.5, 64).unwrap();
        let u = random_field(&g, Dim::Two, 1, &RandomFieldSpec::default(), 3).unwrap();
        let mut s = SimState::new(u, 0.1 / 3.0).unwrap();
        s.step = 17;
        Snapshot::Resonant(s)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = state();
        let bytes = s.to_bytes();
        let back = Snapshot::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let (Snapshot::Resonant(a), Snapshot::Resonant(b)) = (&s, &back) else { panic!() };
        assert!(a.field.values().iter().zip(b.field.values()).all(|(x, y)| {
            x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()
        }));
        assert_eq!(a.dt.to_bits(), b.dt.to_bits());
        assert_eq!(a.step, b.step);
    }

    #[test]
    fn cylinder_round_trip() {
        let g = Grid1D::new(4.0, 16).unwrap();
        let field = CylinderField::from_fn(&g, 8, Complex64::new).unwrap();
        let s = Snapshot::Cylinder { field, cutoff: 2, step: 3, dt: 0.01 };
        assert_eq!(Snapshot::from_bytes(&s.to_bytes()).unwrap(), s);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = state().to_bytes();
        let e = Snapshot::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(e, CheckpointError::Size { .. }), "{e}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Snapshot::from_bytes(&bad).unwrap_err(), CheckpointError::Magic(_)));
        assert!(matches!(Snapshot::from_bytes(&bytes[..8]).unwrap_err(), CheckpointError::Truncated(_)));
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let s = state();
        let mut h = serde_json::to_value(s.header()).unwrap();
        h["format_version"] = 7.into();
        let hb = serde_json::to_vec(&h).unwrap();
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&(hb.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&hb);
        let msg = Snapshot::from_bytes(&bytes).unwrap_err().to_string();
        assert!(msg.contains('7') && msg.contains('1'), "{msg}");
    }
}
