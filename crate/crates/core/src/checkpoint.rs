//! Binary checkpoints of the perturbation `f = u - v_0`.
//!
//! Layout (little-endian): magic `KFLW`, version `u32`, `d`, `n_transverse`,
//! `n_z` as `u32`, `l_z` and `t` as `f64`, then the real-space samples as
//! `f64` with z the slowest index (the in-memory order of [`RealField`]).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, RealField};

pub const MAGIC: &[u8; 4] = b"KFLW";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 8 * 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub d: u32,
    pub n_transverse: u32,
    pub n_z: u32,
    pub l_z: f64,
    pub t: f64,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn new(f: &RealField, t: f64) -> Checkpoint {
        Checkpoint {
            d: f.spec.d as u32,
            n_transverse: f.spec.n_transverse as u32,
            n_z: f.spec.n_z as u32,
            l_z: f.spec.l_z,
            t,
            values: f.values.clone(),
        }
    }

    /// Rebuilds the field on a grid with the given dealiasing flag.
    pub fn field(&self, dealias: bool) -> Result<RealField> {
        let spec = GridSpec {
            d: self.d as usize,
            n_transverse: self.n_transverse as usize,
            l_z: self.l_z,
            n_z: self.n_z as usize,
            dealias,
        };
        spec.validate()?;
        if spec.node_count() != self.values.len() {
            return Err(Error::Checkpoint("sample count does not match header".into()));
        }
        Ok(RealField {
            spec,
            values: self.values.clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        b.extend_from_slice(MAGIC);
        for v in [VERSION, self.d, self.n_transverse, self.n_z] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.l_z.to_le_bytes());
        b.extend_from_slice(&self.t.to_le_bytes());
        for v in &self.values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Checkpoint> {
        if b.len() < HEADER_LEN || &b[..4] != MAGIC {
            return Err(Error::Checkpoint("missing KFLW header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let body = &b[HEADER_LEN..];
        if body.len() % 8 != 0 {
            return Err(Error::Checkpoint("truncated sample block".into()));
        }
        Ok(Checkpoint {
            d: u32_at(8),
            n_transverse: u32_at(12),
            n_z: u32_at(16),
            l_z: f64_at(20),
            t: f64_at(28),
            values: body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}
