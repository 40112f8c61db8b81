//! Binary checkpoint format.
//!
//! ```text
//! "FLND" | version u16 | width count u16 | widths u32 ... | activation u8 | loss u8
//!        | params f64 ... | crc32 u32
//! ```
//!
//! Integers and floats are little-endian. The CRC covers every byte before it.

use std::fs;
use std::path::Path;

use flatlab_core::{Activation, LossKind, ModelSpec, ParamVector};

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"FLND";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {found}, this build reads up to {supported}")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("checkpoint CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl CheckpointError {
    pub fn code(&self) -> &'static str {
        match self {
            CheckpointError::BadMagic => "bad-magic",
            CheckpointError::UnsupportedVersion { .. } => "unsupported-version",
            CheckpointError::CrcMismatch { .. } => "crc-mismatch",
            CheckpointError::Truncated(_) => "truncated",
            CheckpointError::Malformed(_) => "malformed",
        }
    }
}

/// Architecture plus parameters. The init seed is not stored and loads as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn new(spec: ModelSpec, params: ParamVector) -> flatlab_core::Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(flatlab_core::Error::dim("checkpoint params", spec.param_count(), params.len()));
        }
        Ok(Self { spec, params })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let widths = &self.spec.layer_widths;
        let mut out = Vec::with_capacity(16 + 4 * widths.len() + 8 * self.params.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(widths.len() as u16).to_le_bytes());
        for &w in widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.push(self.spec.activation.code());
        out.push(self.spec.loss_kind.code());
        for &p in self.params.iter() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() {
            return Err(CheckpointError::Truncated(format!("{} bytes", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 6 {
            return Err(CheckpointError::Truncated("missing version".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version > FORMAT_VERSION || version == 0 {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 {
            return Err(CheckpointError::Truncated(format!("{} bytes", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CheckpointError::CrcMismatch { stored, computed });
        }

        let mut r = Reader { buf: body, at: 6 };
        let count = u16::from_le_bytes(r.take::<2>()?) as usize;
        let mut widths = Vec::with_capacity(count);
        for _ in 0..count {
            widths.push(u32::from_le_bytes(r.take::<4>()?) as usize);
        }
        let [act] = r.take::<1>()?;
        let [loss] = r.take::<1>()?;
        let activation =
            Activation::from_code(act).ok_or_else(|| CheckpointError::Malformed(format!("activation code {act}")))?;
        let loss_kind =
            LossKind::from_code(loss).ok_or_else(|| CheckpointError::Malformed(format!("loss code {loss}")))?;
        let spec = ModelSpec::new(widths, activation, loss_kind);
        spec.validate().map_err(|e| CheckpointError::Malformed(e.to_string()))?;

        let rest = &body[r.at..];
        let expected = spec.param_count();
        if rest.len() != 8 * expected {
            return Err(CheckpointError::Malformed(format!(
                "{} parameter bytes, architecture needs {}",
                rest.len(),
                8 * expected
            )));
        }
        let params = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            spec,
            params: ParamVector::new(params),
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let end = self.at + N;
        let chunk = self
            .buf
            .get(self.at..end)
            .ok_or_else(|| CheckpointError::Malformed("header runs past the end".into()))?;
        self.at = end;
        Ok(chunk.try_into().expect("length checked"))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}
