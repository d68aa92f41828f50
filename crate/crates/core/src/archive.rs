//! Versioned binary container shared by checkpoints and expert datasets.
//!
//! Layout: `b"QPCK"`, `u32` format version, `u64` header length, a JSON
//! header, then the concatenated little-endian tensor payload. The header
//! lists every tensor (name, dtype, shape, byte offset), the config digest,
//! free-form metadata and a SHA-256 of the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::Scalar;

pub const MAGIC: &[u8; 4] = b"QPCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a quadpose archive")]
    BadMagic,
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("missing tensor '{0}'")]
    MissingTensor(String),
    #[error("tensor '{name}' has dtype {got}, expected {expected}")]
    Dtype { name: String, expected: &'static str, got: String },
    #[error("archive kind is '{got}', expected '{expected}'")]
    Kind { expected: String, got: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub config_digest: String,
    pub tensors: Vec<TensorEntry>,
    pub payload_sha256: String,
    pub meta: serde_json::Value,
}

/// In-memory archive: header plus raw payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub header: Header,
    payload: Vec<u8>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn dtype_size(dtype: &str) -> Option<usize> {
    match dtype {
        "f32" => Some(4),
        "f64" => Some(8),
        _ => None,
    }
}

impl Archive {
    pub fn new(kind: &str, config_digest: &str, meta: serde_json::Value) -> Self {
        Self {
            header: Header {
                kind: kind.to_string(),
                config_digest: config_digest.to_string(),
                tensors: Vec::new(),
                payload_sha256: String::new(),
                meta,
            },
            payload: Vec::new(),
        }
    }

    pub fn push<F: Scalar>(&mut self, name: &str, shape: &[usize], data: &[F]) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor '{name}' shape does not match data");
        assert!(self.entry(name).is_none(), "duplicate tensor '{name}'");
        let offset = self.payload.len();
        for v in data {
            match F::DTYPE {
                "f32" => self.payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                _ => self.payload.extend_from_slice(&v.as_f64().to_le_bytes()),
            }
        }
        self.header.tensors.push(TensorEntry {
            name: name.to_string(),
            dtype: F::DTYPE.to_string(),
            shape: shape.to_vec(),
            offset,
            len_bytes: self.payload.len() - offset,
        });
    }

    pub fn entry(&self, name: &str) -> Option<&TensorEntry> {
        self.header.tensors.iter().find(|t| t.name == name)
    }

    /// Tensor data and shape. The stored dtype must match `F` exactly.
    pub fn get<F: Scalar>(&self, name: &str) -> Result<(Vec<F>, Vec<usize>), ArchiveError> {
        let e = self.entry(name).ok_or_else(|| ArchiveError::MissingTensor(name.to_string()))?;
        if e.dtype != F::DTYPE {
            return Err(ArchiveError::Dtype { name: name.to_string(), expected: F::DTYPE, got: e.dtype.clone() });
        }
        let bytes = &self.payload[e.offset..e.offset + e.len_bytes];
        let data = match F::DTYPE {
            "f32" => bytes.chunks_exact(4).map(|c| F::cast_from(f64::from(f32::from_le_bytes(c.try_into().unwrap())))).collect(),
            _ => bytes.chunks_exact(8).map(|c| F::cast_from(f64::from_le_bytes(c.try_into().unwrap()))).collect(),
        };
        Ok((data, e.shape.clone()))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), ArchiveError> {
        if self.header.kind == kind {
            Ok(())
        } else {
            Err(ArchiveError::Kind { expected: kind.to_string(), got: self.header.kind.clone() })
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = self.header.clone();
        header.payload_sha256 = sha256_hex(&self.payload);
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(ArchiveError::UnsupportedVersion(version));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(ArchiveError::Corrupt("header length exceeds file".into()));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| ArchiveError::Corrupt(format!("header: {e}")))?;
        let payload = body[hlen..].to_vec();
        if sha256_hex(&payload) != header.payload_sha256 {
            return Err(ArchiveError::Corrupt("payload hash mismatch".into()));
        }
        for t in &header.tensors {
            let size = dtype_size(&t.dtype).ok_or_else(|| ArchiveError::Corrupt(format!("unknown dtype '{}'", t.dtype)))?;
            let end = t.offset.checked_add(t.len_bytes);
            if end.is_none_or(|e| e > payload.len()) || t.len_bytes != size * t.shape.iter().product::<usize>() {
                return Err(ArchiveError::Corrupt(format!("tensor '{}' out of bounds", t.name)));
            }
        }
        Ok(Self { header, payload })
    }

    /// Writes atomically via a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ArchiveError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
