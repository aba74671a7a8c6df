//! Checkpoint files: one JSON header line followed by little-endian f64 weights
//! in parameter registration order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::rng::sha256_hex;

pub const FORMAT: &str = "shapeedit-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub layout: Vec<(String, Vec<usize>)>,
    pub meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub weights: Vec<f64>,
}

impl Checkpoint {
    pub fn new(kind: &str, params: &ParamSet, meta: serde_json::Value) -> Self {
        Self {
            header: Header {
                format: FORMAT.into(),
                version: VERSION,
                kind: kind.into(),
                layout: params.layout(),
                meta,
            },
            weights: params.flatten(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.header)?;
        out.push(b'\n');
        out.reserve(self.weights.len() * 8);
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("checkpoint header is not terminated".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..nl])?;
        if header.format != FORMAT {
            return Err(Error::Format(format!(
                "not a checkpoint (format {:?})",
                header.format
            )));
        }
        if header.version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                header.version
            )));
        }
        let body = &bytes[nl + 1..];
        if body.len() % 8 != 0 {
            return Err(Error::Format(
                "weight block is not a whole number of f64 values".into(),
            ));
        }
        let weights: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let expected: usize = header
            .layout
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        if expected != weights.len() {
            return Err(Error::Format(format!(
                "layout needs {expected} weights, file has {}",
                weights.len()
            )));
        }
        Ok(Self { header, weights })
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind == kind {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "expected a {kind} checkpoint, found {}",
                self.header.kind
            )))
        }
    }

    /// Loads the weights into `params`, checking the layout matches.
    pub fn restore(&self, params: &mut ParamSet) -> Result<()> {
        if params.layout() != self.header.layout {
            return Err(Error::Format(
                "checkpoint layout does not match the model".into(),
            ));
        }
        params.load_flat(&self.weights)
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use shapeedit_autodiff::Tensor;

    fn sample() -> (ParamSet, Checkpoint) {
        let mut ps = ParamSet::new();
        ps.add(
            "w",
            Tensor::matrix(2, 2, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
        );
        ps.add("b", Tensor::vector(vec![std::f64::consts::PI]));
        let ck = Checkpoint::new("test", &ps, serde_json::json!({"seed": 3}));
        (ps, ck)
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let (mut ps, ck) = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.hash().unwrap(), ck.hash().unwrap());
        ps.load_flat(&[0.0; 5]).unwrap();
        back.restore(&mut ps).unwrap();
        assert_eq!(ps.flatten()[3], 1e300);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (_, ck) = sample();
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"{}").is_err());
        let mut other = ck.clone();
        other.header.version = 99;
        assert!(Checkpoint::from_bytes(&other.to_bytes().unwrap()).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
