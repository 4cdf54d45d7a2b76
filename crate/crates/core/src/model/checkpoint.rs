//! Self-describing binary checkpoint.
//!
//! Layout: 4-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then every tensor's values in little-endian order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dims::ModelDims;
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::interaction::FeatureScaler;
use crate::tensor::{Matrix, Real};

pub const MAGIC: &[u8; 4] = b"TSCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Section {
    name: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    dims: ModelDims,
    scaler: FeatureScaler,
    sections: Vec<Section>,
    meta: serde_json::Value,
}

/// Named tensor groups plus free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub dims: ModelDims,
    pub scaler: FeatureScaler,
    pub sections: Vec<(String, ParamStore<T>)>,
    pub meta: serde_json::Value,
}

impl<T: Real> Checkpoint<T> {
    pub fn section(&self, name: &str) -> Option<&ParamStore<T>> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn take_section(&mut self, name: &str) -> Result<ParamStore<T>> {
        let k = self
            .sections
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing section `{name}`")))?;
        Ok(self.sections.remove(k).1)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            dtype: T::DTYPE.to_string(),
            dims: self.dims.clone(),
            scaler: self.scaler,
            sections: self
                .sections
                .iter()
                .map(|(name, store)| Section {
                    name: name.clone(),
                    tensors: store
                        .iter()
                        .map(|(n, t)| TensorEntry { name: n.to_string(), rows: t.rows(), cols: t.cols() })
                        .collect(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, store) in &self.sections {
            for t in store.tensors() {
                for &v in t.data() {
                    v.write_le(&mut out);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let hend = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..hend]).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let width = match header.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(Error::Checkpoint(format!("unknown dtype `{other}`"))),
        };
        let mut cursor = hend;
        let mut sections = Vec::with_capacity(header.sections.len());
        for sec in header.sections {
            let mut store = ParamStore::default();
            for e in sec.tensors {
                let n = e.rows.checked_mul(e.cols).ok_or_else(|| corrupt("tensor too large"))?;
                let end = cursor
                    .checked_add(n * width)
                    .filter(|&x| x <= bytes.len())
                    .ok_or_else(|| corrupt("truncated payload"))?;
                let data: Vec<T> = bytes[cursor..end]
                    .chunks_exact(width)
                    .map(|ch| if width == 4 { T::of(f32::read_le(ch) as f64) } else { T::of(f64::read_le(ch)) })
                    .collect();
                cursor = end;
                store.add(e.name, Matrix::from_vec(e.rows, e.cols, data));
            }
            sections.push((sec.name, store));
        }
        if cursor != bytes.len() {
            return Err(corrupt("trailing bytes after payload"));
        }
        Ok(Self { dims: header.dims, scaler: header.scaler, sections, meta: header.meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<f32> {
        let mut a = ParamStore::default();
        a.add("w", Matrix::from_vec(2, 2, vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE]));
        a.add("b", Matrix::from_vec(1, 3, vec![0.0, 0.1, -0.0]));
        let mut b = ParamStore::default();
        b.add("v", Matrix::from_vec(1, 1, vec![7.0]));
        Checkpoint {
            dims: ModelDims::default(),
            scaler: FeatureScaler::identity(),
            sections: vec![("a".into(), a), ("b".into(), b)],
            meta: serde_json::json!({"iteration": 3}),
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let back = Checkpoint::<f32>::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.section("a").unwrap().digest(), ck.section("a").unwrap().digest());
    }

    #[test]
    fn unknown_versions_and_garbage_are_rejected() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes), Err(Error::UnsupportedVersion { found: 9, .. })));
        assert!(matches!(Checkpoint::<f32>::from_bytes(b"hello world, not a ckpt"), Err(Error::Checkpoint(_))));
        let full = sample().to_bytes().unwrap();
        assert!(Checkpoint::<f32>::from_bytes(&full[..full.len() - 1]).is_err());
    }

    #[test]
    fn f32_checkpoints_load_into_f64() {
        let back = Checkpoint::<f64>::from_bytes(&sample().to_bytes().unwrap()).unwrap();
        assert_eq!(back.section("b").unwrap().tensors()[0].data(), &[7.0]);
    }
}
