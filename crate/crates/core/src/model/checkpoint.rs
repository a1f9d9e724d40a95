use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ablation::AblationConfig;
use super::params::{GraphRecParams, ModelShape};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::graphdata::hex;
use crate::scalar::Scalar;

const FORMAT: &str = "graphrec-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Self-describing JSON container for a trained model.
///
/// Values are stored as `f64` with shortest round-trip formatting, so `f64`
/// and `f32` parameters both reload bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub shape: ModelShape,
    pub ablation: AblationConfig,
    pub seed: u64,
    /// Free-form provenance (config fingerprint, best epoch, ...).
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(params: &GraphRecParams<T>, ablation: AblationConfig, seed: u64) -> Self {
        let tensors = params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| StoredTensor {
                name,
                rows: t.rows(),
                cols: t.cols(),
                values: t.to_f64_vec(),
            })
            .collect();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            scalar: T::NAME.into(),
            shape: params.shape,
            ablation,
            seed,
            meta: BTreeMap::new(),
            tensors,
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<GraphRecParams<T>> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Incompatible(format!(
                "unsupported container {} v{}",
                self.format, self.version
            )));
        }
        self.shape.validate()?;
        let mut params = GraphRecParams::<T>::zeros_like_shape(self.shape);
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.tensors.len() {
            return Err(Error::Incompatible(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((name, dst), src) in names.iter().zip(params.tensors_mut()).zip(&self.tensors) {
            if *name != src.name || dst.shape() != (src.rows, src.cols) || src.values.len() != src.rows * src.cols {
                return Err(Error::Incompatible(format!(
                    "tensor {} {:?} does not match expected {name} {:?}",
                    src.name,
                    (src.rows, src.cols),
                    dst.shape()
                )));
            }
            *dst = Tensor::from_f64(src.rows, src.cols, &src.values)?;
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let text = self.to_json()?;
        fs::write(path, &text).map_err(|e| Error::io(path, e))?;
        Ok(content_hash(text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_json(&text)?, content_hash(text.as_bytes())))
    }
}

/// Git-style object hash: SHA-256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let shape = ModelShape::new(5, 7, 5, 6);
        let p = GraphRecParams::<f64>::init(shape, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let ck = Checkpoint::from_params(&p, AblationConfig::variant("mu").unwrap(), 11);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let q: GraphRecParams<f64> = back.to_params().unwrap();
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            let bits_a: Vec<u64> = a.as_slice().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.as_slice().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn f32_round_trip() {
        let shape = ModelShape::new(3, 2, 5, 4);
        let p = GraphRecParams::<f32>::init(shape, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let ck = Checkpoint::from_params(&p, AblationConfig::FULL, 2);
        let q: GraphRecParams<f32> = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap().to_params().unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn mismatched_shape_is_incompatible() {
        let p = GraphRecParams::<f64>::init(ModelShape::new(3, 2, 5, 4), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut ck = Checkpoint::from_params(&p, AblationConfig::FULL, 2);
        ck.tensors[0].rows = 5;
        assert!(matches!(ck.to_params::<f64>(), Err(Error::Incompatible(_))));
    }

    #[test]
    fn hash_matches_git_style_framing() {
        // sha256("blob 0\0")
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
