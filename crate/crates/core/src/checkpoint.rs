//! Model checkpoints: a JSON manifest next to a little-endian `f64` blob.
//!
//! The manifest records the architecture, the velocity normalizer, the
//! parameter names and shapes, the training step, and the generator state;
//! the blob holds every parameter value in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::bottleneck::{Model, ModelConfig, Normalizer};
use crate::error::{Error, Result};
use crate::rng::Rng;

const FORMAT: &str = "chaosib-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    model: ModelConfig,
    normalizer: Normalizer,
    step: u64,
    beta: f64,
    rng: Option<Rng>,
    params: Vec<ParamEntry>,
    blob: String,
    n_values: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub step: u64,
    /// β in force at `step`.
    pub beta: f64,
    /// Training generator state after `step`.
    pub rng: Option<Rng>,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

impl Checkpoint {
    /// Write `<path>` (manifest) and `<path>` with a `.bin` extension (values).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let blob = blob_path(path);
        let params = &self.model.params;
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            model: self.model.config.clone(),
            normalizer: self.model.normalizer,
            step: self.step,
            beta: self.beta,
            rng: self.rng.clone(),
            params: params
                .names
                .iter()
                .zip(&params.tensors)
                .map(|(n, t)| ParamEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            blob: blob
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            n_values: params.n_values(),
        };
        let mut bytes = Vec::with_capacity(8 * manifest.n_values);
        for t in &params.tensors {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
        let json = serde_json::to_vec_pretty(&manifest)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_slice(&text)?;
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(Error::Format(format!(
                "expected {FORMAT} version {VERSION}, found {} version {}",
                manifest.format, manifest.version
            )));
        }
        let blob = path.with_file_name(&manifest.blob);
        let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
        let expected: usize = manifest.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
        if expected != manifest.n_values || bytes.len() != 8 * expected {
            return Err(Error::PayloadLength {
                expected: 8 * expected as u64,
                actual: bytes.len() as u64,
            });
        }
        let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut names = Vec::with_capacity(manifest.params.len());
        let mut tensors = Vec::with_capacity(manifest.params.len());
        for p in manifest.params {
            let n = p.shape.iter().product();
            tensors.push(Tensor::new(p.shape, values.by_ref().take(n).collect())?);
            names.push(p.name);
        }
        let model = Model::from_parts(manifest.model, manifest.normalizer, names, tensors)?;
        Ok(Checkpoint {
            model,
            step: manifest.step,
            beta: manifest.beta,
            rng: manifest.rng,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bottleneck::Mode;
    use crate::rng::rng_from_seed;
    use rand::RngCore;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rng_from_seed(3);
        let cfg = ModelConfig {
            encoder_widths: vec![8],
            shared_widths: vec![8],
            future_widths: vec![8],
            ..ModelConfig::with_mode(Mode::Dib)
        };
        let model = Model::init(
            cfg,
            Normalizer {
                omega_mean: [0.1, -0.2],
                omega_std: [2.0, 3.0],
            },
            &mut rng,
        )
        .unwrap();
        let ck = Checkpoint {
            model,
            step: 17,
            beta: 0.25,
            rng: Some(rng.clone()),
        };
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.model.params, ck.model.params);
        assert_eq!(back.model.config, ck.model.config);
        assert_eq!(back.model.normalizer, ck.model.normalizer);
        assert_eq!((back.step, back.beta), (17, 0.25));
        assert_eq!(back.rng.unwrap().next_u64(), rng.next_u64());
    }

    #[test]
    fn truncated_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rng_from_seed(4);
        let cfg = ModelConfig {
            encoder_widths: vec![4],
            shared_widths: vec![4],
            future_widths: vec![4],
            ..ModelConfig::default()
        };
        let model = Model::init(cfg, Normalizer::default(), &mut rng).unwrap();
        let path = dir.path().join("ck.json");
        Checkpoint {
            model,
            step: 0,
            beta: 1.0,
            rng: None,
        }
        .save(&path)
        .unwrap();
        let blob = path.with_extension("bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::PayloadLength { .. })));
    }
}
