//! Checkpoint container: `FCCK`, version, the resolved config text, best
//! epoch, seed, then named `f64` arrays (model parameters followed by the
//! scaler statistics).

use std::path::Path;

use crate::codec::{CodecError, Reader, Writer};
use crate::config::{ConfigError, ExperimentConfig};
use crate::data::ScalerStats;
use crate::model::{Model, ModelError};
use crate::numerics::{ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FCCK";
pub const CHECKPOINT_VERSION: u16 = 1;

const SCALER_MEAN: &str = "scaler.mean";
const SCALER_STD: &str = "scaler.std";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Codec { path: String, source: CodecError },
    #[error("checkpoint {path}: {message}")]
    Content { path: String, message: String },
    #[error("checkpoint {path}: embedded config: {source}")]
    Config { path: String, source: ConfigError },
    #[error("checkpoint {path}: {source}")]
    Model { path: String, source: ModelError },
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub best_epoch: u32,
    pub seed: u64,
    pub model: Model,
    pub scaler: ScalerStats,
}

fn write_record(w: &mut Writer, name: &str, t: &Tensor) {
    w.str(name);
    w.u32(t.shape().len() as u32);
    for &d in t.shape() {
        w.u32(d as u32);
    }
    for &v in t.data() {
        w.f64(v);
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        w.str(&self.config.to_text());
        w.u32(self.best_epoch);
        w.u64(self.seed);
        let params = self.model.params();
        w.u32((params.len() + 2) as u32);
        for p in params.iter() {
            write_record(&mut w, &p.name, &p.tensor);
        }
        write_record(&mut w, SCALER_MEAN, &Tensor::vector(self.scaler.mean.clone()));
        write_record(&mut w, SCALER_STD, &Tensor::vector(self.scaler.std.clone()));
        w.finish()
    }

    /// `origin` names the source in error messages.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, CheckpointError> {
        let codec = |source| CheckpointError::Codec {
            path: origin.to_string(),
            source,
        };
        let content = |message: String| CheckpointError::Content {
            path: origin.to_string(),
            message,
        };
        let mut r = Reader::with_header(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION).map_err(codec)?;
        let config_text = r.str().map_err(codec)?;
        let best_epoch = r.u32().map_err(codec)?;
        let seed = r.u64().map_err(codec)?;
        let count = r.u32().map_err(codec)? as usize;
        let mut params = ParamSet::new();
        let mut scaler_mean = None;
        let mut scaler_std = None;
        for _ in 0..count {
            let name = r.str().map_err(codec)?;
            let ndim = r.u32().map_err(codec)? as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()
                .map_err(codec)?;
            let len: usize = shape.iter().product();
            let data = (0..len)
                .map(|_| r.f64())
                .collect::<Result<Vec<_>, _>>()
                .map_err(codec)?;
            let t = Tensor::new(shape, data).map_err(|e| content(format!("record `{name}`: {e}")))?;
            match name.as_str() {
                SCALER_MEAN => scaler_mean = Some(t.into_data()),
                SCALER_STD => scaler_std = Some(t.into_data()),
                _ => {
                    params
                        .add(&name, t)
                        .map_err(|e| content(format!("record `{name}`: {e}")))?;
                }
            }
        }
        r.finish().map_err(codec)?;

        let config =
            ExperimentConfig::parse(&config_text, Path::new("/")).map_err(|source| CheckpointError::Config {
                path: origin.to_string(),
                source,
            })?;
        let model = Model::from_parameters(config.model.clone(), params).map_err(|source| CheckpointError::Model {
            path: origin.to_string(),
            source,
        })?;
        let (Some(mean), Some(std)) = (scaler_mean, scaler_std) else {
            return Err(content("missing scaler statistics".into()));
        };
        if mean.len() != config.model.num_vars || std.len() != config.model.num_vars {
            return Err(content(format!(
                "scaler covers {} variables, model expects {}",
                mean.len(),
                config.model.num_vars
            )));
        }
        Ok(Self {
            config,
            best_epoch,
            seed,
            model,
            scaler: ScalerStats { mean, std },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn sample() -> Checkpoint {
        let mut config = ExperimentConfig::parse(
            "dataset.path = /data/x.csv\ndataset.key = synthetic\nmodel.seq_len = 32\nmodel.pred_len = 4\nmodel.patch_len = 8\nmodel.stride = 4\nmodel.d_model = 8\nmodel.heads = 2\nmodel.num_vars = 2\n",
            Path::new("/"),
        )
        .unwrap();
        config.set_seed(42);
        let model = Model::new(ModelConfig { ..config.model.clone() }).unwrap();
        Checkpoint {
            config,
            best_epoch: 3,
            seed: 42,
            model,
            scaler: ScalerStats {
                mean: vec![0.1, -2.5],
                std: vec![1.0 / 3.0, 7.0],
            },
        }
    }

    fn bits(c: &Checkpoint) -> Vec<u64> {
        c.model
            .params()
            .iter()
            .flat_map(|p| p.tensor.data().iter().map(|v| v.to_bits()))
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(bits(&c), bits(&back));
        assert_eq!(back.config, c.config);
        assert_eq!(back.scaler, c.scaler);
        assert_eq!((back.best_epoch, back.seed), (3, 42));
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn version_and_truncation_rejected() {
        let mut bytes = sample().to_bytes();
        let cut = bytes[..bytes.len() - 5].to_vec();
        assert!(matches!(
            Checkpoint::from_bytes(&cut, "mem"),
            Err(CheckpointError::Codec {
                source: CodecError::Truncated { .. },
                ..
            })
        ));
        bytes[4..6].copy_from_slice(&99u16.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes, "mem"),
            Err(CheckpointError::Codec {
                source: CodecError::Version { found: 99, .. },
                ..
            })
        ));
    }
}
