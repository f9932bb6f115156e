//! Self-describing binary checkpoint.
//!
//! Layout: 8-byte magic `ECGLCKPT`, u32 LE format version, u64 LE header
//! length, a JSON header (model description, tensor table, optimizer
//! scalars, epoch, RNG state), then every tensor's values as f64 LE in
//! table order. Values are stored by bit pattern, so save → load is exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::discriminator::Discriminator;
use crate::model::{LinearModel, Model, ViTConfig, VitModel, ViTParams, Trainable};
use crate::numerics::{OptimizerState, Tensor};

const MAGIC: &[u8; 8] = b"ECGLCKPT";
const VERSION: u32 = 1;

/// Seed and position of the training RNG streams. Every stochastic draw
/// during training derives from `(seed, epoch, ...)`, so these two values
/// are the complete generator state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<OptimizerState>,
    pub epoch: usize,
    pub rng: RngState,
    pub discriminator: Option<Discriminator>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelHeader {
    Vit { config: ViTConfig },
    Linear { window_len: usize, num_classes: usize },
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    step_count: u64,
    lr_max: f64,
    lr_min: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelHeader,
    optimizer: Option<OptimizerHeader>,
    discriminator_dropout: Option<f64>,
    epoch: usize,
    rng: RngState,
    tensors: Vec<TensorEntry>,
}

fn model_names(model: &Model) -> Vec<String> {
    match model {
        Model::Vit(m) => m.params.names(),
        Model::Linear(_) => vec!["weight".into(), "bias".into()],
    }
}

fn disc_tensors(d: &Discriminator) -> Vec<(String, Tensor)> {
    vec![
        ("disc.w1".into(), d.w1.clone()),
        ("disc.b1".into(), d.b1.clone()),
        ("disc.bn_gain".into(), d.bn_gain.clone()),
        ("disc.bn_bias".into(), d.bn_bias.clone()),
        ("disc.running_mean".into(), Tensor::from_vec(d.running_mean.clone())),
        ("disc.running_var".into(), Tensor::from_vec(d.running_var.clone())),
        ("disc.w2".into(), d.w2.clone()),
        ("disc.b2".into(), d.b2.clone()),
    ]
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            optimizer: None,
            epoch: 0,
            rng: RngState { seed: 0, epoch: 0 },
            discriminator: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let names = model_names(&self.model);
        let params = self.model.parameters();
        let mut entries: Vec<(String, &Tensor)> = names.iter().cloned().zip(params.iter().copied()).collect();
        if let Some(opt) = &self.optimizer {
            if opt.first_moment.len() != names.len() {
                return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
            }
            for (n, t) in names.iter().zip(&opt.first_moment) {
                entries.push((format!("adam.m.{n}"), t));
            }
            for (n, t) in names.iter().zip(&opt.second_moment) {
                entries.push((format!("adam.v.{n}"), t));
            }
        }
        let disc = self.discriminator.as_ref().map(disc_tensors).unwrap_or_default();
        entries.extend(disc.iter().map(|(n, t)| (n.clone(), t)));

        let header = Header {
            model: match &self.model {
                Model::Vit(m) => ModelHeader::Vit { config: m.config.clone() },
                Model::Linear(m) => ModelHeader::Linear {
                    window_len: m.window_len,
                    num_classes: m.num_classes,
                },
            },
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                step_count: o.step_count,
                lr_max: o.lr_max,
                lr_min: o.lr_min,
                weight_decay: o.weight_decay,
                beta1: o.beta1,
                beta2: o.beta2,
                epsilon: o.epsilon,
            }),
            discriminator_dropout: self.discriminator.as_ref().map(|d| d.dropout_prob),
            epoch: self.epoch,
            rng: self.rng,
            tensors: entries
                .iter()
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let payload: usize = entries.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &entries {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut cursor = 20 + hlen;
        let mut tensors = BTreeMap::new();
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            let raw = bytes.get(cursor..cursor + n * 8).ok_or_else(|| bad("truncated payload"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            cursor += n * 8;
            tensors.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
        }
        if cursor != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };

        let mut model = match header.model {
            ModelHeader::Vit { config } => {
                let params = ViTParams::init(&config, 0)?;
                Model::Vit(VitModel { config, params })
            }
            ModelHeader::Linear {
                window_len,
                num_classes,
            } => Model::Linear(LinearModel::new(window_len, num_classes, 0)?),
        };
        let names = model_names(&model);
        for (name, slot) in names.iter().zip(model.parameters_mut()) {
            let t = take(name)?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        let optimizer = match header.optimizer {
            None => None,
            Some(o) => {
                let first_moment = names.iter().map(|n| take(&format!("adam.m.{n}"))).collect::<Result<_>>()?;
                let second_moment = names.iter().map(|n| take(&format!("adam.v.{n}"))).collect::<Result<_>>()?;
                Some(OptimizerState {
                    step_count: o.step_count,
                    first_moment,
                    second_moment,
                    lr_max: o.lr_max,
                    lr_min: o.lr_min,
                    weight_decay: o.weight_decay,
                    beta1: o.beta1,
                    beta2: o.beta2,
                    epsilon: o.epsilon,
                })
            }
        };
        let discriminator = match header.discriminator_dropout {
            None => None,
            Some(dropout_prob) => Some(Discriminator {
                w1: take("disc.w1")?,
                b1: take("disc.b1")?,
                bn_gain: take("disc.bn_gain")?,
                bn_bias: take("disc.bn_bias")?,
                running_mean: take("disc.running_mean")?.into_data(),
                running_var: take("disc.running_var")?.into_data(),
                w2: take("disc.w2")?,
                b2: take("disc.b2")?,
                dropout_prob,
            }),
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Ok(Self {
            model,
            optimizer,
            epoch: header.epoch,
            rng: header.rng,
            discriminator,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"hello world, not a checkpoint").is_err());
        let ck = Checkpoint::new(Model::Linear(LinearModel::new(4, 2, 0).unwrap()));
        let mut bytes = ck.to_bytes().unwrap();
        bytes.pop();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn linear_round_trip() {
        let ck = Checkpoint::new(Model::Linear(LinearModel::new(5, 3, 4).unwrap()));
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap(), ck);
    }
}
