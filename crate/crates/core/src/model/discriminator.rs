//! Known/unknown discriminator over class-token embeddings:
//! linear(128) → batch norm → ReLU → dropout(0.3) → linear(2).
//!
//! Optional alternative to the confidence-threshold gate. Output index 0 is
//! "known", index 1 is "unknown".

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{adamw_step, BatchStats, OptimizerState, Tape, Tensor, Var};
use crate::seed;

pub const HIDDEN: usize = 128;
pub const DROPOUT: f64 = 0.3;
const MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub w1: Tensor,
    pub b1: Tensor,
    pub bn_gain: Tensor,
    pub bn_bias: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub w2: Tensor,
    pub b2: Tensor,
    pub dropout_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub enabled: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

struct Vars {
    w1: Var,
    b1: Var,
    gain: Var,
    bias: Var,
    w2: Var,
    b2: Var,
}

impl Discriminator {
    pub fn new(embed_dim: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut uniform = |shape: &[usize], fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-s..=s)).collect()).unwrap()
        };
        Self {
            w1: uniform(&[HIDDEN, embed_dim], embed_dim),
            b1: uniform(&[HIDDEN], embed_dim),
            bn_gain: Tensor::full(&[HIDDEN], 1.0),
            bn_bias: Tensor::zeros(&[HIDDEN]),
            running_mean: vec![0.0; HIDDEN],
            running_var: vec![1.0; HIDDEN],
            w2: uniform(&[2, HIDDEN], HIDDEN),
            b2: uniform(&[2], HIDDEN),
            dropout_prob: DROPOUT,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.w1.shape()[1]
    }

    fn register(&self, tape: &mut Tape, rg: bool) -> Vars {
        Vars {
            w1: tape.leaf(self.w1.clone(), rg),
            b1: tape.leaf(self.b1.clone(), rg),
            gain: tape.leaf(self.bn_gain.clone(), rg),
            bias: tape.leaf(self.bn_bias.clone(), rg),
            w2: tape.leaf(self.w2.clone(), rg),
            b2: tape.leaf(self.b2.clone(), rg),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.bn_gain, &mut self.bn_bias, &mut self.w2, &mut self.b2]
    }

    fn graph<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &Vars,
        x: Var,
        training: Option<&mut R>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let h = tape.matmul_nt(x, vars.w1)?;
        let h = tape.add_row(h, vars.b1)?;
        let (h, stats) = match training {
            Some(rng) => {
                let (h, stats) = tape.batch_norm(h, vars.gain, vars.bias, None)?;
                let h = tape.relu(h);
                let keep = 1.0 - self.dropout_prob;
                let n = tape.value(h).len();
                let mask: Vec<f64> = (0..n)
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mask = tape.constant(Tensor::new(tape.value(h).shape().to_vec(), mask)?);
                (tape.mul(h, mask)?, Some(stats))
            }
            None => {
                let running = BatchStats {
                    mean: self.running_mean.clone(),
                    var: self.running_var.clone(),
                };
                let (h, _) = tape.batch_norm(h, vars.gain, vars.bias, Some(&running))?;
                (tape.relu(h), None)
            }
        };
        let out = tape.matmul_nt(h, vars.w2)?;
        Ok((tape.add_row(out, vars.b2)?, stats))
    }

    /// Evaluation-mode logits `[known, unknown]` for one embedding, using the
    /// running statistics.
    pub fn forward(&self, embedding: &[f64]) -> Result<[f64; 2]> {
        if embedding.len() != self.embed_dim() {
            return Err(Error::Input(format!(
                "embedding has {} values, discriminator expects {}",
                embedding.len(),
                self.embed_dim()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let x = tape.constant(Tensor::new(vec![1, embedding.len()], embedding.to_vec())?);
        let (out, _) = self.graph::<rand_chacha::ChaCha8Rng>(&mut tape, &vars, x, None)?;
        let v = tape.value(out).data();
        Ok([v[0], v[1]])
    }

    /// Training-mode logits for a batch; updates the running statistics.
    pub fn forward_train<R: Rng + ?Sized>(&mut self, batch: &[Vec<f64>], rng: &mut R) -> Result<Vec<[f64; 2]>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let x = tape.constant(Tensor::from_rows(batch));
        let (out, stats) = self.graph(&mut tape, &vars, x, Some(rng))?;
        self.update_running(stats.as_ref());
        Ok(tape.value(out).data().chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    fn update_running(&mut self, stats: Option<&BatchStats>) {
        if let Some(s) = stats {
            for i in 0..HIDDEN {
                self.running_mean[i] = (1.0 - MOMENTUM) * self.running_mean[i] + MOMENTUM * s.mean[i];
                self.running_var[i] = (1.0 - MOMENTUM) * self.running_var[i] + MOMENTUM * s.var[i];
            }
        }
    }

    /// True when the unknown logit wins.
    pub fn rejects(&self, embedding: &[f64]) -> Result<bool> {
        let [known, unknown] = self.forward(embedding)?;
        Ok(unknown > known)
    }

    /// Fits the discriminator with Adam on `known` (class 0) versus
    /// `unknown` (class 1) embeddings.
    pub fn fit(known: &[Vec<f64>], unknown: &[Vec<f64>], config: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        let dim = known.first().or(unknown.first()).map(Vec::len).ok_or_else(|| {
            Error::Config("discriminator needs training embeddings".into())
        })?;
        if known.is_empty() || unknown.is_empty() {
            return Err(Error::Config("discriminator needs both known and unknown examples".into()));
        }
        let mut model = Self::new(dim, seed::derive(seed, "discriminator-init"));
        let mut examples: Vec<(&Vec<f64>, usize)> =
            known.iter().map(|e| (e, 0)).chain(unknown.iter().map(|e| (e, 1))).collect();
        let params: Vec<&Tensor> = vec![&model.w1, &model.b1, &model.bn_gain, &model.bn_bias, &model.w2, &model.b2];
        let mut state = OptimizerState::new(&params, config.lr, config.lr, 0.0);
        let batch = config.batch_size.max(2);
        for epoch in 0..config.epochs {
            let mut order_rng = seed::rng(seed::derive_indexed(seed, "discriminator-shuffle", &[epoch as u64]));
            examples.shuffle(&mut order_rng);
            for (b, chunk) in examples.chunks(batch).enumerate() {
                if chunk.len() < 2 {
                    continue;
                }
                let mut rng =
                    seed::rng(seed::derive_indexed(seed, "discriminator-dropout", &[epoch as u64, b as u64]));
                let mut tape = Tape::new();
                let vars = model.register(&mut tape, true);
                let rows: Vec<Vec<f64>> = chunk.iter().map(|(e, _)| (*e).clone()).collect();
                let targets: Vec<usize> = chunk.iter().map(|(_, t)| *t).collect();
                let x = tape.constant(Tensor::from_rows(&rows));
                let (out, stats) = model.graph(&mut tape, &vars, x, Some(&mut rng))?;
                let loss = tape.cross_entropy(out, &targets)?;
                tape.backward(loss)?;
                let grads: Vec<Vec<f64>> = [vars.w1, vars.b1, vars.gain, vars.bias, vars.w2, vars.b2]
                    .iter()
                    .map(|v| tape.take_grad(*v).unwrap_or_else(|| vec![0.0; tape.value(*v).len()]))
                    .collect();
                model.update_running(stats.as_ref());
                let mut ps = model.tensors_mut();
                adamw_step(&mut ps, &grads, &mut state, config.lr)?;
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut d = Discriminator::new(4, 0);
        for t in d.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        assert_eq!(d.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let d = Discriminator::new(3, 1);
        let e = [0.5, -0.2, 0.9];
        assert_eq!(d.forward(&e).unwrap(), d.forward(&e).unwrap());
        assert!(d.forward(&e[..2]).is_err());
    }

    #[test]
    fn hand_arithmetic_single_example() {
        // Hidden unit 0 sees 2·x0 + 1; all other units are zero. Running
        // stats are the initial (0, 1).
        let mut d = Discriminator::new(2, 0);
        for t in d.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        d.w1.data_mut()[0] = 2.0;
        d.b1.data_mut()[0] = 1.0;
        d.bn_gain.data_mut()[0] = 1.5;
        d.bn_bias.data_mut()[0] = 0.25;
        d.w2.data_mut()[0] = 1.0; // known <- unit 0
        d.w2.data_mut()[HIDDEN] = -2.0; // unknown <- unit 0
        d.b2.data_mut()[1] = 0.5;
        let h = 2.0 * 0.75 + 1.0;
        let bn = 1.5 * h / (1.0f64 + 1e-5).sqrt() + 0.25;
        let [k, u] = d.forward(&[0.75, 9.0]).unwrap();
        assert!((k - bn).abs() < 1e-12);
        assert!((u - (-2.0 * bn + 0.5)).abs() < 1e-12);
        assert!(!d.rejects(&[0.75, 9.0]).unwrap());
    }

    #[test]
    fn running_stats_move_only_in_training() {
        let mut d = Discriminator::new(2, 3);
        let before = d.running_mean.clone();
        d.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(d.running_mean, before);
        let batch = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]];
        d.forward_train(&batch, &mut seed::rng(0)).unwrap();
        assert_ne!(d.running_mean, before);
    }

    #[test]
    fn learns_separable_embeddings() {
        let known: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0 + 0.01 * i as f64, 0.5]).collect();
        let unknown: Vec<Vec<f64>> = (0..40).map(|i| vec![-1.0 - 0.01 * i as f64, 0.5]).collect();
        let cfg = DiscriminatorConfig {
            enabled: true,
            epochs: 60,
            batch_size: 16,
            lr: 1e-2,
        };
        let d = Discriminator::fit(&known, &unknown, &cfg, 9).unwrap();
        assert!(!d.rejects(&[1.2, 0.5]).unwrap());
        assert!(d.rejects(&[-1.2, 0.5]).unwrap());
    }
}
