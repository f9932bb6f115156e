//! Linear-softmax baseline over raw window samples, used to exercise the
//! attack harness cheaply.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Classifier, Trainable};
use crate::numerics::{Tape, Tensor};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub window_len: usize,
    pub num_classes: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearModel {
    pub fn new(window_len: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if window_len == 0 || num_classes == 0 {
            return Err(Error::Config("linear model needs positive window_len and num_classes".into()));
        }
        use rand::Rng;
        let mut rng = seed::rng(seed);
        let s = 1.0 / (window_len as f64).sqrt();
        let weight = (0..window_len * num_classes).map(|_| rng.random_range(-s..=s)).collect();
        Ok(Self {
            window_len,
            num_classes,
            weight: Tensor::new(vec![num_classes, window_len], weight)?,
            bias: Tensor::zeros(&[num_classes]),
        })
    }

    fn check(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.window_len {
            return Err(Error::Input(format!(
                "window has {} samples, model expects {}",
                window.len(),
                self.window_len
            )));
        }
        Ok(())
    }
}

impl Classifier for LinearModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn window_len(&self) -> usize {
        self.window_len
    }

    fn logits(&self, window: &[f64]) -> Result<Vec<f64>> {
        self.check(window)?;
        Ok((0..self.num_classes)
            .map(|c| {
                self.weight.row(c).iter().zip(window).map(|(w, x)| w * x).sum::<f64>() + self.bias.data()[c]
            })
            .collect())
    }

    fn embedding(&self, window: &[f64]) -> Result<Vec<f64>> {
        self.check(window)?;
        Ok(window.to_vec())
    }
}

impl Trainable for LinearModel {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn loss_and_grads(&self, window: &[f64], target: usize, _seed: u64) -> Result<(f64, Vec<Vec<f64>>)> {
        self.check(window)?;
        let mut tape = Tape::new();
        let w = tape.leaf(self.weight.clone(), true);
        let b = tape.leaf(self.bias.clone(), true);
        let x = tape.constant(Tensor::new(vec![1, self.window_len], window.to_vec())?);
        let z = tape.matmul_nt(x, w)?;
        let z = tape.add_row(z, b)?;
        let loss = tape.cross_entropy(z, &[target])?;
        tape.backward(loss)?;
        let value = tape.scalar(loss);
        Ok((value, vec![tape.take_grad(w).unwrap(), tape.take_grad(b).unwrap()]))
    }
}
