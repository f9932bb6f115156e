//! Classifiers, their training loop and checkpoint persistence.

pub mod checkpoint;
pub mod config;
pub mod discriminator;
pub mod linear;
pub mod train;
pub mod vit;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::Tensor;

pub use config::ViTConfig;
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use linear::LinearModel;
pub use train::{train, TrainConfig, TrainOutcome, TrainingLog};
pub use vit::{VitModel, ViTParams};

/// Anything that maps a window to class logits.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;
    fn window_len(&self) -> usize;
    fn logits(&self, window: &[f64]) -> Result<Vec<f64>>;
    /// Feature vector fed to the optional discriminator gate.
    fn embedding(&self, window: &[f64]) -> Result<Vec<f64>>;
}

/// A classifier whose parameters can be fit by gradient descent.
pub trait Trainable: Classifier + Clone {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;
    /// Cross-entropy of one window and its gradient with respect to every
    /// parameter, in `parameters()` order. `stochastic_seed` drives any
    /// training-mode randomness such as stochastic depth.
    fn loss_and_grads(
        &self,
        window: &[f64],
        target: usize,
        stochastic_seed: u64,
    ) -> Result<(f64, Vec<Vec<f64>>)>;
}

/// Model families understood by checkpoints and run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Vit(VitModel),
    Linear(LinearModel),
}

impl Classifier for Model {
    fn num_classes(&self) -> usize {
        match self {
            Model::Vit(m) => m.num_classes(),
            Model::Linear(m) => m.num_classes(),
        }
    }

    fn window_len(&self) -> usize {
        match self {
            Model::Vit(m) => m.window_len(),
            Model::Linear(m) => m.window_len(),
        }
    }

    fn logits(&self, window: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Vit(m) => m.logits(window),
            Model::Linear(m) => m.logits(window),
        }
    }

    fn embedding(&self, window: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Vit(m) => m.embedding(window),
            Model::Linear(m) => m.embedding(window),
        }
    }
}

impl Trainable for Model {
    fn parameters(&self) -> Vec<&Tensor> {
        match self {
            Model::Vit(m) => m.parameters(),
            Model::Linear(m) => m.parameters(),
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Model::Vit(m) => m.parameters_mut(),
            Model::Linear(m) => m.parameters_mut(),
        }
    }

    fn loss_and_grads(&self, window: &[f64], target: usize, seed: u64) -> Result<(f64, Vec<Vec<f64>>)> {
        match self {
            Model::Vit(m) => m.loss_and_grads(window, target, seed),
            Model::Linear(m) => m.loss_and_grads(window, target, seed),
        }
    }
}
