//! Dense tensors, reverse-mode gradients, AdamW and the learning-rate
//! schedule.

pub mod gradcheck;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, relative_error};
pub use optim::{adamw_step, cosine_lr, LrSchedule, OptimizerState};
pub use tape::{BatchStats, Tape, Var};
pub use tensor::{softmax, Tensor};
