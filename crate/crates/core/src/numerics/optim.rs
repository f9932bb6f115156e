use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// AdamW hyperparameters and per-parameter moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    /// Zeroed moments shaped like `params`, with the conventional Adam
    /// constants β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(params: &[&Tensor], lr_max: f64, lr_min: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            lr_max,
            lr_min,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One decoupled-weight-decay Adam step at learning rate `lr`.
///
/// Gradients are checked for finiteness before anything is modified, so a
/// failed step leaves both parameters and state untouched.
pub fn adamw_step(
    params: &mut [&mut Tensor],
    grads: &[Vec<f64>],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Dimension {
            op: "adamw_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len(), state.first_moment.len()],
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.len() != g.len() || p.shape() != m.shape() {
            return Err(Error::Dimension {
                op: "adamw_step",
                lhs: p.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite gradient, step aborted".into()));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps, wd) = (state.beta1, state.beta2, state.epsilon, state.weight_decay);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p[i]);
        }
    }
    Ok(())
}

/// Step budget of a warmup + cosine decay schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LrSchedule {
    pub fn new(total_steps: usize, warmup_steps: usize) -> Result<Self> {
        if total_steps == 0 || warmup_steps >= total_steps {
            return Err(Error::Parameter(format!(
                "schedule needs 0 <= warmup ({warmup_steps}) < total ({total_steps})"
            )));
        }
        Ok(Self {
            total_steps,
            warmup_steps,
        })
    }

    /// Warmup covering `fraction` of the steps, rounded down.
    pub fn with_warmup_fraction(total_steps: usize, fraction: f64) -> Result<Self> {
        let warmup = (total_steps as f64 * fraction).floor() as usize;
        Self::new(total_steps, warmup.min(total_steps.saturating_sub(1)))
    }
}

/// Linear warmup to `lr_max`, then cosine decay to `lr_min` at `total_steps`.
pub fn cosine_lr(step: usize, schedule: &LrSchedule, lr_max: f64, lr_min: f64) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(Error::Schedule {
            step,
            total: schedule.total_steps,
        });
    }
    if step < schedule.warmup_steps {
        return Ok(lr_max * step as f64 / schedule.warmup_steps as f64);
    }
    let decay = (schedule.total_steps - schedule.warmup_steps) as f64;
    let progress = (step - schedule.warmup_steps) as f64 / decay;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_only_step() {
        let mut p = Tensor::from_vec(vec![1.0]);
        let mut st = OptimizerState::new(&[&p], 0.1, 0.0, 0.5);
        adamw_step(&mut [&mut p], &[vec![0.0]], &mut st, 0.1).unwrap();
        assert!((p.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = Tensor::from_vec(vec![1.0, 2.0]);
        let mut st = OptimizerState::new(&[&p], 0.1, 0.0, 0.0);
        let err = adamw_step(&mut [&mut p], &[vec![f64::NAN, 0.0]], &mut st, 0.1);
        assert!(matches!(err, Err(Error::Numerical(_))));
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::new(100, 10).unwrap();
        assert_eq!(cosine_lr(10, &s, 1e-3, 1e-5).unwrap(), 1e-3);
        assert!((cosine_lr(100, &s, 1e-3, 1e-5).unwrap() - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(55, &s, 2.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_lr(0, &s, 1.0, 0.0).unwrap(), 0.0);
        assert!(matches!(cosine_lr(101, &s, 1.0, 0.0), Err(Error::Schedule { .. })));
    }

    #[test]
    fn no_warmup_starts_at_max() {
        let s = LrSchedule::new(10, 0).unwrap();
        assert_eq!(cosine_lr(0, &s, 0.5, 0.0).unwrap(), 0.5);
        assert!(LrSchedule::new(10, 10).is_err());
    }
}
