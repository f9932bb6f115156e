use crate::error::Result;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

/// Central-difference step used on unit-scale inputs.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
///
/// The floor keeps coordinates whose true derivative is zero from dividing
/// rounding noise by zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Worst relative error between the reverse-mode gradient of a scalar
/// function and central finite differences, over every input coordinate.
///
/// `f` records the function on a fresh tape given the input leaves and
/// returns its scalar output.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_floor(f, inputs, step, 1e-8)
}

pub fn grad_check_floor<F>(f: F, inputs: &[Tensor], step: f64, floor: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| tape.grad(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (ti, grads) in analytic.iter().enumerate() {
        for j in 0..inputs[ti].len() {
            let orig = inputs[ti].data()[j];
            probe[ti].data_mut()[j] = orig + step;
            let plus = eval(&probe)?;
            probe[ti].data_mut()[j] = orig - step;
            let minus = eval(&probe)?;
            probe[ti].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(grads[j], numeric, floor));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = grad_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.sum(sq))
            },
            &[Tensor::from_vec(vec![3.0])],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-8, "{err}");
    }
}
