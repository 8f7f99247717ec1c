//! Central-difference gradient checking.
//!
//! The numeric side perturbs each parameter entry and re-evaluates the loss
//! through the forward pass only, so it stays independent of the backward
//! implementation it is used to validate.

use super::tensor::Tensor;
use crate::error::Result;

/// Central finite differences of `loss` at `params`, one tensor per parameter.
pub fn central_differences<F>(loss: &mut F, params: &[Tensor], step: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut grad = Tensor::zeros(params[pi].shape());
        for ei in 0..params[pi].len() {
            let original = work[pi].data()[ei];
            work[pi].data_mut()[ei] = original + step;
            let up = loss(&work)?;
            work[pi].data_mut()[ei] = original - step;
            let down = loss(&work)?;
            work[pi].data_mut()[ei] = original;
            grad.data_mut()[ei] = (up - down) / (2.0 * step);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Largest relative disagreement between two gradient sets. The denominator
/// is floored at 1e-3 so that finite-difference noise on near-zero entries
/// does not register as error.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            let denom = av.abs().max(nv.abs()).max(1e-3);
            worst = worst.max((av - nv).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::Tape;

    #[test]
    fn matches_analytic_gradient_of_quadratic() {
        // loss = sum(p * p): gradient 2p.
        let p = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let mut f = |params: &[Tensor]| {
            let mut tape = Tape::new();
            let x = tape.leaf(params[0].clone());
            let sq = tape.mul(x, x)?;
            let loss = tape.sum(sq)?;
            tape.value(loss)?.scalar_value()
        };
        let numeric = central_differences(&mut f, std::slice::from_ref(&p), 1e-5).unwrap();
        let analytic = vec![p.scaled(2.0)];
        assert!(max_relative_error(&analytic, &numeric) < 1e-8);
    }
}
