//! Adaptive-moment gradient descent.
//!
//! One update rule with fixed decay constants serves every model in the
//! crate; only the learning rate is exposed to hyperparameter search.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Per-parameter first/second moment accumulators plus the step counter.
pub struct Optimizer {
    learning_rate: f64,
    step_count: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl Optimizer {
    pub fn new(learning_rate: f64) -> Optimizer {
        Optimizer {
            learning_rate,
            step_count: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. `grads` must carry exactly the parameter names in
    /// `params`; a non-finite gradient aborts the run naming the parameter.
    /// Moments are updated before the parameters, and the whole step is
    /// deterministic given the current state.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Tensor)],
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Invalid(format!(
                "optimizer step: {} params but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (name, _) in params.iter() {
            if !grads.contains_key(name) {
                return Err(Error::Invalid(format!(
                    "optimizer step: missing gradient for {name}"
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);

        for (name, param) in params.iter_mut() {
            let grad = &grads[name.as_str()];
            if grad.shape() != param.shape() {
                return Err(Error::shape(
                    "optimizer step",
                    format!(
                        "{name}: gradient {:?} vs parameter {:?}",
                        grad.shape(),
                        param.shape()
                    ),
                ));
            }
            grad.check_finite(name)
                .map_err(|_| Error::NonFinite(format!("gradient for parameter {name}")))?;

            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.shape()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.shape()));
            for ((pv, mv), (vv, gv)) in param
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut().iter_mut().zip(grad.data()))
            {
                *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
                *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
                let m_hat = *mv / bias1;
                let v_hat = *vv / bias2;
                *pv -= self.learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, value: f64) -> (BTreeMap<String, Tensor>, Tensor) {
        let mut grads = BTreeMap::new();
        grads.insert(name.to_string(), Tensor::scalar(value));
        (grads, Tensor::scalar(0.0))
    }

    #[test]
    fn zero_gradients_leave_fresh_params_unchanged() {
        let mut opt = Optimizer::new(0.1);
        let (grads, mut p) = single("w", 0.0);
        let before = p.clone();
        opt.step(&mut [("w".into(), &mut p)], &grads).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_is_about_learning_rate() {
        // Hand evaluation of the update rule: with g = 1 the bias-corrected
        // moments give m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
        let mut opt = Optimizer::new(0.1);
        let (grads, mut p) = single("w", 1.0);
        opt.step(&mut [("w".into(), &mut p)], &grads).unwrap();
        let moved = -p.scalar_value().unwrap();
        assert!((moved - 0.1).abs() < 1e-6, "step was {moved}");
    }

    #[test]
    fn identical_params_with_identical_grads_stay_identical() {
        let mut opt = Optimizer::new(0.05);
        let mut a = Tensor::from_vec(&[2], vec![0.4, -0.2]).unwrap();
        let mut b = a.clone();
        let mut grads = BTreeMap::new();
        let g = Tensor::from_vec(&[2], vec![0.3, 0.9]).unwrap();
        grads.insert("a".to_string(), g.clone());
        grads.insert("b".to_string(), g);
        for _ in 0..7 {
            opt.step(&mut [("a".into(), &mut a), ("b".into(), &mut b)], &grads)
                .unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut opt = Optimizer::new(0.1);
        let mut grads = BTreeMap::new();
        grads.insert(
            "w_bad".to_string(),
            Tensor::raw(vec![1], vec![f64::INFINITY]),
        );
        let mut p = Tensor::scalar(0.0);
        let err = opt.step(&mut [("w_bad".into(), &mut p)], &grads).unwrap_err();
        assert!(err.to_string().contains("w_bad"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn mismatched_keys_are_rejected() {
        let mut opt = Optimizer::new(0.1);
        let (grads, mut p) = single("w", 1.0);
        let err = opt.step(&mut [("v".into(), &mut p)], &grads).unwrap_err();
        assert!(err.to_string().contains('v'));
    }
}
