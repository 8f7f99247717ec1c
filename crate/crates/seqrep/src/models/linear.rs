//! Affine layers: the shared decode readout and MLP building block.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{NodeId, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weight: Tensor, // input_dim x output_dim
    pub bias: Tensor,   // output_dim
}

impl LinearParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> LinearParams {
        LinearParams {
            weight: Tensor::zeros(&[input_dim, output_dim]),
            bias: Tensor::zeros(&[output_dim]),
        }
    }

    pub fn init(input_dim: usize, output_dim: usize, bound: f64, rng: &mut impl Rng) -> LinearParams {
        let mut p = LinearParams::zeros(input_dim, output_dim);
        for v in p.weight.data_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }

    pub fn bind(
        &self,
        tape: &mut Tape,
        prefix: &str,
        trainable: bool,
        reg: &mut Vec<(String, NodeId)>,
    ) -> LinearNodes {
        let mut put = |tape: &mut Tape, name: String, t: &Tensor| {
            let id = if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            };
            reg.push((name, id));
            id
        };
        LinearNodes {
            weight: put(tape, format!("{prefix}.weight"), &self.weight),
            bias: put(tape, format!("{prefix}.bias"), &self.bias),
        }
    }

    /// Plain forward for a single row.
    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(
                "linear",
                format!("input {} vs weight {:?}", x.len(), self.weight.shape()),
            ));
        }
        let xt = Tensor::raw(vec![1, x.len()], x.to_vec());
        let mut y = xt.matmul(&self.weight)?;
        for (v, b) in y.data_mut().iter_mut().zip(self.bias.data()) {
            *v += b;
        }
        Ok(y.data().to_vec())
    }
}

#[derive(Clone, Copy)]
pub struct LinearNodes {
    pub weight: NodeId,
    pub bias: NodeId,
}

impl LinearNodes {
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let prod = tape.matmul(x, self.weight)?;
        tape.add(prod, self.bias)
    }
}
