//! The LSTM cell shared by every sequence encoder and decoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{NodeId, Tape, Tensor};

/// Gate order used throughout: input, forget, candidate, output.
pub const GATES: usize = 4;

/// Weights for one LSTM cell. Input-to-gate matrices are stored
/// `input_dim x hidden_dim` so a batched step is a plain row-major matmul;
/// the parameter count is the usual 4 * (d*m + m*m + m).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_in: [Tensor; 4],
    pub w_rec: [Tensor; 4],
    pub bias: [Tensor; 4],
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> LstmParams {
        let wi = || Tensor::zeros(&[input_dim, hidden_dim]);
        let wr = || Tensor::zeros(&[hidden_dim, hidden_dim]);
        let b = || Tensor::zeros(&[hidden_dim]);
        LstmParams {
            input_dim,
            hidden_dim,
            w_in: [wi(), wi(), wi(), wi()],
            w_rec: [wr(), wr(), wr(), wr()],
            bias: [b(), b(), b(), b()],
        }
    }

    /// Seeded uniform init in [-1/sqrt(m), 1/sqrt(m)]; biases start at zero.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> LstmParams {
        let mut p = LstmParams::zeros(input_dim, hidden_dim);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        for k in 0..GATES {
            for v in p.w_in[k].data_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
            for v in p.w_rec[k].data_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        p
    }

    pub fn param_count(&self) -> usize {
        GATES * (self.input_dim * self.hidden_dim + self.hidden_dim * self.hidden_dim + self.hidden_dim)
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for k in 0..GATES {
            out.push((format!("{prefix}.w_in.{k}"), &self.w_in[k]));
            out.push((format!("{prefix}.w_rec.{k}"), &self.w_rec[k]));
            out.push((format!("{prefix}.bias.{k}"), &self.bias[k]));
        }
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        for (k, (wi, (wr, b))) in self
            .w_in
            .iter_mut()
            .zip(self.w_rec.iter_mut().zip(self.bias.iter_mut()))
            .enumerate()
        {
            out.push((format!("{prefix}.w_in.{k}"), wi));
            out.push((format!("{prefix}.w_rec.{k}"), wr));
            out.push((format!("{prefix}.bias.{k}"), b));
        }
    }

    /// Registers the parameters on a tape. `reg` collects (name, node) pairs
    /// for gradient extraction after backward.
    pub fn bind(
        &self,
        tape: &mut Tape,
        prefix: &str,
        trainable: bool,
        reg: &mut Vec<(String, NodeId)>,
    ) -> LstmNodes {
        let mut put = |tape: &mut Tape, name: String, t: &Tensor| {
            let id = if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            };
            reg.push((name, id));
            id
        };
        let mut w_in = [None; 4];
        let mut w_rec = [None; 4];
        let mut bias = [None; 4];
        for k in 0..GATES {
            w_in[k] = Some(put(tape, format!("{prefix}.w_in.{k}"), &self.w_in[k]));
            w_rec[k] = Some(put(tape, format!("{prefix}.w_rec.{k}"), &self.w_rec[k]));
            bias[k] = Some(put(tape, format!("{prefix}.bias.{k}"), &self.bias[k]));
        }
        LstmNodes {
            w_in: w_in.map(Option::unwrap),
            w_rec: w_rec.map(Option::unwrap),
            bias: bias.map(Option::unwrap),
        }
    }
}

/// Tape handles for one cell's parameters.
#[derive(Clone, Copy)]
pub struct LstmNodes {
    pub w_in: [NodeId; 4],
    pub w_rec: [NodeId; 4],
    pub bias: [NodeId; 4],
}

impl LstmNodes {
    /// One recurrence step over a batch: `x` is [B, input_dim], `h` and `c`
    /// are [B, hidden_dim]. Sigmoid gates, tanh candidate and output squash.
    pub fn step(
        &self,
        tape: &mut Tape,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let mut pre = [None; 4];
        for k in 0..GATES {
            let xin = tape.matmul(x, self.w_in[k])?;
            let rec = tape.matmul(h, self.w_rec[k])?;
            let lin = tape.add(xin, rec)?;
            pre[k] = Some(tape.add(lin, self.bias[k])?);
        }
        let gate_i = tape.sigmoid(pre[0].unwrap())?;
        let gate_f = tape.sigmoid(pre[1].unwrap())?;
        let cand = tape.tanh(pre[2].unwrap())?;
        let gate_o = tape.sigmoid(pre[3].unwrap())?;
        let keep = tape.mul(gate_f, c)?;
        let write = tape.mul(gate_i, cand)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next)?;
        let h_next = tape.mul(gate_o, squashed)?;
        Ok((h_next, c_next))
    }
}

/// Single-vector LSTM step. Shapes must match the cell's declared dims.
pub fn lstm_step(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    params: &LstmParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != params.input_dim || h.len() != params.hidden_dim || c.len() != params.hidden_dim {
        return Err(Error::shape(
            "lstm_step",
            format!(
                "x {} h {} c {} vs dims ({}, {})",
                x.len(),
                h.len(),
                c.len(),
                params.input_dim,
                params.hidden_dim
            ),
        ));
    }
    let mut tape = Tape::new();
    let mut reg = Vec::new();
    let nodes = params.bind(&mut tape, "cell", false, &mut reg);
    let xn = tape.constant(Tensor::raw(vec![1, x.len()], x.to_vec()));
    let hn = tape.constant(Tensor::raw(vec![1, h.len()], h.to_vec()));
    let cn = tape.constant(Tensor::raw(vec![1, c.len()], c.to_vec()));
    let (h2, c2) = nodes.step(&mut tape, xn, hn, cn)?;
    Ok((
        tape.value(h2)?.data().to_vec(),
        tape.value(c2)?.data().to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_and_state_stay_at_zero() {
        let p = LstmParams::zeros(3, 2);
        let (h, c) = lstm_step(&[0.7, -1.2, 0.4], &[0.0, 0.0], &[0.0, 0.0], &p).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
        // Repeated application is a fixed point.
        let (h, c) = lstm_step(&[0.0, 0.0, 0.0], &h, &c, &p).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_cell_matches_hand_computed_oracle() {
        // d = m = 1, weights 1, biases 0, x = 1, h = c = 0: every gate
        // pre-activation equals 1, so i = f = o = sigmoid(1), g = tanh(1),
        // c' = i * g, h' = o * tanh(c'). Frozen from that derivation.
        let mut p = LstmParams::zeros(1, 1);
        for k in 0..GATES {
            p.w_in[k].data_mut()[0] = 1.0;
            p.w_rec[k].data_mut()[0] = 1.0;
        }
        let (h, c) = lstm_step(&[1.0], &[0.0], &[0.0], &p).unwrap();
        let sig1 = 1.0 / (1.0 + (-1.0f64).exp());
        let c_expect = sig1 * 1.0f64.tanh();
        let h_expect = sig1 * c_expect.tanh();
        assert!((c[0] - c_expect).abs() < 1e-12);
        assert!((h[0] - h_expect).abs() < 1e-12);
        // The same numbers to five decimals.
        assert!((c[0] - 0.55677).abs() < 1e-5);
        assert!((h[0] - 0.36961).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_step(&[1.0], &[0.0, 0.0], &[0.0, 0.0], &p).is_err());
    }

    #[test]
    fn param_count_formula() {
        let p = LstmParams::zeros(5, 7);
        let mut names = Vec::new();
        p.visit("enc", &mut names);
        let total: usize = names.iter().map(|(_, t)| t.len()).sum();
        assert_eq!(total, p.param_count());
        assert_eq!(total, 4 * (5 * 7 + 7 * 7 + 7));
    }
}
