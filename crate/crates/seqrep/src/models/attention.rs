//! Additive attention over encoder hidden states.
//!
//! Scores follow the tanh-perceptron form: the raw score for encoder state
//! `h_j` given decoder state `h'` is `score_vec . tanh(W_dec h' + W_enc h_j)`,
//! normalized per decode step with a softmax.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{NodeId, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Scoring vector, stored as a column [m, 1].
    pub score_vec: Tensor,
    pub w_dec: Tensor, // m x m
    pub w_enc: Tensor, // m x m
}

impl AttentionParams {
    pub fn zeros(hidden_dim: usize) -> AttentionParams {
        AttentionParams {
            score_vec: Tensor::zeros(&[hidden_dim, 1]),
            w_dec: Tensor::zeros(&[hidden_dim, hidden_dim]),
            w_enc: Tensor::zeros(&[hidden_dim, hidden_dim]),
        }
    }

    pub fn init(hidden_dim: usize, rng: &mut impl Rng) -> AttentionParams {
        let mut p = AttentionParams::zeros(hidden_dim);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        for t in [&mut p.score_vec, &mut p.w_dec, &mut p.w_enc] {
            for v in t.data_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        p
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_dec.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.score_vec.len() + self.w_dec.len() + self.w_enc.len()
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.score_vec"), &self.score_vec));
        out.push((format!("{prefix}.w_dec"), &self.w_dec));
        out.push((format!("{prefix}.w_enc"), &self.w_enc));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.score_vec"), &mut self.score_vec));
        out.push((format!("{prefix}.w_dec"), &mut self.w_dec));
        out.push((format!("{prefix}.w_enc"), &mut self.w_enc));
    }

    pub fn bind(
        &self,
        tape: &mut Tape,
        prefix: &str,
        trainable: bool,
        reg: &mut Vec<(String, NodeId)>,
    ) -> AttentionNodes {
        let mut put = |tape: &mut Tape, name: String, t: &Tensor| {
            let id = if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            };
            reg.push((name, id));
            id
        };
        AttentionNodes {
            score_vec: put(tape, format!("{prefix}.score_vec"), &self.score_vec),
            w_dec: put(tape, format!("{prefix}.w_dec"), &self.w_dec),
            w_enc: put(tape, format!("{prefix}.w_enc"), &self.w_enc),
        }
    }
}

#[derive(Clone, Copy)]
pub struct AttentionNodes {
    pub score_vec: NodeId,
    pub w_dec: NodeId,
    pub w_enc: NodeId,
}

impl AttentionNodes {
    /// Projects each encoder state once; the projections are reused by every
    /// decode step of the same batch.
    pub fn project_encoder(&self, tape: &mut Tape, enc: &[NodeId]) -> Result<Vec<NodeId>> {
        enc.iter()
            .map(|&state| tape.matmul(state, self.w_enc))
            .collect()
    }

    /// Softmax-normalized weights [B, T] for one decode step.
    pub fn weights(
        &self,
        tape: &mut Tape,
        h_dec: NodeId,
        enc_proj: &[NodeId],
    ) -> Result<NodeId> {
        if enc_proj.is_empty() {
            return Err(Error::Invalid(
                "attention: no encoder states to attend over".into(),
            ));
        }
        let dec_proj = tape.matmul(h_dec, self.w_dec)?;
        let mut scores = None;
        for &proj in enc_proj {
            let summed = tape.add(dec_proj, proj)?;
            let squashed = tape.tanh(summed)?;
            let col = tape.matmul(squashed, self.score_vec)?; // [B, 1]
            scores = Some(match scores {
                None => col,
                Some(acc) => tape.concat(acc, col, 1)?,
            });
        }
        tape.softmax(scores.unwrap())
    }

    /// Weighted sum of encoder states: [B, T] weights against T states [B, m].
    pub fn context(
        &self,
        tape: &mut Tape,
        weights: NodeId,
        enc: &[NodeId],
    ) -> Result<NodeId> {
        let mut acc = None;
        for (j, &state) in enc.iter().enumerate() {
            let w = tape.slice(weights, 1, j, 1)?;
            let term = tape.scale_rows(state, w)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        acc.ok_or_else(|| Error::Invalid("attention: empty encoder state list".into()))
    }
}

/// Attention weights for one decoder state over `enc_states` (rows are the
/// encoder hidden states, oldest first). Returns the normalized T-vector.
pub fn attention_scores(
    h_dec: &[f64],
    enc_states: &Tensor,
    params: &AttentionParams,
) -> Result<Vec<f64>> {
    let m = params.hidden_dim();
    if enc_states.rank() != 2 || enc_states.cols() != m || h_dec.len() != m {
        return Err(Error::shape(
            "attention_scores",
            format!(
                "decoder state {} and encoder states {:?} vs hidden dim {m}",
                h_dec.len(),
                enc_states.shape()
            ),
        ));
    }
    let steps = enc_states.rows();
    if steps == 0 {
        return Err(Error::Invalid(
            "attention_scores: need at least one encoder state".into(),
        ));
    }
    let mut tape = Tape::new();
    let mut reg = Vec::new();
    let nodes = params.bind(&mut tape, "attention", false, &mut reg);
    let enc: Vec<NodeId> = (0..steps)
        .map(|j| tape.constant(Tensor::raw(vec![1, m], enc_states.row(j).to_vec())))
        .collect();
    let proj = nodes.project_encoder(&mut tape, &enc)?;
    let h = tape.constant(Tensor::raw(vec![1, m], h_dec.to_vec()));
    let weights = nodes.weights(&mut tape, h, &proj)?;
    Ok(tape.value(weights)?.data().to_vec())
}
