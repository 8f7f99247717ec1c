//! Sequence-to-sequence encoders: autoencoding, forecasting, and forecasting
//! with attention.
//!
//! One LSTM cell encodes the T-step window from a zero initial state; the
//! final hidden state is the representation. The decoder starts from the
//! encoder's final (h, c), consumes its own previous prediction (the last
//! observed input on the first step), and a shared linear readout maps each
//! decoder state to an output row. The attended variant additionally
//! concatenates an attention context over the encoder states to every decoder
//! input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{AttentionNodes, AttentionParams};
use super::linear::{LinearNodes, LinearParams};
use super::lstm::{LstmNodes, LstmParams};
use super::{ModelKind, Representation, Window};
use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, NodeId, Tape, Tensor};

/// Parameters of one sequence model.
#[derive(Debug, Clone)]
pub struct SeqToSeq {
    pub kind: ModelKind,
    pub window: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub attention: Option<AttentionParams>,
    pub readout: LinearParams,
}

/// Inputs for one batched forward pass: `inputs[tau]` holds row tau of every
/// window in the batch, stacked as [B, d]. `targets` follow the same layout
/// (input rows for reconstruction, future rows for forecasting) and may be
/// empty when only representations are needed. `weights` carries the
/// per-window corpus-loss weights.
pub struct SeqBatch {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
    pub weights: Vec<f64>,
}

/// Handles into a built graph.
pub struct SeqGraph {
    pub loss: Option<NodeId>,
    pub window_losses: Option<NodeId>,
    pub reps: NodeId,
    pub outputs: Vec<NodeId>,
    pub alphas: Option<Vec<NodeId>>,
    pub params: Vec<(String, NodeId)>,
}

/// Fully evaluated forward pass of a single window.
pub struct WindowForward {
    pub representation: Vec<f64>,
    /// Encoder hidden states, one row per input step: [T, m].
    pub enc_states: Tensor,
    /// Decoded rows, first decode step first: [T, d].
    pub outputs: Tensor,
    /// Attention weights per decode step: [T, T], when attention is present.
    pub alphas: Option<Tensor>,
}

impl SeqToSeq {
    /// Seeded construction. The decoder input is the readout row for the
    /// plain variants and [readout row ; context] for the attended one.
    pub fn new(
        kind: ModelKind,
        input_dim: usize,
        hidden_dim: usize,
        window: usize,
        seed: u64,
    ) -> Result<SeqToSeq> {
        if !kind.is_sequence() {
            return Err(Error::Invalid(format!(
                "{kind} is not a sequence-to-sequence model"
            )));
        }
        if input_dim == 0 || hidden_dim == 0 || window == 0 {
            return Err(Error::Invalid(
                "sequence model dims and window must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attended = kind == ModelKind::S2sFa;
        let dec_in = if attended {
            input_dim + hidden_dim
        } else {
            input_dim
        };
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        Ok(SeqToSeq {
            kind,
            window,
            input_dim,
            hidden_dim,
            encoder: LstmParams::init(input_dim, hidden_dim, &mut rng),
            decoder: LstmParams::init(dec_in, hidden_dim, &mut rng),
            attention: attended.then(|| AttentionParams::init(hidden_dim, &mut rng)),
            readout: LinearParams::init(hidden_dim, input_dim, bound, &mut rng),
        })
    }

    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.encoder.visit("encoder", &mut out);
        self.decoder.visit("decoder", &mut out);
        if let Some(a) = &self.attention {
            a.visit("attention", &mut out);
        }
        self.readout.visit("readout", &mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.encoder.visit_mut("encoder", &mut out);
        self.decoder.visit_mut("decoder", &mut out);
        if let Some(a) = &mut self.attention {
            a.visit_mut("attention", &mut out);
        }
        self.readout.visit_mut("readout", &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.decoder.param_count()
            + self.attention.as_ref().map_or(0, |a| a.param_count())
            + self.readout.param_count()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(self.kind.as_str());
        ckpt.set_meta("window", self.window);
        ckpt.set_meta("input_dim", self.input_dim);
        ckpt.set_meta("hidden_dim", self.hidden_dim);
        for (name, t) in self.params() {
            ckpt.insert(name, t.clone());
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<SeqToSeq> {
        let kind: ModelKind = ckpt.kind.parse()?;
        let window = ckpt.meta_usize("window")?;
        let input_dim = ckpt.meta_usize("input_dim")?;
        let hidden_dim = ckpt.meta_usize("hidden_dim")?;
        let mut model = SeqToSeq::new(kind, input_dim, hidden_dim, window, 0)?;
        for (name, t) in model.params_mut() {
            let stored = ckpt.tensor(&name)?;
            if stored.shape() != t.shape() {
                return Err(Error::shape(
                    "from_checkpoint",
                    format!("{name}: {:?} vs {:?}", stored.shape(), t.shape()),
                ));
            }
            *t = stored.clone();
        }
        Ok(model)
    }

    fn bound(&self, tape: &mut Tape, trainable: bool) -> (BoundSeq, Vec<(String, NodeId)>) {
        let mut reg = Vec::new();
        let encoder = self.encoder.bind(tape, "encoder", trainable, &mut reg);
        let decoder = self.decoder.bind(tape, "decoder", trainable, &mut reg);
        let attention = self
            .attention
            .as_ref()
            .map(|a| a.bind(tape, "attention", trainable, &mut reg));
        let readout = self.readout.bind(tape, "readout", trainable, &mut reg);
        (
            BoundSeq {
                encoder,
                decoder,
                attention,
                readout,
            },
            reg,
        )
    }

    fn check_batch(&self, batch: &SeqBatch) -> Result<usize> {
        if batch.inputs.len() != self.window {
            return Err(Error::shape(
                "seq batch",
                format!("{} input steps vs window {}", batch.inputs.len(), self.window),
            ));
        }
        let rows = batch.inputs[0].rows();
        for t in &batch.inputs {
            if t.rank() != 2 || t.cols() != self.input_dim || t.rows() != rows {
                return Err(Error::shape(
                    "seq batch",
                    format!("input step {:?}, want [{rows}, {}]", t.shape(), self.input_dim),
                ));
            }
        }
        if !batch.targets.is_empty() {
            if batch.targets.len() != self.window {
                return Err(Error::shape(
                    "seq batch",
                    format!("{} target steps vs window {}", batch.targets.len(), self.window),
                ));
            }
            for t in &batch.targets {
                if t.shape() != batch.inputs[0].shape() {
                    return Err(Error::shape(
                        "seq batch",
                        format!("target step {:?}", t.shape()),
                    ));
                }
            }
            if batch.weights.len() != rows {
                return Err(Error::shape(
                    "seq batch",
                    format!("{} loss weights for {rows} windows", batch.weights.len()),
                ));
            }
        }
        if rows == 0 {
            return Err(Error::Invalid("empty window batch".into()));
        }
        Ok(rows)
    }

    /// Records the full forward pass (and loss, when targets are present) on
    /// the tape. With `trainable` the parameters become leaves of the tape.
    pub fn build_graph(
        &self,
        tape: &mut Tape,
        batch: &SeqBatch,
        trainable: bool,
    ) -> Result<SeqGraph> {
        let rows = self.check_batch(batch)?;
        let (nodes, params) = self.bound(tape, trainable);

        // Encoder unroll from zero state.
        let inputs: Vec<NodeId> = batch
            .inputs
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        let mut h = tape.zeros(&[rows, self.hidden_dim]);
        let mut c = tape.zeros(&[rows, self.hidden_dim]);
        let mut enc_states = Vec::with_capacity(self.window);
        for &x in &inputs {
            let (h2, c2) = nodes.encoder.step(tape, x, h, c)?;
            h = h2;
            c = c2;
            enc_states.push(h);
        }
        let reps = h;

        // Decoder: state handed off from the encoder, feedback from its own
        // previous output, last observed input on the first step.
        let enc_proj = match &nodes.attention {
            Some(a) => Some(a.project_encoder(tape, &enc_states)?),
            None => None,
        };
        let mut prev = inputs[self.window - 1];
        let mut outputs = Vec::with_capacity(self.window);
        let mut alphas = nodes.attention.as_ref().map(|_| Vec::new());
        for _ in 0..self.window {
            let x = match (&nodes.attention, &enc_proj) {
                (Some(a), Some(proj)) => {
                    let weights = a.weights(tape, h, proj)?;
                    let ctx = a.context(tape, weights, &enc_states)?;
                    if let Some(list) = alphas.as_mut() {
                        list.push(weights);
                    }
                    tape.concat(prev, ctx, 1)?
                }
                _ => prev,
            };
            let (h2, c2) = nodes.decoder.step(tape, x, h, c)?;
            h = h2;
            c = c2;
            let out = nodes.readout.apply(tape, h)?;
            outputs.push(out);
            prev = out;
        }

        // Per-window squared error summed over steps, then averaged per the
        // window loss and combined with the caller's corpus weights.
        let (loss, window_losses) = if batch.targets.is_empty() {
            (None, None)
        } else {
            let mut acc: Option<NodeId> = None;
            for (out, target) in outputs.iter().zip(&batch.targets) {
                let tgt = tape.constant(target.clone());
                let diff = tape.sub(*out, tgt)?;
                let sq = tape.mul(diff, diff)?;
                let per_window = tape.row_sum(sq)?;
                acc = Some(match acc {
                    None => per_window,
                    Some(a) => tape.add(a, per_window)?,
                });
            }
            let summed = acc.expect("window >= 1");
            let per_window = tape.scale(summed, 1.0 / self.window as f64)?;
            let total = tape.weighted_sum(per_window, &batch.weights)?;
            (Some(total), Some(per_window))
        };

        Ok(SeqGraph {
            loss,
            window_losses,
            reps,
            outputs,
            alphas,
            params,
        })
    }

    /// Representations for a set of windows in one forward pass, one row per
    /// window: [B, m].
    pub fn encode_rows(&self, windows: &[&Tensor]) -> Result<Tensor> {
        if windows.is_empty() {
            return Err(Error::Invalid("encode_rows: no windows".into()));
        }
        let rows = windows.len();
        let mut inputs = Vec::with_capacity(self.window);
        for tau in 0..self.window {
            let mut data = Vec::with_capacity(rows * self.input_dim);
            for w in windows {
                if w.rank() != 2 || w.rows() != self.window || w.cols() != self.input_dim {
                    return Err(Error::shape(
                        "encode_rows",
                        format!("window {:?}", w.shape()),
                    ));
                }
                data.extend_from_slice(w.row(tau));
            }
            inputs.push(Tensor::from_vec(&[rows, self.input_dim], data)?);
        }
        let mut tape = Tape::new();
        let graph = self.build_graph(
            &mut tape,
            &SeqBatch {
                inputs,
                targets: Vec::new(),
                weights: Vec::new(),
            },
            false,
        )?;
        Ok(tape.value(graph.reps)?.clone())
    }

    /// Runs the model's own objective forward on a single window. `values`
    /// is the [T, d] input; for forecasters the outputs are the predicted
    /// next T rows, for the autoencoder the reconstruction (oldest first).
    pub fn forward_window(&self, values: &Tensor) -> Result<WindowForward> {
        if values.rank() != 2 || values.rows() != self.window || values.cols() != self.input_dim {
            return Err(Error::shape(
                "forward_window",
                format!(
                    "window {:?}, want [{}, {}]",
                    values.shape(),
                    self.window,
                    self.input_dim
                ),
            ));
        }
        let inputs: Vec<Tensor> = (0..self.window)
            .map(|tau| Tensor::raw(vec![1, self.input_dim], values.row(tau).to_vec()))
            .collect();
        let mut tape = Tape::new();
        let graph = self.build_graph(
            &mut tape,
            &SeqBatch {
                inputs,
                targets: Vec::new(),
                weights: Vec::new(),
            },
            false,
        )?;
        let representation = tape.value(graph.reps)?.data().to_vec();

        let mut out_rows = Vec::with_capacity(self.window);
        for id in &graph.outputs {
            out_rows.push(tape.value(*id)?.data().to_vec());
        }
        let outputs = Tensor::from_rows(&out_rows)?;

        let alphas = match &graph.alphas {
            Some(list) => {
                let mut rows = Vec::with_capacity(list.len());
                for id in list {
                    rows.push(tape.value(*id)?.data().to_vec());
                }
                Some(Tensor::from_rows(&rows)?)
            }
            None => None,
        };

        // Encoder states are re-read per step for the attended decode;
        // collect them for callers that inspect or reuse them.
        let mut enc_rows = Vec::with_capacity(self.window);
        {
            let mut h = vec![0.0; self.hidden_dim];
            let mut c = vec![0.0; self.hidden_dim];
            for tau in 0..self.window {
                let (h2, c2) = super::lstm::lstm_step(values.row(tau), &h, &c, &self.encoder)?;
                h = h2;
                c = c2;
                enc_rows.push(h.clone());
            }
        }
        let enc_states = Tensor::from_rows(&enc_rows)?;

        Ok(WindowForward {
            representation,
            enc_states,
            outputs,
            alphas,
        })
    }

    /// Encodes one window to its representation (the encoder's final hidden
    /// state; the cell state is not part of the representation).
    pub fn encode(&self, window: &Window) -> Result<Representation> {
        if window.values.rows() == 0 {
            return Err(Error::Invalid("encode: empty window".into()));
        }
        let reps = self.encode_rows(&[&window.values])?;
        Ok(Representation {
            patient_id: window.patient_id.clone(),
            end_hour: window.end_hour,
            model_id: self.kind.as_str().to_string(),
            values: reps.row(0).to_vec(),
        })
    }

    /// Decodes T rows from an explicit decoder start state, for the
    /// non-attended variants. `first_input` stands in for the last observed
    /// row. Returns the [T, d] output, first decode step first.
    pub fn decode_from_state(&self, h: &[f64], c: &[f64], first_input: &[f64]) -> Result<Tensor> {
        if self.attention.is_some() {
            return Err(Error::Invalid(
                "decode_from_state: attended model needs encoder states".into(),
            ));
        }
        self.decode_impl(h, c, first_input, None).map(|(out, _)| out)
    }

    /// Attended decode from an explicit state over explicit encoder states
    /// ([T, m], oldest first). Returns the [T, d] outputs and the [T, T]
    /// attention weights, one row per decode step.
    pub fn decode_attended(
        &self,
        h: &[f64],
        c: &[f64],
        first_input: &[f64],
        enc_states: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        if self.attention.is_none() {
            return Err(Error::Invalid(
                "decode_attended: model has no attention parameters".into(),
            ));
        }
        if enc_states.rank() != 2
            || enc_states.rows() != self.window
            || enc_states.cols() != self.hidden_dim
        {
            return Err(Error::shape(
                "decode_attended",
                format!(
                    "encoder states {:?} vs [{}, {}]",
                    enc_states.shape(),
                    self.window,
                    self.hidden_dim
                ),
            ));
        }
        let (out, alphas) = self.decode_impl(h, c, first_input, Some(enc_states))?;
        Ok((out, alphas.expect("attended decode records weights")))
    }

    fn decode_impl(
        &self,
        h: &[f64],
        c: &[f64],
        first_input: &[f64],
        enc_states: Option<&Tensor>,
    ) -> Result<(Tensor, Option<Tensor>)> {
        if h.len() != self.hidden_dim || c.len() != self.hidden_dim {
            return Err(Error::shape(
                "decode",
                format!("state dims ({}, {})", h.len(), c.len()),
            ));
        }
        if first_input.len() != self.input_dim {
            return Err(Error::shape(
                "decode",
                format!("first input {} vs d = {}", first_input.len(), self.input_dim),
            ));
        }
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let decoder = self.decoder.bind(&mut tape, "decoder", false, &mut reg);
        let readout = self.readout.bind(&mut tape, "readout", false, &mut reg);
        let attention = self
            .attention
            .as_ref()
            .map(|a| a.bind(&mut tape, "attention", false, &mut reg));

        let enc_nodes: Vec<NodeId> = match enc_states {
            Some(states) => (0..states.rows())
                .map(|j| {
                    tape.constant(Tensor::raw(
                        vec![1, self.hidden_dim],
                        states.row(j).to_vec(),
                    ))
                })
                .collect(),
            None => Vec::new(),
        };
        let enc_proj = match &attention {
            Some(a) => Some(a.project_encoder(&mut tape, &enc_nodes)?),
            None => None,
        };

        let mut hn = tape.constant(Tensor::raw(vec![1, self.hidden_dim], h.to_vec()));
        let mut cn = tape.constant(Tensor::raw(vec![1, self.hidden_dim], c.to_vec()));
        let mut prev = tape.constant(Tensor::raw(vec![1, self.input_dim], first_input.to_vec()));
        let mut out_rows = Vec::with_capacity(self.window);
        let mut alpha_rows = Vec::new();
        for _ in 0..self.window {
            let x = match (&attention, &enc_proj) {
                (Some(a), Some(proj)) => {
                    let weights = a.weights(&mut tape, hn, proj)?;
                    alpha_rows.push(tape.value(weights)?.data().to_vec());
                    let ctx = a.context(&mut tape, weights, &enc_nodes)?;
                    tape.concat(prev, ctx, 1)?
                }
                _ => prev,
            };
            let (h2, c2) = decoder.step(&mut tape, x, hn, cn)?;
            hn = h2;
            cn = c2;
            let out = readout.apply(&mut tape, hn)?;
            out_rows.push(tape.value(out)?.data().to_vec());
            prev = out;
        }
        let outputs = Tensor::from_rows(&out_rows)?;
        let alphas = if alpha_rows.is_empty() {
            None
        } else {
            Some(Tensor::from_rows(&alpha_rows)?)
        };
        Ok((outputs, alphas))
    }
}

struct BoundSeq {
    encoder: LstmNodes,
    decoder: LstmNodes,
    attention: Option<AttentionNodes>,
    readout: LinearNodes,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::lstm::lstm_step;

    fn window(t: usize, d: usize, seed: u64) -> Tensor {
        let mut data = Vec::with_capacity(t * d);
        let mut state = seed.wrapping_mul(2654435761).wrapping_add(17);
        for _ in 0..t * d {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            data.push(((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0);
        }
        Tensor::from_vec(&[t, d], data).unwrap()
    }

    #[test]
    fn single_step_window_equals_one_lstm_step() {
        let model = SeqToSeq::new(ModelKind::S2sAe, 3, 4, 1, 9).unwrap();
        let w = window(1, 3, 1);
        let fwd = model.forward_window(&w).unwrap();
        let (h, _) = lstm_step(w.row(0), &[0.0; 4], &[0.0; 4], &model.encoder).unwrap();
        assert_eq!(fwd.representation, h);
    }

    #[test]
    fn zero_params_encode_to_zero_and_decode_to_zero() {
        let mut model = SeqToSeq::new(ModelKind::S2sF, 3, 4, 5, 3).unwrap();
        for (_, t) in model.params_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let fwd = model.forward_window(&window(5, 3, 2)).unwrap();
        assert!(fwd.representation.iter().all(|&v| v == 0.0));
        assert!(fwd.outputs.data().iter().all(|&v| v == 0.0));
        assert_eq!(fwd.outputs.shape(), &[5, 3]);
    }

    #[test]
    fn encode_is_deterministic_and_order_sensitive() {
        let model = SeqToSeq::new(ModelKind::S2sAe, 2, 3, 4, 5).unwrap();
        let w = window(4, 2, 7);
        let a = model.forward_window(&w).unwrap().representation;
        let b = model.forward_window(&w).unwrap().representation;
        assert_eq!(a, b);

        // Swap the first two of the T-1 leading rows: the representation
        // must change on a generic instance.
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| w.row(i).to_vec()).collect();
        rows.swap(0, 1);
        let permuted = Tensor::from_rows(&rows).unwrap();
        let c = model.forward_window(&permuted).unwrap().representation;
        assert_ne!(a, c);
    }

    #[test]
    fn attended_outputs_have_normalized_weights_per_step() {
        let model = SeqToSeq::new(ModelKind::S2sFa, 3, 4, 6, 11).unwrap();
        let fwd = model.forward_window(&window(6, 3, 4)).unwrap();
        let alphas = fwd.alphas.unwrap();
        assert_eq!(alphas.shape(), &[6, 6]);
        for i in 0..6 {
            let total: f64 = alphas.row(i).iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "step {i}: {total}");
        }
        assert_eq!(fwd.outputs.shape(), &[6, 3]);
    }

    #[test]
    fn frozen_zero_score_vec_sees_encoder_states_only_through_their_mean() {
        let mut model = SeqToSeq::new(ModelKind::S2sFa, 2, 3, 4, 13).unwrap();
        for v in model.attention.as_mut().unwrap().score_vec.data_mut() {
            *v = 0.0;
        }
        let h = [0.3, -0.2, 0.5];
        let c = [0.1, 0.4, -0.6];
        let first = [0.2, -0.9];
        let states = window(4, 3, 21);
        let (base, alphas) = model.decode_attended(&h, &c, &first, &states).unwrap();
        assert!(alphas.data().iter().all(|&a| (a - 0.25).abs() < 1e-12));

        // Move mass between two non-final states, keeping the mean fixed.
        let mut shifted = states.clone();
        shifted.set(0, 1, states.get(0, 1) + 0.7);
        shifted.set(2, 1, states.get(2, 1) - 0.7);
        let (same, _) = model.decode_attended(&h, &c, &first, &shifted).unwrap();
        for (a, b) in base.data().iter().zip(same.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        // Perturbing a single non-final state (changing the mean) shows up.
        let mut moved = states.clone();
        moved.set(1, 0, states.get(1, 0) + 0.5);
        let (diff, _) = model.decode_attended(&h, &c, &first, &moved).unwrap();
        assert!(base.data().iter().zip(diff.data()).any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn param_count_is_independent_of_window_length() {
        for kind in [ModelKind::S2sAe, ModelKind::S2sF, ModelKind::S2sFa] {
            let short = SeqToSeq::new(kind, 6, 9, 4, 1).unwrap();
            let long = SeqToSeq::new(kind, 6, 9, 48, 1).unwrap();
            assert_eq!(short.param_count(), long.param_count(), "{kind}");
            // Against the closed-form count.
            let (d, m) = (6usize, 9usize);
            let dec_in = if kind == ModelKind::S2sFa { d + m } else { d };
            let expect = 4 * (d * m + m * m + m)
                + 4 * (dec_in * m + m * m + m)
                + if kind == ModelKind::S2sFa { m + 2 * m * m } else { 0 }
                + (m * d + d);
            assert_eq!(short.param_count(), expect, "{kind}");
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_forward_outputs() {
        let model = SeqToSeq::new(ModelKind::S2sFa, 3, 5, 4, 19).unwrap();
        let ckpt = model.to_checkpoint();
        let text = ckpt.to_text();
        let back =
            SeqToSeq::from_checkpoint(&Checkpoint::from_text(&text, "mem").unwrap()).unwrap();
        let w = window(4, 3, 8);
        let a = model.forward_window(&w).unwrap();
        let b = back.forward_window(&w).unwrap();
        assert_eq!(a.representation, b.representation);
        assert_eq!(a.outputs.data(), b.outputs.data());
    }

    #[test]
    fn batched_and_single_window_forward_agree() {
        let model = SeqToSeq::new(ModelKind::S2sF, 3, 4, 5, 23).unwrap();
        let w1 = window(5, 3, 31);
        let w2 = window(5, 3, 32);
        let reps = model.encode_rows(&[&w1, &w2]).unwrap();
        let f1 = model.forward_window(&w1).unwrap();
        let f2 = model.forward_window(&w2).unwrap();
        for j in 0..4 {
            assert!((reps.get(0, j) - f1.representation[j]).abs() < 1e-12);
            assert!((reps.get(1, j) - f2.representation[j]).abs() < 1e-12);
        }
    }
}
