//! The five representation learners and their losses.
//!
//! Three sequence models share one LSTM cell and readout: the
//! sequence-to-sequence autoencoder reconstructs its input window, the
//! forecaster predicts the next window, and the attended forecaster adds
//! additive attention over encoder states to the forecasting decoder. PCA and
//! a flattened-input MLP autoencoder are the non-sequential baselines.

pub mod attention;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod mlp;
pub mod pca;
pub mod seq2seq;

pub use attention::{attention_scores, AttentionParams};
pub use linear::LinearParams;
pub use loss::{corpus_loss, window_loss};
pub use lstm::{lstm_step, LstmParams};
pub use mlp::{Activation, MlpParams};
pub use pca::PcaModel;
pub use seq2seq::{SeqBatch, SeqGraph, SeqToSeq, WindowForward};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// The five encoder families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Pca,
    Ae,
    S2sAe,
    S2sF,
    S2sFa,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Pca,
        ModelKind::Ae,
        ModelKind::S2sAe,
        ModelKind::S2sF,
        ModelKind::S2sFa,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Pca => "pca",
            ModelKind::Ae => "ae",
            ModelKind::S2sAe => "s2s_ae",
            ModelKind::S2sF => "s2s_f",
            ModelKind::S2sFa => "s2s_fa",
        }
    }

    /// True for the three LSTM-based sequence models.
    pub fn is_sequence(&self) -> bool {
        matches!(self, ModelKind::S2sAe | ModelKind::S2sF | ModelKind::S2sFa)
    }

    /// True when training targets are the future window rather than the input.
    pub fn forecasts(&self) -> bool {
        matches!(self, ModelKind::S2sF | ModelKind::S2sFa)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<ModelKind> {
        match s {
            "pca" => Ok(ModelKind::Pca),
            "ae" => Ok(ModelKind::Ae),
            "s2s_ae" => Ok(ModelKind::S2sAe),
            "s2s_f" => Ok(ModelKind::S2sF),
            "s2s_fa" => Ok(ModelKind::S2sFa),
            other => Err(Error::Invalid(format!("unknown model kind: {other}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One standard-scaled input slice: `window` hourly rows ending at `end_hour`.
#[derive(Debug, Clone)]
pub struct Window {
    pub patient_id: String,
    pub end_hour: usize,
    /// [T, d] values, oldest row first.
    pub values: Tensor,
}

/// The fixed-size summary vector for one patient at one hour.
#[derive(Debug, Clone)]
pub struct Representation {
    pub patient_id: String,
    pub end_hour: usize,
    pub model_id: String,
    pub values: Vec<f64>,
}
