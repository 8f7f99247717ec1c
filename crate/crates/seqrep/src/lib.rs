//! Unsupervised representation learning for irregular clinical time series.
//!
//! The crate covers the full workflow at desk scale:
//!
//! * [`numerics`] — dense f64 tensors, a reverse-mode tape, Adam, checkpoints.
//! * [`models`] — the five encoders: PCA, a flattened-input autoencoder, a
//!   sequence-to-sequence autoencoder, a sequence-to-sequence forecaster, and
//!   the attended forecaster, plus their window/corpus losses.
//! * [`preprocess`] — irregular observations to hourly grids: outlier
//!   rejection, three-tier imputation with provenance masks, scaling,
//!   stride-1 windows, patient-level splits.
//! * [`synthdata`] — a seeded generator of cohort-shaped synthetic data.
//! * [`train`] — batching, early stopping, grid search.
//! * [`eval`] — signal probes, 24h event classification, AUROC/AUPRC,
//!   limited-label curves, the representation-dimension sweep.
//! * [`cli`] — the operator commands behind the `seqrep` binary.
//!
//! See the crate examples for runnable entry points into each capability.

pub mod cli;
pub mod error;
pub mod eval;
pub mod models;
pub mod numerics;
pub mod preprocess;
pub mod synthdata;
pub mod train;

pub use error::{Error, Result};
