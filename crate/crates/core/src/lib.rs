//! Two-stream multiple-instance-learning head trained on precomputed
//! frozen-encoder embeddings.
//!
//! A bag is a set of views (e.g. all views of one breast in one exam). Every
//! view contributes one global embedding, and every selected tile of every view
//! contributes one local embedding. The head runs a small MLP over each
//! instance, pools each stream with a permutation-invariant aggregator, and
//! maps the concatenated summaries to one logit.
//!
//! Module map:
//! - [`embedset`]: the embeddings dataset, its on-disk container, patient-grouped
//!   splitting and a synthetic sparse-signal generator.
//! - [`tilegeom`]: uniform tile grids with optional overlap.
//! - [`milhead`]: forward computations, loss, parameter layout and checkpoints.
//! - [`backprop`]: exact gradients plus a finite-difference oracle.
//! - [`trainer`]: full-batch Adam, the multi-run selection protocol and the
//!   single-instance ablation.
//! - [`metrics`]: AUC, balanced accuracy, Spec@Sens, IoU and bucketed mAP.
//! - [`explain`]: attention heatmaps and heatmap-to-box extraction.

pub mod backprop;
pub mod embedset;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod milhead;
pub mod par;
pub mod tilegeom;
pub mod trainer;

pub use error::{Error, Result};
pub use par::Exec;
