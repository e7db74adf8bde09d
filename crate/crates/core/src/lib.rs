//! RGC-aware glaucoma analysis on ONH OCT B-scans.
//!
//! This crate implements a complete desk-scale analysis pipeline for optic
//! nerve head OCT imagery, built around the atrophy of retinal ganglion
//! cells as the glaucoma biomarker:
//!
//! 1. [`preprocess`] — structure-tensor retina/ONH extraction: gradient
//!    outer products, coherent-tensor selection, ILM/choroid tracing with
//!    outlier rejection, interpolation and median smoothing, mask
//!    multiplication.
//! 2. [`nn`] — a small deterministic CPU tensor engine (f64 throughout)
//!    with atrous (dilated) convolutions, variable-dilation schedules,
//!    receptive-field and gridding analysis, and a hybrid network that
//!    produces per-pixel RNFL/GC-IPL segmentation and a scan-level
//!    healthy/glaucomatous decision from a shared encoder.
//! 3. [`loss`] / [`optim`] / [`train`] — dice-entropy loss with analytic
//!    gradients, ADADELTA, augmentation, and the training loop.
//! 4. [`profiles`] — per-column RNFL, GC-IPL, and GCC thickness in
//!    micrometers plus mean-value feature vectors.
//! 5. [`grading`] — linear SVM severity grading (early vs advanced) and a
//!    mean-RNFL threshold baseline.
//! 6. [`metrics`] — confusion rates, ROC/AUC, dice, mask precision, and
//!    Pearson correlation with p-values.
//! 7. [`pipeline`] — manifests, run configuration, end-to-end orchestration
//!    and report emission; the `rgc-oct` binary wraps it in subcommands.
//!
//! Synthetic scans ([`scan::generate_synthetic`]) stand in for clinical
//! data so every stage can be exercised and verified on one desk. See the
//! `examples/` directory for one runnable walkthrough per capability.

// Validation deliberately writes `!(x > 0.0)` rather than `x <= 0.0` so a
// NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod error;
pub mod grading;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod preprocess;
pub mod profiles;
pub mod rng;
pub mod scan;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor4;
