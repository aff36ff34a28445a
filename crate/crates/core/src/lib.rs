//! Synthetic seizure EEG from inter-ictal recordings.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] – a small deterministic reverse-mode autodiff engine with the
//!   1-D operators, normalisations and optimiser the networks need.
//! * [`gan`] – the U-net generator with learned skip weights, the
//!   encoder-shaped discriminator, least-squares losses and the training loop.
//! * [`data`] – windowing, normalisation, ictal/inter-ictal pairing,
//!   leave-one-patient-out splits, the evaluation set construction, a
//!   surrogate EEG generator and the binary interchange formats.
//! * [`features`] – the 108-feature extractor (wavelet entropies and Welch
//!   band powers).
//! * [`detect`] – random forest detector, metrics, aggregation, Wilcoxon
//!   signed-rank test and the experiment driver.

// `!(x > y)` is the idiom for rejecting NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod detect;
pub mod error;
pub mod features;
pub mod gan;
pub mod seed;
pub mod tensor;

pub use data::{EegSample, Label, Origin, PairedExample};
pub use detect::{ExperimentReport, RandomForest};
pub use error::{Error, Result};
pub use features::FeatureVector;
pub use gan::{ArchitectureConfig, DiscriminatorWeights, GanTrainConfig, GeneratorWeights};
pub use tensor::{Real, Tape, Tensor, Var};
