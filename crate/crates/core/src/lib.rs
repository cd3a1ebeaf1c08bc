//! Feature attribution for anomalous 1-D spectra.
//!
//! The crate centres on inverse multiscale occlusion ([`attribution::imo`]):
//! blocks of an anomalous input are pasted into normal baseline spectra
//! reconstructed at the input's redshift, at several window sizes, and the
//! per-window results are merged with inverse-variance weights. Saliency,
//! integrated and expected gradients, feature ablation and forward occlusion
//! are provided for comparison.
//!
//! Models plug in through [`model::Scorer`] and [`model::ModelBundle`];
//! [`model::ToyModel`] is an analytic implementation with exact gradients.

// `!(x > 0.0)` rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod error;
pub mod io;
pub mod model;
pub mod spectrum;
pub mod synth;

pub use attribution::{
    combine_min_variance, expected_gradients, feature_ablation, imo, integrated_gradients,
    inverse_occlusion, occlusion, saliency, AttributionStack, BaselineEnsemble, Method,
    StridePolicy, WindowSet,
};
pub use error::{Error, Result};
pub use io::{Dataset, ResultFile, SpectrumFile};
pub use model::{score, score_gradient, LatentVector, ModelBundle, Scorer, ToyModel, ToyModelSpec};
pub use spectrum::{GaussianLine, GridSpec, Spectrum};
pub use synth::{AnomalyKind, AnomalyLabel, SynthConfig, SyntheticSuite};
