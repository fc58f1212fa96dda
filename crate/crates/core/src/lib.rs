//! Differentially private Explainable Boosting Machines.
//!
//! Generalized additive models trained by cyclic gradient boosting over binned
//! features, with optional (ε, δ)-differential privacy from calibrated Gaussian
//! noise. Privacy is accounted either with classic strong composition or with
//! Gaussian differential privacy (μ-GDP). Trained models can be inspected,
//! edited and made monotone afterwards without touching the training data.
//!
//! All data-path code is generic over a [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the CLI and the model files use.

pub mod accountant;
pub mod binning;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod model;
pub mod postprocess;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use accountant::{AccountantKind, BudgetLedger, GdpParam, PhaseBudget, PrivacyBudget};
pub use binning::{BinIndex, FeatureBins};
pub use dataset::{Dataset, FeatureKind, FeatureSpec, Schema, SplitPlan, Value};
pub use error::{Error, Result};
pub use model::{Contribution, GamModel, Link, ShapeFunction};
pub use postprocess::{EditAction, EditCommand, MonotoneDirection};
pub use scalar::Scalar;
pub use trainer::{Task, TrainConfig, Trainer};

/// Dataset with `f64` values and labels.
pub type Data = Dataset<f64>;
/// Model with `f64` shape values.
pub type Model = GamModel<f64>;
/// Model with `f32` shape values.
pub type ModelF32 = GamModel<f32>;
/// Bin definition for an `f64` feature.
pub type Bins = FeatureBins<f64>;
/// Feature description with `f64` bounds.
pub type Feature = FeatureSpec<f64>;
