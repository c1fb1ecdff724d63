//! Fairness-aware training of binary classifiers through Gaussian
//! smoothing in parameter space.
//!
//! One network is trained per sensitive group. The networks are pulled
//! together during training and the smoothed classifiers built around them
//! carry a certificate bounding the gap between their predictions on any
//! input.

pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod smoothing;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use features::Features;
pub use model::{Activation, Architecture, BaseClassifier, Differentiable, Example, LossKind, Mlp};
pub use params::ParameterVector;
pub use rng::{CounterRng, Stream};
pub use smoothing::{McErrorReport, SmoothedClassifier, SmoothedValue};
pub use train::{FairnessCertificate, TrainingConfig, Variant};
pub use data::{Attribute, DatasetKind, GroupedDataset};
