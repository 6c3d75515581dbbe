//! Multi-year feeder peak-demand forecasting with per-feeder selection among
//! recursive, interval and multi-year sequence learners.

pub mod baselines;
pub mod clustering;
pub mod config;
pub mod domain;
pub mod error;
pub mod features;
pub mod metrics;
pub mod nets;
pub mod pipeline;
pub mod scalar;
pub mod selector;
pub mod seqdata;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations used by the pipeline and the CLI.
pub type SeqModelF64 = nets::SeqModel<f64>;
pub type TrainedModelF64 = nets::TrainedModel<f64>;
pub type ModelBundleF64 = nets::ModelBundle<f64>;
pub type PcaModelF64 = features::PcaModel<f64>;
pub type FnnModelF64 = baselines::FnnModel<f64>;
pub type ClusterAssignmentF64 = clustering::ClusterAssignment<f64>;

/// Single-precision instantiations.
pub type SeqModelF32 = nets::SeqModel<f32>;
pub type TrainedModelF32 = nets::TrainedModel<f32>;
pub type PcaModelF32 = features::PcaModel<f32>;
