// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod models;
pub mod predictive;
pub mod privacy;
pub mod seed;
pub mod special;
pub mod trajectory;

pub use data::{load_csv, write_csv, Dataset, Observation, Provenance, Task};
pub use error::{Error, Result};
pub use evaluation::{CriterionKind, F0Spec, Orientation};
pub use inference::{sample_posterior, McmcConfig, PosteriorSamples, Sampler};
pub use models::{LossSpec, ModelSpec, PriorSpec, Theta};
pub use predictive::{Predictive, PredictiveEnsemble, PredictiveModel};
pub use privacy::LaplaceMechanism;
pub use seed::{derive_seed, SeedSpec};
pub use trajectory::{run_trajectory, ExperimentSpec, FitSpec, Scale, TrajectoryGrid, TrajectoryResult};
