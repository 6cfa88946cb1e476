//! Partial VAE over binary answers.

mod checkpoint;
mod graph;
mod model;
mod params;
mod train;

pub use checkpoint::{Checkpoint, SplitRecord};
pub use graph::{record_batch, BatchGraph, BatchRow};
pub use model::{FeatureCache, PVae, PosteriorGaussian, DEFAULT_IMPUTE_SAMPLES};
pub use params::{ModelDims, PVaeParams, Slot};
pub use train::{mean_elbo, train, EpochStats, TrainConfig, TrainOutcome};
