//! Categorical (Potts) restricted Boltzmann machines and the relational trees read off
//! their learning trajectory.
//!
//! The pipeline has four stages:
//!
//! 1. [`training`] fits a [`PottsRBM`] to a [`OneHotDataset`] with persistent
//!    contrastive divergence, saving checkpoints at increasing ages.
//! 2. [`meanfield`] solves the second-order (TAP) mean-field equations of a checkpoint
//!    starting from each data point.
//! 3. [`treebuild`] clusters the resulting fixed points and follows them backward
//!    through the checkpoints, merging data whose fixed points fall together.
//! 4. The tree is exported as Newick and JSON; [`model`] also provides the weight
//!    spectrum used to monitor training.
//!
//! [`datasets`] holds the synthetic generator and file loaders, [`cli`] the command-line
//! front end.

pub mod cli;
pub mod dataset;
pub mod datasets;
pub mod error;
pub mod io;
pub mod math;
pub mod meanfield;
pub mod model;
pub mod training;
pub mod treebuild;

pub use dataset::OneHotDataset;
pub use error::{Error, Result};
pub use meanfield::{FixedPointResult, MagnetizationState, TapConfig, Variant};
pub use model::{CheckpointDir, CheckpointSeries, CheckpointStore, Gauge, PottsRBM};
pub use training::TrainingConfig;
pub use treebuild::{MergeTree, TreeConfig};
