//! Model-agnostic confidence estimation.
//!
//! Given any classifier's point predictions, [`macest`] estimates the
//! probability that each prediction is correct from two local quantities
//! computed over nearest neighbours: a distance-weighted count of nearby
//! prediction errors (aleatoric) and a rank-weighted distance to the
//! neighbours themselves (epistemic). The crate also ships the baseline
//! [`calibrators`], [`trust`] scores, calibration [`metrics`] and the
//! experiment [`harness`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrators;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod macest;
pub mod metrics;
pub mod neighbour;
pub mod optim;
pub mod predictor;
pub mod rng;
pub mod trust;

pub use dataset::{Dataset, FoldPlan, FourWaySplit};
pub use embedding::{Embedding, EmbeddingKind};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, Method};
pub use macest::{ClassUncertainty, ConfidenceEstimate, MacestConfig, MacestModel};
pub use metrics::{BinningScheme, MetricWithError, ReliabilityData};
pub use neighbour::{Backend, HnswParams, NeighbourIndex, NeighbourSet};
pub use predictor::{KnnClassifier, PredictionSet};
pub use trust::TrustScorer;
