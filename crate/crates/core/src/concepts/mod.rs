//! Concept discovery and validation.
//!
//! When no expert segmentation exists, concepts are found by k-means over
//! per-timestep cross-channel vectors, with the cluster count chosen by the
//! elbow of the inertia curve. Whether concepts carry class information is
//! checked by training boosted stumps on per-concept summary statistics.

mod boost;
mod kmeans;
mod summary;

pub use boost::{train_stumps, BoostOptions, BoostedStumps, Stump};
pub use kmeans::{
    assign_concepts, elbow_select, kmeans_fit, kmeans_fit_points, timestep_points, ClusteringModel,
    ElbowResult, ElbowWarning, KmeansOptions,
};
pub use summary::{concept_feature_row, concept_stats, validate_concepts, ConceptStatsRow, ConceptValidation};
