//! Multi-view brain network normalization.
//!
//! A graph neural network maps each subject's multi-view connectivity to a
//! single-view template; training pulls those templates toward every view of
//! a random subset of training subjects while matching their node-strength
//! distributions. The median of the per-subject templates is the population
//! center. The crate also ships topology metrics and the evaluation protocols
//! used to judge a template (centeredness, topology fidelity, discriminative
//! edges).

pub mod autodiff;
pub mod evaluation;
pub mod gnn;
pub mod loss;
pub mod netdata;
pub mod report;
pub mod tensor;
pub mod topology;
pub mod trainer;
