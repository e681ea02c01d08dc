//! Ranking-based single-round active learning.
//!
//! A set-valued surrogate of validation accuracy is trained on subsets of the
//! initial labeled pool (pairwise ranking loss plus an optimal-transport
//! auxiliary head, with a length-split bilevel hyperparameter search), then
//! used to pick margin-filtered batches from the unlabeled pool.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod baselines;
pub mod classifier;
pub mod config;
pub mod datasets;
pub mod nn;
pub mod ot;
pub mod pretraining;
pub mod rng;
pub mod tensor;
pub mod utility_model;
