//! Graph-based slow feature analysis (GSFA) with exact label learning (ELL)
//! training graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: training graphs, Δ values and the consistency test.
//! * [`builders`]: linear, clustered, serial and ELL graphs and the label tools.
//! * [`spectrum`]: optimal free responses and the noise-Δ diagnostic.
//! * [`solver`]: linear GSFA, expansions and PCA.
//! * [`hierarchy`]: layered networks of GSFA nodes.
//! * [`estimators`]: label and class estimation from slow features.
//! * [`datagen`]: seeded synthetic datasets.
//! * [`experiments`]: reproducible pipelines behind the `gsfa` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builders;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod graph;
pub mod hierarchy;
pub mod linalg;
pub mod matrix_io;
pub mod parallel;
pub mod rng;
pub mod solver;
pub mod spectrum;

pub use error::{GsfaError, Result};
pub use nalgebra;
