//! Proactive knob control for tunable approximate programs.
//!
//! A tunable program exposes discrete knobs that trade output fidelity for
//! cost. This crate profiles such programs, learns a cost model and a fitness
//! model from the profile, and picks the cheapest knob setting that meets an
//! error bound `epsilon` with probability at least `pi`, before the program
//! runs.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the common `f64` and `f32` instantiations.

// `!(x >= y)` is used on purpose so NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod controller;
pub mod dataset;
pub mod domain;
pub mod error;
pub mod eval;
pub mod models;
pub mod scalar;
pub mod synthbench;

pub use controller::{control_exhaustive, control_oracle, control_precimonious, feasible_set, SearchStats};
pub use dataset::Dataset;
pub use domain::{Constraint, ControlDecision, InputFeatures, Knob, KnobSetting, KnobSpace, RunRecord};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DatasetF64 = dataset::Dataset<f64>;
pub type DatasetF32 = dataset::Dataset<f32>;
pub type KnobF64 = domain::Knob<f64>;
pub type KnobSpaceF64 = domain::KnobSpace<f64>;
pub type KnobSpaceF32 = domain::KnobSpace<f32>;
pub type ConstraintF64 = domain::Constraint<f64>;
pub type RunRecordF64 = domain::RunRecord<f64>;
pub type ModelTreeF64 = models::ModelTree<f64>;
pub type ModelTreeF32 = models::ModelTree<f32>;
pub type TreeCostModelF64 = models::TreeCostModel<f64>;
pub type TreeCostModelF32 = models::TreeCostModel<f32>;
pub type FitnessTableF64 = models::FitnessTable<f64>;
pub type FitnessTableF32 = models::FitnessTable<f32>;
pub type M5FitnessF64 = models::M5Fitness<f64>;
pub type SurfaceSpecF64 = synthbench::SurfaceSpec<f64>;
