//! Trainable proxies for the cost function and the fitness function.
//!
//! Every cost model implements [`CostModel`] and every fitness model
//! implements [`FitnessModel`]; controllers only see those two traits.

pub mod accuracy;
pub mod fitness;
pub mod linear;
pub mod persist;
pub mod tree;

use crate::domain::{InputFeatures, KnobSetting};
use crate::scalar::Scalar;

pub use accuracy::{
    evaluate_cost_accuracy, evaluate_fitness_accuracy, CostPoint, FitnessAccuracy, FitnessPoint,
    MeasuredCostModel,
};
pub use fitness::{train_fitness_m5, train_fitness_table, ExactFitness, FitnessTable, M5Fitness};
pub use linear::{train_linear_baseline, LinearCostModel, LinearFitnessModel, LinearModel};
pub use tree::{sdr, train_model_tree, ModelTree, TreeCostModel, TreeParams};

/// Smallest cost a model will predict.
pub const COST_FLOOR: f64 = 1e-9;

/// Proxy for the cost of running an input at a knob setting.
pub trait CostModel<F: Scalar>: Send + Sync {
    /// Predicted cost, always `> 0`.
    fn predict_cost(&self, features: &InputFeatures<F>, setting: &KnobSetting) -> F;
}

/// Proxy for the fitness of a knob setting at an error bound.
pub trait FitnessModel<F: Scalar>: Send + Sync {
    /// Predicted probability in `[0, 1]`.
    fn fitness(&self, epsilon: F, setting: &KnobSetting) -> F;
}

impl<F: Scalar, T: CostModel<F> + ?Sized> CostModel<F> for &T {
    fn predict_cost(&self, features: &InputFeatures<F>, setting: &KnobSetting) -> F {
        (**self).predict_cost(features, setting)
    }
}

impl<F: Scalar, T: FitnessModel<F> + ?Sized> FitnessModel<F> for &T {
    fn fitness(&self, epsilon: F, setting: &KnobSetting) -> F {
        (**self).fitness(epsilon, setting)
    }
}

impl<F: Scalar, T: CostModel<F> + ?Sized> CostModel<F> for Box<T> {
    fn predict_cost(&self, features: &InputFeatures<F>, setting: &KnobSetting) -> F {
        (**self).predict_cost(features, setting)
    }
}

impl<F: Scalar, T: FitnessModel<F> + ?Sized> FitnessModel<F> for Box<T> {
    fn fitness(&self, epsilon: F, setting: &KnobSetting) -> F {
        (**self).fitness(epsilon, setting)
    }
}
