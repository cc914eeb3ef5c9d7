//! Predicted-versus-measured comparisons for cost and fitness models.

use std::collections::BTreeMap;

use log::info;

use super::fitness::ExactFitness;
use super::{CostModel, FitnessModel};
use crate::dataset::Dataset;
use crate::domain::{InputFeatures, KnobSetting};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CostPoint<F: Scalar> {
    pub input_id: String,
    pub setting: KnobSetting,
    pub predicted: F,
    pub measured: F,
}

/// One `(predicted, measured)` pair per test record.
pub fn evaluate_cost_accuracy<F: Scalar>(model: &dyn CostModel<F>, test: &Dataset<F>) -> Vec<CostPoint<F>> {
    test.records()
        .map(|r| CostPoint {
            input_id: r.input_id.clone(),
            setting: r.setting.clone(),
            predicted: model.predict_cost(&r.features, &r.setting),
            measured: r.cost,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessPoint<F: Scalar> {
    pub setting: KnobSetting,
    pub epsilon: F,
    pub predicted: F,
    pub measured: F,
}

#[derive(Debug, Clone)]
pub struct FitnessAccuracy<F: Scalar> {
    pub points: Vec<FitnessPoint<F>>,
    /// Settings of the space not profiled on every test input.
    pub skipped_settings: usize,
}

impl<F: Scalar> FitnessAccuracy<F> {
    /// Fraction of points where the model under-states measured fitness.
    pub fn under_prediction_fraction(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let under = self.points.iter().filter(|p| p.predicted < p.measured).count();
        under as f64 / self.points.len() as f64
    }

    pub fn mean_abs_deviation(&self) -> F {
        if self.points.is_empty() {
            return F::zero();
        }
        self.points
            .iter()
            .map(|p| (p.predicted - p.measured).abs())
            .sum::<F>()
            / F::of_usize(self.points.len())
    }
}

/// Compares model fitness with the exact fitness measured over `test`'s
/// inputs at every (fully profiled setting, grid epsilon) pair.
pub fn evaluate_fitness_accuracy<F: Scalar>(
    model: &dyn FitnessModel<F>,
    test: &Dataset<F>,
    epsilon_grid: &[F],
) -> Result<FitnessAccuracy<F>> {
    let measured = ExactFitness::new(test)?;
    let complete: Vec<KnobSetting> = measured
        .settings()
        .filter(|s| measured.fully_profiled(s))
        .cloned()
        .collect();
    let skipped_settings = test.space().len() - complete.len();
    if skipped_settings > 0 {
        info!("fitness accuracy: {skipped_settings} settings not profiled on every test input were skipped");
    }
    let mut points = Vec::with_capacity(complete.len() * epsilon_grid.len());
    for s in &complete {
        for &eps in epsilon_grid {
            points.push(FitnessPoint {
                setting: s.clone(),
                epsilon: eps,
                predicted: model.fitness(eps, s),
                measured: measured.fitness(eps, s),
            });
        }
    }
    Ok(FitnessAccuracy {
        points,
        skipped_settings,
    })
}

/// Cost model that replays measured costs, keyed by input features and
/// setting. Unknown pairs predict `+inf`, so they never win an argmin.
#[derive(Debug, Clone)]
pub struct MeasuredCostModel<F: Scalar> {
    costs: BTreeMap<(Vec<u64>, KnobSetting), F>,
}

fn feature_key<F: Scalar>(features: &InputFeatures<F>) -> Vec<u64> {
    features.0.iter().map(|v| v.as_f64().to_bits()).collect()
}

impl<F: Scalar> MeasuredCostModel<F> {
    pub fn new(ds: &Dataset<F>) -> Self {
        MeasuredCostModel {
            costs: ds
                .records()
                .map(|r| ((feature_key(&r.features), r.setting.clone()), r.cost))
                .collect(),
        }
    }

    /// Overrides the cost of `setting` for every input.
    pub fn with_setting_cost(mut self, setting: &KnobSetting, cost: F) -> Self {
        for ((_, s), c) in self.costs.iter_mut() {
            if s == setting {
                *c = cost;
            }
        }
        self
    }
}

impl<F: Scalar> CostModel<F> for MeasuredCostModel<F> {
    fn predict_cost(&self, features: &InputFeatures<F>, setting: &KnobSetting) -> F {
        self.costs
            .get(&(feature_key(features), setting.clone()))
            .copied()
            .unwrap_or_else(F::infinity)
    }
}
