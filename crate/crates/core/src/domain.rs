//! Knobs, settings, constraints, run records and control decisions.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A discrete tuning parameter with a finite ascending list of level values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Knob<F: Scalar> {
    name: String,
    levels: Vec<F>,
    accurate_level: usize,
}

impl<F: Scalar> Knob<F> {
    pub fn new(name: impl Into<String>, levels: Vec<F>, accurate_level: usize) -> Result<Self> {
        let knob = Knob {
            name: name.into(),
            levels,
            accurate_level,
        };
        knob.validate()?;
        Ok(knob)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidKnob {
            knob: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(fail("empty name".into()));
        }
        if self.levels.is_empty() {
            return Err(fail("no levels".into()));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite level value".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("levels must be strictly ascending".into()));
        }
        if self.accurate_level >= self.levels.len() {
            return Err(fail(format!(
                "accurate level index {} out of range (0..{})",
                self.accurate_level,
                self.levels.len()
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn levels(&self) -> &[F] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn accurate_level(&self) -> usize {
        self.accurate_level
    }

    pub fn value(&self, level: usize) -> F {
        self.levels[level]
    }

    /// Index of the level whose value equals `value` up to a relative 1e-9.
    pub fn level_of(&self, value: F) -> Option<usize> {
        let tol = F::of(1e-9);
        self.levels
            .iter()
            .position(|&l| (l - value).abs() <= tol * F::one().max(l.abs()))
    }

    /// Index step that moves one level away from maximum quality.
    ///
    /// The accurate level is the quality maximum, so lowering moves toward
    /// index 0 unless the accurate level already sits there, in which case
    /// lowering moves upward in value.
    pub fn lowering_direction(&self) -> isize {
        if self.accurate_level == 0 && self.levels.len() > 1 {
            1
        } else {
            -1
        }
    }

    /// The level one quality step below `level`, or `None` at the bottom.
    pub fn lower(&self, level: usize) -> Option<usize> {
        let next = level as isize + self.lowering_direction();
        (next >= 0 && (next as usize) < self.levels.len()).then_some(next as usize)
    }
}

/// Ordered set of knobs: the search lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KnobSpace<F: Scalar> {
    knobs: Vec<Knob<F>>,
}

impl<F: Scalar> KnobSpace<F> {
    pub fn new(knobs: Vec<Knob<F>>) -> Result<Self> {
        let space = KnobSpace { knobs };
        space.validate()?;
        Ok(space)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.knobs.is_empty() {
            return Err(Error::InvalidSpace("at least one knob is required".into()));
        }
        let mut seen = BTreeSet::new();
        for knob in &self.knobs {
            knob.validate()?;
            if !seen.insert(knob.name()) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate knob name `{}`",
                    knob.name()
                )));
            }
        }
        self.checked_len()
            .ok_or_else(|| Error::InvalidSpace("number of settings overflows usize".into()))?;
        Ok(())
    }

    fn checked_len(&self) -> Option<usize> {
        self.knobs
            .iter()
            .try_fold(1usize, |acc, k| acc.checked_mul(k.len()))
    }

    pub fn knobs(&self) -> &[Knob<F>] {
        &self.knobs
    }

    pub fn arity(&self) -> usize {
        self.knobs.len()
    }

    /// Total number of settings (product of level counts).
    pub fn len(&self) -> usize {
        self.checked_len().expect("validated on construction")
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn knob_index(&self, name: &str) -> Option<usize> {
        self.knobs.iter().position(|k| k.name() == name)
    }

    /// Every setting exactly once, in lexicographic index order.
    pub fn settings(&self) -> Settings {
        Settings {
            radices: self.knobs.iter().map(Knob::len).collect(),
            next: Some(vec![0; self.knobs.len()]),
        }
    }

    /// The setting with every knob at its accurate level.
    pub fn accurate_setting(&self) -> KnobSetting {
        KnobSetting(self.knobs.iter().map(Knob::accurate_level).collect())
    }

    pub fn contains(&self, setting: &KnobSetting) -> bool {
        setting.0.len() == self.knobs.len()
            && setting.0.iter().zip(&self.knobs).all(|(&l, k)| l < k.len())
    }

    pub fn check(&self, setting: &KnobSetting) -> Result<()> {
        if self.contains(setting) {
            Ok(())
        } else {
            Err(Error::InvalidSetting {
                setting: setting.to_string(),
                reason: format!("not a member of a {}-knob space", self.arity()),
            })
        }
    }

    /// Level values of a setting, in knob order.
    pub fn values(&self, setting: &KnobSetting) -> Vec<F> {
        setting
            .0
            .iter()
            .zip(&self.knobs)
            .map(|(&l, k)| k.value(l))
            .collect()
    }

    /// Maps level values back to a setting.
    pub fn setting_from_values(&self, values: &[F]) -> Result<KnobSetting> {
        if values.len() != self.arity() {
            return Err(Error::InvalidSetting {
                setting: format!("{values:?}"),
                reason: format!("expected {} knob values", self.arity()),
            });
        }
        values
            .iter()
            .zip(&self.knobs)
            .map(|(&v, k)| {
                k.level_of(v).ok_or_else(|| Error::InvalidSetting {
                    setting: format!("{values:?}"),
                    reason: format!("{v} is not a level of knob `{}`", k.name()),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(KnobSetting)
    }
}

/// Iterator over a [`KnobSpace`] in lexicographic order.
#[derive(Debug, Clone)]
pub struct Settings {
    radices: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for Settings {
    type Item = KnobSetting;

    fn next(&mut self) -> Option<KnobSetting> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut pos = succ.len();
        let mut carried = true;
        while pos > 0 && carried {
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] == self.radices[pos] {
                succ[pos] = 0;
            } else {
                carried = false;
            }
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(KnobSetting(current))
    }
}

/// One level index per knob, in [`KnobSpace`] order.
///
/// The derived ordering is lexicographic on the indices and is the
/// tie-break order used by every controller.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnobSetting(pub Vec<usize>);

impl KnobSetting {
    pub fn levels(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for KnobSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

/// An (error bound, probability) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Constraint<F: Scalar> {
    pub epsilon: F,
    pub pi: F,
}

impl<F: Scalar> Constraint<F> {
    pub fn new(epsilon: F, pi: F) -> Result<Self> {
        if !(epsilon >= F::zero() && epsilon <= F::one()) {
            return Err(Error::InvalidConstraint(format!(
                "epsilon {epsilon} outside [0, 1]"
            )));
        }
        if !(pi > F::zero() && pi <= F::one()) {
            return Err(Error::InvalidConstraint(format!("pi {pi} outside (0, 1]")));
        }
        Ok(Constraint { epsilon, pi })
    }
}

/// Feature values of one input, in the application's feature-name order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct InputFeatures<F: Scalar>(pub Vec<F>);

impl<F: Scalar> InputFeatures<F> {
    pub fn values(&self) -> &[F] {
        &self.0
    }
}

/// One profiled execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RunRecord<F: Scalar> {
    pub input_id: String,
    pub features: InputFeatures<F>,
    pub setting: KnobSetting,
    /// Raw distance to the reference execution, application units.
    pub distance: F,
    /// Normalized error; `None` until the dataset is normalized.
    pub error: Option<F>,
    pub cost: F,
}

impl<F: Scalar> RunRecord<F> {
    pub fn new(
        input_id: impl Into<String>,
        features: InputFeatures<F>,
        setting: KnobSetting,
        distance: F,
        cost: F,
    ) -> Self {
        RunRecord {
            input_id: input_id.into(),
            features,
            setting,
            distance,
            error: None,
            cost,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let fail = |why: &str| {
            Err(Error::InvalidRecord(format!(
                "input `{}` setting {}: {why}",
                self.input_id, self.setting
            )))
        };
        if self.input_id.is_empty() {
            return fail("empty input id");
        }
        if !(self.cost.is_finite() && self.cost > F::zero()) {
            return fail("cost must be finite and > 0");
        }
        if !(self.distance.is_finite() && self.distance >= F::zero()) {
            return fail("distance must be finite and >= 0");
        }
        if self.features.0.iter().any(|v| !v.is_finite()) {
            return fail("non-finite feature value");
        }
        if let Some(e) = self.error {
            if !(e >= F::zero() && e <= F::one()) {
                return fail("normalized error outside [0, 1]");
            }
        }
        Ok(())
    }
}

/// The controller's answer for one (input, constraint) query.
///
/// Feasibility is derived from the presence of a setting, so the two can
/// never disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ControlDecision<F: Scalar> {
    pub setting: Option<KnobSetting>,
    pub predicted_cost: Option<F>,
    pub predicted_fitness: Option<F>,
}

impl<F: Scalar> ControlDecision<F> {
    pub fn infeasible() -> Self {
        ControlDecision {
            setting: None,
            predicted_cost: None,
            predicted_fitness: None,
        }
    }

    pub fn chosen(setting: KnobSetting, predicted_cost: F, predicted_fitness: F) -> Self {
        ControlDecision {
            setting: Some(setting),
            predicted_cost: Some(predicted_cost),
            predicted_fitness: Some(predicted_fitness),
        }
    }

    pub fn feasible(&self) -> bool {
        self.setting.is_some()
    }
}

impl<F: Scalar> fmt::Display for ControlDecision<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.setting {
            Some(s) => write!(f, "{s}"),
            None => write!(f, "NA"),
        }
    }
}
