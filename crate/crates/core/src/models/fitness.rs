//! Fitness models: the probability mass of inputs whose normalized error at a
//! knob setting is within an error bound.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::tree::{train_model_tree, ModelTree, TreeParams};
use super::FitnessModel;
use crate::dataset::Dataset;
use crate::domain::{KnobSetting, KnobSpace};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-input probability weights over an ordered input list.
///
/// With uniform weights the mass of `m` matching inputs is computed as
/// `m / n`, so a setting matched by every input has mass exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
struct InputMass<F: Scalar> {
    inputs: Vec<String>,
    /// Raw weights; `None` when uniform.
    weights: Option<Vec<F>>,
}

impl<F: Scalar> InputMass<F> {
    fn from_dataset(ds: &Dataset<F>) -> Result<Self> {
        let inputs: Vec<String> = ds.inputs().into_iter().collect();
        if inputs.is_empty() {
            return Err(Error::Model("no inputs to train on".into()));
        }
        let weights = ds
            .has_custom_weights()
            .then(|| inputs.iter().map(|i| ds.weight(i)).collect::<Vec<F>>());
        if let Some(w) = &weights {
            if w.iter().copied().sum::<F>() <= F::zero() {
                return Err(Error::Model("input weights sum to zero".into()));
            }
        }
        Ok(InputMass { inputs, weights })
    }

    /// Mass of the inputs at positions flagged in `matches`.
    fn mass(&self, matches: &[bool]) -> F {
        match &self.weights {
            None => {
                let m = matches.iter().filter(|&&b| b).count();
                F::of_usize(m) / F::of_usize(self.inputs.len())
            }
            Some(w) => {
                let hit = w
                    .iter()
                    .zip(matches)
                    .filter(|(_, &b)| b)
                    .map(|(&v, _)| v)
                    .sum::<F>();
                hit / w.iter().copied().sum::<F>()
            }
        }
    }

    fn probabilities(&self) -> BTreeMap<String, F> {
        let n = self.inputs.len();
        let ones = vec![false; n];
        self.inputs
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let mut m = ones.clone();
                m[i] = true;
                (id.clone(), self.mass(&m))
            })
            .collect()
    }
}

/// Every profiled setting's per-input errors, aligned with an input list.
fn error_matrix<F: Scalar>(
    ds: &Dataset<F>,
    inputs: &[String],
) -> Result<BTreeMap<KnobSetting, Vec<Option<F>>>> {
    if !ds.is_normalized() {
        return Err(Error::Model("dataset must be normalized first".into()));
    }
    let pos: BTreeMap<&str, usize> = inputs
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut rows: BTreeMap<KnobSetting, Vec<Option<F>>> = BTreeMap::new();
    for r in ds.records() {
        let row = rows
            .entry(r.setting.clone())
            .or_insert_with(|| vec![None; inputs.len()]);
        row[pos[r.input_id.as_str()]] = r.error;
    }
    Ok(rows)
}

fn validate_grid<F: Scalar>(grid: &[F]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Model("empty epsilon grid".into()));
    }
    if grid.iter().any(|&e| !(e >= F::zero() && e <= F::one())) {
        return Err(Error::Model("epsilon grid values must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Model("epsilon grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Index of the largest grid value `<= epsilon`.
fn floor_index<F: Scalar>(grid: &[F], epsilon: F) -> Option<usize> {
    let count = grid.partition_point(|&g| g <= epsilon);
    count.checked_sub(1)
}

/// Explicit fitness table over (knob setting, epsilon grid point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FitnessTable<F: Scalar> {
    pub space: KnobSpace<F>,
    pub epsilon_grid: Vec<F>,
    #[serde(with = "pairs")]
    pub rows: BTreeMap<KnobSetting, Vec<F>>,
    /// Normalized probability `p(i)` of each training input.
    pub input_weights: BTreeMap<String, F>,
}

pub(crate) mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(
        map: &BTreeMap<K, V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Vec::<(K, V)>::deserialize(d).map(|v| v.into_iter().collect())
    }
}

/// Builds the fitness table from normalized training data.
///
/// Cell `(k, e)` holds the summed probability of training inputs whose error
/// at setting `k` is `<= epsilon_grid[e]`. Inputs that never ran `k`
/// contribute nothing to its row.
pub fn train_fitness_table<F: Scalar>(train: &Dataset<F>, epsilon_grid: &[F]) -> Result<FitnessTable<F>> {
    validate_grid(epsilon_grid)?;
    let mass = InputMass::from_dataset(train)?;
    let matrix = error_matrix(train, &mass.inputs)?;
    let mut incomplete = 0usize;
    let mut rows = BTreeMap::new();
    for (setting, errors) in matrix {
        if errors.iter().any(Option::is_none) {
            incomplete += 1;
        }
        let row = epsilon_grid
            .iter()
            .map(|&eps| {
                let hits: Vec<bool> = errors
                    .iter()
                    .map(|e| e.is_some_and(|e| e <= eps))
                    .collect();
                mass.mass(&hits)
            })
            .collect();
        rows.insert(setting, row);
    }
    if incomplete > 0 {
        warn!("{incomplete} settings were not profiled on every training input; missing inputs add no fitness mass");
    }
    Ok(FitnessTable {
        space: train.space().clone(),
        epsilon_grid: epsilon_grid.to_vec(),
        rows,
        input_weights: mass.probabilities(),
    })
}

impl<F: Scalar> FitnessTable<F> {
    pub fn row(&self, setting: &KnobSetting) -> Option<&[F]> {
        self.rows.get(setting).map(Vec::as_slice)
    }
}

impl<F: Scalar> FitnessModel<F> for FitnessTable<F> {
    /// Value at the largest grid epsilon not above `epsilon`; 0 for
    /// unprofiled settings or an epsilon below the grid.
    fn fitness(&self, epsilon: F, setting: &KnobSetting) -> F {
        match (floor_index(&self.epsilon_grid, epsilon), self.rows.get(setting)) {
            (Some(i), Some(row)) => row[i],
            _ => F::zero(),
        }
    }
}

/// Fitness evaluated exactly from measured errors at any epsilon.
///
/// Used for the oracle controller and as the "measured" side when scoring a
/// fitness model on test inputs.
#[derive(Debug, Clone)]
pub struct ExactFitness<F: Scalar> {
    mass: InputMass<F>,
    errors: BTreeMap<KnobSetting, Vec<Option<F>>>,
}

impl<F: Scalar> ExactFitness<F> {
    pub fn new(ds: &Dataset<F>) -> Result<Self> {
        let mass = InputMass::from_dataset(ds)?;
        let errors = error_matrix(ds, &mass.inputs)?;
        Ok(ExactFitness { mass, errors })
    }

    pub fn settings(&self) -> impl Iterator<Item = &KnobSetting> {
        self.errors.keys()
    }

    /// Whether every input has a record for `setting`.
    pub fn fully_profiled(&self, setting: &KnobSetting) -> bool {
        self.errors
            .get(setting)
            .is_some_and(|row| row.iter().all(Option::is_some))
    }
}

impl<F: Scalar> FitnessModel<F> for ExactFitness<F> {
    fn fitness(&self, epsilon: F, setting: &KnobSetting) -> F {
        match self.errors.get(setting) {
            Some(row) => {
                let hits: Vec<bool> = row.iter().map(|e| e.is_some_and(|e| e <= epsilon)).collect();
                self.mass.mass(&hits)
            }
            None => F::zero(),
        }
    }
}

/// Model-tree regressor of fitness over `knob values ++ [epsilon]`.
///
/// Predictions are clamped to [0, 1] and made monotone in epsilon by a
/// running maximum over the grid points not above the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct M5Fitness<F: Scalar> {
    pub space: KnobSpace<F>,
    pub epsilon_grid: Vec<F>,
    pub tree: ModelTree<F>,
}

pub fn train_fitness_m5<F: Scalar>(
    train: &Dataset<F>,
    epsilon_grid: &[F],
    params: TreeParams,
) -> Result<M5Fitness<F>> {
    let table = train_fitness_table(train, epsilon_grid)?;
    M5Fitness::from_table(&table, params)
}

impl<F: Scalar> M5Fitness<F> {
    pub fn from_table(table: &FitnessTable<F>, params: TreeParams) -> Result<Self> {
        let mut points = Vec::with_capacity(table.rows.len() * table.epsilon_grid.len());
        for (setting, row) in &table.rows {
            let values = table.space.values(setting);
            for (&eps, &v) in table.epsilon_grid.iter().zip(row) {
                let mut x = values.clone();
                x.push(eps);
                points.push((x, v));
            }
        }
        Ok(M5Fitness {
            space: table.space.clone(),
            epsilon_grid: table.epsilon_grid.clone(),
            tree: train_model_tree(&points, params)?,
        })
    }

    fn raw(&self, values: &mut Vec<F>, eps: F) -> F {
        values.push(eps);
        let v = self.tree.predict(values);
        values.pop();
        if v.is_nan() {
            F::zero()
        } else {
            v.max(F::zero()).min(F::one())
        }
    }
}

impl<F: Scalar> FitnessModel<F> for M5Fitness<F> {
    fn fitness(&self, epsilon: F, setting: &KnobSetting) -> F {
        let Some(last) = floor_index(&self.epsilon_grid, epsilon) else {
            return F::zero();
        };
        let mut values = self.space.values(setting);
        self.epsilon_grid[..=last]
            .iter()
            .fold(F::zero(), |acc, &g| acc.max(self.raw(&mut values, g)))
    }
}

/// Settings that appear for some but not all inputs of a dataset.
pub fn partially_profiled<F: Scalar>(ds: &Dataset<F>) -> BTreeSet<KnobSetting> {
    let inputs = ds.inputs();
    let mut counts: BTreeMap<&KnobSetting, usize> = BTreeMap::new();
    for r in ds.records() {
        *counts.entry(&r.setting).or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|(_, c)| *c < inputs.len())
        .map(|(s, _)| s.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{InputFeatures, Knob, RunRecord};

    fn space() -> KnobSpace<f64> {
        KnobSpace::new(vec![Knob::new("k", vec![1.0, 2.0, 3.0], 2).unwrap()]).unwrap()
    }

    /// Errors per input at the middle setting; the accurate setting has
    /// error 0 and the lowest setting error 1 for every input.
    fn dataset(middle: &[f64]) -> Dataset<f64> {
        let mut ds = Dataset::new(space(), vec![]);
        for (i, &e) in middle.iter().enumerate() {
            for (level, d) in [(0usize, 1.0), (1, e), (2, 0.0)] {
                ds.push(RunRecord::new(
                    format!("in{i}"),
                    InputFeatures::default(),
                    KnobSetting(vec![level]),
                    d,
                    1.0,
                ))
                .unwrap();
            }
        }
        ds.normalize_errors()
    }

    #[test]
    fn counts_inputs_within_bound() {
        let ds = dataset(&[0.1, 0.2, 0.6, 0.05]);
        let t = train_fitness_table(&ds, &[0.0, 0.3, 1.0]).unwrap();
        let k = KnobSetting(vec![1]);
        assert_eq!(t.fitness(0.3, &k), 0.75);
        assert_eq!(t.fitness(1.0, &k), 1.0);
        assert_eq!(t.fitness(0.0, &k), 0.0);
        assert_eq!(t.fitness(0.0, &KnobSetting(vec![2])), 1.0);
        assert_eq!(t.input_weights.values().copied().sum::<f64>(), 1.0);
    }

    #[test]
    fn floors_between_grid_points() {
        let ds = dataset(&[0.1, 0.2, 0.6, 0.05]);
        let t = train_fitness_table(&ds, &[0.0, 0.3, 1.0]).unwrap();
        let k = KnobSetting(vec![1]);
        // 0.25 floors to the 0.0 column; 0.99 floors to the 0.3 column
        assert_eq!(t.fitness(0.25, &k), 0.0);
        assert_eq!(t.fitness(0.99, &k), 0.75);
    }

    #[test]
    fn reference_only_at_epsilon_zero() {
        // five inputs, only the first attains error 0 at the middle setting
        let ds = dataset(&[0.0, 0.5, 0.5, 0.5, 0.5]);
        let t = train_fitness_table(&ds, &[0.0, 1.0]).unwrap();
        assert_eq!(t.fitness(0.0, &KnobSetting(vec![1])), 0.2);
    }

    #[test]
    fn missing_settings_contribute_no_mass() {
        let mut ds = Dataset::new(space(), vec![]);
        for (id, level) in [("a", 0), ("a", 1), ("b", 0)] {
            ds.push(RunRecord::new(id, InputFeatures::default(), KnobSetting(vec![level]), level as f64, 1.0))
                .unwrap();
        }
        ds.push(RunRecord::new("b", InputFeatures::default(), KnobSetting(vec![2]), 5.0, 1.0))
            .unwrap();
        let ds = ds.normalize_errors();
        let t = train_fitness_table(&ds, &[0.0, 1.0]).unwrap();
        assert_eq!(t.fitness(1.0, &KnobSetting(vec![1])), 0.5);
        assert_eq!(partially_profiled(&ds).len(), 2);
    }

    #[test]
    fn weights_shift_mass() {
        let mut ds = dataset(&[0.1, 0.9]);
        ds.set_weight("in0", 3.0).unwrap();
        let ds = ds.normalize_errors();
        let t = train_fitness_table(&ds, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(t.fitness(0.5, &KnobSetting(vec![1])), 0.75);
        assert_eq!(t.fitness(1.0, &KnobSetting(vec![1])), 1.0);
    }

    #[test]
    fn needs_normalized_data_and_valid_grid() {
        let mut raw = Dataset::new(space(), vec![]);
        raw.push(RunRecord::new("a", InputFeatures::default(), KnobSetting(vec![0]), 1.0, 1.0))
            .unwrap();
        assert!(train_fitness_table(&raw, &[0.0, 1.0]).is_err());
        let ds = dataset(&[0.5]);
        assert!(train_fitness_table(&ds, &[]).is_err());
        assert!(train_fitness_table(&ds, &[0.5, 0.2]).is_err());
        assert!(train_fitness_table(&ds, &[0.0, 1.5]).is_err());
    }

    #[test]
    fn exact_fitness_matches_table_on_grid() {
        let ds = dataset(&[0.1, 0.2, 0.6, 0.05, 0.33]);
        let grid = [0.0, 0.1, 0.2, 0.3, 0.5, 1.0];
        let t = train_fitness_table(&ds, &grid).unwrap();
        let exact = ExactFitness::new(&ds).unwrap();
        for s in ds.space().settings() {
            for &e in &grid {
                assert_eq!(t.fitness(e, &s), exact.fitness(e, &s));
            }
        }
    }

    #[test]
    fn m5_fitness_exact_params_reproduce_table() {
        let ds = dataset(&[0.1, 0.2, 0.6, 0.05, 0.33]);
        let grid = [0.0, 0.1, 0.2, 0.3, 0.5, 1.0];
        let t = train_fitness_table(&ds, &grid).unwrap();
        let m5 = M5Fitness::from_table(&t, TreeParams::exact()).unwrap();
        for (s, row) in &t.rows {
            for (&e, &v) in grid.iter().zip(row) {
                assert!((m5.fitness(e, s) - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn m5_fitness_is_monotone_in_epsilon() {
        let ds = dataset(&[0.1, 0.2, 0.6, 0.05, 0.33, 0.8, 0.45]);
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let m5 = train_fitness_m5(&ds, &grid, TreeParams::default()).unwrap();
        for s in ds.space().settings() {
            let vals: Vec<f64> = grid.iter().map(|&e| m5.fitness(e, &s)).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
