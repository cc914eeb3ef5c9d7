//! Profiled runs: ingestion, per-input error normalization, train/test
//! splitting and per-input Pareto fronts.

mod profile;

pub use profile::{read_profile, write_profile, ProfileSchema};

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{InputFeatures, KnobSetting, KnobSpace, RunRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

type RecordKey = (String, KnobSetting);

/// A set of run records over one knob space.
///
/// Records are keyed by `(input_id, setting)` and always iterate in that
/// order, which is also the canonical on-disk order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F: Scalar> {
    space: KnobSpace<F>,
    feature_names: Vec<String>,
    records: BTreeMap<RecordKey, RunRecord<F>>,
    weights: BTreeMap<String, F>,
    degenerate: BTreeSet<String>,
    normalized: bool,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(space: KnobSpace<F>, feature_names: Vec<String>) -> Self {
        Dataset {
            space,
            feature_names,
            records: BTreeMap::new(),
            weights: BTreeMap::new(),
            degenerate: BTreeSet::new(),
            normalized: false,
        }
    }

    pub fn space(&self) -> &KnobSpace<F> {
        &self.space
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Adds one record. Duplicated `(input, setting)` pairs are rejected.
    pub fn push(&mut self, record: RunRecord<F>) -> Result<()> {
        record.validate()?;
        self.space.check(&record.setting)?;
        if record.features.0.len() != self.feature_names.len() {
            return Err(Error::InvalidRecord(format!(
                "input `{}`: {} feature values for {} feature names",
                record.input_id,
                record.features.0.len(),
                self.feature_names.len()
            )));
        }
        let key = (record.input_id.clone(), record.setting.clone());
        if self.records.contains_key(&key) {
            return Err(Error::InvalidRecord(format!(
                "duplicate record for input `{}` setting {}",
                key.0, key.1
            )));
        }
        self.records.insert(key, record);
        self.normalized = false;
        Ok(())
    }

    pub fn records(&self) -> impl Iterator<Item = &RunRecord<F>> {
        self.records.values()
    }

    pub fn record(&self, input_id: &str, setting: &KnobSetting) -> Option<&RunRecord<F>> {
        self.records.get(&(input_id.to_string(), setting.clone()))
    }

    pub fn contains_key(&self, input_id: &str, setting: &KnobSetting) -> bool {
        self.record(input_id, setting).is_some()
    }

    pub fn records_for<'a>(&'a self, input_id: &'a str) -> impl Iterator<Item = &'a RunRecord<F>> {
        self.records
            .range((input_id.to_string(), KnobSetting(Vec::new()))..)
            .take_while(move |((id, _), _)| id == input_id)
            .map(|(_, r)| r)
    }

    /// Input ids in sorted order.
    pub fn inputs(&self) -> BTreeSet<String> {
        self.records.keys().map(|(id, _)| id.clone()).collect()
    }

    pub fn has_input(&self, input_id: &str) -> bool {
        self.records_for(input_id).next().is_some()
    }

    pub fn features_of<'a>(&'a self, input_id: &'a str) -> Option<&'a InputFeatures<F>> {
        self.records_for(input_id).next().map(|r| &r.features)
    }

    /// Sets the probability weight of an input (unnormalized; default 1).
    pub fn set_weight(&mut self, input_id: &str, weight: F) -> Result<()> {
        if !(weight.is_finite() && weight >= F::zero()) {
            return Err(Error::InvalidRecord(format!(
                "input `{input_id}`: weight must be finite and >= 0"
            )));
        }
        if weight == F::one() {
            self.weights.remove(input_id);
        } else {
            self.weights.insert(input_id.to_string(), weight);
        }
        Ok(())
    }

    pub fn weight(&self, input_id: &str) -> F {
        self.weights.get(input_id).copied().unwrap_or_else(F::one)
    }

    pub fn has_custom_weights(&self) -> bool {
        !self.weights.is_empty()
    }

    /// Inputs whose distances were all equal at normalization time.
    pub fn degenerate_inputs(&self) -> &BTreeSet<String> {
        &self.degenerate
    }

    /// `(d_min, d_max)` over the records present for an input.
    pub fn distance_bounds(&self, input_id: &str) -> Option<(F, F)> {
        self.records_for(input_id).fold(None, |acc, r| match acc {
            None => Some((r.distance, r.distance)),
            Some((lo, hi)) => Some((lo.min(r.distance), hi.max(r.distance))),
        })
    }

    /// The reference execution of an input: its minimum-distance record,
    /// lexicographically smallest setting on ties.
    pub fn reference_record<'a>(&'a self, input_id: &'a str) -> Option<&'a RunRecord<F>> {
        self.records_for(input_id).fold(None, |best: Option<&RunRecord<F>>, r| match best {
            Some(b) if b.distance <= r.distance => Some(b),
            _ => Some(r),
        })
    }

    /// Rescales every record's distance into `(d - d_min) / (d_max - d_min)`
    /// using the extremes observed for the same input.
    ///
    /// Inputs whose distances are all equal get error 0 everywhere and are
    /// listed in [`Dataset::degenerate_inputs`].
    pub fn normalize_errors(mut self) -> Self {
        let mut degenerate = BTreeSet::new();
        let bounds: BTreeMap<String, (F, F)> = self
            .inputs()
            .into_iter()
            .filter_map(|id| self.distance_bounds(&id).map(|b| (id, b)))
            .collect();
        for ((id, _), record) in self.records.iter_mut() {
            let (lo, hi) = bounds[id];
            let span = hi - lo;
            record.error = Some(if span > F::zero() {
                ((record.distance - lo) / span).max(F::zero()).min(F::one())
            } else {
                degenerate.insert(id.clone());
                F::zero()
            });
        }
        for id in &degenerate {
            warn!("input `{id}` has a single distinct distance; its errors are all set to 0");
        }
        self.degenerate = degenerate;
        self.normalized = true;
        self
    }

    /// A dataset holding only the records of the given inputs.
    pub fn subset(&self, inputs: &BTreeSet<String>) -> Self {
        Dataset {
            space: self.space.clone(),
            feature_names: self.feature_names.clone(),
            records: self
                .records
                .iter()
                .filter(|((id, _), _)| inputs.contains(id))
                .map(|(k, r)| (k.clone(), r.clone()))
                .collect(),
            weights: self
                .weights
                .iter()
                .filter(|(id, _)| inputs.contains(*id))
                .map(|(k, w)| (k.clone(), *w))
                .collect(),
            degenerate: self
                .degenerate
                .iter()
                .filter(|id| inputs.contains(*id))
                .cloned()
                .collect(),
            normalized: self.normalized,
        }
    }

    /// Partitions *inputs* into train and test suites.
    ///
    /// Sorted input ids are shuffled by a ChaCha8 generator seeded with
    /// `seed`; the first `ceil(ratio * N)` go to training.
    pub fn split(&self, ratio: f64, seed: u64) -> Result<SplitDataset<F>> {
        let (train_ids, test_ids) = split_inputs(&self.inputs(), ratio, seed)?;
        Ok(SplitDataset {
            train: self.subset(&train_ids),
            test: self.subset(&test_ids),
            ratio,
            seed,
        })
    }

    /// Non-dominated `(error, cost)` points of one input, ascending error.
    ///
    /// A point is dominated when another has error and cost both `<=` with
    /// at least one strict; exact duplicates do not dominate each other.
    pub fn per_input_pareto(&self, input_id: &str) -> Result<Vec<(F, F)>> {
        if !self.has_input(input_id) {
            return Err(Error::UnknownInput(input_id.to_string()));
        }
        let mut points = Vec::new();
        for r in self.records_for(input_id) {
            let e = r.error.ok_or_else(|| {
                Error::InvalidRecord("Pareto fronts need a normalized dataset".into())
            })?;
            points.push((e, r.cost));
        }
        Ok(pareto_front(points))
    }
}

/// Number of training inputs for `n` inputs at `ratio`.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Splits a set of input ids; shared by [`Dataset::split`] and the CLI.
pub fn split_inputs(
    inputs: &BTreeSet<String>,
    ratio: f64,
    seed: u64,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Split(format!("ratio {ratio} outside (0, 1)")));
    }
    let n = inputs.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 inputs, have {n}")));
    }
    let n_train = train_count(n, ratio);
    if n_train == 0 || n_train >= n {
        return Err(Error::Split(format!(
            "ratio {ratio} over {n} inputs leaves an empty train or test suite"
        )));
    }
    let mut ids: Vec<String> = inputs.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let test = ids.split_off(n_train);
    Ok((ids.into_iter().collect(), test.into_iter().collect()))
}

pub(crate) fn pareto_front<F: Scalar>(mut points: Vec<(F, F)>) -> Vec<(F, F)> {
    points.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    let mut front: Vec<(F, F)> = Vec::new();
    for p in points {
        match front.last() {
            None => front.push(p),
            Some(&last) if last == p => front.push(p),
            Some(&last) if p.1 < last.1 => front.push(p),
            _ => {}
        }
    }
    front
}

/// Train/test partition of a dataset by input.
#[derive(Debug, Clone)]
pub struct SplitDataset<F: Scalar> {
    pub train: Dataset<F>,
    pub test: Dataset<F>,
    pub ratio: f64,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Knob;
    use proptest::prelude::*;

    fn space() -> KnobSpace<f64> {
        KnobSpace::new(vec![Knob::new("k", vec![1.0, 2.0, 3.0], 2).unwrap()]).unwrap()
    }

    fn ds_with(distances: &[(&str, usize, f64)]) -> Dataset<f64> {
        let mut ds = Dataset::new(space(), vec![]);
        for &(id, level, d) in distances {
            ds.push(RunRecord::new(
                id,
                InputFeatures::default(),
                KnobSetting(vec![level]),
                d,
                1.0 + level as f64,
            ))
            .unwrap();
        }
        ds
    }

    #[test]
    fn normalization_examples() {
        let ds = ds_with(&[("a", 0, 10.0), ("a", 1, 7.5), ("a", 2, 5.0)]).normalize_errors();
        let errs: Vec<f64> = ds.records().map(|r| r.error.unwrap()).collect();
        assert_eq!(errs, vec![1.0, 0.5, 0.0]);
        assert!(ds.degenerate_inputs().is_empty());
        assert_eq!(ds.reference_record("a").unwrap().setting, KnobSetting(vec![2]));
    }

    #[test]
    fn degenerate_input_is_flagged_with_zero_errors() {
        let ds = ds_with(&[("a", 0, 3.0), ("a", 1, 3.0), ("b", 0, 1.0), ("b", 1, 2.0)])
            .normalize_errors();
        assert!(ds.degenerate_inputs().contains("a"));
        assert!(ds.records_for("a").all(|r| r.error == Some(0.0)));
        assert_eq!(ds.record("b", &KnobSetting(vec![1])).unwrap().error, Some(1.0));
    }

    #[test]
    fn rejects_duplicates_and_bad_records() {
        let mut ds = ds_with(&[("a", 0, 1.0)]);
        let dup = RunRecord::new("a", InputFeatures::default(), KnobSetting(vec![0]), 2.0, 1.0);
        assert!(ds.push(dup).is_err());
        let bad_cost = RunRecord::new("a", InputFeatures::default(), KnobSetting(vec![1]), 2.0, 0.0);
        assert!(ds.push(bad_cost).is_err());
        let bad_setting =
            RunRecord::new("a", InputFeatures::default(), KnobSetting(vec![7]), 2.0, 1.0);
        assert!(ds.push(bad_setting).is_err());
        let bad_features =
            RunRecord::new("a", InputFeatures(vec![1.0]), KnobSetting(vec![1]), 2.0, 1.0);
        assert!(ds.push(bad_features).is_err());
    }

    fn n_inputs(n: usize) -> Dataset<f64> {
        let mut ds = Dataset::new(space(), vec![]);
        for i in 0..n {
            ds.push(RunRecord::new(
                format!("in{i:03}"),
                InputFeatures::default(),
                KnobSetting(vec![0]),
                1.0,
                1.0,
            ))
            .unwrap();
        }
        ds
    }

    #[test]
    fn split_counts_match_benchmark_table() {
        for (n, train, test) in [(43, 33, 10), (12, 9, 3), (128, 96, 32)] {
            let s = n_inputs(n).split(0.75, 7).unwrap();
            assert_eq!((s.train.inputs().len(), s.test.inputs().len()), (train, test));
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let ds = n_inputs(4);
        let a = ds.split(0.5, 11).unwrap();
        let b = ds.split(0.5, 11).unwrap();
        assert_eq!(a.train.inputs().len(), 2);
        assert_eq!(a.train.inputs(), b.train.inputs());
        assert_eq!(a.test.inputs(), b.test.inputs());
    }

    #[test]
    fn split_errors() {
        assert!(n_inputs(1).split(0.5, 0).is_err());
        assert!(n_inputs(4).split(0.0, 0).is_err());
        assert!(n_inputs(4).split(1.0, 0).is_err());
        assert!(n_inputs(3).split(0.99, 0).is_err());
    }

    fn brute_force_front(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let dominated = |p: &(f64, f64)| {
            points
                .iter()
                .any(|q| q.0 <= p.0 && q.1 <= p.1 && (q.0 < p.0 || q.1 < p.1))
        };
        let mut front: Vec<_> = points.iter().copied().filter(|p| !dominated(p)).collect();
        front.sort_by(|a, b| a.partial_cmp(b).unwrap());
        front
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(
            pareto_front(vec![(0.1, 10.0), (0.2, 5.0), (0.3, 8.0)]),
            vec![(0.1, 10.0), (0.2, 5.0)]
        );
        assert_eq!(pareto_front(vec![(0.4, 3.0)]), vec![(0.4, 3.0)]);
        assert_eq!(pareto_front(vec![(0.1, 5.0), (0.2, 5.0)]), vec![(0.1, 5.0)]);
        let ds = ds_with(&[("a", 0, 10.0), ("a", 1, 7.5), ("a", 2, 5.0)]);
        assert!(ds.per_input_pareto("a").is_err(), "not normalized");
        let ds = ds.normalize_errors();
        assert!(matches!(ds.per_input_pareto("zz"), Err(Error::UnknownInput(_))));
        assert_eq!(ds.per_input_pareto("a").unwrap().len(), 3);
    }

    proptest! {
        #[test]
        fn pareto_matches_brute_force(pts in prop::collection::vec((0u8..6, 0u8..6), 1..25)) {
            let points: Vec<(f64, f64)> = pts.iter().map(|&(e, c)| (e as f64 / 5.0, c as f64 + 1.0)).collect();
            let fast = pareto_front(points.clone());
            prop_assert_eq!(fast.clone(), brute_force_front(&points));
            prop_assert!(fast.iter().all(|p| points.contains(p)));
        }

        #[test]
        fn normalization_is_affine_invariant(
            ds in prop::collection::vec(0.0f64..100.0, 2..8),
            a in 0.01f64..50.0,
            b in -20.0f64..20.0,
        ) {
            let rows: Vec<_> = ds.iter().enumerate().take(3).map(|(i, &d)| ("x", i, d)).collect();
            let base = ds_with(&rows).normalize_errors();
            let shifted: Vec<_> = rows.iter().map(|&(id, l, d)| (id, l, a * d + b + 20.0)).collect();
            let scaled = ds_with(&shifted).normalize_errors();
            for (p, q) in base.records().zip(scaled.records()) {
                prop_assert!((p.error.unwrap() - q.error.unwrap()).abs() < 1e-9);
            }
        }

        #[test]
        fn split_partitions_inputs(n in 2usize..40, seed in any::<u64>(), ratio in 0.05f64..0.95) {
            let ds = n_inputs(n);
            if let Ok(s) = ds.split(ratio, seed) {
                let train = s.train.inputs();
                let test = s.test.inputs();
                prop_assert!(train.is_disjoint(&test));
                prop_assert_eq!(train.len() + test.len(), n);
                prop_assert_eq!(train.len(), train_count(n, ratio));
            }
        }
    }
}
