//! Online knob selection: minimize predicted cost subject to
//! `fitness(epsilon, k) >= pi`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::domain::{Constraint, ControlDecision, InputFeatures, KnobSetting, KnobSpace};
use crate::error::{Error, Result};
use crate::models::{CostModel, ExactFitness, FitnessModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub settings_evaluated: usize,
    pub fitness_queries: usize,
    pub cost_queries: usize,
}

/// Search strategy for model-driven control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Search {
    Exhaustive,
    Precimonious,
}

/// Settings whose fitness meets `pi` at `epsilon`, in lexicographic order.
pub fn feasible_set<F: Scalar>(
    fit: &dyn FitnessModel<F>,
    space: &KnobSpace<F>,
    epsilon: F,
    pi: F,
) -> Vec<KnobSetting> {
    space
        .settings()
        .filter(|s| fit.fitness(epsilon, s) >= pi)
        .collect()
}

/// Sweeps the whole space; the cheapest feasible setting wins, ties going to
/// the lexicographically smallest setting.
pub fn control_exhaustive<F: Scalar>(
    cost: &dyn CostModel<F>,
    fit: &dyn FitnessModel<F>,
    features: &InputFeatures<F>,
    c: &Constraint<F>,
    space: &KnobSpace<F>,
) -> (ControlDecision<F>, SearchStats) {
    let mut stats = SearchStats::default();
    let mut best: Option<(KnobSetting, F, F)> = None;
    for setting in space.settings() {
        stats.settings_evaluated += 1;
        stats.fitness_queries += 1;
        let fitness = fit.fitness(c.epsilon, &setting);
        if !(fitness >= c.pi) {
            continue;
        }
        stats.cost_queries += 1;
        let predicted = cost.predict_cost(features, &setting);
        if best.as_ref().is_none_or(|b| predicted < b.1) {
            best = Some((setting, predicted, fitness));
        }
    }
    let decision = match best {
        Some((s, cost, fitness)) => ControlDecision::chosen(s, cost, fitness),
        None => ControlDecision::infeasible(),
    };
    (decision, stats)
}

/// Delta-debugging descent from the accurate setting.
///
/// Knobs are split into `g` contiguous groups (starting with one group).
/// For each group, every knob in it is lowered one quality step; the proposal
/// is kept if it stays feasible and does not raise predicted cost. After a
/// pass with no accepted proposal `g` doubles; any acceptance resets `g` to 1.
/// The search ends when a pass over single-knob groups changes nothing.
pub fn control_precimonious<F: Scalar>(
    cost: &dyn CostModel<F>,
    fit: &dyn FitnessModel<F>,
    features: &InputFeatures<F>,
    c: &Constraint<F>,
    space: &KnobSpace<F>,
) -> (ControlDecision<F>, SearchStats) {
    let mut stats = SearchStats::default();
    let mut current = space.accurate_setting();
    stats.settings_evaluated += 1;
    stats.fitness_queries += 1;
    let mut current_fit = fit.fitness(c.epsilon, &current);
    if !(current_fit >= c.pi) {
        return (ControlDecision::infeasible(), stats);
    }
    stats.cost_queries += 1;
    let mut current_cost = cost.predict_cost(features, &current);

    let knobs = space.knobs();
    let n = knobs.len();
    let mut granularity = 1usize;
    loop {
        let groups = granularity.min(n);
        let mut changed = false;
        for g in 0..groups {
            let (lo, hi) = (g * n / groups, (g + 1) * n / groups);
            let mut proposal = current.clone();
            let mut moved = false;
            for (knob, level) in knobs[lo..hi].iter().zip(&mut proposal.0[lo..hi]) {
                if let Some(l) = knob.lower(*level) {
                    *level = l;
                    moved = true;
                }
            }
            if !moved {
                continue;
            }
            stats.settings_evaluated += 1;
            stats.fitness_queries += 1;
            let f = fit.fitness(c.epsilon, &proposal);
            if !(f >= c.pi) {
                continue;
            }
            stats.cost_queries += 1;
            let pc = cost.predict_cost(features, &proposal);
            if pc <= current_cost {
                current = proposal;
                current_cost = pc;
                current_fit = f;
                changed = true;
            }
        }
        if changed {
            granularity = 1;
        } else if groups >= n {
            break;
        } else {
            granularity *= 2;
        }
    }
    (ControlDecision::chosen(current, current_cost, current_fit), stats)
}

/// How the oracle decides feasibility from measured data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Exact fitness over all evaluation inputs must reach `pi`.
    #[default]
    Fitness,
    /// The queried input's own measured error must be within `epsilon`.
    PerInput,
}

/// Reference controller that uses measured errors and costs.
#[derive(Debug, Clone)]
pub struct Oracle<'a, F: Scalar> {
    data: &'a Dataset<F>,
    fitness: ExactFitness<F>,
    mode: OracleMode,
}

impl<'a, F: Scalar> Oracle<'a, F> {
    pub fn new(data: &'a Dataset<F>, mode: OracleMode) -> Result<Self> {
        Ok(Oracle {
            fitness: ExactFitness::new(data)?,
            data,
            mode,
        })
    }

    pub fn measured_fitness(&self) -> &ExactFitness<F> {
        &self.fitness
    }

    /// Cheapest measured setting for `input_id` among the feasible ones.
    pub fn decide(&self, input_id: &str, c: &Constraint<F>) -> Result<ControlDecision<F>> {
        if !self.data.has_input(input_id) {
            return Err(Error::UnknownInput(input_id.to_string()));
        }
        let mut best: Option<(KnobSetting, F, F)> = None;
        for record in self.data.records_for(input_id) {
            let fitness = match self.mode {
                OracleMode::Fitness => self.fitness.fitness(c.epsilon, &record.setting),
                OracleMode::PerInput => {
                    if record.error.is_some_and(|e| e <= c.epsilon) {
                        F::one()
                    } else {
                        F::zero()
                    }
                }
            };
            if !(fitness >= c.pi) {
                continue;
            }
            if best.as_ref().is_none_or(|b| record.cost < b.1) {
                best = Some((record.setting.clone(), record.cost, fitness));
            }
        }
        Ok(match best {
            Some((s, cost, fitness)) => ControlDecision::chosen(s, cost, fitness),
            None => ControlDecision::infeasible(),
        })
    }
}

/// One-shot oracle query; build an [`Oracle`] when issuing many.
pub fn control_oracle<F: Scalar>(
    test: &Dataset<F>,
    input_id: &str,
    c: &Constraint<F>,
) -> Result<ControlDecision<F>> {
    Oracle::new(test, OracleMode::Fitness)?.decide(input_id, c)
}

/// Request/response record for batch and CLI decision queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DecisionRequest<F: Scalar> {
    pub input_id: Option<String>,
    pub features: Vec<F>,
    pub epsilon: F,
    pub pi: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DecisionResponse<F: Scalar> {
    pub input_id: Option<String>,
    pub epsilon: F,
    pub pi: F,
    pub feasible: bool,
    /// Knob values of the chosen setting, in knob order.
    pub setting: Option<Vec<F>>,
    pub predicted_cost: Option<F>,
    pub predicted_fitness: Option<F>,
    pub stats: SearchStats,
}

/// Answers line-delimited JSON requests with line-delimited JSON responses.
pub fn answer_requests<F: Scalar>(
    requests: &str,
    cost: &dyn CostModel<F>,
    fit: &dyn FitnessModel<F>,
    space: &KnobSpace<F>,
    search: Search,
) -> Result<String> {
    let mut out = String::new();
    for (lineno, line) in requests.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let req: DecisionRequest<F> = serde_json::from_str(line).map_err(|e| Error::Data {
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        let c = Constraint::new(req.epsilon, req.pi)?;
        let features = InputFeatures(req.features.clone());
        let (d, stats) = match search {
            Search::Exhaustive => control_exhaustive(cost, fit, &features, &c, space),
            Search::Precimonious => control_precimonious(cost, fit, &features, &c, space),
        };
        let resp = DecisionResponse {
            input_id: req.input_id,
            epsilon: req.epsilon,
            pi: req.pi,
            feasible: d.feasible(),
            setting: d.setting.as_ref().map(|s| space.values(s)),
            predicted_cost: d.predicted_cost,
            predicted_fitness: d.predicted_fitness,
            stats,
        };
        out.push_str(&serde_json::to_string(&resp)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::domain::{Knob, RunRecord};

    /// Lookup-table models over explicit settings.
    struct Table {
        fit: BTreeMap<KnobSetting, f64>,
        cost: BTreeMap<KnobSetting, f64>,
    }

    impl FitnessModel<f64> for Table {
        fn fitness(&self, _: f64, s: &KnobSetting) -> f64 {
            self.fit[s]
        }
    }

    impl CostModel<f64> for Table {
        fn predict_cost(&self, _: &InputFeatures<f64>, s: &KnobSetting) -> f64 {
            self.cost[s]
        }
    }

    fn four_settings() -> (KnobSpace<f64>, Table) {
        let space = KnobSpace::new(vec![
            Knob::new("a", vec![0.0, 1.0], 1).unwrap(),
            Knob::new("b", vec![0.0, 1.0], 1).unwrap(),
        ])
        .unwrap();
        // A=(0,0), B=(0,1), C=(1,0), D=(1,1)
        let vals = [(0.9, 10.0), (0.8, 4.0), (0.6, 2.0), (1.0, 12.0)];
        let settings: Vec<_> = space.settings().collect();
        let table = Table {
            fit: settings.iter().cloned().zip(vals.iter().map(|v| v.0)).collect(),
            cost: settings.iter().cloned().zip(vals.iter().map(|v| v.1)).collect(),
        };
        (space, table)
    }

    #[test]
    fn exhaustive_examples() {
        let (space, t) = four_settings();
        let f = InputFeatures::default();
        let (d, stats) = control_exhaustive(&t, &t, &f, &Constraint::new(0.1, 0.7).unwrap(), &space);
        assert_eq!(d.setting, Some(KnobSetting(vec![0, 1])));
        assert_eq!(d.predicted_cost, Some(4.0));
        assert_eq!(d.predicted_fitness, Some(0.8));
        assert_eq!(stats.settings_evaluated, 4);
        assert_eq!(stats.cost_queries, 3);

        let (d, _) = control_exhaustive(&t, &t, &f, &Constraint::new(0.1, 0.99).unwrap(), &space);
        assert!(d.feasible(), "D has fitness 1.0");
        let mut t2 = t;
        t2.fit.insert(KnobSetting(vec![1, 1]), 0.9);
        let (d, _) = control_exhaustive(&t2, &t2, &f, &Constraint::new(0.1, 0.99).unwrap(), &space);
        assert!(!d.feasible());
        let (d, _) = control_exhaustive(&t2, &t2, &f, &Constraint::new(0.1, 0.01).unwrap(), &space);
        assert_eq!(d.setting, Some(KnobSetting(vec![1, 0])));
    }

    #[test]
    fn exhaustive_breaks_ties_lexicographically() {
        let (space, mut t) = four_settings();
        for v in t.cost.values_mut() {
            *v = 1.0;
        }
        let (d, _) = control_exhaustive(&t, &t, &InputFeatures::default(), &Constraint::new(0.0, 0.5).unwrap(), &space);
        assert_eq!(d.setting, Some(KnobSetting(vec![0, 0])));
    }

    #[test]
    fn precimonious_needs_feasible_start() {
        let (space, mut t) = four_settings();
        t.fit.insert(KnobSetting(vec![1, 1]), 0.1);
        let (d, stats) =
            control_precimonious(&t, &t, &InputFeatures::default(), &Constraint::new(0.1, 0.5).unwrap(), &space);
        assert!(!d.feasible());
        assert_eq!(stats.settings_evaluated, 1);
    }

    #[test]
    fn precimonious_descends_monotone_surface() {
        let space = KnobSpace::new(
            (0..3)
                .map(|i| Knob::new(format!("k{i}"), vec![1.0, 2.0, 3.0, 4.0], 3).unwrap())
                .collect(),
        )
        .unwrap();
        let settings: Vec<_> = space.settings().collect();
        let t = Table {
            fit: settings.iter().map(|s| (s.clone(), 1.0)).collect(),
            cost: settings
                .iter()
                .map(|s| (s.clone(), 1.0 + space.values(s).iter().enumerate().map(|(i, v)| v * (i + 1) as f64).sum::<f64>()))
                .collect(),
        };
        let c = Constraint::new(0.2, 0.9).unwrap();
        let f = InputFeatures::default();
        let (p, ps) = control_precimonious(&t, &t, &f, &c, &space);
        let (e, es) = control_exhaustive(&t, &t, &f, &c, &space);
        assert_eq!(p.setting, Some(KnobSetting(vec![0, 0, 0])));
        assert_eq!(p.setting, e.setting);
        assert!(ps.settings_evaluated < es.settings_evaluated);
    }

    #[test]
    fn precimonious_lowers_inverted_knobs_upward() {
        let space = KnobSpace::new(vec![Knob::new("decim", vec![1.0, 2.0, 4.0], 0).unwrap()]).unwrap();
        let settings: Vec<_> = space.settings().collect();
        let t = Table {
            fit: settings.iter().map(|s| (s.clone(), 1.0)).collect(),
            cost: settings.iter().map(|s| (s.clone(), 8.0 / space.values(s)[0])).collect(),
        };
        let (d, _) =
            control_precimonious(&t, &t, &InputFeatures::default(), &Constraint::new(0.1, 0.5).unwrap(), &space);
        assert_eq!(d.setting, Some(KnobSetting(vec![2])));
    }

    #[test]
    fn precimonious_stops_at_local_minimum_on_ridge() {
        // 2 knobs x 6 levels; cost has a ridge at level 3 on knob a that the
        // descent from (5,5) cannot cross, while the global minimum lies at a=0
        let space = KnobSpace::new(vec![
            Knob::new("a", (0..6).map(|v| v as f64).collect(), 5).unwrap(),
            Knob::new("b", (0..6).map(|v| v as f64).collect(), 5).unwrap(),
        ])
        .unwrap();
        let settings: Vec<_> = space.settings().collect();
        let cost = |s: &KnobSetting| {
            let (a, b) = (s.0[0] as f64, s.0[1] as f64);
            let ridge = if s.0[0] == 3 { 100.0 } else { 0.0 };
            let base = if s.0[0] < 3 { a } else { 10.0 + a };
            base + 0.5 * b + ridge
        };
        let t = Table {
            fit: settings.iter().map(|s| (s.clone(), 1.0)).collect(),
            cost: settings.iter().map(|s| (s.clone(), cost(s))).collect(),
        };
        let c = Constraint::new(0.3, 0.8).unwrap();
        let f = InputFeatures::default();
        let (p, ps) = control_precimonious(&t, &t, &f, &c, &space);
        let (e, es) = control_exhaustive(&t, &t, &f, &c, &space);
        assert_eq!(e.setting, Some(KnobSetting(vec![0, 0])));
        assert_eq!(p.setting, Some(KnobSetting(vec![4, 0])));
        assert!(p.predicted_cost.unwrap() >= e.predicted_cost.unwrap());
        assert!(ps.settings_evaluated < es.settings_evaluated);
    }

    fn measured() -> Dataset<f64> {
        let space = KnobSpace::new(vec![Knob::new("k", vec![1.0, 2.0, 3.0], 2).unwrap()]).unwrap();
        let mut ds = Dataset::new(space, vec![]);
        // errors: accurate setting 0 for all; middle 0.4 / 0.6; lowest 1
        for (id, mid) in [("a", 4.0), ("b", 6.0)] {
            for (level, d, cost) in [(0usize, 10.0, 1.0), (1, mid, 2.0), (2, 0.0, 5.0)] {
                ds.push(RunRecord::new(id, InputFeatures::default(), KnobSetting(vec![level]), d, cost))
                    .unwrap();
            }
        }
        ds.normalize_errors()
    }

    #[test]
    fn oracle_examples() {
        let ds = measured();
        let d = control_oracle(&ds, "a", &Constraint::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(d.setting, Some(KnobSetting(vec![2])));
        let d = control_oracle(&ds, "a", &Constraint::new(0.5, 0.5).unwrap()).unwrap();
        assert_eq!(d.setting, Some(KnobSetting(vec![1])));
        let d = control_oracle(&ds, "a", &Constraint::new(0.5, 1.0).unwrap()).unwrap();
        assert_eq!(d.setting, Some(KnobSetting(vec![2])));
        assert!(matches!(
            control_oracle(&ds, "zz", &Constraint::new(0.5, 1.0).unwrap()),
            Err(Error::UnknownInput(_))
        ));
        let per_input = Oracle::new(&ds, OracleMode::PerInput).unwrap();
        let d = per_input.decide("a", &Constraint::new(0.5, 1.0).unwrap()).unwrap();
        assert_eq!(d.setting, Some(KnobSetting(vec![1])));
    }

    #[test]
    fn oracle_cost_non_increasing_in_epsilon() {
        let ds = measured();
        let oracle = Oracle::new(&ds, OracleMode::Fitness).unwrap();
        for pi in [0.5, 1.0] {
            let mut last = f64::INFINITY;
            for i in 0..=20 {
                let d = oracle.decide("b", &Constraint::new(i as f64 / 20.0, pi).unwrap()).unwrap();
                let c = d.predicted_cost.unwrap();
                assert!(c <= last);
                last = c;
            }
        }
    }

    #[test]
    fn answers_line_delimited_requests() {
        let (space, t) = four_settings();
        let reqs = "{\"input_id\":\"x\",\"features\":[],\"epsilon\":0.1,\"pi\":0.7}\n\n\
                    {\"input_id\":null,\"features\":[],\"epsilon\":0.1,\"pi\":1.0}\n";
        let out = answer_requests(reqs, &t, &t, &space, Search::Exhaustive).unwrap();
        let lines: Vec<DecisionResponse<f64>> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].setting, Some(vec![0.0, 1.0]));
        assert!(lines[1].feasible);
        assert!(answer_requests("{bad", &t, &t, &space, Search::Exhaustive).is_err());
    }
}
