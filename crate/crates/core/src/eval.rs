//! Constraint-grid evaluation: speedup and inversion tables, accuracy
//! scatter exports and per-input Pareto data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::controller::{control_exhaustive, control_precimonious, Oracle, Search, SearchStats};
use crate::dataset::Dataset;
use crate::domain::{Constraint, ControlDecision, InputFeatures, KnobSetting, KnobSpace};
use crate::error::{Error, Result};
use crate::models::{CostModel, CostPoint, FitnessModel, FitnessPoint};
use crate::scalar::Scalar;

pub const NA: &str = "NA";
pub const CORNER: &str = "pi||epsilon";

/// Epsilon columns ascending, pi rows descending.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGrid<F: Scalar> {
    pub epsilons: Vec<F>,
    pub pis: Vec<F>,
}

impl<F: Scalar> ConstraintGrid<F> {
    /// Sorts and deduplicates both axes and checks their ranges.
    pub fn new(mut epsilons: Vec<F>, mut pis: Vec<F>) -> Result<Self> {
        for &e in &epsilons {
            Constraint::new(e, F::one())?;
        }
        for &p in &pis {
            Constraint::new(F::zero(), p)?;
        }
        if epsilons.is_empty() || pis.is_empty() {
            return Err(Error::InvalidConstraint("constraint grid needs at least one epsilon and one pi".into()));
        }
        epsilons.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        epsilons.dedup();
        pis.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        pis.dedup();
        Ok(ConstraintGrid { epsilons, pis })
    }

    /// Evaluation grid from configured bounds, with epsilon 0 always present.
    pub fn with_zero_epsilon(mut epsilons: Vec<F>, pis: Vec<F>) -> Result<Self> {
        epsilons.push(F::zero());
        Self::new(epsilons, pis)
    }

    pub fn constraint(&self, row: usize, col: usize) -> Constraint<F> {
        Constraint {
            epsilon: self.epsilons[col],
            pi: self.pis[row],
        }
    }

    fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.pis.len())
            .flat_map(|r| (0..self.epsilons.len()).map(move |c| (r, c)))
            .collect()
    }
}

/// Something that picks a knob setting for a test input.
pub trait Policy<F: Scalar>: Sync {
    fn decide(
        &self,
        input_id: &str,
        features: &InputFeatures<F>,
        c: &Constraint<F>,
    ) -> Result<(ControlDecision<F>, SearchStats)>;
}

/// Model-driven controller.
pub struct ModelPolicy<'a, F: Scalar> {
    pub cost: &'a dyn CostModel<F>,
    pub fit: &'a dyn FitnessModel<F>,
    pub space: &'a KnobSpace<F>,
    pub search: Search,
}

impl<F: Scalar> Policy<F> for ModelPolicy<'_, F> {
    fn decide(
        &self,
        _input_id: &str,
        features: &InputFeatures<F>,
        c: &Constraint<F>,
    ) -> Result<(ControlDecision<F>, SearchStats)> {
        Ok(match self.search {
            Search::Exhaustive => control_exhaustive(self.cost, self.fit, features, c, self.space),
            Search::Precimonious => control_precimonious(self.cost, self.fit, features, c, self.space),
        })
    }
}

impl<F: Scalar> Policy<F> for Oracle<'_, F> {
    fn decide(
        &self,
        input_id: &str,
        _features: &InputFeatures<F>,
        c: &Constraint<F>,
    ) -> Result<(ControlDecision<F>, SearchStats)> {
        Ok((Oracle::decide(self, input_id, c)?, SearchStats::default()))
    }
}

/// Measured cost at the accurate setting over measured cost at the chosen
/// one; `None` when infeasible or either measurement is missing.
pub fn speedup<F: Scalar>(test: &Dataset<F>, decision: &ControlDecision<F>, input_id: &str) -> Option<F> {
    let chosen = decision.setting.as_ref()?;
    let accurate = test.space().accurate_setting();
    let (Some(base), Some(run)) = (test.record(input_id, &accurate), test.record(input_id, chosen)) else {
        warn!("speedup for input `{input_id}` at {chosen}: missing measurement, excluded");
        return None;
    };
    Some(base.cost / run.cost)
}

/// Every policy decision over the grid: `decisions[row][col][input]`.
#[derive(Debug, Clone)]
pub struct GridDecisions<F: Scalar> {
    pub grid: ConstraintGrid<F>,
    pub inputs: Vec<String>,
    pub decisions: Vec<Vec<Vec<ControlDecision<F>>>>,
    pub stats: SearchStats,
}

/// Runs `policy` for every test input at every grid cell. Cells are
/// evaluated in parallel; the result does not depend on scheduling.
pub fn decide_grid<F: Scalar>(
    test: &Dataset<F>,
    policy: &dyn Policy<F>,
    grid: &ConstraintGrid<F>,
) -> Result<GridDecisions<F>> {
    let inputs: Vec<String> = test.inputs().into_iter().collect();
    let features: Vec<InputFeatures<F>> = inputs
        .iter()
        .map(|i| test.features_of(i).cloned().unwrap_or_default())
        .collect();
    let cells = grid.cells();
    let results: Vec<Result<(Vec<ControlDecision<F>>, SearchStats)>> = cells
        .par_iter()
        .map(|&(r, c)| {
            let constraint = grid.constraint(r, c);
            let mut stats = SearchStats::default();
            let mut out = Vec::with_capacity(inputs.len());
            for (id, f) in inputs.iter().zip(&features) {
                let (d, s) = policy.decide(id, f, &constraint)?;
                stats.settings_evaluated += s.settings_evaluated;
                stats.fitness_queries += s.fitness_queries;
                stats.cost_queries += s.cost_queries;
                out.push(d);
            }
            Ok((out, stats))
        })
        .collect();
    let mut decisions = vec![Vec::with_capacity(grid.epsilons.len()); grid.pis.len()];
    let mut stats = SearchStats::default();
    for ((r, _), res) in cells.into_iter().zip(results) {
        let (d, s) = res?;
        stats.settings_evaluated += s.settings_evaluated;
        stats.fitness_queries += s.fitness_queries;
        stats.cost_queries += s.cost_queries;
        decisions[r].push(d);
    }
    Ok(GridDecisions {
        grid: grid.clone(),
        inputs,
        decisions,
        stats,
    })
}

/// Average speedup per cell; `None` is an NA cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupTable<F: Scalar> {
    pub grid: ConstraintGrid<F>,
    pub cells: Vec<Vec<Option<F>>>,
}

impl<F: Scalar> SpeedupTable<F> {
    pub fn from_decisions(test: &Dataset<F>, gd: &GridDecisions<F>) -> Self {
        let cells = gd
            .decisions
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| {
                        let s: Vec<F> = gd
                            .inputs
                            .iter()
                            .zip(cell)
                            .filter_map(|(id, d)| speedup(test, d, id))
                            .collect();
                        (!s.is_empty()).then(|| s.iter().copied().sum::<F>() / F::of_usize(s.len()))
                    })
                    .collect()
            })
            .collect();
        SpeedupTable {
            grid: gd.grid.clone(),
            cells,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = header(&self.grid);
        for (pi, row) in self.grid.pis.iter().zip(&self.cells) {
            let _ = write!(out, "{pi}");
            for cell in row {
                match cell {
                    Some(v) => {
                        let _ = write!(out, "\t{:.4}", v.as_f64());
                    }
                    None => {
                        let _ = write!(out, "\t{NA}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Mean over non-NA cells.
    pub fn mean(&self) -> Option<f64> {
        let v: Vec<f64> = self.cells.iter().flatten().flatten().map(|x| x.as_f64()).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn na_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_none()).count()
    }
}

pub fn speedup_table<F: Scalar>(
    test: &Dataset<F>,
    policy: &dyn Policy<F>,
    grid: &ConstraintGrid<F>,
) -> Result<SpeedupTable<F>> {
    Ok(SpeedupTable::from_decisions(test, &decide_grid(test, policy, grid)?))
}

fn header<F: Scalar>(grid: &ConstraintGrid<F>) -> String {
    let mut out = String::from(CORNER);
    for e in &grid.epsilons {
        let _ = write!(out, "\t{e}");
    }
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InversionCell {
    /// `None` when both controllers are infeasible for every input.
    pub inverted: Option<bool>,
    pub mismatches: usize,
    pub inputs: usize,
}

impl InversionCell {
    pub fn fraction(&self) -> f64 {
        if self.inputs == 0 {
            0.0
        } else {
            self.mismatches as f64 / self.inputs as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionTable<F: Scalar> {
    pub grid: ConstraintGrid<F>,
    pub cells: Vec<Vec<InversionCell>>,
}

impl<F: Scalar> InversionTable<F> {
    /// A cell is inverted when any input's setting differs from the oracle's;
    /// a feasible/infeasible disagreement counts as a difference.
    pub fn compare(model: &GridDecisions<F>, oracle: &GridDecisions<F>) -> Result<Self> {
        if model.inputs != oracle.inputs || model.grid != oracle.grid {
            return Err(Error::InvalidConstraint("inversion needs decisions over the same grid and inputs".into()));
        }
        let cells = model
            .decisions
            .iter()
            .zip(&oracle.decisions)
            .map(|(mr, or)| {
                mr.iter()
                    .zip(or)
                    .map(|(m, o)| {
                        let mismatches = m.iter().zip(o).filter(|(a, b)| a.setting != b.setting).count();
                        let all_na = m.iter().chain(o).all(|d| !d.feasible());
                        InversionCell {
                            inverted: (!all_na).then_some(mismatches > 0),
                            mismatches,
                            inputs: m.len(),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(InversionTable {
            grid: model.grid.clone(),
            cells,
        })
    }

    pub fn to_tsv(&self) -> String {
        self.render(|c| match c.inverted {
            None => NA.to_string(),
            Some(true) => "T".into(),
            Some(false) => "F".into(),
        })
    }

    /// Per-cell fraction of mismatching inputs.
    pub fn fractions_tsv(&self) -> String {
        self.render(|c| match c.inverted {
            None => NA.to_string(),
            Some(_) => format!("{:.4}", c.fraction()),
        })
    }

    fn render(&self, f: impl Fn(&InversionCell) -> String) -> String {
        let mut out = header(&self.grid);
        for (pi, row) in self.grid.pis.iter().zip(&self.cells) {
            let _ = write!(out, "{pi}");
            for cell in row {
                let _ = write!(out, "\t{}", f(cell));
            }
            out.push('\n');
        }
        out
    }

    pub fn inverted_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.inverted == Some(true)).count()
    }
}

pub fn inversion_table<F: Scalar>(
    test: &Dataset<F>,
    model: &dyn Policy<F>,
    oracle: &dyn Policy<F>,
    grid: &ConstraintGrid<F>,
) -> Result<InversionTable<F>> {
    InversionTable::compare(&decide_grid(test, model, grid)?, &decide_grid(test, oracle, grid)?)
}

/// Mean of `measured cost / oracle measured cost - 1` over input decisions
/// where both controllers are feasible and measured.
pub fn oracle_cost_gap<F: Scalar>(test: &Dataset<F>, model: &GridDecisions<F>, oracle: &GridDecisions<F>) -> Option<f64> {
    let mut gaps = Vec::new();
    for (mr, or) in model.decisions.iter().zip(&oracle.decisions) {
        for (m, o) in mr.iter().zip(or) {
            for ((id, a), b) in model.inputs.iter().zip(m).zip(o) {
                let (Some(sa), Some(sb)) = (&a.setting, &b.setting) else {
                    continue;
                };
                if let (Some(ra), Some(rb)) = (test.record(id, sa), test.record(id, sb)) {
                    gaps.push(ra.cost.as_f64() / rb.cost.as_f64() - 1.0);
                }
            }
        }
    }
    (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
}

fn setting_text<F: Scalar>(space: &KnobSpace<F>, s: &KnobSetting) -> String {
    space
        .values(s)
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn cost_scatter_tsv<F: Scalar>(space: &KnobSpace<F>, points: &[CostPoint<F>]) -> String {
    let mut out = String::from("input_id\tsetting\tpredicted\tmeasured\n");
    for p in points {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            p.input_id,
            setting_text(space, &p.setting),
            p.predicted,
            p.measured
        );
    }
    out
}

pub fn fitness_scatter_tsv<F: Scalar>(space: &KnobSpace<F>, points: &[FitnessPoint<F>]) -> String {
    let mut out = String::from("setting\tepsilon\tpredicted\tmeasured\n");
    for p in points {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            setting_text(space, &p.setting),
            p.epsilon,
            p.predicted,
            p.measured
        );
    }
    out
}

/// Pareto-optimal records of one input, by ascending error.
pub fn pareto_tsv<F: Scalar>(ds: &Dataset<F>, input_id: &str) -> Result<String> {
    let front = ds.per_input_pareto(input_id)?;
    let mut rows: Vec<(F, F, String)> = ds
        .records_for(input_id)
        .filter_map(|r| {
            let e = r.error?;
            front
                .contains(&(e, r.cost))
                .then(|| (e, r.cost, setting_text(ds.space(), &r.setting)))
        })
        .collect();
    rows.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("finite").then_with(|| a.2.cmp(&b.2)));
    let mut out = String::from("error\tcost\tsetting\n");
    for (e, c, s) in rows {
        let _ = writeln!(out, "{e}\t{c}\t{s}");
    }
    Ok(out)
}

/// Writes `text` to `dir/name`, creating `dir` when needed.
pub fn write_report(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Characters of an input id that are safe in a file name.
pub fn pareto_file_name(input_id: &str) -> String {
    let safe: String = input_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("pareto_{safe}.tsv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::OracleMode;
    use crate::domain::{Knob, RunRecord};
    use crate::models::{train_fitness_table, MeasuredCostModel};
    use crate::synthbench::{generate_dataset, SettingSelection, SurfaceSpec};

    fn synth(noise: f64) -> Dataset<f64> {
        let space = KnobSpace::new(vec![
            Knob::new("a", (1..=5).map(f64::from).collect(), 4).unwrap(),
            Knob::new("b", (1..=4).map(f64::from).collect(), 3).unwrap(),
        ])
        .unwrap();
        let spec = SurfaceSpec::standard(space, 2, noise, 0.6, 21);
        generate_dataset(&spec, 8, SettingSelection::All).unwrap().normalize_errors()
    }

    fn grid() -> ConstraintGrid<f64> {
        ConstraintGrid::with_zero_epsilon(
            (1..=10).map(|i| i as f64 / 10.0).collect(),
            (1..=10).map(|i| i as f64 / 10.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn grid_orientation() {
        let g = grid();
        assert_eq!(g.epsilons[0], 0.0);
        assert!(g.epsilons.windows(2).all(|w| w[0] < w[1]));
        assert!(g.pis.windows(2).all(|w| w[0] > w[1]));
        assert!(ConstraintGrid::new(vec![1.5], vec![0.5]).is_err());
        assert!(ConstraintGrid::new(vec![0.5], vec![0.0]).is_err());
    }

    #[test]
    fn speedup_ratio() {
        let space = KnobSpace::new(vec![Knob::new("k", vec![1.0, 2.0], 1).unwrap()]).unwrap();
        let mut ds = Dataset::new(space, vec![]);
        ds.push(RunRecord::new("x", InputFeatures::default(), KnobSetting(vec![1]), 0.0, 10.0)).unwrap();
        ds.push(RunRecord::new("x", InputFeatures::default(), KnobSetting(vec![0]), 1.0, 2.0)).unwrap();
        let d = ControlDecision::chosen(KnobSetting(vec![0]), 0.0, 1.0);
        assert_eq!(speedup(&ds, &d, "x"), Some(5.0));
        let d = ControlDecision::chosen(KnobSetting(vec![1]), 0.0, 1.0);
        assert_eq!(speedup(&ds, &d, "x"), Some(1.0));
        assert_eq!(speedup(&ds, &ControlDecision::infeasible(), "x"), None);
        assert_eq!(speedup(&ds, &d, "missing"), None);
    }

    #[test]
    fn oracle_table_is_monotone_with_closed_na_region() {
        let ds = synth(0.0);
        let oracle = Oracle::new(&ds, OracleMode::Fitness).unwrap();
        let t = speedup_table(&ds, &oracle, &grid()).unwrap();
        let (rows, cols) = (t.cells.len(), t.cells[0].len());
        for r in 0..rows {
            for c in 0..cols {
                let v = t.cells[r][c];
                if c + 1 < cols {
                    match (v, t.cells[r][c + 1]) {
                        (Some(a), Some(b)) => assert!(a <= b + 1e-12),
                        (Some(_), None) => panic!("NA right of a value"),
                        _ => {}
                    }
                }
                if r + 1 < rows {
                    match (v, t.cells[r + 1][c]) {
                        (Some(a), Some(b)) => assert!(a <= b + 1e-12),
                        (Some(_), None) => panic!("NA below a value"),
                        _ => {}
                    }
                }
            }
        }
        // accurate setting is feasible everywhere, so no NA at all; the
        // most relaxed cell reaches each input's cheapest setting
        assert_eq!(t.na_cells(), 0);
        let best: f64 = ds
            .inputs()
            .iter()
            .map(|id| {
                let base = ds.record(id, &ds.space().accurate_setting()).unwrap().cost;
                let min = ds.records_for(id).map(|r| r.cost).fold(f64::INFINITY, f64::min);
                base / min
            })
            .sum::<f64>()
            / ds.inputs().len() as f64;
        let relaxed = t.cells[rows - 1][cols - 1].unwrap();
        assert!((relaxed - best).abs() < 1e-12);
    }

    #[test]
    fn hard_corner_is_na_without_zero_error_setting() {
        let space = KnobSpace::new(vec![Knob::new("k", vec![1.0, 2.0], 1).unwrap()]).unwrap();
        let mut ds = Dataset::new(space.clone(), vec![]);
        // accurate setting is not the minimum-distance one on input y
        for (id, d0, d1) in [("x", 2.0, 0.0), ("y", 0.0, 2.0)] {
            ds.push(RunRecord::new(id, InputFeatures::default(), KnobSetting(vec![0]), d0, 1.0)).unwrap();
            ds.push(RunRecord::new(id, InputFeatures::default(), KnobSetting(vec![1]), d1, 2.0)).unwrap();
        }
        let ds = ds.normalize_errors();
        let oracle = Oracle::new(&ds, OracleMode::Fitness).unwrap();
        let g = ConstraintGrid::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        let t = speedup_table(&ds, &oracle, &g).unwrap();
        assert_eq!(t.cells[0][0], None);
        assert!(t.cells[0][1].is_some());
        assert!(t.to_tsv().starts_with("pi||epsilon\t0\t1\n1\tNA\t"));
    }

    #[test]
    fn identical_inputs_give_no_inversions_and_perturbation_flips_predictably() {
        let ds = synth(0.05);
        let g = grid();
        let table = train_fitness_table(&ds, &g.epsilons).unwrap();
        let cost = MeasuredCostModel::new(&ds);
        let model = ModelPolicy {
            cost: &cost,
            fit: &table,
            space: ds.space(),
            search: Search::Exhaustive,
        };
        let oracle = Oracle::new(&ds, OracleMode::Fitness).unwrap();
        let od = decide_grid(&ds, &oracle, &g).unwrap();
        let inv = InversionTable::compare(&decide_grid(&ds, &model, &g).unwrap(), &od).unwrap();
        assert!(inv.cells.iter().flatten().all(|c| c.inverted != Some(true)));
        assert!(inv.cells.iter().flatten().any(|c| c.inverted == Some(false)));
        assert_eq!(oracle_cost_gap(&ds, &decide_grid(&ds, &model, &g).unwrap(), &od), Some(0.0));

        let target = KnobSetting(vec![2, 1]);
        let cheap = cost.clone().with_setting_cost(&target, 1e-9);
        let model = ModelPolicy {
            cost: &cheap,
            ..model
        };
        let inv = InversionTable::compare(&decide_grid(&ds, &model, &g).unwrap(), &od).unwrap();
        let exact = oracle.measured_fitness();
        for (r, row) in inv.cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                let k = g.constraint(r, c);
                let feasible = exact.fitness(k.epsilon, &target) >= k.pi;
                let oracle_elsewhere = od.decisions[r][c].iter().any(|d| d.setting.as_ref() != Some(&target));
                let all_na = od.decisions[r][c].iter().all(|d| !d.feasible());
                let want = (!all_na).then_some(feasible && oracle_elsewhere);
                assert_eq!(cell.inverted, want, "cell ({r},{c})");
            }
        }
        assert!(inv.inverted_cells() > 0);
    }

    #[test]
    fn report_shapes() {
        let ds = synth(0.0);
        let g = grid();
        let oracle = Oracle::new(&ds, OracleMode::Fitness).unwrap();
        let t = speedup_table(&ds, &oracle, &g).unwrap();
        let tsv = t.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 1 + g.pis.len());
        assert!(lines[0].starts_with("pi||epsilon\t0\t0.1\t"));
        assert!(lines[1].starts_with("1\t"));
        assert!(lines.iter().all(|l| l.split('\t').count() == 1 + g.epsilons.len()));

        let points = crate::models::evaluate_cost_accuracy(&MeasuredCostModel::new(&ds), &ds);
        assert_eq!(cost_scatter_tsv(ds.space(), &points).lines().count(), 1 + ds.len());
        let p = pareto_tsv(&ds, "in000").unwrap();
        assert!(p.starts_with("error\tcost\tsetting\n0\t"));
        assert_eq!(pareto_file_name("a/b c"), "pareto_a_b_c.tsv");
    }
}
