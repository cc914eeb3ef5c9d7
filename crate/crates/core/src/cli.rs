//! Command-line pipeline: `run`, `stats`, `predict` and `result` tasks with
//! plain-file artifacts under the output directory.
//!
//! | task    | reads                                   | writes                                   |
//! |---------|-----------------------------------------|------------------------------------------|
//! | run     | config                                  | `profile.csv`, `failures.tsv`            |
//! | stats   | `profile.csv`, `failures.tsv`           | `normalized.csv`, `stats.tsv`            |
//! | predict | `profile.csv`                           | `models/*.json`, `split.tsv`, `feasible.tsv` |
//! | result  | `normalized.csv`, predict artifacts     | `reports/*.tsv`                          |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use log::info;

use crate::config::{AppConfig, DEFAULT_SEED};
use crate::controller::{feasible_set, Oracle, OracleMode, Search};
use crate::dataset::{read_profile, write_profile, Dataset, ProfileSchema};
use crate::domain::KnobSpace;
use crate::error::{Error, Result};
use crate::eval::{
    cost_scatter_tsv, decide_grid, fitness_scatter_tsv, oracle_cost_gap, pareto_file_name, pareto_tsv,
    write_report, ConstraintGrid, GridDecisions, InversionTable, ModelPolicy, Policy, SpeedupTable,
};
use crate::models::{
    evaluate_cost_accuracy, evaluate_fitness_accuracy, persist, train_fitness_table, LinearCostModel,
    LinearFitnessModel, M5Fitness, TreeCostModel, TreeParams,
};
use crate::scalar::pearson;
use crate::synthbench::harness::{count_failures, write_outputs, FAILURES_FILE, PROFILE_FILE};
use crate::synthbench::{generate_dataset, run_external, SettingSelection, SurfaceSpec};

pub const NORMALIZED_FILE: &str = "normalized.csv";
pub const STATS_FILE: &str = "stats.tsv";
pub const SPLIT_FILE: &str = "split.tsv";
pub const FEASIBLE_FILE: &str = "feasible.tsv";
pub const MODELS_DIR: &str = "models";
pub const REPORTS_DIR: &str = "reports";
pub const COST_TREE_FILE: &str = "cost_tree.json";
pub const COST_LINEAR_FILE: &str = "cost_linear.json";
pub const FITNESS_TABLE_FILE: &str = "fitness_table.json";
pub const FITNESS_M5_FILE: &str = "fitness_m5.json";
pub const FITNESS_LINEAR_FILE: &str = "fitness_linear.json";
const MODEL_FILES: [&str; 5] = [
    COST_TREE_FILE,
    COST_LINEAR_FILE,
    FITNESS_TABLE_FILE,
    FITNESS_M5_FILE,
    FITNESS_LINEAR_FILE,
];

/// Configs shipped with the binary, selectable by `--bench`.
pub const BUNDLED: [(&str, &str); 2] = [
    ("synth", include_str!("../configs/synth.cfg")),
    ("toy", include_str!("../configs/toy.cfg")),
];

pub fn bundled_config(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum)]
pub enum Task {
    Run,
    Stats,
    Predict,
    Result,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Run => "run",
            Task::Stats => "stats",
            Task::Predict => "predict",
            Task::Result => "result",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum)]
pub enum ControllerKind {
    /// Exhaustive sweep over tree cost and M5 fitness models.
    Exhaustive,
    /// Delta-debugging descent over the same models.
    Precimonious,
    /// Measured errors and costs of the test inputs.
    Oracle,
    /// Exhaustive sweep over global linear models.
    Baseline,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Exhaustive => "exhaustive",
            ControllerKind::Precimonious => "precimonious",
            ControllerKind::Oracle => "oracle",
            ControllerKind::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "knobctl", version, about = "Proactive knob control for tunable approximate programs")]
pub struct Cli {
    /// Benchmark: a bundled config name (synth, toy) or a label for --config
    #[arg(long)]
    pub bench: String,
    /// `all` or a comma-separated list of input ids
    #[arg(long, default_value = "all")]
    pub input: String,
    /// Directory holding every artifact
    #[arg(long = "outputDir", visible_alias = "output-dir")]
    pub output_dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "run,stats,predict,result")]
    pub tasks: Vec<Task>,
    /// Config file; overrides the bundled config of --bench
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the split and synthetic generation
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel subprocesses in `run` and threads in `result`
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Controllers evaluated by `result` (default: all)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub controller: Vec<ControllerKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSelector {
    All,
    Ids(BTreeSet<String>),
}

impl InputSelector {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "all" {
            return Ok(InputSelector::All);
        }
        let ids: BTreeSet<String> = t.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if ids.is_empty() {
            return Err(Error::Plan("--input needs `all` or at least one input id".into()));
        }
        Ok(InputSelector::Ids(ids))
    }

    /// Restricts `ds` to the selected inputs; naming an absent input fails.
    pub fn apply(&self, ds: Dataset<f64>) -> Result<Dataset<f64>> {
        match self {
            InputSelector::All => Ok(ds),
            InputSelector::Ids(ids) => {
                if let Some(missing) = ids.iter().find(|i| !ds.has_input(i)) {
                    return Err(Error::UnknownInput(missing.clone()));
                }
                Ok(ds.subset(ids))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskPlan {
    /// Deduplicated, in pipeline order.
    pub tasks: Vec<Task>,
    pub bench: String,
    pub inputs: InputSelector,
    pub output_dir: PathBuf,
}

impl TaskPlan {
    pub fn new(tasks: &[Task], bench: &str, inputs: InputSelector, output_dir: &Path) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Plan("no tasks requested".into()));
        }
        let tasks: BTreeSet<Task> = tasks.iter().copied().collect();
        Ok(TaskPlan {
            tasks: tasks.into_iter().collect(),
            bench: bench.to_string(),
            inputs,
            output_dir: output_dir.to_path_buf(),
        })
    }

    fn has(&self, t: Task) -> bool {
        self.tasks.contains(&t)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    /// Fails on the first upstream artifact that neither exists nor is
    /// produced by an earlier task of this plan.
    pub fn check_dependencies(&self) -> Result<()> {
        let need = |file: PathBuf, task: Task| -> Result<()> {
            if self.has(task) || file.exists() {
                Ok(())
            } else {
                Err(Error::Dependency {
                    path: file,
                    task: task.name().into(),
                })
            }
        };
        for &t in &self.tasks {
            match t {
                Task::Run => {}
                Task::Stats | Task::Predict => need(self.path(PROFILE_FILE), Task::Run)?,
                Task::Result => {
                    need(self.path(NORMALIZED_FILE), Task::Stats)?;
                    need(self.path(SPLIT_FILE), Task::Predict)?;
                    for f in MODEL_FILES {
                        need(self.path(MODELS_DIR).join(f), Task::Predict)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Everything a task needs.
pub struct Context {
    pub cfg: AppConfig,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
    pub space: KnobSpace<f64>,
    pub plan: TaskPlan,
    pub seed: u64,
    pub workers: usize,
    pub controllers: Vec<ControllerKind>,
    pub params: TreeParams,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let (cfg, base_dir) = match &cli.config {
            Some(p) => (
                AppConfig::load(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => {
                let text = bundled_config(&cli.bench).ok_or_else(|| {
                    let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
                    Error::Plan(format!(
                        "unknown bench `{}`; bundled benches are {} (or pass --config)",
                        cli.bench,
                        names.join(", ")
                    ))
                })?;
                (AppConfig::parse(text)?, PathBuf::from("."))
            }
        };
        if cli.workers == 0 {
            return Err(Error::Plan("--workers must be >= 1".into()));
        }
        let plan = TaskPlan::new(&cli.tasks, &cli.bench, InputSelector::parse(&cli.input)?, &cli.output_dir)?;
        let mut controllers = if cli.controller.is_empty() {
            vec![
                ControllerKind::Exhaustive,
                ControllerKind::Precimonious,
                ControllerKind::Oracle,
                ControllerKind::Baseline,
            ]
        } else {
            cli.controller.clone()
        };
        controllers.sort();
        controllers.dedup();
        Ok(Context {
            space: cfg.space()?,
            seed: cli.seed.or(cfg.fixed.seed).unwrap_or(DEFAULT_SEED),
            params: cfg.model.unwrap_or_default(),
            cfg,
            base_dir,
            plan,
            workers: cli.workers,
            controllers,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.plan.path(name)
    }

    fn grid(&self) -> Result<ConstraintGrid<f64>> {
        ConstraintGrid::with_zero_epsilon(self.cfg.epsilons(), self.cfg.pis())
    }
}

/// Runs every task of the plan after checking dependencies.
pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::from_cli(cli)?;
    ctx.plan.check_dependencies()?;
    fs::create_dir_all(&ctx.plan.output_dir).map_err(|e| Error::io(&ctx.plan.output_dir, e))?;
    for &t in &ctx.plan.tasks {
        info!("task {}", t.name());
        let msg = match t {
            Task::Run => task_run(&ctx)?,
            Task::Stats => task_stats(&ctx)?,
            Task::Predict => task_predict(&ctx)?,
            Task::Result => task_result(&ctx)?,
        };
        println!("{}: {msg}", t.name());
    }
    Ok(())
}

/// Reads a profile written by this tool; feature columns are the columns
/// that are not the input, a knob, distance, cost, error or weight.
pub fn read_artifact(path: &Path, space: &KnobSpace<f64>) -> Result<Dataset<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let mut schema = ProfileSchema::default();
    let knob_names: BTreeSet<&str> = space.knobs().iter().map(|k| k.name()).collect();
    for h in headers.iter() {
        if h == "weight" {
            schema.weight_column = Some(h.to_string());
        } else if h != schema.input_column
            && h != schema.distance_column
            && h != schema.cost_column
            && h != schema.error_column
            && !knob_names.contains(h)
        {
            schema.feature_columns.push(h.to_string());
        }
    }
    read_profile(bytes.as_slice(), &schema, space)
}

pub fn task_run(ctx: &Context) -> Result<String> {
    let dir = &ctx.plan.output_dir;
    let settings: Vec<_> = ctx.space.settings().collect();
    if let Some(s) = &ctx.cfg.synth {
        let spec = SurfaceSpec::standard(ctx.space.clone(), s.features, s.noise, s.sensitivity, ctx.seed);
        let selection = s.sampled.map_or(SettingSelection::All, SettingSelection::Sampled);
        let ds = ctx.plan.inputs.apply(generate_dataset(&spec, s.inputs, selection)?)?;
        write_outputs(dir, &ds, &[])?;
        return Ok(format!("{} records for {} inputs", ds.len(), ds.inputs().len()));
    }
    if let Some(mut harness) = ctx.cfg.bench_harness() {
        let declared = &ctx.cfg.harness.as_ref().expect("harness section").inputs;
        let inputs: Vec<String> = match &ctx.plan.inputs {
            InputSelector::All => declared.clone(),
            InputSelector::Ids(ids) => {
                if let Some(m) = ids.iter().find(|i| !declared.contains(i)) {
                    return Err(Error::UnknownInput(m.clone()));
                }
                declared.iter().filter(|i| ids.contains(*i)).cloned().collect()
            }
        };
        harness.workers = ctx.workers;
        harness.bindir = std::env::current_exe().ok().and_then(|p| p.parent().map(Path::to_path_buf));
        let out = run_external(&harness, &ctx.space, &inputs, &settings, Some(dir))?;
        return Ok(format!(
            "{} records, {} failures, {} subprocesses launched",
            out.dataset.len(),
            out.failures.len(),
            out.launched
        ));
    }
    if let Some(file) = ctx.cfg.schema.as_ref().and_then(|s| s.file.as_ref()) {
        let path = ctx.base_dir.join(file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let ds = ctx
            .plan
            .inputs
            .apply(read_profile(bytes.as_slice(), &ctx.cfg.profile_schema(), &ctx.space)?)?;
        write_outputs(dir, &ds, &[])?;
        return Ok(format!("imported {} records from {}", ds.len(), path.display()));
    }
    Err(Error::Plan(
        "the run task needs a [SYNTH] section, a [HARNESS] section or [SCHEMA] FILE".into(),
    ))
}

fn failures_by_input(path: &Path) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    if count_failures(path)? == 0 {
        return Ok(out);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let id = line.split('\t').next().unwrap_or_default();
        *out.entry(id.to_string()).or_default() += 1;
    }
    Ok(out)
}

pub fn task_stats(ctx: &Context) -> Result<String> {
    let ds = ctx.plan.inputs.apply(read_artifact(&ctx.out(PROFILE_FILE), &ctx.space)?)?;
    let mut failures = failures_by_input(&ctx.out(FAILURES_FILE))?;
    if let InputSelector::Ids(ids) = &ctx.plan.inputs {
        failures.retain(|k, _| ids.contains(k));
    }
    let norm = ds.normalize_errors();
    let mut out = String::from("input_id\trecords\tfailures\tswept\td_min\td_max\tdegenerate\terrors_in_unit\n");
    let mut ids: BTreeSet<String> = norm.inputs();
    ids.extend(failures.keys().cloned());
    for id in &ids {
        let records = norm.records_for(id).count();
        let in_unit = norm.records_for(id).all(|r| r.error.is_some_and(|e| (0.0..=1.0).contains(&e)));
        if !in_unit {
            return Err(Error::Data {
                line: 0,
                reason: format!("normalized error of input `{id}` falls outside [0, 1]"),
            });
        }
        let (lo, hi) = norm
            .distance_bounds(id)
            .map_or(("NA".to_string(), "NA".to_string()), |(a, b)| (a.to_string(), b.to_string()));
        let _ = writeln!(
            out,
            "{id}\t{records}\t{}\t{}\t{lo}\t{hi}\t{}\t{}",
            failures.get(id).copied().unwrap_or(0),
            ctx.space.len(),
            if norm.degenerate_inputs().contains(id) { "yes" } else { "no" },
            if records > 0 { "yes" } else { "NA" },
        );
    }
    let schema = ProfileSchema {
        feature_columns: norm.feature_names().to_vec(),
        ..ProfileSchema::default()
    };
    let mut buf = Vec::new();
    write_profile(&mut buf, &norm, &schema)?;
    let p = ctx.out(NORMALIZED_FILE);
    fs::write(&p, buf).map_err(|e| Error::io(&p, e))?;
    write_report(&ctx.plan.output_dir, STATS_FILE, &out)?;
    let degenerate: Vec<&str> = norm.degenerate_inputs().iter().map(String::as_str).collect();
    Ok(format!(
        "{} inputs, {} records, {} failures, degenerate inputs: [{}]",
        ids.len(),
        norm.len(),
        failures.values().sum::<usize>(),
        degenerate.join(", ")
    ))
}

pub fn task_predict(ctx: &Context) -> Result<String> {
    let ds = ctx
        .plan
        .inputs
        .apply(read_artifact(&ctx.out(PROFILE_FILE), &ctx.space)?)?
        .normalize_errors();
    let split = ds.split(ctx.cfg.fixed.train_ratio, ctx.seed)?;
    let mut split_text = String::from("input_id\tpartition\n");
    let train_ids = split.train.inputs();
    for id in ds.inputs() {
        let part = if train_ids.contains(&id) { "train" } else { "test" };
        let _ = writeln!(split_text, "{id}\t{part}");
    }
    let grid = ctx.grid()?;
    let cost_tree = TreeCostModel::train(&split.train, ctx.params)?;
    let cost_linear = LinearCostModel::train(&split.train)?;
    let table = train_fitness_table(&split.train, &grid.epsilons)?;
    let m5 = M5Fitness::from_table(&table, ctx.params)?;
    let fit_linear = LinearFitnessModel::from_table(&table)?;

    let models = ctx.out(MODELS_DIR);
    fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
    persist::save(&cost_tree, &models.join(COST_TREE_FILE))?;
    persist::save(&cost_linear, &models.join(COST_LINEAR_FILE))?;
    persist::save(&table, &models.join(FITNESS_TABLE_FILE))?;
    persist::save(&m5, &models.join(FITNESS_M5_FILE))?;
    persist::save(&fit_linear, &models.join(FITNESS_LINEAR_FILE))?;

    let mut feasible = crate::eval::CORNER.to_string();
    for e in &grid.epsilons {
        let _ = write!(feasible, "\t{e}");
    }
    feasible.push('\n');
    for &pi in &grid.pis {
        let _ = write!(feasible, "{pi}");
        for &eps in &grid.epsilons {
            let _ = write!(feasible, "\t{}", feasible_set(&m5, &ctx.space, eps, pi).len());
        }
        feasible.push('\n');
    }
    write_report(&ctx.plan.output_dir, SPLIT_FILE, &split_text)?;
    write_report(&ctx.plan.output_dir, FEASIBLE_FILE, &feasible)?;
    Ok(format!(
        "{} train / {} test inputs, cost tree with {} leaves, fitness tree with {} leaves",
        split.train.inputs().len(),
        split.test.inputs().len(),
        cost_tree.tree.n_leaves(),
        m5.tree.n_leaves()
    ))
}

fn read_split(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut test = BTreeSet::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        match line.split_once('\t') {
            Some((id, "test")) => {
                test.insert(id.to_string());
            }
            Some((_, "train")) => {}
            _ => {
                return Err(Error::Data {
                    line: i + 1,
                    reason: format!("{}: expected `<input>\\t<train|test>`", path.display()),
                })
            }
        }
    }
    Ok(test)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| crate::eval::NA.to_string(), |x| format!("{x:.6}"))
}

pub fn task_result(ctx: &Context) -> Result<String> {
    let norm = ctx.plan.inputs.apply(read_artifact(&ctx.out(NORMALIZED_FILE), &ctx.space)?)?;
    if !norm.is_normalized() {
        return Err(Error::Data {
            line: 1,
            reason: format!("{} lacks the error column", NORMALIZED_FILE),
        });
    }
    let test_ids = read_split(&ctx.out(SPLIT_FILE))?;
    let test_ids: BTreeSet<String> = match &ctx.plan.inputs {
        InputSelector::All => test_ids,
        InputSelector::Ids(ids) => test_ids.intersection(ids).cloned().collect(),
    };
    if let Some(m) = test_ids.iter().find(|i| !norm.has_input(i)) {
        return Err(Error::UnknownInput(m.clone()));
    }
    if test_ids.is_empty() {
        return Err(Error::Split("no test inputs selected".into()));
    }
    let test = norm.subset(&test_ids);
    let models = ctx.out(MODELS_DIR);
    let cost_tree: TreeCostModel<f64> = persist::load(&models.join(COST_TREE_FILE))?;
    let cost_linear: LinearCostModel<f64> = persist::load(&models.join(COST_LINEAR_FILE))?;
    let m5: M5Fitness<f64> = persist::load(&models.join(FITNESS_M5_FILE))?;
    let fit_linear: LinearFitnessModel<f64> = persist::load(&models.join(FITNESS_LINEAR_FILE))?;
    if m5.space != ctx.space || cost_tree.space != ctx.space {
        return Err(Error::Model("persisted models were trained on a different knob space".into()));
    }
    let grid = ctx.grid()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.workers)
        .build()
        .map_err(|e| Error::Plan(e.to_string()))?;
    let oracle = Oracle::new(&test, OracleMode::Fitness)?;
    let policy = |kind: ControllerKind| -> Box<dyn Policy<f64> + '_> {
        match kind {
            ControllerKind::Exhaustive => Box::new(ModelPolicy {
                cost: &cost_tree,
                fit: &m5,
                space: &ctx.space,
                search: Search::Exhaustive,
            }),
            ControllerKind::Precimonious => Box::new(ModelPolicy {
                cost: &cost_tree,
                fit: &m5,
                space: &ctx.space,
                search: Search::Precimonious,
            }),
            ControllerKind::Baseline => Box::new(ModelPolicy {
                cost: &cost_linear,
                fit: &fit_linear,
                space: &ctx.space,
                search: Search::Exhaustive,
            }),
            ControllerKind::Oracle => Box::new(oracle.clone()),
        }
    };
    let (oracle_decisions, decisions) = pool.install(|| -> Result<_> {
        let od = decide_grid(&test, &oracle, &grid)?;
        let mut all: Vec<(ControllerKind, GridDecisions<f64>)> = Vec::new();
        for &k in &ctx.controllers {
            let d = if k == ControllerKind::Oracle {
                od.clone()
            } else {
                decide_grid(&test, policy(k).as_ref(), &grid)?
            };
            all.push((k, d));
        }
        Ok((od, all))
    })?;

    let reports = ctx.out(REPORTS_DIR);
    let mut summary = String::from(
        "controller\tmean_speedup\tna_cells\tinverted_cells\toracle_cost_gap\tsettings_evaluated\n",
    );
    let mut files = Vec::new();
    for (k, d) in &decisions {
        let table = SpeedupTable::from_decisions(&test, d);
        let inv = InversionTable::compare(d, &oracle_decisions)?;
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{}\t{}\t{}",
            k.name(),
            fmt_opt(table.mean()),
            table.na_cells(),
            inv.inverted_cells(),
            fmt_opt(oracle_cost_gap(&test, d, &oracle_decisions)),
            d.stats.settings_evaluated
        );
        let name = format!("speedups_{}.tsv", k.name());
        write_report(&reports, &name, &table.to_tsv())?;
        files.push(name);
    }
    // the headline tables use the first model-driven controller selected
    let (primary, primary_decisions) = decisions
        .iter()
        .find(|(k, _)| *k != ControllerKind::Oracle)
        .or_else(|| decisions.first())
        .expect("at least one controller");
    let inversions = InversionTable::compare(primary_decisions, &oracle_decisions)?;
    write_report(&reports, "speedups.tsv", &SpeedupTable::from_decisions(&test, primary_decisions).to_tsv())?;
    write_report(&reports, "inversions.tsv", &inversions.to_tsv())?;
    write_report(&reports, "inversion_fractions.tsv", &inversions.fractions_tsv())?;

    let cost_points = evaluate_cost_accuracy(&cost_tree, &test);
    write_report(&reports, "cost_scatter.tsv", &cost_scatter_tsv(&ctx.space, &cost_points))?;
    let fit_acc = evaluate_fitness_accuracy(&m5, &test, &grid.epsilons)?;
    write_report(&reports, "fitness_scatter.tsv", &fitness_scatter_tsv(&ctx.space, &fit_acc.points))?;
    for id in &test_ids {
        write_report(&reports, &pareto_file_name(id), &pareto_tsv(&test, id)?)?;
    }
    let pairs: Vec<(f64, f64)> = cost_points.iter().map(|p| (p.predicted, p.measured)).collect();
    let _ = write!(
        summary,
        "\nmetric\tvalue\nprimary_controller\t{}\ncost_pearson\t{}\nfitness_mean_abs_deviation\t{:.6}\n\
         fitness_under_prediction_fraction\t{:.6}\nfitness_skipped_settings\t{}\ntest_inputs\t{}\n",
        primary.name(),
        fmt_opt(pearson(&pairs)),
        fit_acc.mean_abs_deviation(),
        fit_acc.under_prediction_fraction(),
        fit_acc.skipped_settings,
        test_ids.len()
    );
    write_report(&reports, "summary.tsv", &summary)?;
    Ok(format!(
        "{} test inputs, {} controllers, {} inverted cells for {}; reports in {}",
        test_ids.len(),
        decisions.len(),
        inversions.inverted_cells(),
        primary.name(),
        reports.display()
    ))
}
