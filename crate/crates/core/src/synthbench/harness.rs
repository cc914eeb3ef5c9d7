//! Profiling of external tunable programs, one subprocess per
//! `(input, setting)` pair.
//!
//! Each completed attempt is appended to a journal in the output directory
//! so an interrupted sweep resumes where it stopped. After the sweep the
//! canonical `profile.csv` and `failures.tsv` are rewritten in sorted order.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_profile, ProfileSchema};
use crate::dataset::Dataset;
use crate::domain::{InputFeatures, KnobSetting, KnobSpace, RunRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const JOURNAL_FILE: &str = "runs.jsonl";
pub const PROFILE_FILE: &str = "profile.csv";
pub const FAILURES_FILE: &str = "failures.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchHarness {
    /// Whitespace-separated argv with `{input}`, `{knob:NAME}` and
    /// `{bindir}` placeholders.
    pub command: String,
    pub distance_prefix: String,
    pub cost_prefix: String,
    /// Lines `<prefix><name> <value>` become input features.
    pub feature_prefix: String,
    pub timeout: Duration,
    /// Runs per pair; distances and costs are averaged.
    pub repeats: usize,
    pub workers: usize,
    /// Replacement for `{bindir}`.
    pub bindir: Option<PathBuf>,
}

impl Default for BenchHarness {
    fn default() -> Self {
        BenchHarness {
            command: String::new(),
            distance_prefix: "DISTANCE ".into(),
            cost_prefix: "COST ".into(),
            feature_prefix: "FEATURE ".into(),
            timeout: Duration::from_secs(60),
            repeats: 1,
            workers: 1,
            bindir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub input_id: String,
    pub setting: KnobSetting,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<F: Scalar> {
    pub dataset: Dataset<F>,
    pub failures: Vec<RunFailure>,
    /// Subprocesses started by this call.
    pub launched: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Measurement {
    pub feature_names: Vec<String>,
    pub features: Vec<f64>,
    pub distance: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JournalEntry {
    input_id: String,
    setting: Vec<usize>,
    #[serde(flatten)]
    result: JournalResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum JournalResult {
    Ok(Measurement),
    Failed(String),
}

impl BenchHarness {
    /// Checks that the template names the input and every knob.
    pub fn validate<F: Scalar>(&self, space: &KnobSpace<F>) -> Result<()> {
        if self.command.split_whitespace().next().is_none() {
            return Err(Error::Harness("empty command template".into()));
        }
        if !self.command.contains("{input}") {
            return Err(Error::Harness("command template lacks {input}".into()));
        }
        for k in space.knobs() {
            if !self.command.contains(&format!("{{knob:{}}}", k.name())) {
                return Err(Error::Harness(format!("command template lacks {{knob:{}}}", k.name())));
            }
        }
        if self.repeats == 0 {
            return Err(Error::Harness("repeats must be >= 1".into()));
        }
        Ok(())
    }

    /// Argument vector for one run.
    pub fn argv<F: Scalar>(&self, space: &KnobSpace<F>, input: &str, setting: &KnobSetting) -> Vec<String> {
        let values = space.values(setting);
        let bindir = self
            .bindir
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| ".".into());
        self.command
            .split_whitespace()
            .map(|tok| {
                let mut t = tok.replace("{input}", input).replace("{bindir}", &bindir);
                for (k, v) in space.knobs().iter().zip(&values) {
                    t = t.replace(&format!("{{knob:{}}}", k.name()), &v.to_string());
                }
                t
            })
            .collect()
    }

    fn run_once(&self, argv: &[String]) -> std::result::Result<Measurement, String> {
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot start `{}`: {e}", argv[0]))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(format!("timed out after {:?}", self.timeout));
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(format!("wait failed: {e}")),
            }
        };
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(format!("exit status {status}: {}", err.trim()));
        }
        self.parse_output(&out)
    }

    /// Extracts distance, cost and features from program output.
    pub fn parse_output(&self, out: &str) -> std::result::Result<Measurement, String> {
        let mut distance = None;
        let mut cost = None;
        let mut feature_names = Vec::new();
        let mut features = Vec::new();
        let number = |t: &str| -> std::result::Result<f64, String> {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("unparseable output: {}", out.trim()))
        };
        for line in out.lines() {
            if let Some(rest) = line.strip_prefix(&self.distance_prefix) {
                distance = Some(number(rest)?);
            } else if let Some(rest) = line.strip_prefix(&self.cost_prefix) {
                cost = Some(number(rest)?);
            } else if let Some(rest) = line.strip_prefix(&self.feature_prefix) {
                let (name, value) = rest
                    .trim()
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| format!("unparseable output: {}", out.trim()))?;
                feature_names.push(name.to_string());
                features.push(number(value)?);
            }
        }
        match (distance, cost) {
            (Some(d), Some(c)) if d >= 0.0 && c > 0.0 => Ok(Measurement {
                feature_names,
                features,
                distance: d,
                cost: c,
            }),
            (Some(_), Some(_)) => Err(format!("distance must be >= 0 and cost > 0: {}", out.trim())),
            _ => Err(format!("unparseable output: {}", out.trim())),
        }
    }

    fn measure(&self, argv: &[String]) -> std::result::Result<Measurement, String> {
        let mut acc: Option<Measurement> = None;
        for _ in 0..self.repeats {
            let m = self.run_once(argv)?;
            acc = Some(match acc {
                None => m,
                Some(mut a) => {
                    a.distance += m.distance;
                    a.cost += m.cost;
                    a
                }
            });
        }
        let mut m = acc.expect("repeats >= 1");
        m.distance /= self.repeats as f64;
        m.cost /= self.repeats as f64;
        Ok(m)
    }
}

fn read_journal(path: &Path) -> Result<Vec<JournalEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from an interrupted run is dropped and redone
        match serde_json::from_str(&line) {
            Ok(e) => entries.push(e),
            Err(_) => warn!("{}: skipping incomplete journal line", path.display()),
        }
    }
    Ok(entries)
}

/// Profiles `inputs` x `settings`. With `out_dir`, prior attempts recorded
/// there are reused and not relaunched.
pub fn run_external<F: Scalar>(
    harness: &BenchHarness,
    space: &KnobSpace<F>,
    inputs: &[String],
    settings: &[KnobSetting],
    out_dir: Option<&Path>,
) -> Result<RunOutcome<F>> {
    harness.validate(space)?;
    for s in settings {
        space.check(s)?;
    }
    let mut done: BTreeMap<(String, KnobSetting), JournalResult> = BTreeMap::new();
    let journal_path = out_dir.map(|d| d.join(JOURNAL_FILE));
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    if let Some(p) = &journal_path {
        for e in read_journal(p)? {
            done.insert((e.input_id, KnobSetting(e.setting)), e.result);
        }
    }
    let pending: Vec<(String, KnobSetting)> = inputs
        .iter()
        .flat_map(|i| settings.iter().map(move |s| (i.clone(), s.clone())))
        .filter(|key| !done.contains_key(key))
        .collect();
    info!(
        "profiling {} runs ({} already recorded)",
        pending.len(),
        inputs.len() * settings.len() - pending.len()
    );

    let journal = match &journal_path {
        Some(p) => Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| Error::io(p, e))?,
        )),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(harness.workers.max(1))
        .build()
        .map_err(|e| Error::Harness(e.to_string()))?;
    let results: Vec<Result<(String, KnobSetting, JournalResult)>> = pool.install(|| {
        pending
            .par_iter()
            .map(|(input, setting)| {
                let argv = harness.argv(space, input, setting);
                let result = match harness.measure(&argv) {
                    Ok(m) => JournalResult::Ok(m),
                    Err(reason) => {
                        warn!("run failed for input `{input}` at {setting}: {reason}");
                        JournalResult::Failed(reason)
                    }
                };
                if let (Some(j), Some(p)) = (&journal, &journal_path) {
                    let entry = JournalEntry {
                        input_id: input.clone(),
                        setting: setting.0.clone(),
                        result: result.clone(),
                    };
                    let mut line = serde_json::to_string(&entry)?;
                    line.push('\n');
                    let mut f = j.lock().expect("journal lock");
                    f.write_all(line.as_bytes()).map_err(|e| Error::io(p, e))?;
                    f.flush().map_err(|e| Error::io(p, e))?;
                }
                Ok((input.clone(), setting.clone(), result))
            })
            .collect()
    });
    let launched = pending.len() * harness.repeats;
    for r in results {
        let (i, s, res) = r?;
        done.insert((i, s), res);
    }

    let wanted: std::collections::BTreeSet<&String> = inputs.iter().collect();
    let mut feature_names: Option<Vec<String>> = None;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for ((input, setting), res) in done {
        if !wanted.contains(&input) || !settings.contains(&setting) {
            continue;
        }
        match res {
            JournalResult::Failed(reason) => failures.push(RunFailure {
                input_id: input,
                setting,
                reason,
            }),
            JournalResult::Ok(m) => {
                let names = feature_names.get_or_insert_with(|| m.feature_names.clone());
                if *names != m.feature_names {
                    failures.push(RunFailure {
                        input_id: input,
                        setting,
                        reason: format!("feature names {:?} differ from {:?}", m.feature_names, names),
                    });
                    continue;
                }
                records.push(RunRecord::new(
                    input,
                    InputFeatures(m.features.iter().map(|&v| F::of(v)).collect()),
                    setting,
                    F::of(m.distance),
                    F::of(m.cost),
                ));
            }
        }
    }
    let mut dataset = Dataset::new(space.clone(), feature_names.unwrap_or_default());
    for r in records {
        dataset.push(r)?;
    }
    if let Some(dir) = out_dir {
        write_outputs(dir, &dataset, &failures)?;
    }
    Ok(RunOutcome {
        dataset,
        failures,
        launched,
    })
}

/// Writes the canonical profile and failure list.
pub fn write_outputs<F: Scalar>(dir: &Path, ds: &Dataset<F>, failures: &[RunFailure]) -> Result<()> {
    let schema = ProfileSchema {
        feature_columns: ds.feature_names().to_vec(),
        ..Default::default()
    };
    let path = dir.join(PROFILE_FILE);
    let mut buf = Vec::new();
    write_profile(&mut buf, ds, &schema)?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    write_failures(&dir.join(FAILURES_FILE), ds.space(), failures)
}

pub fn write_failures<F: Scalar>(path: &Path, space: &KnobSpace<F>, failures: &[RunFailure]) -> Result<()> {
    let mut out = String::from("input_id\tsetting\treason\n");
    for f in failures {
        let values: Vec<String> = space.values(&f.setting).iter().map(|v| v.to_string()).collect();
        let reason = f.reason.replace(['\t', '\n', '\r'], " ");
        out.push_str(&format!("{}\t{}\t{}\n", f.input_id, values.join(";"), reason));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Number of failure rows in a failures file, or 0 when absent.
pub fn count_failures(path: &Path) -> Result<usize> {
    if !path.exists() {
        return Ok(0);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().skip(1).filter(|l| !l.trim().is_empty()).count())
}
