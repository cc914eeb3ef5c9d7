//! Application configuration: an INI-style file with `[SECTION]` headers,
//! `KEY = value` lines and `#` comments.
//!
//! `[FIXED]` and `[KNOBS]` are required. A comment after a knob line names
//! the knob (`NUM_FIRST_ITER = (1;40;+1) # iter1`); without one the key is
//! the name. `[SCHEMA]`, `[HARNESS]`, `[SYNTH]` and `[MODEL]` are optional.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use crate::dataset::ProfileSchema;
use crate::domain::{Knob, KnobSpace};
use crate::error::{Error, Result};
use crate::models::TreeParams;
use crate::scalar::Scalar;
use crate::synthbench::BenchHarness;

/// Seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 20190611;

/// An inclusive arithmetic grid `(start;stop;step)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

fn decimals(x: f64) -> usize {
    let s = format!("{}", x.abs());
    match s.split_once('.') {
        Some((_, frac)) if !s.contains('e') => frac.len(),
        _ => 0,
    }
}

impl RangeSpec {
    pub fn len(&self) -> usize {
        if self.start == self.stop {
            return 1;
        }
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `start + i * step`, rounded to the decimals written in the range text so
    /// that grid points compare equal to their literal spelling.
    pub fn values(&self) -> Vec<f64> {
        let d = decimals(self.start).max(decimals(self.stop)).max(decimals(self.step));
        (0..self.len())
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                if d <= 12 {
                    let p = 10f64.powi(d as i32);
                    (v * p).round() / p
                } else {
                    v
                }
            })
            .collect()
    }
}

impl std::fmt::Display for RangeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({};{};{:+})", self.start, self.stop, self.step)
    }
}

/// Parses `"(start;stop;step)"`. Errors report the column of the fault.
pub fn parse_range(text: &str) -> Result<RangeSpec> {
    let err = |position: usize, reason: &str| Error::Range {
        text: text.to_string(),
        position,
        reason: reason.to_string(),
    };
    let lead = text.len() - text.trim_start().len();
    let t = text.trim();
    if !t.starts_with('(') {
        return Err(err(lead + 1, "expected `(`"));
    }
    if !t.ends_with(')') || t.len() < 2 {
        return Err(err(lead + t.len(), "expected `)`"));
    }
    let inner = &t[1..t.len() - 1];
    let mut nums = [0f64; 3];
    let mut offset = lead + 2;
    let parts: Vec<&str> = inner.split(';').collect();
    if parts.len() != 3 {
        return Err(err(lead + 2, "expected three `;`-separated numbers"));
    }
    for (i, p) in parts.iter().enumerate() {
        let col = offset + (p.len() - p.trim_start().len());
        nums[i] = p
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(col, &format!("`{}` is not a number", p.trim())))?;
        offset += p.len() + 1;
    }
    let [start, stop, step] = nums;
    let step_col = lead + 2 + parts[0].len() + parts[1].len() + 2;
    if step == 0.0 {
        return Err(err(step_col, "step must be nonzero"));
    }
    if start != stop && (stop - start).signum() != step.signum() {
        return Err(err(step_col, "step points away from stop"));
    }
    Ok(RangeSpec { start, stop, step })
}

/// Levels of one knob: a range or an explicit list `[a, b, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelSpec {
    Range(RangeSpec),
    List(Vec<f64>),
}

impl LevelSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LevelSpec::Range(r) => r.values(),
            LevelSpec::List(v) => v.clone(),
        }
    }
}

impl std::fmt::Display for LevelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LevelSpec::Range(r) => write!(f, "{r}"),
            LevelSpec::List(v) => {
                let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", items.join(", "))
            }
        }
    }
}

fn parse_levels(text: &str) -> Result<LevelSpec> {
    let t = text.trim();
    if let Some(inner) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
        let values = inner
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Range {
                    text: text.to_string(),
                    position: 1,
                    reason: format!("`{}` is not a number", s.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        return Ok(LevelSpec::List(values));
    }
    parse_range(text).map(LevelSpec::Range)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnobSpec {
    /// Config key, e.g. `NUM_FIRST_ITER`.
    pub key: String,
    /// Knob name used in profiles and templates, e.g. `iter1`.
    pub name: String,
    pub levels: LevelSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixed {
    pub pbs: RangeSpec,
    pub ebs: RangeSpec,
    pub train_ratio: f64,
    /// Knob name or key to accurate value, as written.
    pub accurate_knobs: BTreeMap<String, String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessSpec {
    pub command: String,
    pub inputs: Vec<String>,
    pub timeout_secs: f64,
    pub repeats: usize,
    pub distance_tag: String,
    pub cost_tag: String,
    pub feature_tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub inputs: usize,
    pub features: usize,
    pub noise: f64,
    pub sensitivity: f64,
    /// Settings profiled per input; `None` profiles all.
    pub sampled: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaSpec {
    pub input: String,
    pub features: Vec<String>,
    pub distance: String,
    pub cost: String,
    pub weight: Option<String>,
    /// Existing profile file imported by the run task.
    pub file: Option<String>,
}

impl Default for SchemaSpec {
    fn default() -> Self {
        let d = ProfileSchema::default();
        SchemaSpec {
            input: d.input_column,
            features: Vec::new(),
            distance: d.distance_column,
            cost: d.cost_column,
            weight: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub fixed: Fixed,
    pub knobs: Vec<KnobSpec>,
    pub schema: Option<SchemaSpec>,
    pub harness: Option<HarnessSpec>,
    pub synth: Option<SynthSpec>,
    pub model: Option<TreeParams>,
}

struct Entry {
    line: usize,
    value: String,
    comment: Option<String>,
}

type Sections = BTreeMap<String, (usize, BTreeMap<String, Entry>)>;

fn config_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        reason: reason.into(),
    }
}

fn split_comment(line: &str) -> (&str, Option<&str>) {
    // '#' inside a quoted value is kept
    let mut quote = None;
    for (i, c) in line.char_indices() {
        match (c, quote) {
            ('\'' | '"', None) => quote = Some(c),
            (q, Some(open)) if q == open => quote = None,
            ('#', None) => return (&line[..i], Some(line[i + 1..].trim())),
            _ => {}
        }
    }
    (line, None)
}

fn sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let (body, comment) = split_comment(raw);
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim().to_string();
            if out.contains_key(&name) {
                return Err(config_err(line, format!("duplicate section [{name}]")));
            }
            if !["FIXED", "KNOBS", "SCHEMA", "HARNESS", "SYNTH", "MODEL"].contains(&name.as_str()) {
                return Err(config_err(line, format!("unknown section [{name}]")));
            }
            out.insert(name.clone(), (line, BTreeMap::new()));
            current = Some(name);
            continue;
        }
        let Some(sec) = &current else {
            return Err(config_err(line, "key outside of any section"));
        };
        let Some((key, value)) = body.split_once('=') else {
            return Err(config_err(line, format!("expected `KEY = value`, got `{body}`")));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(config_err(line, "empty key"));
        }
        let entries = &mut out.get_mut(sec).expect("section exists").1;
        if entries.contains_key(&key) {
            return Err(config_err(line, format!("duplicate key `{key}`")));
        }
        entries.insert(
            key,
            Entry {
                line,
                value: value.trim().to_string(),
                comment: comment.filter(|c| !c.is_empty()).map(str::to_string),
            },
        );
    }
    Ok(out)
}

struct Section<'a> {
    name: &'a str,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section<'_> {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<Entry> {
        self.take(key).ok_or_else(|| Error::MissingKey(format!("{}.{key}", self.name)))
    }

    fn finish(self) -> Result<()> {
        match self.entries.iter().min_by_key(|(_, e)| e.line) {
            Some((k, e)) => Err(config_err(e.line, format!("unknown key `{k}` in [{}]", self.name))),
            None => Ok(()),
        }
    }
}

fn number<T: std::str::FromStr>(e: &Entry, what: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| config_err(e.line, format!("{what}: `{}` is not a valid number", e.value)))
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['\'', '"'] {
        if let Some(inner) = s.strip_prefix(q).and_then(|x| x.strip_suffix(q)) {
            return inner;
        }
    }
    s
}

fn parse_mapping(e: &Entry) -> Result<BTreeMap<String, String>> {
    let inner = e
        .value
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| config_err(e.line, "ACCURATE_KNOBS must look like {'knob': 'value', ...}"))?;
    let mut out = BTreeMap::new();
    for item in inner.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once(':')
            .ok_or_else(|| config_err(e.line, format!("expected `'knob': 'value'`, got `{}`", item.trim())))?;
        if out.insert(unquote(k).to_string(), unquote(v).to_string()).is_some() {
            return Err(config_err(e.line, format!("knob `{}` listed twice", unquote(k))));
        }
    }
    Ok(out)
}

fn range_at(e: &Entry) -> Result<RangeSpec> {
    parse_range(&e.value).map_err(|err| config_err(e.line, err.to_string()))
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut secs = sections(text)?;
        let mut section = |name: &'static str| {
            secs.remove(name).map(|(line, entries)| Section { name, line, entries })
        };

        let mut fixed = section("FIXED").ok_or_else(|| Error::MissingKey("[FIXED]".into()))?;
        let pbs = range_at(&fixed.require("PBS")?)?;
        let ebs = range_at(&fixed.require("EBS")?)?;
        let tr = fixed.require("TRAIN_RATIO")?;
        let train_ratio: f64 = number(&tr, "TRAIN_RATIO")?;
        if !(train_ratio > 0.0 && train_ratio < 1.0) {
            return Err(config_err(tr.line, "TRAIN_RATIO must lie strictly between 0 and 1"));
        }
        let acc = fixed.require("ACCURATE_KNOBS")?;
        let accurate_knobs = parse_mapping(&acc)?;
        let seed = fixed.take("SEED").map(|e| number(&e, "SEED")).transpose()?;
        for (e, which) in [(&pbs, "PBS"), (&ebs, "EBS")] {
            let vals = e.values();
            let ok = vals.iter().all(|&v| {
                if which == "PBS" {
                    v > 0.0 && v <= 1.0
                } else {
                    (0.0..=1.0).contains(&v)
                }
            });
            if !ok {
                return Err(config_err(fixed.line, format!("{which} values must lie in the allowed probability/error range")));
            }
        }
        fixed.finish()?;

        let knobs_sec = section("KNOBS").ok_or_else(|| Error::MissingKey("[KNOBS]".into()))?;
        let mut knob_entries: Vec<(String, Entry)> = knobs_sec.entries.into_iter().collect();
        knob_entries.sort_by_key(|(_, e)| e.line);
        if knob_entries.is_empty() {
            return Err(config_err(knobs_sec.line, "[KNOBS] declares no knobs"));
        }
        let mut knobs = Vec::new();
        for (key, e) in knob_entries {
            let levels = parse_levels(&e.value).map_err(|err| config_err(e.line, err.to_string()))?;
            let name = match &e.comment {
                Some(c) if !c.contains(char::is_whitespace) => c.clone(),
                Some(c) => return Err(config_err(e.line, format!("knob name `{c}` must be a single word"))),
                None => key.clone(),
            };
            knobs.push((e.line, KnobSpec { key, name, levels }));
        }

        let schema = section("SCHEMA")
            .map(|mut s| -> Result<SchemaSpec> {
                let d = SchemaSpec::default();
                let spec = SchemaSpec {
                    input: s.take("INPUT").map_or(d.input, |e| e.value),
                    features: s.take("FEATURES").map_or(d.features, |e| list(&e.value)),
                    distance: s.take("DISTANCE").map_or(d.distance, |e| e.value),
                    cost: s.take("COST").map_or(d.cost, |e| e.value),
                    weight: s.take("WEIGHT").map(|e| e.value),
                    file: s.take("FILE").map(|e| e.value),
                };
                s.finish()?;
                Ok(spec)
            })
            .transpose()?;

        let harness = section("HARNESS")
            .map(|mut s| -> Result<HarnessSpec> {
                let command = s.require("COMMAND")?.value;
                let inputs = list(&s.require("INPUTS")?.value);
                let timeout_secs = s.take("TIMEOUT").map(|e| number(&e, "TIMEOUT")).transpose()?.unwrap_or(60.0);
                let repeats = s.take("REPEATS").map(|e| number(&e, "REPEATS")).transpose()?.unwrap_or(1);
                if !(timeout_secs > 0.0) || repeats == 0 {
                    return Err(config_err(s.line, "TIMEOUT must be > 0 and REPEATS >= 1"));
                }
                let spec = HarnessSpec {
                    command,
                    inputs,
                    timeout_secs,
                    repeats,
                    distance_tag: s.take("DISTANCE_TAG").map_or("DISTANCE".into(), |e| e.value),
                    cost_tag: s.take("COST_TAG").map_or("COST".into(), |e| e.value),
                    feature_tag: s.take("FEATURE_TAG").map_or("FEATURE".into(), |e| e.value),
                };
                s.finish()?;
                Ok(spec)
            })
            .transpose()?;

        let synth = section("SYNTH")
            .map(|mut s| -> Result<SynthSpec> {
                let spec = SynthSpec {
                    inputs: number(&s.require("INPUTS")?, "INPUTS")?,
                    features: s.take("FEATURES").map(|e| number(&e, "FEATURES")).transpose()?.unwrap_or(2),
                    noise: s.take("NOISE").map(|e| number(&e, "NOISE")).transpose()?.unwrap_or(0.0),
                    sensitivity: s.take("SENSITIVITY").map(|e| number(&e, "SENSITIVITY")).transpose()?.unwrap_or(0.5),
                    sampled: s.take("SAMPLED").map(|e| number(&e, "SAMPLED")).transpose()?,
                };
                if spec.inputs == 0 || !(spec.noise >= 0.0) || !(spec.sensitivity >= 0.0) {
                    return Err(config_err(s.line, "SYNTH needs INPUTS >= 1 and non-negative NOISE and SENSITIVITY"));
                }
                s.finish()?;
                Ok(spec)
            })
            .transpose()?;

        let model = section("MODEL")
            .map(|mut s| -> Result<TreeParams> {
                let d = TreeParams::default();
                let p = TreeParams {
                    min_leaf: s.take("MIN_LEAF").map(|e| number(&e, "MIN_LEAF")).transpose()?.unwrap_or(d.min_leaf),
                    sd_floor: s.take("SD_FLOOR").map(|e| number(&e, "SD_FLOOR")).transpose()?.unwrap_or(d.sd_floor),
                    smoothing: s.take("SMOOTHING").map(|e| number(&e, "SMOOTHING")).transpose()?.unwrap_or(d.smoothing),
                    prune: s
                        .take("PRUNE")
                        .map(|e| match e.value.to_ascii_lowercase().as_str() {
                            "true" | "yes" | "1" => Ok(true),
                            "false" | "no" | "0" => Ok(false),
                            _ => Err(config_err(e.line, format!("PRUNE: `{}` is not a boolean", e.value))),
                        })
                        .transpose()?
                        .unwrap_or(d.prune),
                };
                if p.min_leaf == 0 || !(p.sd_floor >= 0.0) || !(p.smoothing >= 0.0) {
                    return Err(config_err(s.line, "MIN_LEAF must be >= 1; SD_FLOOR and SMOOTHING >= 0"));
                }
                s.finish()?;
                Ok(p)
            })
            .transpose()?;

        // accurate values must name declared knobs and lie on their grids
        for (name, value) in &accurate_knobs {
            let Some((line, k)) = knobs.iter().find(|(_, k)| &k.name == name || &k.key == name) else {
                return Err(config_err(acc.line, format!("ACCURATE_KNOBS names unknown knob `{name}`")));
            };
            let v: f64 = value
                .parse()
                .map_err(|_| config_err(acc.line, format!("accurate value `{value}` of `{name}` is not a number")))?;
            if Knob::new(&k.name, k.levels.values(), 0)
                .map_err(|e| config_err(*line, e.to_string()))?
                .level_of(v)
                .is_none()
            {
                return Err(config_err(acc.line, format!("accurate value {value} is not a level of knob `{name}`")));
            }
        }
        for (line, k) in &knobs {
            if !accurate_knobs.contains_key(&k.name) && !accurate_knobs.contains_key(&k.key) {
                return Err(config_err(*line, format!("knob `{}` has no entry in ACCURATE_KNOBS", k.name)));
            }
        }

        Ok(AppConfig {
            fixed: Fixed {
                pbs,
                ebs,
                train_ratio,
                accurate_knobs,
                seed,
            },
            knobs: knobs.into_iter().map(|(_, k)| k).collect(),
            schema,
            harness,
            synth,
            model,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn accurate_value(&self, k: &KnobSpec) -> &str {
        self.fixed
            .accurate_knobs
            .get(&k.name)
            .or_else(|| self.fixed.accurate_knobs.get(&k.key))
            .expect("checked at parse time")
    }

    pub fn space<F: Scalar>(&self) -> Result<KnobSpace<F>> {
        let knobs = self
            .knobs
            .iter()
            .map(|k| {
                let levels: Vec<F> = k.levels.values().into_iter().map(F::of).collect();
                let probe = Knob::new(&k.name, levels.clone(), 0)?;
                let v: f64 = self.accurate_value(k).parse().expect("checked at parse time");
                let acc = probe.level_of(F::of(v)).expect("checked at parse time");
                Knob::new(&k.name, levels, acc)
            })
            .collect::<Result<Vec<_>>>()?;
        KnobSpace::new(knobs)
    }

    pub fn pis(&self) -> Vec<f64> {
        self.fixed.pbs.values()
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.fixed.ebs.values()
    }

    pub fn profile_schema(&self) -> ProfileSchema {
        let s = self.schema.clone().unwrap_or_default();
        ProfileSchema {
            input_column: s.input,
            feature_columns: s.features,
            distance_column: s.distance,
            cost_column: s.cost,
            weight_column: s.weight,
            ..ProfileSchema::default()
        }
    }

    pub fn bench_harness(&self) -> Option<BenchHarness> {
        self.harness.as_ref().map(|h| BenchHarness {
            command: h.command.clone(),
            distance_prefix: format!("{} ", h.distance_tag),
            cost_prefix: format!("{} ", h.cost_tag),
            feature_prefix: format!("{} ", h.feature_tag),
            timeout: Duration::from_secs_f64(h.timeout_secs),
            repeats: h.repeats,
            ..BenchHarness::default()
        })
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::from("[FIXED]\n\n");
        let f = &self.fixed;
        let _ = writeln!(out, "PBS = {}", f.pbs);
        let _ = writeln!(out, "EBS = {}", f.ebs);
        let _ = writeln!(out, "TRAIN_RATIO = {}", f.train_ratio);
        let acc: Vec<String> = f.accurate_knobs.iter().map(|(k, v)| format!("'{k}': '{v}'")).collect();
        let _ = writeln!(out, "ACCURATE_KNOBS = {{{}}}", acc.join(", "));
        if let Some(seed) = f.seed {
            let _ = writeln!(out, "SEED = {seed}");
        }
        out.push_str("\n[KNOBS]\n\n");
        for k in &self.knobs {
            if k.name == k.key {
                let _ = writeln!(out, "{} = {}", k.key, k.levels);
            } else {
                let _ = writeln!(out, "{} = {} # {}", k.key, k.levels, k.name);
            }
        }
        if let Some(s) = &self.schema {
            out.push_str("\n[SCHEMA]\n");
            let _ = writeln!(out, "INPUT = {}", s.input);
            if !s.features.is_empty() {
                let _ = writeln!(out, "FEATURES = {}", s.features.join(", "));
            }
            let _ = writeln!(out, "DISTANCE = {}", s.distance);
            let _ = writeln!(out, "COST = {}", s.cost);
            if let Some(w) = &s.weight {
                let _ = writeln!(out, "WEIGHT = {w}");
            }
            if let Some(p) = &s.file {
                let _ = writeln!(out, "FILE = {p}");
            }
        }
        if let Some(h) = &self.harness {
            out.push_str("\n[HARNESS]\n");
            let _ = writeln!(out, "COMMAND = {}", h.command);
            let _ = writeln!(out, "INPUTS = {}", h.inputs.join(", "));
            let _ = writeln!(out, "TIMEOUT = {}", h.timeout_secs);
            let _ = writeln!(out, "REPEATS = {}", h.repeats);
            let _ = writeln!(out, "DISTANCE_TAG = {}", h.distance_tag);
            let _ = writeln!(out, "COST_TAG = {}", h.cost_tag);
            let _ = writeln!(out, "FEATURE_TAG = {}", h.feature_tag);
        }
        if let Some(s) = &self.synth {
            out.push_str("\n[SYNTH]\n");
            let _ = writeln!(out, "INPUTS = {}", s.inputs);
            let _ = writeln!(out, "FEATURES = {}", s.features);
            let _ = writeln!(out, "NOISE = {}", s.noise);
            let _ = writeln!(out, "SENSITIVITY = {}", s.sensitivity);
            if let Some(n) = s.sampled {
                let _ = writeln!(out, "SAMPLED = {n}");
            }
        }
        if let Some(p) = &self.model {
            out.push_str("\n[MODEL]\n");
            let _ = writeln!(out, "MIN_LEAF = {}", p.min_leaf);
            let _ = writeln!(out, "SD_FLOOR = {}", p.sd_floor);
            let _ = writeln!(out, "SMOOTHING = {}", p.smoothing);
            let _ = writeln!(out, "PRUNE = {}", p.prune);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const GEM: &str = "[FIXED]

PBS = (1.0;0.05;-0.05)
EBS = (0.05;1;+0.05)
TRAIN_RATIO = 0.75
ACCURATE_KNOBS = {'iter1': '40', 'iter2': '40'}

[KNOBS]

NUM_FIRST_ITER = (1;40;+1) # iter1
NUM_SECOND_ITER = (1;40;+1) # iter2
";

    #[test]
    fn gem_snippet() {
        let cfg = AppConfig::parse(GEM).unwrap();
        let space = cfg.space::<f64>().unwrap();
        assert_eq!(space.arity(), 2);
        assert!(space.knobs().iter().all(|k| k.len() == 40));
        assert_eq!(space.knobs()[0].name(), "iter1");
        assert_eq!(cfg.knobs[1].key, "NUM_SECOND_ITER");
        assert_eq!(cfg.fixed.train_ratio, 0.75);
        assert_eq!(space.values(&space.accurate_setting()), [40.0, 40.0]);
        let pis = cfg.pis();
        assert_eq!(pis.len(), 20);
        assert_eq!((pis[0], pis[19]), (1.0, 0.05));
        let eps = cfg.epsilons();
        assert_eq!(eps.len(), 20);
        assert_eq!((eps[0], eps[19]), (0.05, 1.0));
    }

    #[test]
    fn range_examples() {
        let r = parse_range("(1;40;+1)").unwrap().values();
        assert_eq!(r, (1..=40).map(f64::from).collect::<Vec<_>>());
        let p = parse_range("(1.0;0.05;-0.05)").unwrap().values();
        assert_eq!(p.len(), 20);
        assert_eq!(p[1], 0.95);
        assert_eq!(p[19], 0.05);
        assert_eq!(parse_range("(0.5;0.5;+0.1)").unwrap().values(), [0.5]);
        // step not dividing the span stops short of stop
        assert_eq!(parse_range("(0;1;0.3)").unwrap().values(), [0.0, 0.3, 0.6, 0.9]);
    }

    #[test]
    fn range_errors_carry_position() {
        for (text, pos) in [("(1;40;0)", 7), ("(1;40;-1)", 7), ("1;40;1)", 1), ("(1;x;1)", 4), ("(1;2)", 2)] {
            match parse_range(text) {
                Err(Error::Range { position, .. }) => assert_eq!(position, pos, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_accurate_knobs_names_key() {
        let text = GEM.replace("ACCURATE_KNOBS = {'iter1': '40', 'iter2': '40'}\n", "");
        let e = AppConfig::parse(&text).unwrap_err();
        assert!(matches!(&e, Error::MissingKey(k) if k.contains("ACCURATE_KNOBS")), "{e}");
    }

    #[test]
    fn rejects_bad_inputs_with_line() {
        let cases = [
            (GEM.replace("TRAIN_RATIO = 0.75", "TRAIN_RATIO = 0.75\nFOO = 1"), 6),
            (GEM.replace("'40', 'iter2'", "'41', 'iter2'"), 6),
            (GEM.replace("(1;40;+1) # iter1", "(1;40;-1) # iter1"), 10),
            (GEM.replace("TRAIN_RATIO = 0.75", "TRAIN_RATIO = 1.5"), 5),
        ];
        for (text, line) in cases {
            match AppConfig::parse(&text) {
                Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn optional_sections_round_trip() {
        let text = GEM.replace("TRAIN_RATIO = 0.75", "TRAIN_RATIO = 0.75\nSEED = 3")
            + "\n[SCHEMA]\nFEATURES = size, depth\nWEIGHT = w\n\n[HARNESS]\n\
               COMMAND = {bindir}/toyprog {input} {knob:iter1} {knob:iter2}\nINPUTS = a, b\nTIMEOUT = 2.5\n\n\
               [SYNTH]\nINPUTS = 20\nNOISE = 0.01\n\n[MODEL]\nMIN_LEAF = 2\nPRUNE = no\n";
        let cfg = AppConfig::parse(&text).unwrap();
        assert_eq!(cfg.fixed.seed, Some(3));
        assert_eq!(cfg.schema.as_ref().unwrap().features, ["size", "depth"]);
        assert_eq!(cfg.harness.as_ref().unwrap().timeout_secs, 2.5);
        assert!(!cfg.model.unwrap().prune);
        assert_eq!(AppConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let h = cfg.bench_harness().unwrap();
        assert_eq!(h.distance_prefix, "DISTANCE ");
    }

    #[test]
    fn list_levels_and_key_names() {
        let text = "[FIXED]\nPBS = (1;0.5;-0.5)\nEBS = (0.1;0.2;0.1)\nTRAIN_RATIO = 0.5\nACCURATE_KNOBS = {\"DECIM\": \"1\"}\n[KNOBS]\nDECIM = [1, 2, 4, 8]\n";
        let cfg = AppConfig::parse(text).unwrap();
        let space = cfg.space::<f32>().unwrap();
        assert_eq!(space.knobs()[0].name(), "DECIM");
        assert_eq!(space.knobs()[0].accurate_level(), 0);
        assert_eq!(AppConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn range_cardinality_and_spacing(start in -50i32..50, span in 0i32..200, step in 1i32..40, dec in 0u32..3) {
            let scale = 10f64.powi(dec as i32);
            let (a, b, s) = (start as f64 / scale, (start + span) as f64 / scale, step as f64 / scale);
            for (x, y, st) in [(a, b, s), (b, a, -s)] {
                let r = parse_range(&format!("({x};{y};{st})")).unwrap();
                let v = r.values();
                let want = if x == y { 1 } else { ((y - x) / st + 1e-9).floor() as usize + 1 };
                prop_assert_eq!(v.len(), want);
                prop_assert!(v.windows(2).all(|w| ((w[1] - w[0]) - st).abs() < 1e-9));
                prop_assert_eq!(parse_range(&r.to_string()).unwrap(), r);
            }
        }
    }
}
