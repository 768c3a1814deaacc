//! Experiment registry, configuration files, run reports and data output.
//!
//! A run reads a TOML config naming one experiment, fills in that
//! experiment's defaults, validates the result, dispatches to the module
//! entry point and writes `report.json`, `config.toml` (the resolved echo)
//! and one CSV per data table into the run directory.

mod experiments;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub use experiments::REGISTRY;

/// Environment variable naming the directory under which run directories are created.
pub const OUTPUT_ROOT_ENV: &str = "CHLAB_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";
const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    /// Midpoint of the box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Exponential weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Width `K` of the Ψ_K weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Offset `x0` of the localized functionals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Lower speed bound `c₁` of the functionals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    /// Initial soliton position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<f64>,
    /// Perturbation size relative to the soliton: H¹ norm for single-soliton
    /// runs, peak height for trains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_mode: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speeds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
    /// Evaluation time `|t|` of the exact two-soliton.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    /// Shift `K` in `∂(L₂ + K L₁)` for the second gKdV generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

/// Contents of a config file; after [`resolve`] every field the experiment
/// reads is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub grid: GridSettings,
    #[serde(default, skip_serializing_if = "is_default")]
    pub params: PhysicalParams,
    #[serde(default, skip_serializing_if = "is_default")]
    pub evolution: EvolutionSettings,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl ExperimentConfig {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Dotted names of every key that is set, e.g. `params.c`.
    fn set_keys(&self) -> Vec<String> {
        let mut keys = Vec::new();
        let v = serde_json::to_value(self).expect("config serializes");
        for section in ["grid", "params", "evolution"] {
            if let Some(Value::Object(m)) = v.get(section) {
                keys.extend(m.keys().map(|k| format!("{section}.{k}")));
            }
        }
        keys
    }
}

/// Failures of a run, each with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum HarnessError {
    UnknownExperiment {
        name: String,
        suggestions: Vec<String>,
    },
    Config(String),
    Runtime(crate::Error),
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::UnknownExperiment { .. } | Self::Config(_) => 2,
            Self::Runtime(_) | Self::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownExperiment { .. } => "unknown_experiment",
            Self::Config(_) => "config",
            Self::Runtime(_) => "runtime",
            Self::Io(_) => "io",
        }
    }

    pub fn to_json(&self) -> Value {
        let mut err = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let Self::UnknownExperiment { suggestions, .. } = self {
            err["suggestions"] = json!(suggestions);
        }
        json!({ "error": err })
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownExperiment { name, suggestions } => {
                write!(f, "unknown experiment `{name}`")?;
                if !suggestions.is_empty() {
                    write!(f, "; did you mean {}?", suggestions.join(", "))?;
                }
                Ok(())
            }
            Self::Config(m) => write!(f, "invalid config: {m}"),
            Self::Runtime(e) => write!(f, "{e}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<crate::Error> for HarnessError {
    fn from(e: crate::Error) -> Self {
        Self::Runtime(e)
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

type RunFn = fn(&ExperimentConfig, &mut Recorder) -> crate::Result<()>;
type ValidateFn = fn(&ExperimentConfig) -> Result<(), String>;

/// One registry entry.
pub struct Experiment {
    pub name: &'static str,
    /// Library module the experiment exercises.
    pub module: &'static str,
    pub description: &'static str,
    /// Keys the experiment accepts, as `section.key`.
    pub keys: &'static [&'static str],
    pub defaults: fn() -> ExperimentConfig,
    validate: ValidateFn,
    run: RunFn,
}

impl fmt::Debug for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Experiment")
            .field("name", &self.name)
            .field("module", &self.module)
            .finish()
    }
}

/// Names and one-line descriptions of every registered experiment.
pub fn list_experiments() -> Vec<(&'static str, &'static str)> {
    REGISTRY.iter().map(|e| (e.name, e.description)).collect()
}

pub fn find_experiment(name: &str) -> Result<&'static Experiment, HarnessError> {
    if let Some(e) = REGISTRY.iter().find(|e| e.name == name) {
        return Ok(e);
    }
    let mut scored: Vec<(f64, &str)> = REGISTRY
        .iter()
        .map(|e| (strsim::normalized_damerau_levenshtein(name, e.name), e.name))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    let suggestions = scored
        .iter()
        .filter(|(s, n)| *s >= 0.5 || n.contains(name))
        .take(3)
        .map(|(_, n)| n.to_string())
        .collect();
    Err(HarnessError::UnknownExperiment {
        name: name.to_string(),
        suggestions,
    })
}

fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Check the keys against the experiment schema, fill in defaults and validate.
pub fn resolve(cfg: &ExperimentConfig) -> Result<ExperimentConfig, HarnessError> {
    let exp = find_experiment(&cfg.experiment)?;
    for key in cfg.set_keys() {
        if !exp.keys.contains(&key.as_str()) {
            return Err(HarnessError::Config(format!(
                "`{key}` is not a setting of `{}` (accepted: {})",
                exp.name,
                if exp.keys.is_empty() {
                    "none".to_string()
                } else {
                    exp.keys.join(", ")
                }
            )));
        }
    }
    let mut merged = serde_json::to_value((exp.defaults)()).expect("defaults serialize");
    overlay(
        &mut merged,
        serde_json::to_value(cfg).expect("config serializes"),
    );
    let mut out: ExperimentConfig =
        serde_json::from_value(merged).map_err(|e| HarnessError::Config(e.to_string()))?;
    out.seed = Some(cfg.seed());
    validate_common(&out)?;
    (exp.validate)(&out).map_err(HarnessError::Config)?;
    Ok(out)
}

fn validate_common(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let bad = |m: String| Err(HarnessError::Config(m));
    let g = &cfg.grid;
    if let (Some(n), Some(l)) = (g.n, g.length) {
        let x0 = g.center.unwrap_or(0.0) - 0.5 * l;
        if let Err(e) = crate::Grid::new(n, l, x0) {
            return bad(e.to_string());
        }
    }
    let p = &cfg.params;
    if let Some(w) = p.omega {
        if !(w > 0.0) {
            return bad(format!("ω = {w} must be positive"));
        }
        if let Some(c) = p.c {
            if !(c > 2.0 * w) {
                return bad(format!("c ≤ 2ω (c = {c}, ω = {w})"));
            }
        }
        if let Some(cs) = &p.speeds {
            if let Some(c) = cs.iter().find(|c| !(**c > 2.0 * w)) {
                return bad(format!("c ≤ 2ω (c = {c}, ω = {w})"));
            }
        }
    }
    let e = &cfg.evolution;
    if let Some(dt) = e.dt {
        if !(dt > 0.0) {
            return bad(format!("dt = {dt} must be positive"));
        }
    }
    if let Some(t) = e.t_end {
        if !(t > 0.0) {
            return bad(format!("t_end = {t} must be positive"));
        }
    }
    if e.stride == Some(0) {
        return bad("stride must be at least 1".into());
    }
    Ok(())
}

/// Comparison an assertion applies to its measured value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// `measured < tolerance`.
    Below,
    /// `measured > tolerance`.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    /// Stable identifier `module.invariant`.
    pub id: String,
    pub check: Check,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// A plot-ready numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Collects assertions, constants and tables while an experiment runs.
#[derive(Debug, Default)]
pub struct Recorder {
    assertions: Vec<Assertion>,
    constants: BTreeMap<String, f64>,
    tables: Vec<Table>,
}

impl Recorder {
    fn push(&mut self, id: &str, check: Check, measured: f64, tolerance: f64) {
        let passed = measured.is_finite()
            && match check {
                Check::Below => measured < tolerance,
                Check::Above => measured > tolerance,
            };
        self.assertions.push(Assertion {
            id: id.to_string(),
            check,
            measured,
            tolerance,
            passed,
        });
    }

    pub fn below(&mut self, id: &str, measured: f64, tolerance: f64) {
        self.push(id, Check::Below, measured, tolerance);
    }

    pub fn above(&mut self, id: &str, measured: f64, bound: f64) {
        self.push(id, Check::Above, measured, bound);
    }

    pub fn constant(&mut self, name: &str, value: f64) {
        self.constants.insert(name.to_string(), value);
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<f64>>) {
        self.tables.push(Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
        });
    }

    /// Table from equal-length columns.
    pub fn columns(&mut self, name: &str, header: &[&str], cols: &[&[f64]]) {
        let len = cols.iter().map(|c| c.len()).min().unwrap_or(0);
        let rows = (0..len)
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        self.table(name, header, rows);
    }

    pub fn assertions(&self) -> &[Assertion] {
        &self.assertions
    }

    pub fn constants(&self) -> &BTreeMap<String, f64> {
        &self.constants
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub module: String,
    pub seed: u64,
    /// Resolved config, defaults included.
    pub config: ExperimentConfig,
    pub assertions: Vec<Assertion>,
    pub constants: BTreeMap<String, f64>,
    /// Files written into the run directory.
    pub files: Vec<String>,
    pub run_dir: PathBuf,
    pub wall_time_s: f64,
    pub passed: bool,
}

impl RunReport {
    /// 0 when every assertion passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Shortest round-trip form with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_table(dir: &Path, t: &Table) -> Result<String, HarnessError> {
    let file = format!("{}.csv", t.name);
    let path = dir.join(&file);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(&t.header).map_err(|e| io_err(&path, e))?;
    for row in &t.rows {
        w.write_record(row.iter().map(|v| format_value(*v)))
            .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(file)
}

/// Directory a resolved config writes into.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Some(d) = &cfg.output_dir {
        return d.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
    root.join(format!("{}-seed{}", cfg.experiment, cfg.seed()))
}

/// Run an experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Recorder), HarnessError> {
    let resolved = resolve(cfg)?;
    let exp = find_experiment(&resolved.experiment)?;
    let mut rec = Recorder::default();
    (exp.run)(&resolved, &mut rec)?;
    Ok((resolved, rec))
}

/// Resolve, run and write the report and data files.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let start = Instant::now();
    let (resolved, rec) = execute(cfg)?;
    let exp = find_experiment(&resolved.experiment)?;
    let dir = run_dir(&resolved);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut files = Vec::new();
    for t in rec.tables() {
        files.push(write_table(&dir, t)?);
    }
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, resolved.to_toml()).map_err(|e| io_err(&cfg_path, e))?;
    files.push("config.toml".into());
    files.push("report.json".into());
    let passed = rec.assertions.iter().all(|a| a.passed);
    let report = RunReport {
        experiment: resolved.experiment.clone(),
        module: exp.module.to_string(),
        seed: resolved.seed(),
        config: resolved,
        assertions: rec.assertions,
        constants: rec.constants,
        files,
        run_dir: dir.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        passed,
    };
    let rep_path = dir.join("report.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| io_err(&rep_path, e))?;
    fs::write(&rep_path, text).map_err(|e| io_err(&rep_path, e))?;
    Ok(report)
}

pub fn run_path(path: &Path) -> Result<RunReport, HarnessError> {
    run(&ExperimentConfig::load(path)?)
}

fn cell(v: &Value) -> String {
    match v {
        Value::Number(n) => n
            .as_f64()
            .map(format_value)
            .unwrap_or_else(|| n.to_string()),
        Value::Null => "nan".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Flatten `report.json` of a finished run into `assertions.csv` and
/// `constants.csv`; returns the paths written.
pub fn export(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let rep_path = dir.join("report.json");
    let text = fs::read_to_string(&rep_path).map_err(|e| {
        HarnessError::Config(format!("{} is not a run directory: {e}", dir.display()))
    })?;
    let report: Value = serde_json::from_str(&text).map_err(|e| io_err(&rep_path, e))?;
    let empty = Vec::new();
    let asserts = report
        .get("assertions")
        .and_then(Value::as_array)
        .unwrap_or(&empty);
    let a_path = dir.join("assertions.csv");
    let mut w = csv::Writer::from_path(&a_path).map_err(|e| io_err(&a_path, e))?;
    w.write_record(["id", "check", "measured", "tolerance", "passed"])
        .map_err(|e| io_err(&a_path, e))?;
    for a in asserts {
        let rec: Vec<String> = ["id", "check", "measured", "tolerance", "passed"]
            .iter()
            .map(|k| cell(a.get(*k).unwrap_or(&Value::Null)))
            .collect();
        w.write_record(rec).map_err(|e| io_err(&a_path, e))?;
    }
    w.flush().map_err(|e| io_err(&a_path, e))?;
    let c_path = dir.join("constants.csv");
    let mut w = csv::Writer::from_path(&c_path).map_err(|e| io_err(&c_path, e))?;
    w.write_record(["name", "value"])
        .map_err(|e| io_err(&c_path, e))?;
    let none = Map::new();
    for (k, v) in report
        .get("constants")
        .and_then(Value::as_object)
        .unwrap_or(&none)
    {
        w.write_record([k.clone(), cell(v)])
            .map_err(|e| io_err(&c_path, e))?;
    }
    w.flush().map_err(|e| io_err(&c_path, e))?;
    Ok(vec![a_path, c_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique() {
        let mut names: Vec<_> = REGISTRY.iter().map(|e| e.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), REGISTRY.len());
    }

    #[test]
    fn defaults_pass_their_own_schema() {
        for e in REGISTRY {
            let d = (e.defaults)();
            assert_eq!(d.experiment, e.name);
            for k in d.set_keys() {
                assert!(e.keys.contains(&k.as_str()), "{} {k}", e.name);
            }
            resolve(&ExperimentConfig::new(e.name)).unwrap();
        }
    }

    #[test]
    fn nearest_match() {
        let err = find_experiment("semigroup-decy").unwrap_err();
        match err {
            HarnessError::UnknownExperiment { suggestions, .. } => {
                assert_eq!(suggestions[0], "semigroup-decay")
            }
            _ => panic!(),
        }
    }

    #[test]
    fn value_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn overlay_keeps_unset_defaults() {
        let mut base = json!({"grid": {"n": 512, "length": 80.0}, "params": {"c": 4.0}});
        overlay(&mut base, json!({"grid": {"n": 256}}));
        assert_eq!(
            base,
            json!({"grid": {"n": 256, "length": 80.0}, "params": {"c": 4.0}})
        );
    }
}
