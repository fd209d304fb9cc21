//! Run configuration: TOML schema, dotted overrides, validation and content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell::{Backend, CellOptions, CellProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::homog::{Source, StudyProblem};
use crate::model::{Coefficient, KernelFamily, KernelSpec, DEFAULT_TAIL_TOL};
use crate::process::{ProcessConfig, DEFAULT_MAX_EVENTS};

pub const SCHEMA_VERSION: u32 = 1;

/// Kernel as written in a config file; `table_file` is read relative to the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian { sigma: f64 },
    CompactBump { r: f64 },
    Tabulated { z: Vec<f64>, values: Vec<f64> },
    TableFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub kernel: KernelConfig,
    pub lambda: Coefficient,
    pub mu: Coefficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Command {
    Theta,
    Correctors,
    ResolventStudy,
    SemigroupStudy,
    Simulate,
    FullReport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Theta => "theta",
            Command::Correctors => "correctors",
            Command::ResolventStudy => "resolvent-study",
            Command::SemigroupStudy => "semigroup-study",
            Command::Simulate => "simulate",
            Command::FullReport => "full-report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Command used when none is given on the command line.
    pub command: Option<Command>,
}

fn d_n() -> usize {
    128
}
fn d_m_shift() -> f64 {
    1.0
}
fn d_eps() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05]
}
fn d_n_cell() -> usize {
    16
}
fn d_half_width() -> f64 {
    10.0
}
fn d_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn d_tail_tol() -> f64 {
    DEFAULT_TAIL_TOL
}
fn d_rel_tol() -> f64 {
    1e-10
}
fn d_max_iter() -> usize {
    10_000
}
fn d_solv_tol() -> f64 {
    1e-8
}
fn d_refine_tol() -> f64 {
    1e-3
}
fn d_paths() -> usize {
    100_000
}
fn d_sim_eps() -> Vec<f64> {
    vec![0.5, 0.2, 0.05]
}
fn d_sim_times() -> Vec<f64> {
    vec![0.5, 1.0]
}
fn d_max_events() -> f64 {
    DEFAULT_MAX_EVENTS
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    /// Cell grid nodes per axis for the effective matrix.
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_m_shift")]
    pub m_shift: f64,
    /// `ε` values of the deterministic studies.
    #[serde(default = "d_eps")]
    pub eps: Vec<f64>,
    /// Sample nodes per period in the deterministic studies.
    #[serde(default = "d_n_cell")]
    pub n_cell: usize,
    #[serde(default = "d_half_width")]
    pub half_width: f64,
    #[serde(default)]
    pub source: Source,
    /// Times of the semigroup study.
    #[serde(default = "d_times")]
    pub times: Vec<f64>,
    #[serde(default = "d_tail_tol")]
    pub tail_tol: f64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "d_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "d_max_iter")]
    pub max_iter: usize,
    #[serde(default = "d_solv_tol")]
    pub solvability_tol: f64,
    #[serde(default = "d_true")]
    pub refinement_check: bool,
    #[serde(default = "d_refine_tol")]
    pub refinement_tol: f64,
    /// Ensemble size `N` of the simulation.
    #[serde(default = "d_paths")]
    pub paths: usize,
    #[serde(default = "d_sim_eps")]
    pub sim_eps: Vec<f64>,
    #[serde(default = "d_sim_times")]
    pub sim_times: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_max_events")]
    pub max_events: f64,
    #[serde(default)]
    pub keep_paths: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

fn d_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Svg]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "d_formats")]
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default = "TaskConfig::none")]
    pub task: TaskConfig,
    pub numeric: NumericConfig,
    pub output: OutputConfig,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl TaskConfig {
    fn none() -> Self {
        Self { command: None }
    }
}

/// Parses `value` as a TOML value, falling back to a plain string.
fn parse_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.to_string())),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Sets a dotted key such as `numeric.paths` inside a TOML table.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Command-line adjustments applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `key=value` pairs with dotted keys.
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
        for kv in &overrides.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
            set_dotted(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        if let Some(seed) = overrides.seed {
            let seed = i64::try_from(seed).map_err(|_| Error::Config("seed must fit in i64 for TOML".into()))?;
            set_dotted(&mut table, "numeric.seed", toml::Value::Integer(seed))?;
        }
        if let Some(out) = &overrides.out {
            set_dotted(&mut table, "output.dir", toml::Value::String(out.to_string_lossy().into_owned()))?;
        }
        let mut cfg: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e| Error::Config(format!("schema violation: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base, overrides)
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        let d = self.problem.dim;
        match &self.problem.kernel {
            KernelConfig::Gaussian { sigma } => KernelSpec::gaussian(d, *sigma),
            KernelConfig::CompactBump { r } => KernelSpec::compact_bump(d, *r),
            KernelConfig::Tabulated { z, values } => {
                KernelSpec::new(KernelFamily::Tabulated { z: z.clone(), values: values.clone() }, d)
            }
            KernelConfig::TableFile { path } => {
                let full = self.base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::Config(format!("cannot read kernel table {}: {e}", full.display())))?;
                KernelSpec::parse_table(d, &text)
            }
        }
    }

    /// Schema checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let p = &self.problem;
        if !(1..=2).contains(&p.dim) {
            return bad(format!("problem.dim must be 1 or 2, got {}", p.dim));
        }
        self.kernel().map_err(|e| Error::Config(format!("problem.kernel: {e}")))?;
        p.lambda.check(p.dim, "lambda").map_err(|e| Error::Config(format!("problem.lambda: {e}")))?;
        p.mu.check(p.dim, "mu").map_err(|e| Error::Config(format!("problem.mu: {e}")))?;
        let n = &self.numeric;
        if n.n < 4 {
            return bad(format!("numeric.n must be at least 4, got {}", n.n));
        }
        if n.n_cell < 8 {
            return bad(format!("numeric.n_cell must be at least 8, got {}", n.n_cell));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("numeric.{name} must be positive, got {v}")))
            }
        };
        positive("m_shift", n.m_shift)?;
        positive("half_width", n.half_width)?;
        positive("tail_tol", n.tail_tol)?;
        positive("rel_tol", n.rel_tol)?;
        positive("solvability_tol", n.solvability_tol)?;
        positive("refinement_tol", n.refinement_tol)?;
        positive("max_events", n.max_events)?;
        positive("source.width", n.source.width)?;
        if !n.source.amplitude.is_finite() {
            return bad("numeric.source.amplitude must be finite".into());
        }
        if n.max_iter == 0 {
            return bad("numeric.max_iter must be positive".into());
        }
        for (name, list) in [("eps", &n.eps), ("sim_eps", &n.sim_eps)] {
            if list.is_empty() || list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return bad(format!("numeric.{name} must be a nonempty list of positive values"));
            }
        }
        if n.eps.windows(2).any(|w| w[1] >= w[0]) {
            return bad("numeric.eps must be strictly decreasing".into());
        }
        for (name, list) in [("times", &n.times), ("sim_times", &n.sim_times)] {
            if list.is_empty() || list.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || list.windows(2).any(|w| w[1] <= w[0])
            {
                return bad(format!("numeric.{name} must be nonnegative and strictly increasing"));
            }
        }
        if n.paths < 2 {
            return bad(format!("numeric.paths must be at least 2, got {}", n.paths));
        }
        if self.output.dir.as_os_str().is_empty() {
            return bad("output.dir must not be empty".into());
        }
        Ok(())
    }

    pub fn cell_problem(&self, n: usize) -> Result<CellProblem> {
        Ok(CellProblem { kernel: self.kernel()?, lambda: self.problem.lambda.clone(), mu: self.problem.mu.clone(), n })
    }

    pub fn cell_options(&self) -> CellOptions {
        let n = &self.numeric;
        CellOptions {
            solver: SolverOptions {
                backend: n.backend,
                rel_tol: n.rel_tol,
                max_iter: n.max_iter,
                solvability_tol: n.solvability_tol,
            },
            tail_tol: n.tail_tol,
            refinement_check: n.refinement_check,
            refinement_tol: n.refinement_tol,
        }
    }

    pub fn study_problem(&self) -> Result<StudyProblem> {
        Ok(StudyProblem {
            cell: self.cell_problem(self.numeric.n_cell)?,
            half_width: self.numeric.half_width,
            source: self.numeric.source,
        })
    }

    pub fn process_config(&self) -> Result<ProcessConfig> {
        Ok(ProcessConfig {
            seed: self.numeric.seed,
            max_events: self.numeric.max_events,
            keep_paths: self.numeric.keep_paths,
            ..ProcessConfig::new(self.kernel()?, self.problem.lambda.clone(), self.problem.mu.clone())
        })
    }

    /// Effective configuration without the output directory, keys sorted.
    pub fn canonical_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(out) = v.get_mut("output").and_then(|o| o.as_object_mut()) {
            out.remove("dir");
        }
        sort_keys(v)
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_json()).expect("json serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => {
            let mut entries: Vec<(String, serde_json::Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            serde_json::Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        serde_json::Value::Array(a) => serde_json::Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[problem]
dim = 1
kernel = { family = "gaussian", sigma = 0.3 }
lambda = { kind = "constant", value = 1.0 }
mu = { kind = "sinusoid", mean = 1.0, amplitude = 0.5 }

[numeric]
n = 64
paths = 1000

[output]
dir = "out"
"#;

    fn load(text: &str, set: &[&str]) -> Result<RunConfig> {
        let o = Overrides { set: set.iter().map(|s| s.to_string()).collect(), ..Default::default() };
        RunConfig::from_toml_str(text, Path::new("."), &o)
    }

    #[test]
    fn parses_with_defaults_and_overrides() {
        let c = load(BASE, &["numeric.paths=5000", "numeric.eps=[0.3, 0.1]", "numeric.backend=\"direct\""]).unwrap();
        assert_eq!(c.numeric.paths, 5000);
        assert_eq!(c.numeric.eps, vec![0.3, 0.1]);
        assert_eq!(c.numeric.backend, Backend::Direct);
        assert_eq!(c.numeric.n_cell, 16);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(load(BASE, &["numeric.pathz=3"]), Err(Error::Config(_))));
        assert!(matches!(load(BASE, &["numeric.paths=0"]), Err(Error::Config(_))));
        assert!(matches!(load(BASE, &["problem.kernel.sigma=-1.0"]), Err(Error::Config(_))));
        assert!(matches!(load(BASE, &["numeric.eps=[0.1, 0.2]"]), Err(Error::Config(_))));
        assert!(matches!(load(BASE, &["problem.mu.amplitude=2.0"]), Err(Error::Config(_))));
        assert!(matches!(load(BASE, &["numeric"]), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_key_order_and_output_dir() {
        let reordered = r#"
[output]
dir = "elsewhere"

[numeric]
paths = 1000
n = 64

[problem]
mu = { amplitude = 0.5, mean = 1.0, kind = "sinusoid" }
lambda = { value = 1.0, kind = "constant" }
kernel = { sigma = 0.3, family = "gaussian" }
dim = 1
"#;
        let a = load(BASE, &[]).unwrap();
        let b = load(reordered, &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = load(BASE, &["numeric.seed=5"]).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
