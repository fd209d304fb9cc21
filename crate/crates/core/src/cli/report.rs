//! Output bundle: `summary.json`, CSV tables, SVG plots and `run.log`, written atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{Format, RunConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::verdict::{all_passed, Verdict};

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub command: String,
    pub config_hash: String,
    /// Effective configuration echoed into the summary.
    pub config: Value,
    /// Per-stage results in execution order.
    pub stages: Vec<(String, Value)>,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
    /// Error that halted the run, if any.
    pub error: Option<String>,
    /// Extra files by name.
    pub files: BTreeMap<String, String>,
    log: Vec<String>,
    start: Instant,
}

impl ReportBundle {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let mut b = Self {
            command: command.to_string(),
            config_hash: cfg.hash(),
            config: cfg.canonical_json(),
            stages: Vec::new(),
            verdicts: Vec::new(),
            warnings: Vec::new(),
            error: None,
            files: BTreeMap::new(),
            log: Vec::new(),
            start: Instant::now(),
        };
        b.log(format!("command {command} config_hash {}", b.config_hash));
        b.log(format!("threads {}", rayon::current_num_threads()));
        b
    }

    /// Appends a timestamped line to `run.log` and echoes it to stderr.
    pub fn log(&mut self, line: impl AsRef<str>) {
        let entry = format!("[{:9.3}s] {}", self.start.elapsed().as_secs_f64(), line.as_ref());
        eprintln!("{entry}");
        self.log.push(entry);
    }

    /// Records a stage result, prefixing its verdict names with the stage.
    pub fn stage(&mut self, name: &str, value: Value, verdicts: Vec<Verdict>, warnings: Vec<String>) {
        for v in &verdicts {
            self.log(format!("{name}: {} {} ({})", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail));
        }
        for w in &warnings {
            self.log(format!("{name}: warning: {w}"));
        }
        self.verdicts.extend(verdicts.into_iter().map(|v| Verdict { name: format!("{name}.{}", v.name), ..v }));
        self.warnings.extend(warnings.into_iter().map(|w| format!("{name}: {w}")));
        self.stages.push((name.to_string(), value));
    }

    pub fn file(&mut self, name: &str, contents: String) {
        self.files.insert(name.to_string(), contents);
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && all_passed(&self.verdicts)
    }

    /// Deterministic summary: no timings, thread counts or output paths.
    pub fn summary(&self) -> Value {
        let stages: serde_json::Map<String, Value> = self.stages.iter().cloned().collect();
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "stages": stages,
            "verdicts": self.verdicts,
            "warnings": self.warnings,
            "error": self.error,
            "passed": self.passed(),
        })
    }

    /// Writes into a sibling temporary directory, then renames it onto `dir`.
    pub fn write(&mut self, dir: &Path, formats: &[Format]) -> Result<PathBuf> {
        let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(parent)?;
        let name = dir
            .file_name()
            .ok_or_else(|| Error::Config(format!("output.dir '{}' has no final component", dir.display())))?;
        let tmp = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp)?;
        }
        std::fs::create_dir_all(&tmp)?;
        let summary = serde_json::to_string_pretty(&self.summary()).expect("summary serializes") + "\n";
        std::fs::write(tmp.join("summary.json"), summary)?;
        for (fname, contents) in &self.files {
            let wanted = match Path::new(fname).extension().and_then(|e| e.to_str()) {
                Some("csv") => formats.contains(&Format::Csv),
                Some("svg") => formats.contains(&Format::Svg),
                Some("json") => formats.contains(&Format::Json),
                _ => true,
            };
            if wanted {
                std::fs::write(tmp.join(fname), contents)?;
            }
        }
        self.log(format!("writing bundle to {}", dir.display()));
        std::fs::write(tmp.join("run.log"), self.log.join("\n") + "\n")?;
        if dir.exists() {
            std::fs::remove_dir_all(dir)?;
        }
        std::fs::rename(&tmp, dir)?;
        Ok(dir.to_path_buf())
    }
}
