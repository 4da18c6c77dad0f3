//! Study runner: configuration, execution and report emission.

pub mod config;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::{ConfigFile, Domain, Format, NormSpec, OutputSettings, StudyConfig, StudyKind};
pub use report::{emit, write_atomic, Gate, StudyReport, Summary, Timings, SCHEMA};
pub use run::{run_study, RunOptions};

use crate::error::{Error, Result};
use crate::fem::Family;

/// Outcome of a batch run.
#[derive(Debug)]
pub struct BatchOutcome {
    pub reports: Vec<StudyReport>,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

impl BatchOutcome {
    pub fn passed(&self) -> bool {
        self.summary.passed
    }
}

/// Command-line overrides applied to every selected study.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Keep only the first k levels.
    pub levels: Option<usize>,
    pub family: Option<Family>,
}

/// Runs the named studies (all when `names` is empty) and writes every output under `dir`.
pub fn run_config(
    file: &ConfigFile,
    names: &[String],
    overrides: &Overrides,
    opts: &RunOptions,
    dir: &Path,
) -> Result<BatchOutcome> {
    let selected: Vec<StudyConfig> = if names.is_empty() {
        file.studies.clone()
    } else {
        names
            .iter()
            .map(|n| file.study(n).cloned().ok_or_else(|| Error::Study(format!("no study named '{n}'"))))
            .collect::<Result<_>>()?
    };
    if selected.is_empty() {
        return Err(Error::Study("the config defines no studies".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut reports = Vec::new();
    let mut files = Vec::new();
    for mut cfg in selected {
        if let Some(k) = overrides.levels {
            cfg.truncate_levels(k);
        }
        if let Some(f) = overrides.family {
            cfg.set_family(f);
        }
        config::revalidate(&cfg)?;
        let (report, timings) = run_study(&cfg, opts)?;
        files.extend(emit(&report, &timings, dir, &file.output.formats)?);
        reports.push(report);
    }
    let summary = Summary::from_reports(&reports);
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    files.push(path);
    Ok(BatchOutcome { reports, summary, files })
}
