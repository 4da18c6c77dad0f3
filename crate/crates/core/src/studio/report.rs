//! Study reports and their CSV / JSON / gnuplot serializations.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Format, StudyConfig, StudyKind};
use crate::error::{Error, Result};
use crate::gevp::Method;
use crate::rates::{RateFit, ReliabilityReport};

pub const SCHEMA: &str = "eigenrate/v1";

/// Drops non-finite values, which JSON cannot carry.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Value {
    pub name: String,
    pub value: Option<f64>,
}

/// One mesh level (and eigenmode, when applicable) of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub level: usize,
    pub cells: [usize; 2],
    pub h: f64,
    pub h_dir: [f64; 2],
    pub n_free: usize,
    pub mode: Option<usize>,
    pub lambda: Option<f64>,
    pub lambda_h: Option<f64>,
    pub relative_error: Option<f64>,
    pub solver: Option<Method>,
    pub residual: Option<f64>,
    pub orthogonality: Option<f64>,
    pub values: Vec<Value>,
}

impl ErrorRecord {
    pub fn new(level: usize, cells: [usize; 2], h: f64, h_dir: [f64; 2], n_free: usize) -> Self {
        ErrorRecord {
            level,
            cells,
            h,
            h_dir,
            n_free,
            mode: None,
            lambda: None,
            lambda_h: None,
            relative_error: None,
            solver: None,
            residual: None,
            orthogonality: None,
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, v: f64) {
        self.values.push(Value {
            name: name.into(),
            value: finite(v),
        });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|v| v.name == name).and_then(|v| v.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub name: String,
    /// Abscissa of the fit: "h" or "lambda" or "n".
    pub against: String,
    pub fit: RateFit,
    pub expected: Option<f64>,
}

/// A named table of extra data (spectra, dispersion checks, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Series {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row.iter().map(|v| finite(*v)).collect());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    /// Whether this gate counts towards the exit code.
    pub gating: bool,
    pub measured: Option<f64>,
    pub expected: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub family: String,
    pub r: usize,
    pub m: usize,
    pub annihilated: bool,
    pub expected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema: String,
    pub study: String,
    pub kind: StudyKind,
    pub config: StudyConfig,
    pub records: Vec<ErrorRecord>,
    pub fits: Vec<FitRecord>,
    pub series: Vec<Series>,
    pub reliability: Option<ReliabilityReport>,
    pub hypotheses: Vec<HypothesisRow>,
    pub gates: Vec<Gate>,
    pub passed: bool,
}

impl StudyReport {
    pub fn new(config: &StudyConfig) -> Self {
        StudyReport {
            schema: SCHEMA.into(),
            study: config.name.clone(),
            kind: config.kind,
            config: config.clone(),
            records: Vec::new(),
            fits: Vec::new(),
            series: Vec::new(),
            reliability: None,
            hypotheses: Vec::new(),
            gates: Vec::new(),
            passed: true,
        }
    }

    pub fn gate(&mut self, name: &str, passed: bool, measured: f64, expected: impl Into<String>, detail: impl Into<String>) {
        let gating = self.config.gating(name);
        self.gates.push(Gate {
            name: name.into(),
            passed,
            gating,
            measured: finite(measured),
            expected: expected.into(),
            detail: detail.into(),
        });
    }

    /// Recomputes `passed` from the gating gates.
    pub fn settle(&mut self) {
        self.passed = self.gates.iter().filter(|g| g.gating).all(|g| g.passed);
    }

    pub fn gate_named(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Value columns in order of first appearance across records.
    fn value_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for r in &self.records {
            for v in &r.values {
                if !cols.contains(&v.name) {
                    cols.push(v.name.clone());
                }
            }
        }
        cols
    }

    const FIXED: [&'static str; 12] = [
        "level",
        "cells_x",
        "cells_y",
        "h",
        "h1",
        "h2",
        "n_free",
        "mode",
        "lambda",
        "lambda_h",
        "relative_error",
        "residual",
    ];

    fn rows(&self) -> (Vec<String>, Vec<Vec<Cell>>) {
        let vcols = self.value_columns();
        let mut header: Vec<String> = Self::FIXED.iter().map(|s| s.to_string()).collect();
        header.extend(vcols.iter().cloned());
        let rows = self
            .records
            .iter()
            .map(|r| {
                let mut row = vec![
                    Cell::Int(r.level),
                    Cell::Int(r.cells[0]),
                    Cell::Int(r.cells[1]),
                    Cell::Real(Some(r.h)),
                    Cell::Real(Some(r.h_dir[0])),
                    Cell::Real(Some(r.h_dir[1])),
                    Cell::Int(r.n_free),
                    r.mode.map_or(Cell::Real(None), Cell::Int),
                    Cell::Real(r.lambda),
                    Cell::Real(r.lambda_h),
                    Cell::Real(r.relative_error),
                    Cell::Real(r.residual),
                ];
                row.extend(vcols.iter().map(|c| Cell::Real(r.values.iter().find(|v| &v.name == c).and_then(|v| v.value))));
                row
            })
            .collect();
        (header, rows)
    }

    pub fn to_csv(&self) -> String {
        let (header, rows) = self.rows();
        let mut s = header.join(",");
        s.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|c| c.csv()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_dat(&self) -> String {
        let (header, rows) = self.rows();
        let mut s = format!("# {SCHEMA} study {} ({})\n", self.study, self.kind);
        for (i, h) in header.iter().enumerate() {
            let _ = writeln!(s, "# column {}: {h}", i + 1);
        }
        for row in rows {
            let cells: Vec<String> = row.iter().map(|c| c.dat()).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        for series in &self.series {
            let _ = write!(s, "\n\n# series {}\n# {}\n", series.name, series.columns.join(" "));
            for row in &series.rows {
                let cells: Vec<String> = row.iter().map(|v| Cell::Real(*v).dat()).collect();
                s.push_str(&cells.join(" "));
                s.push('\n');
            }
        }
        s
    }

    /// A gnuplot script plotting every error column against h on log axes.
    pub fn to_gnuplot(&self, dat_name: &str) -> String {
        let (header, _) = self.rows();
        let mut s = String::new();
        let _ = writeln!(s, "# {SCHEMA} plot script for study {}", self.study);
        let _ = writeln!(s, "set terminal pngcairo size 900,650");
        let _ = writeln!(s, "set output '{}.png'", self.study);
        let _ = writeln!(s, "set logscale xy");
        let _ = writeln!(s, "set key left top");
        let _ = writeln!(s, "set xlabel 'h'");
        let _ = writeln!(s, "set ylabel 'error'");
        let plots: Vec<String> = header
            .iter()
            .enumerate()
            .skip(Self::FIXED.len())
            .filter(|(_, h)| h.starts_with('e') || h.starts_with("best") || h.starts_with("rhs"))
            .map(|(i, h)| format!("'{dat_name}' index 0 using 4:{} with linespoints title '{h}'", i + 1))
            .collect();
        if plots.is_empty() {
            let _ = writeln!(s, "# no error columns to plot");
        } else {
            let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        }
        s
    }
}

enum Cell {
    Int(usize),
    Real(Option<f64>),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(Some(v)) => format!("{v:.16e}"),
            Cell::Real(None) => String::new(),
        }
    }

    fn dat(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(Some(v)) => format!("{v:.16e}"),
            Cell::Real(None) => "NaN".into(),
        }
    }
}

/// Wall-clock seconds per stage, kept out of the report so that stays reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub study: String,
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn record(&mut self, stage: impl Into<String>, secs: f64) {
        self.stages.push((stage.into(), secs));
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Writes the report in the requested formats plus the timing sidecar.
pub fn emit(report: &StudyReport, timings: &Timings, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let stem = &report.study;
    for f in formats {
        match f {
            Format::Json => {
                let p = dir.join(format!("{stem}.json"));
                write_atomic(&p, report.to_json()?.as_bytes())?;
                written.push(p);
            }
            Format::Csv => {
                let p = dir.join(format!("{stem}.csv"));
                write_atomic(&p, report.to_csv().as_bytes())?;
                written.push(p);
            }
            Format::Gnuplot => {
                let dat = format!("{stem}.dat");
                let p = dir.join(&dat);
                write_atomic(&p, report.to_dat().as_bytes())?;
                written.push(p);
                let g = dir.join(format!("{stem}.gp"));
                write_atomic(&g, report.to_gnuplot(&dat).as_bytes())?;
                written.push(g);
            }
        }
    }
    let t = dir.join(format!("{stem}.timings.json"));
    let mut text = serde_json::to_string_pretty(timings)?;
    text.push('\n');
    write_atomic(&t, text.as_bytes())?;
    written.push(t);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub study: String,
    pub kind: StudyKind,
    pub passed: bool,
    pub failed_gates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub passed: bool,
    pub studies: Vec<SummaryEntry>,
}

impl Summary {
    pub fn from_reports(reports: &[StudyReport]) -> Self {
        let studies: Vec<SummaryEntry> = reports
            .iter()
            .map(|r| SummaryEntry {
                study: r.study.clone(),
                kind: r.kind,
                passed: r.passed,
                failed_gates: r.gates.iter().filter(|g| g.gating && !g.passed).map(|g| g.name.clone()).collect(),
            })
            .collect();
        Summary {
            schema: SCHEMA.into(),
            passed: studies.iter().all(|s| s.passed),
            studies,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::studio::config::StudyConfig;

    fn sample() -> StudyReport {
        let cfg = StudyConfig::defaults("s", StudyKind::Laplace1d);
        let mut r = StudyReport::new(&cfg);
        let mut rec = ErrorRecord::new(0, [8, 1], 0.125, [0.125, 1.0], 7);
        rec.lambda = Some(std::f64::consts::PI.powi(2));
        rec.push("e_j0_p2_omega", 1.0 / 3.0);
        rec.push("bad", f64::NAN);
        r.records.push(rec);
        r.gate("g", true, 0.1, "x", "y");
        r.settle();
        r
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let r = sample();
        let a = r.to_json().unwrap();
        let back = StudyReport::from_json(&a).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), a);
        assert!(a.contains("\"schema\": \"eigenrate/v1\""));
    }

    #[test]
    fn csv_has_header_and_17_digits() {
        let csv = sample().to_csv();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("level,cells_x"));
        assert!(header.ends_with("e_j0_p2_omega,bad"));
        let row = lines.next().unwrap();
        assert!(row.contains("3.3333333333333331e-1"));
        let field = row.split(',').nth(3).unwrap();
        let mantissa = field.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }

    #[test]
    fn empty_report_has_headers_only() {
        let r = StudyReport::new(&StudyConfig::defaults("e", StudyKind::Spectrum));
        assert_eq!(r.to_csv().lines().count(), 1);
        assert!(r.to_dat().lines().all(|l| l.starts_with('#')));
        let dir = tempfile::tempdir().unwrap();
        let files = emit(&r, &Timings::default(), dir.path(), &[Format::Csv, Format::Json, Format::Gnuplot]).unwrap();
        assert_eq!(files.len(), 5);
        for f in files {
            assert!(f.exists());
        }
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
