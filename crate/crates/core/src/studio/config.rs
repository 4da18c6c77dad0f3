//! Flat `key = value` study configuration with `[sections]`.
//!
//! A `[output]` section holds `dir` and `formats`; every other section is a
//! study whose `kind` selects the accepted keys.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Family;
use crate::geometry::CellKind;
use crate::gevp::Method;
use crate::mesh::SplitRule;
use crate::rates::ToleranceMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Laplace1d,
    Laplace2d,
    Beam,
    Approx,
    Reliability,
    Spectrum,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Laplace1d => "laplace-1d",
            StudyKind::Laplace2d => "laplace-2d",
            StudyKind::Beam => "beam",
            StudyKind::Approx => "approx",
            StudyKind::Reliability => "reliability",
            StudyKind::Spectrum => "spectrum",
        }
    }

    /// Keys accepted for this kind besides the common ones.
    pub fn keys(self) -> &'static [&'static str] {
        const EIGEN: &[&str] = &[
            "grading", "modes", "norms", "fit_levels", "eoc_tol", "eig_tol", "lower_slack", "ratio_spread",
        ];
        match self {
            StudyKind::Laplace1d | StudyKind::Laplace2d => &[
                "grading",
                "modes",
                "norms",
                "fit_levels",
                "eoc_tol",
                "eig_tol",
                "lower_slack",
                "ratio_spread",
                "cell",
                "split",
                "dispersion_level",
                "dispersion_count",
                "dispersion_tol",
                "scaling_level",
                "scaling_modes",
                "scaling_cap",
                "scaling_tol",
                "closed_form_tol",
            ],
            StudyKind::Beam => EIGEN,
            StudyKind::Approx => &["power", "base", "p", "fit_levels", "eoc_tol", "flat_tol", "rhs_factor"],
            StudyKind::Reliability => &[
                "tolerance",
                "tolerance_mode",
                "window_fraction",
                "ratio_target",
                "ratio_tol",
                "exponent_target",
                "exponent_tol",
            ],
            StudyKind::Spectrum => &[
                "domain",
                "count",
                "weyl_from",
                "weyl_to",
                "weyl_band",
                "pleijel_j",
                "pleijel_tol",
                "kappa_tol",
                "identity_tol",
                "hypotheses",
            ],
        }
    }
}

impl FromStr for StudyKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "laplace-1d" => StudyKind::Laplace1d,
            "laplace-2d" => StudyKind::Laplace2d,
            "beam" => StudyKind::Beam,
            "approx" => StudyKind::Approx,
            "reliability" => StudyKind::Reliability,
            "spectrum" => StudyKind::Spectrum,
            _ => return Err(format!("unknown study kind '{s}'")),
        })
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Interval,
    Square,
    Beam,
}

/// A norm request: derivative order j and exponent p (infinite allowed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub j: usize,
    /// Exponent label: a number or "inf".
    pub p: Exponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Exponent(pub f64);

impl From<Exponent> for String {
    fn from(e: Exponent) -> String {
        e.to_string()
    }
}

impl TryFrom<String> for Exponent {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl FromStr for Exponent {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "inf" | "infinity" => Ok(Exponent(f64::INFINITY)),
            t => t.parse::<f64>().map(Exponent).map_err(|_| format!("bad exponent '{t}'")),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl NormSpec {
    pub fn label(&self) -> String {
        format!("j{}_p{}", self.j, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionCheck {
    pub level: usize,
    pub count: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub level: usize,
    pub modes: usize,
    pub cap: f64,
    pub tol: f64,
    pub closed_form_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub name: String,
    pub kind: StudyKind,
    pub family: Family,
    pub cell: CellKind,
    pub split: SplitRule,
    /// Cells per direction at each level (refined direction for approx).
    pub levels: Vec<usize>,
    pub grading: f64,
    /// 1-based indices into the distinct exact spectrum.
    pub modes: Vec<usize>,
    pub norms: Vec<NormSpec>,
    pub solver: Method,
    pub fit_levels: usize,
    pub eoc_tol: f64,
    pub eig_tol: f64,
    pub lower_slack: f64,
    pub ratio_spread: f64,
    pub dispersion: Option<DispersionCheck>,
    pub scaling: Option<ScalingCheck>,
    pub power: Option<u32>,
    pub base: usize,
    pub p: Exponent,
    pub flat_tol: f64,
    pub rhs_factor: f64,
    pub tolerance: f64,
    pub tolerance_mode: ToleranceMode,
    pub window_fraction: f64,
    pub ratio_target: f64,
    pub ratio_tol: f64,
    pub exponent_target: f64,
    pub exponent_tol: f64,
    pub domain: Domain,
    pub count: usize,
    pub weyl_range: [usize; 2],
    pub weyl_band: f64,
    pub pleijel_j: usize,
    pub pleijel_tol: f64,
    pub kappa_tol: f64,
    pub identity_tol: f64,
    pub hypotheses: bool,
    /// Gates that decide the exit code; empty means every gate.
    pub gates: Vec<String>,
    pub seed: u64,
}

impl StudyConfig {
    pub fn defaults(name: &str, kind: StudyKind) -> Self {
        let family = match kind {
            StudyKind::Beam => Family::Hermite,
            StudyKind::Approx => Family::Q2,
            _ => Family::P1,
        };
        let levels = match kind {
            StudyKind::Laplace1d => vec![8, 16, 32, 64, 128],
            StudyKind::Laplace2d => vec![4, 8, 16, 32],
            StudyKind::Beam => vec![8, 16, 32, 64],
            StudyKind::Approx => vec![4, 8, 16, 32],
            StudyKind::Reliability => vec![256, 512, 1024],
            StudyKind::Spectrum => vec![],
        };
        let norms = match kind {
            StudyKind::Beam => vec![(0, 2.0), (1, 2.0), (2, 2.0)],
            _ => vec![(0, 2.0), (1, 2.0)],
        };
        StudyConfig {
            name: name.to_string(),
            kind,
            family,
            cell: if kind == StudyKind::Laplace2d { CellKind::Triangle } else { CellKind::Interval },
            split: SplitRule::Fixed,
            levels,
            grading: 1.0,
            modes: vec![1],
            norms: norms.into_iter().map(|(j, p)| NormSpec { j, p: Exponent(p) }).collect(),
            solver: Method::Auto,
            fit_levels: 3,
            eoc_tol: 0.1,
            eig_tol: 0.2,
            lower_slack: 0.15,
            ratio_spread: 10.0,
            dispersion: None,
            scaling: None,
            power: None,
            base: 4,
            p: Exponent(2.0),
            flat_tol: 0.01,
            rhs_factor: 5.0,
            tolerance: 0.01,
            tolerance_mode: ToleranceMode::Relative,
            window_fraction: 0.25,
            ratio_target: 0.110,
            ratio_tol: 0.01,
            exponent_target: 1.0,
            exponent_tol: 0.1,
            domain: Domain::Interval,
            count: 200,
            weyl_range: [50, 200],
            weyl_band: 0.15,
            pleijel_j: 100,
            pleijel_tol: 1e-3,
            kappa_tol: 1e-9,
            identity_tol: 1e-9,
            hypotheses: false,
            gates: Vec::new(),
            seed: 0x5eed,
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            StudyKind::Laplace2d | StudyKind::Approx => 2,
            StudyKind::Spectrum if self.domain == Domain::Square => 2,
            _ => 1,
        }
    }

    /// The order m of the operator (-1)^m Delta^m.
    pub fn m(&self) -> usize {
        if self.kind == StudyKind::Beam {
            2
        } else {
            1
        }
    }

    pub fn gating(&self, gate: &str) -> bool {
        self.gates.is_empty() || self.gates.iter().any(|g| g == gate)
    }

    /// Keeps only the first `k` levels.
    pub fn truncate_levels(&mut self, k: usize) {
        self.levels.truncate(k.max(1));
    }

    /// Replaces the family; 2D eigenvalue studies follow it with the matching cell type.
    pub fn set_family(&mut self, family: Family) {
        self.family = family;
        if self.kind == StudyKind::Laplace2d {
            self.cell = default_cell(family);
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let needs_levels = self.kind != StudyKind::Spectrum;
        if needs_levels && self.levels.is_empty() {
            return Err("levels must not be empty".into());
        }
        if self.levels.contains(&0) {
            return Err("levels must be positive cell counts".into());
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err("levels must be strictly increasing".into());
        }
        if self.modes.contains(&0) {
            return Err("modes are 1-based".into());
        }
        if self.fit_levels < 3 {
            return Err("fit_levels must be at least 3".into());
        }
        let dim = self.dim();
        match self.kind {
            StudyKind::Laplace1d | StudyKind::Laplace2d | StudyKind::Reliability => {
                if !self.family.supports(if dim == 1 { CellKind::Interval } else { self.cell }) {
                    return Err(format!("family {} does not live on {:?} cells", self.family.name(), self.cell));
                }
                if self.family.m_max() < 1 || self.family == Family::Hermite {
                    return Err(format!("family {} is not a second-order family", self.family.name()));
                }
            }
            StudyKind::Beam => {
                if self.family != Family::Hermite {
                    return Err("the beam study needs the hermite family".into());
                }
            }
            StudyKind::Approx => {
                if !self.family.supports(CellKind::Rectangle) {
                    return Err(format!("approx studies need a rectangle family, got {}", self.family.name()));
                }
            }
            StudyKind::Spectrum => {}
        }
        if self.weyl_range[0] == 0 || self.weyl_range[1] < self.weyl_range[0] {
            return Err("weyl range must satisfy 1 <= from <= to".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Gnuplot,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            dir: PathBuf::from("results"),
            formats: vec![Format::Csv, Format::Json, Format::Gnuplot],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub path: PathBuf,
    pub output: OutputSettings,
    pub studies: Vec<StudyConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn study(&self, name: &str) -> Option<&StudyConfig> {
        self.studies.iter().find(|s| s.name == name)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Config {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("malformed section header '{t}'")))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(err(line, format!("invalid section name '{name}'")));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(err(line, format!("duplicate section [{name}]")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{t}'")))?;
            let (k, v) = (k.trim(), v.trim());
            let sec = sections.last_mut().ok_or_else(|| err(line, "key outside of any section".into()))?;
            if k.is_empty() {
                return Err(err(line, "empty key".into()));
            }
            if sec.entries.iter().any(|(key, _, _)| key == k) {
                return Err(err(line, format!("duplicate key '{k}' in [{}]", sec.name)));
            }
            sec.entries.push((k.to_string(), v.to_string(), line));
        }

        let mut output = OutputSettings::default();
        let mut studies = Vec::new();
        for sec in &sections {
            if sec.name == "output" {
                for (k, v, line) in &sec.entries {
                    match k.as_str() {
                        "dir" => output.dir = PathBuf::from(v),
                        "formats" => {
                            let mut set = BTreeSet::new();
                            for f in list(v) {
                                set.insert(match f {
                                    "csv" => Format::Csv,
                                    "json" => Format::Json,
                                    "gnuplot" | "gnuplot-dat" => Format::Gnuplot,
                                    _ => return Err(err(*line, format!("unknown format '{f}'"))),
                                });
                            }
                            output.formats = set.into_iter().collect();
                        }
                        _ => return Err(err(*line, format!("unknown key '{k}' in [output]"))),
                    }
                }
                continue;
            }
            studies.push(sec.to_study(&err)?);
        }
        Ok(ConfigFile {
            path: path.to_path_buf(),
            output,
            studies,
        })
    }
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_val<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse '{v}'"))
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    list(v).map(parse_val).collect()
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got '{v}'")),
    }
}

impl Section {
    fn to_study(&self, err: &dyn Fn(usize, String) -> Error) -> Result<StudyConfig> {
        let kind_entry = self
            .entries
            .iter()
            .find(|(k, _, _)| k == "kind")
            .ok_or_else(|| err(self.line, format!("section [{}] has no 'kind'", self.name)))?;
        let kind: StudyKind = kind_entry.1.parse().map_err(|m| err(kind_entry.2, m))?;
        let mut c = StudyConfig::defaults(&self.name, kind);
        let mut dispersion: (Option<usize>, usize, f64) = (None, 10, 1e-9);
        let mut scaling: (Option<usize>, usize, f64, f64, f64) = (None, 8, 0.1, 0.1, 0.05);
        let mut cell_set = false;
        for (k, v, line) in &self.entries {
            let common = ["kind", "family", "levels", "solver", "gates", "seed"];
            if !common.contains(&k.as_str()) && !kind.keys().contains(&k.as_str()) {
                return Err(err(*line, format!("unknown key '{k}' for a {kind} study")));
            }
            let res: std::result::Result<(), String> = (|| {
                match k.as_str() {
                    "kind" => {}
                    "family" => c.family = v.parse().map_err(|e: Error| e.to_string())?,
                    "levels" => c.levels = parse_list(v)?,
                    "solver" => {
                        c.solver = match v.as_str() {
                            "auto" => Method::Auto,
                            "dense" => Method::Dense,
                            "shift-invert" => Method::ShiftInvert,
                            _ => return Err(format!("unknown solver '{v}'")),
                        }
                    }
                    "gates" => c.gates = list(v).map(str::to_string).collect(),
                    "seed" => c.seed = parse_val(v)?,
                    "grading" => c.grading = parse_val(v)?,
                    "modes" => c.modes = parse_list(v)?,
                    "norms" => {
                        c.norms = list(v)
                            .map(|item| {
                                let (j, p) = item.split_once(':').ok_or(format!("norm '{item}' is not j:p"))?;
                                Ok(NormSpec {
                                    j: parse_val(j.trim())?,
                                    p: p.parse()?,
                                })
                            })
                            .collect::<std::result::Result<_, String>>()?
                    }
                    "fit_levels" => c.fit_levels = parse_val(v)?,
                    "eoc_tol" => c.eoc_tol = parse_val(v)?,
                    "eig_tol" => c.eig_tol = parse_val(v)?,
                    "lower_slack" => c.lower_slack = parse_val(v)?,
                    "ratio_spread" => c.ratio_spread = parse_val(v)?,
                    "cell" => {
                        cell_set = true;
                        c.cell = match v.as_str() {
                            "triangle" => CellKind::Triangle,
                            "rectangle" => CellKind::Rectangle,
                            _ => return Err(format!("unknown cell '{v}'")),
                        }
                    }
                    "split" => {
                        c.split = match v.as_str() {
                            "fixed" => SplitRule::Fixed,
                            "alternating" => SplitRule::Alternating,
                            _ => return Err(format!("unknown split '{v}'")),
                        }
                    }
                    "dispersion_level" => dispersion.0 = Some(parse_val(v)?),
                    "dispersion_count" => dispersion.1 = parse_val(v)?,
                    "dispersion_tol" => dispersion.2 = parse_val(v)?,
                    "scaling_level" => scaling.0 = Some(parse_val(v)?),
                    "scaling_modes" => scaling.1 = parse_val(v)?,
                    "scaling_cap" => scaling.2 = parse_val(v)?,
                    "scaling_tol" => scaling.3 = parse_val(v)?,
                    "closed_form_tol" => scaling.4 = parse_val(v)?,
                    "power" => c.power = Some(parse_val(v)?),
                    "base" => c.base = parse_val(v)?,
                    "p" => c.p = v.parse()?,
                    "flat_tol" => c.flat_tol = parse_val(v)?,
                    "rhs_factor" => c.rhs_factor = parse_val(v)?,
                    "tolerance" => c.tolerance = parse_val(v)?,
                    "tolerance_mode" => {
                        c.tolerance_mode = match v.as_str() {
                            "relative" => ToleranceMode::Relative,
                            "absolute" => ToleranceMode::Absolute,
                            _ => return Err(format!("unknown tolerance mode '{v}'")),
                        }
                    }
                    "window_fraction" => c.window_fraction = parse_val(v)?,
                    "ratio_target" => c.ratio_target = parse_val(v)?,
                    "ratio_tol" => c.ratio_tol = parse_val(v)?,
                    "exponent_target" => c.exponent_target = parse_val(v)?,
                    "exponent_tol" => c.exponent_tol = parse_val(v)?,
                    "domain" => {
                        c.domain = match v.as_str() {
                            "interval" => Domain::Interval,
                            "square" => Domain::Square,
                            "beam" => Domain::Beam,
                            _ => return Err(format!("unknown domain '{v}'")),
                        }
                    }
                    "count" => c.count = parse_val(v)?,
                    "weyl_from" => c.weyl_range[0] = parse_val(v)?,
                    "weyl_to" => c.weyl_range[1] = parse_val(v)?,
                    "weyl_band" => c.weyl_band = parse_val(v)?,
                    "pleijel_j" => c.pleijel_j = parse_val(v)?,
                    "pleijel_tol" => c.pleijel_tol = parse_val(v)?,
                    "kappa_tol" => c.kappa_tol = parse_val(v)?,
                    "identity_tol" => c.identity_tol = parse_val(v)?,
                    "hypotheses" => c.hypotheses = parse_bool(v)?,
                    _ => unreachable!("key list and match arms diverge"),
                }
                Ok(())
            })();
            res.map_err(|m| err(*line, format!("{k}: {m}")))?;
        }
        if kind == StudyKind::Laplace2d && !cell_set {
            c.cell = default_cell(c.family);
        }
        if kind == StudyKind::Approx {
            c.cell = CellKind::Rectangle;
        }
        if kind == StudyKind::Laplace1d {
            c.cell = CellKind::Interval;
        }
        if let Some(level) = dispersion.0 {
            c.dispersion = Some(DispersionCheck {
                level,
                count: dispersion.1,
                tol: dispersion.2,
            });
        }
        if let Some(level) = scaling.0 {
            c.scaling = Some(ScalingCheck {
                level,
                modes: scaling.1,
                cap: scaling.2,
                tol: scaling.3,
                closed_form_tol: scaling.4,
            });
        }
        c.validate().map_err(|m| err(self.line, format!("[{}]: {m}", self.name)))?;
        Ok(c)
    }
}

fn default_cell(family: Family) -> CellKind {
    match family {
        Family::Q1 | Family::Q2 | Family::Q1Rot | Family::S3 | Family::Intermediate => CellKind::Rectangle,
        _ => CellKind::Triangle,
    }
}

/// Re-validates a config after command-line overrides.
pub fn revalidate(c: &StudyConfig) -> Result<()> {
    c.validate().map_err(|m| Error::Study(format!("[{}]: {m}", c.name)))
}
