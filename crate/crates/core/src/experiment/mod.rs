//! Experiment orchestration: configuration, per-case rows, contract checks and report files.

mod emit;
mod estimates;
mod modules;

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::Domain;
use crate::solver::{DataSource, DirichletProblem};

pub use emit::{emit_report, render_csv, render_json, render_svg, ReportFormat};
pub use modules::{critical_slab, delta_log_fit, ellipsoid_barrier_draws, slab_options, GROWTH_TOLERANCE, LOG_FIT_R2, SLAB_RADII};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Pogorelov,
    HessianFloor,
    MeanValue,
    DualJacobi,
    InequalityScan,
    Barrier,
    Growth,
}

impl ExperimentKind {
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Pogorelov => "pogorelov",
            ExperimentKind::HessianFloor => "hessian-floor",
            ExperimentKind::MeanValue => "mean-value",
            ExperimentKind::DualJacobi => "dual-jacobi",
            ExperimentKind::InequalityScan => "inequality-scan",
            ExperimentKind::Barrier => "barrier",
            ExperimentKind::Growth => "growth",
        }
    }
}

fn default_f_family() -> String {
    "1.0 + {s} * 0.5 * r * r".into()
}
fn default_scales() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0]
}
fn default_heights() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_betas() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
}
fn default_radial_steps() -> usize {
    2048
}
fn default_count() -> u64 {
    20_000
}
fn default_safety() -> f64 {
    2.0
}

/// Experiment description. Expressions may contain `{s}` (family scale) and `{h}` (section
/// height), replaced by the numeric value before parsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Dimension and quotient index for radial, barrier and scan experiments.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub k: Option<usize>,
    /// Base lattice problem for the solved-family experiments; `spacing` is overridden by `spacings`.
    #[serde(default)]
    pub problem: Option<DirichletProblem>,
    /// Right-hand side family in `r` for radial experiments.
    #[serde(default = "default_f_family")]
    pub f_family: String,
    #[serde(default = "default_scales")]
    pub f_scales: Vec<f64>,
    #[serde(default = "default_heights")]
    pub h_sections: Vec<f64>,
    /// Lattice spacings; per-experiment defaults when empty.
    #[serde(default)]
    pub spacings: Vec<f64>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_radial_steps")]
    pub radial_steps: usize,
    /// Sample count for scans.
    #[serde(default = "default_count")]
    pub count: u64,
    /// `(n, k)` pairs for scans and growth probes; per-experiment defaults when empty.
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
    /// Scan names for `inequality-scan`: zhang-threshold, guan-sroka-c, superadditivity.
    #[serde(default)]
    pub which: Vec<String>,
    /// Factor applied to constants fitted on the fitting cases before verifying the others.
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Directory relative grid paths resolve against; the config file's directory when loaded.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            seed: 0,
            n: None,
            k: None,
            problem: None,
            f_family: default_f_family(),
            f_scales: default_scales(),
            h_sections: default_heights(),
            spacings: Vec::new(),
            betas: default_betas(),
            radial_steps: default_radial_steps(),
            count: default_count(),
            pairs: Vec::new(),
            which: Vec::new(),
            safety: default_safety(),
            output: None,
            base_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid experiment JSON: {e}")))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub(crate) fn problem_base(&self) -> Option<PathBuf> {
        self.base_dir.clone()
    }

    /// Schema checks run before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.f_scales.is_empty() || self.h_sections.is_empty() || self.betas.is_empty() {
            return bad("f_scales, h_sections and betas must be non-empty");
        }
        if self.f_scales.iter().chain(&self.h_sections).chain(&self.betas).any(|v| !v.is_finite()) {
            return bad("sweep values must be finite");
        }
        if self.h_sections.iter().any(|h| *h <= 0.0) || self.betas.iter().any(|b| *b <= 0.0) {
            return bad("section heights and betas must be positive");
        }
        if self.spacings.iter().any(|h| !(*h > 0.0)) {
            return bad("spacings must be positive");
        }
        if self.radial_steps < 20 || self.count == 0 || !(self.safety >= 1.0) {
            return bad("radial_steps >= 20, count >= 1 and safety >= 1 are required");
        }
        if let Some(p) = &self.problem {
            let mut q = p.clone();
            q.f = substitute(&q.f, 0.0, 1.0);
            q.g = substitute(&q.g, 0.0, 1.0);
            q.validate()?;
            for src in [&p.f, &p.g] {
                if let DataSource::Grid { grid } = src {
                    let path = match &self.base_dir {
                        Some(b) if grid.is_relative() => b.join(grid),
                        _ => grid.clone(),
                    };
                    if !path.exists() {
                        return Err(Error::Config(format!("referenced grid file {} does not exist", path.display())));
                    }
                }
            }
        }
        for w in &self.which {
            if !["zhang-threshold", "guan-sroka-c", "superadditivity"].contains(&w.as_str()) {
                return Err(Error::Config(format!("unknown scan '{w}'")));
            }
        }
        Ok(())
    }

    pub(crate) fn nk(&self, n: usize, k: usize) -> (usize, usize) {
        (self.n.unwrap_or(n), self.k.unwrap_or(k))
    }

    pub(crate) fn spacings_or(&self, default: &[f64]) -> Vec<f64> {
        if self.spacings.is_empty() {
            default.to_vec()
        } else {
            self.spacings.clone()
        }
    }

    /// Lattice problem for the solved-family experiments.
    pub(crate) fn base_problem(&self) -> DirichletProblem {
        self.problem.clone().unwrap_or_else(|| {
            DirichletProblem::new(
                Domain::cube(2, 1.0),
                1,
                1.0 / 16.0,
                DataSource::Expr("1.0 + {s} * 0.5 * (x*x + y*y)".into()),
                DataSource::Expr("0.5 * (2.0*x*x + 0.5*y*y) + 0.1*x*y".into()),
            )
        })
    }
}

/// Replaces `{s}` and `{h}` in an expression source.
pub(crate) fn substitute(src: &DataSource, s: f64, h: f64) -> DataSource {
    match src {
        DataSource::Expr(e) => DataSource::Expr(e.replace("{s}", &format!("({s:?})")).replace("{h}", &format!("({h:?})"))),
        other => other.clone(),
    }
}

/// A named contract with its outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Which columns to draw in the SVG plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub y: Vec<String>,
    #[serde(default)]
    pub log_x: bool,
    #[serde(default)]
    pub log_y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub id: String,
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub summary: IndexMap<String, f64>,
    pub checks: Vec<Check>,
    /// True when some case failed to produce its measurements.
    pub partial: bool,
    pub plot: Option<PlotSpec>,
}

impl ExperimentReport {
    pub fn empty(config: &ExperimentConfig, columns: &[&str]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id: config.experiment.id().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config: config.clone(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: IndexMap::new(),
            checks: Vec::new(),
            partial: false,
            plot: None,
        }
    }

    pub fn push_row(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    /// Every check passed and every case produced measurements.
    pub fn passed(&self) -> bool {
        !self.partial && self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Values of a numeric column, NaN where absent.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect())
    }
}

/// JSON number, or null when not finite.
pub(crate) fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Pogorelov => estimates::pogorelov(cfg),
        ExperimentKind::HessianFloor => estimates::hessian_floor(cfg),
        ExperimentKind::MeanValue => estimates::mean_value(cfg),
        ExperimentKind::DualJacobi => estimates::dual_jacobi(cfg),
        ExperimentKind::InequalityScan => modules::inequality_scan(cfg),
        ExperimentKind::Barrier => modules::barrier(cfg),
        ExperimentKind::Growth => modules::growth(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_schema_version() {
        let cfg = ExperimentConfig::from_json(r#"{"schema_version":1,"experiment":"hessian-floor"}"#).unwrap();
        assert_eq!(cfg.f_scales, default_scales());
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"schema_version":2,"experiment":"growth"}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"schema_version":1,"experiment":"growth","f_scales":[]}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"schema_version":1,"experiment":"growth","bogus":1}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn placeholders_are_substituted() {
        let d = substitute(&DataSource::Expr("1.0 + {s} * r + {h}".into()), 0.5, 2.0);
        assert_eq!(d, DataSource::Expr("1.0 + (0.5) * r + (2.0)".into()));
    }

    #[test]
    fn missing_grid_file_is_a_config_error() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::MeanValue);
        let mut p = cfg.base_problem();
        p.f = DataSource::Grid {
            grid: "/nonexistent/f.grid".into(),
        };
        cfg.problem = Some(p);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
