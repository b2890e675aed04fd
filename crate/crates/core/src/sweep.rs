//! Parameter grids over the relativistic scenarios.
//!
//! A sweep evaluates `S` on a rectangular grid of two named parameters,
//! writes one CSV row per cell (axis1-major, then axis2) and a JSON summary.
//! With `audit` set, every cell is also maximized numerically and the gap to
//! the closed form is recorded.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::oracle::{maximize, OracleConfig};
use crate::qstate::{DensityOperator, DIM, XTYPE_TOL};
use crate::spacetime::{
    build_sds_state, reduce_schwarzschild, svetlichny_schwarzschild, svetlichny_sds, SchwarzschildScenario,
    SdSScenario,
};
use crate::svetlichny::{Branch, SvetlichnyResult};
use crate::SVETLICHNY_BOUND;

/// Cells whose analytic and numeric values differ by more are flagged.
pub const AUDIT_TOL: f64 = 1e-3;

/// Significant digits for every float in the CSV.
pub const CSV_DIGITS: usize = 12;

/// Restart multiplier for audit cells that disagree with the closed form.
pub const AUDIT_ESCALATION: usize = 8;

/// Restart ceiling for audit escalation.
pub const AUDIT_MAX_RESTARTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Schwarzschild,
    Sds,
    CustomMatrix,
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "schwarzschild" => Ok(Self::Schwarzschild),
            "sds" => Ok(Self::Sds),
            "custom-matrix" => Ok(Self::CustomMatrix),
            _ => Err(Error::InvalidConfig(format!("unknown scenario `{s}`"))),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Schwarzschild => "schwarzschild",
            Self::Sds => "sds",
            Self::CustomMatrix => "custom-matrix",
        })
    }
}

/// A sweepable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Temperature,
    Mass,
    Lambda,
    Alpha,
    Omega,
    Noise,
    Dephasing,
}

impl Param {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "T" | "temperature" => Ok(Self::Temperature),
            "M" | "mass" => Ok(Self::Mass),
            "lambda" | "Lambda" => Ok(Self::Lambda),
            "alpha" => Ok(Self::Alpha),
            "omega" => Ok(Self::Omega),
            "noise" => Ok(Self::Noise),
            "dephasing" => Ok(Self::Dephasing),
            _ => Err(Error::InvalidConfig(format!("unknown axis `{s}`"))),
        }
    }

    fn allowed_for(self, kind: ScenarioKind) -> bool {
        use Param::*;
        match kind {
            ScenarioKind::Schwarzschild => matches!(self, Temperature | Mass | Alpha | Omega),
            ScenarioKind::Sds => matches!(self, Mass | Lambda | Alpha | Omega),
            ScenarioKind::CustomMatrix => matches!(self, Noise | Dephasing),
        }
    }
}

/// `name:min:max:steps`, e.g. `T:0.001:3:101`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(name: &str, min: f64, max: f64, steps: usize) -> Result<Self> {
        let axis = Self {
            name: name.to_string(),
            min,
            max,
            steps,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        Param::parse(&self.name)?;
        if self.steps < 2 {
            return Err(Error::InvalidConfig(format!("axis `{}` needs at least 2 steps", self.name)));
        }
        if self.min.partial_cmp(&self.max) != Some(std::cmp::Ordering::Less) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "axis `{}` needs min < max, got {}..{}",
                self.name, self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn param(&self) -> Result<Param> {
        Param::parse(&self.name)
    }

    /// Evenly spaced values, endpoints exact.
    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.value(i)).collect()
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(Error::InvalidConfig(format!("axis `{s}` is not name:min:max:steps")));
        }
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad number `{x}` in axis `{s}`")))
        };
        let steps = parts[3]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("bad step count in axis `{s}`")))?;
        Axis::new(parts[0].trim(), num(parts[1])?, num(parts[2])?, steps)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.name, self.min, self.max, self.steps)
    }
}

impl Serialize for Axis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Axis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

fn default_omega() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    SVETLICHNY_BOUND
}

fn default_audit_restarts() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: ScenarioKind,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    /// Density-operator JSON for `custom-matrix`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PathBuf>,
    pub axis1: Axis,
    pub axis2: Axis,
    #[serde(default)]
    pub audit: bool,
    #[serde(default = "default_audit_restarts")]
    pub audit_restarts: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// Thread count; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub execution: Execution,
}

impl SweepConfig {
    /// A Schwarzschild `(T, α)` panel with the default ranges.
    pub fn schwarzschild(n: u32, p: u32, q: u32) -> Self {
        Self {
            scenario: ScenarioKind::Schwarzschild,
            omega: 1.0,
            temperature: None,
            mass: None,
            lambda: None,
            alpha: None,
            n: Some(n),
            p: Some(p),
            q: Some(q),
            m: None,
            matrix: None,
            axis1: Axis::new("T", 1e-3, 3.0, 101).expect("valid default axis"),
            axis2: Axis::new("alpha", 0.0, 1.0, 101).expect("valid default axis"),
            audit: false,
            audit_restarts: default_audit_restarts(),
            threshold: SVETLICHNY_BOUND,
            seed: 42,
            workers: 0,
            execution: Execution::Parallel,
        }
    }

    /// An SdS panel; the caller sets the fixed `M` or `Λ` and `axis1`.
    pub fn sds(n: u32, m: u32, axis1: Axis) -> Self {
        Self {
            scenario: ScenarioKind::Sds,
            n: Some(n),
            p: None,
            q: None,
            m: Some(m),
            axis1,
            ..Self::schwarzschild(n, 0, 0)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.axis1.validate()?;
        self.axis2.validate()?;
        let (p1, p2) = (self.axis1.param()?, self.axis2.param()?);
        if p1 == p2 {
            return Err(Error::InvalidConfig(format!("both axes sweep `{}`", self.axis1.name)));
        }
        for (axis, p) in [(&self.axis1, p1), (&self.axis2, p2)] {
            if !p.allowed_for(self.scenario) {
                return Err(Error::InvalidConfig(format!(
                    "axis `{}` is not valid for scenario {}",
                    axis.name, self.scenario
                )));
            }
        }
        if !(self.threshold.is_finite()) {
            return Err(Error::InvalidConfig("threshold must be finite".into()));
        }
        if self.audit && self.audit_restarts == 0 {
            return Err(Error::InvalidConfig("audit needs at least one restart".into()));
        }
        if self.scenario == ScenarioKind::CustomMatrix {
            if self.matrix.is_none() {
                return Err(Error::InvalidConfig("custom-matrix needs `matrix`".into()));
            }
            for axis in [&self.axis1, &self.axis2] {
                if axis.min < 0.0 || axis.max > 1.0 {
                    return Err(Error::InvalidConfig(format!("axis `{}` must stay within [0, 1]", axis.name)));
                }
            }
            return Ok(());
        }
        // a full-corner evaluation checks every fixed parameter is present
        let probe = Grid::prepare(self, None)?;
        probe.evaluate(self.axis1.min, self.axis2.min, 0).map(|_| ())?;
        probe.evaluate(self.axis1.max, self.axis2.max, 0).map(|_| ())
    }

    fn cell_count(&self) -> usize {
        self.axis1.steps * self.axis2.steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis1: f64,
    pub axis2: f64,
    pub value: f64,
    pub measure: f64,
    pub branch: Branch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_gap: Option<f64>,
}

impl SweepCell {
    pub fn flagged(&self) -> bool {
        self.oracle_gap.is_some_and(|g| g.abs() > AUDIT_TOL)
    }
}

/// Scenario bound to its fixed parameters, ready to evaluate any cell.
struct Grid<'a> {
    cfg: &'a SweepConfig,
    params: (Param, Param),
    base: Option<DensityOperator>,
}

enum CellState {
    Schwarzschild(SchwarzschildScenario),
    Sds(SdSScenario),
    Custom(DensityOperator),
}

impl<'a> Grid<'a> {
    fn prepare(cfg: &'a SweepConfig, base: Option<DensityOperator>) -> Result<Self> {
        Ok(Self {
            cfg,
            params: (cfg.axis1.param()?, cfg.axis2.param()?),
            base,
        })
    }

    fn state(&self, x1: f64, x2: f64) -> Result<CellState> {
        let cfg = self.cfg;
        let pick = |p: Param, fixed: Option<f64>| -> Option<f64> {
            if self.params.0 == p {
                Some(x1)
            } else if self.params.1 == p {
                Some(x2)
            } else {
                fixed
            }
        };
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| Error::InvalidConfig(format!("missing `{name}`")));
        let need_u = |name: &str, v: Option<u32>| v.ok_or_else(|| Error::InvalidConfig(format!("missing `{name}`")));
        let alpha = need("alpha", pick(Param::Alpha, cfg.alpha))?;
        let omega = pick(Param::Omega, Some(cfg.omega)).unwrap_or(cfg.omega);
        match cfg.scenario {
            ScenarioKind::Schwarzschild => {
                let temperature = pick(Param::Temperature, cfg.temperature);
                let mass = pick(Param::Mass, cfg.mass);
                let (temperature, mass) = match (self.params.0, self.params.1) {
                    (Param::Temperature, _) | (_, Param::Temperature) => (temperature, None),
                    (Param::Mass, _) | (_, Param::Mass) => (None, mass),
                    _ => (temperature, mass),
                };
                let s = SchwarzschildScenario {
                    alpha,
                    omega,
                    temperature,
                    mass,
                    n: need_u("n", cfg.n)?,
                    p: need_u("p", cfg.p)?,
                    q: need_u("q", cfg.q)?,
                };
                s.validate()?;
                Ok(CellState::Schwarzschild(s))
            }
            ScenarioKind::Sds => Ok(CellState::Sds(SdSScenario::new(
                alpha,
                omega,
                need("mass", pick(Param::Mass, cfg.mass))?,
                need("lambda", pick(Param::Lambda, cfg.lambda))?,
                need_u("n", cfg.n)?,
                need_u("m", cfg.m)?,
            )?)),
            ScenarioKind::CustomMatrix => unreachable!("custom cells are built in custom_state"),
        }
    }

    fn custom_state(&self, x1: f64, x2: f64) -> Result<DensityOperator> {
        let base = self
            .base
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("custom-matrix needs `matrix`".into()))?;
        let (noise, dephasing) = match self.params {
            (Param::Noise, _) => (x1, x2),
            _ => (x2, x1),
        };
        Ok(noisy(base, noise, dephasing))
    }

    fn cell_state(&self, x1: f64, x2: f64) -> Result<CellState> {
        if self.cfg.scenario == ScenarioKind::CustomMatrix {
            Ok(CellState::Custom(self.custom_state(x1, x2)?))
        } else {
            self.state(x1, x2)
        }
    }

    fn oracle_config(&self, index: usize) -> OracleConfig {
        OracleConfig {
            restarts: self.cfg.audit_restarts,
            rng_seed: self.cfg.seed ^ index as u64,
            // cells already run in parallel
            execution: Execution::Sequential,
            ..OracleConfig::default()
        }
    }

    /// Oracle value for the audit column. A cell whose gap exceeds
    /// `AUDIT_TOL` is retried with `AUDIT_ESCALATION` times the restarts, up to
    /// `AUDIT_MAX_RESTARTS`.
    fn audit(&self, rho: &DensityOperator, analytic: f64, index: usize) -> Result<f64> {
        let mut cfg = OracleConfig {
            // the audit only resolves gaps of AUDIT_TOL
            value_tolerance: 1e-10,
            step_tolerance: 1e-6,
            ..self.oracle_config(index)
        };
        loop {
            let o = maximize(rho, &cfg)?.value;
            if (analytic - o).abs() <= AUDIT_TOL || cfg.restarts >= AUDIT_MAX_RESTARTS {
                return Ok(o);
            }
            cfg.restarts = (cfg.restarts * AUDIT_ESCALATION).min(AUDIT_MAX_RESTARTS);
        }
    }

    fn evaluate(&self, x1: f64, x2: f64, index: usize) -> Result<(SvetlichnyResult, CellState)> {
        let state = self.cell_state(x1, x2)?;
        let result = match &state {
            CellState::Schwarzschild(s) => svetlichny_schwarzschild(s)?,
            CellState::Sds(s) => svetlichny_sds(s)?,
            CellState::Custom(rho) => crate::evaluate(rho, XTYPE_TOL, &self.oracle_config(index))?,
        };
        Ok((result, state))
    }

    fn cell(&self, index: usize) -> Result<SweepCell> {
        let cfg = self.cfg;
        let (i, j) = (index / cfg.axis2.steps, index % cfg.axis2.steps);
        let (x1, x2) = (cfg.axis1.value(i), cfg.axis2.value(j));
        let (result, state) = self.evaluate(x1, x2, index)?;
        let (oracle_value, oracle_gap) = if cfg.audit {
            let rho = match state {
                CellState::Schwarzschild(s) => reduce_schwarzschild(&s)?,
                CellState::Sds(s) => build_sds_state(&s)?,
                CellState::Custom(rho) => rho,
            };
            let o = self.audit(&rho, result.value, index)?;
            (Some(o), Some(result.value - o))
        } else {
            (None, None)
        };
        Ok(SweepCell {
            axis1: x1,
            axis2: x2,
            value: result.value,
            measure: result.measure,
            branch: result.branch,
            oracle_value,
            oracle_gap,
        })
    }
}

/// `(1 − noise)·D(ρ) + noise·I/16`, where `D` scales every coherence by
/// `1 − dephasing`.
pub fn noisy(rho: &DensityOperator, noise: f64, dephasing: f64) -> DensityOperator {
    let m = rho.matrix();
    let mixed = nalgebra::DMatrix::from_fn(DIM, DIM, |r, c| {
        let keep = if r == c { 1.0 } else { 1.0 - dephasing };
        let white = if r == c { noise / DIM as f64 } else { 0.0 };
        m[(r, c)] * keep * (1.0 - noise) + white
    });
    DensityOperator::new(mixed).expect("16x16 by construction")
}

fn load_base(cfg: &SweepConfig) -> Result<Option<DensityOperator>> {
    match (&cfg.scenario, &cfg.matrix) {
        (ScenarioKind::CustomMatrix, Some(path)) => {
            let rho: DensityOperator = serde_json::from_str(&fs::read_to_string(path)?)?;
            let report = rho.validate();
            if !report.passed {
                return Err(Error::InvalidState(format!("{}: {report:?}", path.display())));
            }
            Ok(Some(rho))
        }
        _ => Ok(None),
    }
}

/// Evaluates every cell, in CSV row order.
pub fn compute_grid(cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let grid = Grid::prepare(cfg, load_base(cfg)?)?;
    let exec = cfg.execution;
    exec.with_workers(cfg.workers, || exec.map_indexed(cfg.cell_count(), |k| grid.cell(k)))
        .into_iter()
        .collect()
}

/// `%.12g`-style formatting: shortest of fixed or scientific, trailing zeros
/// trimmed.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", CSV_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..CSV_DIGITS as i32).contains(&exp) {
        let decimals = (CSV_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(out: W, cells: &[SweepCell], audit: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["axis1", "axis2", "S", "N_measure", "branch"];
    if audit {
        header.extend(["S_oracle", "gap"]);
    }
    w.write_record(&header)?;
    for c in cells {
        let mut row = vec![
            format_sig(c.axis1),
            format_sig(c.axis2),
            format_sig(c.value),
            format_sig(c.measure),
            c.branch.as_str().to_string(),
        ];
        if audit {
            row.push(c.oracle_value.map(format_sig).unwrap_or_default());
            row.push(c.oracle_gap.map(format_sig).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub axis1: f64,
    pub axis2: f64,
    pub value: f64,
}

/// Where the winning branch changes between neighboring cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTransition {
    /// `axis1` or `axis2`: the axis along which the change happens.
    pub along: String,
    pub from: GridPoint,
    pub to: GridPoint,
    pub from_branch: Branch,
    pub to_branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub max_abs_gap: f64,
    pub flagged: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scenario: ScenarioKind,
    pub axis1: Axis,
    pub axis2: Axis,
    pub cells: usize,
    pub max: GridPoint,
    pub min: GridPoint,
    pub threshold: f64,
    pub cells_above_threshold: Vec<GridPoint>,
    pub branch_transitions: Vec<BranchTransition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSummary>,
    pub findings: Vec<String>,
}

fn point(c: &SweepCell) -> GridPoint {
    GridPoint {
        axis1: c.axis1,
        axis2: c.axis2,
        value: c.value,
    }
}

pub fn summarize(cfg: &SweepConfig, cells: &[SweepCell]) -> Result<SweepSummary> {
    let (rows, cols) = (cfg.axis1.steps, cfg.axis2.steps);
    if cells.len() != rows * cols || cells.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "expected {} cells, got {}",
            rows * cols,
            cells.len()
        )));
    }
    let first_max = |a: &&SweepCell, b: &&SweepCell| a.value.total_cmp(&b.value);
    let max = cells.iter().rev().max_by(first_max).expect("non-empty");
    let min = cells.iter().min_by(first_max).expect("non-empty");
    let above: Vec<GridPoint> = cells.iter().filter(|c| c.value > cfg.threshold).map(point).collect();

    let mut transitions = Vec::new();
    let at = |i: usize, j: usize| &cells[i * cols + j];
    for i in 0..rows {
        for j in 0..cols {
            let here = at(i, j);
            for (along, next) in [("axis2", (j + 1 < cols).then(|| at(i, j + 1))), ("axis1", (i + 1 < rows).then(|| at(i + 1, j)))] {
                if let Some(next) = next {
                    if next.branch != here.branch {
                        transitions.push(BranchTransition {
                            along: along.into(),
                            from: point(here),
                            to: point(next),
                            from_branch: here.branch,
                            to_branch: next.branch,
                        });
                    }
                }
            }
        }
    }

    let audit = cfg.audit.then(|| AuditSummary {
        max_abs_gap: cells.iter().filter_map(|c| c.oracle_gap).map(f64::abs).fold(0.0, f64::max),
        flagged: cells.iter().filter(|c| c.flagged()).map(point).collect(),
    });

    let mut findings = Vec::new();
    if above.is_empty() {
        findings.push(format!(
            "none found: no cell exceeds S = {} (max S = {} at {} = {}, {} = {})",
            format_sig(cfg.threshold),
            format_sig(max.value),
            cfg.axis1.name,
            format_sig(max.axis1),
            cfg.axis2.name,
            format_sig(max.axis2)
        ));
        if cfg.scenario == ScenarioKind::Schwarzschild && cfg.q.unwrap_or(0) >= 2 {
            findings.push(
                "with two or more interior modes kept, 16√2·α√(1−α²)·sinᵠr ≤ 8√2·sin²r < 4√2 and 4|N| ≤ 4, so S < 8 everywhere"
                    .into(),
            );
        }
    } else {
        findings.push(format!(
            "{} of {} cells exceed S = {}",
            above.len(),
            cells.len(),
            format_sig(cfg.threshold)
        ));
    }
    if let Some(a) = &audit {
        findings.push(if a.flagged.is_empty() {
            format!("audit: every cell within {AUDIT_TOL} of the oracle (max gap {})", format_sig(a.max_abs_gap))
        } else {
            format!("audit: {} cells differ from the oracle by more than {AUDIT_TOL}", a.flagged.len())
        });
    }

    Ok(SweepSummary {
        scenario: cfg.scenario,
        axis1: cfg.axis1.clone(),
        axis2: cfg.axis2.clone(),
        cells: cells.len(),
        max: point(max),
        min: point(min),
        threshold: cfg.threshold,
        cells_above_threshold: above,
        branch_transitions: transitions,
        audit,
        findings,
    })
}

/// `grid.csv` → `grid.summary.json`.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.json")
}

/// Computes the grid, writes the CSV to `out` and the summary beside it.
pub fn run_sweep(cfg: &SweepConfig, out: &Path) -> Result<SweepSummary> {
    let cells = compute_grid(cfg)?;
    let summary = summarize(cfg, &cells)?;
    write_csv(fs::File::create(out)?, &cells, cfg.audit)?;
    fs::write(summary_path(out), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// One panel of a figure preset.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetPanel {
    /// File-name friendly label, e.g. `n2_p1_q1`.
    pub label: String,
    pub config: SweepConfig,
}

/// Panel configurations for `fig2` … `fig6`.
///
/// `fig2`–`fig4` cover every `(p, q)` with `p + q = n` for `n = 1, 2, 3` over
/// `T ∈ [1e-3, 3]`. `fig5` fixes `M = 0.033` and sweeps `Λ ∈ [1e-4, 1]`;
/// `fig6` fixes `Λ = 1` and sweeps `M ∈ [1e-3, 0.33]`. All use `ω = 1` and
/// `α ∈ [0, 1]` with 101 points per axis.
pub fn figure_preset(name: &str) -> Result<Vec<PresetPanel>> {
    let schwarzschild = |n: u32| {
        (0..=n)
            .rev()
            .map(|p| PresetPanel {
                label: format!("n{n}_p{p}_q{}", n - p),
                config: SweepConfig::schwarzschild(n, p, n - p),
            })
            .collect()
    };
    let sds = |fixed: fn(&mut SweepConfig), axis1: Axis| {
        [(3, 1), (2, 2), (1, 3)]
            .into_iter()
            .map(|(n, m)| {
                let mut config = SweepConfig::sds(n, m, axis1.clone());
                fixed(&mut config);
                PresetPanel {
                    label: format!("n{n}_m{m}"),
                    config,
                }
            })
            .collect()
    };
    match name {
        "fig2" => Ok(schwarzschild(1)),
        "fig3" => Ok(schwarzschild(2)),
        "fig4" => Ok(schwarzschild(3)),
        "fig5" => Ok(sds(|c| c.mass = Some(0.033), Axis::new("lambda", 1e-4, 1.0, 101)?)),
        "fig6" => Ok(sds(|c| c.lambda = Some(1.0), Axis::new("M", 1e-3, 0.33, 101)?)),
        _ => Err(Error::UnknownPreset(name.to_string())),
    }
}

/// A connected set of cells above the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub cells: usize,
    pub axis1_range: [f64; 2],
    pub axis2_range: [f64; 2],
    pub max: GridPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub threshold: f64,
    pub rows: usize,
    pub cols: usize,
    pub max: GridPoint,
    /// `found` or `none found`.
    pub status: String,
    pub regions: Vec<Region>,
}

/// Finds 4-connected regions with `S > threshold` in a sweep CSV.
pub fn region_report<R: Read>(csv_data: R, threshold: f64) -> Result<RegionReport> {
    let mut rdr = csv::Reader::from_reader(csv_data);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
    };
    let (c1, c2, cs) = (col("axis1")?, col("axis2")?, col("S")?);
    let num = |rec: &csv::StringRecord, i: usize| -> Result<f64> {
        let field = rec.get(i).ok_or_else(|| Error::Parse("short row".into()))?;
        field.parse().map_err(|_| Error::Parse(format!("bad number `{field}`")))
    };
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        points.push(GridPoint {
            axis1: num(&rec, c1)?,
            axis2: num(&rec, c2)?,
            value: num(&rec, cs)?,
        });
    }
    if points.is_empty() {
        return Err(Error::Parse("empty grid".into()));
    }
    let cols = points.iter().take_while(|p| p.axis1 == points[0].axis1).count();
    let rows = points.len() / cols;
    if rows * cols != points.len()
        || points
            .iter()
            .enumerate()
            .any(|(k, p)| p.axis1 != points[(k / cols) * cols].axis1 || p.axis2 != points[k % cols].axis2)
    {
        return Err(Error::Parse("rows do not form an axis1-major rectangular grid".into()));
    }

    let above = |k: usize| points[k].value > threshold;
    let mut seen = vec![false; points.len()];
    let mut regions = Vec::new();
    for start in 0..points.len() {
        if seen[start] || !above(start) {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(k) = queue.pop_front() {
            members.push(k);
            let (i, j) = (k / cols, k % cols);
            let neighbors = [
                (i > 0).then(|| k - cols),
                (i + 1 < rows).then(|| k + cols),
                (j > 0).then(|| k - 1),
                (j + 1 < cols).then(|| k + 1),
            ];
            for nb in neighbors.into_iter().flatten() {
                if !seen[nb] && above(nb) {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        members.sort_unstable();
        let range = |f: fn(&GridPoint) -> f64| {
            members.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], &k| {
                let v = f(&points[k]);
                [lo.min(v), hi.max(v)]
            })
        };
        let best = members
            .iter()
            .copied()
            .reduce(|a, b| if points[b].value > points[a].value { b } else { a })
            .expect("non-empty region");
        regions.push(Region {
            cells: members.len(),
            axis1_range: range(|p| p.axis1),
            axis2_range: range(|p| p.axis2),
            max: points[best].clone(),
        });
    }
    let best = (0..points.len())
        .reduce(|a, b| if points[b].value > points[a].value { b } else { a })
        .expect("non-empty grid");
    Ok(RegionReport {
        threshold,
        rows,
        cols,
        max: points[best].clone(),
        status: if regions.is_empty() { "none found" } else { "found" }.into(),
        regions,
    })
}

pub fn region_report_path(path: &Path, threshold: f64) -> Result<RegionReport> {
    region_report(fs::File::open(path)?, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::S_MAX;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn small(mut cfg: SweepConfig, steps: usize) -> SweepConfig {
        cfg.axis1.steps = steps;
        cfg.axis2.steps = steps;
        cfg
    }

    #[test]
    fn axis_parsing() {
        let a: Axis = "T:0.001:3:101".parse().unwrap();
        assert_eq!(a, Axis::new("T", 0.001, 3.0, 101).unwrap());
        assert_eq!(a.value(0), 0.001);
        assert_eq!(a.value(100), 3.0);
        assert!("T:1:0:10".parse::<Axis>().is_err());
        assert!("T:0:1:1".parse::<Axis>().is_err());
        assert!("X:0:1:10".parse::<Axis>().is_err());
        assert!("T:0:1".parse::<Axis>().is_err());
        assert_eq!(a.to_string().parse::<Axis>().unwrap(), a);
    }

    #[test]
    fn format_sig_examples() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(S_MAX), "11.313708499");
        assert_eq!(format_sig(0.001), "0.001");
        assert_eq!(format_sig(1e-7), "1e-7");
        assert_eq!(format_sig(-2.5), "-2.5");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(9.9999999999995), "10");
        assert_eq!(format_sig(123456789012345.0), "1.23456789012e14");
    }

    #[test]
    fn axis_must_suit_scenario() {
        let mut cfg = SweepConfig::schwarzschild(1, 1, 0);
        cfg.axis1 = Axis::new("lambda", 0.1, 1.0, 3).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = SweepConfig::schwarzschild(1, 1, 0);
        cfg.n = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn flat_corner_of_accessible_panel() {
        let mut cfg = SweepConfig::schwarzschild(1, 1, 0);
        cfg.axis2 = Axis::new("alpha", std::f64::consts::SQRT_2 - 1.0, 1.0, 3).unwrap();
        cfg.axis1.steps = 3;
        let cells = compute_grid(&cfg).unwrap();
        let corner = &cells[1];
        assert_eq!(corner.axis1, 1e-3);
        assert!((corner.axis2 - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((corner.value - S_MAX).abs() < 1e-4);
    }

    #[test]
    fn rows_are_axis1_major() {
        let cfg = small(SweepConfig::schwarzschild(2, 1, 1), 4);
        let cells = compute_grid(&cfg).unwrap();
        assert_eq!(cells.len(), 16);
        assert_eq!(cells[1].axis1, cells[0].axis1);
        assert!(cells[4].axis1 > cells[0].axis1);
        for c in &cells {
            let s = SchwarzschildScenario::with_temperature(c.axis2, 1.0, c.axis1, 2, 1, 1).unwrap();
            assert_eq!(svetlichny_schwarzschild(&s).unwrap().value, c.value);
        }
    }

    #[test]
    fn csv_is_identical_across_execution_modes() {
        let cfg = small(SweepConfig::schwarzschild(3, 2, 1), 9);
        let seq = SweepConfig {
            execution: Execution::Sequential,
            ..cfg.clone()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&mut a, &compute_grid(&cfg).unwrap(), false).unwrap();
        write_csv(&mut b, &compute_grid(&seq).unwrap(), false).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("axis1,axis2,S,N_measure,branch\n"));
    }

    #[test]
    fn presets() {
        let fig2 = figure_preset("fig2").unwrap();
        let combos: Vec<_> = fig2.iter().map(|p| (p.config.n, p.config.p, p.config.q)).collect();
        assert_eq!(combos, vec![(Some(1), Some(1), Some(0)), (Some(1), Some(0), Some(1))]);
        let total: usize = ["fig2", "fig3", "fig4"].iter().map(|f| figure_preset(f).unwrap().len()).sum();
        assert_eq!(total, 9);
        let fig5 = figure_preset("fig5").unwrap();
        assert_eq!(fig5.len(), 3);
        assert!(fig5.iter().all(|p| p.config.mass == Some(0.033) && p.config.omega == 1.0));
        let fig6 = figure_preset("fig6").unwrap();
        assert!(fig6.iter().all(|p| p.config.lambda == Some(1.0)));
        for p in fig2.iter().chain(&fig5).chain(&fig6) {
            p.config.validate().unwrap();
        }
        assert!(matches!(figure_preset("fig7"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn region_report_on_accessible_panel() {
        let cfg = SweepConfig::schwarzschild(1, 1, 0);
        let mut buf = Vec::new();
        write_csv(&mut buf, &compute_grid(&cfg).unwrap(), false).unwrap();
        let report = region_report(buf.as_slice(), 8.0).unwrap();
        assert_eq!(report.status, "found");
        assert_eq!((report.rows, report.cols), (101, 101));
        let top = report.regions.iter().max_by(|a, b| a.max.value.total_cmp(&b.max.value)).unwrap();
        assert_eq!(top.axis1_range[0], 1e-3);
        assert!((top.max.value - S_MAX).abs() < 1e-3);
        assert!((top.max.axis2 - FRAC_1_SQRT_2).abs() < 0.05);
    }

    #[test]
    fn region_report_none_found_and_errors() {
        let csv = "axis1,axis2,S,N_measure,branch\n0,0,4,0,diagonal\n0,1,5,0,coherence\n1,0,4,0,diagonal\n1,1,7.9,0,coherence\n";
        let report = region_report(csv.as_bytes(), 8.0).unwrap();
        assert_eq!(report.status, "none found");
        assert!(report.regions.is_empty());
        assert!(matches!(region_report("axis1,axis2,S,N_measure,branch\n".as_bytes(), 8.0), Err(Error::Parse(_))));
        assert!(matches!(region_report("".as_bytes(), 8.0), Err(Error::Parse(_))));
        assert!(matches!(region_report("a,b\n1,2\n".as_bytes(), 8.0), Err(Error::Parse(_))));
    }

    #[test]
    fn region_components_are_four_connected() {
        // diagonal neighbors only: two separate regions
        let csv = "axis1,axis2,S\n0,0,9\n0,1,1\n1,0,1\n1,1,10\n";
        let report = region_report(csv.as_bytes(), 8.0).unwrap();
        assert_eq!(report.regions.len(), 2);
        assert_eq!(report.max.value, 10.0);
    }

    #[test]
    fn inaccessible_panel_summary() {
        let cfg = small(SweepConfig::schwarzschild(2, 0, 2), 11);
        let cells = compute_grid(&cfg).unwrap();
        let summary = summarize(&cfg, &cells).unwrap();
        assert!(summary.cells_above_threshold.is_empty());
        assert!(summary.findings[0].starts_with("none found"));
        assert_eq!(summary.findings.len(), 2);
    }

    #[test]
    fn branch_transitions_recorded() {
        let cfg = small(SweepConfig::schwarzschild(1, 1, 0), 11);
        let summary = summarize(&cfg, &compute_grid(&cfg).unwrap()).unwrap();
        assert!(!summary.branch_transitions.is_empty());
        assert!(summary.branch_transitions.iter().all(|t| t.from_branch != t.to_branch));
    }

    #[test]
    fn audited_small_grid() {
        let mut cfg = small(SweepConfig::schwarzschild(1, 1, 0), 3);
        cfg.audit = true;
        cfg.audit_restarts = 8;
        let cells = compute_grid(&cfg).unwrap();
        for c in &cells {
            assert!(c.oracle_gap.unwrap().abs() < AUDIT_TOL, "{c:?}");
        }
        let mut buf = Vec::new();
        write_csv(&mut buf, &cells, true).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("axis1,axis2,S,N_measure,branch,S_oracle,gap\n"));
    }

    #[test]
    fn custom_matrix_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ghz.json");
        fs::write(&path, serde_json::to_string(&DensityOperator::ghz(FRAC_1_SQRT_2)).unwrap()).unwrap();
        let cfg = SweepConfig {
            scenario: ScenarioKind::CustomMatrix,
            matrix: Some(path),
            axis1: Axis::new("noise", 0.0, 1.0, 3).unwrap(),
            axis2: Axis::new("dephasing", 0.0, 1.0, 3).unwrap(),
            ..SweepConfig::schwarzschild(1, 1, 0)
        };
        let cells = compute_grid(&cfg).unwrap();
        assert!((cells[0].value - S_MAX).abs() < 1e-12);
        // half white noise halves the coherence
        assert!((cells[3].value - S_MAX / 2.0).abs() < 1e-12);
        assert_eq!(cells[8].value, 0.0);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SweepConfig::schwarzschild(3, 1, 2);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"axis1\":\"T:0.001:3:101\""));
        assert_eq!(SweepConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn run_sweep_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("grid.csv");
        let cfg = small(SweepConfig::schwarzschild(1, 0, 1), 5);
        let summary = run_sweep(&cfg, &out).unwrap();
        assert_eq!(summary.cells, 25);
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 26);
        let back: SweepSummary = serde_json::from_str(&fs::read_to_string(summary_path(&out)).unwrap()).unwrap();
        assert_eq!(back, summary);
    }
}
