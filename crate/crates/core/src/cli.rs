//! Command-line front end: config loading, the four subcommands, and the
//! CSV/JSON grid and trajectory formats.
//!
//! State indices are one-based on the command line and in files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dynsys::{self, State, SystemBundle, Trajectory, VectorField};
use crate::estimate::{
    self, Axis, Coordinates, EstimationConfig, GridSpec, LtiOracle, PfEstimate, PfGrid, PfOracle, Status, SummaryEntry,
    Target,
};
use crate::lti;
use crate::numerics::LstsqMethod;

pub const GRID_SCHEMA: &str = "pfgrid/1";
pub const TRAJECTORY_SCHEMA: &str = "trajectory/1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Read { .. } | CliError::Parse { .. } | CliError::Validation(_) => 1,
            CliError::Write { .. } | CliError::Runtime(_) => 2,
        }
    }
}

impl From<estimate::EstimateError> for CliError {
    fn from(e: estimate::EstimateError) -> Self {
        match e {
            estimate::EstimateError::InvalidConfig(v) => CliError::Validation(v),
            estimate::EstimateError::PerturbedIndex { index, n } => {
                CliError::Validation(vec![format!("perturbed index {} out of range 1..={n}", index + 1)])
            }
            estimate::EstimateError::DimensionMismatch { expected, got } => {
                CliError::Validation(vec![format!("x0 has {got} entries, system dimension is {expected}")])
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleChoice {
    None,
    #[default]
    Builtin,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemChoice {
    Equilibrium,
    LimitCycle,
    Lti(DMatrix<f64>),
}

impl SystemChoice {
    pub fn dim(&self) -> usize {
        match self {
            SystemChoice::Lti(a) => a.nrows(),
            _ => 2,
        }
    }

    pub fn field(&self) -> VectorField {
        match self {
            SystemChoice::Equilibrium => dynsys::ep_field(),
            SystemChoice::LimitCycle => dynsys::lc_field(),
            SystemChoice::Lti(a) => VectorField::linear("lti", a.clone()),
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "ex1_ep" => Some(SystemChoice::Equilibrium),
            "ex2_lc" => Some(SystemChoice::LimitCycle),
            _ => None,
        }
    }

    fn default_estimation(&self) -> EstimationConfig {
        match self {
            SystemChoice::Equilibrium => EstimationConfig::for_ep(),
            SystemChoice::LimitCycle => EstimationConfig::for_lc(),
            SystemChoice::Lti(a) => EstimationConfig {
                targets: lti::biorthogonal_eig(a)
                    .map(|b| {
                        b.eigenvalues()
                            .iter()
                            .enumerate()
                            .map(|(j, l)| Target::new((j + 1).to_string(), *l))
                            .collect()
                    })
                    .unwrap_or_default(),
                ..EstimationConfig::default()
            },
        }
    }

    fn default_perturbed(&self) -> usize {
        match self {
            SystemChoice::Equilibrium => 1,
            _ => 0,
        }
    }

    fn default_grid(&self) -> Option<GridSpec> {
        match self {
            SystemChoice::Equilibrium => Some(GridSpec::cartesian(vec![Axis::new(-6.0, 6.0, 21); 2])),
            SystemChoice::LimitCycle => Some(GridSpec::polar(Axis::new(0.5, 2.5, 21), Axis::half_open(-PI, PI, 21))),
            SystemChoice::Lti(_) => None,
        }
    }
}

/// Validated sweep configuration. `perturbed` is zero-based.
#[derive(Debug, Clone)]
pub struct Config {
    pub system: SystemChoice,
    pub grid: GridSpec,
    pub estimation: EstimationConfig,
    pub perturbed: usize,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    pub oracle: OracleChoice,
}

impl Config {
    pub fn oracle(&self) -> Result<Option<Box<dyn PfOracle>>> {
        if self.oracle == OracleChoice::None {
            return Ok(None);
        }
        Ok(Some(match &self.system {
            SystemChoice::Equilibrium => Box::new(dynsys::ep_system()),
            SystemChoice::LimitCycle => Box::new(dynsys::lc_system()),
            SystemChoice::Lti(a) => Box::new(LtiOracle::new(a).map_err(|e| CliError::Runtime(e.to_string()))?),
        }))
    }

    /// Every violated invariant.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(estimate::EstimateError::InvalidConfig(v)) = self.estimation.validate() {
            errs.extend(v);
        }
        if let Err(estimate::EstimateError::InvalidConfig(v)) = self.grid.validate(self.system.dim()) {
            errs.extend(v);
        }
        if self.perturbed >= self.system.dim() {
            errs.push(format!(
                "perturbed must be in 1..={}, got {}",
                self.system.dim(),
                self.perturbed + 1
            ));
        }
        for t in &self.estimation.targets {
            if t.label.is_empty() || t.label.contains([',', '"', '\n', '\r']) {
                errs.push(format!("target label {:?} must be non-empty without commas or quotes", t.label));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSystem {
    Named(String),
    Lti { lti: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    grid: Option<RawGrid>,
    #[serde(default)]
    estimation: RawEstimation,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    oracle: OracleChoice,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default)]
    coordinates: RawCoordinates,
    axes: Vec<RawAxis>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawCoordinates {
    #[default]
    Cartesian,
    Polar,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    min: f64,
    max: f64,
    count: usize,
    #[serde(default = "yes")]
    include_max: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimation {
    delta: Option<f64>,
    h: Option<f64>,
    num_samples: Option<usize>,
    substeps: Option<usize>,
    match_tol: Option<f64>,
    perturbed: Option<usize>,
    solver: Option<RawSolver>,
    targets: Option<Vec<RawTarget>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawSolver {
    MinimumNorm,
    Orthogonal,
    NormalEquations,
}

impl From<RawSolver> for LstsqMethod {
    fn from(s: RawSolver) -> Self {
        match s {
            RawSolver::MinimumNorm => LstsqMethod::MinimumNorm,
            RawSolver::Orthogonal => LstsqMethod::Orthogonal,
            RawSolver::NormalEquations => LstsqMethod::NormalEquations,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    label: String,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
    #[serde(default)]
    format: Format,
}

/// Parses and validates a TOML config. `origin` names the source in errors.
pub fn parse_config(text: &str, origin: &str) -> Result<Config> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        path: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;

    let mut errs = Vec::new();
    let system = match raw.system {
        RawSystem::Named(name) => match SystemChoice::from_name(&name) {
            Some(s) => s,
            None => {
                return Err(CliError::Validation(vec![format!(
                    "unknown system {name:?}; expected \"ex1_ep\", \"ex2_lc\" or {{ lti = [[...]] }}"
                )]))
            }
        },
        RawSystem::Lti { lti } => {
            let n = lti.len();
            if n == 0 || lti.iter().any(|row| row.len() != n) {
                return Err(CliError::Validation(vec![format!(
                    "lti matrix must be square and non-empty, got {} rows with lengths {:?}",
                    n,
                    lti.iter().map(Vec::len).collect::<Vec<_>>()
                )]));
            }
            SystemChoice::Lti(DMatrix::from_fn(n, n, |i, j| lti[i][j]))
        }
    };

    let grid = match raw.grid {
        Some(g) => GridSpec {
            coordinates: match g.coordinates {
                RawCoordinates::Cartesian => Coordinates::Cartesian,
                RawCoordinates::Polar => Coordinates::Polar,
            },
            axes: g
                .axes
                .iter()
                .map(|a| Axis {
                    min: a.min,
                    max: a.max,
                    count: a.count,
                    include_max: a.include_max,
                })
                .collect(),
        },
        None => match system.default_grid() {
            Some(g) => g,
            None => {
                errs.push("[grid] is required for lti systems".into());
                GridSpec::cartesian(Vec::new())
            }
        },
    };

    let e = raw.estimation;
    let mut estimation = system.default_estimation();
    if let Some(v) = e.delta {
        estimation.delta = v;
    }
    if let Some(v) = e.h {
        estimation.h = v;
    }
    if let Some(v) = e.num_samples {
        estimation.num_samples = v;
    }
    if let Some(v) = e.substeps {
        estimation.substeps = v;
    }
    if e.match_tol.is_some() {
        estimation.match_tol = e.match_tol;
    }
    if let Some(s) = e.solver {
        estimation.solver = s.into();
    }
    if let Some(ts) = e.targets {
        estimation.targets = ts
            .into_iter()
            .map(|t| Target::new(t.label, Complex64::new(t.re, t.im)))
            .collect();
    }
    let perturbed = match e.perturbed {
        Some(0) => {
            errs.push("perturbed is one-based and must be >= 1".into());
            0
        }
        Some(p) => p - 1,
        None => system.default_perturbed(),
    };

    let config = Config {
        system,
        grid,
        estimation,
        perturbed,
        output_path: raw.output.path,
        format: raw.output.format,
        oracle: raw.oracle,
    };
    if let Err(CliError::Validation(v)) = config.validate() {
        errs.extend(v);
    }
    if errs.is_empty() {
        Ok(config)
    } else {
        Err(CliError::Validation(errs))
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text, &path.display().to_string())
}

/// One serialized grid row; indices are one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub x0: Vec<f64>,
    pub target_label: String,
    pub state_k: usize,
    pub perturbed_l: usize,
    pub status: Status,
    pub lambda: Option<Complex64>,
    pub pf: Option<Complex64>,
}

impl From<&PfEstimate> for GridRecord {
    fn from(e: &PfEstimate) -> Self {
        Self {
            x0: e.x0.iter().copied().collect(),
            target_label: e.target_label.clone(),
            state_k: e.state_k + 1,
            perturbed_l: e.perturbed + 1,
            status: e.status,
            lambda: e.matched_lambda,
            pf: e.value,
        }
    }
}

/// One serialized summary row; indices are one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub quantity: String,
    pub target_label: String,
    pub target: Complex64,
    pub state_k: usize,
    pub perturbed_l: usize,
    pub mean_error: Option<f64>,
    pub matched: usize,
    pub total: usize,
}

impl From<&SummaryEntry> for SummaryRecord {
    fn from(s: &SummaryEntry) -> Self {
        Self {
            quantity: s.quantity(),
            target_label: s.target_label.clone(),
            target: s.target,
            state_k: s.state_k + 1,
            perturbed_l: s.perturbed + 1,
            mean_error: s.mean_error,
            matched: s.matched,
            total: s.total,
        }
    }
}

/// The serialized form of a [`PfGrid`]. CSV files carry no summary.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub records: Vec<GridRecord>,
    pub summary: Vec<SummaryRecord>,
}

impl From<&PfGrid> for GridTable {
    fn from(g: &PfGrid) -> Self {
        Self {
            records: g.estimates.iter().map(GridRecord::from).collect(),
            summary: g.summary.iter().map(SummaryRecord::from).collect(),
        }
    }
}

pub fn csv_header(n: usize) -> String {
    let mut cols: Vec<String> = (1..=n).map(|i| format!("x0_{i}")).collect();
    cols.extend(
        [
            "target_label",
            "state_k",
            "perturbed_l",
            "status",
            "lambda_re",
            "lambda_im",
            "pf_re",
            "pf_im",
            "pf_abs",
        ]
        .map(String::from),
    );
    cols.join(",")
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn grid_to_csv(table: &GridTable) -> String {
    let n = table.records.first().map_or(0, |r| r.x0.len());
    let mut s = format!("# schema: {GRID_SCHEMA}\n{}\n", csv_header(n));
    for r in &table.records {
        let mut fields: Vec<String> = r.x0.iter().map(|v| v.to_string()).collect();
        fields.push(r.target_label.clone());
        fields.push(r.state_k.to_string());
        fields.push(r.perturbed_l.to_string());
        fields.push(r.status.to_string());
        fields.push(opt_field(r.lambda.map(|l| l.re)));
        fields.push(opt_field(r.lambda.map(|l| l.im)));
        fields.push(opt_field(r.pf.map(|p| p.re)));
        fields.push(opt_field(r.pf.map(|p| p.im)));
        fields.push(opt_field(r.pf.map(|p| p.norm())));
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_string(),
        message: format!("line {line}: {}", message.into()),
    }
}

pub fn grid_from_csv(text: &str, origin: &str) -> Result<GridTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == format!("# schema: {GRID_SCHEMA}") => {}
        _ => return Err(parse_err(origin, 1, format!("expected '# schema: {GRID_SCHEMA}'"))),
    }
    let (_, header) = lines.next().ok_or_else(|| parse_err(origin, 2, "missing header"))?;
    let n = header.split(',').filter(|c| c.starts_with("x0_")).count();
    if header != csv_header(n) {
        return Err(parse_err(origin, 2, format!("unexpected header {header:?}")));
    }
    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| parse_err(origin, line, format!("bad number {s:?}")))
    };
    let opt_pair = |re: &str, im: &str, line: usize| -> Result<Option<Complex64>> {
        match (re.is_empty(), im.is_empty()) {
            (true, true) => Ok(None),
            (false, false) => Ok(Some(Complex64::new(num(re, line)?, num(im, line)?))),
            _ => Err(parse_err(origin, line, "half-empty complex value")),
        }
    };
    let mut records = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != n + 9 {
            return Err(parse_err(origin, lineno, format!("expected {} fields, got {}", n + 9, f.len())));
        }
        let x0 = f[..n].iter().map(|s| num(s, lineno)).collect::<Result<Vec<_>>>()?;
        let idx = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| parse_err(origin, lineno, format!("bad index {s:?}")))
        };
        records.push(GridRecord {
            x0,
            target_label: f[n].to_string(),
            state_k: idx(f[n + 1])?,
            perturbed_l: idx(f[n + 2])?,
            status: Status::parse(f[n + 3]).ok_or_else(|| parse_err(origin, lineno, format!("bad status {:?}", f[n + 3])))?,
            lambda: opt_pair(f[n + 4], f[n + 5], lineno)?,
            pf: opt_pair(f[n + 6], f[n + 7], lineno)?,
        });
    }
    Ok(GridTable {
        records,
        summary: Vec::new(),
    })
}

fn opt_json(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

pub fn grid_to_json(table: &GridTable) -> String {
    let records: Vec<Value> = table
        .records
        .iter()
        .map(|r| {
            json!({
                "x0": r.x0,
                "target_label": r.target_label,
                "state_k": r.state_k,
                "perturbed_l": r.perturbed_l,
                "status": r.status.as_str(),
                "lambda_re": opt_json(r.lambda.map(|l| l.re)),
                "lambda_im": opt_json(r.lambda.map(|l| l.im)),
                "pf_re": opt_json(r.pf.map(|p| p.re)),
                "pf_im": opt_json(r.pf.map(|p| p.im)),
                "pf_abs": opt_json(r.pf.map(|p| p.norm())),
            })
        })
        .collect();
    let mut summary = Map::new();
    for s in &table.summary {
        summary.insert(
            s.quantity.clone(),
            json!({
                "target_label": s.target_label,
                "target_re": s.target.re,
                "target_im": s.target.im,
                "state_k": s.state_k,
                "perturbed_l": s.perturbed_l,
                "mean_error": opt_json(s.mean_error),
                "matched": s.matched,
                "total": s.total,
            }),
        );
    }
    let doc = json!({ "schema": GRID_SCHEMA, "records": records, "summary": summary });
    let mut s = serde_json::to_string_pretty(&doc).expect("grid documents are always serializable");
    s.push('\n');
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGrid {
    schema: String,
    records: Vec<JsonRecord>,
    summary: std::collections::BTreeMap<String, JsonSummary>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    x0: Vec<f64>,
    target_label: String,
    state_k: usize,
    perturbed_l: usize,
    status: String,
    lambda_re: Option<f64>,
    lambda_im: Option<f64>,
    pf_re: Option<f64>,
    pf_im: Option<f64>,
    #[allow(dead_code)]
    pf_abs: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonSummary {
    target_label: String,
    target_re: f64,
    target_im: f64,
    state_k: usize,
    perturbed_l: usize,
    mean_error: Option<f64>,
    matched: usize,
    total: usize,
}

fn pair(re: Option<f64>, im: Option<f64>) -> Option<Complex64> {
    Some(Complex64::new(re?, im?))
}

pub fn grid_from_json(text: &str, origin: &str) -> Result<GridTable> {
    let doc: JsonGrid = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    if doc.schema != GRID_SCHEMA {
        return Err(CliError::Parse {
            path: origin.to_string(),
            message: format!("unsupported schema {:?}", doc.schema),
        });
    }
    let records = doc
        .records
        .into_iter()
        .map(|r| {
            Ok(GridRecord {
                status: Status::parse(&r.status).ok_or_else(|| CliError::Parse {
                    path: origin.to_string(),
                    message: format!("bad status {:?}", r.status),
                })?,
                x0: r.x0,
                target_label: r.target_label,
                state_k: r.state_k,
                perturbed_l: r.perturbed_l,
                lambda: pair(r.lambda_re, r.lambda_im),
                pf: pair(r.pf_re, r.pf_im),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = doc
        .summary
        .into_iter()
        .map(|(quantity, s)| SummaryRecord {
            quantity,
            target_label: s.target_label,
            target: Complex64::new(s.target_re, s.target_im),
            state_k: s.state_k,
            perturbed_l: s.perturbed_l,
            mean_error: s.mean_error,
            matched: s.matched,
            total: s.total,
        })
        .collect();
    Ok(GridTable { records, summary })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_table(table: &GridTable, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => grid_to_csv(table),
        Format::Json => grid_to_json(table),
    };
    write_text(path, &text)
}

pub fn write_grid(grid: &PfGrid, path: &Path, format: Format) -> Result<()> {
    write_table(&GridTable::from(grid), path, format)
}

pub fn read_grid(path: &Path, format: Format) -> Result<GridTable> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let origin = path.display().to_string();
    match format {
        Format::Csv => grid_from_csv(&text, &origin),
        Format::Json => grid_from_json(&text, &origin),
    }
}

pub fn trajectory_to_csv(t: &Trajectory) -> String {
    let mut s = format!("# schema: {TRAJECTORY_SCHEMA}\nt");
    for i in 1..=t.dimension() {
        let _ = write!(s, ",x{i}");
    }
    s.push('\n');
    for (i, x) in t.samples.iter().enumerate() {
        s.push_str(&t.time(i).to_string());
        for v in x.iter() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn trajectory_to_json(t: &Trajectory) -> String {
    let samples: Vec<Vec<f64>> = t.samples.iter().map(|x| x.iter().copied().collect()).collect();
    let mut s = serde_json::to_string_pretty(&json!({ "schema": TRAJECTORY_SCHEMA, "h": t.h, "samples": samples }))
        .expect("trajectories are always serializable");
    s.push('\n');
    s
}

/// Reads a square matrix: one row per line, entries separated by whitespace
/// or commas, `#` starts a comment.
pub fn parse_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(origin, i + 1, format!("bad number {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Validation(vec![format!(
            "{origin}: matrix must be square and non-empty, got row lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )]));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn format_complex(z: Complex64) -> String {
    let clean = |v: f64| if v.abs() < 5e-13 { 0.0 } else { v };
    let (re, im) = (clean(z.re), clean(z.im));
    if im == 0.0 {
        format!("{re:.6}")
    } else {
        format!("{re:.6}{}{:.6}i", if im < 0.0 { "-" } else { "+" }, im.abs())
    }
}

fn format_cmatrix(m: &DMatrix<Complex64>, indent: &str) -> String {
    let cells: Vec<Vec<String>> = m.row_iter().map(|r| r.iter().map(|z| format_complex(*z)).collect()).collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(0);
    let mut s = String::new();
    for row in cells {
        s.push_str(indent);
        s.push_str(&row.iter().map(|c| format!("{c:>width$}")).collect::<Vec<_>>().join("  "));
        s.push('\n');
    }
    s
}

/// Text report of PFs and GPs for `ẋ = Ax`.
pub fn lti_report(a: &DMatrix<f64>) -> std::result::Result<String, lti::LtiError> {
    let basis = lti::biorthogonal_eig(a)?;
    let t = lti::generalized_participations(&basis);
    let n = basis.n();
    let mut s = String::new();
    s.push_str("eigenvalues:\n");
    for (j, l) in basis.eigenvalues().iter().enumerate() {
        let _ = writeln!(s, "  lambda_{} = {}", j + 1, format_complex(*l));
    }
    s.push_str("participation factors P[j][k] (row j = mode, column k = state):\n");
    s.push_str(&format_cmatrix(&t.pf, "  "));
    let col: Vec<String> = (0..n).map(|k| format_complex(t.pf.column(k).iter().sum())).collect();
    let row: Vec<String> = (0..n).map(|j| format_complex(t.pf.row(j).iter().sum())).collect();
    let _ = writeln!(s, "column sums: ({})", col.join(", "));
    let _ = writeln!(s, "row sums: ({})", row.join(", "));
    s.push_str("mode-in-state GPs P_j^{k(l)} (row k, column l):\n");
    for j in 0..n {
        let _ = writeln!(s, "  mode {}:", j + 1);
        s.push_str(&format_cmatrix(&t.gp_mode_in_state.slice(j), "    "));
    }
    s.push_str("state-in-mode GPs P_{i(j)}^k (row j, column k):\n");
    for i in 0..n {
        let _ = writeln!(s, "  source mode {}:", i + 1);
        s.push_str(&format_cmatrix(&t.gp_state_in_mode.slice(i), "    "));
    }
    Ok(s)
}

/// `err(P1^1(2)) = 0.0012 (1.234e-3, matched 440/441)`.
pub fn summary_line(s: &SummaryEntry) -> String {
    match s.mean_error {
        Some(e) => format!("err({}) = {e:.4} ({e:.3e}, matched {}/{})", s.quantity(), s.matched, s.total),
        None => format!("err({}) = n/a (matched {}/{})", s.quantity(), s.matched, s.total),
    }
}

#[derive(Parser, Debug)]
#[command(name = "koopman-pf", version, about = "Participation factors for linear and nonlinear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// PFs and GPs of a linear system read from a matrix file.
    LtiPf {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Integrates a system and writes the sampled trajectory.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        /// Comma-separated initial state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        substeps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Estimates PFs/GPs at one initial state.
    Estimate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        /// One-based index of the perturbed state.
        #[arg(long)]
        perturbed: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Runs a grid sweep described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct SystemArgs {
    /// Config file naming the system and estimation settings.
    #[arg(long, conflicts_with_all = ["system", "matrix"])]
    config: Option<PathBuf>,
    /// Built-in system: ex1_ep or ex2_lc.
    #[arg(long, conflicts_with = "matrix")]
    system: Option<String>,
    /// Matrix file for a linear system.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Overrides {
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    h: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut EstimationConfig) {
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if let Some(v) = self.samples {
            cfg.num_samples = v;
        }
    }
}

fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_matrix(&text, &path.display().to_string())
}

/// Resolves the system options into a config with a placeholder grid.
fn resolve_system(args: &SystemArgs) -> Result<Config> {
    if let Some(path) = &args.config {
        return load_config(path);
    }
    let system = match (&args.system, &args.matrix) {
        (Some(name), None) => SystemChoice::from_name(name)
            .ok_or_else(|| CliError::Usage(format!("unknown system {name:?}; expected ex1_ep or ex2_lc")))?,
        (None, Some(path)) => SystemChoice::Lti(read_matrix_file(path)?),
        _ => return Err(CliError::Usage("one of --config, --system or --matrix is required".into())),
    };
    let n = system.dim();
    Ok(Config {
        grid: system
            .default_grid()
            .unwrap_or_else(|| GridSpec::cartesian(vec![Axis::new(0.0, 0.0, 1); n])),
        estimation: system.default_estimation(),
        perturbed: system.default_perturbed(),
        output_path: None,
        format: Format::Csv,
        oracle: OracleChoice::Builtin,
        system,
    })
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::LtiPf { matrix } => {
            let a = read_matrix_file(&matrix)?;
            let report = lti_report(&a).map_err(|e| CliError::Runtime(e.to_string()))?;
            out.write_all(report.as_bytes()).map_err(io)
        }
        Command::Simulate {
            system,
            x0,
            overrides,
            substeps,
            out: path,
            format,
        } => {
            let mut cfg = resolve_system(&system)?;
            overrides.apply(&mut cfg.estimation);
            if let Some(s) = substeps {
                cfg.estimation.substeps = s;
            }
            let e = &cfg.estimation;
            let mut errs = Vec::new();
            if x0.len() != cfg.system.dim() {
                errs.push(format!("x0 has {} entries, system dimension is {}", x0.len(), cfg.system.dim()));
            }
            if !(e.h.is_finite() && e.h > 0.0) {
                errs.push(format!("h must be positive, got {}", e.h));
            }
            if e.num_samples == 0 || e.substeps == 0 {
                errs.push("samples and substeps must be >= 1".into());
            }
            if !errs.is_empty() {
                return Err(CliError::Validation(errs));
            }
            let traj = dynsys::rk4_integrate(
                &cfg.system.field(),
                &State::from_vec(x0),
                e.h,
                e.num_samples - 1,
                e.substeps,
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            let text = match format {
                Format::Csv => trajectory_to_csv(&traj),
                Format::Json => trajectory_to_json(&traj),
            };
            emit(&text, path.as_deref(), out)
        }
        Command::Estimate {
            system,
            x0,
            perturbed,
            overrides,
            out: path,
            format,
        } => {
            let mut cfg = resolve_system(&system)?;
            overrides.apply(&mut cfg.estimation);
            if let Some(p) = perturbed {
                if p == 0 {
                    return Err(CliError::Validation(vec!["--perturbed is one-based and must be >= 1".into()]));
                }
                cfg.perturbed = p - 1;
            }
            let x0 = State::from_vec(x0);
            if let Some(b) = builtin_bundle(&cfg.system) {
                if x0.len() == b.dim() {
                    if let Some(w) = b.domain_warning(&x0) {
                        writeln!(err, "warning: {w}").map_err(io)?;
                    }
                }
            }
            let estimates = estimate::estimate_pf(&cfg.system.field(), &x0, cfg.perturbed, &cfg.estimation)?;
            for e in &estimates {
                let quantity = if e.state_k == e.perturbed {
                    format!("P{}^{}", e.target_label, e.state_k + 1)
                } else {
                    format!("P{}^{}({})", e.target_label, e.state_k + 1, e.perturbed + 1)
                };
                let lambda = e.matched_lambda.map_or_else(|| "-".to_string(), format_complex);
                let value = e.value.map_or_else(|| "-".to_string(), format_complex);
                writeln!(
                    out,
                    "{quantity}: status={} target={} lambda={lambda} value={value}",
                    e.status,
                    format_complex(e.target)
                )
                .map_err(io)?;
            }
            if let Some(p) = path {
                let table = GridTable {
                    records: estimates.iter().map(GridRecord::from).collect(),
                    summary: Vec::new(),
                };
                write_table(&table, &p, format.unwrap_or(cfg.format))?;
            }
            Ok(())
        }
        Command::Sweep {
            config,
            overrides,
            out: path,
            format,
            threads,
        } => {
            let mut cfg = load_config(&config)?;
            overrides.apply(&mut cfg.estimation);
            if let Some(p) = path {
                cfg.output_path = Some(p);
            }
            if let Some(f) = format {
                cfg.format = f;
            }
            if threads == Some(0) {
                return Err(CliError::Validation(vec!["--threads must be >= 1".into()]));
            }
            cfg.validate()?;
            let oracle = cfg.oracle()?;
            let grid = estimate::grid_sweep(
                &cfg.system.field(),
                oracle.as_deref(),
                &cfg.grid,
                cfg.perturbed,
                &cfg.estimation,
                threads,
            )?;
            if let Some(b) = builtin_bundle(&cfg.system) {
                let inside = grid.grid.points().iter().filter(|x| b.domain_warning(x).is_some()).count();
                if inside > 0 {
                    writeln!(
                        err,
                        "warning: {inside} grid nodes lie where the Koopman mode expansion may not converge"
                    )
                    .map_err(io)?;
                }
            }
            for s in &grid.summary {
                writeln!(out, "{}", summary_line(s)).map_err(io)?;
            }
            if let Some(p) = &cfg.output_path {
                write_grid(&grid, p, cfg.format)?;
                writeln!(out, "wrote {} rows to {}", grid.estimates.len(), p.display()).map_err(io)?;
            }
            Ok(())
        }
    }
}

fn builtin_bundle(system: &SystemChoice) -> Option<SystemBundle> {
    match system {
        SystemChoice::LimitCycle => Some(dynsys::lc_system()),
        _ => None,
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the exit
/// code: 0 on success, 1 on usage or validation errors, 2 on runtime errors.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_ep_config_uses_study_defaults() {
        let cfg = parse_config("system = \"ex1_ep\"\n", "inline").unwrap();
        assert_eq!(cfg.estimation.delta, 1e-6);
        assert_eq!(cfg.estimation.h, 0.3);
        assert_eq!(cfg.estimation.num_samples, 6);
        assert_eq!(cfg.perturbed, 1);
        assert_eq!(cfg.grid.len(), 441);
        assert_eq!(cfg.estimation.targets.len(), 3);
    }

    #[test]
    fn lc_defaults() {
        let cfg = parse_config("system = \"ex2_lc\"\n", "inline").unwrap();
        assert_eq!((cfg.estimation.h, cfg.estimation.num_samples), (0.1, 100));
        assert_eq!(cfg.grid.coordinates, Coordinates::Polar);
        assert!(!cfg.grid.axes[1].include_max);
    }

    #[test]
    fn zero_count_is_a_validation_error() {
        let text = "system = \"ex1_ep\"\n[grid]\naxes = [{min = 0.0, max = 1.0, count = 0}, {min = 0.0, max = 1.0, count = 2}]\n";
        match parse_config(text, "inline") {
            Err(CliError::Validation(v)) => assert!(v.iter().any(|m| m.contains("count")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_the_key() {
        let text = "system = \"ex1_ep\"\n[estimation]\ndelta_x = 1.0\n";
        match parse_config(text, "inline") {
            Err(e @ CliError::Parse { .. }) => {
                let msg = e.to_string();
                assert!(msg.contains("delta_x"), "{msg}");
                assert!(msg.contains("line 3"), "{msg}");
                assert_eq!(e.exit_code(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_collects_every_violation() {
        let text = "system = { lti = [[-1.0, 0.0], [0.0, -2.0]] }\n[grid]\naxes = [{min = 0.0, max = 1.0, count = 0}]\n[estimation]\nh = -1.0\nnum_samples = 5\nperturbed = 3\n";
        match parse_config(text, "inline") {
            Err(CliError::Validation(v)) => assert!(v.len() >= 4, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_square_lti_rejected() {
        let text = "system = { lti = [[1.0, 2.0], [3.0]] }\n";
        assert!(matches!(parse_config(text, "inline"), Err(CliError::Validation(_))));
    }

    #[test]
    fn csv_header_golden() {
        assert_eq!(
            csv_header(2),
            "x0_1,x0_2,target_label,state_k,perturbed_l,status,lambda_re,lambda_im,pf_re,pf_im,pf_abs"
        );
    }

    #[test]
    fn matrix_parsing() {
        let m = parse_matrix("# A\n0, 1\n-2 -3\n", "m").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]));
        assert!(parse_matrix("1 2\n3\n", "m").is_err());
    }

    #[test]
    fn complex_formatting() {
        assert_eq!(format_complex(Complex64::new(2.0, 1e-16)), "2.000000");
        assert_eq!(format_complex(Complex64::new(0.5, -0.25)), "0.500000-0.250000i");
    }
}
