//! Data-driven PF/GP estimation.
//!
//! The prolonged system is started from `(x0, Δ·e_ℓ)`, sampled with period
//! `h`, and decomposed with [`prony_dmd`](crate::dmd::prony_dmd). For each target
//! eigenvalue the closest DMD eigenvalue is matched, and the ξ-block entries of
//! its mode divided by `Δ` give `P̂_j^k` (`ℓ = k`) or `P̂_j^{k(ℓ)}` (`ℓ ≠ k`).
//!
//! State indices in this module are zero-based.

use std::f64::consts::SQRT_2;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::dmd::{self, DmdOptions, DmdSpectrum};
use crate::dynsys::{self, DynsysError, State, SystemBundle, VectorField};
use crate::lti::{self, LtiError, ModalBasis};
use crate::numerics::LstsqMethod;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EstimateError {
    #[error("invalid estimation config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("perturbed index {index} out of range for dimension {n}")]
    PerturbedIndex { index: usize, n: usize },

    #[error("initial state has dimension {got}, field has {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no ok estimates to average")]
    EmptySet,

    #[error("worker pool: {0}")]
    ThreadPool(String),

    #[error(transparent)]
    Dynsys(#[from] DynsysError),

    #[error(transparent)]
    Lti(#[from] LtiError),
}

pub type Result<T> = std::result::Result<T, EstimateError>;

/// A labelled target eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub label: String,
    pub lambda: Complex64,
}

impl Target {
    pub fn new(label: impl Into<String>, lambda: Complex64) -> Self {
        Self {
            label: label.into(),
            lambda,
        }
    }
}

/// Targets `−1`, `−√2`, `−2√2` of the equilibrium example.
pub fn ep_targets() -> Vec<Target> {
    vec![
        Target::new("1", Complex64::new(-1.0, 0.0)),
        Target::new("2", Complex64::new(-SQRT_2, 0.0)),
        Target::new("<02>", Complex64::new(-2.0 * SQRT_2, 0.0)),
    ]
}

/// Targets `i` and `i − 2` of the limit-cycle example.
pub fn lc_targets() -> Vec<Target> {
    vec![
        Target::new("1", Complex64::new(0.0, 1.0)),
        Target::new("<11>", Complex64::new(-2.0, 1.0)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub delta: f64,
    pub h: f64,
    /// `2N`.
    pub num_samples: usize,
    pub substeps: usize,
    /// `None` means `0.1·(1 + |λ_target|)`.
    pub match_tol: Option<f64>,
    pub targets: Vec<Target>,
    pub solver: LstsqMethod,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            h: 0.3,
            num_samples: 6,
            substeps: 10,
            match_tol: None,
            targets: Vec::new(),
            solver: DmdOptions::default().solver,
        }
    }
}

impl EstimationConfig {
    /// Settings of the equilibrium study: `h = 0.3`, six samples.
    pub fn for_ep() -> Self {
        Self {
            targets: ep_targets(),
            ..Self::default()
        }
    }

    /// Settings of the limit-cycle study: `h = 0.1`, 100 samples.
    pub fn for_lc() -> Self {
        Self {
            h: 0.1,
            num_samples: 100,
            targets: lc_targets(),
            ..Self::default()
        }
    }

    pub fn tolerance_for(&self, target: Complex64) -> f64 {
        self.match_tol.unwrap_or(0.1 * (1.0 + target.norm()))
    }

    /// Every violated invariant, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.delta.is_finite() && self.delta != 0.0) {
            errs.push(format!("delta must be finite and non-zero, got {}", self.delta));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            errs.push(format!("h must be positive, got {}", self.h));
        }
        if self.num_samples < 2 || !self.num_samples.is_multiple_of(2) {
            errs.push(format!("num_samples must be even and >= 2, got {}", self.num_samples));
        }
        if self.substeps == 0 {
            errs.push("substeps must be >= 1".into());
        }
        if let Some(tol) = self.match_tol {
            if !(tol.is_finite() && tol > 0.0) {
                errs.push(format!("match_tol must be positive, got {tol}"));
            }
        }
        if self.targets.is_empty() {
            errs.push("at least one target is required".into());
        }
        for t in &self.targets {
            if !(t.lambda.re.is_finite() && t.lambda.im.is_finite()) {
                errs.push(format!("target {} is not finite", t.label));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EstimateError::InvalidConfig(errs))
        }
    }

    fn dmd_options(&self) -> DmdOptions {
        DmdOptions { solver: self.solver }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Ok,
    NoMatch,
    DmdFailed,
    Diverged,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::NoMatch => "no_match",
            Status::DmdFailed => "dmd_failed",
            Status::Diverged => "diverged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ok" => Status::Ok,
            "no_match" => Status::NoMatch,
            "dmd_failed" => Status::DmdFailed,
            "diverged" => Status::Diverged,
            _ => return None,
        })
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One estimate of `P̂_j^{k(ℓ)}` at one initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct PfEstimate {
    pub x0: State,
    pub perturbed: usize,
    pub state_k: usize,
    pub target_label: String,
    pub target: Complex64,
    pub matched_lambda: Option<Complex64>,
    /// Present iff `status == Ok`.
    pub value: Option<Complex64>,
    pub status: Status,
}

impl PfEstimate {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// `argmin_j |λ̂_j − target|` if that distance is at most `tol`.
pub fn match_eigenvalue(spectrum: &DmdSpectrum, target: Complex64, tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, l) in spectrum.lambda.iter().enumerate() {
        let d = (l - target).norm();
        if d.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best.filter(|(_, d)| *d <= tol).map(|(j, _)| j)
}

fn check_inputs(field: &VectorField, x0: &State, perturbed: usize) -> Result<()> {
    let n = field.dim();
    if x0.len() != n {
        return Err(EstimateError::DimensionMismatch { expected: n, got: x0.len() });
    }
    if perturbed >= n {
        return Err(EstimateError::PerturbedIndex { index: perturbed, n });
    }
    Ok(())
}

/// Estimates for every target and every state index `k`, target-major.
pub fn estimate_pf(field: &VectorField, x0: &State, perturbed: usize, cfg: &EstimationConfig) -> Result<Vec<PfEstimate>> {
    cfg.validate()?;
    check_inputs(field, x0, perturbed)?;
    let prolonged = dynsys::prolong(field);
    Ok(estimate_unchecked(&prolonged, x0, perturbed, cfg))
}

fn estimate_unchecked(prolonged: &VectorField, x0: &State, perturbed: usize, cfg: &EstimationConfig) -> Vec<PfEstimate> {
    let n = x0.len();
    let record = |target: &crate::estimate::Target, k: usize, status, matched, value| PfEstimate {
        x0: x0.clone(),
        perturbed,
        state_k: k,
        target_label: target.label.clone(),
        target: target.lambda,
        matched_lambda: matched,
        value,
        status,
    };
    let fill = |status: Status| -> Vec<PfEstimate> {
        cfg.targets
            .iter()
            .flat_map(|t| (0..n).map(move |k| (t, k)))
            .map(|(t, k)| record(t, k, status, None, None))
            .collect()
    };

    let mut z0 = State::zeros(2 * n);
    z0.rows_mut(0, n).copy_from(x0);
    z0[n + perturbed] = cfg.delta;
    let traj = match dynsys::rk4_integrate(prolonged, &z0, cfg.h, cfg.num_samples - 1, cfg.substeps) {
        Ok(t) => t,
        Err(_) => return fill(Status::Diverged),
    };
    let spectrum = match dmd::prony_dmd_with(&traj, cfg.dmd_options()) {
        Ok(s) => s,
        Err(_) => return fill(Status::DmdFailed),
    };

    let mut out = Vec::with_capacity(cfg.targets.len() * n);
    for t in &cfg.targets {
        let matched = match_eigenvalue(&spectrum, t.lambda, cfg.tolerance_for(t.lambda));
        for k in 0..n {
            out.push(match matched {
                None => record(t, k, Status::NoMatch, None, None),
                Some(j) => {
                    let value = spectrum.modes[j][n + k] / cfg.delta;
                    if value.re.is_finite() && value.im.is_finite() {
                        record(t, k, Status::Ok, Some(spectrum.lambda[j]), Some(value))
                    } else {
                        record(t, k, Status::DmdFailed, None, None)
                    }
                }
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    /// Whether `max` itself is a node. A half-open axis suits periodic coordinates.
    pub include_max: bool,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self {
            min,
            max,
            count,
            include_max: true,
        }
    }

    pub fn half_open(min: f64, max: f64, count: usize) -> Self {
        Self {
            include_max: false,
            ..Self::new(min, max, count)
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let intervals = if self.include_max { self.count - 1 } else { self.count };
        let step = (self.max - self.min) / intervals as f64;
        (0..self.count).map(|i| self.min + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coordinates {
    #[default]
    Cartesian,
    /// Two axes `(r, θ)` mapped to `(r cos θ, r sin θ)`.
    Polar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub coordinates: Coordinates,
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn cartesian(axes: Vec<Axis>) -> Self {
        Self {
            coordinates: Coordinates::Cartesian,
            axes,
        }
    }

    pub fn polar(r: Axis, theta: Axis) -> Self {
        Self {
            coordinates: Coordinates::Polar,
            axes: vec![r, theta],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut errs = Vec::new();
        if self.axes.len() != n {
            errs.push(format!("grid has {} axes, system dimension is {n}", self.axes.len()));
        }
        if self.coordinates == Coordinates::Polar && self.axes.len() != 2 {
            errs.push("polar grids need exactly two axes (r, theta)".into());
        }
        for (i, a) in self.axes.iter().enumerate() {
            if a.count == 0 {
                errs.push(format!("axis {} count must be >= 1", i + 1));
            }
            if !(a.min.is_finite() && a.max.is_finite()) {
                errs.push(format!("axis {} bounds must be finite", i + 1));
            } else if a.max < a.min {
                errs.push(format!("axis {} has max < min", i + 1));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EstimateError::InvalidConfig(errs))
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes in row-major order (last axis varies fastest), as Cartesian states.
    pub fn points(&self) -> Vec<State> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; values.len()];
        if values.iter().any(|v| v.is_empty()) {
            return out;
        }
        loop {
            let coords: Vec<f64> = idx.iter().zip(&values).map(|(i, v)| v[*i]).collect();
            out.push(match self.coordinates {
                Coordinates::Cartesian => State::from_vec(coords),
                Coordinates::Polar => {
                    let (r, th) = (coords[0], coords[1]);
                    State::from_vec(vec![r * th.cos(), r * th.sin()])
                }
            });
            let mut d = values.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < values[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// Analytic reference values for sweep summaries.
pub trait PfOracle: Sync {
    /// `P_j^{k(ℓ)}(x0)` for the mode whose eigenvalue is `target`, or `None`
    /// when it is not available there.
    fn participation(&self, target: Complex64, state_k: usize, perturbed: usize, x0: &State) -> Option<Complex64>;
}

const ORACLE_MATCH_TOL: f64 = 1e-8;

impl PfOracle for SystemBundle {
    fn participation(&self, target: Complex64, state_k: usize, perturbed: usize, x0: &State) -> Option<Complex64> {
        let triple = self.triple_for_eigenvalue(target, ORACLE_MATCH_TOL * (1.0 + target.norm()))?;
        self.analytic_pf(&dynsys::Participation::ModeInState { perturbed }, &triple.index, state_k, x0)
            .ok()
    }
}

/// Classical constant PFs/GPs `u_jℓ·v_jk` of `ẋ = Ax`.
#[derive(Debug, Clone)]
pub struct LtiOracle {
    basis: ModalBasis,
}

impl LtiOracle {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            basis: lti::biorthogonal_eig(a)?,
        })
    }

    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }
}

impl PfOracle for LtiOracle {
    fn participation(&self, target: Complex64, state_k: usize, perturbed: usize, _x0: &State) -> Option<Complex64> {
        let n = self.basis.n();
        if state_k >= n || perturbed >= n {
            return None;
        }
        let tol = ORACLE_MATCH_TOL * (1.0 + target.norm());
        let j = (0..n).find(|&j| (self.basis.eigenvalues()[j] - target).norm() <= tol)?;
        Some(self.basis.left(j)[perturbed] * self.basis.right(j)[state_k])
    }
}

/// Mean of `|P(x0) − P̂(x0)|` over the ok estimates.
pub fn mean_error(estimates: &[PfEstimate], oracle: impl Fn(&State) -> Complex64) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for e in estimates.iter().filter(|e| e.is_ok()) {
        let value = e.value.expect("ok estimates carry a value");
        sum += (oracle(&e.x0) - value).norm();
        count += 1;
    }
    if count == 0 {
        return Err(EstimateError::EmptySet);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryEntry {
    pub target_label: String,
    pub target: Complex64,
    pub state_k: usize,
    pub perturbed: usize,
    /// Absent without an oracle or without ok points.
    pub mean_error: Option<f64>,
    pub matched: usize,
    pub total: usize,
}

impl SummaryEntry {
    /// `P<label>^<k>` or `P<label>^<k>(<ℓ>)`, one-based.
    pub fn quantity(&self) -> String {
        if self.state_k == self.perturbed {
            format!("P{}^{}", self.target_label, self.state_k + 1)
        } else {
            format!("P{}^{}({})", self.target_label, self.state_k + 1, self.perturbed + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfGrid {
    pub grid: GridSpec,
    pub perturbed: usize,
    pub estimates: Vec<PfEstimate>,
    pub summary: Vec<SummaryEntry>,
}

impl PfGrid {
    pub fn summary_for(&self, label: &str, state_k: usize) -> Option<&SummaryEntry> {
        self.summary
            .iter()
            .find(|s| s.target_label == label && s.state_k == state_k)
    }

    pub fn estimates_for<'a>(&'a self, label: &'a str, state_k: usize) -> impl Iterator<Item = &'a PfEstimate> + 'a {
        self.estimates
            .iter()
            .filter(move |e| e.target_label == label && e.state_k == state_k)
    }
}

/// Summary rows per target and state index, in target-major order.
pub fn summarize(
    estimates: &[PfEstimate],
    targets: &[Target],
    n: usize,
    perturbed: usize,
    oracle: Option<&dyn PfOracle>,
) -> Vec<SummaryEntry> {
    let mut out = Vec::new();
    for t in targets {
        for k in 0..n {
            let subset: Vec<PfEstimate> = estimates
                .iter()
                .filter(|e| e.target_label == t.label && e.state_k == k)
                .cloned()
                .collect();
            let matched = subset.iter().filter(|e| e.is_ok()).count();
            // points where the oracle is undefined are left out of the mean
            let mean = oracle.and_then(|o| {
                let usable: Vec<PfEstimate> = subset
                    .iter()
                    .filter(|e| e.is_ok() && o.participation(t.lambda, k, perturbed, &e.x0).is_some())
                    .cloned()
                    .collect();
                mean_error(&usable, |x| {
                    o.participation(t.lambda, k, perturbed, x)
                        .expect("filtered to defined points")
                })
                .ok()
            });
            out.push(SummaryEntry {
                target_label: t.label.clone(),
                target: t.lambda,
                state_k: k,
                perturbed,
                mean_error: mean,
                matched,
                total: subset.len(),
            });
        }
    }
    out
}

/// Runs [`estimate_pf`] at every node of `grid`. `threads = None` uses the
/// global rayon pool.
pub fn grid_sweep(
    field: &VectorField,
    oracle: Option<&dyn PfOracle>,
    grid: &GridSpec,
    perturbed: usize,
    cfg: &EstimationConfig,
    threads: Option<usize>,
) -> Result<PfGrid> {
    cfg.validate()?;
    let n = field.dim();
    grid.validate(n)?;
    if perturbed >= n {
        return Err(EstimateError::PerturbedIndex { index: perturbed, n });
    }
    let points = grid.points();
    let prolonged = dynsys::prolong(field);
    let run = || -> Vec<PfEstimate> {
        points
            .par_iter()
            .map(|x0| estimate_unchecked(&prolonged, x0, perturbed, cfg))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    };
    let estimates = match threads {
        None => run(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| EstimateError::ThreadPool(e.to_string()))?
            .install(run),
    };
    let summary = summarize(&estimates, &cfg.targets, n, perturbed, oracle);
    Ok(PfGrid {
        grid: grid.clone(),
        perturbed,
        estimates,
        summary,
    })
}
