//! Vector fields, fixed-step integration, the prolonged (variational) system
//! and the built-in systems whose Koopman eigenfunctions are known in closed
//! form.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::lti::{self, LtiError};
use crate::numerics::CVector;

pub type State = DVector<f64>;

type RhsFn = dyn Fn(&State) -> State + Send + Sync;
type JacobianFn = dyn Fn(&State) -> DMatrix<f64> + Send + Sync;
type EigenfunctionFn = dyn Fn(&State) -> Result<Complex64> + Send + Sync;
type GradientFn = dyn Fn(&State) -> Result<CVector> + Send + Sync;

/// Step used when a field has no analytic Jacobian.
pub const DEFAULT_FD_EPS: f64 = 1e-6;

/// Radius below which limit-cycle eigenfunctions are not evaluated.
pub const LC_MIN_RADIUS: f64 = 1e-8;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynsysError {
    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },

    #[error("eigenfunction is singular at {0:?}")]
    SingularPoint(Vec<f64>),

    #[error("bundle has no triple with index {0}")]
    UnknownIndex(MultiIndex),

    #[error("state index {index} out of range for dimension {n}")]
    StateIndex { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Lti(#[from] LtiError),
}

pub type Result<T> = std::result::Result<T, DynsysError>;

/// An autonomous system `ẋ = F(x)` with an optional analytic Jacobian.
#[derive(Clone)]
pub struct VectorField {
    name: String,
    n: usize,
    rhs: Arc<RhsFn>,
    jacobian: Option<Arc<JacobianFn>>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new(name: impl Into<String>, n: usize, rhs: impl Fn(&State) -> State + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            n,
            rhs: Arc::new(rhs),
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, jacobian: impl Fn(&State) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// `ẋ = Ax`.
    pub fn linear(name: impl Into<String>, a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "linear field needs a square matrix");
        let n = a.nrows();
        let a_rhs = a.clone();
        Self::new(name, n, move |x| &a_rhs * x).with_jacobian(move |_| a.clone())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, x: &State) -> State {
        (self.rhs)(x)
    }

    /// Analytic Jacobian when available, central differences otherwise.
    pub fn jacobian(&self, x: &State) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => central_differences(self, x, DEFAULT_FD_EPS),
        }
    }
}

fn central_differences(field: &VectorField, x: &State, eps: f64) -> DMatrix<f64> {
    let n = field.n;
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for k in 0..n {
        let orig = xp[k];
        xp[k] = orig + eps;
        let fp = field.eval(&xp);
        xp[k] = orig - eps;
        let fm = field.eval(&xp);
        xp[k] = orig;
        out.set_column(k, &((fp - fm) / (2.0 * eps)));
    }
    out
}

/// Central-difference Jacobian, column by column.
pub fn jacobian_fd(field: &VectorField, x: &State, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0) {
        return Err(DynsysError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if x.len() != field.n {
        return Err(DynsysError::DimensionMismatch {
            expected: field.n,
            got: x.len(),
        });
    }
    let j = central_differences(field, x, eps);
    if j.iter().any(|v| !v.is_finite()) {
        return Err(DynsysError::NonFinite { time: 0.0 });
    }
    Ok(j)
}

/// Uniformly sampled states `y[0..T]` with period `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub samples: Vec<State>,
}

impl Trajectory {
    pub fn new(h: f64, samples: Vec<State>) -> Self {
        Self { h, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

/// Classical fourth-order Runge–Kutta. Records `steps + 1` samples spaced `h`
/// apart, each sample interval split into `substeps` internal steps.
pub fn rk4_integrate(field: &VectorField, x0: &State, h: f64, steps: usize, substeps: usize) -> Result<Trajectory> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(DynsysError::InvalidArgument(format!("sampling period must be positive, got {h}")));
    }
    if substeps == 0 {
        return Err(DynsysError::InvalidArgument("substeps must be at least 1".into()));
    }
    if x0.len() != field.n {
        return Err(DynsysError::DimensionMismatch {
            expected: field.n,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DynsysError::NonFinite { time: 0.0 });
    }

    let dt = h / substeps as f64;
    let mut x = x0.clone();
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(x.clone());
    for step in 0..steps {
        for _ in 0..substeps {
            let k1 = field.eval(&x);
            let k2 = field.eval(&(&x + &k1 * (0.5 * dt)));
            let k3 = field.eval(&(&x + &k2 * (0.5 * dt)));
            let k4 = field.eval(&(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynsysError::NonFinite {
                time: (step + 1) as f64 * h,
            });
        }
        samples.push(x.clone());
    }
    Ok(Trajectory { h, samples })
}

/// The prolonged system `(ẋ, ξ̇) = (F(x), DF(x)·ξ)` of dimension `2n`.
///
/// The result carries no analytic Jacobian; asking for one falls back to
/// central differences of the prolonged right-hand side.
pub fn prolong(field: &VectorField) -> VectorField {
    let n = field.n;
    let inner = field.clone();
    VectorField::new(format!("prolonged({})", field.name), 2 * n, move |y| {
        let x = y.rows(0, n).into_owned();
        let xi = y.rows(n, n);
        let fx = inner.eval(&x);
        let dxi = inner.jacobian(&x) * xi;
        let mut out = State::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&fx);
        out.rows_mut(n, n).copy_from(&dxi);
        out
    })
}

/// Exponents `(j_1, …, j_n)` of a product of principal eigenfunctions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<i32>);

impl MultiIndex {
    /// The unit index `e_j` (zero-based `j`).
    pub fn principal(n: usize, j: usize) -> Self {
        let mut v = vec![0; n];
        v[j] = 1;
        Self(v)
    }

    pub fn is_principal(&self) -> bool {
        self.0.iter().filter(|&&e| e != 0).count() == 1 && self.0.contains(&1)
    }

    /// Zero-based position of the unit entry for principal indices.
    pub fn principal_position(&self) -> Option<usize> {
        if self.is_principal() {
            self.0.iter().position(|&e| e == 1)
        } else {
            None
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for MultiIndex {
    /// Principal indices print as their one-based position (`1`, `2`, …);
    /// higher-order ones as `<02>`, or `<1,-1>` when digits would be ambiguous.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(j) = self.principal_position() {
            return write!(f, "{}", j + 1);
        }
        let plain = self.0.iter().all(|&e| (0..10).contains(&e));
        let body: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        if plain {
            write!(f, "<{}>", body.join(""))
        } else {
            write!(f, "<{}>", body.join(","))
        }
    }
}

/// One Koopman eigenvalue with its eigenfunction, gradient and mode.
#[derive(Clone)]
pub struct KoopmanTriple {
    pub index: MultiIndex,
    pub eigenvalue: Complex64,
    pub mode: CVector,
    eigenfunction: Arc<EigenfunctionFn>,
    gradient: Arc<GradientFn>,
}

impl fmt::Debug for KoopmanTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KoopmanTriple")
            .field("index", &self.index)
            .field("eigenvalue", &self.eigenvalue)
            .field("mode", &self.mode.as_slice())
            .finish()
    }
}

impl KoopmanTriple {
    pub fn new(
        index: MultiIndex,
        eigenvalue: Complex64,
        mode: CVector,
        eigenfunction: impl Fn(&State) -> Result<Complex64> + Send + Sync + 'static,
        gradient: impl Fn(&State) -> Result<CVector> + Send + Sync + 'static,
    ) -> Self {
        Self {
            index,
            eigenvalue,
            mode,
            eigenfunction: Arc::new(eigenfunction),
            gradient: Arc::new(gradient),
        }
    }

    pub fn eval(&self, x: &State) -> Result<Complex64> {
        (self.eigenfunction)(x)
    }

    pub fn gradient(&self, x: &State) -> Result<CVector> {
        (self.gradient)(x)
    }

    /// Display label, e.g. `1` or `<02>`.
    pub fn label(&self) -> String {
        self.index.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttractorKind {
    Equilibrium,
    LimitCycle,
}

/// Which participation quantity [`SystemBundle::analytic_pf`] evaluates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Participation {
    /// `P_j^k = (∂φ_j/∂x_k)·V_jk`
    Pf,
    /// `P_j^{k(ℓ)} = (∂φ_j/∂x_ℓ)·V_jk` with `ℓ = perturbed`.
    ModeInState { perturbed: usize },
    /// `P_{i(j)}^k = (∂φ_j/∂x_k)·V_ik` with `i = source`.
    StateInMode { source: MultiIndex },
}

/// A vector field together with analytic Koopman data.
#[derive(Clone, Debug)]
pub struct SystemBundle {
    pub field: VectorField,
    pub triples: Vec<KoopmanTriple>,
    pub attractor_kind: AttractorKind,
    pub basin_note: String,
    /// Points where eigenfunctions are undefined.
    pub excluded_points: Vec<State>,
    /// Initial states with `‖x‖₂` at or below this radius may have a divergent
    /// Koopman mode expansion.
    pub kmd_convergence_radius: Option<f64>,
}

impl SystemBundle {
    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn triple(&self, index: &MultiIndex) -> Result<&KoopmanTriple> {
        self.triples
            .iter()
            .find(|t| &t.index == index)
            .ok_or_else(|| DynsysError::UnknownIndex(index.clone()))
    }

    /// Triple whose eigenvalue is closest to `lambda`, if within `tol`.
    pub fn triple_for_eigenvalue(&self, lambda: Complex64, tol: f64) -> Option<&KoopmanTriple> {
        self.triples
            .iter()
            .map(|t| (t, (t.eigenvalue - lambda).norm()))
            .filter(|(_, d)| *d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(t, _)| t)
    }

    fn check_state(&self, x: &State) -> Result<()> {
        if x.len() != self.dim() {
            return Err(DynsysError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate_eigenfunction(&self, index: &MultiIndex, x: &State) -> Result<Complex64> {
        self.check_state(x)?;
        self.triple(index)?.eval(x)
    }

    pub fn eigenfunction_gradient(&self, index: &MultiIndex, x: &State) -> Result<CVector> {
        self.check_state(x)?;
        self.triple(index)?.gradient(x)
    }

    /// Closed-form PF or GP at `x`. `state_k` and `perturbed` are zero-based.
    pub fn analytic_pf(&self, kind: &Participation, mode: &MultiIndex, state_k: usize, x: &State) -> Result<Complex64> {
        self.check_state(x)?;
        let n = self.dim();
        let in_range = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(DynsysError::StateIndex { index: i, n })
            }
        };
        in_range(state_k)?;
        let triple = self.triple(mode)?;
        let grad = triple.gradient(x)?;
        Ok(match kind {
            Participation::Pf => grad[state_k] * triple.mode[state_k],
            Participation::ModeInState { perturbed } => {
                in_range(*perturbed)?;
                grad[*perturbed] * triple.mode[state_k]
            }
            Participation::StateInMode { source } => grad[state_k] * self.triple(source)?.mode[state_k],
        })
    }

    /// Warning for initial states outside the region where the truncated
    /// Koopman mode expansion is known to converge.
    pub fn domain_warning(&self, x: &State) -> Option<String> {
        let radius = self.kmd_convergence_radius?;
        let r = x.norm();
        (r <= radius).then(|| {
            format!(
                "{}: |x0| = {r:.4} <= {radius:.4}; Koopman mode expansion may not converge here",
                self.field.name()
            )
        })
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cvec(v: &[Complex64]) -> CVector {
    CVector::from_column_slice(v)
}

/// `ẋ₁ = −x₁ + x₂²`, `ẋ₂ = −√2·x₂`: a globally stable equilibrium at the origin.
pub fn ep_field() -> VectorField {
    VectorField::new("ex1_ep", 2, |x| {
        State::from_vec(vec![-x[0] + x[1] * x[1], -SQRT_2 * x[1]])
    })
    .with_jacobian(|x| DMatrix::from_row_slice(2, 2, &[-1.0, 2.0 * x[1], 0.0, -SQRT_2]))
}

/// Coefficient `(1 + 2√2)/7` of `x₂²` in the first principal eigenfunction.
pub fn ep_coefficient() -> f64 {
    (1.0 + 2.0 * SQRT_2) / 7.0
}

/// Equilibrium example with eigenvalues `−1`, `−√2` and the higher-order
/// eigenvalue `−2√2` of `φ₂²`.
pub fn ep_system() -> SystemBundle {
    let k = ep_coefficient();
    let phi1 = KoopmanTriple::new(
        MultiIndex(vec![1, 0]),
        c(-1.0, 0.0),
        cvec(&[c(1.0, 0.0), c(0.0, 0.0)]),
        move |x| Ok(c(x[0] + k * x[1] * x[1], 0.0)),
        move |x| Ok(cvec(&[c(1.0, 0.0), c(2.0 * k * x[1], 0.0)])),
    );
    let phi2 = KoopmanTriple::new(
        MultiIndex(vec![0, 1]),
        c(-SQRT_2, 0.0),
        cvec(&[c(0.0, 0.0), c(1.0, 0.0)]),
        |x| Ok(c(x[1], 0.0)),
        |_| Ok(cvec(&[c(0.0, 0.0), c(1.0, 0.0)])),
    );
    let phi02 = KoopmanTriple::new(
        MultiIndex(vec![0, 2]),
        c(-2.0 * SQRT_2, 0.0),
        cvec(&[c(-k, 0.0), c(0.0, 0.0)]),
        |x| Ok(c(x[1] * x[1], 0.0)),
        |x| Ok(cvec(&[c(0.0, 0.0), c(2.0 * x[1], 0.0)])),
    );
    SystemBundle {
        field: ep_field(),
        triples: vec![phi1, phi2, phi02],
        attractor_kind: AttractorKind::Equilibrium,
        basin_note: "globally stable equilibrium at the origin; eigenfunctions are polynomial and defined on all of R^2".into(),
        excluded_points: Vec::new(),
        kmd_convergence_radius: None,
    }
}

/// `ẋ₁ = x₁ − x₂ − x₁r²`, `ẋ₂ = x₁ + x₂ − x₂r²`: a stable limit cycle on the unit circle.
pub fn lc_field() -> VectorField {
    VectorField::new("ex2_lc", 2, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        State::from_vec(vec![x[0] - x[1] - x[0] * r2, x[0] + x[1] - x[1] * r2])
    })
    .with_jacobian(|x| {
        let (a, b) = (x[0], x[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[1.0 - 3.0 * a * a - b * b, -1.0 - 2.0 * a * b, 1.0 - 2.0 * a * b, 1.0 - a * a - 3.0 * b * b],
        )
    })
}

struct Polar {
    r: f64,
    theta: f64,
}

fn polar(x: &State) -> Result<Polar> {
    let r = x[0].hypot(x[1]);
    if !(r >= LC_MIN_RADIUS) {
        return Err(DynsysError::SingularPoint(x.iter().copied().collect()));
    }
    Ok(Polar {
        r,
        theta: x[1].atan2(x[0]),
    })
}

// φ₁ = e^{iθ}; ∇θ = (−sinθ, cosθ)/r
fn lc_phi1(x: &State) -> Result<(Complex64, CVector)> {
    let p = polar(x)?;
    let e = Complex64::from_polar(1.0, p.theta);
    let ie = c(0.0, 1.0) * e;
    let grad = cvec(&[ie * (-p.theta.sin() / p.r), ie * (p.theta.cos() / p.r)]);
    Ok((e, grad))
}

// φ₂ = (r² − 1)/r²; ∇φ₂ = 2x/r⁴
fn lc_phi2(x: &State) -> Result<(Complex64, CVector)> {
    let p = polar(x)?;
    let r2 = p.r * p.r;
    let r4 = r2 * r2;
    let grad = cvec(&[c(2.0 * x[0] / r4, 0.0), c(2.0 * x[1] / r4, 0.0)]);
    Ok((c((r2 - 1.0) / r2, 0.0), grad))
}

/// Limit-cycle example: `λ₁ = i` with `φ₁ = e^{iθ}`, `λ₂ = −2` with
/// `φ₂ = (r²−1)/r²`, and the product `φ₁φ₂` with eigenvalue `i − 2`.
pub fn lc_system() -> SystemBundle {
    // x = (r/2)(e^{iθ} + e^{−iθ}, −i e^{iθ} + i e^{−iθ}); V_j1 = i·V_j2
    let v1 = cvec(&[c(0.5, 0.0), c(0.0, -0.5)]);
    let v11 = cvec(&[c(0.25, 0.0), c(0.0, -0.25)]);
    let phi1 = KoopmanTriple::new(
        MultiIndex(vec![1, 0]),
        c(0.0, 1.0),
        v1,
        |x| lc_phi1(x).map(|p| p.0),
        |x| lc_phi1(x).map(|p| p.1),
    );
    let phi2 = KoopmanTriple::new(
        MultiIndex(vec![0, 1]),
        c(-2.0, 0.0),
        CVector::zeros(2),
        |x| lc_phi2(x).map(|p| p.0),
        |x| lc_phi2(x).map(|p| p.1),
    );
    let phi11 = KoopmanTriple::new(
        MultiIndex(vec![1, 1]),
        c(-2.0, 1.0),
        v11,
        |x| Ok(lc_phi1(x)?.0 * lc_phi2(x)?.0),
        |x| {
            let (f1, g1) = lc_phi1(x)?;
            let (f2, g2) = lc_phi2(x)?;
            Ok(g1 * f2 + g2 * f1)
        },
    );
    SystemBundle {
        field: lc_field(),
        triples: vec![phi1, phi2, phi11],
        attractor_kind: AttractorKind::LimitCycle,
        basin_note: "stable limit cycle on the unit circle; basin is R^2 minus the origin. \
                     The Koopman mode expansion of the radius converges for r0 > 1/sqrt(2)"
            .into(),
        excluded_points: vec![State::zeros(2)],
        kmd_convergence_radius: Some(std::f64::consts::FRAC_1_SQRT_2),
    }
}

/// Wraps `ẋ = Ax` as a bundle with `φ_j(x) = u_jᵀx` and `V_j = v_j`.
pub fn linear_bundle(name: impl Into<String>, a: &DMatrix<f64>) -> Result<SystemBundle> {
    let basis = lti::biorthogonal_eig(a)?;
    let n = basis.n();
    let triples = (0..n)
        .map(|j| {
            let u = basis.left(j).clone();
            let u_grad = u.clone();
            KoopmanTriple::new(
                MultiIndex::principal(n, j),
                basis.eigenvalues()[j],
                basis.right(j).clone(),
                move |x| Ok((u.transpose() * x.map(|v| c(v, 0.0)))[(0, 0)]),
                move |_| Ok(u_grad.clone()),
            )
        })
        .collect();
    Ok(SystemBundle {
        field: VectorField::linear(name, a.clone()),
        triples,
        attractor_kind: AttractorKind::Equilibrium,
        basin_note: "linear system; eigenfunctions are global linear forms".into(),
        excluded_points: Vec::new(),
        kmd_convergence_radius: None,
    })
}
