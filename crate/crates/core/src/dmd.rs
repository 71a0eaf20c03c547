//! Prony-type dynamic mode decomposition of a single uniformly sampled
//! trajectory.
//!
//! Given `2N` samples `y[0..2N]`, the characteristic coefficients `p` solve the
//! block-Hankel least-squares problem `H·p ≈ b`, the DMD eigenvalues `ρ̂_j` are
//! the roots of `z^N + p_{N−1}z^{N−1} + … + p_0`, and the modes `V̂_j` come from
//! `[y[0] … y[N−1]] = [V̂_1 … V̂_N]·T` with the Vandermonde matrix `T_jt = ρ̂_j^t`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::dynsys::Trajectory;
use crate::numerics::{self, CMatrix, CVector, LstsqMethod, NumericsError};

/// DMD eigenvalues closer than this are treated as coincident.
pub const COINCIDENT_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmdStep {
    Hankel,
    Characteristic,
    Companion,
    Vandermonde,
}

impl fmt::Display for DmdStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DmdStep::Hankel => "hankel assembly",
            DmdStep::Characteristic => "characteristic fit",
            DmdStep::Companion => "companion eigenvalues",
            DmdStep::Vandermonde => "vandermonde modes",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DmdError {
    #[error("need an even, non-zero number of samples, got {0}")]
    OddLength(usize),

    #[error("samples have inconsistent dimensions")]
    RaggedSamples,

    #[error("eigenvalues {a} and {b} coincide; Vandermonde matrix is singular")]
    CoincidentEigenvalues { a: Complex64, b: Complex64 },

    #[error("{step}: {source}")]
    Step {
        step: DmdStep,
        #[source]
        source: NumericsError,
    },
}

impl DmdError {
    fn at(step: DmdStep) -> impl FnOnce(NumericsError) -> DmdError {
        move |source| DmdError::Step { step, source }
    }

    /// The failing stage, when the error came from one.
    pub fn step(&self) -> Option<DmdStep> {
        match self {
            DmdError::OddLength(_) | DmdError::RaggedSamples => Some(DmdStep::Hankel),
            DmdError::CoincidentEigenvalues { .. } => Some(DmdStep::Vandermonde),
            DmdError::Step { step, .. } => Some(*step),
        }
    }
}

pub type Result<T> = std::result::Result<T, DmdError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmdOptions {
    /// Solver for the characteristic coefficients.
    pub solver: LstsqMethod,
}

impl Default for DmdOptions {
    /// Minimum-norm solve: long windows of decaying exponentials give Hankel
    /// matrices whose numerical rank is far below `N`.
    fn default() -> Self {
        Self {
            solver: LstsqMethod::MinimumNorm,
        }
    }
}

/// Output of [`prony_dmd`].
#[derive(Debug, Clone, PartialEq)]
pub struct DmdSpectrum {
    pub h: f64,
    /// Discrete eigenvalues, sorted by descending magnitude then ascending argument.
    pub rho: Vec<Complex64>,
    /// `ln(ρ̂_j)/h` on the principal branch.
    pub lambda: Vec<Complex64>,
    pub modes: Vec<CVector>,
    /// Characteristic coefficients `p_0 … p_{N−1}`.
    pub coefficients: DVector<f64>,
    /// `max_t ‖y[t] − Σ_j ρ̂_j^t V̂_j‖∞` over every input sample.
    pub residual: f64,
    /// Numerical rank of the Hankel matrix.
    pub rank: usize,
    /// Singular-value ratio of the Hankel matrix.
    pub condition: f64,
}

impl DmdSpectrum {
    pub fn order(&self) -> usize {
        self.rho.len()
    }

    /// `Σ_j ρ̂_j^t V̂_j`.
    pub fn reconstruct(&self, t: usize) -> CVector {
        let dim = self.modes.first().map_or(0, |m| m.len());
        let mut out = CVector::zeros(dim);
        for (rho, mode) in self.rho.iter().zip(&self.modes) {
            out += mode * rho.powu(t as u32);
        }
        out
    }
}

fn check_samples(y: &Trajectory) -> Result<usize> {
    let len = y.len();
    if len == 0 || !len.is_multiple_of(2) {
        return Err(DmdError::OddLength(len));
    }
    let d = y.dimension();
    if y.samples.iter().any(|s| s.len() != d) {
        return Err(DmdError::RaggedSamples);
    }
    Ok(len / 2)
}

/// Block-Hankel matrix `H` (`N·d × N`) and right-hand side `b = −(y[N]; …; y[2N−1])`.
pub fn build_hankel(y: &Trajectory) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let order = check_samples(y)?;
    let d = y.dimension();
    let mut h = DMatrix::zeros(order * d, order);
    let mut b = DVector::zeros(order * d);
    for i in 0..order {
        for j in 0..order {
            h.view_mut((i * d, j), (d, 1)).copy_from(&y.samples[i + j]);
        }
        b.rows_mut(i * d, d).copy_from(&(-&y.samples[order + i]));
    }
    Ok((h, b))
}

/// Least-squares characteristic coefficients `p`.
pub fn fit_characteristic(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    solver: LstsqMethod,
) -> Result<numerics::LstsqFit<f64>> {
    numerics::least_squares_with(h, b, solver).map_err(DmdError::at(DmdStep::Characteristic))
}

/// Companion matrix with ones on the sub-diagonal and `−p` in the last column.
pub fn companion_matrix(p: &DVector<f64>) -> DMatrix<f64> {
    let n = p.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -p[i];
    }
    c
}

fn spectral_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.norm().total_cmp(&a.norm()).then(a.arg().total_cmp(&b.arg()))
}

/// Roots of the characteristic polynomial, sorted by descending magnitude
/// then ascending argument.
pub fn companion_eigenvalues(p: &DVector<f64>) -> Result<Vec<Complex64>> {
    if p.is_empty() {
        return Err(DmdError::OddLength(0));
    }
    let mut rho: Vec<Complex64> = numerics::eig_real(&companion_matrix(p))
        .map_err(DmdError::at(DmdStep::Companion))?
        .into_iter()
        .map(|pair| {
            let mut z = pair.value;
            // turns -0.0 into +0.0 so negative reals map to arg = +π
            if z.im == 0.0 {
                z.im = 0.0;
            }
            z
        })
        .collect();
    rho.sort_by(spectral_order);
    Ok(rho)
}

/// Modes `[V̂_1 … V̂_N] = [y[0] … y[N−1]]·T⁻¹`.
pub fn vandermonde_modes(y: &Trajectory, rho: &[Complex64]) -> Result<Vec<CVector>> {
    let order = rho.len();
    if order == 0 || y.len() < order {
        return Err(DmdError::OddLength(y.len()));
    }
    for (i, a) in rho.iter().enumerate() {
        if let Some(b) = rho[i + 1..].iter().find(|b| (*b - a).norm() < COINCIDENT_GAP) {
            return Err(DmdError::CoincidentEigenvalues { a: *a, b: *b });
        }
    }
    let d = y.dimension();
    let t = CMatrix::from_fn(order, order, |j, k| rho[j].powu(k as u32));
    let data = CMatrix::from_fn(d, order, |r, k| Complex64::new(y.samples[k][r], 0.0));
    let modes = numerics::solve_linear(&t, &data).map_err(DmdError::at(DmdStep::Vandermonde))?;
    Ok(modes.column_iter().map(|c| c.into_owned()).collect())
}

/// Principal-branch continuous-time eigenvalue `ln(ρ)/h`.
pub fn continuous_eigenvalue(rho: Complex64, h: f64) -> Complex64 {
    rho.ln() / h
}

pub fn prony_dmd(y: &Trajectory) -> Result<DmdSpectrum> {
    prony_dmd_with(y, DmdOptions::default())
}

pub fn prony_dmd_with(y: &Trajectory, options: DmdOptions) -> Result<DmdSpectrum> {
    let (h, b) = build_hankel(y)?;
    let fit = fit_characteristic(&h, &b, options.solver)?;
    let rho = companion_eigenvalues(&fit.x)?;
    let modes = vandermonde_modes(y, &rho)?;
    let lambda = rho.iter().map(|r| continuous_eigenvalue(*r, y.h)).collect();
    let mut spectrum = DmdSpectrum {
        h: y.h,
        rho,
        lambda,
        modes,
        coefficients: fit.x,
        residual: 0.0,
        rank: fit.rank,
        condition: fit.condition,
    };
    spectrum.residual = y
        .samples
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let recon = spectrum.reconstruct(t);
            s.iter()
                .zip(recon.iter())
                .map(|(a, r)| (Complex64::new(*a, 0.0) - r).norm())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(spectrum)
}
