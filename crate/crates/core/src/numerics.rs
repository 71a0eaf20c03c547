//! Dense linear algebra shared by the rest of the crate.
//!
//! Everything here is a pure function over `nalgebra` matrices. Real data is
//! handled through the same generic routines as complex data wherever the
//! scalar type only needs to be a [`ComplexField`].

use nalgebra::{ComplexField, DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_RTOL: f64 = 1e-12;

const SCHUR_MAX_ITER: usize = 10_000;
const SVD_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("eigensolver did not converge (n = {n}, inf-norm = {norm:.3e})")]
    NonConvergence { n: usize, norm: f64 },

    #[error("rank deficient: numerical rank {rank} < {cols} columns (condition estimate {condition:.3e})")]
    RankDeficient {
        rank: usize,
        cols: usize,
        condition: f64,
    },

    #[error("matrix is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// One eigenvalue with its unit-norm right eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: CVector,
}

/// How an over-determined system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LstsqMethod {
    /// Householder QR. Rejects numerically rank-deficient inputs.
    #[default]
    Orthogonal,
    /// The explicit `(AᴴA)⁻¹Aᴴb` formula. Rejects rank-deficient inputs.
    NormalEquations,
    /// Minimum-norm solution at the numerical rank, via a complete
    /// orthogonal decomposition. Accepts rank deficiency and
    /// only fails when the numerical rank is zero.
    MinimumNorm,
}

/// A least-squares solution together with the rank diagnostics of `A`.
#[derive(Debug, Clone)]
pub struct LstsqFit<T: ComplexField> {
    pub x: DVector<T>,
    pub rank: usize,
    /// Ratio of extreme singular values; infinite when the smallest is zero.
    pub condition: f64,
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn inf_norm<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm<T: ComplexField<RealField = f64>>(v: &DVector<T>) -> f64 {
    v.iter().map(|x| x.clone().modulus()).fold(0.0, f64::max)
}

fn all_finite<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| {
        let re = v.clone().real();
        let im = v.clone().imaginary();
        re.is_finite() && im.is_finite()
    })
}

/// Singular values in descending order.
pub fn singular_values<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<Vec<f64>> {
    if !all_finite(m) {
        return Err(NumericsError::NonFinite);
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, SVD_MAX_ITER).ok_or(
        NumericsError::NonConvergence {
            n: m.nrows().max(m.ncols()),
            norm: inf_norm(m),
        },
    )?;
    Ok(svd.singular_values.iter().copied().collect())
}

fn rank_and_condition(sv: &[f64]) -> (usize, f64) {
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (0, f64::INFINITY);
    }
    let rank = sv.iter().filter(|&&s| s > RANK_RTOL * smax).count();
    (rank, smax / smin)
}

/// Rotates `v` so it has unit 2-norm and its largest-magnitude entry is real
/// and positive. Ties go to the lowest index.
pub fn normalize_phase(v: &mut CVector) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    let mut pivot = 0;
    let mut best = -1.0;
    for (i, x) in v.iter().enumerate() {
        // small slack keeps the choice stable under rounding
        if x.norm() > best * (1.0 + 1e-12) {
            best = x.norm();
            pivot = i;
        }
    }
    let phase = v[pivot] / v[pivot].norm();
    let scale = phase.conj() / norm;
    v.iter_mut().for_each(|x| *x *= scale);
}

/// General complex eigen-decomposition.
///
/// Eigenvalues come from a complex Schur form `M = Q T Qᴴ`; eigenvectors are
/// obtained by back substitution on the triangular factor and mapped back
/// through `Q`. The returned order is the diagonal order of `T`.
pub fn eig_general(m: &CMatrix) -> Result<Vec<EigenPair>> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(NumericsError::NotSquare { rows, cols });
    }
    if !all_finite(m) {
        return Err(NumericsError::NonFinite);
    }
    let n = rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let norm = inf_norm(m);
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(NumericsError::NonConvergence { n, norm })?;
    let (q, t) = schur.unpack();

    let small = f64::EPSILON * norm.max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut y = CVector::zeros(n);
        y[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < small {
                d = Complex64::new(small, 0.0);
            }
            y[i] = -s / d;
        }
        let mut v = &q * y;
        normalize_phase(&mut v);
        out.push(EigenPair { value: lambda, vector: v });
    }
    Ok(out)
}

/// Eigenpairs of a real matrix. Complex eigenvalues are returned as exact
/// conjugate pairs and real eigenvalues with a zero imaginary part, so that
/// orderings keyed on the real part are stable.
pub fn eig_real(m: &DMatrix<f64>) -> Result<Vec<EigenPair>> {
    let mut pairs = eig_general(&to_complex(m))?;
    let scale = inf_norm(m).max(1.0);
    let n = pairs.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] || pairs[i].value.im <= 1e-12 * scale {
            continue;
        }
        let target = pairs[i].value.conj();
        let partner = (0..n)
            .filter(|&j| j != i && !done[j])
            .map(|j| (j, (pairs[j].value - target).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .filter(|(_, d)| *d <= 1e-6 * scale);
        if let Some((j, _)) = partner {
            pairs[j] = EigenPair {
                value: target,
                vector: pairs[i].vector.map(|z| z.conj()),
            };
            done[i] = true;
            done[j] = true;
        }
    }
    for (i, p) in pairs.iter_mut().enumerate() {
        if !done[i] && p.value.im.abs() <= 1e-12 * scale {
            p.value.im = 0.0;
        }
    }
    Ok(pairs)
}

/// Least squares with the default orthogonal-factorization solve.
pub fn least_squares<T>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>>
where
    T: ComplexField<RealField = f64>,
{
    least_squares_with(a, b, LstsqMethod::Orthogonal).map(|fit| fit.x)
}

pub fn least_squares_with<T>(a: &DMatrix<T>, b: &DVector<T>, method: LstsqMethod) -> Result<LstsqFit<T>>
where
    T: ComplexField<RealField = f64>,
{
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(NumericsError::DimensionMismatch(format!(
            "A has {m} rows but b has length {}",
            b.len()
        )));
    }
    if m < n {
        return Err(NumericsError::DimensionMismatch(format!(
            "under-determined system: {m} rows < {n} columns"
        )));
    }
    if !all_finite(a) || !all_finite(&DMatrix::from_column_slice(m, 1, b.as_slice())) {
        return Err(NumericsError::NonFinite);
    }
    let sv = singular_values(a)?;
    let (rank, condition) = rank_and_condition(&sv);
    let deficient = NumericsError::RankDeficient {
        rank,
        cols: n,
        condition,
    };

    let x = match method {
        LstsqMethod::Orthogonal => {
            if rank < n {
                return Err(deficient);
            }
            let qr = a.clone().qr();
            let qtb = qr.q().adjoint() * b;
            qr.r().solve_upper_triangular(&qtb).ok_or(deficient)?
        }
        LstsqMethod::NormalEquations => {
            if rank < n {
                return Err(deficient);
            }
            let ah = a.adjoint();
            (&ah * a).lu().solve(&(&ah * b)).ok_or(deficient)?
        }
        LstsqMethod::MinimumNorm => {
            if rank == 0 {
                return Err(deficient);
            }
            minimum_norm(a, b, rank).ok_or(deficient)?
        }
    };
    Ok(LstsqFit { x, rank, condition })
}

/// Complete orthogonal decomposition: `A·P = Q·[R₁; 0]` with `R₁` of the
/// given rank, then `R₁ᴴ = Z·T` so that `x = P·Z·T⁻ᴴ·(Qᴴb)₁`. nalgebra's SVD
/// solve loses several digits along small singular directions; this does not.
fn minimum_norm<T>(a: &DMatrix<T>, b: &DVector<T>, rank: usize) -> Option<DVector<T>>
where
    T: ComplexField<RealField = f64>,
{
    let cp = a.clone().col_piv_qr();
    let qtb = cp.q().adjoint() * b;
    let r1 = cp.r().rows(0, rank).into_owned();
    let zt = r1.adjoint().qr();
    let w = zt.r().adjoint().solve_lower_triangular(&qtb.rows(0, rank).into_owned())?;
    let mut x = zt.q() * w;
    cp.p().inv_permute_rows(&mut x);
    Some(x)
}

/// Right division: returns `X` with `X·T = B`.
pub fn solve_linear(t: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let (rows, cols) = t.shape();
    if rows != cols {
        return Err(NumericsError::NotSquare { rows, cols });
    }
    if b.ncols() != rows {
        return Err(NumericsError::DimensionMismatch(format!(
            "B has {} columns but T is {rows}x{rows}",
            b.ncols()
        )));
    }
    if !all_finite(t) || !all_finite(b) {
        return Err(NumericsError::NonFinite);
    }
    let sv = singular_values(t)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if smax == 0.0 || smin <= rows as f64 * f64::EPSILON * smax {
        return Err(NumericsError::Singular { condition });
    }
    // X·T = B  <=>  Tᵀ·Xᵀ = Bᵀ
    let xt = t
        .transpose()
        .lu()
        .solve(&b.transpose())
        .ok_or(NumericsError::Singular { condition })?;
    Ok(xt.transpose())
}
