//! Classical participation factors for linear time-invariant systems `ẋ = Ax`.
//!
//! A [`ModalBasis`] holds right eigenvectors `v_j` and left eigenvectors `u_j`
//! scaled so that `u_jᵀ v_k = δ_jk`. All participation quantities are bilinear
//! in `(u_j, v_j)` and therefore invariant under `v_j → c·v_j`, `u_j → u_j/c`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::{self, CMatrix, CVector, NumericsError};

/// Relative separation below which two eigenvalues are treated as repeated.
pub const REPEATED_RTOL: f64 = 1e-8;

/// `1/|uᵀv|` for unit vectors above this marks a numerically defective eigenvalue.
const MAX_EIGEN_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LtiError {
    #[error("state matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("repeated or defective eigenvalues near {a} and {b}")]
    RepeatedEigenvalues { a: Complex64, b: Complex64 },

    #[error("could not pair left and right eigenvectors for eigenvalue {0}")]
    Pairing(Complex64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Eigentriples `(λ_j, v_j, u_j)` with `u_jᵀ v_k = δ_jk`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    eigenvalues: Vec<Complex64>,
    right: Vec<CVector>,
    left: Vec<CVector>,
}

impl ModalBasis {
    /// Builds a basis from raw triples without re-normalizing them. Used for
    /// rescaling experiments; the caller is responsible for biorthogonality.
    pub fn from_parts(eigenvalues: Vec<Complex64>, right: Vec<CVector>, left: Vec<CVector>) -> Self {
        assert_eq!(eigenvalues.len(), right.len());
        assert_eq!(eigenvalues.len(), left.len());
        Self {
            eigenvalues,
            right,
            left,
        }
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn right(&self, j: usize) -> &CVector {
        &self.right[j]
    }

    pub fn left(&self, j: usize) -> &CVector {
        &self.left[j]
    }

    /// `max |u_jᵀ v_k − δ_jk|`.
    pub fn biorthogonality_error(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                let dot = self.left[j].transpose() * &self.right[k];
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((dot[(0, 0)] - target).norm());
            }
        }
        worst
    }
}

/// A rank-3 complex tensor of side `n`, indexed `(a, b, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<Complex64>,
}

impl Tensor3 {
    fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> Complex64 {
        self.data[(a * self.n + b) * self.n + c]
    }

    fn set(&mut self, a: usize, b: usize, c: usize, v: Complex64) {
        self.data[(a * self.n + b) * self.n + c] = v;
    }

    /// The `n×n` slice with the first index fixed.
    pub fn slice(&self, a: usize) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |b, c| self.get(a, b, c))
    }
}

/// PFs and both kinds of generalized participation.
///
/// * `pf[(j, k)] = u_jk·v_jk`
/// * `gp_mode_in_state.get(j, k, l) = u_jl·v_jk` (change in `x_l`, seen in `x_k` through mode `j`)
/// * `gp_state_in_mode.get(i, j, k) = u_jk·v_ik` (mode `i` acting on mode `j` through `x_k`)
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationTensors {
    pub pf: CMatrix,
    pub gp_mode_in_state: Tensor3,
    pub gp_state_in_mode: Tensor3,
}

fn sort_key(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im))
}

fn too_close(a: Complex64, b: Complex64) -> bool {
    let scale = a.norm().max(b.norm()).max(1.0);
    (a - b).norm() <= REPEATED_RTOL * scale
}

/// Eigen-decomposes `A` into a biorthogonally normalized modal basis.
///
/// Left eigenvectors are right eigenvectors of `Aᵀ`, paired to the right set by
/// eigenvalue proximity and rescaled so that `u_jᵀ v_j = 1`. Eigenvalues are
/// ordered by descending real part, then ascending imaginary part.
pub fn biorthogonal_eig(a: &DMatrix<f64>) -> Result<ModalBasis, LtiError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(LtiError::NotSquare { rows, cols });
    }
    let mut right = numerics::eig_real(a)?;
    let left = numerics::eig_real(&a.transpose())?;
    right.sort_by(|p, q| sort_key(&p.value, &q.value));

    for (i, p) in right.iter().enumerate() {
        for q in &right[i + 1..] {
            if too_close(p.value, q.value) {
                return Err(LtiError::RepeatedEigenvalues { a: p.value, b: q.value });
            }
        }
    }

    let mut used = vec![false; left.len()];
    let mut eigenvalues = Vec::with_capacity(rows);
    let mut rights = Vec::with_capacity(rows);
    let mut lefts = Vec::with_capacity(rows);
    let scale = numerics::inf_norm(a).max(1.0);
    for p in right {
        let (idx, dist) = left
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, q)| (i, (q.value - p.value).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .ok_or(LtiError::Pairing(p.value))?;
        if dist > 1e-6 * scale {
            return Err(LtiError::Pairing(p.value));
        }
        used[idx] = true;
        let u = &left[idx].vector;
        let dot = (u.transpose() * &p.vector)[(0, 0)];
        if dot.norm() * MAX_EIGEN_CONDITION < 1.0 {
            // left and right vectors nearly orthogonal: a Jordan block in disguise
            return Err(LtiError::RepeatedEigenvalues { a: p.value, b: left[idx].value });
        }
        lefts.push(u / dot);
        rights.push(p.vector);
        eigenvalues.push(p.value);
    }

    // conjugate consistency for a real matrix
    for lam in &eigenvalues {
        if lam.im != 0.0 && !eigenvalues.iter().any(|m| (m - lam.conj()).norm() <= 1e-6 * scale) {
            return Err(LtiError::Pairing(*lam));
        }
    }

    Ok(ModalBasis {
        eigenvalues,
        right: rights,
        left: lefts,
    })
}

/// `P_j^k = u_jk·v_jk`, laid out with modes as rows and states as columns.
pub fn mode_in_state_pf(basis: &ModalBasis) -> CMatrix {
    let n = basis.n();
    CMatrix::from_fn(n, n, |j, k| basis.left[j][k] * basis.right[j][k])
}

pub fn generalized_participations(basis: &ModalBasis) -> ParticipationTensors {
    let n = basis.n();
    let pf = mode_in_state_pf(basis);
    let mut mis = Tensor3::zeros(n);
    let mut sim = Tensor3::zeros(n);
    for j in 0..n {
        for k in 0..n {
            for l in 0..n {
                let v = if l == k { pf[(j, k)] } else { basis.left[j][l] * basis.right[j][k] };
                mis.set(j, k, l, v);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = if i == j { pf[(j, k)] } else { basis.left[j][k] * basis.right[i][k] };
                sim.set(i, j, k, v);
            }
        }
    }
    ParticipationTensors {
        pf,
        gp_mode_in_state: mis,
        gp_state_in_mode: sim,
    }
}

fn check_len(basis: &ModalBasis, got: usize) -> Result<(), LtiError> {
    if basis.n() != got {
        return Err(LtiError::DimensionMismatch {
            expected: basis.n(),
            got,
        });
    }
    Ok(())
}

/// `Σ_j e^{λ_j t}(u_jᵀx0)v_j` before discarding the imaginary part.
pub fn modal_solution_complex(basis: &ModalBasis, x0: &DVector<f64>, t: f64) -> Result<CVector, LtiError> {
    check_len(basis, x0.len())?;
    let x0c = x0.map(|v| Complex64::new(v, 0.0));
    let mut out = CVector::zeros(basis.n());
    for j in 0..basis.n() {
        let z0 = (basis.left[j].transpose() * &x0c)[(0, 0)];
        out += &basis.right[j] * ((basis.eigenvalues[j] * t).exp() * z0);
    }
    Ok(out)
}

/// Solution of `ẋ = Ax` from `x0`, expanded on the modal basis.
pub fn modal_solution(basis: &ModalBasis, x0: &DVector<f64>, t: f64) -> Result<DVector<f64>, LtiError> {
    Ok(modal_solution_complex(basis, x0, t)?.map(|v| v.re))
}

/// Variation of state and modal trajectories after an initial change `δx`,
/// written in terms of PFs and mode-in-state GPs.
pub fn variational_response(
    basis: &ModalBasis,
    delta_x: &DVector<f64>,
    t: f64,
) -> Result<(DVector<f64>, CVector), LtiError> {
    check_len(basis, delta_x.len())?;
    let n = basis.n();
    let tensors = generalized_participations(basis);
    let growth: Vec<Complex64> = basis.eigenvalues.iter().map(|l| (l * t).exp()).collect();

    let mut dx = CVector::zeros(n);
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += growth[j] * tensors.pf[(j, k)] * delta_x[k];
            for l in (0..n).filter(|&l| l != k) {
                acc += growth[j] * tensors.gp_mode_in_state.get(j, k, l) * delta_x[l];
            }
        }
        dx[k] = acc;
    }

    let dxc = delta_x.map(|v| Complex64::new(v, 0.0));
    let dz = CVector::from_fn(n, |j, _| {
        let row_sum: Complex64 = tensors.pf.row(j).iter().sum();
        let dz0 = (basis.left[j].transpose() * &dxc)[(0, 0)];
        growth[j] * row_sum * dz0
    });
    Ok((dx.map(|v| v.re), dz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn diagonal_basis_is_canonical() {
        let a = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let basis = biorthogonal_eig(&a).unwrap();
        assert!((basis.eigenvalues()[0] - c(-1.0)).norm() < 1e-14);
        assert!((basis.eigenvalues()[1] - c(-2.0)).norm() < 1e-14);
        for j in 0..2 {
            for k in 0..2 {
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((basis.right(j)[k] - c(e)).norm() < 1e-14);
                assert!((basis.left(j)[k] - c(e)).norm() < 1e-14);
            }
        }
        let pf = mode_in_state_pf(&basis);
        assert!((pf - CMatrix::identity(2, 2)).camax() < 1e-14);
    }

    #[test]
    fn hand_oracle_two_by_two() {
        // v1 = (1,-1), u1 = (2,1); v2 = (1,-2), u2 = (-1,-1)
        let a = dmatrix![0.0, 1.0; -2.0, -3.0];
        let basis = biorthogonal_eig(&a).unwrap();
        assert!((basis.eigenvalues()[0] - c(-1.0)).norm() < 1e-12);
        assert!((basis.eigenvalues()[1] - c(-2.0)).norm() < 1e-12);
        assert!(basis.biorthogonality_error() < 1e-12);

        // directions match the hand vectors up to scale
        let v1 = basis.right(0);
        assert!((v1[1] / v1[0] - c(-1.0)).norm() < 1e-12);
        let u1 = basis.left(0);
        assert!((u1[1] / u1[0] - c(0.5)).norm() < 1e-12);

        let pf = mode_in_state_pf(&basis);
        let want = dmatrix![2.0, -1.0; -1.0, 2.0];
        for j in 0..2 {
            for k in 0..2 {
                assert!((pf[(j, k)] - c(want[(j, k)])).norm() < 1e-12);
            }
        }
        for k in 0..2 {
            let col: Complex64 = pf.column(k).iter().sum();
            assert!((col - c(1.0)).norm() < 1e-12);
        }

        let gp = generalized_participations(&basis);
        // P_1^{1(2)} = u_12·v_11 = 1·1
        assert!((gp.gp_mode_in_state.get(0, 0, 1) - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn defective_matrix_rejected() {
        let a = dmatrix![1.0, 1.0; 0.0, 1.0];
        assert!(matches!(
            biorthogonal_eig(&a),
            Err(LtiError::RepeatedEigenvalues { .. })
        ));
    }

    #[test]
    fn non_square_rejected() {
        let a = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(biorthogonal_eig(&a), Err(LtiError::NotSquare { .. })));
    }

    #[test]
    fn complex_pair_sorted_and_biorthogonal() {
        let a = dmatrix![-0.5, 2.0, 0.0; -2.0, -0.5, 0.0; 0.0, 0.0, -3.0];
        let basis = biorthogonal_eig(&a).unwrap();
        let lams = basis.eigenvalues();
        assert!((lams[0] - Complex64::new(-0.5, -2.0)).norm() < 1e-12);
        assert!((lams[1] - Complex64::new(-0.5, 2.0)).norm() < 1e-12);
        assert!((lams[2] - c(-3.0)).norm() < 1e-12);
        assert!(basis.biorthogonality_error() < 1e-12);
    }

    #[test]
    fn gp_diagonals_match_pf() {
        let a = dmatrix![0.3, 1.0, -0.2; -1.5, -1.0, 0.4; 0.2, 0.7, -2.0];
        let basis = biorthogonal_eig(&a).unwrap();
        let t = generalized_participations(&basis);
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(t.gp_mode_in_state.get(j, k, k), t.pf[(j, k)]);
                assert_eq!(t.gp_state_in_mode.get(j, j, k), t.pf[(j, k)]);
            }
        }
    }

    #[test]
    fn diagonal_gp_offdiagonals_vanish() {
        let a = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let t = generalized_participations(&biorthogonal_eig(&a).unwrap());
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    if l != k {
                        assert!(t.gp_mode_in_state.get(j, k, l).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn modal_solution_examples() {
        let basis = biorthogonal_eig(&dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap();
        let x = modal_solution(&basis, &DVector::from_vec(vec![1.0, 1.0]), 1.0).unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-14);
        assert!((x[1] - (-2.0f64).exp()).abs() < 1e-14);

        let basis = biorthogonal_eig(&dmatrix![0.0, 1.0; -2.0, -3.0]).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let x = modal_solution(&basis, &x0, 0.0).unwrap();
        assert!((x - &x0).amax() < 1e-12);
        let xc = modal_solution_complex(&basis, &x0, 1.0).unwrap();
        let (e1, e2) = ((-1.0f64).exp(), (-2.0f64).exp());
        assert!((xc[0] - c(2.0 * e1 - e2)).norm() < 1e-12);
        assert!((xc[1] - c(-2.0 * e1 + 2.0 * e2)).norm() < 1e-12);
    }

    #[test]
    fn variational_response_examples() {
        let basis = biorthogonal_eig(&dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap();
        let (dx, dz) = variational_response(&basis, &DVector::zeros(2), 1.0).unwrap();
        assert!(dx.amax() == 0.0 && dz.camax() == 0.0);
        let (dx, _) = variational_response(&basis, &DVector::from_vec(vec![1.0, 0.0]), 1.0).unwrap();
        assert!((dx[0] - (-1.0f64).exp()).abs() < 1e-14);
        assert!(dx[1].abs() < 1e-14);
    }

    #[test]
    fn dimension_checked() {
        let basis = biorthogonal_eig(&dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap();
        let err = modal_solution(&basis, &DVector::zeros(3), 0.0).unwrap_err();
        assert_eq!(err, LtiError::DimensionMismatch { expected: 2, got: 3 });
    }
}
