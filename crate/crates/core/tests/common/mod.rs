#![allow(dead_code)]

use koopman_pf::dynsys::{State, Trajectory};
use koopman_pf::numerics;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random matrix shifted so that every eigenvalue has real part in `[-1.1, -0.1]` or lower.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n);
    let max_re = numerics::eig_real(&m)
        .expect("eigenvalues of a small dense matrix")
        .iter()
        .map(|p| p.value.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = max_re + rng.gen_range(0.1..1.1);
    m - DMatrix::identity(n, n) * shift
}

/// `S·D·S⁻¹` with well separated stable eigenvalues and a well conditioned `S`.
/// `D` is block diagonal with real eigenvalues and complex pairs.
pub fn separated_stable(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let pairs = rng.gen_range(0..=n / 2);
    let mut d = DMatrix::zeros(n, n);
    let mut i = 0;
    for p in 0..pairs {
        let a = -0.3 - 0.6 * p as f64 - rng.gen_range(0.0..0.1);
        let b = rng.gen_range(0.5..1.0);
        d[(i, i)] = a;
        d[(i + 1, i + 1)] = a;
        d[(i, i + 1)] = b;
        d[(i + 1, i)] = -b;
        i += 2;
    }
    for r in 0..n - i {
        d[(i + r, i + r)] = -0.2 - 0.45 * r as f64 - rng.gen_range(0.0..0.05);
    }
    loop {
        let s = DMatrix::identity(n, n) + uniform_matrix(rng, n) * 0.4;
        let sv = numerics::singular_values(&s).expect("svd");
        if sv[n - 1] > 0.0 && sv[0] / sv[n - 1] < 20.0 {
            let s_inv = s.clone().try_inverse().expect("well conditioned");
            return s * d * s_inv;
        }
    }
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> State {
    State::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Samples `x(t) = e^{At}x0` at `t = 0, h, …, (len−1)h` with the matrix exponential.
pub fn exact_linear_samples(a: &DMatrix<f64>, x0: &State, h: f64, len: usize) -> Trajectory {
    let step = (a * h).exp();
    let mut samples = Vec::with_capacity(len);
    let mut x = x0.clone();
    for _ in 0..len {
        samples.push(x.clone());
        x = &step * x;
    }
    Trajectory::new(h, samples)
}
