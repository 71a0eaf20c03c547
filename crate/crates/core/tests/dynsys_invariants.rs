mod common;

use std::f64::consts::PI;

use koopman_pf::dynsys::{
    ep_coefficient, ep_system, lc_system, linear_bundle, prolong, rk4_integrate, MultiIndex, Participation, State,
    SystemBundle,
};
use koopman_pf::lti;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn polar(r: f64, th: f64) -> State {
    State::from_vec(vec![r * th.cos(), r * th.sin()])
}

fn equivariance_error(bundle: &SystemBundle, x0: &State, t: f64) -> f64 {
    let steps = (t / 0.05).round() as usize;
    let traj = rk4_integrate(&bundle.field, x0, t / steps as f64, steps, 20).unwrap();
    let xt = traj.samples.last().unwrap();
    bundle
        .triples
        .iter()
        .map(|tr| {
            let lhs = tr.eval(xt).unwrap();
            let rhs = (tr.eigenvalue * t).exp() * tr.eval(x0).unwrap();
            (lhs - rhs).norm()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn equilibrium_eigenfunctions_are_equivariant(x1 in -6.0f64..6.0, x2 in -6.0f64..6.0) {
        let b = ep_system();
        for t in [0.5, 1.0, 2.0] {
            prop_assert!(equivariance_error(&b, &State::from_vec(vec![x1, x2]), t) < 1e-5);
        }
    }

    #[test]
    fn limit_cycle_eigenfunctions_are_equivariant(r in 0.5f64..2.5, th in -PI..PI) {
        let b = lc_system();
        for t in [0.5, 1.0, 2.0] {
            prop_assert!(equivariance_error(&b, &polar(r, th), t) < 1e-5);
        }
    }

    #[test]
    fn limit_cycle_mode_relations(r in 0.2f64..3.0, th in -PI..PI) {
        let b = lc_system();
        let x = polar(r, th);
        let i = Complex64::new(0.0, 1.0);
        for j in [MultiIndex(vec![1, 0]), MultiIndex(vec![1, 1])] {
            let p11 = b.analytic_pf(&Participation::Pf, &j, 0, &x).unwrap();
            let p22 = b.analytic_pf(&Participation::Pf, &j, 1, &x).unwrap();
            let p2_1 = b.analytic_pf(&Participation::ModeInState { perturbed: 0 }, &j, 1, &x).unwrap();
            let p1_2 = b.analytic_pf(&Participation::ModeInState { perturbed: 1 }, &j, 0, &x).unwrap();
            prop_assert!((p11 - i * p2_1).norm() < 1e-12);
            prop_assert!((i * p22 - p1_2).norm() < 1e-12);
        }
        let phi1 = MultiIndex(vec![1, 0]);
        let s = b
            .analytic_pf(&Participation::StateInMode { source: MultiIndex(vec![1, 1]) }, &phi1, 0, &x)
            .unwrap();
        let p = b.analytic_pf(&Participation::Pf, &phi1, 0, &x).unwrap();
        prop_assert!((s - 0.5 * p).norm() < 1e-12);
    }

    #[test]
    fn equilibrium_state_in_mode_values(x1 in -6.0f64..6.0, x2 in -6.0f64..6.0) {
        let b = ep_system();
        let x = State::from_vec(vec![x1, x2]);
        let c = ep_coefficient();
        let phi1 = MultiIndex(vec![1, 0]);
        let phi2 = MultiIndex(vec![0, 1]);
        let phi02 = MultiIndex(vec![0, 2]);
        let a = b.analytic_pf(&Participation::StateInMode { source: phi02.clone() }, &phi1, 0, &x).unwrap();
        prop_assert!((a - Complex64::new(-c, 0.0)).norm() < 1e-15);
        let g = b.analytic_pf(&Participation::StateInMode { source: phi2 }, &phi02, 1, &x).unwrap();
        prop_assert!((g - Complex64::new(2.0 * x2, 0.0)).norm() < 1e-14);
        prop_assert!((a + Complex64::new((1.0 + 2.0 * 2f64.sqrt()) / 7.0, 0.0)).norm() < 1e-15);
    }
}

/// `‖ξ(t) − (x_δ(t) − x(t))/Δ‖∞` for a perturbation of size `Δ` along `dir`.
fn variational_gap(bundle: &SystemBundle, x0: &State, dir: &State, delta: f64) -> f64 {
    let n = x0.len();
    let (h, steps, sub) = (0.1, 20, 10);
    let mut z0 = State::zeros(2 * n);
    z0.rows_mut(0, n).copy_from(x0);
    z0.rows_mut(n, n).copy_from(dir);
    let pro = rk4_integrate(&prolong(&bundle.field), &z0, h, steps, sub).unwrap();
    let base = rk4_integrate(&bundle.field, x0, h, steps, sub).unwrap();
    let pert = rk4_integrate(&bundle.field, &(x0 + dir * delta), h, steps, sub).unwrap();
    (0..=steps)
        .map(|i| {
            let xi = pro.samples[i].rows(n, n).into_owned();
            let fd = (&pert.samples[i] - &base.samples[i]) / delta;
            (xi - fd).amax()
        })
        .fold(0.0, f64::max)
}

#[test]
fn variational_equation_is_first_order_accurate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (bundle, lo, hi) in [(ep_system(), -3.0, 3.0), (lc_system(), 0.6, 2.0)] {
        for _ in 0..10 {
            let x0 = if bundle.field.name() == "ex2_lc" {
                polar(rng.gen_range(lo..hi), rng.gen_range(-PI..PI))
            } else {
                common::random_vector(&mut rng, 2, hi)
            };
            // a generic direction, since x1 enters the equilibrium field linearly
            let th: f64 = rng.gen_range(0.3..1.2);
            let dir = State::from_vec(vec![th.cos(), th.sin()]);
            let coarse = variational_gap(&bundle, &x0, &dir, 1e-3);
            let fine = variational_gap(&bundle, &x0, &dir, 1e-4);
            let ratio = coarse / fine;
            assert!((5.0..=20.0).contains(&ratio), "{}: ratio {ratio} at {x0:?}", bundle.field.name());
        }
    }
}

#[test]
fn linear_bundle_reproduces_classical_participations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=4 {
        let a = common::random_stable(&mut rng, n);
        let bundle = linear_bundle("lti", &a).unwrap();
        let tensors = lti::generalized_participations(&lti::biorthogonal_eig(&a).unwrap());
        let x = common::random_vector(&mut rng, n, 3.0);
        for j in 0..n {
            let idx = MultiIndex::principal(n, j);
            for k in 0..n {
                let pf = bundle.analytic_pf(&Participation::Pf, &idx, k, &x).unwrap();
                assert_eq!(pf, tensors.pf[(j, k)]);
                for l in 0..n {
                    let gp = bundle
                        .analytic_pf(&Participation::ModeInState { perturbed: l }, &idx, k, &x)
                        .unwrap();
                    assert_eq!(gp, tensors.gp_mode_in_state.get(j, k, l));
                }
                for i in 0..n {
                    let src = MultiIndex::principal(n, i);
                    let gp = bundle
                        .analytic_pf(&Participation::StateInMode { source: src }, &idx, k, &x)
                        .unwrap();
                    assert_eq!(gp, tensors.gp_state_in_mode.get(i, j, k));
                }
            }
        }
    }
}

#[test]
fn limit_cycle_domain_warning_marks_inner_region() {
    let b = lc_system();
    assert!(b.domain_warning(&polar(0.6, 0.3)).is_some());
    assert!(b.domain_warning(&polar(0.8, 0.3)).is_none());
    assert!(ep_system().domain_warning(&State::from_vec(vec![0.0, 0.0])).is_none());
}
