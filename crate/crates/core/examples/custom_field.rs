//! Estimating PFs of a user-defined nonlinear field that has no analytic
//! Koopman data. The Jacobian comes from finite differences.

use koopman_pf::cli::format_complex;
use koopman_pf::dynsys::{jacobian_fd, State, VectorField, DEFAULT_FD_EPS};
use koopman_pf::estimate::{estimate_pf, EstimationConfig, Target};
use koopman_pf::lti::biorthogonal_eig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // damped pendulum
    let field = VectorField::new("pendulum", 2, |x: &State| State::from_vec(vec![x[1], -x[0].sin() - 0.5 * x[1]]));
    let origin = State::zeros(2);
    let a = jacobian_fd(&field, &origin, DEFAULT_FD_EPS)?;
    let basis = biorthogonal_eig(&a)?;
    let cfg = EstimationConfig {
        h: 0.2,
        num_samples: 40,
        targets: basis
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(j, l)| Target::new((j + 1).to_string(), *l))
            .collect(),
        ..EstimationConfig::default()
    };
    for l in &basis.eigenvalues().to_vec() {
        println!("linearization eigenvalue {}", format_complex(*l));
    }
    for amp in [0.05, 0.5, 1.5] {
        let x0 = State::from_vec(vec![amp, 0.0]);
        println!("x0 = ({amp}, 0)");
        for e in estimate_pf(&field, &x0, 0, &cfg)? {
            let v = e.value.map(format_complex).unwrap_or_else(|| e.status.to_string());
            println!("  P{}^{} = {v}", e.target_label, e.state_k + 1);
        }
    }
    Ok(())
}
