//! Prony-type DMD on a synthetic exponential sum and on a prolonged trajectory.

use koopman_pf::cli::format_complex;
use koopman_pf::dmd::prony_dmd;
use koopman_pf::dynsys::{ep_field, prolong, rk4_integrate, State, Trajectory};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // y_t = 2·0.9^t + Re((1 + i)·(0.7 e^{0.8i})^t)
    let z = Complex64::from_polar(0.7, 0.8);
    let samples = (0..6)
        .map(|t| {
            let v = 2.0 * 0.9f64.powi(t) + (Complex64::new(1.0, 1.0) * z.powi(t)).re;
            State::from_vec(vec![v])
        })
        .collect();
    let s = prony_dmd(&Trajectory::new(0.5, samples))?;
    println!("synthetic signal: rank {} condition {:.2e} residual {:.2e}", s.rank, s.condition, s.residual);
    for (rho, mode) in s.rho.iter().zip(&s.modes) {
        println!("  rho = {:<24} mode = {}", format_complex(*rho), format_complex(mode[0]));
    }

    let z0 = State::from_vec(vec![1.0, 1.0, 0.0, 1e-6]);
    let y = rk4_integrate(&prolong(&ep_field()), &z0, 0.3, 5, 10)?;
    let s = prony_dmd(&y)?;
    println!("\nprolonged equilibrium trajectory:");
    for l in &s.lambda {
        println!("  lambda = {}", format_complex(*l));
    }
    Ok(())
}
