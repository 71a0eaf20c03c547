//! Analytic Koopman eigenfunctions of the stable-equilibrium example and the
//! state-dependent PFs/GPs they induce.

use koopman_pf::cli::format_complex;
use koopman_pf::dynsys::{ep_system, MultiIndex, Participation, State};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = ep_system();
    for t in &b.triples {
        println!("phi_{:<4} lambda = {:+.6}  mode = {:.6?}", t.label(), t.eigenvalue.re, t.mode.map(|z| z.re).as_slice());
    }
    println!();

    let modes = [MultiIndex(vec![1, 0]), MultiIndex(vec![0, 1]), MultiIndex(vec![0, 2])];
    for x in [[1.0, 1.0], [-3.0, 0.5], [4.0, -2.0]] {
        let x = State::from_vec(x.to_vec());
        println!("x0 = {:?}", x.as_slice());
        for j in &modes {
            let pf = b.analytic_pf(&Participation::Pf, j, 0, &x)?;
            let gp = b.analytic_pf(&Participation::ModeInState { perturbed: 1 }, j, 0, &x)?;
            println!("  P{j}^1 = {:<22}  P{j}^1(2) = {}", format_complex(pf), format_complex(gp));
        }
    }
    Ok(())
}
