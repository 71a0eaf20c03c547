//! Analytic PFs of the limit-cycle example on a ring of initial states,
//! including the region where the mode expansion diverges.

use std::f64::consts::PI;

use koopman_pf::cli::format_complex;
use koopman_pf::dynsys::{lc_system, MultiIndex, Participation, State};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = lc_system();
    for t in &b.triples {
        println!("phi_{:<4} lambda = {}", t.label(), format_complex(t.eigenvalue));
    }
    println!("{}\n", b.basin_note);

    let phi1 = MultiIndex(vec![1, 0]);
    let phi11 = MultiIndex(vec![1, 1]);
    for r in [0.6, 1.0, 2.0] {
        for k in 0..4 {
            let th = -PI + k as f64 * PI / 2.0;
            let x = State::from_vec(vec![r * th.cos(), r * th.sin()]);
            let p1 = b.analytic_pf(&Participation::Pf, &phi1, 0, &x)?;
            let p11 = b.analytic_pf(&Participation::Pf, &phi11, 0, &x)?;
            let flag = b.domain_warning(&x).map(|_| "  (expansion diverges)").unwrap_or("");
            println!(
                "r = {r:.1} theta = {th:+.3}: P1^1 = {:<22} P<11>^1 = {}{flag}",
                format_complex(p1),
                format_complex(p11)
            );
        }
    }
    Ok(())
}
