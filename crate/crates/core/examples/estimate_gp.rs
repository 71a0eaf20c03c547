//! Data-driven PFs and GPs at single initial states, compared with the
//! analytic values.

use koopman_pf::cli::format_complex;
use koopman_pf::dynsys::{ep_system, lc_system, State};
use koopman_pf::estimate::{estimate_pf, EstimationConfig, PfOracle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let runs = [
        ("equilibrium", ep_system(), EstimationConfig::for_ep(), vec![1.0, 1.0]),
        ("limit cycle", lc_system(), EstimationConfig::for_lc(), vec![1.2, -0.4]),
    ];
    for (name, bundle, cfg, x0) in runs {
        let x0 = State::from_vec(x0);
        for l in 0..2 {
            println!("{name}, x0 = {:?}, perturbed x{}", x0.as_slice(), l + 1);
            for e in estimate_pf(&bundle.field, &x0, l, &cfg)? {
                let exact = bundle.participation(e.target, e.state_k, l, &x0);
                match (e.value, exact) {
                    (Some(v), Some(x)) => println!(
                        "  P{}^{}({}) = {:<24} exact {:<24} |err| {:.1e}",
                        e.target_label,
                        e.state_k + 1,
                        l + 1,
                        format_complex(v),
                        format_complex(x),
                        (v - x).norm()
                    ),
                    _ => println!("  P{}^{}({}): {}", e.target_label, e.state_k + 1, l + 1, e.status),
                }
            }
        }
    }
    Ok(())
}
