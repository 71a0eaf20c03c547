//! Mean GP errors of the equilibrium example over a grid for several
//! perturbation sizes.

use koopman_pf::cli::summary_line;
use koopman_pf::dynsys::ep_system;
use koopman_pf::estimate::{grid_sweep, Axis, EstimationConfig, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = ep_system();
    let grid = GridSpec::cartesian(vec![Axis::new(-6.0, 6.0, 21); 2]);
    for delta in [1e-6, 1e-3, 1.0] {
        let cfg = EstimationConfig { delta, ..EstimationConfig::for_ep() };
        let g = grid_sweep(&b.field, Some(&b), &grid, 1, &cfg, None)?;
        println!("delta = {delta:e}");
        for s in g.summary.iter().filter(|s| s.state_k == 0) {
            println!("  {}", summary_line(s));
        }
    }
    Ok(())
}
