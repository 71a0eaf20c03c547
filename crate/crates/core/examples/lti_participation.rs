//! Classical participation factors of a linear system and how an initial
//! perturbation spreads through its modes.

use koopman_pf::cli::{format_complex, lti_report};
use koopman_pf::lti::{biorthogonal_eig, variational_response};
use nalgebra::{dmatrix, dvector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = dmatrix![
        -1.0, 0.5, 0.0;
        -0.5, -1.0, 0.2;
        0.0, 0.3, -2.5
    ];
    print!("{}", lti_report(&a)?);

    let basis = biorthogonal_eig(&a)?;
    let dx = dvector![0.0, 1.0, 0.0];
    for t in [0.0, 0.5, 1.0, 2.0] {
        let (dx_t, dz_t) = variational_response(&basis, &dx, t)?;
        let modal: Vec<String> = dz_t.iter().map(|z| format_complex(*z)).collect();
        println!("t = {t:.1}: dx = {:.5?}  dz = [{}]", dx_t.as_slice(), modal.join(", "));
    }
    Ok(())
}
