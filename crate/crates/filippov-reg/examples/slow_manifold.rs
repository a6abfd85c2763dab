//! Critical manifold m0, first-order slow manifold m1 and the lower bound
//! that holds on the attracting branch.

use filippov_reg::field::{phi_family, CanonicalForm};
use filippov_reg::regularize::{slow_manifold_sandwich_check, RegularizedField};

fn main() -> filippov_reg::Result<()> {
    let z = CanonicalForm::with_constant_theta(1, 1.0, -1.0)?.system();
    let rf = RegularizedField::new(z, phi_family(1)?, 1e-3)?;
    let l = rf.default_l()?;
    let cm = rf.critical_manifold(l)?;
    println!("L = {l:.4}");
    for x in [-0.4, -0.2, -0.1, -0.05] {
        println!("x = {x:+.2}: m0 = {:.9}  m1 = {:.6}", cm.m0(x)?, cm.m1(x)?);
    }
    println!(
        "gap coefficient: predicted {:.6}, fitted {:.6}",
        cm.predicted_gap_coefficient()?,
        cm.fitted_gap_coefficient()?
    );
    let probe = slow_manifold_sandwich_check(&rf, l, 0.5, 1.0)?;
    let r = slow_manifold_sandwich_check(&rf, l, 0.5, probe.k_min * (1.0 + 1e-9))?;
    println!(
        "sandwich: K_min = {:.4}, exponent {:.3}, all rows hold = {}",
        r.k_min,
        r.exponent,
        r.all_hold()
    );
    Ok(())
}
