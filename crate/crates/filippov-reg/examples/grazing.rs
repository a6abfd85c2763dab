//! Local shape of the maps near the tangency curve ψ(ε): the mirror map
//! is an involution there, and the X⁺ half-maps have a fold.

use filippov_reg::cycles::{grazing_fit, HalfMap};
use filippov_reg::field::{phi_family, CanonicalForm};
use filippov_reg::transition::{mirror_fit, TransitionConfig};

fn main() -> filippov_reg::Result<()> {
    let z = CanonicalForm::with_constant_theta(1, 1.0, -1.0)?.system();
    let cfg = TransitionConfig::new(z, phi_family(1)?, 1e-4)?;
    let m = mirror_fit(&cfg, 12)?;
    println!(
        "mirror map: ψ = {:.6}, a1 = {:.5}, a2 = {:.3}",
        m.psi, m.a1, m.a2
    );
    for side in [HalfMap::Upper, HalfMap::Lower] {
        let g = grazing_fit(&cfg, side, 12)?;
        println!(
            "{side:?} half-map: exponent {:.4}, κ = {:.4}",
            g.exponent, g.kappa
        );
    }
    Ok(())
}
