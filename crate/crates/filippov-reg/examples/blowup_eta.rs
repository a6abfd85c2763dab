//! Blow-up constants: the chart-2 crossing u*, η = c_x u*, and the
//! chart-1 equilibrium with its conserved quantity.

use filippov_reg::blowup::{chart1_check, eta_for};
use filippov_reg::field::{phi_family, CanonicalForm};

fn main() -> filippov_reg::Result<()> {
    for (k, m) in [(1u32, 1usize), (1, 2), (2, 2), (2, 3)] {
        let form = CanonicalForm::with_constant_theta(k, 1.0, -1.0)?;
        let phi = phi_family(m)?;
        let e = eta_for(&form, &phi)?;
        println!(
            "k = {k}, n = {}: σ = {:.4}  u* = {:.6}  η = {:.6}  x1* = {:.4}  λ1 = {:.4}",
            e.n, e.sigma, e.u_star, e.eta, e.x1_star, e.lambda1
        );
        println!("   chart 1: {:?}", chart1_check(&form, &phi)?);
    }
    Ok(())
}
