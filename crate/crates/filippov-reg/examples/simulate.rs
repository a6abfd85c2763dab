//! One orbit of the regularized field through the band |y| ≤ ε, with the
//! band interior integrated in fast variables.

use filippov_reg::field::{phi_family, CanonicalForm};
use filippov_reg::integrate::SectionSpec;
use filippov_reg::regularize::{hybrid_flow, HybridOptions, RegularizedField, Target};

fn main() -> filippov_reg::Result<()> {
    let z = CanonicalForm::with_constant_theta(1, 1.0, -1.0)?.system();
    for eps in [1e-2, 1e-3, 1e-4] {
        let rf = RegularizedField::new(z.clone(), phi_family(1)?, eps)?;
        let target = Target::Section(SectionSpec::vertical(0.3));
        let out = hybrid_flow(&rf, [-0.5, 0.1], Some(target), &HybridOptions::default())?;
        println!(
            "ε = {eps:.0e}: end ({:.6}, {:.3e}) after t = {:.4}, {} band crossings, log det = {:.3}",
            out.end[0],
            out.end[1],
            out.t,
            out.top_crossings(),
            out.log_jacobian,
        );
    }
    Ok(())
}
