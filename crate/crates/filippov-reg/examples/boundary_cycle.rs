//! The regularized limit cycle near a boundary cycle of X⁺ that touches Σ
//! at a fold of order 4.

use filippov_reg::cycles::{find_cycle, CycleReport, ReturnMapConfig};
use filippov_reg::field::phi_family;
use filippov_reg::scenarios::{boundary_cycle_example, cycle_points};

fn main() -> filippov_reg::Result<()> {
    let k = 2;
    let base = ReturnMapConfig::new(boundary_cycle_example(k)?, phi_family(5)?, 0.02)?;
    let mut gamma = cycle_points(k, 20_000);
    gamma.push(gamma[0]);
    for eps in [0.02, 0.01, 0.005] {
        let c = find_cycle(&base.with_eps(eps)?)?;
        let r = CycleReport::new(eps, &c, &gamma);
        println!(
            "ε = {eps}: y* = {:.8}  period {:.4}  multiplier {:.2e}  d_H/ε = {:.3}",
            r.fixed_point, r.period, r.multiplier, r.hausdorff_over_eps
        );
    }
    Ok(())
}
