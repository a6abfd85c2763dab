//! Upper and lower transition maps across the band, and how strongly they
//! contract as ε shrinks.

use filippov_reg::field::{phi_family, CanonicalForm};
use filippov_reg::transition::{contraction, map_sweep, MapSide, TransitionConfig};

fn main() -> filippov_reg::Result<()> {
    let z = CanonicalForm::with_constant_theta(1, 1.0, -1.0)?.system();
    let cfg = TransitionConfig::new(z, phi_family(1)?, 1e-3)?;
    for side in [MapSide::Upper, MapSide::Lower] {
        let samples = map_sweep(&cfg, side, 5)?;
        println!("{side:?} map at ε = 1e-3:");
        for s in &samples {
            println!(
                "   {:.6e} -> {:.12}  log|map'| = {:.2}",
                s.input, s.output, s.log_derivative
            );
        }
        for eps in [4e-3, 2e-3, 1e-3] {
            let c = contraction(&cfg.with_eps(eps), side, 9)?;
            println!(
                "   ε = {eps:.0e}: image length {:.3e} of input {:.3e}",
                c.liouville, c.input_length
            );
        }
    }
    Ok(())
}
