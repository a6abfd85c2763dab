//! ε-scaling of the band exit x_ε and of the tangency curve ψ(ε),
//! fitted against the predicted exponents.

use filippov_reg::field::{phi_family, CanonicalForm};
use filippov_reg::transition::{
    eps_grid, fit_scaling, lambda_star, scaling_sweep, TransitionConfig,
};

fn main() -> filippov_reg::Result<()> {
    let grid = eps_grid(1e-6, 1e-2, 9);
    for (k, n) in [(1u32, 2usize), (1, 3), (2, 3)] {
        let z = CanonicalForm::simple(k, 1.0)?.system();
        let cfg = TransitionConfig::new(z, phi_family(n - 1)?, 1e-2)?;
        let rows = scaling_sweep(&cfg, &grid)?;
        let x: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.x_eps)).collect();
        let f = fit_scaling(&x, lambda_star(k, n))?;
        println!(
            "k = {k}, n = {n}: x_ε ≈ {:.4}·ε^{:.4} (predicted exponent {:.4}, r² {:.6})",
            f.prefactor(),
            f.slope,
            f.predicted,
            f.r2
        );
    }
    // ψ(ε) vanishes when ϑ ≡ 0; with ϑ = −1 it grows like ε^{1/(2k−1)}.
    for k in [1u32, 2] {
        let z = CanonicalForm::with_constant_theta(k, 1.0, -1.0)?.system();
        let cfg = TransitionConfig::new(z, phi_family(2)?, 1e-2)?;
        let rows = scaling_sweep(&cfg, &grid)?;
        let psi: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.psi_eps)).collect();
        let f = fit_scaling(&psi, 1.0 / (2 * k - 1) as f64)?;
        println!(
            "k = {k}: ψ slope {:.5} (predicted {:.5})",
            f.slope, f.predicted
        );
    }
    Ok(())
}
