//! The polynomial transition functions φ_m: exact coefficients, the class
//! checks and the bracket constant that enters the slow manifold.

use filippov_reg::field::phi_family;

fn main() -> filippov_reg::Result<()> {
    for m in 1..=6 {
        let phi = phi_family(m)?;
        let coeffs: Vec<String> = phi
            .coefficients()
            .unwrap_or_default()
            .iter()
            .map(|c| c.to_string())
            .collect();
        let report = phi.verify();
        println!(
            "m = {m}  n = {}  class ok = {}  φ'(0) = {}  C = {:.6}",
            phi.theorem_n(),
            report.all_hold(),
            coeffs.get(1).map_or("?", String::as_str),
            phi.bracket_constant(phi.theorem_n())?,
        );
        println!(
            "        coefficients (s¹, s², ...): {}",
            coeffs[1..].join(" ")
        );
    }
    // Near the edge the gap 1 − φ(s) keeps full relative precision.
    let phi = phi_family(6)?;
    for s in [0.9, 0.99, 0.999] {
        println!("1 − φ₆({s}) = {:.6e}", phi.one_minus(s));
    }
    Ok(())
}
