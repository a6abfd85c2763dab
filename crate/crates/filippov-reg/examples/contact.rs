//! Contact order of the canonical form with Σ = {y = 0}, and the Filippov
//! classification of points on Σ.

use filippov_reg::field::{
    contact_classification, CanonicalForm, Side, SigmaClass, SwitchingFunction,
};

fn main() -> filippov_reg::Result<()> {
    let h = SwitchingFunction::horizontal();
    for k in 1..=3 {
        let form = CanonicalForm::with_constant_theta(k, 1.0, -1.0)?;
        let c = contact_classification(&form.x_plus(), &h, [0.0, 0.0], 12, Side::Plus)?;
        println!(
            "k = {k}: multiplicity {}, visible {:?}",
            c.multiplicity, c.visible
        );
        let z = form.system();
        for x in [-0.5, 0.5] {
            let class = z.classify([x, 0.0])?;
            print!("   x = {x:+}: {class:?}");
            if class == SigmaClass::Sliding {
                let s = z.sliding_field([x, 0.0])?;
                print!(", sliding field ({:.4}, {:.1e})", s[0], s[1]);
            }
            println!();
        }
    }
    Ok(())
}
