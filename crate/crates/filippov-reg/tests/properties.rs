//! Property tests over randomized inputs.

use filippov_reg::blowup::{chart2_crossing, chart2_trajectory, Chart1, Chart2Config, U_BIG};
use filippov_reg::cycles::{densify, hausdorff_distance};
use filippov_reg::field::poly::{rat, Poly2};
use filippov_reg::field::{
    contact_classification, lie_derivative, phi_family, CanonicalForm, FilippovSystem, PlanarField,
    Side, SwitchingFunction,
};
use filippov_reg::integrate::{
    flow, flow_to_section, integrate, IntegratorConfig, SectionSpec, TimeDirection,
};
use filippov_reg::regularize::RegularizedField;
use filippov_reg::report::{fmt17, Table};
use filippov_reg::scenarios::{boundary_cycle_field, cycle_curve, cycle_points};
use filippov_reg::transition::fit_scaling;
use proptest::prelude::*;

fn poly2(coeffs: &[i64]) -> Poly2 {
    // Degree ≤ 2: 1, x, y, x², xy, y².
    let mono = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
    Poly2::from_terms(mono.iter().zip(coeffs).map(|(&m, &c)| (m, rat(c, 4))))
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn phi_is_odd_and_increasing(m in 1usize..=6, s in -0.999f64..0.999) {
        let phi = phi_family(m).unwrap();
        prop_assert_eq!(phi.phi(-s), -phi.phi(s));
        prop_assert!(phi.derivative(s, 1) > 0.0);
    }

    #[test]
    fn phi_inverse_round_trip(m in 1usize..=6, s in -0.999f64..0.999) {
        let phi = phi_family(m).unwrap();
        // Through the value φ(s), a few ulp of φ are amplified by 1/φ'(s).
        let back = phi.inverse(phi.phi(s)).unwrap();
        let cond = 16.0 * f64::EPSILON / phi.derivative(s, 1);
        prop_assert!((back - s).abs() <= 1e-12 + cond, "{} -> {}", s, back);
        // Through the gap 1 − φ(s) it is exact to 1e−12 up to the edge.
        let a = s.abs();
        let w = phi.solve_gap(phi.one_minus(a)).unwrap();
        prop_assert!((1.0 - w - a).abs() <= 1e-12, "{} -> {}", a, 1.0 - w);
    }

    #[test]
    fn lie_derivative_exact_matches_differences(
        p in prop::collection::vec(-4i64..=4, 6),
        q in prop::collection::vec(-4i64..=4, 6),
        x in -0.8f64..0.8,
        y in -0.8f64..0.8,
        order in 1usize..=3,
    ) {
        let exact = PlanarField::from_poly(poly2(&p), poly2(&q));
        let wrapped = {
            let f = exact.clone();
            PlanarField::from_fn(move |pt| f.eval(pt))
        };
        let h = SwitchingFunction::horizontal();
        let a = lie_derivative(&exact, &h, order, [x, y]).unwrap();
        let b = lie_derivative(&wrapped, &h, order, [x, y]).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn sliding_field_is_tangent(
        p in prop::collection::vec(-4i64..=4, 6),
        q in prop::collection::vec(-4i64..=4, 6),
        x in -0.8f64..0.8,
    ) {
        let xp = PlanarField::from_poly(poly2(&p), &poly2(&q) - &Poly2::constant(rat(3, 1)));
        let xm = PlanarField::from_poly(poly2(&q), &poly2(&p) + &Poly2::constant(rat(3, 1)));
        let z = FilippovSystem::new(xp, xm, SwitchingFunction::horizontal());
        let a = z.x_plus.eval([x, 0.0])[1];
        let b = z.x_minus.eval([x, 0.0])[1];
        prop_assume!(a < -1e-3 && b > 1e-3);
        let s = z.sliding_field([x, 0.0]).unwrap();
        prop_assert!(s[1].abs() <= 1e-10 * (1.0 + s[0].hypot(s[1])));
    }

    #[test]
    fn contact_survives_positive_rescaling(k in 1u32..=3, a in 0i64..8, b in 0i64..8) {
        let form = CanonicalForm::simple(k, 1.0).unwrap();
        let h = SwitchingFunction::horizontal();
        let xp = form.x_plus();
        let factor = Poly2::from_terms([((0, 0), rat(1, 1)), ((2, 0), rat(a, 3)), ((0, 2), rat(b, 3))]);
        let scaled = xp.rescaled(&factor).unwrap();
        let c0 = contact_classification(&xp, &h, [0.0, 0.0], 10, Side::Plus).unwrap();
        let c1 = contact_classification(&scaled, &h, [0.0, 0.0], 10, Side::Plus).unwrap();
        prop_assert_eq!(c0, c1);
    }

    #[test]
    fn regularized_field_is_continuous_at_band_edges(
        m in 1usize..=4,
        x in -0.5f64..0.5,
        eps in 1e-4f64..1e-1,
        top in any::<bool>(),
    ) {
        let z = CanonicalForm::with_constant_theta(1, 1.0, -1.0).unwrap().system();
        let rf = RegularizedField::new(z, phi_family(m).unwrap(), eps).unwrap();
        let y = if top { eps } else { -eps };
        let inside = rf.eval([x, y * (1.0 - 1e-15)]);
        let outside = rf.eval([x, y * (1.0 + 1e-15)]);
        for i in 0..2 {
            prop_assert!((inside[i] - outside[i]).abs() <= 1e-12 * (1.0 + outside[i].abs()));
        }
    }

    #[test]
    fn scaling_fit_recovers_power_laws(c in 0.1f64..10.0, e in 0.1f64..2.0, points in 6usize..12) {
        let pairs: Vec<(f64, f64)> = (0..points)
            .map(|i| {
                let eps = 1e-6 * 10f64.powf(4.0 * i as f64 / (points - 1) as f64);
                (eps, c * eps.powf(e))
            })
            .collect();
        let f = fit_scaling(&pairs, e).unwrap();
        prop_assert!((f.slope - e).abs() < 1e-10);
        prop_assert!((f.prefactor() / c - 1.0).abs() < 1e-9);
        prop_assert!(f.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn table_values_round_trip(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..8)) {
        let cols: Vec<String> = (0..vals.len()).map(|i| format!("c{i}")).collect();
        let names: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut t = Table::new(&names).meta("seed", 1);
        t.push_f64(&vals);
        let back = Table::parse(&t.render()).unwrap();
        for (s, v) in back.rows[0].iter().zip(&vals) {
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        prop_assert_eq!(fmt17(vals[0]).parse::<f64>().unwrap(), vals[0]);
    }

    #[test]
    fn hausdorff_of_shifted_curve(shift in 0.0f64..0.1, n in 50usize..200) {
        let a: Vec<[f64; 2]> = (0..n).map(|i| {
            let t = i as f64 / (n - 1) as f64;
            [t, (3.0 * t).sin()]
        }).collect();
        let b: Vec<[f64; 2]> = a.iter().map(|p| [p[0], p[1] + shift]).collect();
        let d = hausdorff_distance(&a, &b);
        prop_assert_eq!(d, hausdorff_distance(&b, &a));
        prop_assert!(d <= shift + 1e-12);
        prop_assert!(densify(&a, 1e-3).len() >= a.len());
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn flow_reverses(x in -0.6f64..0.6, y in 0.4f64..1.6, t in 0.1f64..2.0) {
        let f = boundary_cycle_field(2).unwrap();
        let cfg = IntegratorConfig::default().with_tolerances(1e-11, 1e-13);
        let fwd = flow(&f, [x, y], (0.0, t), &cfg).unwrap().end().unwrap();
        let back = flow(&f, fwd, (t, 0.0), &cfg).unwrap().end().unwrap();
        let tol = 10.0 * 1e-10 * x.hypot(y).max(1.0);
        prop_assert!((back[0] - x).abs() <= tol && (back[1] - y).abs() <= tol, "{:?}", back);
    }

    #[test]
    fn event_residual_within_tolerance(y in 0.3f64..1.7, c in 0.05f64..0.4) {
        let f = boundary_cycle_field(2).unwrap();
        let cfg = IntegratorConfig::default().without_record();
        let hit = flow_to_section(&f, [-0.5, y], &SectionSpec::vertical(c), &cfg, TimeDirection::Forward);
        prop_assume!(hit.is_ok());
        let hit = hit.unwrap();
        prop_assert!((hit.point[0] - c).abs() <= cfg.event_tol);
    }

    #[test]
    fn cycle_curve_is_invariant(k in 2u32..=3, i in 0usize..64) {
        let f = boundary_cycle_field(k).unwrap();
        let h = cycle_curve(k).compile();
        let p = cycle_points(k, 64)[i];
        let cfg = IntegratorConfig::default().with_tolerances(1e-10, 1e-12);
        let tr = flow(&f, p, (0.0, 8.0), &cfg).unwrap();
        for q in tr.points() {
            prop_assert!(h.eval(q[0], q[1]).abs() <= 1e-8);
        }
    }

    #[test]
    fn u_star_monotone_in_sigma(k in 1u32..=2, s1 in -0.5f64..1.0, s2 in -0.5f64..1.0) {
        let n = if k == 1 { 2 } else { 3 };
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let a = chart2_crossing(&Chart2Config::on_isocline(k, n, lo, -U_BIG).unwrap()).unwrap();
        let b = chart2_crossing(&Chart2Config::on_isocline(k, n, hi, -U_BIG).unwrap()).unwrap();
        prop_assert!(a <= b + 1e-9, "{} > {}", a, b);
    }

    #[test]
    fn chart2_path_stays_below_start(k in 1u32..=2, sigma in -0.5f64..1.0) {
        let n = if k == 1 { 2 } else { 3 };
        let cfg = Chart2Config::on_isocline(k, n, sigma, -U_BIG).unwrap();
        let c = chart2_trajectory(&cfg).unwrap();
        prop_assert!(c.max_v <= cfg.v0 * (1.0 + 1e-12));
    }

    #[test]
    fn chart1_invariant_is_conserved(
        k in 1u32..=2,
        x1 in -1.5f64..0.0,
        r1 in 0.05f64..0.3,
        e1 in 0.05f64..0.3,
    ) {
        let m = if k == 1 { 1 } else { 2 };
        let form = CanonicalForm::with_constant_theta(k, 1.0, -1.0).unwrap();
        let ch = Chart1::new(&form, &phi_family(m).unwrap()).unwrap();
        let s0 = [x1, r1, e1];
        let t_end = 0.5;
        let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-14);
        let sol = integrate(|s: &[f64; 3]| ch.rhs(s), 0.0, s0, t_end, &cfg, &[], None).unwrap();
        let i0 = ch.invariant(&s0);
        for (t, s) in &sol.samples {
            let drift = (ch.invariant(s) / i0 - 1.0).abs();
            prop_assert!(drift <= 1e-8 * t.max(1.0), "drift {} at t = {}", drift, t);
        }
    }
}
