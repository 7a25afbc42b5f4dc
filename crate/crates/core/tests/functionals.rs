use std::f64::consts::PI;

use nevlab::manifold::ModelManifold;
use nevlab::nevanlinna::{
    characteristic, counting_enumerated, proximity, reference_constant, EvalOptions, Method, NevanlinnaTable, Proximity,
    TableSpec,
};
use nevlab::rng::RngSpec;
use nevlab::targets::{chordal_distance, enumerate_divisor, gradient_quotient, DivisorSpec, MeromorphicTarget, ProjPoint};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn pt(re: f64, im: f64) -> DivisorSpec {
    DivisorSpec::point(ProjPoint::finite(re, im))
}

fn corpus() -> Vec<MeromorphicTarget> {
    vec![
        MeromorphicTarget::polynomial("z", &[0.0, 1.0]).unwrap(),
        MeromorphicTarget::polynomial("z^2", &[0.0, 0.0, 1.0]).unwrap(),
        MeromorphicTarget::polynomial("z^2-1", &[-1.0, 0.0, 1.0]).unwrap(),
        MeromorphicTarget::rational("(z-1)/(z+2)", &[-1.0, 1.0], &[2.0, 1.0]).unwrap(),
        MeromorphicTarget::exp_affine("exp", c(1.0), c(0.0)).unwrap(),
        MeromorphicTarget::exp_combination("cosh2", &[(c(1.0), c(1.0)), (c(1.0), c(-1.0))]).unwrap(),
    ]
}

/// Winding number of `f` around 0 on `|z| = rho` by tracking the argument.
fn winding(f: impl Fn(Complex64) -> Complex64, rho: f64) -> i64 {
    let n = 200_000;
    let mut total = 0.0;
    let mut prev = f(Complex64::new(rho, 0.0)).arg();
    for k in 1..=n {
        let a = f(Complex64::from_polar(rho, 2.0 * PI * k as f64 / n as f64)).arg();
        let mut d = a - prev;
        if d > PI {
            d -= 2.0 * PI;
        } else if d < -PI {
            d += 2.0 * PI;
        }
        total += d;
        prev = a;
    }
    (total / (2.0 * PI)).round() as i64
}

#[test]
fn enumeration_matches_argument_principle() {
    let plane = ModelManifold::flat(1).unwrap();
    for t in corpus() {
        for d in [pt(0.5, 0.25), pt(-1.0, 0.0), pt(3.0, -1.0), DivisorSpec::point(ProjPoint::Infinity)] {
            if reference_constant(&t, &d).is_err() {
                continue;
            }
            let f = t.pullback(&d).unwrap();
            // radii chosen away from the divisor
            for r in [1.7, 4.3, 9.1] {
                let pts = enumerate_divisor(&t, &d, &plane, r).unwrap();
                let count: usize = pts.iter().map(|p| p.multiplicity).sum();
                let w = winding(|z| f.eval(z), r);
                assert_eq!(count as i64, w, "{} at {} r={r}", t.id, d.label);
            }
        }
    }
}

#[test]
fn chordal_distance_is_a_bounded_metric() {
    let mut g = RngSpec::new(3).stream(0);
    let draw = |g: &mut rand_chacha::ChaCha8Rng| {
        if g.gen_bool(0.05) {
            ProjPoint::Infinity
        } else {
            let s: f64 = 10f64.powf(g.gen_range(-3.0..3.0));
            ProjPoint::Finite(Complex64::from_polar(s, g.gen_range(0.0..2.0 * PI)))
        }
    };
    for _ in 0..10_000 {
        let (p, q, r) = (draw(&mut g), draw(&mut g), draw(&mut g));
        let (pq, qr, pr) = (chordal_distance(p, q), chordal_distance(q, r), chordal_distance(p, r));
        assert!((0.0..=1.0).contains(&pq));
        assert!(pr <= pq + qr + 1e-12);
        assert_eq!(chordal_distance(p, p), 0.0);
        if let ProjPoint::Finite(a) = p {
            let anti = if a.norm() == 0.0 { ProjPoint::Infinity } else { ProjPoint::Finite(-1.0 / a.conj()) };
            assert!((chordal_distance(p, anti) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn gradient_quotient_matches_finite_differences() {
    let mut g = RngSpec::new(4).stream(0);
    for m in [ModelManifold::flat(1).unwrap(), ModelManifold::hyperbolic(1.0).unwrap()] {
        let reach = m.chart_radius(3.0).unwrap();
        for t in corpus() {
            for _ in 0..170 {
                let z = Complex64::from_polar(reach * g.gen_range(0.05..1.0), g.gen_range(0.0..2.0 * PI));
                let Ok(q) = gradient_quotient(&t, &m, z) else { continue };
                let psi = |z: Complex64| {
                    let w = t.eval_homogeneous(z);
                    w[1] / w[0]
                };
                let h = 1e-6 * z.norm().max(1e-2);
                let d = (psi(z + h) - psi(z - h)) / (2.0 * h);
                let want = (d / psi(z)).norm() / m.conformal_factor(z.norm());
                assert!((q / want - 1.0).abs() < 1e-5, "{} at {z}: {q} vs {want}", t.id);
            }
        }
    }
}

/// Periodic trapezoid average of `log‖(1, ψ)‖` on `|z| = r`.
fn t_hat_oracle(psi: impl Fn(Complex64) -> Complex64, r: f64) -> f64 {
    let n = 1 << 16;
    let avg = (0..n)
        .map(|k| 0.5 * (1.0 + psi(Complex64::from_polar(r, 2.0 * PI * k as f64 / n as f64)).norm_sqr()).ln())
        .sum::<f64>()
        / n as f64;
    avg - 0.5 * (1.0 + psi(c(0.0)).norm_sqr()).ln()
}

#[test]
fn classical_values_on_the_plane() {
    let plane = ModelManifold::flat(1).unwrap();
    let o = EvalOptions::default();
    let ts = corpus();
    for r in [0.5, 2.0, 7.0, 20.0] {
        let z = characteristic(&ts[0], &plane, r, Method::Quadrature, &o).unwrap().value;
        assert!((z - 0.5 * (1.0 + r * r).ln()).abs() < 1e-9);
        let z2 = characteristic(&ts[1], &plane, r, Method::Quadrature, &o).unwrap().value;
        assert!((z2 - 0.5 * (1.0 + r.powi(4)).ln()).abs() < 1e-9);
        let e = characteristic(&ts[4], &plane, r, Method::Quadrature, &o).unwrap().value;
        assert!((e - t_hat_oracle(|z| z.exp(), r)).abs() < 1e-8);
        let m = proximity(&ts[0], &DivisorSpec::point(ProjPoint::Infinity), &plane, r, Proximity::Chordal, Method::Quadrature, &o)
            .unwrap()
            .value;
        assert!((m - 0.5 * (1.0 + r * r).ln()).abs() < 1e-9);
    }
    // zeros of e^z + 1 at iπ(2k+1); the Möbius map has a zero at 1, a pole at −2
    for r in [2.0, 10.0, 30.0] {
        let want: f64 = (-20i32..20)
            .map(|k| (PI * (2 * k + 1) as f64).abs())
            .filter(|a| *a < r)
            .map(|a| (r / a).ln())
            .sum();
        let got = counting_enumerated(&ts[4], &pt(-1.0, 0.0), &plane, r, false).unwrap();
        assert!((got - want).abs() < 1e-10, "r={r}: {got} vs {want}");
        let zero = counting_enumerated(&ts[3], &pt(0.0, 0.0), &plane, r, false).unwrap();
        assert!((zero - r.ln()).abs() < 1e-12);
        let pole = counting_enumerated(&ts[3], &DivisorSpec::point(ProjPoint::Infinity), &plane, r, false).unwrap();
        assert!((pole - (r / 2.0).ln().max(0.0)).abs() < 1e-12);
    }
    // the double zero of (z−1)² counts twice, once when truncated
    let d = pt(0.0, 0.0);
    let sq = MeromorphicTarget::polynomial("(z-1)^2", &[1.0, -2.0, 1.0]).unwrap();
    let n = counting_enumerated(&sq, &d, &plane, 3.0, false).unwrap();
    let nb = counting_enumerated(&sq, &d, &plane, 3.0, true).unwrap();
    assert!((n - 2.0 * 3f64.ln()).abs() < 1e-9 && (nb - 3f64.ln()).abs() < 1e-9);
}

#[test]
fn reference_point_on_divisor_is_rejected() {
    let z = &corpus()[0];
    let plane = ModelManifold::flat(1).unwrap();
    assert!(proximity(z, &pt(0.0, 0.0), &plane, 2.0, Proximity::Chordal, Method::Quadrature, &EvalOptions::default()).is_err());
    assert!(enumerate_divisor(z, &pt(0.0, 0.0), &plane, 2.0).is_err());
}

#[test]
fn table_csv_schema() {
    let t = &corpus()[2];
    let spec = TableSpec {
        radii: vec![2.0, 3.0],
        divisors: vec![pt(0.0, 0.0), DivisorSpec::point(ProjPoint::Infinity)],
        methods: vec![Method::Quadrature],
        mc_counting: false,
    };
    let table = NevanlinnaTable::build(t, &ModelManifold::flat(1).unwrap(), &spec, &EvalOptions::default()).unwrap();
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("r,quantity,divisor,method,value,se"));
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn functionals_are_monotone(idx in 0usize..6, r0 in 0.5f64..30.0, dr in 0.01f64..10.0, ar in -3.0f64..3.0, ai in -3.0f64..3.0) {
        let t = &corpus()[idx];
        let d = pt(ar, ai);
        prop_assume!(reference_constant(t, &d).is_ok());
        let plane = ModelManifold::flat(1).unwrap();
        let o = EvalOptions::default();
        let (r1, r2) = (r0, r0 + dr);
        let th = |r| characteristic(t, &plane, r, Method::Quadrature, &o).unwrap().value;
        prop_assert!(th(r2) >= th(r1) - 1e-9);
        for trunc in [false, true] {
            let n = |r| counting_enumerated(t, &d, &plane, r, trunc).unwrap();
            prop_assert!(n(r2) >= n(r1) - 1e-9);
        }
    }

    #[test]
    fn first_main_theorem_and_nevanlinna_inequality(idx in 0usize..6, r in 0.5f64..40.0, ar in -3.0f64..3.0, ai in -3.0f64..3.0) {
        let t = &corpus()[idx];
        let d = pt(ar, ai);
        let Ok(c_a) = reference_constant(t, &d) else { return Ok(()) };
        let plane = ModelManifold::flat(1).unwrap();
        let o = EvalOptions::default();
        let th = characteristic(t, &plane, r, Method::Quadrature, &o).unwrap().value;
        let m = proximity(t, &d, &plane, r, Proximity::Chordal, Method::Quadrature, &o).unwrap().value;
        let n = counting_enumerated(t, &d, &plane, r, false).unwrap();
        prop_assert!((th - m - n + c_a).abs() < 1e-6, "{}: T̂={th} m̂={m} N={n} C={c_a}", t.id);
        prop_assert!(n <= th + c_a + 1.0);
    }

    #[test]
    fn proximity_is_non_negative(idx in 0usize..6, r in 0.5f64..30.0, ar in -3.0f64..3.0) {
        let t = &corpus()[idx];
        let d = pt(ar, 0.0);
        prop_assume!(reference_constant(t, &d).is_ok());
        let plane = ModelManifold::flat(1).unwrap();
        let m = proximity(t, &d, &plane, r, Proximity::Chordal, Method::Quadrature, &EvalOptions::default()).unwrap().value;
        prop_assert!(m >= -1e-12);
    }
}
