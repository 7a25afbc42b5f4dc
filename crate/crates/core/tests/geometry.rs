use std::f64::consts::PI;

use nevlab::greens::{coarea_quadrature, green_comparison_ratio, green_radial, Integrand};
use nevlab::manifold::{solve_warp, solve_warp_on, ChartPoint, CurvatureProfile, ModelManifold};
use nevlab::rng::RngSpec;
use nevlab::stochastic::{path_functional, simulate_paths};
use proptest::prelude::*;

fn warped_curved() -> ModelManifold {
    ModelManifold::warped(|s| -1.0 / (1.0 + s * s), 30.0).unwrap()
}

fn all_manifolds() -> Vec<ModelManifold> {
    vec![
        ModelManifold::flat(1).unwrap(),
        ModelManifold::flat(2).unwrap(),
        ModelManifold::flat(3).unwrap(),
        ModelManifold::hyperbolic(1.0).unwrap(),
        ModelManifold::hyperbolic(0.3).unwrap(),
        warped_curved(),
    ]
}

#[test]
fn warp_derivative_matches_finite_differences() {
    for m in [ModelManifold::hyperbolic(0.7).unwrap(), warped_curved()] {
        for s in [0.3, 1.0, 2.5, 6.0] {
            let h = 1e-5 * s;
            let fd = (m.warp(s + h) - m.warp(s - h)) / (2.0 * h);
            assert!((m.warp_derivative(s) / fd - 1.0).abs() < 1e-7, "{} at {s}", m.label());
        }
    }
}

#[test]
fn gaussian_curvature_is_minus_w_second_over_w() {
    for m in [ModelManifold::hyperbolic(1.3).unwrap(), warped_curved()] {
        for s in [0.5, 1.5, 4.0] {
            let h = 1e-3;
            let w2 = (m.warp(s + h) - 2.0 * m.warp(s) + m.warp(s - h)) / (h * h);
            let k = -w2 / m.warp(s);
            assert!((m.gaussian_curvature(s) - k).abs() < 1e-5 * k.abs().max(1e-3), "{} at {s}", m.label());
        }
    }
}

#[test]
fn radial_laplacian_is_log_derivative_of_area() {
    for m in all_manifolds() {
        for s in [0.4, 1.1, 3.0] {
            let h = 1e-6 * s;
            let fd = (m.sphere_area(s + h).ln() - m.sphere_area(s - h).ln()) / (2.0 * h);
            assert!((m.radial_laplacian(s).unwrap() / fd - 1.0).abs() < 1e-6, "{} at {s}", m.label());
        }
    }
}

#[test]
fn chart_and_geodesic_radii_are_inverse() {
    for m in [ModelManifold::hyperbolic(1.0).unwrap(), warped_curved()] {
        for s in [0.01, 0.5, 2.0, 8.0] {
            let rho = m.chart_radius(s).unwrap();
            assert!((m.geodesic_radius(rho).unwrap() / s - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn warp_matches_sinh_under_richardson_step_halving() {
    let kappa = CurvatureProfile::user(|t| -1.0 / (1.0 + t).powi(2));
    let grid: Vec<f64> = (0..=400).map(|i| 5.0 * i as f64 / 400.0).collect();
    let coarse = solve_warp_on(&kappa, &grid, 1e-10, 1_000_000).unwrap();
    let fine = solve_warp_on(&kappa, &grid, 1e-13, 4_000_000).unwrap();
    for (a, b) in coarse.g.iter().zip(&fine.g).skip(1) {
        assert!((a / b - 1.0).abs() < 1e-8);
    }
    let w = solve_warp(&CurvatureProfile::constant(-1.0), 5.0, 1e-10).unwrap();
    for (t, g) in w.grid.iter().zip(&w.g).skip(1) {
        assert!((g / t.sinh() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn flat_and_zero_curvature_warp_agree() {
    let flat = ModelManifold::flat(1).unwrap();
    let warped = ModelManifold::warped(|_| 0.0, 60.0).unwrap();
    for s in [0.1, 1.0, 7.0, 40.0] {
        assert!((warped.warp(s) / flat.warp(s) - 1.0).abs() < 1e-10);
        assert!((warped.chart_radius(s).unwrap() / flat.chart_radius(s).unwrap() - 1.0).abs() < 1e-10);
        let (gf, gw) = (green_radial(&flat, 50.0, s).unwrap(), green_radial(&warped, 50.0, s).unwrap());
        assert!((gf - gw).abs() < 1e-10 * gf.abs().max(1.0));
    }
    let tf = coarea_quadrature(&flat, 5.0, Integrand::Radial(&|s| s), 1e-10).unwrap();
    let tw = coarea_quadrature(&warped, 5.0, Integrand::Radial(&|s| s), 1e-10).unwrap();
    assert!((tf / tw - 1.0).abs() < 1e-8);
}

#[test]
fn curved_green_function_is_dominated_by_flat() {
    let flat = ModelManifold::flat(1).unwrap();
    for m in [ModelManifold::hyperbolic(1.0).unwrap(), warped_curved()] {
        for r in [0.5, 2.0, 5.0, 9.0] {
            for k in 1..20 {
                let s = r * k as f64 / 20.0;
                assert!(green_radial(&m, r, s).unwrap() <= green_radial(&flat, r, s).unwrap() + 1e-12);
            }
        }
    }
}

#[test]
fn green_comparison_ratio_stays_positive() {
    let m = ModelManifold::hyperbolic(1.0).unwrap();
    let w = solve_warp(&CurvatureProfile::from_manifold(&m), 20.0, 1e-10).unwrap();
    let mut least = f64::INFINITY;
    for r in [2.0, 5.0, 10.0, 20.0] {
        for k in 1..10 {
            least = least.min(green_comparison_ratio(&m, &w, r, r * k as f64 / 10.0).unwrap());
        }
    }
    assert!(least > 0.0 && least.is_finite());
}

#[test]
fn coarea_agrees_with_occupation_integrals() {
    let rng = RngSpec::new(5);
    for m in [ModelManifold::flat(1).unwrap(), ModelManifold::hyperbolic(1.0).unwrap(), ModelManifold::flat(2).unwrap()] {
        let r = 1.5;
        let ens = simulate_paths(&m, r, 2e-4, 4000, &rng).unwrap();
        for (name, phi) in [("one", (|_s: f64| 1.0) as fn(f64) -> f64), ("s2", |s: f64| s * s), ("cos", |s: f64| s.cos())] {
            let q = coarea_quadrature(&m, r, Integrand::Radial(&phi), 1e-10).unwrap();
            let e = path_functional(&ens, |p: &ChartPoint| phi(m.distance(p).unwrap())).unwrap();
            assert!(e.z_score(q).abs() < 3.0, "{} {name}: {} ± {} vs {q}", m.label(), e.mean, e.se);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn flat_green_closed_form(r in 0.01f64..100.0, u in 1e-6f64..1.0) {
        let s = r * u;
        let g1 = green_radial(&ModelManifold::flat(1).unwrap(), r, s).unwrap();
        prop_assert!((g1 - (r / s).ln() / PI).abs() <= 1e-12 * g1.abs().max(1e-300));
        let g2 = green_radial(&ModelManifold::flat(2).unwrap(), r, s).unwrap();
        let want = (s.powi(-2) - r.powi(-2)) / (2.0 * PI * PI);
        prop_assert!((g2 / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_curvature_dominates_ricci(idx in 0usize..6, u in 0.0f64..1.0) {
        let m = &all_manifolds()[idx];
        let s = u * (0.9 * m.max_radius()).min(50.0);
        let rho = m.chart_radius(s).unwrap();
        let mut x = vec![0.0; m.real_dim()];
        x[0] = rho;
        let (sm, mr) = m.curvature_scalar_pair(&ChartPoint::from_slice(&x)).unwrap();
        prop_assert!(sm >= mr - 1e-10);
    }

    #[test]
    fn warp_bounds_hold(k in 0.0f64..4.0, t_max in 0.5f64..6.0) {
        let w = solve_warp(&CurvatureProfile::constant(-k), t_max, 1e-10).unwrap();
        let b = w.check_bounds();
        prop_assert!(b.lower_holds && b.upper_holds && b.strictly_increasing);
        if t_max > 1.0 {
            let r = 1.0 + 0.5 * (t_max - 1.0);
            prop_assert!(w.integral_of_power(1.0, r, -1.0).unwrap() <= r.ln() + 1e-12);
        }
    }

    #[test]
    fn mean_exit_time_bound(idx in 0usize..6, r in 0.2f64..4.0) {
        let m = &all_manifolds()[idx];
        let t = nevlab::greens::mean_exit_time(m, r, 1e-10).unwrap();
        let bound = r * r / (2.0 * m.complex_dim() as f64);
        prop_assert!(t <= bound * (1.0 + 1e-9), "{} r={r}: {t} > {bound}", m.label());
    }
}
