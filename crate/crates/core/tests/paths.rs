use nevlab::manifold::{ChartPoint, ModelManifold};
use nevlab::rng::RngSpec;
use nevlab::stats::ks_two_sample;
use nevlab::stochastic::{path_functional, sample_exit, simulate_paths};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn ensembles_are_reproducible_and_thread_count_independent() {
    let m = ModelManifold::hyperbolic(1.0).unwrap();
    let rng = RngSpec::new(42);
    let run = || {
        let e = simulate_paths(&m, 1.0, 1e-3, 500, &rng).unwrap();
        (e.exit_times(), e.exit_angles(), e.exit_time_estimate())
    };
    let a = in_pool(1, run);
    let b = in_pool(3, run);
    assert_eq!(a.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.1, b.1);
    assert_eq!(a.2.mean.to_bits(), b.2.mean.to_bits());
    let other = simulate_paths(&m, 1.0, 1e-3, 500, &RngSpec::new(43)).unwrap();
    assert_ne!(other.exit_times(), a.0);
}

#[test]
fn unit_functional_reproduces_exit_times() {
    let m = ModelManifold::flat(1).unwrap();
    let e = simulate_paths(&m, 2.0, 1e-3, 300, &RngSpec::new(1)).unwrap();
    let one = path_functional(&e, |_: &ChartPoint| 1.0).unwrap();
    let tau = e.exit_time_estimate();
    assert_eq!(one.mean, tau.mean);
    assert_eq!(one.se, tau.se);
}

#[test]
fn exit_time_estimates_respect_the_flat_bound() {
    let manifolds = [
        ModelManifold::flat(1).unwrap(),
        ModelManifold::flat(2).unwrap(),
        ModelManifold::hyperbolic(1.0).unwrap(),
        ModelManifold::warped(|s| -0.5 / (1.0 + s), 20.0).unwrap(),
    ];
    for m in manifolds {
        let r = 1.0;
        let est = simulate_paths(&m, r, 2e-4, 4000, &RngSpec::new(9)).unwrap().exit_time_estimate();
        let bound = r * r / (2.0 * m.complex_dim() as f64);
        assert!(est.mean <= bound + 3.0 * est.se, "{}: {} ± {}", m.label(), est.mean, est.se);
    }
}

#[test]
fn exit_points_follow_harmonic_measure() {
    let m = ModelManifold::hyperbolic(1.0).unwrap();
    let r = 1.5;
    let ens = simulate_paths(&m, r, 2e-4, 3000, &RngSpec::new(17)).unwrap();
    let sampled = sample_exit(&m, r, 3000, &RngSpec::new(18)).unwrap();
    let angles: Vec<f64> = sampled.iter().map(|p| p.coords()[1].atan2(p.coords()[0]).rem_euclid(std::f64::consts::TAU)).collect();
    let ks = ks_two_sample(&ens.exit_angles(), &angles);
    assert!(ks.p_value > 0.01, "angle KS p = {}", ks.p_value);
    // radii are pinned to the sphere by the exit projection
    let rho = m.chart_radius(r).unwrap();
    assert!(ens.exit_chart_radii().iter().all(|x| (x / rho - 1.0).abs() < 1e-12));
    assert!(sampled.iter().all(|p| (p.norm() / rho - 1.0).abs() < 1e-12));
}

#[test]
fn csv_export_has_one_row_per_path() {
    let e = simulate_paths(&ModelManifold::flat(1).unwrap(), 1.0, 1e-3, 50, &RngSpec::new(2)).unwrap();
    let mut buf = Vec::new();
    e.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 4);
    assert_eq!(lines.count(), 50);
}
