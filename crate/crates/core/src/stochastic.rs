//! Brownian motion generated by `Δ_M/2` on model manifolds: exit times,
//! exit points, path functionals and the Bessel comparison coupling.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ChartPoint, ModelManifold};
use crate::rng::RngSpec;
use crate::stats::Estimate;

/// Hard cap on steps per path.
pub const DEFAULT_STEP_BUDGET: u64 = 100_000_000;

/// Censoring fraction above which a warning is logged.
pub const CENSOR_WARN_FRACTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub step_budget: u64,
    /// Brownian-bridge test for boundary crossings between grid times.
    pub bridge_correction: bool,
    /// Keep every visited chart point (small ensembles only).
    pub keep_positions: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { step_budget: DEFAULT_STEP_BUDGET, bridge_correction: true, keep_positions: false }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform samples on `S_o(r)` in chart coordinates: the harmonic measure of
/// a center-started symmetric manifold.
pub fn sample_exit(manifold: &ModelManifold, r: f64, n: usize, rng: &RngSpec) -> Result<Vec<ChartPoint>> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let rho = manifold.chart_radius(r)?;
    let d = manifold.real_dim();
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = rng.stream(i);
            loop {
                let mut p = ChartPoint::origin(d);
                p.coords_mut().iter_mut().for_each(|c| *c = normal(&mut g));
                let norm = p.norm();
                if norm > 1e-300 {
                    return p.scaled(rho / norm);
                }
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub index: u64,
    pub exit_time: f64,
    pub exit_point: ChartPoint,
    pub steps: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub positions: Option<Vec<ChartPoint>>,
}

#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub manifold: ModelManifold,
    pub r: f64,
    pub dt: f64,
    pub rng: RngSpec,
    pub options: SimOptions,
    pub paths: Vec<PathRecord>,
    /// Indices of paths abandoned at the step budget.
    pub censored: Vec<u64>,
}

enum Outcome {
    Exited { time: f64, point: ChartPoint, steps: u64, integral: f64 },
    Censored,
}

struct Walker<'a> {
    manifold: &'a ModelManifold,
    rho_exit: f64,
    dt: f64,
    options: SimOptions,
}

impl Walker<'_> {
    /// One path; `phi` is integrated by the trapezoid rule on the same time
    /// increments that build the exit time, so `φ ≡ 1` reproduces `τ` exactly.
    fn run<F: Fn(&ChartPoint) -> f64>(
        &self,
        rng: &mut ChaCha8Rng,
        phi: Option<&F>,
        mut positions: Option<&mut Vec<ChartPoint>>,
    ) -> Result<Outcome> {
        let d = self.manifold.real_dim();
        let curved = !self.manifold.is_flat();
        let big_r = self.rho_exit;
        let sq = self.dt.sqrt();
        let eval = |p: &ChartPoint| -> Result<f64> {
            match phi {
                None => Ok(0.0),
                Some(f) => {
                    let v = f(p);
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::NonFinite { location: format!("integrand at chart point {p}") })
                    }
                }
            }
        };
        let mut x = ChartPoint::origin(d);
        let mut t = 0.0;
        let mut acc = 0.0;
        let mut fa = eval(&x)?;
        if let Some(p) = positions.as_deref_mut() {
            p.push(x);
        }
        for step in 0..self.options.step_budget {
            let nx = x.norm();
            let sigma = if curved { sq / self.manifold.conformal_factor(nx) } else { sq };
            let mut y = x;
            y.coords_mut().iter_mut().for_each(|c| *c += sigma * normal(rng));
            let ny = y.norm();
            let exit = if ny >= big_r {
                // first crossing along the increment: |x + uΔ| = R
                let (mut a, mut b) = (0.0, 0.0);
                for (xi, yi) in x.coords().iter().zip(y.coords()) {
                    let di = yi - xi;
                    a += di * di;
                    b += xi * di;
                }
                let c = nx * nx - big_r * big_r;
                let u = ((-b + (b * b - a * c).max(0.0).sqrt()) / a).clamp(0.0, 1.0);
                let mut e = x;
                for (ei, yi) in e.coords_mut().iter_mut().zip(y.coords()) {
                    *ei += u * (yi - *ei);
                }
                let ne = e.norm();
                Some((e.scaled(big_r / ne), u * self.dt))
            } else if self.options.bridge_correction {
                let (d1, d2) = (big_r - nx, big_r - ny);
                let p = (-2.0 * d1 * d2 / (sigma * sigma)).exp();
                if p > 1e-12 && rng.gen::<f64>() < p {
                    Some((y.scaled(big_r / ny), 0.5 * self.dt))
                } else {
                    None
                }
            } else {
                None
            };
            if let Some((point, h)) = exit {
                let fb = eval(&point)?;
                acc += 0.5 * (fa + fb) * h;
                t += h;
                if let Some(p) = positions.as_deref_mut() {
                    p.push(point);
                }
                return Ok(Outcome::Exited { time: t, point, steps: step + 1, integral: acc });
            }
            let fb = eval(&y)?;
            acc += 0.5 * (fa + fb) * self.dt;
            t += self.dt;
            x = y;
            fa = fb;
            if let Some(p) = positions.as_deref_mut() {
                p.push(x);
            }
        }
        Ok(Outcome::Censored)
    }
}

fn check_sim_args(manifold: &ModelManifold, r: f64, dt: f64, n: usize) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    if !(dt > 0.0) || dt > 1e-2 * r * r {
        return Err(Error::InvalidArgument(format!("dt = {dt} must lie in (0, 1e-2·r²]")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    if !manifold.is_flat() && !manifold.is_surface() {
        return Err(Error::Unsupported("curved manifolds are simulated in real dimension 2 only".into()));
    }
    manifold.chart_radius(r)
}

/// Simulates `n` paths from the center until they leave `B_o(r)`.
pub fn simulate_paths(manifold: &ModelManifold, r: f64, dt: f64, n: usize, rng: &RngSpec) -> Result<PathEnsemble> {
    simulate_paths_with(manifold, r, dt, n, rng, SimOptions::default())
}

pub fn simulate_paths_with(
    manifold: &ModelManifold,
    r: f64,
    dt: f64,
    n: usize,
    rng: &RngSpec,
    options: SimOptions,
) -> Result<PathEnsemble> {
    let rho_exit = check_sim_args(manifold, r, dt, n)?;
    let walker = Walker { manifold, rho_exit, dt, options };
    let results: Vec<Result<Option<PathRecord>>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = rng.stream(i);
            let mut positions = options.keep_positions.then(Vec::new);
            match walker.run::<fn(&ChartPoint) -> f64>(&mut g, None, positions.as_mut())? {
                Outcome::Exited { time, point, steps, .. } => {
                    Ok(Some(PathRecord { index: i, exit_time: time, exit_point: point, steps, positions }))
                }
                Outcome::Censored => Ok(None),
            }
        })
        .collect();
    let mut paths = Vec::with_capacity(n);
    let mut censored = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(p) => paths.push(p),
            None => censored.push(i as u64),
        }
    }
    if paths.is_empty() {
        return Err(Error::AllPathsCensored { n, budget: options.step_budget });
    }
    if censored.len() as f64 > CENSOR_WARN_FRACTION * n as f64 {
        log::warn!(
            "{} of {n} paths hit the step budget of {} and were excluded",
            censored.len(),
            options.step_budget
        );
    }
    Ok(PathEnsemble { manifold: manifold.clone(), r, dt, rng: *rng, options, paths, censored })
}

impl PathEnsemble {
    pub fn exit_times(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.exit_time).collect()
    }

    pub fn exit_time_estimate(&self) -> Estimate {
        Estimate::from_samples(&self.exit_times())
    }

    pub fn exit_angles(&self) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| {
                let z = p.exit_point.as_complex();
                z.im.atan2(z.re).rem_euclid(2.0 * PI)
            })
            .collect()
    }

    pub fn exit_chart_radii(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.exit_point.norm()).collect()
    }

    /// `path,tau,exit_angle,exit_chart_radius`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "path,tau,exit_angle,exit_chart_radius")?;
        for (p, angle) in self.paths.iter().zip(self.exit_angles()) {
            writeln!(w, "{},{},{},{}", p.index, p.exit_time, angle, p.exit_point.norm())?;
        }
        Ok(())
    }
}

/// `E_o[∫_0^{τ_r} φ(X_t) dt]` over the (non-censored) paths of an ensemble.
/// Paths are regenerated from their streams, so the estimate uses exactly
/// the paths behind the ensemble's exit times.
pub fn path_functional<F>(ensemble: &PathEnsemble, phi: F) -> Result<Estimate>
where
    F: Fn(&ChartPoint) -> f64 + Sync,
{
    let rho_exit = ensemble.manifold.chart_radius(ensemble.r)?;
    let options = SimOptions { keep_positions: false, ..ensemble.options };
    let walker = Walker { manifold: &ensemble.manifold, rho_exit, dt: ensemble.dt, options };
    let values: Vec<Result<f64>> = ensemble
        .paths
        .par_iter()
        .map(|rec| {
            let mut g = ensemble.rng.stream(rec.index);
            match walker.run(&mut g, Some(&phi), None)? {
                Outcome::Exited { integral, .. } => Ok(integral),
                Outcome::Censored => Err(Error::InvalidArgument(format!(
                    "path {} was not reproduced within the step budget",
                    rec.index
                ))),
            }
        })
        .collect();
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&values))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Largest planar step.
    pub max_step: f64,
    /// Step as a fraction of the caller's local length scale.
    pub local_fraction: f64,
    /// Paths stop once the functional reaches this value.
    pub cap: f64,
    pub step_budget: u64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { max_step: 0.03, local_fraction: 0.1, cap: 30.0, step_budget: 10_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSups {
    /// Per-path `sup F` along the trace, truncated at the cap.
    pub sups: Vec<f64>,
    pub censored: usize,
    pub total_steps: u64,
}

/// `sup F` along the trace of Brownian motion in a surface chart, up to the
/// exit of the chart disc of radius `chart_radius`.
///
/// On a surface, Brownian motion is a time change of planar Brownian motion
/// in the conformal chart, so its trace does not depend on the metric. Steps
/// are therefore purely spatial: `min(max_step·R, local_fraction·scale(z))`.
pub fn trace_sup<F, S>(
    chart_radius: f64,
    n: usize,
    rng: &RngSpec,
    functional: F,
    local_scale: S,
    options: TraceOptions,
) -> Result<TraceSups>
where
    F: Fn(Complex64) -> f64 + Sync,
    S: Fn(Complex64) -> f64 + Sync,
{
    if !(chart_radius > 0.0 && chart_radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("chart radius must be positive, got {chart_radius}")));
    }
    let out: Vec<(Option<f64>, u64)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = rng.stream(i);
            let mut z = Complex64::new(0.0, 0.0);
            let mut sup = functional(z);
            for step in 0..options.step_budget {
                if sup >= options.cap {
                    return (Some(options.cap), step);
                }
                let h = (options.max_step * chart_radius).min(options.local_fraction * local_scale(z)).max(1e-300);
                let y = z + Complex64::new(normal(&mut g), normal(&mut g)) * h;
                let (nz, ny) = (z.norm(), y.norm());
                if ny >= chart_radius {
                    let d = y - z;
                    let (a, b, c) = (d.norm_sqr(), z.re * d.re + z.im * d.im, nz * nz - chart_radius * chart_radius);
                    let u = ((-b + (b * b - a * c).max(0.0).sqrt()) / a).clamp(0.0, 1.0);
                    let e = z + d * u;
                    let e = e * (chart_radius / e.norm());
                    return (Some(sup.max(functional(e)).min(options.cap)), step + 1);
                }
                let (d1, d2) = (chart_radius - nz, chart_radius - ny);
                if (-2.0 * d1 * d2 / (h * h)).exp() > g.gen::<f64>() {
                    let e = y * (chart_radius / ny);
                    return (Some(sup.max(functional(y)).max(functional(e)).min(options.cap)), step + 1);
                }
                sup = sup.max(functional(y));
                z = y;
            }
            (None, options.step_budget)
        })
        .collect();
    let total_steps = out.iter().map(|x| x.1).sum();
    let censored = out.iter().filter(|x| x.0.is_none()).count();
    let sups: Vec<f64> = out.into_iter().filter_map(|x| x.0).collect();
    if sups.is_empty() {
        return Err(Error::AllPathsCensored { n, budget: options.step_budget });
    }
    if censored as f64 > CENSOR_WARN_FRACTION * n as f64 {
        log::warn!("{censored} of {n} trace paths hit the step budget");
    }
    Ok(TraceSups { sups, censored, total_steps })
}

/// Outcome of driving the manifold radial process and the Bessel process
/// with the same Gaussian increments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselReport {
    pub paths: usize,
    /// Steps before `τ_r`, summed over paths.
    pub steps: u64,
    /// Steps with `W_t > r(X_t) + slack`.
    pub violating_steps: u64,
    pub violation_fraction: f64,
    pub slack: f64,
    /// Largest `W_t − r(X_t)` seen before `τ_r`.
    pub max_gap: f64,
    /// Paths with `ι_r ≥ τ_r`.
    pub ordered_paths: usize,
    pub ordering_fraction: f64,
    pub censored: usize,
}

/// Drift-implicit Euler step `W' = a + c·dt/W'` (positive root).
fn implicit_bessel_step(a: f64, dt: f64, c: f64) -> f64 {
    0.5 * (a + (a * a + 4.0 * c * dt).sqrt())
}

/// Drift-implicit Euler step `x' = a + ½Δ_M r(x')·dt`, started from the
/// Bessel solution, which bounds it from below when `Δ_M r ≥ (2m−1)/r`.
fn implicit_radial_step(manifold: &ModelManifold, a: f64, dt: f64, c: f64) -> f64 {
    let guess = implicit_bessel_step(a, dt, c);
    if manifold.is_flat() {
        return guess;
    }
    let drift = |x: f64| 0.5 * manifold.radial_laplacian(x).unwrap_or(f64::NAN);
    let mut x = guess;
    for _ in 0..30 {
        let f = x - dt * drift(x) - a;
        let eps = 1e-7 * x;
        let df = 1.0 - dt * (drift(x + eps) - drift(x)) / eps;
        let next = (x - f / df).max(0.5 * x);
        if !next.is_finite() {
            break;
        }
        let done = (next - x).abs() <= 1e-15 * x;
        x = next;
        if done {
            break;
        }
    }
    x
}

/// Couples `dr = dβ + ½Δ_M r dt` with the `2m`-dimensional Bessel process
/// `dW = dβ + ((2m−1)/2) dt / W`, started with the same exact first step
/// from the origin. Both use drift-implicit Euler steps, which stay positive
/// and preserve the ordering of the two drifts step by step.
pub fn coupled_bessel_check(
    manifold: &ModelManifold,
    r: f64,
    dt: f64,
    n: usize,
    rng: &RngSpec,
) -> Result<BesselReport> {
    check_sim_args(manifold, r, dt, n)?;
    let d = manifold.real_dim();
    let bessel_drift = 0.5 * (d - 1) as f64;
    let slack = 3.0 * dt.sqrt();
    let budget = DEFAULT_STEP_BUDGET;
    let results: Vec<Option<(u64, u64, f64, bool)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = rng.stream(i);
            let sq = dt.sqrt();
            let first: f64 = (0..d).map(|_| normal(&mut g).powi(2)).sum::<f64>().sqrt() * sq;
            let (mut x, mut w) = (first, first);
            let (mut tau, mut iota): (Option<u64>, Option<u64>) = (None, None);
            let (mut steps, mut bad, mut gap) = (0u64, 0u64, f64::NEG_INFINITY);
            for k in 1..budget {
                if tau.is_none() && x >= r {
                    tau = Some(k);
                }
                if iota.is_none() && w >= r {
                    iota = Some(k);
                }
                if let (Some(t), Some(j)) = (tau, iota) {
                    return Some((steps, bad, gap, j >= t));
                }
                if tau.is_none() {
                    steps += 1;
                    gap = gap.max(w - x);
                    if w > x + slack {
                        bad += 1;
                    }
                }
                let db = normal(&mut g) * sq;
                if tau.is_none() {
                    x = implicit_radial_step(manifold, x + db, dt, bessel_drift);
                }
                if iota.is_none() {
                    w = implicit_bessel_step(w + db, dt, bessel_drift);
                }
            }
            None
        })
        .collect();
    let done: Vec<_> = results.iter().flatten().collect();
    let censored = n - done.len();
    if done.is_empty() {
        return Err(Error::AllPathsCensored { n, budget });
    }
    let steps: u64 = done.iter().map(|x| x.0).sum();
    let violating_steps: u64 = done.iter().map(|x| x.1).sum();
    let max_gap = done.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
    let ordered_paths = done.iter().filter(|x| x.3).count();
    Ok(BesselReport {
        paths: done.len(),
        steps,
        violating_steps,
        violation_fraction: violating_steps as f64 / steps.max(1) as f64,
        slack,
        max_gap,
        ordered_paths,
        ordering_fraction: ordered_paths as f64 / done.len() as f64,
        censored,
    })
}
