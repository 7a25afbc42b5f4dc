//! Nevanlinna functionals of surface targets by circle quadrature (exact
//! harmonic measure) and by Brownian-motion Monte Carlo.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{coarea_quadrature, Integrand};
use crate::manifold::{ChartPoint, ModelManifold};
use crate::quadrature::Quadrature;
use crate::rng::RngSpec;
use crate::stats::Estimate;
use crate::stochastic::{path_functional, simulate_paths, trace_sup, PathEnsemble, TraceOptions};
use crate::targets::{enumerate_divisor, zeros_in_disc, DivisorSpec, MeromorphicTarget, ProjPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Quadrature,
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "montecarlo",
        })
    }
}

/// Proximity flavors: chordal `m̂` (exact in the first main theorem) and the
/// classical `log⁺` form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Proximity {
    Chordal,
    LogPlus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSettings {
    pub paths: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_points: usize,
    /// Residual bound, in standard errors, for the linearity test.
    pub max_residual_se: f64,
    pub trace: TraceOptions,
}

impl Default for TailSettings {
    fn default() -> Self {
        Self {
            paths: 100_000,
            lambda_min: 6.0,
            lambda_max: 24.0,
            lambda_points: 8,
            max_residual_se: 4.0,
            trace: TraceOptions { cap: 24.0, ..TraceOptions::default() },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub paths: usize,
    /// Time step as a multiple of `r²`.
    pub dt_factor: f64,
    pub rng: RngSpec,
    pub tail: TailSettings,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { paths: 10_000, dt_factor: 1e-4, rng: RngSpec::new(0), tail: TailSettings::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub quad_tol: f64,
    pub mc: McSettings,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { quad_tol: 1e-10, mc: McSettings::default() }
    }
}

/// A computed functional value; `se` is set for Monte-Carlo entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Value {
    pub value: f64,
    pub se: Option<f64>,
    pub method: Method,
}

impl Value {
    fn quad(value: f64) -> Self {
        Self { value, se: None, method: Method::Quadrature }
    }

    fn mc(e: Estimate) -> Self {
        Self { value: e.mean, se: Some(e.se), method: Method::MonteCarlo }
    }
}

/// `log ‖w‖` without overflow.
pub fn log_norm(w: &[Complex64]) -> f64 {
    let big = w.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if big == 0.0 {
        return f64::NEG_INFINITY;
    }
    let s: f64 = w.iter().map(|x| (x.norm() / big).powi(2)).sum();
    big.ln() + 0.5 * s.ln()
}

fn require_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("radius must be positive, got {r}")))
    }
}

/// Angles of points close to the circle `|z| = rho`, as quadrature breakpoints.
fn angles_near(points: &[Complex64], rho: f64) -> Vec<f64> {
    let mut a: Vec<f64> = points
        .iter()
        .filter(|z| (z.norm() - rho).abs() < 0.25 * rho)
        .map(|z| z.im.atan2(z.re).rem_euclid(2.0 * PI))
        .collect();
    a.sort_by(|x, y| x.total_cmp(y));
    a
}

fn circle_average<F: Fn(Complex64) -> f64>(rho: f64, f: F, breaks: &[f64], tol: f64) -> Result<f64> {
    let q = Quadrature::new(tol, 1e-12).with_max_intervals(20_000);
    Ok(q.integrate_with_breaks(|th| f(Complex64::from_polar(rho, th)), 0.0, 2.0 * PI, breaks)?.value / (2.0 * PI))
}

fn target_breaks(target: &MeromorphicTarget, extra: Option<&DivisorSpec>, rho: f64) -> Result<Vec<f64>> {
    let mut pts = target.special_points(2.0 * rho)?;
    if let Some(d) = extra {
        pts.extend(zeros_in_disc(&target.pullback(d)?, 2.0 * rho)?.into_iter().map(|x| x.0));
    }
    Ok(angles_near(&pts, rho))
}

fn mc_ensemble(manifold: &ModelManifold, r: f64, mc: &McSettings) -> Result<PathEnsemble> {
    if mc.paths < 100 {
        return Err(Error::InvalidArgument(format!("Monte-Carlo needs at least 100 paths, got {}", mc.paths)));
    }
    simulate_paths(manifold, r, mc.dt_factor * r * r, mc.paths, &mc.rng)
}

/// Targets are functions of one complex variable.
fn require_surface(manifold: &ModelManifold) -> Result<()> {
    if manifold.complex_dim() == 1 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("targets live on surfaces; {} has complex dimension {}", manifold.label(), manifold.complex_dim())))
    }
}

fn require_p1(target: &MeromorphicTarget) -> Result<()> {
    if target.target_dim() == 1 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("'{}' maps to ℙ^{}; this functional needs a ℙ¹ target", target.id, target.target_dim())))
    }
}

/// Fubini–Study characteristic `T̂(r)`.
///
/// Quadrature uses `½·avg log‖w‖² − ½ log‖w(o)‖²` on the reduced
/// representation, which equals the Green-weighted integral of the pulled-back
/// Fubini–Study density; Monte Carlo integrates that density along paths.
pub fn characteristic(
    target: &MeromorphicTarget,
    manifold: &ModelManifold,
    r: f64,
    method: Method,
    opts: &EvalOptions,
) -> Result<Value> {
    require_radius(r)?;
    require_surface(manifold)?;
    let rho = manifold.chart_radius(r)?;
    match method {
        Method::Quadrature => {
            let breaks = target_breaks(target, None, rho)?;
            let avg = circle_average(rho, |z| log_norm(&target.eval_homogeneous(z)), &breaks, opts.quad_tol)?;
            Ok(Value::quad(avg - log_norm(&target.eval_homogeneous(Complex64::new(0.0, 0.0)))))
        }
        Method::MonteCarlo => {
            let ens = mc_ensemble(manifold, r, &opts.mc)?;
            characteristic_on(target, &ens)
        }
    }
}

/// Pulled-back Fubini–Study density `Σ_{i<j} |w_i w_j′ − w_j w_i′|² / (λ² ‖w‖⁴)`.
pub fn fubini_study_density(target: &MeromorphicTarget, manifold: &ModelManifold, z: Complex64) -> f64 {
    let w = target.eval_homogeneous(z);
    let d = target.eval_derivative(z);
    let big = w.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let (w, d): (Vec<Complex64>, Vec<Complex64>) = (w.iter().map(|x| x / big).collect(), d.iter().map(|x| x / big).collect());
    let mut num = 0.0;
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            num += (w[i] * d[j] - w[j] * d[i]).norm_sqr();
        }
    }
    let n2: f64 = w.iter().map(|x| x.norm_sqr()).sum();
    let lam = manifold.conformal_factor(z.norm());
    num / (lam * lam * n2 * n2)
}

pub fn characteristic_on(target: &MeromorphicTarget, ens: &PathEnsemble) -> Result<Value> {
    let m = &ens.manifold;
    path_functional(ens, |p: &ChartPoint| fubini_study_density(target, m, p.as_complex())).map(Value::mc)
}

fn logplus(x: f64) -> f64 {
    x.max(0.0)
}

/// Pointwise proximity integrand at a chart point.
fn proximity_integrand(target: &MeromorphicTarget, divisor: &DivisorSpec, flavor: Proximity, z: Complex64) -> f64 {
    let w = target.eval_homogeneous(z);
    match flavor {
        Proximity::Chordal => divisor.log_inverse_distance(&w),
        Proximity::LogPlus => {
            // log⁺ 1/|ψ − a| or log⁺|ψ|, with ψ = w₁/w₀
            let a = &divisor.hyperplane;
            if a[0].norm() != 0.0 && a[1].norm() == 0.0 {
                logplus(w[1].norm().ln() - w[0].norm().ln())
            } else {
                let val = -a[0] / a[1];
                logplus(w[0].norm().ln() - (w[1] - val * w[0]).norm().ln())
            }
        }
    }
}

/// Proximity `m̂(r, a)` or `m(r, a)`.
pub fn proximity(
    target: &MeromorphicTarget,
    divisor: &DivisorSpec,
    manifold: &ModelManifold,
    r: f64,
    flavor: Proximity,
    method: Method,
    opts: &EvalOptions,
) -> Result<Value> {
    require_radius(r)?;
    require_surface(manifold)?;
    check_reference(target, divisor)?;
    if flavor == Proximity::LogPlus {
        require_p1(target)?;
    }
    let rho = manifold.chart_radius(r)?;
    match method {
        Method::Quadrature => {
            let breaks = target_breaks(target, Some(divisor), rho)?;
            circle_average(rho, |z| proximity_integrand(target, divisor, flavor, z), &breaks, opts.quad_tol)
                .map(Value::quad)
        }
        Method::MonteCarlo => {
            let ens = mc_ensemble(manifold, r, &opts.mc)?;
            proximity_on(target, divisor, flavor, &ens)
        }
    }
}

pub fn proximity_on(target: &MeromorphicTarget, divisor: &DivisorSpec, flavor: Proximity, ens: &PathEnsemble) -> Result<Value> {
    let vals: Vec<f64> = ens
        .paths
        .iter()
        .map(|p| proximity_integrand(target, divisor, flavor, p.exit_point.as_complex()))
        .collect();
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { location: format!("proximity integrand value {v} at an exit point") });
    }
    Ok(Value::mc(Estimate::from_samples(&vals)))
}

fn check_reference(target: &MeromorphicTarget, divisor: &DivisorSpec) -> Result<()> {
    let f = target.pullback(divisor)?;
    let o = Complex64::new(0.0, 0.0);
    if f.eval(o).norm() <= 1e-13 * f.eval_abs(o) {
        return Err(Error::ReferencePointOnDivisor { value: divisor.label.clone() });
    }
    Ok(())
}

/// `log 1/‖f(o), D‖`: the constant in the first main theorem.
pub fn reference_constant(target: &MeromorphicTarget, divisor: &DivisorSpec) -> Result<f64> {
    check_reference(target, divisor)?;
    Ok(divisor.log_inverse_distance(&target.eval_homogeneous(Complex64::new(0.0, 0.0))))
}

/// Counting function `N(r, a)` (or `N̄` when `truncated`).
pub fn counting(
    target: &MeromorphicTarget,
    divisor: &DivisorSpec,
    manifold: &ModelManifold,
    r: f64,
    truncated: bool,
    method: Method,
    opts: &EvalOptions,
) -> Result<Value> {
    require_radius(r)?;
    require_surface(manifold)?;
    match method {
        Method::Quadrature => counting_enumerated(target, divisor, manifold, r, truncated).map(Value::quad),
        Method::MonteCarlo => {
            if truncated {
                return Err(Error::Unsupported("the tail estimator counts with multiplicity".into()));
            }
            let fit = counting_tail(target, divisor, manifold, r, &opts.mc)?;
            Ok(Value { value: fit.intercept, se: Some(fit.se), method: Method::MonteCarlo })
        }
    }
}

/// `Σ μ_k log(ρ(r)/|z_k|)` over the enumerated divisor (the Green weight
/// `π g_r` in surface charts).
pub fn counting_enumerated(
    target: &MeromorphicTarget,
    divisor: &DivisorSpec,
    manifold: &ModelManifold,
    r: f64,
    truncated: bool,
) -> Result<f64> {
    let rho = manifold.chart_radius(r)?;
    let pts = enumerate_divisor(target, divisor, manifold, r)?;
    Ok(pts
        .iter()
        .map(|p| {
            let mult = if truncated || !divisor.count_multiplicity { 1.0 } else { p.multiplicity as f64 };
            mult * (rho / p.z.norm()).ln()
        })
        .sum())
}

/// Linear fit of `λ·P(sup F > λ)` against `1/λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub intercept: f64,
    pub se: f64,
    pub slope: f64,
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub value_se: Vec<f64>,
    pub residuals: Vec<f64>,
    pub paths: usize,
    pub total_steps: u64,
}

/// Tail-probability estimator `N(r, a) = lim λ·P(sup_{t ≤ τ_r} log 1/‖f(X_t), a‖ > λ)`,
/// extrapolated to `λ → ∞` by a linear fit in `1/λ`.
pub fn counting_tail(
    target: &MeromorphicTarget,
    divisor: &DivisorSpec,
    manifold: &ModelManifold,
    r: f64,
    mc: &McSettings,
) -> Result<TailFit> {
    require_radius(r)?;
    check_reference(target, divisor)?;
    let t = &mc.tail;
    if t.lambda_points < 3 || !(t.lambda_min > 0.0 && t.lambda_max > t.lambda_min) {
        return Err(Error::InvalidArgument("tail λ grid needs ≥ 3 points with 0 < λ_min < λ_max".into()));
    }
    let rho = manifold.chart_radius(r)?;
    let f = target.pullback(divisor)?;
    let df = f.derivative();
    let trace = TraceOptions { cap: t.lambda_max.max(t.trace.cap), ..t.trace };
    let sups = trace_sup(
        rho,
        t.paths,
        &mc.rng.derive(0x7a11),
        |z| divisor.log_inverse_distance(&target.eval_homogeneous(z)),
        |z| {
            let d = df.eval(z).norm();
            if d == 0.0 { f64::INFINITY } else { f.eval(z).norm() / d }
        },
        trace,
    )?;
    let n = sups.sups.len();
    let k = t.lambda_points;
    let lambdas: Vec<f64> = (0..k)
        .map(|j| t.lambda_min * (t.lambda_max / t.lambda_min).powf(j as f64 / (k - 1) as f64))
        .collect();
    let x: Vec<f64> = lambdas.iter().map(|l| 1.0 / l).collect();
    let xm = x.iter().sum::<f64>() / k as f64;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    // OLS intercept and slope are linear in the responses
    let w_int: Vec<f64> = x.iter().map(|v| 1.0 / k as f64 - xm * (v - xm) / sxx).collect();
    let w_slope: Vec<f64> = x.iter().map(|v| (v - xm) / sxx).collect();
    let contrib = |wts: &[f64]| -> Vec<f64> {
        sups.sups
            .iter()
            .map(|&s| lambdas.iter().zip(wts).map(|(l, w)| if s >= *l { w * l } else { 0.0 }).sum())
            .collect()
    };
    let icpt = Estimate::from_samples(&contrib(&w_int));
    let slope = Estimate::from_samples(&contrib(&w_slope));
    let mut values = Vec::with_capacity(k);
    let mut value_se = Vec::with_capacity(k);
    for l in &lambdas {
        let ys: Vec<f64> = sups.sups.iter().map(|&s| if s >= *l { *l } else { 0.0 }).collect();
        let e = Estimate::from_samples(&ys);
        values.push(e.mean);
        value_se.push(e.se);
    }
    let residuals: Vec<f64> = values.iter().zip(&x).map(|(y, xv)| y - icpt.mean - slope.mean * xv).collect();
    for (j, (res, se)) in residuals.iter().zip(&value_se).enumerate() {
        let floor = (1.0 / n as f64) * lambdas[j];
        if res.abs() > t.max_residual_se * se.max(floor) {
            return Err(Error::TailNonConvergence(format!(
                "λ·P is not linear in 1/λ at λ = {:.3}: residual {res:.4} exceeds {} SE ({se:.4})",
                lambdas[j], t.max_residual_se
            )));
        }
    }
    Ok(TailFit {
        intercept: icpt.mean,
        se: icpt.se,
        slope: slope.mean,
        lambdas,
        values,
        value_se,
        residuals,
        paths: n,
        total_steps: sups.total_steps,
    })
}

/// Nevanlinna characteristic `T(r, ψ) = m(r, ∞) + N(r, ∞)` of a ℙ¹ target.
pub fn nevanlinna_characteristic(
    target: &MeromorphicTarget,
    manifold: &ModelManifold,
    r: f64,
    opts: &EvalOptions,
) -> Result<f64> {
    require_p1(target)?;
    let inf = DivisorSpec::point(ProjPoint::Infinity);
    let m = proximity(target, &inf, manifold, r, Proximity::LogPlus, Method::Quadrature, opts)?.value;
    let n = counting_enumerated(target, &inf, manifold, r, false)?;
    Ok(m + n)
}

fn u_tilde(l: f64) -> f64 {
    l * l.atan() - 0.5 * l.mul_add(l, 1.0).ln()
}

/// `T_ψ(r, Φ)` for the singular metric `Φ = (i/4π²) dζ∧dζ̄ / (|ζ|²(1 + log²|ζ|))`.
///
/// Integrating Jensen's formula against `Φ` gives the boundary form
/// `(1/π)(avg Ũ(log|ψ|) − Ũ(log|ψ(o)|)) + ½(N(r,0) + N(r,∞))` with
/// `Ũ(L) = L·arctan L − ½ log(1 + L²)`.
pub fn phi_characteristic(
    target: &MeromorphicTarget,
    manifold: &ModelManifold,
    r: f64,
    opts: &EvalOptions,
) -> Result<f64> {
    require_radius(r)?;
    require_surface(manifold)?;
    require_p1(target)?;
    let o = Complex64::new(0.0, 0.0);
    let w = target.eval_homogeneous(o);
    if w[0].norm() == 0.0 || w[1].norm() == 0.0 {
        return Err(Error::NonIntegrable(format!(
            "T(r, Φ) diverges: '{}' takes the value {} at the reference point",
            target.id,
            if w[0].norm() == 0.0 { "∞" } else { "0" }
        )));
    }
    let rho = manifold.chart_radius(r)?;
    let breaks = target_breaks(target, None, rho)?;
    let l = |z: Complex64| {
        let w = target.eval_homogeneous(z);
        w[1].norm().ln() - w[0].norm().ln()
    };
    let avg = circle_average(rho, |z| u_tilde(l(z)), &breaks, opts.quad_tol)?;
    let zero = counting_enumerated(target, &DivisorSpec::point(ProjPoint::finite(0.0, 0.0)), manifold, r, false)?;
    let pole = counting_enumerated(target, &DivisorSpec::point(ProjPoint::Infinity), manifold, r, false)?;
    Ok((avg - u_tilde(l(o))) / PI + 0.5 * (zero + pole))
}

/// `T(r, 𝓡_M) = E_o[∫_0^{τ_r} s_M(X_t) dt]`.
pub fn curvature_characteristic(manifold: &ModelManifold, r: f64, method: Method, opts: &EvalOptions) -> Result<Value> {
    require_radius(r)?;
    match method {
        Method::Quadrature => {
            let phi = |s: f64| manifold.scalar_curvature_at(s);
            coarea_quadrature(manifold, r, Integrand::Radial(&phi), opts.quad_tol).map(Value::quad)
        }
        Method::MonteCarlo => {
            let ens = mc_ensemble(manifold, r, &opts.mc)?;
            let m = &ens.manifold;
            path_functional(&ens, |p: &ChartPoint| m.scalar_curvature_at(m.distance(p).unwrap_or(f64::NAN)))
                .map(Value::mc)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "T_hat")]
    THat,
    T,
    #[serde(rename = "m_hat")]
    MHat,
    #[serde(rename = "m")]
    M,
    N,
    #[serde(rename = "N_bar")]
    NBar,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::THat => "T_hat",
            Quantity::T => "T",
            Quantity::MHat => "m_hat",
            Quantity::M => "m",
            Quantity::N => "N",
            Quantity::NBar => "N_bar",
        }
    }

    fn needs_divisor(&self) -> bool {
        !matches!(self, Quantity::THat | Quantity::T)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub r: f64,
    pub quantity: Quantity,
    pub divisor: String,
    pub method: Method,
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NevanlinnaTable {
    pub target_id: String,
    pub manifold_id: String,
    pub radii: Vec<f64>,
    pub rows: Vec<TableRow>,
}

/// What to put in a table.
#[derive(Clone, Debug)]
pub struct TableSpec {
    pub radii: Vec<f64>,
    pub divisors: Vec<DivisorSpec>,
    pub methods: Vec<Method>,
    /// Compute the tail estimator for `N` when Monte Carlo is requested.
    pub mc_counting: bool,
}

impl NevanlinnaTable {
    pub fn build(
        target: &MeromorphicTarget,
        manifold: &ModelManifold,
        spec: &TableSpec,
        opts: &EvalOptions,
    ) -> Result<Self> {
        require_surface(manifold)?;
        if spec.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidArgument("radius grid must be positive".into()));
        }
        for d in &spec.divisors {
            check_reference(target, d)?;
        }
        let p1 = target.target_dim() == 1;
        let per_radius: Vec<Result<Vec<TableRow>>> = spec
            .radii
            .par_iter()
            .enumerate()
            .map(|(ri, &r)| {
                let mut rows = Vec::new();
                let mut push = |q: Quantity, div: &str, v: Value| {
                    rows.push(TableRow { r, quantity: q, divisor: div.to_string(), method: v.method, value: v.value, se: v.se });
                };
                for &method in &spec.methods {
                    match method {
                        Method::Quadrature => {
                            push(Quantity::THat, "", characteristic(target, manifold, r, method, opts)?);
                            if p1 {
                                push(Quantity::T, "", Value::quad(nevanlinna_characteristic(target, manifold, r, opts)?));
                            }
                            for d in &spec.divisors {
                                push(Quantity::MHat, &d.label, proximity(target, d, manifold, r, Proximity::Chordal, method, opts)?);
                                if p1 {
                                    push(Quantity::M, &d.label, proximity(target, d, manifold, r, Proximity::LogPlus, method, opts)?);
                                }
                                push(Quantity::N, &d.label, Value::quad(counting_enumerated(target, d, manifold, r, false)?));
                                push(Quantity::NBar, &d.label, Value::quad(counting_enumerated(target, d, manifold, r, true)?));
                            }
                        }
                        Method::MonteCarlo => {
                            let mc = McSettings { rng: opts.mc.rng.derive(ri as u64), ..opts.mc };
                            let ens = mc_ensemble(manifold, r, &mc)?;
                            push(Quantity::THat, "", characteristic_on(target, &ens)?);
                            for d in &spec.divisors {
                                push(Quantity::MHat, &d.label, proximity_on(target, d, Proximity::Chordal, &ens)?);
                                if p1 {
                                    push(Quantity::M, &d.label, proximity_on(target, d, Proximity::LogPlus, &ens)?);
                                }
                                if spec.mc_counting {
                                    let fit = counting_tail(target, d, manifold, r, &mc)?;
                                    push(Quantity::N, &d.label, Value { value: fit.intercept, se: Some(fit.se), method });
                                }
                            }
                        }
                    }
                }
                Ok(rows)
            })
            .collect();
        let mut rows = Vec::new();
        for r in per_radius {
            rows.extend(r?);
        }
        Ok(Self { target_id: target.id.clone(), manifold_id: manifold.label(), radii: spec.radii.clone(), rows })
    }

    /// `(r, value)` series of one quantity.
    pub fn series(&self, quantity: Quantity, divisor: &str, method: Method) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|row| row.quantity == quantity && row.method == method && (!quantity.needs_divisor() || row.divisor == divisor))
            .map(|row| (row.r, row.value))
            .collect()
    }

    pub fn divisors(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for row in &self.rows {
            if row.quantity.needs_divisor() && !seen.contains(&row.divisor) {
                seen.push(row.divisor.clone());
            }
        }
        seen
    }

    pub fn write_csv_header<W: Write>(mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,quantity,divisor,method,value,se")
    }

    /// Rows only; `prefix` qualifies the quantity name when several tables
    /// share one file.
    pub fn write_csv_rows<W: Write>(&self, mut w: W, prefix: Option<&str>) -> std::io::Result<()> {
        for row in &self.rows {
            let q = match prefix {
                Some(p) => format!("{p}{}", row.quantity.name()),
                None => row.quantity.name().to_string(),
            };
            let se = row.se.map(|s| s.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{}", row.r, q, row.divisor, row.method, row.value, se)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        Self::write_csv_header(&mut w)?;
        self.write_csv_rows(w, None)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectEntry {
    pub divisor: String,
    /// Clamped to `[0, 1]`.
    pub delta: f64,
    pub theta: f64,
    pub delta_raw: f64,
    pub theta_raw: f64,
    /// `(r, N/T̂, N̄/T̂)` over the whole grid.
    pub trace: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub target_id: String,
    pub entries: Vec<DefectEntry>,
    /// Radii over which the limsup surrogate (a max) is taken.
    pub limsup_radii: Vec<f64>,
    /// `[c₁(K*)/c₁(O(1))]` for ℙⁿ: `n + 1`.
    pub bracket: f64,
}

impl DefectReport {
    pub fn theta_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.theta).sum()
    }

    pub fn entry(&self, divisor: &str) -> Option<&DefectEntry> {
        self.entries.iter().find(|e| e.divisor == divisor)
    }
}

pub const MIN_DEFECT_GRID: usize = 8;

/// Defects with `limsup` replaced by the max over the top quartile of radii.
pub fn defects(table: &NevanlinnaTable, target_dim: usize) -> Result<DefectReport> {
    let t = table.series(Quantity::THat, "", Method::Quadrature);
    if t.len() < MIN_DEFECT_GRID {
        return Err(Error::GridTooShort { len: t.len(), min: MIN_DEFECT_GRID });
    }
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|a, b| t[*a].0.total_cmp(&t[*b].0));
    let top_from = t.len() - t.len().div_ceil(4);
    let top: Vec<usize> = order[top_from..].to_vec();
    let limsup_radii: Vec<f64> = top.iter().map(|&i| t[i].0).collect();
    let mut entries = Vec::new();
    for d in table.divisors() {
        let n = table.series(Quantity::N, &d, Method::Quadrature);
        let nb = table.series(Quantity::NBar, &d, Method::Quadrature);
        let by_r = |s: &[(f64, f64)]| -> BTreeMap<u64, f64> { s.iter().map(|(r, v)| (r.to_bits(), *v)).collect() };
        let (nm, nbm) = (by_r(&n), by_r(&nb));
        let mut trace = Vec::new();
        for &(r, tv) in &t {
            let (Some(a), Some(b)) = (nm.get(&r.to_bits()), nbm.get(&r.to_bits())) else {
                continue;
            };
            if tv > 0.0 {
                trace.push((r, a / tv, b / tv));
            }
        }
        let sup = |f: fn(&(f64, f64, f64)) -> f64| {
            trace
                .iter()
                .filter(|x| limsup_radii.contains(&x.0))
                .map(f)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let (sn, snb) = (sup(|x| x.1), sup(|x| x.2));
        if !sn.is_finite() {
            return Err(Error::InvalidArgument(format!("no usable top-quartile radii for divisor '{d}'")));
        }
        let (delta_raw, theta_raw) = (1.0 - sn, 1.0 - snb);
        entries.push(DefectEntry {
            divisor: d,
            delta: delta_raw.clamp(0.0, 1.0),
            theta: theta_raw.clamp(0.0, 1.0),
            delta_raw,
            theta_raw,
            trace,
        });
    }
    Ok(DefectReport { target_id: table.target_id.clone(), entries, limsup_radii, bracket: (target_dim + 1) as f64 })
}

/// `(max_j T(r, ζ_j∘ψ), T̂_ψ(r), Σ_j T(r, ζ_j∘ψ))` for `ψ: M → ℙⁿ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub r: f64,
    pub max_coordinate: f64,
    pub fubini_study: f64,
    pub sum_coordinates: f64,
}

pub fn pn_sandwich(target: &MeromorphicTarget, manifold: &ModelManifold, r: f64, opts: &EvalOptions) -> Result<Sandwich> {
    require_radius(r)?;
    let t_hat = characteristic(target, manifold, r, Method::Quadrature, opts)?.value;
    let mut coords = Vec::new();
    for j in 1..=target.target_dim() {
        let c = target.coordinate(j)?;
        coords.push(nevanlinna_characteristic(&c, manifold, r, opts)?);
    }
    Ok(Sandwich {
        r,
        max_coordinate: coords.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        fubini_study: t_hat,
        sum_coordinates: coords.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat() -> ModelManifold {
        ModelManifold::flat(1).unwrap()
    }

    fn opts() -> EvalOptions {
        EvalOptions::default()
    }

    #[test]
    fn identity_characteristic() {
        let z = MeromorphicTarget::polynomial("z", &[0.0, 1.0]).unwrap();
        let t = characteristic(&z, &flat(), 1.0, Method::Quadrature, &opts()).unwrap().value;
        assert_relative_eq!(t, 0.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn exp_proximity_at_infinity() {
        let e = MeromorphicTarget::exp_affine("exp", Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)).unwrap();
        let inf = DivisorSpec::point(ProjPoint::Infinity);
        for r in [1.0, 7.5] {
            let m = proximity(&e, &inf, &flat(), r, Proximity::LogPlus, Method::Quadrature, &opts()).unwrap().value;
            assert_relative_eq!(m, r / PI, epsilon = 1e-9);
        }
    }

    #[test]
    fn simple_proximities() {
        let z = MeromorphicTarget::polynomial("z", &[0.0, 1.0]).unwrap();
        let inf = DivisorSpec::point(ProjPoint::Infinity);
        let m = proximity(&z, &inf, &flat(), 1f64.exp(), Proximity::LogPlus, Method::Quadrature, &opts()).unwrap();
        assert_relative_eq!(m.value, 1.0, epsilon = 1e-12);
        let z1 = MeromorphicTarget::polynomial("z+1", &[1.0, 1.0]).unwrap();
        let zero = DivisorSpec::point(ProjPoint::finite(0.0, 0.0));
        let e = proximity(&z, &zero, &flat(), 2.0, Proximity::LogPlus, Method::Quadrature, &opts());
        assert!(matches!(e, Err(Error::ReferencePointOnDivisor { .. })));
        assert!(proximity(&z1, &zero, &flat(), 3.0, Proximity::LogPlus, Method::Quadrature, &opts()).unwrap().value < 1e-12);
    }

    #[test]
    fn counting_with_and_without_multiplicity() {
        let sq = MeromorphicTarget::polynomial("(z-1)^2", &[1.0, -2.0, 1.0]).unwrap();
        let zero = DivisorSpec::point(ProjPoint::finite(0.0, 0.0));
        let e = 1f64.exp();
        assert_relative_eq!(counting_enumerated(&sq, &zero, &flat(), e, false).unwrap(), 2.0, epsilon = 1e-6);
        assert_relative_eq!(counting_enumerated(&sq, &zero, &flat(), e, true).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn phi_rejects_zero_at_reference() {
        let z = MeromorphicTarget::polynomial("z", &[0.0, 1.0]).unwrap();
        assert!(matches!(phi_characteristic(&z, &flat(), 1.0, &opts()), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn flat_curvature_characteristic_vanishes() {
        let f2 = ModelManifold::flat(2).unwrap();
        assert_eq!(curvature_characteristic(&f2, 3.0, Method::Quadrature, &opts()).unwrap().value, 0.0);
    }

    #[test]
    fn log_norm_is_stable() {
        let w = [Complex64::new(1e300, 0.0), Complex64::new(1e300, 0.0)];
        assert_relative_eq!(log_norm(&w), 300.0 * 10f64.ln() + 0.5 * 2f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn short_grid_rejected() {
        let z = MeromorphicTarget::polynomial("z+2", &[2.0, 1.0]).unwrap();
        let spec = TableSpec {
            radii: vec![1.0, 2.0],
            divisors: vec![DivisorSpec::point(ProjPoint::Infinity)],
            methods: vec![Method::Quadrature],
            mc_counting: false,
        };
        let t = NevanlinnaTable::build(&z, &flat(), &spec, &opts()).unwrap();
        assert!(matches!(defects(&t, 1), Err(Error::GridTooShort { .. })));
    }
}
