//! Rotationally symmetric model source manifolds, their curvature in the
//! complex (Kähler) normalization, and the comparison profile `G`.
//!
//! A surface metric is written in geodesic polar form `ds² + W(s)² dθ²`
//! and, equivalently, in a conformal chart `λ(z)² |dz|²`. In the complex
//! normalization `R_{1\bar 1} = −∂∂̄ log λ²`, so the scalar curvature of a
//! surface is half of its Gaussian curvature.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{dopri5, OdeOptions};
use crate::quadrature::Quadrature;

/// Largest supported complex dimension.
pub const MAX_COMPLEX_DIM: usize = 4;

/// Hyperbolic chart radius beyond which `1 − |z|²` loses too many digits.
const HYPERBOLIC_CHART_LIMIT: f64 = 1.0 - 1e-9;

pub type CurvatureFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// (2m−1)-volume of the unit sphere in ℝ^{2m}: 2π^m/(m−1)!.
pub fn unit_sphere_volume(m: usize) -> f64 {
    let fact: f64 = (1..m).map(|k| k as f64).product();
    2.0 * PI.powi(m as i32) / fact
}

/// Point of a chart: ℝ^{2m} for flat ℂ^m, the conformal disc for surfaces.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    coords: [f64; 2 * MAX_COMPLEX_DIM],
    dim: usize,
}

impl ChartPoint {
    pub fn origin(real_dim: usize) -> Self {
        assert!((2..=2 * MAX_COMPLEX_DIM).contains(&real_dim));
        Self { coords: [0.0; 2 * MAX_COMPLEX_DIM], dim: real_dim }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut p = Self::origin(xs.len());
        p.coords[..xs.len()].copy_from_slice(xs);
        p
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self::from_slice(&[z.re, z.im])
    }

    pub fn real_dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords[..self.dim]
    }

    /// First complex coordinate.
    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.coords[0], self.coords[1])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coords().iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut p = *self;
        p.coords_mut().iter_mut().for_each(|x| *x *= factor);
        p
    }
}

impl fmt::Debug for ChartPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for ChartPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Tabulated warp `W` for a surface given by its Gaussian curvature `K(s)`:
/// `W'' = −K W`, `W(0) = 0`, `W'(0) = 1`.
///
/// The table stores the deviation `D = W − s` so that flat pieces carry no
/// accumulated rounding and `(s − W)/(sW)` is free of cancellation.
struct WarpTable {
    step: f64,
    s_max: f64,
    dev: Vec<f64>,
    ddev: Vec<f64>,
    // ∫_0^s (1/W − 1/t) dt; the conformal chart radius is s·exp of this.
    log_ratio: Vec<f64>,
    curvature: CurvatureFn,
}

// 5-point Gauss–Legendre on [0, 1].
const GL5_NODES: [f64; 5] = [
    0.046_910_077_030_668_00,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

impl WarpTable {
    fn build(curvature: CurvatureFn, s_max: f64) -> Result<Self> {
        let n = ((s_max / 5e-4).ceil() as usize).max(64);
        let step = s_max / n as f64;
        for i in 0..=n {
            let k = curvature(i as f64 * step);
            if !k.is_finite() {
                return Err(Error::InvalidArgument(format!("curvature not finite at s = {}", i as f64 * step)));
            }
            if k > 0.0 {
                return Err(Error::PositiveCurvature { t: i as f64 * step, value: k });
            }
        }
        let rhs = |s: f64, y: &[f64; 2]| -> [f64; 2] { [y[1], -curvature(s) * (s + y[0])] };
        let mut dev = Vec::with_capacity(n + 1);
        let mut ddev = Vec::with_capacity(n + 1);
        let mut y = [0.0, 0.0];
        dev.push(0.0);
        ddev.push(0.0);
        for i in 0..n {
            let s = i as f64 * step;
            let h = step;
            let add = |a: &[f64; 2], b: &[f64; 2], c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
            let k1 = rhs(s, &y);
            let k2 = rhs(s + 0.5 * h, &add(&y, &k1, 0.5 * h));
            let k3 = rhs(s + 0.5 * h, &add(&y, &k2, 0.5 * h));
            let k4 = rhs(s + h, &add(&y, &k3, h));
            for j in 0..2 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            dev.push(y[0]);
            ddev.push(y[1]);
        }
        let mut table = Self { step, s_max, dev, ddev, log_ratio: vec![0.0], curvature };
        let mut acc = 0.0;
        for i in 0..n {
            let s0 = i as f64 * step;
            let cell: f64 = GL5_NODES
                .iter()
                .zip(GL5_WEIGHTS)
                .map(|(&u, w)| {
                    let s = s0 + u * step;
                    let d = table.interp_dev(i, u);
                    w * (-d / (s * (s + d)))
                })
                .sum();
            acc += cell * step;
            table.log_ratio.push(acc);
        }
        Ok(table)
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let x = (s / self.step).clamp(0.0, (self.dev.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.dev.len() - 2);
        (i, x - i as f64)
    }

    fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, u: f64) -> f64 {
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * h * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * h * d1
    }

    fn second_dev(&self, j: usize) -> f64 {
        let s = j as f64 * self.step;
        -(self.curvature)(s) * (s + self.dev[j])
    }

    fn interp_dev(&self, i: usize, u: f64) -> f64 {
        Self::hermite(self.dev[i], self.dev[i + 1], self.ddev[i], self.ddev[i + 1], self.step, u)
    }

    fn warp(&self, s: f64) -> f64 {
        let (i, u) = self.locate(s);
        s + self.interp_dev(i, u)
    }

    fn dwarp(&self, s: f64) -> f64 {
        let (i, u) = self.locate(s);
        let d = Self::hermite(self.ddev[i], self.ddev[i + 1], self.second_dev(i), self.second_dev(i + 1), self.step, u);
        1.0 + d
    }

    fn log_ratio(&self, s: f64) -> f64 {
        let (i, u) = self.locate(s);
        let deriv = |j: usize| {
            let t = j as f64 * self.step;
            if j == 0 {
                0.0
            } else {
                -self.dev[j] / (t * (t + self.dev[j]))
            }
        };
        Self::hermite(self.log_ratio[i], self.log_ratio[i + 1], deriv(i), deriv(i + 1), self.step, u)
    }
}

#[derive(Clone)]
pub enum Geometry {
    Flat,
    /// Constant Gaussian curvature `−scale²`, Poincaré-disc chart.
    Hyperbolic { scale: f64 },
    Warped(Arc<WarpTableHandle>),
}

/// Opaque handle so the table type stays private.
pub struct WarpTableHandle(WarpTable);

#[derive(Clone)]
pub struct ModelManifold {
    m: usize,
    geometry: Geometry,
}

impl fmt::Debug for ModelManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelManifold({})", self.label())
    }
}

impl ModelManifold {
    pub fn flat(m: usize) -> Result<Self> {
        if m == 0 || m > MAX_COMPLEX_DIM {
            return Err(Error::InvalidArgument(format!(
                "complex dimension must be in 1..={MAX_COMPLEX_DIM}, got {m}"
            )));
        }
        Ok(Self { m, geometry: Geometry::Flat })
    }

    /// Hyperbolic plane of Gaussian curvature `−scale²`.
    pub fn hyperbolic(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("curvature scale must be positive, got {scale}")));
        }
        Ok(Self { m: 1, geometry: Geometry::Hyperbolic { scale } })
    }

    /// Warped surface `ds² + W(s)² dθ²` whose Gaussian curvature at geodesic
    /// distance `s` is `curvature(s) ≤ 0`, tabulated on `[0, s_max]`.
    pub fn warped<F>(curvature: F, s_max: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("s_max must be positive, got {s_max}")));
        }
        let table = WarpTable::build(Arc::new(curvature), s_max)?;
        Ok(Self { m: 1, geometry: Geometry::Warped(Arc::new(WarpTableHandle(table))) })
    }

    /// Warped surface from Gaussian-curvature samples `(s, K)`, linearly
    /// interpolated; the table ends at the last sample.
    pub fn warped_from_samples(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("need at least two curvature samples".into()));
        }
        if samples[0].0 != 0.0 {
            return Err(Error::InvalidArgument("curvature samples must start at s = 0".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument("curvature sample radii must increase".into()));
        }
        let pts: Vec<(f64, f64)> = samples.to_vec();
        let s_max = pts[pts.len() - 1].0;
        Self::warped(move |s| piecewise_linear(&pts, s), s_max)
    }

    pub fn complex_dim(&self) -> usize {
        self.m
    }

    pub fn real_dim(&self) -> usize {
        2 * self.m
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.geometry, Geometry::Flat)
    }

    /// Real dimension two: conformal-chart machinery applies.
    pub fn is_surface(&self) -> bool {
        self.m == 1
    }

    pub fn label(&self) -> String {
        match &self.geometry {
            Geometry::Flat => format!("flat({})", self.m),
            Geometry::Hyperbolic { scale } => format!("hyperbolic({scale})"),
            Geometry::Warped(t) => format!("warped(s_max={})", t.0.s_max),
        }
    }

    /// Largest geodesic radius the chart resolves.
    pub fn max_radius(&self) -> f64 {
        match &self.geometry {
            Geometry::Flat => f64::INFINITY,
            Geometry::Hyperbolic { scale } => 2.0 * HYPERBOLIC_CHART_LIMIT.atanh() / scale,
            Geometry::Warped(t) => t.0.s_max,
        }
    }

    fn check_radius(&self, s: f64) -> Result<()> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("radius must be finite and non-negative, got {s}")));
        }
        if s > self.max_radius() * (1.0 + 1e-12) {
            return Err(Error::OutsideChart { radius: s, limit: self.max_radius() });
        }
        Ok(())
    }

    /// Geodesic warp `W(s)`: circumference of S_o(s) is `2π W(s)` on surfaces.
    pub fn warp(&self, s: f64) -> f64 {
        match &self.geometry {
            Geometry::Flat => s,
            Geometry::Hyperbolic { scale } => (scale * s).sinh() / scale,
            Geometry::Warped(t) => t.0.warp(s),
        }
    }

    pub fn warp_derivative(&self, s: f64) -> f64 {
        match &self.geometry {
            Geometry::Flat => 1.0,
            Geometry::Hyperbolic { scale } => (scale * s).cosh(),
            Geometry::Warped(t) => t.0.dwarp(s),
        }
    }

    /// Sectional curvature of the radial planes at distance `s`.
    pub fn gaussian_curvature(&self, s: f64) -> f64 {
        match &self.geometry {
            Geometry::Flat => 0.0,
            Geometry::Hyperbolic { scale } => -scale * scale,
            Geometry::Warped(t) => (t.0.curvature)(s.min(t.0.s_max)),
        }
    }

    /// Conformal-chart radius of the geodesic sphere S_o(s).
    pub fn chart_radius(&self, s: f64) -> Result<f64> {
        self.check_radius(s)?;
        Ok(match &self.geometry {
            Geometry::Flat => s,
            Geometry::Hyperbolic { scale } => (0.5 * scale * s).tanh(),
            Geometry::Warped(t) => s * t.0.log_ratio(s).exp(),
        })
    }

    /// Upper bound on chart radii.
    pub fn chart_limit(&self) -> f64 {
        match &self.geometry {
            Geometry::Flat => f64::INFINITY,
            Geometry::Hyperbolic { .. } => HYPERBOLIC_CHART_LIMIT,
            Geometry::Warped(t) => {
                let s = t.0.s_max;
                s * t.0.log_ratio(s).exp()
            }
        }
    }

    /// Geodesic distance from `o` of a point at chart radius `rho`.
    pub fn geodesic_radius(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return Err(Error::InvalidArgument(format!("chart radius must be non-negative, got {rho}")));
        }
        if rho > self.chart_limit() * (1.0 + 1e-12) {
            return Err(Error::OutsideChart { radius: rho, limit: self.chart_limit() });
        }
        Ok(match &self.geometry {
            Geometry::Flat => rho,
            Geometry::Hyperbolic { scale } => 2.0 * rho.atanh() / scale,
            Geometry::Warped(t) => {
                let table = &t.0;
                if rho == 0.0 {
                    return Ok(0.0);
                }
                // ρ(s) is increasing with dρ/ds = ρ/W; bracketed Newton.
                let (mut lo, mut hi) = (0.0, table.s_max);
                let mut s = rho.min(table.s_max);
                for _ in 0..100 {
                    let r = s * table.log_ratio(s).exp();
                    let f = r - rho;
                    if f > 0.0 {
                        hi = s;
                    } else {
                        lo = s;
                    }
                    let mut next = s - f * table.warp(s) / r.max(f64::MIN_POSITIVE);
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - s).abs() <= 1e-15 * s.max(1e-300) {
                        s = next;
                        break;
                    }
                    s = next;
                }
                s
            }
        })
    }

    /// Geodesic distance from `o` to a chart point.
    pub fn distance(&self, p: &ChartPoint) -> Result<f64> {
        self.geodesic_radius(p.norm())
    }

    /// Conformal factor λ at chart radius `rho` (metric `λ²|dz|²`). Equal to
    /// one on flat space in every dimension.
    pub fn conformal_factor(&self, rho: f64) -> f64 {
        match &self.geometry {
            Geometry::Flat => 1.0,
            Geometry::Hyperbolic { scale } => 2.0 / (scale * (1.0 - rho * rho)),
            Geometry::Warped(t) => {
                if rho < 1e-12 {
                    return 1.0;
                }
                match self.geodesic_radius(rho) {
                    Ok(s) => t.0.warp(s) / rho,
                    Err(_) => f64::NAN,
                }
            }
        }
    }

    /// Measure of the geodesic sphere S_o(s).
    pub fn sphere_area(&self, s: f64) -> f64 {
        unit_sphere_volume(self.m) * self.warp(s).powi(2 * self.m as i32 - 1)
    }

    /// Scalar curvature `s_M = −¼ Δ_M log det g` at geodesic distance `s`.
    pub fn scalar_curvature_at(&self, s: f64) -> f64 {
        0.5 * self.gaussian_curvature(s)
    }

    /// Pointwise lower bound `R_M` of Ricci curvature at distance `s`.
    pub fn ricci_lower_at(&self, s: f64) -> f64 {
        // rank-one Ricci on surfaces; flat ℂ^m has vanishing Ricci
        0.5 * self.gaussian_curvature(s)
    }

    /// `κ(t) = min_{B_o(t)} R_M / (2m − 1)`.
    pub fn kappa_of(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("t must be non-negative, got {t}")));
        }
        let denom = (2 * self.m - 1) as f64;
        Ok(match &self.geometry {
            Geometry::Flat => 0.0,
            Geometry::Hyperbolic { scale } => -0.5 * scale * scale / denom,
            Geometry::Warped(tab) => {
                let table = &tab.0;
                let t = t.min(table.s_max);
                let n = (t / table.step).floor() as usize;
                let mut lo = self.ricci_lower_at(t);
                for i in 0..=n {
                    lo = lo.min(self.ricci_lower_at(i as f64 * table.step));
                }
                lo / denom
            }
        })
    }

    /// `(s_M, m·R_M)` at a chart point.
    pub fn curvature_scalar_pair(&self, p: &ChartPoint) -> Result<(f64, f64)> {
        if p.real_dim() != self.real_dim() {
            return Err(Error::InvalidArgument(format!(
                "point has real dimension {}, manifold {}",
                p.real_dim(),
                self.real_dim()
            )));
        }
        let s = self.distance(p)?;
        Ok((self.scalar_curvature_at(s), self.m as f64 * self.ricci_lower_at(s)))
    }

    /// `Δ_M r` at geodesic distance `s > 0`.
    pub fn radial_laplacian(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("radial Laplacian needs s > 0, got {s}")));
        }
        self.check_radius(s)?;
        Ok(match &self.geometry {
            Geometry::Flat => (2 * self.m - 1) as f64 / s,
            _ => self.warp_derivative(s) / self.warp(s),
        })
    }
}

fn piecewise_linear(pts: &[(f64, f64)], s: f64) -> f64 {
    if s <= pts[0].0 {
        return pts[0].1;
    }
    for w in pts.windows(2) {
        if s <= w[1].0 {
            let u = (s - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + u * (w[1].1 - w[0].1);
        }
    }
    pts[pts.len() - 1].1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileSource {
    DerivedFromManifold,
    UserSupplied,
}

/// `κ(t) ≤ 0`, non-increasing, continuous.
#[derive(Clone)]
pub struct CurvatureProfile {
    kappa: CurvatureFn,
    pub source: ProfileSource,
}

impl fmt::Debug for CurvatureProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CurvatureProfile({:?}, κ(0) = {})", self.source, self.eval(0.0))
    }
}

/// Result of checking a profile on a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileCheck {
    pub non_increasing: bool,
    pub max_value: f64,
}

impl CurvatureProfile {
    pub fn from_manifold(manifold: &ModelManifold) -> Self {
        let m = manifold.clone();
        Self {
            kappa: Arc::new(move |t| m.kappa_of(t).unwrap_or(f64::NAN)),
            source: ProfileSource::DerivedFromManifold,
        }
    }

    pub fn user<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { kappa: Arc::new(f), source: ProfileSource::UserSupplied }
    }

    pub fn constant(k: f64) -> Self {
        Self::user(move |_| k)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.kappa)(t)
    }

    /// Checks sign and monotonicity at `n + 1` equispaced points of `[0, t_max]`.
    /// A positive value is an error; monotonicity is reported.
    pub fn check(&self, t_max: f64, n: usize) -> Result<ProfileCheck> {
        let mut prev = f64::INFINITY;
        let mut non_increasing = true;
        let mut max_value = f64::NEG_INFINITY;
        for i in 0..=n {
            let t = t_max * i as f64 / n as f64;
            let k = self.eval(t);
            if !k.is_finite() {
                return Err(Error::InvalidArgument(format!("κ not finite at t = {t}")));
            }
            if k > 0.0 {
                return Err(Error::PositiveCurvature { t, value: k });
            }
            if k > prev + 1e-14 * prev.abs().max(1.0) {
                non_increasing = false;
            }
            prev = k;
            max_value = max_value.max(k);
        }
        Ok(ProfileCheck { non_increasing, max_value })
    }
}

/// Comparison profile `G″ + κG = 0`, `G(0) = 0`, `G′(0) = 1`, tabulated.
#[derive(Clone, Debug)]
pub struct GreenWarp {
    pub grid: Vec<f64>,
    pub g: Vec<f64>,
    pub g_prime: Vec<f64>,
    pub kappa_used: CurvatureProfile,
    pub solver_tolerance: f64,
    pub profile_check: ProfileCheck,
}

/// Per-node bound status of a [`GreenWarp`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpBounds {
    /// `G(t) ≥ t` at every node.
    pub lower_holds: bool,
    /// `G(t) ≤ t·exp(t√(−κ(t)))` at every node.
    pub upper_holds: bool,
    pub strictly_increasing: bool,
    /// Largest relative violation of either bound (0 when both hold).
    pub worst_violation: f64,
}

const DEFAULT_WARP_NODES: usize = 1000;
const DEFAULT_WARP_STEPS: usize = 2_000_000;

/// Solves the comparison ODE on `[0, t_max]` at local tolerance `tol`.
pub fn solve_warp(profile: &CurvatureProfile, t_max: f64, tol: f64) -> Result<GreenWarp> {
    let grid: Vec<f64> = (0..=DEFAULT_WARP_NODES)
        .map(|i| t_max * i as f64 / DEFAULT_WARP_NODES as f64)
        .collect();
    solve_warp_on(profile, &grid, tol, DEFAULT_WARP_STEPS)
}

/// As [`solve_warp`] on an explicit increasing grid starting at 0.
pub fn solve_warp_on(profile: &CurvatureProfile, grid: &[f64], tol: f64, max_steps: usize) -> Result<GreenWarp> {
    if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must start at 0 and increase".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let t_max = grid[grid.len() - 1];
    let check = profile.check(t_max, 4 * grid.len())?;
    if !check.non_increasing {
        log::warn!("curvature profile is not non-increasing on [0, {t_max}]; comparison bounds may fail");
    }
    let kappa = profile.clone();
    let states = dopri5(
        move |t, y: &[f64; 2]| [y[1], -kappa.eval(t) * y[0]],
        0.0,
        [0.0, 1.0],
        &grid[1..],
        OdeOptions { tol, max_steps, initial_step: (t_max * 1e-4).min(1e-3) },
    )?;
    let mut g = vec![0.0];
    let mut g_prime = vec![1.0];
    for y in states {
        g.push(y[0]);
        g_prime.push(y[1]);
    }
    Ok(GreenWarp {
        grid: grid.to_vec(),
        g,
        g_prime,
        kappa_used: profile.clone(),
        solver_tolerance: tol,
        profile_check: check,
    })
}

impl GreenWarp {
    pub fn t_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// `(G(t), G′(t))` by cubic Hermite interpolation (exact at nodes).
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        if !(t >= 0.0) || t > self.t_max() {
            return Err(Error::InvalidArgument(format!("t = {t} outside [0, {}]", self.t_max())));
        }
        let i = match self.grid.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return Ok((self.g[i], self.g_prime[i])),
            Err(i) => i - 1,
        };
        let h = self.grid[i + 1] - self.grid[i];
        let u = (t - self.grid[i]) / h;
        let (y0, y1, d0, d1) = (self.g[i], self.g[i + 1], self.g_prime[i], self.g_prime[i + 1]);
        let dd0 = -self.kappa_used.eval(self.grid[i]) * y0;
        let dd1 = -self.kappa_used.eval(self.grid[i + 1]) * y1;
        let value = WarpTable::hermite(y0, y1, d0, d1, h, u);
        let deriv = WarpTable::hermite(d0, d1, dd0, dd1, h, u);
        Ok((value, deriv))
    }

    pub fn check_bounds(&self) -> WarpBounds {
        let mut out = WarpBounds { lower_holds: true, upper_holds: true, strictly_increasing: true, worst_violation: 0.0 };
        let slack = 10.0 * self.solver_tolerance;
        for (i, (&t, &g)) in self.grid.iter().zip(&self.g).enumerate() {
            if i > 0 && g <= self.g[i - 1] {
                out.strictly_increasing = false;
            }
            if t == 0.0 {
                continue;
            }
            let lower = t;
            let upper = t * (t * (-self.kappa_used.eval(t)).max(0.0).sqrt()).exp();
            if g < lower * (1.0 - slack) {
                out.lower_holds = false;
                out.worst_violation = out.worst_violation.max((lower - g) / lower);
            }
            if g > upper * (1.0 + slack) {
                out.upper_holds = false;
                out.worst_violation = out.worst_violation.max((g - upper) / upper);
            }
        }
        out
    }

    /// `∫_a^b G(t)^p dt` on the interpolant.
    pub fn integral_of_power(&self, a: f64, b: f64, p: f64) -> Result<f64> {
        let q = Quadrature::new(1e-12, 1e-11);
        let breaks: Vec<f64> = self.grid.iter().copied().filter(|x| *x > a.min(b) && *x < a.max(b)).step_by(16).collect();
        q.integrate_with_breaks(|t| self.eval(t).map(|(g, _)| g.powf(p)).unwrap_or(f64::NAN), a, b, &breaks)
            .map(|r| r.value)
    }
}
