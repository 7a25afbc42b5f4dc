//! Green functions of `−Δ_M/2` with pole at the center, harmonic measure on
//! geodesic spheres, and Green-weighted volume integrals.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{unit_sphere_volume, ChartPoint, Geometry, GreenWarp, ModelManifold};
use crate::quadrature::Quadrature;

/// `g_r(o, x)` at geodesic distance `s` from the center, `0 < s ≤ r`.
pub fn green_radial(manifold: &ModelManifold, r: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("Green function has its pole at s = 0 (got s = {s})")));
    }
    if s > r {
        return Err(Error::InvalidArgument(format!("s = {s} exceeds the radius r = {r}")));
    }
    let m = manifold.complex_dim();
    match manifold.geometry() {
        Geometry::Flat if m == 1 => Ok((r / s).ln() / PI),
        Geometry::Flat => {
            let p = 2.0 - 2.0 * m as f64;
            Ok((s.powf(p) - r.powf(p)) / ((m - 1) as f64 * unit_sphere_volume(m)))
        }
        Geometry::Hyperbolic { scale } => {
            // conformal invariance: (1/π) log(ρ(r)/ρ(s)) with ρ = tanh(cs/2)
            let (a, b) = (0.5 * scale * r, 0.5 * scale * s);
            Ok(((a.tanh() / b.tanh()).ln()) / PI)
        }
        Geometry::Warped(_) => {
            let rr = manifold.chart_radius(r)?;
            let rs = manifold.chart_radius(s)?;
            Ok((rr / rs).ln() / PI)
        }
    }
}

/// `g_r(o, ·)` as a function of a chart point (surfaces and flat ℂ^m).
pub fn green_at(manifold: &ModelManifold, r: f64, p: &ChartPoint) -> Result<f64> {
    let s = manifold.distance(p)?;
    green_radial(manifold, r, s)
}

/// `g_r(o, ·)` for a fixed manifold and radius.
#[derive(Clone, Debug)]
pub struct GreenProfile {
    pub manifold: ModelManifold,
    pub r: f64,
}

impl GreenProfile {
    pub fn new(manifold: &ModelManifold, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
        }
        manifold.chart_radius(r)?;
        Ok(Self { manifold: manifold.clone(), r })
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        green_radial(&self.manifold, self.r, s)
    }

    /// Table of `(s, g)` on `n` equispaced interior radii, for CSV dumps.
    pub fn tabulate(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        (1..=n)
            .map(|i| {
                let s = self.r * i as f64 / n as f64;
                self.eval(s).map(|g| (s, g))
            })
            .collect()
    }
}

/// Integrand for [`coarea_quadrature`].
pub enum Integrand<'a> {
    /// Function of geodesic distance from the center.
    Radial(&'a (dyn Fn(f64) -> f64 + Sync)),
    /// Function of a conformal-chart point (surfaces only).
    Chart(&'a (dyn Fn(ChartPoint) -> f64 + Sync)),
}

/// Optional breakpoints that help the adaptive rules with kinks or
/// integrable singularities away from the center.
#[derive(Clone, Debug, Default)]
pub struct CoareaHints {
    /// Geodesic radii (radial integrands) or chart radii (chart integrands).
    pub radii: Vec<f64>,
    /// Angles in `[0, 2π)` (chart integrands).
    pub angles: Vec<f64>,
}

const MAX_CENTER_SHELLS: usize = 400;

/// `∫_{B_o(r)} g_r(o, x) φ(x) dV(x)` to absolute tolerance `tol`.
pub fn coarea_quadrature(manifold: &ModelManifold, r: f64, integrand: Integrand<'_>, tol: f64) -> Result<f64> {
    coarea_quadrature_with_hints(manifold, r, integrand, tol, &CoareaHints::default())
}

pub fn coarea_quadrature_with_hints(
    manifold: &ModelManifold,
    r: f64,
    integrand: Integrand<'_>,
    tol: f64,
    hints: &CoareaHints,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    match integrand {
        Integrand::Radial(phi) => {
            manifold.chart_radius(r)?;
            let omega = unit_sphere_volume(manifold.complex_dim());
            let pow = 2 * manifold.complex_dim() as i32 - 1;
            let radial = |s: f64| -> f64 {
                if s <= 0.0 {
                    return 0.0;
                }
                let g = green_radial(manifold, r, s).unwrap_or(f64::NAN);
                g * phi(s) * omega * manifold.warp(s).powi(pow)
            };
            shell_integral(radial, r, tol, &hints.radii)
        }
        Integrand::Chart(phi) => {
            if !manifold.is_surface() {
                return Err(Error::Unsupported(
                    "chart integrands are available on surfaces only; use a radial integrand".into(),
                ));
            }
            let rho_r = manifold.chart_radius(r)?;
            let ang_q = Quadrature::new(tol * 1e-2 / (2.0 * PI), 1e-11).with_max_intervals(2000);
            let mut angles: Vec<f64> = hints.angles.iter().map(|a| a.rem_euclid(2.0 * PI)).collect();
            angles.sort_by(|a, b| a.total_cmp(b));
            let radial = |rho: f64| -> f64 {
                if rho <= 0.0 {
                    return 0.0;
                }
                let lam = manifold.conformal_factor(rho);
                let g = (rho_r / rho).ln() / PI;
                let ring = ang_q.integrate_with_breaks(
                    |th| phi(ChartPoint::from_slice(&[rho * th.cos(), rho * th.sin()])),
                    0.0,
                    2.0 * PI,
                    &angles,
                );
                match ring {
                    Ok(v) => g * lam * lam * rho * v.value,
                    Err(e) => {
                        log::debug!("angular quadrature failed at chart radius {rho}: {e}");
                        f64::NAN
                    }
                }
            };
            shell_integral(radial, rho_r, tol, &hints.radii)
        }
    }
}

/// `∫_0^b f`, with the neighbourhood of 0 split into dyadic shells so that
/// log-type behaviour at the center is integrated in the variable `log s`.
/// Shells that fail to shrink flag a non-integrable center.
fn shell_integral<F: Fn(f64) -> f64>(f: F, b: f64, tol: f64, breaks: &[f64]) -> Result<f64> {
    let q = Quadrature::new(tol * 0.25, 1e-12).with_max_intervals(4000);
    let inner = b * 1e-3;
    let outer = q.integrate_with_breaks(&f, inner, b, breaks).map_err(|e| wrap_nonfinite(e, "outer"))?;
    let mut total = outer.value;
    let mut hi = inner;
    let mut prev = f64::INFINITY;
    let mut growing = 0usize;
    for k in 0..MAX_CENTER_SHELLS {
        let lo = hi * 0.5;
        // s = e^u on [log lo, log hi]
        let shell = q
            .integrate(|u| {
                let s = u.exp();
                f(s) * s
            }, lo.ln(), hi.ln())
            .map_err(|e| wrap_nonfinite(e, "center"))?
            .value;
        total += shell;
        if shell.abs() > 0.95 * prev && k > 8 {
            growing += 1;
            if growing > 16 {
                return Err(Error::NonIntegrable(format!(
                    "Green-weighted integrand does not decay near the center (shell {k}, contribution {shell:e})"
                )));
            }
        } else {
            growing = 0;
        }
        if shell.abs() < tol * 1e-3 && k > 4 {
            return Ok(total);
        }
        prev = shell.abs();
        hi = lo;
    }
    Err(Error::NonIntegrable(format!(
        "center contribution not converged after {MAX_CENTER_SHELLS} dyadic shells"
    )))
}

fn wrap_nonfinite(e: Error, region: &str) -> Error {
    match e {
        Error::NonFinite { location } => Error::NonFinite { location: format!("{region} region, {location}") },
        other => other,
    }
}

/// Harmonic measure `dπ_o^r` on `S_o(r)` for a center-started model manifold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicDensity {
    pub r: f64,
    /// Density per unit of the standard angular measure on the unit sphere.
    pub angular: f64,
    /// Density with respect to induced surface measure on `S_o(r)`.
    pub surface: f64,
    /// `1/(ω_{2m−1} r^{2m−1})`.
    pub bound: f64,
    pub bound_holds: bool,
    /// Chart radius of `S_o(r)`.
    pub chart_radius: f64,
}

pub fn harmonic_density(manifold: &ModelManifold, r: f64) -> Result<HarmonicDensity> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    let chart_radius = manifold.chart_radius(r)?;
    let omega = unit_sphere_volume(manifold.complex_dim());
    let surface = 1.0 / manifold.sphere_area(r);
    let bound = 1.0 / (omega * r.powi(2 * manifold.complex_dim() as i32 - 1));
    Ok(HarmonicDensity {
        r,
        angular: 1.0 / omega,
        surface,
        bound,
        bound_holds: surface <= bound * (1.0 + 1e-12),
        chart_radius,
    })
}

/// `E_o[τ_r]` by quadrature (the co-area integral of `φ ≡ 1`).
pub fn mean_exit_time(manifold: &ModelManifold, r: f64, tol: f64) -> Result<f64> {
    coarea_quadrature(manifold, r, Integrand::Radial(&|_| 1.0), tol)
}

/// Ratio `g_r(o, s) · ∫_η^r G^{1−2m} / ∫_s^r G^{1−2m}` relating the Green
/// function to the comparison profile, with `η = 1`.
pub fn green_comparison_ratio(manifold: &ModelManifold, warp: &GreenWarp, r: f64, s: f64) -> Result<f64> {
    let p = 1.0 - 2.0 * manifold.complex_dim() as f64;
    let g = green_radial(manifold, r, s)?;
    let num = warp.integral_of_power(1.0, r, p)?;
    let den = warp.integral_of_power(s, r, p)?;
    if den <= 0.0 {
        return Err(Error::InvalidArgument(format!("degenerate comparison integral at s = {s}, r = {r}")));
    }
    Ok(g * num / den)
}
