//! Meromorphic targets `f: M → ℙⁿ` on surface charts, given by reduced
//! homogeneous representations `[w₀ : … : w_n]` of exponential polynomials.

mod exppoly;
mod roots;

pub use exppoly::{ExpPoly, ExpTerm};
pub use roots::{aberth, polynomial_zeros, vanishing_order, winding, winding_count, zeros_in_disc, MAX_MULTIPLICITY};

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::ModelManifold;

/// Point of ℙ¹.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProjPoint {
    Finite(Complex64),
    Infinity,
}

impl ProjPoint {
    pub fn finite(re: f64, im: f64) -> Self {
        ProjPoint::Finite(Complex64::new(re, im))
    }

    /// Homogeneous coordinates `[1 : a]` or `[0 : 1]`.
    pub fn homogeneous(&self) -> [Complex64; 2] {
        match *self {
            ProjPoint::Finite(a) => [Complex64::new(1.0, 0.0), a],
            ProjPoint::Infinity => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        }
    }

    pub fn from_homogeneous(w0: Complex64, w1: Complex64) -> Self {
        if w0.norm() == 0.0 {
            ProjPoint::Infinity
        } else {
            ProjPoint::Finite(w1 / w0)
        }
    }
}

impl fmt::Display for ProjPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjPoint::Infinity => write!(f, "inf"),
            ProjPoint::Finite(a) if a.im == 0.0 => write!(f, "{}", a.re),
            ProjPoint::Finite(a) => write!(f, "{}{:+}i", a.re, a.im),
        }
    }
}

fn hnorm(w: &[Complex64]) -> f64 {
    w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Chordal distance on ℙ¹, normalized to diameter 1.
pub fn chordal_distance(p: ProjPoint, q: ProjPoint) -> f64 {
    let (a, b) = (p.homogeneous(), q.homogeneous());
    ((a[0] * b[1] - a[1] * b[0]).norm() / (hnorm(&a) * hnorm(&b))).clamp(0.0, 1.0)
}

/// Hyperplane `{Σ h_j w_j = 0}` of ℙⁿ; on ℙ¹ the preimage of a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorSpec {
    pub hyperplane: Vec<Complex64>,
    pub label: String,
    /// `false` drops multiplicities (truncated counting).
    pub count_multiplicity: bool,
}

impl DivisorSpec {
    /// The point `a ∈ ℙ¹`, as the hyperplane `a·w₀ − w₁` (or `w₀` for ∞).
    pub fn point(a: ProjPoint) -> Self {
        let hyperplane = match a {
            ProjPoint::Finite(a) => vec![a, Complex64::new(-1.0, 0.0)],
            ProjPoint::Infinity => vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        };
        Self { hyperplane, label: a.to_string(), count_multiplicity: true }
    }

    pub fn hyperplane(coeffs: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        if coeffs.iter().all(|c| c.norm() == 0.0) {
            return Err(Error::InvalidArgument("hyperplane coefficients are all zero".into()));
        }
        Ok(Self { hyperplane: coeffs, label: label.into(), count_multiplicity: true })
    }

    pub fn truncated(mut self) -> Self {
        self.count_multiplicity = false;
        self
    }

    /// `|⟨h, w⟩| / (‖h‖‖w‖)`; on ℙ¹ this is the chordal distance to the point.
    pub fn distance(&self, w: &[Complex64]) -> f64 {
        let s: Complex64 = self.hyperplane.iter().zip(w).map(|(h, x)| h * x).sum();
        (s.norm() / (hnorm(&self.hyperplane) * hnorm(w))).clamp(0.0, 1.0)
    }

    /// `log 1/distance` computed without forming the tiny ratio first.
    pub fn log_inverse_distance(&self, w: &[Complex64]) -> f64 {
        let s: Complex64 = self.hyperplane.iter().zip(w).map(|(h, x)| h * x).sum();
        (hnorm(&self.hyperplane) * hnorm(w)).ln() - s.norm().ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    Rational,
    ExpAffine,
    ExpCombination,
    Entire,
    Projective,
}

/// A divisor point inside a ball: chart location and multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorPoint {
    pub z: Complex64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug)]
pub struct MeromorphicTarget {
    pub id: String,
    pub kind: TargetKind,
    components: Vec<ExpPoly>,
    derivatives: Vec<ExpPoly>,
}

fn cplx(xs: &[f64]) -> Vec<Complex64> {
    xs.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

impl MeromorphicTarget {
    fn build(id: impl Into<String>, kind: TargetKind, components: Vec<ExpPoly>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::InvalidArgument("a target needs at least two homogeneous components".into()));
        }
        if components[0].is_zero() {
            return Err(Error::InvalidArgument("first homogeneous component vanishes identically".into()));
        }
        let derivatives = components.iter().map(ExpPoly::derivative).collect();
        let t = Self { id: id.into(), kind, components, derivatives };
        if (1..t.components.len()).all(|j| t.wronskian_pair(0, j).is_zero()) {
            return Err(Error::ConstantTarget);
        }
        t.check_reduced()?;
        Ok(t)
    }

    /// `P/Q` from ascending real coefficients; must be in lowest terms.
    pub fn rational(id: impl Into<String>, num: &[f64], den: &[f64]) -> Result<Self> {
        Self::rational_complex(id, &cplx(num), &cplx(den))
    }

    pub fn rational_complex(id: impl Into<String>, num: &[Complex64], den: &[Complex64]) -> Result<Self> {
        let q = ExpPoly::polynomial(den);
        if q.is_zero() {
            return Err(Error::InvalidArgument("denominator is identically zero".into()));
        }
        Self::build(id, TargetKind::Rational, vec![q, ExpPoly::polynomial(num)])
    }

    pub fn polynomial(id: impl Into<String>, coeffs: &[f64]) -> Result<Self> {
        Self::rational(id, coeffs, &[1.0])
    }

    /// `e^{az + b}`.
    pub fn exp_affine(id: impl Into<String>, a: Complex64, b: Complex64) -> Result<Self> {
        Self::build(id, TargetKind::ExpAffine, vec![ExpPoly::constant(Complex64::new(1.0, 0.0)), ExpPoly::exp_affine(a, b)])
    }

    /// `Σ c_k e^{a_k z}`.
    pub fn exp_combination(id: impl Into<String>, pairs: &[(Complex64, Complex64)]) -> Result<Self> {
        Self::build(
            id,
            TargetKind::ExpCombination,
            vec![ExpPoly::constant(Complex64::new(1.0, 0.0)), ExpPoly::exp_combination(pairs)],
        )
    }

    /// Entire function given as an exponential polynomial.
    pub fn entire(id: impl Into<String>, f: ExpPoly) -> Result<Self> {
        Self::build(id, TargetKind::Entire, vec![ExpPoly::constant(Complex64::new(1.0, 0.0)), f])
    }

    /// `[ψ₀ : … : ψ_n]` without common zeros.
    pub fn projective(id: impl Into<String>, components: Vec<ExpPoly>) -> Result<Self> {
        Self::build(id, TargetKind::Projective, components)
    }

    fn check_reduced(&self) -> Result<()> {
        if self.components.iter().any(ExpPoly::is_zero_free) {
            return Ok(());
        }
        let Some((idx, coeffs)) = self
            .components
            .iter()
            .enumerate()
            .find_map(|(i, c)| c.as_polynomial().filter(|p| p.len() > 1).map(|p| (i, p)))
        else {
            return Err(Error::Unsupported(format!(
                "cannot certify that the components of '{}' have no common zero",
                self.id
            )));
        };
        for (z, _) in polynomial_zeros(&coeffs)? {
            let common = self.components.iter().enumerate().all(|(j, c)| {
                j == idx || c.eval(z).norm() <= 1e-9 * c.eval_abs(z).max(1e-300)
            });
            if common {
                return Err(Error::InvalidArgument(format!(
                    "components of '{}' share a zero at {z} (not in lowest terms)",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// `n` for a map into ℙⁿ.
    pub fn target_dim(&self) -> usize {
        self.components.len() - 1
    }

    pub fn components(&self) -> &[ExpPoly] {
        &self.components
    }

    pub fn eval_homogeneous(&self, z: Complex64) -> Vec<Complex64> {
        self.components.iter().map(|c| c.eval(z)).collect()
    }

    pub fn eval_derivative(&self, z: Complex64) -> Vec<Complex64> {
        self.derivatives.iter().map(|c| c.eval(z)).collect()
    }

    /// `f(z) ∈ ℙ¹`.
    pub fn value(&self, z: Complex64) -> ProjPoint {
        let w = self.eval_homogeneous(z);
        ProjPoint::from_homogeneous(w[0], w[1])
    }

    /// `ψ = w₁/w₀` and `ψ′` at a non-pole (ℙ¹ targets).
    pub fn affine_with_derivative(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let w = self.eval_homogeneous(z);
        let d = self.eval_derivative(z);
        if self.is_small(0, z, w[0]) {
            return Err(Error::Singular { location: format!("pole of '{}' at {z}", self.id) });
        }
        Ok((w[1] / w[0], (d[1] * w[0] - w[1] * d[0]) / (w[0] * w[0])))
    }

    fn is_small(&self, j: usize, z: Complex64, v: Complex64) -> bool {
        v.norm() <= 1e-14 * self.components[j].eval_abs(z)
    }

    /// `w_i w_j′ − w_j w_i′`.
    pub fn wronskian_pair(&self, i: usize, j: usize) -> ExpPoly {
        let a = self.components[i].mul(&self.components[j].derivative());
        let b = self.components[j].mul(&self.components[i].derivative());
        a.sub(&b)
    }

    /// `ζ_j ∘ ψ = [w₀ : w_j]`, a ℙ¹ target.
    pub fn coordinate(&self, j: usize) -> Result<Self> {
        if j == 0 || j > self.target_dim() {
            return Err(Error::InvalidArgument(format!("coordinate index {j} out of range")));
        }
        Self::build(
            format!("{}#{j}", self.id),
            TargetKind::Rational,
            vec![self.components[0].clone(), self.components[j].clone()],
        )
        .map(|mut t| {
            t.kind = if self.components[j].as_polynomial().is_some() && self.components[0].as_polynomial().is_some() {
                TargetKind::Rational
            } else {
                TargetKind::Entire
            };
            t
        })
    }

    /// `Σ h_j w_j` for a divisor.
    pub fn pullback(&self, divisor: &DivisorSpec) -> Result<ExpPoly> {
        if divisor.hyperplane.len() != self.components.len() {
            return Err(Error::InvalidArgument(format!(
                "divisor '{}' lives in ℙ^{} but the target maps to ℙ^{}",
                divisor.label,
                divisor.hyperplane.len() as isize - 1,
                self.target_dim()
            )));
        }
        let f = self
            .components
            .iter()
            .zip(&divisor.hyperplane)
            .fold(ExpPoly::zero(), |acc, (w, h)| acc.add(&w.scale(*h)));
        if f.is_zero() {
            return Err(Error::InvalidArgument(format!(
                "image of '{}' lies inside the divisor '{}'",
                self.id, divisor.label
            )));
        }
        Ok(f)
    }

    /// Zeros and poles of all components in `|z| < chart_radius`, useful as
    /// breakpoints for circle averages.
    pub fn special_points(&self, chart_radius: f64) -> Result<Vec<Complex64>> {
        let mut pts = Vec::new();
        for c in &self.components {
            if !c.is_zero() {
                pts.extend(zeros_in_disc(c, chart_radius)?.into_iter().map(|x| x.0));
            }
        }
        Ok(pts)
    }
}

fn require_surface(manifold: &ModelManifold) -> Result<()> {
    if manifold.is_surface() {
        Ok(())
    } else {
        Err(Error::Unsupported("meromorphic targets are defined on one-dimensional sources only".into()))
    }
}

/// All solutions of `f ∈ D` with geodesic distance `< r`, with multiplicity.
pub fn enumerate_divisor(
    target: &MeromorphicTarget,
    divisor: &DivisorSpec,
    manifold: &ModelManifold,
    r: f64,
) -> Result<Vec<DivisorPoint>> {
    require_surface(manifold)?;
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    let f = target.pullback(divisor)?;
    let origin = Complex64::new(0.0, 0.0);
    if f.eval(origin).norm() <= 1e-13 * f.eval_abs(origin) {
        return Err(Error::ReferencePointOnDivisor { value: divisor.label.clone() });
    }
    let rho = manifold.chart_radius(r)?;
    Ok(zeros_in_disc(&f, rho)?
        .into_iter()
        .map(|(z, multiplicity)| DivisorPoint { z, multiplicity })
        .collect())
}

/// `‖∇_M ψ‖ / |ψ|` for a ℙ¹ target `ψ = w₁/w₀` at a chart point.
pub fn gradient_quotient(target: &MeromorphicTarget, manifold: &ModelManifold, z: Complex64) -> Result<f64> {
    require_surface(manifold)?;
    if target.target_dim() != 1 {
        return Err(Error::Unsupported("gradient quotient needs a ℙ¹ target".into()));
    }
    let w = target.eval_homogeneous(z);
    let d = target.eval_derivative(z);
    for j in 0..2 {
        if target.is_small(j, z, w[j]) {
            return Err(Error::Singular {
                location: format!("{} of '{}' at {z}", if j == 0 { "pole" } else { "zero" }, target.id),
            });
        }
    }
    let log_deriv = d[1] / w[1] - d[0] / w[0];
    Ok(log_deriv.norm() / manifold.conformal_factor(z.norm()))
}

/// `‖∇_M ψ‖² / (|ψ|² (1 + log²|ψ|))`.
pub fn ldl_density(target: &MeromorphicTarget, manifold: &ModelManifold, z: Complex64) -> Result<f64> {
    let q = gradient_quotient(target, manifold, z)?;
    let w = target.eval_homogeneous(z);
    let l = w[1].norm().ln() - w[0].norm().ln();
    Ok(q * q / (1.0 + l * l))
}
