//! Exponential polynomials `Σ_k p_k(z)·e^{a_k z}`: closed under sums,
//! products and differentiation, which keeps every derivative exact.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Coefficients below this fraction of the largest are treated as zero.
const DROP_RELATIVE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    /// Polynomial coefficients, ascending powers of `z`.
    pub coeffs: Vec<Complex64>,
    pub rate: Complex64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpPoly {
    terms: Vec<ExpTerm>,
}

fn poly_eval(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

fn poly_eval_abs(c: &[Complex64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a.norm())
}

impl ExpPoly {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::polynomial(&[c])
    }

    pub fn polynomial(coeffs: &[Complex64]) -> Self {
        Self::from_terms(vec![ExpTerm { coeffs: coeffs.to_vec(), rate: Complex64::new(0.0, 0.0) }])
    }

    /// `e^{az + b}`.
    pub fn exp_affine(a: Complex64, b: Complex64) -> Self {
        Self::from_terms(vec![ExpTerm { coeffs: vec![b.exp()], rate: a }])
    }

    /// `Σ c_k e^{a_k z}` from `(c_k, a_k)` pairs.
    pub fn exp_combination(pairs: &[(Complex64, Complex64)]) -> Self {
        Self::from_terms(pairs.iter().map(|&(c, a)| ExpTerm { coeffs: vec![c], rate: a }).collect())
    }

    pub fn from_terms(terms: Vec<ExpTerm>) -> Self {
        let mut merged: Vec<ExpTerm> = Vec::new();
        for t in terms {
            if let Some(m) = merged.iter_mut().find(|m| m.rate == t.rate) {
                if m.coeffs.len() < t.coeffs.len() {
                    m.coeffs.resize(t.coeffs.len(), Complex64::new(0.0, 0.0));
                }
                for (i, c) in t.coeffs.iter().enumerate() {
                    m.coeffs[i] += c;
                }
            } else {
                merged.push(t);
            }
        }
        let scale = merged
            .iter()
            .flat_map(|t| t.coeffs.iter().map(|c| c.norm()))
            .fold(0.0, f64::max);
        for t in &mut merged {
            for c in &mut t.coeffs {
                if c.norm() <= DROP_RELATIVE * scale {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
            while t.coeffs.last().is_some_and(|c| c.norm() == 0.0) {
                t.coeffs.pop();
            }
        }
        merged.retain(|t| !t.coeffs.is_empty());
        merged.sort_by(|a, b| a.rate.re.total_cmp(&b.rate.re).then(a.rate.im.total_cmp(&b.rate.im)));
        Self { terms: merged }
    }

    pub fn terms(&self) -> &[ExpTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficients if this is an ordinary polynomial.
    pub fn as_polynomial(&self) -> Option<Vec<Complex64>> {
        match self.terms.as_slice() {
            [] => Some(vec![]),
            [t] if t.rate == Complex64::new(0.0, 0.0) => Some(t.coeffs.clone()),
            _ => None,
        }
    }

    /// Nowhere-vanishing: a single term `c·e^{az}` with constant `c ≠ 0`.
    pub fn is_zero_free(&self) -> bool {
        matches!(self.terms.as_slice(), [t] if t.coeffs.len() == 1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.terms.iter().map(|t| poly_eval(&t.coeffs, z) * (t.rate * z).exp()).sum()
    }

    /// `Σ |p_k|(|z|)·|e^{a_k z}|`: a rounding scale for `eval(z)`.
    pub fn eval_abs(&self, z: Complex64) -> f64 {
        let x = z.norm();
        self.terms.iter().map(|t| poly_eval_abs(&t.coeffs, x) * (t.rate * z).re.exp()).sum()
    }

    pub fn derivative(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                // (p' + a p) e^{az}
                let n = t.coeffs.len();
                let mut c = vec![Complex64::new(0.0, 0.0); n];
                for i in 0..n {
                    c[i] = t.rate * t.coeffs[i];
                    if i + 1 < n {
                        c[i] += t.coeffs[i + 1] * (i + 1) as f64;
                    }
                }
                ExpTerm { coeffs: c, rate: t.rate }
            })
            .collect();
        Self::from_terms(terms)
    }

    pub fn nth_derivative(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |f, _| f.derivative())
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| ExpTerm { coeffs: t.coeffs.iter().map(|c| c * k).collect(), rate: t.rate })
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(other.terms.iter()).cloned().collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                let mut c = vec![Complex64::new(0.0, 0.0); a.coeffs.len() + b.coeffs.len() - 1];
                for (i, x) in a.coeffs.iter().enumerate() {
                    for (j, y) in b.coeffs.iter().enumerate() {
                        c[i + j] += x * y;
                    }
                }
                out.push(ExpTerm { coeffs: c, rate: a.rate + b.rate });
            }
        }
        Self::from_terms(out)
    }
}

impl fmt::Display for ExpPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "(")?;
            for (i, c) in t.coeffs.iter().enumerate() {
                if i > 0 {
                    write!(f, " + ")?;
                }
                write!(f, "{c}·z^{i}")?;
            }
            write!(f, ")")?;
            if t.rate != Complex64::new(0.0, 0.0) {
                write!(f, "·e^({}·z)", t.rate)?;
            }
        }
        Ok(())
    }
}
