//! Zeros of exponential polynomials inside a disc: Aberth iteration for
//! polynomials, exact lattice enumeration for commensurate exponential sums,
//! and argument-principle subdivision otherwise.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::exppoly::ExpPoly;
use crate::error::{Error, Result};

/// Largest multiplicity the enumerators will certify.
pub const MAX_MULTIPLICITY: usize = 5;

const CLUSTER_RELATIVE: f64 = 5e-3;
const TAYLOR_SMALL: f64 = 1e-6;
const MAX_CELLS: usize = 200_000;

fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn horner(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = czero();
    let mut dp = czero();
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// All roots of the polynomial with ascending coefficients `c`, with
/// repetition, by Aberth–Ehrlich iteration.
pub fn aberth(c: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut c: Vec<Complex64> = c.to_vec();
    while c.last().is_some_and(|a| a.norm() == 0.0) {
        c.pop();
    }
    if c.is_empty() {
        return Err(Error::InvalidArgument("zero polynomial has no isolated roots".into()));
    }
    let n = c.len() - 1;
    if n == 0 {
        return Ok(vec![]);
    }
    let lead = c[n];
    let c: Vec<Complex64> = c.iter().map(|a| a / lead).collect();
    if n == 1 {
        return Ok(vec![-c[0]]);
    }
    // Fujiwara bound for the initial circle
    let rad = (0..n)
        .map(|k| {
            let q = c[k].norm();
            if k == 0 { (q / 2.0).powf(1.0 / n as f64) } else { q.powf(1.0 / (n - k) as f64) }
        })
        .fold(0.0, f64::max)
        .max(1e-3)
        * 2.0;
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(rad, 2.0 * PI * k as f64 / n as f64 + 0.4))
        .collect();
    let mut quiet = 0;
    for _ in 0..2000 {
        let mut biggest: f64 = 0.0;
        for k in 0..n {
            let (p, dp) = horner(&c, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let sum: Complex64 = (0..n).filter(|&j| j != k).map(|j| 1.0 / (z[k] - z[j])).sum();
            let w = ratio / (1.0 - ratio * sum);
            if w.is_finite() {
                z[k] -= w;
                biggest = biggest.max(w.norm() / z[k].norm().max(1.0));
            }
        }
        if biggest < 1e-15 {
            quiet += 1;
            if quiet > 3 {
                break;
            }
        }
    }
    Ok(z)
}

/// Checks that `f` has a zero of exactly multiplicity `mu` at `z`, comparing
/// Taylor coefficients against their rounding scale.
pub fn verify_multiplicity(f: &ExpPoly, z: Complex64, mu: usize) -> bool {
    let mut d = f.clone();
    for k in 0..=mu {
        let v = d.eval(z).norm();
        let s = d.eval_abs(z).max(f64::MIN_POSITIVE);
        if k < mu && v > TAYLOR_SMALL * s {
            return false;
        }
        if k == mu && v <= TAYLOR_SMALL * s {
            return false;
        }
        d = d.derivative();
    }
    true
}

/// Order of vanishing of `f` at `z`, up to [`MAX_MULTIPLICITY`].
pub fn vanishing_order(f: &ExpPoly, z: Complex64) -> Result<usize> {
    let mut d = f.clone();
    for k in 0..=MAX_MULTIPLICITY {
        let v = d.eval(z).norm();
        let s = d.eval_abs(z).max(f64::MIN_POSITIVE);
        if v > TAYLOR_SMALL * s {
            return Ok(k);
        }
        d = d.derivative();
    }
    Err(Error::MultiplicityTooHigh { max: MAX_MULTIPLICITY, location: format!("{z}") })
}

fn newton(f: &ExpPoly, df: &ExpPoly, mut z: Complex64, iters: usize) -> Option<Complex64> {
    for _ in 0..iters {
        let d = df.eval(z);
        if d.norm() == 0.0 {
            return None;
        }
        let step = f.eval(z) / d;
        if !step.is_finite() {
            return None;
        }
        z -= step;
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0) {
            return Some(z);
        }
    }
    // accept if the residual sits at rounding level
    (f.eval(z).norm() <= 1e-12 * f.eval_abs(z)).then_some(z)
}

/// Distinct roots of a polynomial with their multiplicities.
///
/// Aberth iterates for a `μ`-fold root scatter by roughly `ε^{1/μ}`, so each
/// cluster is grown one iterate at a time and its center re-polished as a
/// simple root of the `(μ−1)`-th derivative until the Taylor test agrees.
pub fn polynomial_zeros(c: &[Complex64]) -> Result<Vec<(Complex64, usize)>> {
    let mut remaining = aberth(c)?;
    let f = ExpPoly::polynomial(c);
    let mut out = Vec::new();
    while let Some(seed) = remaining.pop() {
        remaining.sort_by(|a, b| (a - seed).norm().total_cmp(&(b - seed).norm()));
        let reach = CLUSTER_RELATIVE * 10.0 * seed.norm().max(1.0);
        let mut found = None;
        for k in 1..=MAX_MULTIPLICITY + 1 {
            if k > 1 && (k - 1 > remaining.len() || (remaining[k - 2] - seed).norm() > reach) {
                break;
            }
            let center = (seed + remaining[..k - 1].iter().sum::<Complex64>()) / k as f64;
            let g = f.nth_derivative(k - 1);
            let z = newton(&g, &g.derivative(), center, 40).unwrap_or(center);
            if k == MAX_MULTIPLICITY + 1 {
                vanishing_order(&f, z)?;
                break;
            }
            if verify_multiplicity(&f, z, k) {
                found = Some((z, k));
                break;
            }
        }
        match found {
            Some((z, k)) => {
                remaining.drain(..k - 1);
                out.push((z, k));
            }
            None => {
                return Err(Error::RootCluster {
                    center: format!("{seed}"),
                    half_width: remaining.first().map_or(0.0, |r| (r - seed).norm()),
                })
            }
        }
    }
    Ok(out)
}

/// `f = Σ c_k e^{n_k β z}` with integers `n_k`: returns `β` and `(n_k, c_k)`.
fn lattice_form(f: &ExpPoly) -> Option<(Complex64, Vec<(i64, Complex64)>)> {
    let terms = f.terms();
    if terms.len() < 2 || terms.iter().any(|t| t.coeffs.len() != 1) {
        return None;
    }
    let a_ref = terms
        .iter()
        .map(|t| t.rate)
        .filter(|a| a.norm() > 0.0)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))?;
    let q: Vec<f64> = terms
        .iter()
        .map(|t| {
            let r = t.rate / a_ref;
            if r.im.abs() <= 1e-12 * r.norm().max(1.0) { r.re } else { f64::NAN }
        })
        .collect();
    if q.iter().any(|x| x.is_nan()) {
        return None;
    }
    let den = (1..=12i64).find(|&d| q.iter().all(|x| (x * d as f64 - (x * d as f64).round()).abs() <= 1e-9))?;
    let mut n: Vec<i64> = q.iter().map(|x| (x * den as f64).round() as i64).collect();
    let g = n.iter().fold(0i64, |g, &k| gcd(g, k.abs()));
    n.iter_mut().for_each(|k| *k /= g);
    let beta = a_ref * g as f64 / den as f64;
    Some((beta, n.into_iter().zip(terms.iter().map(|t| t.coeffs[0])).collect()))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Zeros of `f` in the open disc `|z| < radius`, with multiplicities,
/// sorted by modulus then argument.
pub fn zeros_in_disc(f: &ExpPoly, radius: f64) -> Result<Vec<(Complex64, usize)>> {
    if f.is_zero() {
        return Err(Error::InvalidArgument("identically zero function has no isolated zeros".into()));
    }
    let mut out = if f.is_zero_free() {
        vec![]
    } else if let Some(c) = f.as_polynomial() {
        polynomial_zeros(&c)?
    } else if let Some((beta, lattice)) = lattice_form(f) {
        lattice_zeros(f, beta, &lattice, radius)?
    } else {
        subdivision_zeros(f, radius)?
    };
    out.retain(|(z, _)| z.norm() < radius);
    out.sort_by(|a, b| a.0.norm().total_cmp(&b.0.norm()).then(a.0.arg().total_cmp(&b.0.arg())));
    Ok(out)
}

fn lattice_zeros(
    f: &ExpPoly,
    beta: Complex64,
    lattice: &[(i64, Complex64)],
    radius: f64,
) -> Result<Vec<(Complex64, usize)>> {
    let lo = lattice.iter().map(|x| x.0).min().unwrap_or(0);
    let hi = lattice.iter().map(|x| x.0).max().unwrap_or(0);
    let mut c = vec![czero(); (hi - lo + 1) as usize];
    for &(k, a) in lattice {
        c[(k - lo) as usize] += a;
    }
    let df = f.derivative();
    let period = Complex64::new(0.0, 2.0 * PI) / beta;
    let mut out = Vec::new();
    for (w, mu) in polynomial_zeros(&c)? {
        let z0 = w.ln() / beta;
        // k with |z0 + k·period| < radius
        let p = period.norm();
        let t = -(z0.re * period.re + z0.im * period.im) / (p * p);
        let span = (radius / p).ceil() + 2.0;
        let (k0, k1) = ((t - span).floor() as i64, (t + span).ceil() as i64);
        for k in k0..=k1 {
            let mut z = z0 + period * k as f64;
            if z.norm() >= radius * (1.0 + 1e-9) {
                continue;
            }
            if mu == 1 {
                z = newton(f, &df, z, 4).unwrap_or(z);
            }
            out.push((z, mu));
        }
    }
    Ok(out)
}

/// Net change of `arg f` along `γ(t)`, `t ∈ [0, 1]`, in units of 2π.
pub fn winding<G: Fn(f64) -> Complex64>(f: &ExpPoly, gamma: G) -> Result<i64> {
    fn rec<G: Fn(f64) -> Complex64>(
        f: &ExpPoly,
        g: &G,
        a: f64,
        b: f64,
        fa: Complex64,
        fb: Complex64,
        depth: usize,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let zm = g(m);
        let fm = f.eval(zm);
        if fm.norm() <= 1e-13 * f.eval_abs(zm) || depth > 60 {
            return Err(Error::Singular { location: format!("zero of {f} on the contour near {zm}") });
        }
        let whole = (fb / fa).arg();
        let left = (fm / fa).arg();
        let right = (fb / fm).arg();
        if whole.abs() < 0.5 && (left + right - whole).abs() < 1e-9 {
            return Ok(whole);
        }
        Ok(rec(f, g, a, m, fa, fm, depth + 1)? + rec(f, g, m, b, fm, fb, depth + 1)?)
    }
    let n = 64;
    let mut total = 0.0;
    let mut prev_t = 0.0;
    let mut prev = f.eval(gamma(0.0));
    for i in 1..=n {
        let t = i as f64 / n as f64;
        let cur = f.eval(gamma(t));
        total += rec(f, &gamma, prev_t, t, prev, cur, 0)?;
        prev_t = t;
        prev = cur;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Number of zeros (with multiplicity) of `f` inside `|z| < radius`, from
/// the argument principle on the circle.
pub fn winding_count(f: &ExpPoly, radius: f64) -> Result<i64> {
    winding(f, |t| Complex64::from_polar(radius, 2.0 * PI * t))
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Cell {
    fn count(&self, f: &ExpPoly) -> Result<i64> {
        let c = [
            Complex64::new(self.x0, self.y0),
            Complex64::new(self.x1, self.y0),
            Complex64::new(self.x1, self.y1),
            Complex64::new(self.x0, self.y1),
        ];
        winding(f, |t| {
            let s = 4.0 * t;
            let i = (s.floor() as usize).min(3);
            let u = s - i as f64;
            c[i] + (c[(i + 1) % 4] - c[i]) * u
        })
    }

    fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    fn size(&self) -> f64 {
        (self.x1 - self.x0).max(self.y1 - self.y0)
    }

    fn contains(&self, z: Complex64) -> bool {
        z.re >= self.x0 && z.re <= self.x1 && z.im >= self.y0 && z.im <= self.y1
    }

    fn split(&self) -> [Cell; 4] {
        // off-centre cuts keep symmetric zeros off the cell edges
        let xm = self.x0 + 0.4937 * (self.x1 - self.x0);
        let ym = self.y0 + 0.5071 * (self.y1 - self.y0);
        [
            Cell { x0: self.x0, x1: xm, y0: self.y0, y1: ym },
            Cell { x0: xm, x1: self.x1, y0: self.y0, y1: ym },
            Cell { x0: self.x0, x1: xm, y0: ym, y1: self.y1 },
            Cell { x0: xm, x1: self.x1, y0: ym, y1: self.y1 },
        ]
    }

    fn describe(&self) -> String {
        format!("[{}, {}] × [{}, {}]", self.x0, self.x1, self.y0, self.y1)
    }
}

fn subdivision_zeros(f: &ExpPoly, radius: f64) -> Result<Vec<(Complex64, usize)>> {
    let root = Cell { x0: -1.0013 * radius, x1: 1.0029 * radius, y0: -1.0021 * radius, y1: 1.0007 * radius };
    let df = f.derivative();
    let mut stack = vec![(root, root.count(f)?)];
    let mut out: Vec<(Complex64, usize)> = Vec::new();
    let mut visited = 0usize;
    while let Some((cell, n)) = stack.pop() {
        visited += 1;
        if visited > MAX_CELLS {
            return Err(Error::RootCluster { center: format!("{}", cell.center()), half_width: 0.5 * cell.size() });
        }
        if n <= 0 {
            continue;
        }
        let scale = cell.center().norm().max(1.0);
        if n == 1 {
            if let Some(z) = newton(f, &df, cell.center(), 60) {
                if cell.contains(z) {
                    out.push((z, 1));
                    continue;
                }
            }
        } else if cell.size() < 1e-6 * scale {
            let mu = n as usize;
            if mu > MAX_MULTIPLICITY {
                return Err(Error::MultiplicityTooHigh { max: MAX_MULTIPLICITY, location: format!("{}", cell.center()) });
            }
            let g = f.nth_derivative(mu - 1);
            let z = newton(&g, &g.derivative(), cell.center(), 60).unwrap_or(cell.center());
            if verify_multiplicity(f, z, mu) {
                out.push((z, mu));
                continue;
            }
            return Err(Error::RootCluster { center: cell.describe(), half_width: 0.5 * cell.size() });
        }
        if cell.size() < 1e-13 * scale {
            return Err(Error::RootCluster { center: cell.describe(), half_width: 0.5 * cell.size() });
        }
        for sub in cell.split() {
            let k = sub.count(f)?;
            stack.push((sub, k));
        }
    }
    Ok(out)
}
