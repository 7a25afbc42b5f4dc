//! Globally adaptive Gauss–Kronrod (7/15) quadrature with user breakpoints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-10, max_intervals: 4000 }
    }
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    check_finite(fc, center)?;
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        check_finite(f1, center - x)?;
        check_finite(f2, center + x)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok((value, err))
}

fn check_finite(v: f64, x: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { location: format!("x = {x}") })
    }
}

impl Quadrature {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Default::default() }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        self.integrate_with_breaks(f, a, b, &[])
    }

    /// Integrates over `[a, b]`, starting from the partition induced by the
    /// interior `breaks` (points outside `(a, b)` are ignored).
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        a: f64,
        b: f64,
        breaks: &[f64],
    ) -> Result<Integral> {
        if a == b {
            return Ok(Integral { value: 0.0, error: 0.0, intervals: 0 });
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|p| *p > lo && *p < hi).collect();
        pts.push(lo);
        pts.push(hi);
        pts.sort_by(|x, y| x.total_cmp(y));
        pts.dedup();

        let mut heap = BinaryHeap::new();
        let (mut total, mut total_err) = (0.0, 0.0);
        for w in pts.windows(2) {
            let (value, error) = kronrod(&mut f, w[0], w[1])?;
            total += value;
            total_err += error;
            heap.push(Segment { a: w[0], b: w[1], value, error });
        }
        let tol = |t: f64| self.abs_tol.max(self.rel_tol * t.abs());
        while total_err > tol(total) {
            if heap.len() >= self.max_intervals {
                return Err(Error::QuadratureFailed {
                    estimate: sign * total,
                    error: total_err,
                    tol: tol(total),
                });
            }
            let seg = heap.pop().expect("heap is non-empty");
            let mid = 0.5 * (seg.a + seg.b);
            if mid <= seg.a || mid >= seg.b {
                // interval exhausted at machine precision
                return Err(Error::QuadratureFailed {
                    estimate: sign * total,
                    error: total_err,
                    tol: tol(total),
                });
            }
            let (v1, e1) = kronrod(&mut f, seg.a, mid)?;
            let (v2, e2) = kronrod(&mut f, mid, seg.b)?;
            total += v1 + v2 - seg.value;
            total_err += e1 + e2 - seg.error;
            heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
            heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
        }
        // re-sum to shed accumulated cancellation from the running updates
        let mut segs: Vec<Segment> = heap.into_vec();
        segs.sort_by(|x, y| x.a.total_cmp(&y.a));
        let value: f64 = segs.iter().map(|s| s.value).sum();
        let error: f64 = segs.iter().map(|s| s.error).sum();
        Ok(Integral { value: sign * value, error, intervals: segs.len() })
    }

    /// Integral over the whole real line via x = t / (1 − t²).
    pub fn integrate_real_line<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<Integral> {
        self.integrate(
            |t| {
                let d = 1.0 - t * t;
                if d <= 0.0 {
                    return 0.0;
                }
                let x = t / d;
                let v = f(x) * (1.0 + t * t) / (d * d);
                if v.is_finite() { v } else { 0.0 }
            },
            -1.0,
            1.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let q = Quadrature::default();
        let r = q.integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-13);
    }

    #[test]
    fn log_singularity_at_endpoint() {
        let q = Quadrature::new(1e-12, 1e-12);
        // ∫_0^1 log x dx = -1
        let r = q.integrate(|x| if x > 0.0 { x.ln() } else { 0.0 }, 0.0, 1.0).unwrap();
        assert!((r.value + 1.0).abs() < 1e-11);
    }

    #[test]
    fn interior_log_singularity_with_break() {
        let q = Quadrature::new(1e-11, 1e-11);
        // ∫_0^{2π} log|2 sin(θ/2)| dθ = 0 (singular at θ = 0, 2π); shift the singularity inside
        let r = q
            .integrate_with_breaks(|t| (2.0 * ((t - PI) / 2.0).sin()).abs().ln(), 0.0, 2.0 * PI, &[PI])
            .unwrap();
        assert!(r.value.abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let q = Quadrature::default();
        let a = q.integrate(|x| x.exp(), 0.0, 1.0).unwrap().value;
        let b = q.integrate(|x| x.exp(), 1.0, 0.0).unwrap().value;
        assert_eq!(a, -b);
    }

    #[test]
    fn real_line_cauchy() {
        let q = Quadrature::new(1e-12, 1e-12);
        let r = q.integrate_real_line(|x| 1.0 / (PI * (1.0 + x * x))).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_finite_reported() {
        let q = Quadrature::default();
        let e = q.integrate(|x| 1.0 / (x - 0.5), 0.0, 1.0);
        assert!(matches!(e, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn divergent_integral_fails() {
        let q = Quadrature::new(1e-10, 1e-10).with_max_intervals(200);
        let e = q.integrate(|x| if x > 0.0 { 1.0 / x } else { 0.0 }, 0.0, 1.0);
        assert!(e.is_err());
    }
}
