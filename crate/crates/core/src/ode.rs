//! Dormand–Prince 5(4) integrator with step control, landing exactly on
//! requested output times.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub tol: f64,
    pub max_steps: usize,
    pub initial_step: f64,
}

/// Integrates `y' = f(t, y)` from `t0` through every time in `outputs`
/// (ascending, all ≥ `t0`) and returns the state at each output.
pub fn dopri5<const N: usize, F>(f: F, t0: f64, y0: [f64; N], outputs: &[f64], opts: OdeOptions) -> Result<Vec<[f64; N]>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.initial_step;
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(outputs.len());
    for &target in outputs {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::ToleranceUnachievable { tol: opts.tol, steps, t });
            }
            let last = t + h >= target;
            let h_try = if last { target - t } else { h };
            let (y_new, err) = step(&f, t, &y, h_try, opts.tol);
            steps += 1;
            if err <= 1.0 {
                t = if last { target } else { t + h_try };
                y = y_new;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !(err <= 1.0 && last) {
                h = h_try * factor;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::ToleranceUnachievable { tol: opts.tol, steps, t });
            }
        }
        out.push(y);
    }
    Ok(out)
}

fn step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], h: f64, tol: f64) -> ([f64; N], f64)
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for i in 0..N {
                ys[i] += h * A[s][j] * kj[i];
            }
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err: f64 = 0.0;
    for i in 0..N {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += B5[s] * k[s][i];
            d4 += B4[s] * k[s][i];
        }
        y5[i] += h * d5;
        let scale = tol * (1.0 + y[i].abs().max(y5[i].abs()));
        err = err.max((h * (d5 - d4)).abs() / scale);
    }
    (y5, err)
}
