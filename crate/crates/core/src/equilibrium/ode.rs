//! Dormand–Prince 5(4) embedded Runge–Kutta pair with step-size control.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub(crate) type State = [f64; 2];

/// Per-component error weights: `atol[i] + rtol · |y[i]|`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerance {
    pub rtol: f64,
    pub atol: State,
}

/// One DP5 step; returns the 5th-order solution and the scaled error norm.
pub(crate) fn dp_step<F: Fn(f64, &State) -> State>(
    f: &F,
    t: f64,
    y: &State,
    h: f64,
    tol: &Tolerance,
) -> (State, f64) {
    let mut k = [[0.0; 2]; 7];
    k[0] = f(t, y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for i in 0..2 {
                ys[i] += h * A[s][j] * kj[i];
            }
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err = 0.0f64;
    for i in 0..2 {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += B5[s] * k[s][i];
            d4 += B4[s] * k[s][i];
        }
        y5[i] += h * d5;
        let scale = tol.atol[i] + tol.rtol * y[i].abs().max(y5[i].abs());
        err = err.max((h * (d5 - d4)).abs() / scale);
    }
    (y5, err)
}

/// Advances from `t0` to `t1` adaptively, stopping early when `stop(y)` turns true.
///
/// Returns the accepted state at the end (or the last state before `stop`),
/// the step size to continue with, and whether `stop` fired. When `stop`
/// fires, the returned `(t, y)` is the last accepted point *before* the
/// crossing and `h` the step that crossed it.
pub(crate) struct Advance {
    pub t: f64,
    pub y: State,
    pub h: f64,
    pub stopped: bool,
}

pub(crate) fn advance<F, S>(
    f: &F,
    t0: f64,
    y0: State,
    t1: f64,
    h0: f64,
    tol: &Tolerance,
    stop: S,
) -> Result<Advance>
where
    F: Fn(f64, &State) -> State,
    S: Fn(&State) -> bool,
{
    let mut t = t0;
    let mut y = y0;
    let mut h = h0.min(t1 - t0);
    let mut rejections = 0usize;
    while t < t1 {
        let last = t + h >= t1;
        let step = if last { t1 - t } else { h };
        if step <= 1e-15 * t.abs().max(1e-300) {
            return Err(Error::Integrator {
                r: t,
                reason: "step size underflow".into(),
            });
        }
        let (yn, err) = dp_step(f, t, &y, step, tol);
        if !err.is_finite() || err > 1.0 {
            rejections += 1;
            if rejections > 10_000 {
                return Err(Error::Integrator {
                    r: t,
                    reason: "too many rejected steps".into(),
                });
            }
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h = step * fac;
            continue;
        }
        if stop(&yn) {
            return Ok(Advance {
                t,
                y,
                h: step,
                stopped: true,
            });
        }
        t = if last { t1 } else { t + step };
        y = yn;
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if !last {
            h = step * fac;
        }
    }
    Ok(Advance {
        t,
        y,
        h,
        stopped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |_t: f64, y: &State| [y[1], -y[0]];
        let tol = Tolerance {
            rtol: 1e-12,
            atol: [1e-14, 1e-14],
        };
        let tau = std::f64::consts::TAU;
        let out = advance(&f, 0.0, [1.0, 0.0], tau, 1e-3, &tol, |_| false).unwrap();
        assert!(!out.stopped);
        assert_relative_eq!(out.y[0], 1.0, epsilon = 1e-10);
        assert!(out.y[1].abs() < 1e-10);
    }

    #[test]
    fn stop_reports_state_before_crossing() {
        let f = |_t: f64, _y: &State| [-1.0, 0.0];
        let tol = Tolerance {
            rtol: 1e-12,
            atol: [1e-14, 1e-14],
        };
        let out = advance(&f, 0.0, [1.0, 0.0], 10.0, 0.3, &tol, |y| y[0] < 0.0).unwrap();
        assert!(out.stopped);
        assert!(out.y[0] >= 0.0);
        assert!(out.y[0] - out.h < 0.0);
    }
}
