//! Shared numerical kernels: Gauss-Kronrod quadrature, bracketed
//! root-finding, and an adaptive step-doubling Runge-Kutta integrator.

use crate::error::{Error, Result};

// 15-point Kronrod abscissae on [0, 1] (symmetric about 0).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
// Embedded 7-point Gauss weights (nodes 1, 3, 5, 7 of XGK).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One G7-K15 panel on [a, b]; returns (kronrod estimate, error estimate).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = 0.0;
    let mut g = 0.0;
    for i in 0..8 {
        let (fl, fr) = if i == 7 {
            let v = f(c);
            (v, 0.0)
        } else {
            (f(c - h * XGK[i]), f(c + h * XGK[i]))
        };
        k += WGK[i] * (fl + fr);
        if i % 2 == 1 {
            g += WG[i / 2] * (fl + fr);
        } else if i == 7 {
            g += WG[3] * fl;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive quadrature by panel bisection on the GK15 error estimate.
/// `rel_tol` is relative to the running integral, with absolute floor
/// `abs_floor` so that integrals near zero terminate.
pub fn adaptive_quad<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, _) = gk15(f, a, b);
    let mut total = 0.0f64;
    let mut stack = vec![(a, b, whole)];
    let mut depth_guard = 0usize;
    while let Some((lo, hi, est)) = stack.pop() {
        depth_guard += 1;
        let mid = 0.5 * (lo + hi);
        let (left, el) = gk15(f, lo, mid);
        let (right, er) = gk15(f, mid, hi);
        let err = el + er + (left + right - est).abs();
        let tol = (rel_tol * (total.abs() + est.abs())).max(abs_floor);
        if err <= tol || hi - lo < 1e-15 * (b - a).abs() || depth_guard > 1_000_000 {
            total += left + right;
        } else {
            stack.push((lo, mid, left));
            stack.push((mid, hi, right));
        }
    }
    total
}

/// Bisection on a bracketed sign change. Returns the midpoint once the
/// bracket width drops below `tol_x` or `|f|` below `tol_f`.
pub fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol_x: f64, tol_f: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= tol_f || hi - lo <= tol_x {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Stop condition for the ODE integrator.
#[derive(Debug, Clone, Copy)]
pub enum Stop {
    /// Stop when the dependent variable reaches `target` (from below).
    YReaches(f64),
    /// Stop when the independent variable reaches `target`.
    XReaches(f64),
}

/// One accepted integrator step: position, value, and slope.
#[derive(Debug, Clone, Copy)]
pub struct OdeKnot {
    pub x: f64,
    pub y: f64,
    pub dy: f64,
}

#[derive(Debug)]
pub enum OdeOutcome {
    /// The stop condition fired; trajectory ends exactly at the event.
    Stopped(Vec<OdeKnot>),
    /// The solution left the admissible band (floor, ceil) first.
    LeftBand { at_x: f64, y: f64 },
}

fn rk4<F: Fn(f64, f64) -> f64>(f: &F, x: f64, y: f64, h: f64) -> f64 {
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, y + 0.5 * h * k1);
    let k3 = f(x + 0.5 * h, y + 0.5 * h * k2);
    let k4 = f(x + h, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Adaptive RK4 with step doubling and Richardson extrapolation
/// (effective order 5). Integrates dy/dx = f(x, y) from (x0, y0) until
/// `stop` fires or y exits (floor, ceil).
pub fn integrate_ode<F: Fn(f64, f64) -> f64>(
    f: &F,
    x0: f64,
    y0: f64,
    stop: Stop,
    floor: f64,
    ceil: f64,
    tol: f64,
) -> Result<OdeOutcome> {
    let mut x = x0;
    let mut y = y0;
    let mut knots = vec![OdeKnot { x, y, dy: f(x, y) }];
    let mut h: f64 = match stop {
        Stop::XReaches(t) => ((t - x0) / 64.0).max(1e-12),
        Stop::YReaches(_) => 1e-4 * (1.0 + x0.abs()),
    };
    let hit_y = |y: f64| matches!(stop, Stop::YReaches(t) if y >= t);
    let hit_x = |x: f64| matches!(stop, Stop::XReaches(t) if x >= t);
    if hit_y(y) || hit_x(x) {
        return Ok(OdeOutcome::Stopped(knots));
    }
    for _ in 0..2_000_000 {
        if let Stop::XReaches(t) = stop {
            if x + h > t {
                h = t - x;
            }
        }
        let full = rk4(f, x, y, h);
        let half = rk4(f, x, y, 0.5 * h);
        let two = rk4(f, x + 0.5 * h, half, 0.5 * h);
        let err = (two - full) / 15.0;
        let scale = tol * (1.0 + y.abs());
        if err.abs() <= scale {
            let y_new = two + err;
            let x_new = x + h;
            // Event or band-exit inside the step: locate by bisection on
            // partial RK4 sub-steps from the accepted left endpoint.
            let crossed_stop = hit_y(y_new) || hit_x(x_new);
            let crossed_band = y_new <= floor || y_new >= ceil;
            if crossed_stop || crossed_band {
                let target = match stop {
                    Stop::YReaches(t) if hit_y(y_new) => Some(t),
                    _ => None,
                };
                if let Some(ty) = target {
                    // locate h* with rk4(x, y, h*) = ty
                    let g = |hh: f64| rk4(f, x, y, hh) - ty;
                    let hstar = bisect(&g, 0.0, h, 1e-14 * (1.0 + h), 0.0)?;
                    let xe = x + hstar;
                    knots.push(OdeKnot { x: xe, y: ty, dy: f(xe, ty) });
                    return Ok(OdeOutcome::Stopped(knots));
                }
                if crossed_band && !hit_x(x_new) {
                    return Ok(OdeOutcome::LeftBand { at_x: x_new, y: y_new });
                }
                knots.push(OdeKnot { x: x_new, y: y_new, dy: f(x_new, y_new) });
                return Ok(OdeOutcome::Stopped(knots));
            }
            x = x_new;
            y = y_new;
            knots.push(OdeKnot { x, y, dy: f(x, y) });
            // conservative growth
            let grow = (scale / (err.abs() + 1e-300)).powf(0.2).min(4.0);
            h *= 0.9 * grow.max(0.5);
        } else {
            h *= 0.9 * (scale / err.abs()).powf(0.25).max(0.1);
        }
        if h < 1e-15 * (1.0 + x.abs()) {
            return Err(Error::Shooting(format!(
                "step size underflow at x={x}, y={y}"
            )));
        }
    }
    Err(Error::Shooting("integrator exceeded step budget".into()))
}

/// Cubic Hermite interpolation of y(x) given endpoint values and slopes.
pub fn hermite(x0: f64, y0: f64, d0: f64, x1: f64, y1: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    if h == 0.0 {
        return y0;
    }
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + d0 * h * (t3 - 2.0 * t2 + t)
        + y1 * (-2.0 * t3 + 3.0 * t2)
        + d1 * h * (t3 - t2)
}

/// Kahan-compensated sequential sum; order-stable reduction for the
/// Monte Carlo accumulators.
pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}
