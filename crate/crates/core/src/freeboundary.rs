//! Free-boundary geometry of the optimal policy: the scale curve G that
//! maps retention level to surplus, its inverse (the optimal retention
//! below the first threshold), the retention path H on the cbar2-only
//! band, the retention ceiling M0 of the kill-line regime, and the
//! shooting solves that pin the dividend thresholds.

use crate::coeffs::AggregateModel;
use crate::error::{Error, Result};
use crate::numeric::{adaptive_quad, hermite, integrate_ode, OdeOutcome, Stop};

const QUAD_REL: f64 = 1e-12;
const QUAD_ABS: f64 = 1e-16;
// the interpolation error between knots scales like tol^(4/5); this
// keeps the stored path within ~1e-9 of the true trajectory
const ODE_TOL: f64 = 1e-12;

/// Scale curve x = G(y): cumulative surplus needed before the optimal
/// joint retention rises to level y. Built once per model; stores a knot
/// table of (y, G(y)) with exact quadrature inside cells on demand.
#[derive(Debug, Clone)]
pub struct GCurve {
    model: AggregateModel,
    ys: Vec<f64>,
    gs: Vec<f64>,
    /// G at the last knot plus the exact tail integral; equals G(M1)
    /// when the retention range is bounded, else the finite limit G(inf).
    g_sup: f64,
}

impl GCurve {
    pub fn build(model: &AggregateModel) -> Result<Self> {
        let m1 = model.m1();
        let z_last = if m1.is_finite() { m1 } else { unbounded_knot_cap(model) };

        // geometric head (the integrand is regular at 0 but the inverse
        // needs resolution there), then uniform body
        let mut ys = vec![0.0];
        let mut y = z_last * 1e-8;
        while y < z_last * 1e-2 {
            ys.push(y);
            y *= 2.0;
        }
        let body_lo = *ys.last().unwrap();
        let n_body = 512;
        for k in 1..=n_body {
            ys.push(body_lo + (z_last - body_lo) * k as f64 / n_body as f64);
        }

        // the denominator of the integrand must stay positive on the
        // whole retention range, otherwise G is not a scale curve
        for w in ys.windows(2) {
            for z in [w[1], 0.5 * (w[0] + w[1])] {
                let d = denom(model, z)?;
                if d <= 0.0 {
                    return Err(Error::ModelInconsistency(format!(
                        "scale-curve denominator is {d} at retention {z}; \
                         aggregate drift cannot fund the discount rate there"
                    )));
                }
            }
        }

        let integrand = |z: f64| raw_integrand(model, z);
        let mut gs = vec![0.0];
        for w in ys.windows(2) {
            let inc = adaptive_quad(&integrand, w[0], w[1], QUAD_REL, QUAD_ABS);
            gs.push(gs.last().unwrap() + inc);
        }

        let g_sup = if m1.is_finite() {
            *gs.last().unwrap()
        } else {
            let sub = |t: f64| sub_integrand(model, t);
            gs.last().unwrap() + adaptive_quad(&sub, 0.0, 1.0 / z_last, QUAD_REL, QUAD_ABS)
        };

        Ok(Self { model: model.clone(), ys, gs, g_sup })
    }

    pub fn model(&self) -> &AggregateModel {
        &self.model
    }

    /// dG/dy at retention z (the reciprocal of the retention path slope
    /// when no dividends are paid).
    pub fn integrand(&self, z: f64) -> f64 {
        raw_integrand(&self.model, z)
    }

    /// G(y); y may exceed the knot table (unbounded models).
    pub fn value(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let last = *self.ys.last().unwrap();
        if y >= last {
            if self.model.m1().is_finite() {
                return self.g_sup;
            }
            if y.is_infinite() {
                return self.g_sup;
            }
            let sub = |t: f64| sub_integrand(&self.model, t);
            return self.gs.last().unwrap()
                + adaptive_quad(&sub, 1.0 / y, 1.0 / last, QUAD_REL, QUAD_ABS);
        }
        let i = self.ys.partition_point(|&k| k <= y) - 1;
        let integrand = |z: f64| raw_integrand(&self.model, z);
        self.gs[i] + adaptive_quad(&integrand, self.ys[i], y, QUAD_REL, QUAD_ABS)
    }

    /// Least upper bound of G: G(M1) for a bounded retention range,
    /// else the finite limit of G at infinity.
    pub fn sup(&self) -> f64 {
        self.g_sup
    }

    /// G^{-1}(x) for x in [0, sup). Newton inside the bracketing knot
    /// cell, with a tail bisection in 1/y for unbounded models.
    pub fn inverse(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x >= self.g_sup {
            return Err(Error::Domain(format!(
                "inverse scale curve needs x in [0, {}), got {x}",
                self.g_sup
            )));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let glast = *self.gs.last().unwrap();
        if x >= glast {
            // unbounded tail: bisect on y via the substitution integral
            let last = *self.ys.last().unwrap();
            let (mut lo, mut hi) = (last, 2.0 * last);
            while self.value(hi) <= x {
                hi *= 2.0;
                if hi > 1e18 {
                    return Err(Error::Singular(format!(
                        "inverse scale curve diverged for x={x} (sup={})",
                        self.g_sup
                    )));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.value(mid) < x {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-12 * hi {
                    break;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        let i = self.gs.partition_point(|&g| g <= x) - 1;
        let (ylo, yhi) = (self.ys[i], self.ys[i + 1]);
        let (mut lo, mut hi) = (ylo, yhi);
        // tolerances are relative: callers exponentiate integrals of
        // kappa1/y up to the inverse, so absolute slack at small y would
        // leak into the value function
        let mut y = 0.5 * (ylo + yhi);
        for _ in 0..100 {
            let fx = self.value(y) - x;
            if fx.abs() <= 1e-15 * x {
                return Ok(y);
            }
            if fx > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let step = fx / self.integrand(y);
            let newton = y - step;
            y = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(y);
            }
        }
        Ok(y)
    }
}

/// Denominator of the scale-curve integrand.
fn denom(model: &AggregateModel, z: f64) -> Result<f64> {
    let n2 = model.nbar2(z)?;
    Ok(2.0 * model.kappa1 * z * model.dist1.limited_mean(z)?
        + 2.0 * model.kappa2 * z * model.dist2.limited_mean(model.pi2_of(z))?
        + 2.0 * model.delta / model.kappa1 * z * z
        - model.kappa1 * n2)
}

fn raw_integrand(model: &AggregateModel, z: f64) -> f64 {
    if z <= 0.0 {
        // limit as z -> 0+ when both survival functions start at 1
        let k1 = model.kappa1;
        let k2 = model.kappa2;
        let kk = k1 * k1 + k2 * k2;
        return kk / (k1 * (kk + 2.0 * model.delta));
    }
    model.nbar2(z).unwrap() / denom(model, z).unwrap()
}

/// Integrand after the substitution t = 1/z, regular at t = 0; used for
/// the tail of G on unbounded retention ranges.
fn sub_integrand(model: &AggregateModel, t: f64) -> f64 {
    if t <= 0.0 {
        return model.kappa1 * model.nbar2(f64::INFINITY).unwrap() / (2.0 * model.delta);
    }
    let z = 1.0 / t;
    let n2 = model.nbar2(z).unwrap();
    let d = 2.0 * t * model.nbar1(z).unwrap() + 2.0 * model.delta / model.kappa1
        - model.kappa1 * t * t * n2;
    n2 / d
}

fn unbounded_knot_cap(model: &AggregateModel) -> f64 {
    // far enough out that the survival mass beyond is negligible; the
    // tail is still integrated exactly via the 1/z substitution
    let scale = model.dist1.mean().max(model.kappa1 / model.kappa2 * model.dist2.mean());
    100.0 * scale.max(1.0)
}

/// Retention path H(x) on the band where only the line-2 dividend cap is
/// active, stored as Hermite knots with cumulative kappa1/H integrals for
/// the value-function exponentials.
#[derive(Debug, Clone)]
pub struct RetentionMap {
    pub xs: Vec<f64>,
    pub hs: Vec<f64>,
    pub dhs: Vec<f64>,
}

impl RetentionMap {
    pub fn from_knots(knots: &[crate::numeric::OdeKnot]) -> Self {
        Self {
            xs: knots.iter().map(|k| k.x).collect(),
            hs: knots.iter().map(|k| k.y).collect(),
            dhs: knots.iter().map(|k| k.dy).collect(),
        }
    }

    pub fn start_x(&self) -> f64 {
        self.xs[0]
    }

    pub fn end_x(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return self.hs[0];
        }
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return self.hs[n - 1];
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        hermite(
            self.xs[i],
            self.hs[i],
            self.dhs[i],
            self.xs[i + 1],
            self.hs[i + 1],
            self.dhs[i + 1],
            x,
        )
    }

    /// Cumulative integral of kappa1 / H from the first knot to each
    /// knot, by per-cell quadrature on the Hermite interpolant.
    pub fn cumulative_inv(&self, kappa1: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        for i in 0..self.xs.len() - 1 {
            let f = |x: f64| {
                kappa1
                    / hermite(
                        self.xs[i],
                        self.hs[i],
                        self.dhs[i],
                        self.xs[i + 1],
                        self.hs[i + 1],
                        self.dhs[i + 1],
                        x,
                    )
            };
            let inc = adaptive_quad(&f, self.xs[i], self.xs[i + 1], 1e-12, 1e-16);
            out.push(out.last().unwrap() + inc);
        }
        out
    }
}

/// Right-hand side of the retention-path ODE dH/dx on the cbar2 band.
/// With cbar2 = 0 this is exactly the inverse-function ODE of G.
fn h_rhs(g: &GCurve, h: f64) -> f64 {
    // trial RK4 stages may overshoot below zero; clamping keeps the
    // slope hugely negative there so the step gets rejected or the
    // path registers as collapsed
    let h = h.max(1e-12);
    let m = g.model();
    1.0 / g.integrand(h) - 2.0 * m.cbar2 * h / m.nbar2(h).unwrap()
}

pub enum PathOutcome {
    /// H reached the target level; knots end exactly there.
    Reached(RetentionMap),
    /// The path turned around and collapsed before reaching the target
    /// (the dividend drag overwhelms the drift at low retention).
    Collapsed,
}

/// Integrate the retention path from (x0, h0) until H reaches `h_top`.
pub fn h_path(g: &GCurve, x0: f64, h0: f64, h_top: f64) -> Result<PathOutcome> {
    let f = |_x: f64, h: f64| h_rhs(g, h);
    let floor = 1e-12 * h_top;
    match integrate_ode(&f, x0, h0, Stop::YReaches(h_top), floor, h_top * (1.0 + 1e-9), ODE_TOL) {
        Ok(OdeOutcome::Stopped(knots)) => Ok(PathOutcome::Reached(RetentionMap::from_knots(&knots))),
        Ok(OdeOutcome::LeftBand { .. }) => Ok(PathOutcome::Collapsed),
        Err(Error::Shooting(_)) => Ok(PathOutcome::Collapsed),
        Err(e) => Err(e),
    }
}

/// Find u1 such that the integral of kappa1/H across the band equals
/// `target` (the log slope-decay matching condition at the band's far
/// end). Returns (u1, the path).
pub fn shoot_band_integral(g: &GCurve, h_top: f64, target: f64) -> Result<(f64, RetentionMap)> {
    let sup = g.value(h_top);
    let kappa1 = g.model().kappa1;
    shoot(g, h_top, sup, move |_u1, path| {
        *path.cumulative_inv(kappa1).last().unwrap() - target
    })
}

/// Bisection over u1 in (0, x_sup) on a discrepancy that is decreasing
/// in u1; a collapsed path counts as "u1 too small".
fn shoot<F: Fn(f64, &RetentionMap) -> f64>(
    g: &GCurve,
    h_top: f64,
    x_sup: f64,
    discrepancy: F,
) -> Result<(f64, RetentionMap)> {
    let eval = |u1: f64| -> Result<(f64, Option<RetentionMap>)> {
        let h0 = g.inverse(u1)?;
        match h_path(g, u1, h0, h_top)? {
            PathOutcome::Reached(path) => {
                let d = discrepancy(u1, &path);
                Ok((d, Some(path)))
            }
            PathOutcome::Collapsed => Ok((f64::INFINITY, None)),
        }
    };
    let mut lo = 1e-9 * x_sup;
    let mut hi = x_sup * (1.0 - 1e-9);
    let (d_lo, _) = eval(lo)?;
    let (d_hi, hi_path) = eval(hi)?;
    if d_hi > 0.0 && d_hi <= 1e-8 {
        // Degenerate band: the root sits at the right edge (e.g. equal
        // weights, where the band shrinks to a point).
        if let Some(path) = hi_path {
            return Ok((hi, path));
        }
    }
    if d_lo < 0.0 || d_hi > 0.0 {
        return Err(Error::Shooting(format!(
            "band shoot not bracketed: d({lo}) = {d_lo}, d({hi}) = {d_hi}"
        )));
    }
    let mut best = None;
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        let (d, path) = eval(mid)?;
        if d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            best = path;
        }
        if hi - lo <= 1e-13 * (1.0 + hi) {
            break;
        }
    }
    let u1 = hi;
    match best {
        Some(path) if (path.start_x() - u1).abs() <= 1e-12 * (1.0 + u1) => Ok((u1, path)),
        _ => {
            let h0 = g.inverse(u1)?;
            match h_path(g, u1, h0, h_top)? {
                PathOutcome::Reached(path) => Ok((u1, path)),
                PathOutcome::Collapsed => Err(Error::Shooting(
                    "band shoot converged to a collapsing path".into(),
                )),
            }
        }
    }
}

/// Retention ceiling of the kill-line regime: the smallest root of
/// gamma4-(y) + kappa1 / y on (0, M1).
pub fn solve_m0(model: &AggregateModel) -> Result<f64> {
    let f = |y: f64| model.gamma4_minus_at(y).unwrap() + model.kappa1 / y;
    let m1 = model.m1();
    let hi = if m1.is_finite() {
        m1
    } else {
        // grow until the decay root dominates kappa1/y
        let mut hi = 1.0;
        let mut tries = 0;
        while f(hi) >= 0.0 {
            hi *= 2.0;
            tries += 1;
            if tries > 60 {
                return Err(Error::CaseInconsistency(
                    "no retention ceiling: gamma4- + kappa1/y stays positive".into(),
                ));
            }
        }
        hi
    };
    const N: usize = 1024;
    let mut prev_y = hi / N as f64;
    let mut prev_f = f(prev_y);
    for k in 2..=N {
        let y = hi * k as f64 / N as f64;
        let fy = f(y);
        if prev_f > 0.0 && fy <= 0.0 {
            return crate::numeric::bisect(&f, prev_y, y, 1e-14 * hi, 0.0);
        }
        prev_y = y;
        prev_f = fy;
    }
    Err(Error::CaseInconsistency(format!(
        "no retention ceiling found on (0, {hi}); dividend caps too large for the kill-line regime"
    )))
}
