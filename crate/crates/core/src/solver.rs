//! Policy solver: classifies the dividend regime, pins the free
//! boundaries, and assembles a piecewise value function
//! g(x) = a V1 + (1-a) V2 for the merged surplus.
//!
//! Five regimes arise. With capped dividend rates the two thresholds
//! u1 <= u2 sit either both above the full-retention point w0, straddle
//! it, or both below it (in which case retention never exceeds a ceiling
//! M0 < M1). With uncapped rates the optimal payout is a reflecting
//! barrier; the barrier is reached at finite retention when claims are
//! bounded and only in the limit otherwise.

#[cfg(test)]
use crate::claims::ClaimDistribution;
use crate::coeffs::{
    alpha_ladder, alpha_lb_low_thresholds, alpha_lb_split_thresholds, psi, solve_k3, zeta,
    AggregateModel,
};
use crate::error::{Error, Result};
use crate::freeboundary::{shoot_band_integral, GCurve, RetentionMap};
use crate::numeric::{adaptive_quad, hermite};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Capped rates, both thresholds at or above the full-retention point.
    ThresholdsAbove,
    /// Capped rates, lower threshold below and upper at or above it.
    ThresholdsSplit,
    /// Capped rates, both thresholds below it; retention tops out at M0.
    ThresholdsBelow,
    /// Uncapped rates, reflecting barrier, full retention reached.
    BarrierFinite,
    /// Uncapped rates, reflecting barrier, retention saturates only in
    /// the limit (unbounded claims).
    BarrierLimit,
}

impl Regime {
    pub fn token(self) -> &'static str {
        match self {
            Regime::ThresholdsAbove => "thresholds-above",
            Regime::ThresholdsSplit => "thresholds-split",
            Regime::ThresholdsBelow => "thresholds-below",
            Regime::BarrierFinite => "barrier-finite",
            Regime::BarrierLimit => "barrier-limit",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        Ok(match s {
            "thresholds-above" => Regime::ThresholdsAbove,
            "thresholds-split" => Regime::ThresholdsSplit,
            "thresholds-below" => Regime::ThresholdsBelow,
            "barrier-finite" => Regime::BarrierFinite,
            "barrier-limit" => Regime::BarrierLimit,
            _ => return Err(Error::Parse { line: 0, msg: format!("unknown regime '{s}'") }),
        })
    }
}

/// Problem statement prior to normalization.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub model: AggregateModel,
    /// true: dividends are a reflecting barrier (no rate caps); the
    /// model's cbar fields are ignored.
    pub unbounded_dividends: bool,
}

impl ProblemSpec {
    /// Relabel lines so that line 1 carries the smaller objective weight
    /// (a <= 1/2) and validate that line 2's claims can absorb the slaved
    /// retention pi2 = (kappa2/kappa1) pi1 over the whole range.
    pub fn normalized(&self) -> Result<(AggregateModel, bool)> {
        let m = &self.model;
        let (model, swapped) = if m.a > 0.5 {
            (
                AggregateModel::new(
                    m.kappa2,
                    m.kappa1,
                    m.dist2.clone(),
                    m.dist1.clone(),
                    m.delta,
                    1.0 - m.a,
                    m.cbar2,
                    m.cbar1,
                )?,
                true,
            )
        } else {
            (m.clone(), false)
        };
        let m1 = model.m1();
        let m2 = model.dist2.support_bound();
        if !(m2 >= model.pi2_of(m1)) {
            return Err(Error::UnsupportedConfiguration(format!(
                "line-2 support bound {m2} cannot absorb the slaved retention {} at full line-1 \
                 retention {m1}",
                model.pi2_of(m1)
            )));
        }
        Ok((model, swapped))
    }
}

/// How an exp-of-integral segment obtains its retention function m(x).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlendBasis {
    /// m = G^{-1}: evaluated exactly against the scale curve.
    InverseScale,
    /// m = H from the retention-path ODE: Hermite interpolation on the
    /// integrator's own knots.
    Map,
}

/// Value segment of the form g(x) = g0 + k * J(x), where
/// J(x) = int_lo^x e(z) dz and e(z) = exp(-I(z)) with
/// I(z) = int_anchor^z kappa1 / m(t) dt. Derivatives follow exactly:
/// g' = k e, g'' = -g' kappa1 / m.
#[derive(Debug, Clone)]
pub struct ExpIntegralPiece {
    pub basis: BlendBasis,
    pub lo: f64,
    pub hi: f64,
    pub xs: Vec<f64>,
    /// retention at the knots (y for InverseScale, H for Map)
    pub ms: Vec<f64>,
    /// dm/dx at the knots (Map basis only)
    pub dms: Vec<f64>,
    /// I at the knots, anchored so the last knot reads 0 (InverseScale)
    /// or the first does (Map)
    pub is_: Vec<f64>,
    /// J at the knots, measured from lo
    pub js: Vec<f64>,
    pub k: f64,
    pub g0: f64,
    pub kappa1: f64,
    /// exponent of the x -> 0 power law of e; nonzero only when the
    /// segment starts at 0 (head cell below xs[0] handled analytically)
    pub head_p: f64,
}

const Q_REL: f64 = 1e-12;

impl ExpIntegralPiece {
    /// Segment over [0, G(y_top)) with m = G^{-1}, e anchored at the
    /// right end (e(hi) = 1). An infinite y_top builds the segment up to
    /// the scale-curve limit G(inf).
    pub fn from_inverse_scale(gc: &GCurve, y_top: f64, k: f64, g0: f64) -> Result<Self> {
        let model = gc.model();
        let kappa1 = model.kappa1;
        let head_p = kappa1 * gc.integrand(0.0);
        if !(head_p < 1.0) {
            return Err(Error::Singular(format!(
                "head power-law exponent {head_p} is not < 1"
            )));
        }
        let (y_last, hi) = if y_top.is_finite() {
            (y_top, gc.value(y_top))
        } else {
            // deep enough that e is constant beyond and the endpoint
            // curvature -kappa1 e'(x)/m collapses to the boundary limit 0
            let scale = model.dist1.mean().max(1.0);
            (1e10 * scale, gc.sup())
        };
        let mut ys = Vec::new();
        let y_ref = if y_top.is_finite() { y_last } else { model.dist1.mean().min(y_last) };
        let mut y = 1e-12 * y_ref;
        while y < y_last * 0.75 {
            ys.push(y);
            y *= 2.0;
        }
        ys.push(y_last);
        let xs: Vec<f64> = ys.iter().map(|&y| gc.value(y)).collect();
        let inv_integrand = |y: f64| kappa1 * gc.integrand(y) / y;
        let mut cum = vec![0.0];
        for w in ys.windows(2) {
            let inc = adaptive_quad(&inv_integrand, w[0], w[1], Q_REL, 1e-16);
            cum.push(cum.last().unwrap() + inc);
        }
        let last = *cum.last().unwrap();
        let is_: Vec<f64> = cum.iter().map(|c| c - last).collect();
        let mut piece = Self {
            basis: BlendBasis::InverseScale,
            lo: 0.0,
            hi,
            xs,
            ms: ys,
            dms: Vec::new(),
            is_,
            js: Vec::new(),
            k,
            g0,
            kappa1,
            head_p,
        };
        piece.fill_js_scale(gc);
        Ok(piece)
    }

    /// Segment over the retention-path band with m = H, e anchored at
    /// the left end (e(lo) = 1).
    pub fn from_map(map: &RetentionMap, kappa1: f64, k: f64, g0: f64) -> Self {
        let mut piece = Self {
            basis: BlendBasis::Map,
            lo: map.start_x(),
            hi: map.end_x(),
            xs: map.xs.clone(),
            ms: map.hs.clone(),
            dms: map.dhs.clone(),
            is_: map.cumulative_inv(kappa1),
            js: Vec::new(),
            k,
            g0,
            kappa1,
            head_p: 0.0,
        };
        piece.fill_js_map();
        piece
    }

    /// Cumulative I relative to knot i, integrated in retention space
    /// (dz = G'(y) dy turns kappa1/G^{-1} into kappa1 G'(y)/y).
    fn i_of_y<C: ScaleAccess>(&self, gc: &C, i: usize, y: f64) -> f64 {
        let f = |v: f64| self.kappa1 * gc.integrand(v) / v;
        self.is_[i] + adaptive_quad(&f, self.ms[i], y, Q_REL, 1e-16)
    }

    /// J knots for the inverse-scale basis, built entirely in retention
    /// space so that no scale-curve inversions are needed.
    fn fill_js_scale(&mut self, gc: &GCurve) {
        // int_0^{x1} e = e(x1) x1 / (1 - p) up to O(x1) corrections
        let head = (-self.is_[0]).exp() * self.xs[0] / (1.0 - self.head_p);
        let mut js = vec![head];
        for i in 0..self.ms.len() - 1 {
            let f = |y: f64| (-self.i_of_y(gc, i, y)).exp() * gc.integrand(y);
            let inc = adaptive_quad(&f, self.ms[i], self.ms[i + 1], Q_REL, 1e-16 * (1.0 + head));
            js.push(js.last().unwrap() + inc);
        }
        self.js = js;
    }

    fn fill_js_map(&mut self) {
        let mut js = vec![0.0];
        for i in 0..self.xs.len() - 1 {
            let f = |x: f64| self.e_at(&GCurveStub, x);
            let inc = adaptive_quad(&f, self.xs[i], self.xs[i + 1], Q_REL, 1e-16);
            js.push(js.last().unwrap() + inc);
        }
        self.js = js;
    }

    fn cell(&self, x: f64) -> usize {
        self.xs.partition_point(|&k| k <= x).saturating_sub(1)
    }

    fn i_at<C: ScaleAccess>(&self, gc: &C, x: f64) -> f64 {
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return self.is_[n - 1];
        }
        let i = self.cell(x);
        match self.basis {
            BlendBasis::InverseScale => {
                let yx = gc.inverse(x);
                let f = |y: f64| self.kappa1 * gc.integrand(y) / y;
                self.is_[i] + adaptive_quad(&f, self.ms[i], yx, Q_REL, 1e-16)
            }
            BlendBasis::Map => hermite(
                self.xs[i],
                self.is_[i],
                self.kappa1 / self.ms[i],
                self.xs[i + 1],
                self.is_[i + 1],
                self.kappa1 / self.ms[i + 1],
                x,
            ),
        }
    }

    fn e_at<C: ScaleAccess>(&self, gc: &C, x: f64) -> f64 {
        if self.head_p > 0.0 && x < self.xs[0] {
            return (-self.is_[0]).exp() * (x / self.xs[0]).powf(-self.head_p);
        }
        (-self.i_at(gc, x)).exp()
    }

    fn j_at<C: ScaleAccess>(&self, gc: &C, x: f64) -> f64 {
        if self.head_p > 0.0 && x <= self.xs[0] {
            return self.js[0] * (x / self.xs[0]).powf(1.0 - self.head_p);
        }
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return self.js[n - 1] + (-self.is_[n - 1]).exp() * (x - self.xs[n - 1]);
        }
        let i = self.cell(x);
        match self.basis {
            BlendBasis::InverseScale => {
                let yx = gc.inverse(x);
                let f = |y: f64| (-self.i_of_y(gc, i, y)).exp() * gc.integrand(y);
                self.js[i] + adaptive_quad(&f, self.ms[i], yx, Q_REL, 1e-16)
            }
            BlendBasis::Map => {
                let f = |z: f64| self.e_at(gc, z);
                self.js[i] + adaptive_quad(&f, self.xs[i], x, Q_REL, 1e-16)
            }
        }
    }

    /// Retention m(x) on the segment.
    pub fn m_at<C: ScaleAccess>(&self, gc: &C, x: f64) -> f64 {
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return self.ms[n - 1];
        }
        match self.basis {
            BlendBasis::InverseScale => {
                if x <= self.xs[0] {
                    // kappa1 / m ~ p / x near the origin
                    return self.kappa1 * x / self.head_p;
                }
                gc.inverse(x)
            }
            BlendBasis::Map => {
                if x <= self.xs[0] {
                    return self.ms[0];
                }
                let i = self.cell(x);
                hermite(
                    self.xs[i],
                    self.ms[i],
                    self.dms[i],
                    self.xs[i + 1],
                    self.ms[i + 1],
                    self.dms[i + 1],
                    x,
                )
            }
        }
    }

    pub fn j_total(&self) -> f64 {
        *self.js.last().unwrap()
    }

    pub fn eval<C: ScaleAccess>(&self, gc: &C, x: f64) -> (f64, f64, f64) {
        let e = self.e_at(gc, x);
        let j = self.j_at(gc, x);
        let m = self.m_at(gc, x);
        let dg = self.k * e;
        (self.g0 + self.k * j, dg, -dg * self.kappa1 / m)
    }
}

/// Access the scale curve during segment evaluation. Map-basis segments
/// are self-contained, so a stub suffices for them.
pub trait ScaleAccess {
    fn inverse(&self, x: f64) -> f64;
    fn integrand(&self, y: f64) -> f64;
}

impl ScaleAccess for GCurve {
    fn inverse(&self, x: f64) -> f64 {
        GCurve::inverse(self, x.min(self.sup() * (1.0 - 1e-15))).unwrap()
    }
    fn integrand(&self, y: f64) -> f64 {
        GCurve::integrand(self, y)
    }
}

struct GCurveStub;
impl ScaleAccess for GCurveStub {
    fn inverse(&self, _x: f64) -> f64 {
        unreachable!("map-basis segment does not consult the scale curve")
    }
    fn integrand(&self, _y: f64) -> f64 {
        unreachable!("map-basis segment does not consult the scale curve")
    }
}

/// One piece of the value function with its constant or varying
/// retention level.
#[derive(Debug, Clone)]
pub enum Segment {
    Blend(ExpIntegralPiece),
    /// g = kp e^{gp (x-x0)} + km e^{gm (x-x0)} + c on [lo, hi)
    Pair {
        lo: f64,
        hi: f64,
        x0: f64,
        kp: f64,
        gp: f64,
        km: f64,
        gm: f64,
        c: f64,
        m: f64,
    },
    /// g = g0 + slope (x - x0) on [lo, inf)
    Line { lo: f64, x0: f64, g0: f64, slope: f64, m: f64 },
}

impl Segment {
    pub fn lo(&self) -> f64 {
        match self {
            Segment::Blend(p) => p.lo,
            Segment::Pair { lo, .. } => *lo,
            Segment::Line { lo, .. } => *lo,
        }
    }

    pub fn eval(&self, gc: &GCurve, x: f64) -> (f64, f64, f64) {
        match self {
            Segment::Blend(p) => p.eval(gc, x),
            Segment::Pair { x0, kp, gp, km, gm, c, .. } => {
                let ep = kp * (gp * (x - x0)).exp();
                let em = km * (gm * (x - x0)).exp();
                (ep + em + c, gp * ep + gm * em, gp * gp * ep + gm * gm * em)
            }
            Segment::Line { x0, g0, slope, .. } => (g0 + slope * (x - x0), *slope, 0.0),
        }
    }

    pub fn retention(&self, gc: &GCurve, x: f64) -> f64 {
        match self {
            Segment::Blend(p) => p.m_at(gc, x),
            Segment::Pair { m, .. } => *m,
            Segment::Line { m, .. } => *m,
        }
    }
}

/// Solved policy: regime, free boundaries, value segments, and the scale
/// curve they were built on (model already normalized).
#[derive(Debug, Clone)]
pub struct SolvedPolicy {
    pub model: AggregateModel,
    pub regime: Regime,
    pub w0: Option<f64>,
    pub u1: f64,
    pub u2: Option<f64>,
    /// retention ceiling in the thresholds-below regime
    pub m0: Option<f64>,
    /// injection cutoffs (delta0 <= delta1 <= delta2), capped regimes only
    pub deltas: Option<(f64, f64, f64)>,
    pub segments: Vec<Segment>,
    pub gcurve: GCurve,
    pub lines_swapped: bool,
}

impl SolvedPolicy {
    fn segment_at(&self, x: f64) -> &Segment {
        let i = self.segments.partition_point(|s| s.lo() <= x);
        &self.segments[i.saturating_sub(1).min(self.segments.len() - 1)]
    }

    /// Weighted value function and its first two derivatives at merged
    /// surplus x >= 0.
    pub fn value(&self, x: f64) -> (f64, f64, f64) {
        self.segment_at(x.max(0.0)).eval(&self.gcurve, x.max(0.0))
    }

    /// Optimal line-1 retention at merged surplus x (infinite = no
    /// reinsurance).
    pub fn retention1(&self, x: f64) -> f64 {
        self.segment_at(x.max(0.0)).retention(&self.gcurve, x.max(0.0))
    }

    /// Optimal line-2 retention: slaved to line 1, capped by its support.
    pub fn retention2(&self, x: f64) -> f64 {
        self.model
            .pi2_of(self.retention1(x))
            .min(self.model.dist2.support_bound())
    }

    /// Dividend rates (line 1, line 2) at merged surplus x; zero for
    /// barrier regimes (payout is singular there).
    pub fn dividend_rates(&self, x: f64) -> (f64, f64) {
        match self.regime {
            Regime::BarrierFinite | Regime::BarrierLimit => (0.0, 0.0),
            _ => {
                let u2 = self.u2.unwrap();
                if x >= u2 {
                    (self.model.cbar1, self.model.cbar2)
                } else if x >= self.u1 {
                    (0.0, self.model.cbar2)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    /// Value of the tail asymptote (capped regimes): total discounted
    /// caps, a cbar1 / delta from line 1 plus (1-a) cbar2 / delta.
    pub fn asymptote(&self) -> Option<f64> {
        match self.regime {
            Regime::BarrierFinite | Regime::BarrierLimit => None,
            _ => {
                let m = &self.model;
                Some((m.a * m.cbar1 + (1.0 - m.a) * m.cbar2) / m.delta)
            }
        }
    }
}

/// Decide the capped-rate regime for a normalized model.
pub fn classify(model: &AggregateModel) -> Result<Regime> {
    if !model.m1().is_finite() {
        return Ok(Regime::ThresholdsBelow);
    }
    let bound = model.cap_sum_bound()?;
    if model.cbar1 + model.cbar2 < bound {
        return Ok(Regime::ThresholdsBelow);
    }
    let g = model.gammas()?;
    let l = alpha_ladder(model, &g)?;
    let lb = alpha_lb_low_thresholds(model, &l);
    if psi(&g, model.a, lb) <= 0.0 {
        Ok(Regime::ThresholdsAbove)
    } else {
        Ok(Regime::ThresholdsSplit)
    }
}

pub fn solve(spec: &ProblemSpec) -> Result<SolvedPolicy> {
    let (model, swapped) = spec.normalized()?;
    let gc = GCurve::build(&model)?;
    let mut policy = if spec.unbounded_dividends {
        if model.m1().is_finite() {
            solve_barrier_finite(&model, gc)?
        } else {
            solve_barrier_limit(&model, gc)?
        }
    } else {
        match classify(&model)? {
            Regime::ThresholdsAbove => solve_thresholds_above(&model, gc)?,
            Regime::ThresholdsSplit => solve_thresholds_split(&model, gc)?,
            Regime::ThresholdsBelow => solve_thresholds_below(&model, gc)?,
            _ => unreachable!(),
        }
    };
    policy.lines_swapped = swapped;
    Ok(policy)
}

fn tail_segment(model: &AggregateModel, u2: f64, g4m: f64) -> Segment {
    let c = (model.a * model.cbar1 + (1.0 - model.a) * model.cbar2) / model.delta;
    Segment::Pair {
        lo: u2,
        hi: f64::INFINITY,
        x0: u2,
        kp: 0.0,
        gp: 0.0,
        km: model.a / g4m,
        gm: g4m,
        c,
        m: f64::NAN, // overwritten by callers
    }
}

fn solve_thresholds_above(model: &AggregateModel, gc: GCurve) -> Result<SolvedPolicy> {
    let a = model.a;
    let m1 = model.m1();
    let g = model.gammas()?;
    let l = alpha_ladder(model, &g)?;
    let lb = alpha_lb_low_thresholds(model, &l);
    let (k3m, k3p) = solve_k3(&g, a, lb, l.alpha_ub)?;
    let alpha3 =
        1.0 / g.g3p + model.cbar2 / model.delta + (1.0 - g.g3m / g.g3p) * k3m / (1.0 - a);
    let km_ratio = model.kappa1 / m1;
    let a2p = (-g.g2m - km_ratio) / (g.g2p * (g.g2p - g.g2m));
    let a2m = (g.g2p + km_ratio) / (g.g2m * (g.g2p - g.g2m));
    let w0 = gc.sup();
    let arg = a2m * (g.g2m * alpha3 - 1.0) / (a2p * (1.0 - g.g2p * alpha3));
    if !(arg > 0.0) {
        return Err(Error::CaseInconsistency(format!(
            "lower-threshold log argument is {arg}"
        )));
    }
    let u1 = w0 + arg.ln() / (g.g2p - g.g2m);
    let u2 = u1 + zeta(&g, a, k3m);
    if u1 < w0 - 1e-9 || u2 < u1 - 1e-9 {
        return Err(Error::CaseInconsistency(format!(
            "threshold order violated: w0={w0}, u1={u1}, u2={u2}"
        )));
    }
    let k1 = (1.0 - a)
        / (a2p * g.g2p * (g.g2p * (u1 - w0)).exp() + a2m * g.g2m * (g.g2m * (u1 - w0)).exp());
    let c3 = (1.0 - a) * model.cbar2 / model.delta;
    let mut tail = tail_segment(model, u2, g.g4m);
    if let Segment::Pair { m, .. } = &mut tail {
        *m = m1;
    }
    let segments = vec![
        Segment::Blend(ExpIntegralPiece::from_inverse_scale(&gc, m1, k1, 0.0)?),
        Segment::Pair {
            lo: w0,
            hi: u1,
            x0: w0,
            kp: k1 * a2p,
            gp: g.g2p,
            km: k1 * a2m,
            gm: g.g2m,
            c: 0.0,
            m: m1,
        },
        Segment::Pair {
            lo: u1,
            hi: u2,
            x0: u1,
            kp: k3p,
            gp: g.g3p,
            km: k3m,
            gm: g.g3m,
            c: c3,
            m: m1,
        },
        tail,
    ];
    Ok(SolvedPolicy {
        model: model.clone(),
        regime: Regime::ThresholdsAbove,
        w0: Some(w0),
        u1,
        u2: Some(u2),
        m0: None,
        deltas: Some((w0, u1, u2)),
        segments,
        gcurve: gc,
        lines_swapped: false,
    })
}

fn solve_thresholds_split(model: &AggregateModel, gc: GCurve) -> Result<SolvedPolicy> {
    let a = model.a;
    let m1 = model.m1();
    let g = model.gammas()?;
    let l = alpha_ladder(model, &g)?;
    let lb = alpha_lb_split_thresholds(model, &l);
    let (k3m, k3p) = solve_k3(&g, a, l.left_end, lb)?;
    let km_ratio = model.kappa1 / m1;
    let gap_arg = k3m * g.g3m * (g.g3m + km_ratio) / (k3p * g.g3p * (-km_ratio - g.g3p));
    if !(gap_arg > 0.0) {
        return Err(Error::CaseInconsistency(format!(
            "band-width log argument is {gap_arg}"
        )));
    }
    let gap = gap_arg.ln() / (g.g3p - g.g3m);
    if !(gap > 0.0) {
        return Err(Error::CaseInconsistency(format!(
            "anchor offset {gap} not positive"
        )));
    }
    // Marginal value carried by the exponential pair where the retention path
    // tops out; the band must decay the slope from 1 - a down to exactly this.
    let slope_top = k3p * g.g3p * (g.g3p * gap).exp() + k3m * g.g3m * (g.g3m * gap).exp();
    if !(slope_top > 0.0 && slope_top < 1.0 - a) {
        return Err(Error::CaseInconsistency(format!(
            "slope at full retention is {slope_top}"
        )));
    }
    let (u1, path) = shoot_band_integral(&gc, m1, ((1.0 - a) / slope_top).ln())?;
    let w0 = path.end_x();
    let u2_arg =
        (g.g4m - g.g3m) * (-km_ratio - g.g3p) / ((g.g3p - g.g4m) * (g.g3m + km_ratio));
    if !(u2_arg > 0.0) {
        return Err(Error::CaseInconsistency(format!(
            "upper-threshold log argument is {u2_arg}"
        )));
    }
    let u2 = w0 + u2_arg.ln() / (g.g3p - g.g3m);
    if u2 < w0 - 1e-9 {
        return Err(Error::CaseInconsistency(format!(
            "threshold order violated: u1={u1}, w0={w0}, u2={u2}"
        )));
    }
    let y_top = gc.inverse(u1)?;
    let head = ExpIntegralPiece::from_inverse_scale(&gc, y_top, 1.0 - a, 0.0)?;
    let g_u1 = (1.0 - a) * head.j_total();
    let mid = ExpIntegralPiece::from_map(&path, model.kappa1, 1.0 - a, g_u1);
    let c3 = (1.0 - a) * model.cbar2 / model.delta;
    let mut tail = tail_segment(model, u2, g.g4m);
    if let Segment::Pair { m, .. } = &mut tail {
        *m = m1;
    }
    let segments = vec![
        Segment::Blend(head),
        Segment::Blend(mid),
        Segment::Pair {
            lo: w0,
            hi: u2,
            x0: w0 - gap,
            kp: k3p,
            gp: g.g3p,
            km: k3m,
            gm: g.g3m,
            c: c3,
            m: m1,
        },
        tail,
    ];
    Ok(SolvedPolicy {
        model: model.clone(),
        regime: Regime::ThresholdsSplit,
        w0: Some(w0),
        u1,
        u2: Some(u2),
        m0: None,
        deltas: Some((u1, w0, u2)),
        segments,
        gcurve: gc,
        lines_swapped: false,
    })
}

fn solve_thresholds_below(model: &AggregateModel, gc: GCurve) -> Result<SolvedPolicy> {
    let a = model.a;
    let m0 = crate::freeboundary::solve_m0(model)?;
    let target = ((1.0 - a) / a).ln();
    let (u1, path) = shoot_band_integral(&gc, m0, target)?;
    let u2 = path.end_x();
    let y_top = gc.inverse(u1)?;
    let head = ExpIntegralPiece::from_inverse_scale(&gc, y_top, 1.0 - a, 0.0)?;
    let g_u1 = (1.0 - a) * head.j_total();
    let mid = ExpIntegralPiece::from_map(&path, model.kappa1, 1.0 - a, g_u1);
    let g4m0 = model.gamma4_minus_at(m0)?;
    let mut tail = tail_segment(model, u2, g4m0);
    if let Segment::Pair { m, .. } = &mut tail {
        *m = m0;
    }
    let segments = vec![Segment::Blend(head), Segment::Blend(mid), tail];
    Ok(SolvedPolicy {
        model: model.clone(),
        regime: Regime::ThresholdsBelow,
        w0: None,
        u1,
        u2: Some(u2),
        m0: Some(m0),
        deltas: Some((u1, u1, u2)),
        segments,
        gcurve: gc,
        lines_swapped: false,
    })
}

fn solve_barrier_finite(model: &AggregateModel, gc: GCurve) -> Result<SolvedPolicy> {
    let a = model.a;
    let m1 = model.m1();
    let (g2p, g2m) = model.gamma_pair(m1, 0.0)?;
    let w0 = gc.sup();
    let arg = g2m * (model.kappa1 + g2p * m1) / (g2p * (model.kappa1 + g2m * m1));
    if !(arg > 0.0) {
        return Err(Error::CaseInconsistency(format!(
            "barrier log argument is {arg}"
        )));
    }
    let u1 = w0 + arg.ln() / (g2p - g2m);
    if u1 < w0 - 1e-9 {
        return Err(Error::CaseInconsistency(format!(
            "barrier {u1} below full-retention point {w0}"
        )));
    }
    let dd = g2p * g2m * (g2p - g2m);
    let mid = Segment::Pair {
        lo: w0,
        hi: u1,
        x0: u1,
        kp: -(1.0 - a) * g2m * g2m / dd,
        gp: g2p,
        km: (1.0 - a) * g2p * g2p / dd,
        gm: g2m,
        c: 0.0,
        m: m1,
    };
    let k1 = (1.0 - a) / (g2p - g2m)
        * (g2p * (g2m * (w0 - u1)).exp() - g2m * (g2p * (w0 - u1)).exp());
    let n1 = model.n1();
    let segments = vec![
        Segment::Blend(ExpIntegralPiece::from_inverse_scale(&gc, m1, k1, 0.0)?),
        mid,
        Segment::Line {
            lo: u1,
            x0: u1,
            g0: (1.0 - a) * n1 / model.delta,
            slope: 1.0 - a,
            m: m1,
        },
    ];
    Ok(SolvedPolicy {
        model: model.clone(),
        regime: Regime::BarrierFinite,
        w0: Some(w0),
        u1,
        u2: None,
        m0: None,
        deltas: None,
        segments,
        gcurve: gc,
        lines_swapped: false,
    })
}

fn solve_barrier_limit(model: &AggregateModel, gc: GCurve) -> Result<SolvedPolicy> {
    let a = model.a;
    let u1 = gc.sup();
    let head = ExpIntegralPiece::from_inverse_scale(&gc, f64::INFINITY, 1.0 - a, 0.0)?;
    let n1 = model.n1();
    let segments = vec![
        Segment::Blend(head),
        Segment::Line {
            lo: u1,
            x0: u1,
            g0: (1.0 - a) * n1 / model.delta,
            slope: 1.0 - a,
            m: f64::INFINITY,
        },
    ];
    Ok(SolvedPolicy {
        model: model.clone(),
        regime: Regime::BarrierLimit,
        w0: None,
        u1,
        u2: None,
        m0: None,
        deltas: None,
        segments,
        gcurve: gc,
        lines_swapped: false,
    })
}

/// Standard two-uniform-line example model used across tests.
#[cfg(test)]
pub(crate) fn example_uniform(cbar1: f64, cbar2: f64) -> AggregateModel {
    AggregateModel::new(
        4.0,
        2.0,
        ClaimDistribution::uniform(1.0).unwrap(),
        ClaimDistribution::uniform(1.5).unwrap(),
        0.5,
        0.3,
        cbar1,
        cbar2,
    )
    .unwrap()
}
