//! Independent correctness checks on a solved policy: generator residuals
//! with grid-searched controls, smooth fit at the free boundaries, shape
//! properties (concavity, retention monotonicity), finite-difference
//! agreement of the analytic derivatives, and the pure excess-of-loss
//! dominance construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::claims::ClaimDistribution;
use crate::error::Result;
use crate::simulate::{path_values, OptimalStrategy, SimConfig, SimStrategy};
use crate::strategy::{InjectionOutcome, Trigger};
use crate::solver::{Regime, SolvedPolicy};

/// Outcome of one named check: the worst residual seen, where it
/// occurred, and the tolerance it was held against.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub grid_size: usize,
    pub max_residual: f64,
    /// x (or sample parameter) at which the worst residual occurred
    pub location: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Merge reports; entries are ordered by check name so concurrent
    /// producers yield a deterministic result.
    pub fn merge(mut self, mut other: VerificationReport) -> VerificationReport {
        self.checks.append(&mut other.checks);
        self.checks.sort_by(|a, b| a.name.cmp(&b.name));
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,grid_size,max_residual,location,tolerance,passed\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{}\n",
                c.name, c.grid_size, c.max_residual, c.location, c.tolerance, c.passed
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<28} {}  max residual {:.3e} (tol {:.3e}) at x = {:.6}  [{} points]\n",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.max_residual,
                c.tolerance,
                c.location,
                c.grid_size
            ));
        }
        out.push_str(if self.passed() { "all checks passed\n" } else { "CHECKS FAILED\n" });
        out
    }
}

/// Running maximum of a residual and where it happened.
struct Worst {
    r: f64,
    at: f64,
}

impl Worst {
    fn new() -> Self {
        Worst { r: f64::NEG_INFINITY, at: f64::NAN }
    }

    fn push(&mut self, r: f64, at: f64) {
        if r > self.r {
            self.r = r;
            self.at = at;
        }
    }

    fn into_check(self, name: &str, n: usize, tol: f64) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            grid_size: n,
            max_residual: self.r,
            location: self.at,
            tolerance: tol,
            passed: self.r <= tol,
        }
    }
}

/// Default verification grid: geometric spacing near 0 (where the value
/// varies fastest) blending into uniform spacing out to the far field.
pub fn make_grid(policy: &SolvedPolicy, points: usize) -> Vec<f64> {
    let x_max = grid_x_max(policy);
    let lo = 1e-4 * x_max;
    let split = 0.2 * x_max;
    let n_geo = points / 5;
    let n_uni = points - n_geo;
    let mut xs = Vec::with_capacity(points);
    let ratio = (split / lo).powf(1.0 / n_geo as f64);
    let mut x = lo;
    for _ in 0..n_geo {
        xs.push(x);
        x *= ratio;
    }
    for i in 0..n_uni {
        xs.push(split + (x_max - split) * (i as f64 + 0.5) / n_uni as f64);
    }
    xs
}

fn grid_x_max(policy: &SolvedPolicy) -> f64 {
    match policy.regime {
        Regime::BarrierFinite | Regime::BarrierLimit => 1.5 * policy.u1,
        _ => {
            let g4m = policy.model.gammas().map(|g| g.g4m).unwrap_or(-1.0);
            policy.u2.unwrap_or(policy.u1) + 12.0 / g4m.abs()
        }
    }
}

/// Per-line control grid bound: the claim support when finite, otherwise
/// far enough past both the closed-form retention and the mean claim.
fn control_hi(dist: &ClaimDistribution, closed_form: f64) -> f64 {
    let reach = if closed_form.is_finite() { 2.0 * closed_form } else { 0.0 };
    let s = dist.support_bound();
    if s.is_finite() {
        s
    } else {
        (4.0 * dist.mean()).max(reach).max(1.0)
    }
}

const CONTROL_GRID: usize = 129;

/// Sup of one line's retention term kappa mu(pi) g' + sigma^2(pi)/2 g''
/// over a grid of retentions refined near `near`; returns (sup, argmax).
/// Returns (sup, argmax, value at `near`).
fn line_control_sup(
    dist: &ClaimDistribution,
    kappa: f64,
    g1: f64,
    g2: f64,
    hi: f64,
    near: f64,
) -> Result<(f64, f64, f64)> {
    let f = |p: f64| -> Result<f64> {
        Ok(kappa * dist.limited_mean(p)? * g1 + 0.5 * dist.limited_second_moment(p)? * g2)
    };
    let cell = hi / (CONTROL_GRID - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    let push = |v: f64, p: f64, best: &mut (f64, f64)| {
        if v > best.0 {
            *best = (v, p);
        }
    };
    for i in 0..CONTROL_GRID {
        let p = cell * i as f64;
        push(f(p)?, p, &mut best);
    }
    // refine one cell around the closed-form maximizer
    let lo = (near - cell).max(0.0);
    let hi_r = (near + cell).min(hi);
    for i in 0..=32 {
        let p = lo + (hi_r - lo) * i as f64 / 32.0;
        push(f(p)?, p, &mut best);
    }
    Ok((best.0, best.1, f(near)?))
}

/// Generator residuals with grid-searched controls. Verifies that the
/// grid sup over retentions and rate choices never exceeds its tolerance,
/// that the closed-form controls attain the sup, that the grid argmax sits
/// within one control cell of the closed-form retention, and (capped
/// regimes) that the maximizing rates flip exactly at the thresholds. In
/// barrier regimes the slope bounds g' >= 1-a >= a are checked instead of
/// rate terms, with equality beyond the barrier.
pub fn hjb_residual(policy: &SolvedPolicy, grid: &[f64]) -> Result<VerificationReport> {
    let m = &policy.model;
    let barrier = matches!(policy.regime, Regime::BarrierFinite | Regime::BarrierLimit);
    let n = grid.len();

    // normalized residuals: residual / (delta g); tolerance 1e-6
    let mut sup_w = Worst::new();
    let mut opt_w = Worst::new();
    let mut pi_w = Worst::new(); // argmax distance in cells, tol 1
    let mut rate_w = Worst::new(); // rate-argmax mismatches, tol 0
    let mut slope_w = Worst::new(); // barrier: (1-a) - g', normalized
    let mut active_w = Worst::new(); // distance of best term from 0

    // control rectangle: both lines saturate together, so line 2's
    // ceiling is the tied image of line 1's
    let m1cap = m.m1();
    for (i, &x) in grid.iter().enumerate() {
        let (g, g1, g2) = policy.value(x);
        let denom = m.delta * g;
        let pi1 = policy.retention1(x);
        let pi2 = policy.retention2(x);
        let (hi1, hi2) = if m1cap.is_finite() {
            (m1cap, m.pi2_of(m1cap))
        } else {
            (control_hi(&m.dist1, pi1), control_hi(&m.dist2, pi2))
        };
        let (t1, t2) = (pi1.min(hi1), pi2.min(hi2));
        let (s1, a1, v1) = line_control_sup(&m.dist1, m.kappa1, g1, g2, hi1, t1)?;
        let (s2, a2, v2) = line_control_sup(&m.dist2, m.kappa2, g1, g2, hi2, t2)?;
        let drift_sup = s1 + s2 - m.delta * g;
        // a tie in value counts as a match: past the effective claim
        // support the generator is flat in the retention and the argmax
        //position is arbitrary
        let cell_dist = |s: f64, a: f64, v: f64, t: f64, hi: f64| {
            if s - v <= 1e-13 * (1.0 + s.abs()) {
                0.0
            } else {
                (a - t).abs() / (hi / (CONTROL_GRID - 1) as f64)
            }
        };
        let cells = cell_dist(s1, a1, v1, t1, hi1).max(cell_dist(s2, a2, v2, t2, hi2));
        pi_w.push(cells, x);

        // residual at the closed-form controls
        let at_opt = |p1: f64, p2: f64| -> Result<f64> {
            Ok(m.kappa1 * m.dist1.limited_mean(p1)? * g1
                + m.kappa2 * m.dist2.limited_mean(p2)? * g1
                + 0.5
                    * (m.dist1.limited_second_moment(p1)? + m.dist2.limited_second_moment(p2)?)
                    * g2
                - m.delta * g)
        };

        if barrier {
            // rates are singular: the variational terms are a - g' and
            // (1-a) - g'; beyond the barrier the latter binds with
            // equality and the drift term goes slack
            slope_w.push(((1.0 - m.a) - g1) / denom, x);
            slope_w.push((m.a - g1) / denom, x);
            sup_w.push(drift_sup / denom, x);
            if x <= policy.u1 {
                opt_w.push(at_opt(pi1, pi2)?.abs() / denom, x);
            } else {
                active_w.push((g1 - (1.0 - m.a)).abs() / denom, x);
            }
        } else {
            let gain1 = m.cbar1 * (m.a - g1);
            let gain2 = m.cbar2 * ((1.0 - m.a) - g1);
            let sup = drift_sup + gain1.max(0.0) + gain2.max(0.0);
            let (c1, c2) = policy.dividend_rates(x);
            let at_opt_full = at_opt(pi1, pi2)? + (m.a - g1) * c1 + ((1.0 - m.a) - g1) * c2;
            sup_w.push(sup / denom, x);
            opt_w.push(at_opt_full.abs() / denom, x);
            // rate argmax flips at the thresholds (skip the cell they
            // straddle: g' crosses the weight inside it)
            let dx = local_spacing(grid, i);
            let u2 = policy.u2.unwrap_or(policy.u1);
            if (x - policy.u1).abs() > dx && (x - u2).abs() > dx {
                let want1 = if gain1 > 0.0 { m.cbar1 } else { 0.0 };
                let want2 = if gain2 > 0.0 { m.cbar2 } else { 0.0 };
                rate_w.push(if (want1, want2) == (c1, c2) { 0.0 } else { 1.0 }, x);
            }
        }
    }

    let mut rep = VerificationReport::default();
    rep.checks.push(sup_w.into_check("hjb-sup-residual", n, 1e-6));
    rep.checks.push(opt_w.into_check("hjb-residual-at-optimum", n, 1e-6));
    rep.checks.push(pi_w.into_check("hjb-retention-argmax", n, 1.0));
    if barrier {
        rep.checks.push(slope_w.into_check("hjb-slope-bounds", n, 1e-6));
        rep.checks.push(active_w.into_check("hjb-barrier-slope-binds", n, 1e-6));
    } else {
        rep.checks.push(rate_w.into_check("hjb-rate-argmax", n, 0.0));
    }
    rep.checks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(rep)
}

fn local_spacing(grid: &[f64], i: usize) -> f64 {
    let lo = if i > 0 { grid[i] - grid[i - 1] } else { grid[1] - grid[0] };
    let hi = if i + 1 < grid.len() { grid[i + 1] - grid[i] } else { lo };
    lo.max(hi)
}

/// One-sided evaluation of g, g', g'' at every interior piece boundary;
/// relative jumps must be below 1e-7.
pub fn smooth_fit(policy: &SolvedPolicy) -> VerificationReport {
    let names = ["smooth-fit-value", "smooth-fit-slope", "smooth-fit-curvature"];
    let mut worst = [Worst::new(), Worst::new(), Worst::new()];
    let mut n = 0;
    for i in 1..policy.segments.len() {
        let b = policy.segments[i].lo();
        let l = policy.segments[i - 1].eval(&policy.gcurve, b);
        let r = policy.segments[i].eval(&policy.gcurve, b);
        // jumps are judged against the scale each derivative has near the
        // boundary, not just at it (a curvature that decays to zero at the
        // boundary would otherwise make the relative jump meaningless)
        let ml = policy.value(0.5 * (policy.segments[i - 1].lo() + b));
        let mr = policy.value(b + 0.5 * (b - policy.segments[i - 1].lo()));
        for (k, (lv, rv, s1, s2)) in [
            (l.0, r.0, ml.0, mr.0),
            (l.1, r.1, ml.1, mr.1),
            (l.2, r.2, ml.2, mr.2),
        ]
        .into_iter()
        .enumerate()
        {
            let scale = lv.abs().max(rv.abs()).max(s1.abs()).max(s2.abs()).max(1e-8);
            worst[k].push((lv - rv).abs() / scale, b);
        }
        n += 1;
    }
    let mut rep = VerificationReport::default();
    for (k, w) in worst.into_iter().enumerate() {
        rep.checks.push(w.into_check(names[k], n, 1e-7));
    }
    rep
}

/// Central finite differences of the value against the analytic first and
/// second derivatives, away from piece boundaries (guard band 10 steps).
/// The second derivative uses a Richardson-extrapolated stencil so the
/// rounding floor stays below the tolerance.
pub fn derivative_fd_check(policy: &SolvedPolicy, grid: &[f64]) -> VerificationReport {
    let g_of = |x: f64| policy.value(x).0;
    let bounds: Vec<f64> = policy.segments.iter().skip(1).map(|s| s.lo()).collect();
    // the blend pieces interpolate between knots with curvature kinks at
    // the knots, so the second-derivative stencil must not straddle one
    let mut knots: Vec<f64> = policy
        .segments
        .iter()
        .flat_map(|s| match s {
            crate::solver::Segment::Blend(p) => p.xs.clone(),
            _ => Vec::new(),
        })
        .collect();
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let near_knot = |x: f64, h: f64| {
        let i = knots.partition_point(|&k| k < x);
        (i < knots.len() && knots[i] - x < h) || (i > 0 && x - knots[i - 1] < h)
    };
    // scale floors keep the relative test meaningful where a derivative
    // decays to zero (far tail)
    let mut max1: f64 = 0.0;
    let mut max2: f64 = 0.0;
    for &x in grid {
        let (_, g1, g2) = policy.value(x);
        max1 = max1.max(g1.abs());
        max2 = max2.max(g2.abs());
    }
    let mut w1 = Worst::new();
    let mut w2 = Worst::new();
    let mut used = 0;
    for &x in grid {
        // steps scale with x: the value is a steep power of x near the
        // origin, and exponential with O(1) rates in the far field
        let h2 = 3e-3 * x.min(10.0);
        if bounds.iter().any(|&b| (x - b).abs() < 10.0 * h2) {
            continue;
        }
        used += 1;
        let (_, g1, g2) = policy.value(x);
        let h1 = 1e-5 * x;
        let fd1 = (g_of(x + h1) - g_of(x - h1)) / (2.0 * h1);
        w1.push((fd1 - g1).abs() / g1.abs().max(0.05 * max1), x);
        if near_knot(x, 1.2 * h2) {
            continue;
        }
        let stencil = |h: f64| (g_of(x + h) - 2.0 * g_of(x) + g_of(x - h)) / (h * h);
        let fd2 = (4.0 * stencil(0.5 * h2) - stencil(h2)) / 3.0;
        w2.push((fd2 - g2).abs() / g2.abs().max(0.05 * max2), x);
    }
    let mut rep = VerificationReport::default();
    rep.checks.push(w1.into_check("fd-first-derivative", used, 1e-6));
    rep.checks.push(w2.into_check("fd-second-derivative", used, 1e-6));
    rep
}

/// Shape of the solution: g' strictly decreasing (strict concavity) and
/// the retention non-decreasing, constant at its ceiling once reached.
pub fn shape_check(policy: &SolvedPolicy, grid: &[f64]) -> VerificationReport {
    let mut conc = Worst::new();
    let mut mono = Worst::new();
    let mut prev: Option<(f64, f64)> = None;
    for &x in grid {
        let (_, g1, _) = policy.value(x);
        let pi = policy.retention1(x);
        if let Some((pg1, ppi)) = prev {
            conc.push(g1 - pg1, x);
            mono.push(ppi - pi, x);
        }
        prev = Some((g1, pi));
    }
    let mut rep = VerificationReport::default();
    rep.checks.push(conc.into_check("slope-decreasing", grid.len(), 1e-12));
    rep.checks.push(mono.into_check("retention-monotone", grid.len(), 1e-9));
    rep
}

/// Fixed mixed (proportional theta + excess-of-loss pi) reinsurance on
/// both lines, with dividends and injections from the solved policy.
struct FixedReinsurance<'a> {
    inner: OptimalStrategy<'a>,
    dynamics: (f64, f64, f64, f64),
}

impl SimStrategy for FixedReinsurance<'_> {
    fn line_dynamics(&self, _x: f64) -> (f64, f64, f64, f64) {
        self.dynamics
    }
    fn dividend_rates(&self, x: f64) -> (f64, f64) {
        self.inner.dividend_rates(x)
    }
    fn event(&self, x1: f64, x2: f64, trigger: Trigger) -> Result<InjectionOutcome> {
        self.inner.event(x1, x2, trigger)
    }
    fn barrier(&self) -> Option<f64> {
        self.inner.barrier()
    }
    fn weight_a(&self) -> f64 {
        self.inner.weight_a()
    }
    fn discount_rate(&self) -> f64 {
        self.inner.discount_rate()
    }
    fn value_bound(&self) -> f64 {
        self.inner.value_bound()
    }
}

/// The pure excess-of-loss dominance construction: over random mixed
/// treaties (theta, pi), the volatility-matched pure retention must match
/// the second moment to 1e-10, never lose drift, and position checked by paired
/// simulation with common random numbers on a few samples position never lose
/// value beyond Monte Carlo noise.
pub fn dominance_check(
    policy: &SolvedPolicy,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let m = &policy.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma_w = Worst::new();
    let mut drift_w = Worst::new();
    let draw = |rng: &mut ChaCha8Rng| {
        let theta: f64 = rng.gen_range(0.05..0.999);
        let pi1: f64 = rng.gen_range(0.01..control_hi(&m.dist1, m.m1()).min(6.0));
        (theta, pi1)
    };
    let mut sim_params = Vec::new();
    for i in 0..samples {
        let (theta, pi1) = draw(&mut rng);
        for (dist, pi) in [(&m.dist1, pi1), (&m.dist2, m.pi2_of(pi1))] {
            let ceded_at = (pi / theta).min(dist.support_bound());
            let p0 = dist.dominating_pure_xl(theta, pi)?;
            let target = theta * theta * dist.limited_second_moment(ceded_at)?;
            sigma_w.push((dist.limited_second_moment(p0)? - target).abs(), theta);
            drift_w.push(theta * dist.limited_mean(ceded_at)? - dist.limited_mean(p0)?, theta);
        }
        if i < 3 {
            sim_params.push((theta, pi1));
        }
    }
    // near-identity sample: replacement should change (almost) nothing
    sim_params.push((0.999, 0.8 * m.m1().min(3.0)));

    let mut sim_w = Worst::new();
    let cfg = SimConfig { dt: 2e-3, horizon: 20.0, paths: 4000, seed, antithetic: false };
    let x0 = 0.5 * policy.u1.max(0.4);
    for &(theta, pi1) in &sim_params {
        let pi2 = m.pi2_of(pi1);
        let mixed = FixedReinsurance {
            inner: OptimalStrategy::new(policy),
            dynamics: mixed_dynamics(m, theta, pi1, pi2)?,
        };
        let p10 = m.dist1.dominating_pure_xl(theta, pi1)?;
        let p20 = m.dist2.dominating_pure_xl(theta, pi2)?;
        let pure = FixedReinsurance {
            inner: OptimalStrategy::new(policy),
            dynamics: pure_dynamics(m, p10, p20)?,
        };
        let vm = path_values(&mixed, x0, x0, &cfg)?;
        let vp = path_values(&pure, x0, x0, &cfg)?;
        let diffs: Vec<f64> = vp.iter().zip(&vm).map(|(p, q)| p.0 - q.0).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
            / (diffs.len() - 1) as f64;
        let se = (var / diffs.len() as f64).sqrt();
        // pure minus mixed must not be significantly negative
        sim_w.push(-(mean + 2.5 * se), theta);
    }

    let mut rep = VerificationReport::default();
    rep.checks.push(sigma_w.into_check("dominance-volatility-match", 2 * samples, 1e-10));
    rep.checks.push(drift_w.into_check("dominance-drift-gain", 2 * samples, 1e-12));
    rep.checks.push(sim_w.into_check("dominance-paired-value", sim_params.len(), 0.0));
    rep.checks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(rep)
}

fn mixed_dynamics(
    m: &crate::coeffs::AggregateModel,
    theta: f64,
    pi1: f64,
    pi2: f64,
) -> Result<(f64, f64, f64, f64)> {
    let c1 = (pi1 / theta).min(m.dist1.support_bound());
    let c2 = (pi2 / theta).min(m.dist2.support_bound());
    Ok((
        m.kappa1 * theta * m.dist1.limited_mean(c1)?,
        theta * m.dist1.sigma(c1)?,
        m.kappa2 * theta * m.dist2.limited_mean(c2)?,
        theta * m.dist2.sigma(c2)?,
    ))
}

fn pure_dynamics(
    m: &crate::coeffs::AggregateModel,
    p1: f64,
    p2: f64,
) -> Result<(f64, f64, f64, f64)> {
    Ok((
        m.kappa1 * m.dist1.limited_mean(p1)?,
        m.dist1.sigma(p1)?,
        m.kappa2 * m.dist2.limited_mean(p2)?,
        m.dist2.sigma(p2)?,
    ))
}

/// Run the analytic checks (generator residuals, smooth fit, derivative
/// agreement, shape) on the default grid and merge the reports.
pub fn verify_policy(policy: &SolvedPolicy, points: usize) -> Result<VerificationReport> {
    let grid = make_grid(policy, points);
    let rep = hjb_residual(policy, &grid)?
        .merge(smooth_fit(policy))
        .merge(derivative_fd_check(policy, &grid))
        .merge(shape_check(policy, &grid));
    Ok(rep)
}
