//! Monte Carlo evaluation of a dividend / reinsurance / injection
//! strategy by Euler-Maruyama simulation of the two controlled reserve
//! diffusions, with boundary-hitting rollback and injection events.

use crate::error::{Error, Result};
use crate::numeric::kahan_sum;
use crate::solver::{Regime, SolvedPolicy};
use crate::strategy::{injection, InjectionOutcome, Trigger};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Simulation protocol: step size, horizon, path count, seed, and the
/// antithetic-pairing switch. The horizon should cover at least 8 / delta
/// so the discount truncation is negligible next to the standard error.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::Domain(format!(
                "step {} and horizon {} must be positive",
                self.dt, self.horizon
            )));
        }
        if self.paths == 0 {
            return Err(Error::Domain("path count must be positive".into()));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of the weighted discounted dividend total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// fraction of paths that were ruined before the horizon
    pub paths_ruined: f64,
    /// upper bound on the value ignored by cutting at the horizon
    pub truncation_bound: f64,
}

/// A simulatable strategy: per-step line dynamics at the aggregate
/// reserve, dividend rates, and the event rule fired on zero hits (and,
/// for barrier strategies, on states above the barrier).
pub trait SimStrategy: Sync {
    /// (drift1, vol1, drift2, vol2) before dividend outflow.
    fn line_dynamics(&self, x: f64) -> (f64, f64, f64, f64);
    fn dividend_rates(&self, x: f64) -> (f64, f64);
    fn event(&self, x1: f64, x2: f64, trigger: Trigger) -> Result<InjectionOutcome>;
    /// Some(barrier) when aggregate excess is paid as lump dividends.
    fn barrier(&self) -> Option<f64>;
    /// weight of line-1 dividends in the objective
    fn weight_a(&self) -> f64;
    fn discount_rate(&self) -> f64;
    /// bound on the value of any state reachable under this strategy
    fn value_bound(&self) -> f64;
}

const DYN_TABLE: usize = 8192;

/// The solved optimal policy with its line dynamics tabulated on a
/// uniform aggregate-reserve grid for O(1) per-step lookup.
pub struct OptimalStrategy<'a> {
    policy: &'a SolvedPolicy,
    x_hi: f64,
    inv_dx: f64,
    table: Vec<[f64; 4]>,
}

impl<'a> OptimalStrategy<'a> {
    pub fn new(policy: &'a SolvedPolicy) -> Self {
        let p = policy;
        let mut x_hi = p.u1.max(p.u2.unwrap_or(0.0)).max(p.w0.unwrap_or(0.0)) * 1.25;
        if p.barrier().is_some() {
            // reserves never exceed the barrier
            x_hi = p.u1;
        }
        let m = &p.model;
        let mut table = Vec::with_capacity(DYN_TABLE + 1);
        for i in 0..=DYN_TABLE {
            let x = x_hi * i as f64 / DYN_TABLE as f64;
            let pi1 = p.retention1(x);
            let pi2 = p.retention2(x);
            table.push([
                m.kappa1 * m.dist1.limited_mean(pi1).unwrap(),
                m.dist1.sigma(pi1).unwrap(),
                m.kappa2 * m.dist2.limited_mean(pi2).unwrap(),
                m.dist2.sigma(pi2).unwrap(),
            ]);
        }
        OptimalStrategy { policy, x_hi, inv_dx: DYN_TABLE as f64 / x_hi, table }
    }
}

impl SolvedPolicy {
    fn barrier(&self) -> Option<f64> {
        match self.regime {
            Regime::BarrierFinite | Regime::BarrierLimit => Some(self.u1),
            _ => None,
        }
    }
}

impl SimStrategy for OptimalStrategy<'_> {
    fn line_dynamics(&self, x: f64) -> (f64, f64, f64, f64) {
        let u = (x.max(0.0) * self.inv_dx).min(DYN_TABLE as f64);
        let i = (u as usize).min(DYN_TABLE - 1);
        let f = u - i as f64;
        let (a, b) = (&self.table[i], &self.table[i + 1]);
        (
            a[0] + f * (b[0] - a[0]),
            a[1] + f * (b[1] - a[1]),
            a[2] + f * (b[2] - a[2]),
            a[3] + f * (b[3] - a[3]),
        )
    }

    fn dividend_rates(&self, x: f64) -> (f64, f64) {
        self.policy.dividend_rates(x)
    }

    fn event(&self, x1: f64, x2: f64, trigger: Trigger) -> Result<InjectionOutcome> {
        let o = injection(self.policy, x1, x2, trigger)?;
        Ok(rescue_below_cutoffs(o, x1, x2))
    }

    fn barrier(&self) -> Option<f64> {
        self.policy.barrier()
    }

    fn weight_a(&self) -> f64 {
        self.policy.model.a
    }

    fn discount_rate(&self) -> f64 {
        self.policy.model.delta
    }

    fn value_bound(&self) -> f64 {
        match self.policy.asymptote() {
            Some(v) => v,
            None => self.policy.value(self.x_hi).0,
        }
    }
}

/// Run one path; returns (discounted weighted dividends, ruined?).
fn run_path<S: SimStrategy + ?Sized>(
    s: &S,
    mut x1: f64,
    mut x2: f64,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    negate: bool,
) -> Result<(f64, bool)> {
    if x1 <= 0.0 && x2 <= 0.0 {
        return Ok((0.0, true));
    }
    let a = s.weight_a();
    let delta = s.discount_rate();
    let mut t = 0.0;
    let mut disc = 1.0;
    let mut j = 0.0;
    let sign = if negate { -1.0 } else { 1.0 };
    // settle initial lumps / transfers (barrier strategies)
    if s.barrier().is_some() {
        for _ in 0..2 {
            let o = s.event(x1, x2, Trigger::None)?;
            match o.state {
                Some((n1, n2)) if (n1, n2) != (x1, x2) || o.lump != 0.0 => {
                    j += disc * (1.0 - a) * o.lump;
                    x1 = n1;
                    x2 = n2;
                }
                _ => break,
            }
        }
    }
    let dt = cfg.dt;
    let sdt = dt.sqrt();
    let decay = (-delta * dt).exp();
    while t < cfg.horizon - 0.5 * dt {
        let x = x1 + x2;
        let (m1, s1, m2, s2) = s.line_dynamics(x);
        let (c1, c2) = s.dividend_rates(x);
        let rate = a * c1 + (1.0 - a) * c2;
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let d1 = (m1 - c1) * dt + s1 * sdt * sign * z1;
        let d2 = (m2 - c2) * dt + s2 * sdt * sign * z2;
        let y1 = x1 + d1;
        let y2 = x2 + d2;
        if !(y1.is_finite() && y2.is_finite()) {
            return Err(Error::ModelInconsistency(format!(
                "path state diverged at t={t}: ({y1}, {y2}) from ({x1}, {x2})"
            )));
        }
        let ysum = y1 + y2;
        if ysum <= 0.0 {
            // aggregate exhausted within the step: accrue up to the hit
            // (linear in-step) and stop
            let te = x / (x - ysum) * dt;
            let de = (-delta * te).exp();
            j += disc * 0.5 * (1.0 + de) * rate * te;
            return Ok((j, true));
        }
        let (e1, e2) = s.dividend_rates(ysum);
        let rate_end = a * e1 + (1.0 - a) * e2;
        j += disc * 0.5 * dt * (rate + decay * rate_end);
        disc *= decay;
        t += dt;
        if y1 < 0.0 || y2 < 0.0 {
            // a line crossed zero inside the step; settle the transfer at
            // the step end with the deficit shifted to the partner, so the
            // aggregate keeps its exact Euler increment (transfers conserve
            // it and every coefficient depends on it alone)
            let (trigger, e1, e2) = if y1 < 0.0 {
                (Trigger::Line1AtZero, 0.0, ysum)
            } else {
                (Trigger::Line2AtZero, ysum, 0.0)
            };
            let o = s.event(e1, e2, trigger)?;
            match o.state {
                None => return Ok((j, true)),
                Some((n1, n2)) => {
                    j += disc * (1.0 - a) * o.lump;
                    x1 = n1;
                    x2 = n2;
                }
            }
        } else {
            x1 = y1;
            x2 = y2;
        }
        if let Some(b) = s.barrier() {
            if x1 > b || x1 + x2 > b {
                for _ in 0..2 {
                    let o = s.event(x1, x2, Trigger::None)?;
                    match o.state {
                        Some((n1, n2)) if (n1, n2) != (x1, x2) || o.lump != 0.0 => {
                            j += disc * (1.0 - a) * o.lump;
                            x1 = n1;
                            x2 = n2;
                        }
                        _ => break,
                    }
                }
            }
        }
        debug_assert!(x1 >= 0.0 && x2 >= 0.0);
    }
    Ok((j, false))
}

/// Per-path discounted dividend totals; paths are independent streams of
/// one counter-based generator so results do not depend on scheduling.
pub fn path_values<S: SimStrategy + ?Sized>(
    s: &S,
    x1: f64,
    x2: f64,
    cfg: &SimConfig,
) -> Result<Vec<(f64, bool)>> {
    cfg.validate()?;
    if !(x1 >= 0.0 && x2 >= 0.0) {
        return Err(Error::Domain(format!("reserves must be >= 0, got ({x1}, {x2})")));
    }
    (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let (stream, negate) = if cfg.antithetic { ((p / 2) as u64, p % 2 == 1) } else { (p as u64, false) };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            run_path(s, x1, x2, cfg, &mut rng, negate)
        })
        .collect()
}

fn summarize(values: &[(f64, bool)], truncation_bound: f64) -> SimEstimate {
    let n = values.len();
    let js: Vec<f64> = values.iter().map(|v| v.0).collect();
    let mean = kahan_sum(&js) / n as f64;
    let sq: Vec<f64> = js.iter().map(|j| (j - mean) * (j - mean)).collect();
    let var = if n > 1 { kahan_sum(&sq) / (n - 1) as f64 } else { 0.0 };
    let ruined = values.iter().filter(|v| v.1).count();
    SimEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        paths_ruined: ruined as f64 / n as f64,
        truncation_bound,
    }
}

/// Estimate the strategy's value from initial reserves (x1, x2).
pub fn simulate_value<S: SimStrategy + ?Sized>(
    s: &S,
    x1: f64,
    x2: f64,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    let values = path_values(s, x1, x2, cfg)?;
    let bound = s.value_bound() * (-s.discount_rate() * cfg.horizon).exp();
    Ok(summarize(&values, bound))
}

/// One row of a common-random-numbers policy comparison.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    /// mean of (optimal - perturbed) over paired paths
    pub mean_diff: f64,
    pub paired_stderr: f64,
}

/// Compare the optimal policy against perturbed strategies on common
/// random numbers; rows are returned in input order.
pub fn compare_policies(
    policy: &SolvedPolicy,
    perturbations: &[(String, Box<dyn SimStrategy + '_>)],
    x1: f64,
    x2: f64,
    cfg: &SimConfig,
) -> Result<Vec<ComparisonRow>> {
    let opt = OptimalStrategy::new(policy);
    let base = path_values(&opt, x1, x2, cfg)?;
    let mut rows = Vec::new();
    for (name, s) in perturbations {
        let alt = path_values(s.as_ref(), x1, x2, cfg)?;
        let diffs: Vec<f64> = base.iter().zip(&alt).map(|(b, a)| b.0 - a.0).collect();
        let n = diffs.len();
        let mean = kahan_sum(&diffs) / n as f64;
        let sq: Vec<f64> = diffs.iter().map(|d| (d - mean) * (d - mean)).collect();
        let var = if n > 1 { kahan_sum(&sq) / (n - 1) as f64 } else { 0.0 };
        rows.push(ComparisonRow {
            name: name.clone(),
            mean_diff: mean,
            paired_stderr: (var / n as f64).sqrt(),
        });
    }
    Ok(rows)
}

/// A perturbed variant of the solved policy, for dominance testing.
pub struct PerturbedStrategy<'a> {
    base: OptimalStrategy<'a>,
    kind: Perturbation,
    /// fixed dynamics override (no-reinsurance / constant / proportional)
    fixed: Option<(f64, f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub enum Perturbation {
    /// full retention on both lines
    NoReinsurance,
    /// constant line-1 retention (line 2 slaved as usual)
    ConstantRetention(f64),
    /// dividend thresholds / barrier shifted by the offset
    ShiftThresholds(f64),
    /// proportional reinsurance keeping the given fraction of every claim
    Proportional(f64),
    /// zero-hit rescues disabled: every hit is ruin
    NoInjection,
}

impl<'a> PerturbedStrategy<'a> {
    pub fn new(policy: &'a SolvedPolicy, kind: Perturbation) -> Self {
        let m = &policy.model;
        let fixed = match kind {
            Perturbation::NoReinsurance => Some((m.m1(), m.dist2.support_bound())),
            Perturbation::ConstantRetention(pi1) => {
                Some((pi1, m.pi2_of(pi1).min(m.dist2.support_bound())))
            }
            _ => None,
        }
        .map(|(pi1, pi2)| {
            (
                m.kappa1 * m.dist1.limited_mean(pi1).unwrap(),
                m.dist1.sigma(pi1).unwrap(),
                m.kappa2 * m.dist2.limited_mean(pi2).unwrap(),
                m.dist2.sigma(pi2).unwrap(),
            )
        })
        .or(match kind {
            Perturbation::Proportional(theta) => Some((
                m.kappa1 * theta * m.dist1.mean(),
                theta * m.dist1.second_moment().sqrt(),
                m.kappa2 * theta * m.dist2.mean(),
                theta * m.dist2.second_moment().sqrt(),
            )),
            _ => None,
        });
        PerturbedStrategy { base: OptimalStrategy::new(policy), kind, fixed }
    }

    fn shift(&self) -> f64 {
        match self.kind {
            Perturbation::ShiftThresholds(d) => d,
            _ => 0.0,
        }
    }
}

impl SimStrategy for PerturbedStrategy<'_> {
    fn line_dynamics(&self, x: f64) -> (f64, f64, f64, f64) {
        match self.fixed {
            Some(d) => d,
            None => self.base.line_dynamics(x),
        }
    }

    fn dividend_rates(&self, x: f64) -> (f64, f64) {
        self.base.dividend_rates(x - self.shift())
    }

    fn event(&self, x1: f64, x2: f64, trigger: Trigger) -> Result<InjectionOutcome> {
        match self.kind {
            Perturbation::NoInjection => {
                Ok(InjectionOutcome { transfer: 0.0, state: None, lump: 0.0 })
            }
            Perturbation::ShiftThresholds(d) if self.base.barrier().is_some() => {
                let b = (self.base.policy_barrier() + d).max(1e-6);
                Ok(rescue_below_cutoffs(barrier_event(b, x1, x2, trigger), x1, x2))
            }
            _ => self.base.event(x1, x2, trigger),
        }
    }

    fn barrier(&self) -> Option<f64> {
        self.base.barrier().map(|b| (b + self.shift()).max(1e-6))
    }

    fn weight_a(&self) -> f64 {
        self.base.weight_a()
    }

    fn discount_rate(&self) -> f64 {
        self.base.discount_rate()
    }

    fn value_bound(&self) -> f64 {
        self.base.value_bound() + self.shift().abs()
    }
}

impl OptimalStrategy<'_> {
    fn policy_barrier(&self) -> f64 {
        self.policy.u1
    }
}

/// Below the lowest cutoff the region table prescribes no transfer, but
/// any split of a positive aggregate carries the same value (transfers
/// are costless and the objective depends on the reserves only through
/// their sum), so the value-attaining policy still rescues a zero-hit
/// line as long as the company as a whole is solvent. The simulator uses
/// an equal split; ruin is declared only when the aggregate is gone.
fn rescue_below_cutoffs(o: InjectionOutcome, x1: f64, x2: f64) -> InjectionOutcome {
    let s = x1 + x2;
    if o.state.is_none() && s > 0.0 {
        let h = 0.5 * s;
        return InjectionOutcome { transfer: h - x1, state: Some((h, h)), lump: 0.0 };
    }
    o
}

/// Barrier-mode event rule at an explicit barrier level.
fn barrier_event(b: f64, x1: f64, x2: f64, trigger: Trigger) -> InjectionOutcome {
    if x1 > b {
        let t = x1 - b;
        InjectionOutcome { transfer: -t, state: Some((b, x2 + t)), lump: 0.0 }
    } else if x2 > 0.0 && x1 + x2 > b {
        InjectionOutcome { transfer: 0.0, state: Some((x1, b - x1)), lump: x1 + x2 - b }
    } else {
        match trigger {
            Trigger::None => InjectionOutcome { transfer: 0.0, state: Some((x1, x2)), lump: 0.0 },
            _ => InjectionOutcome { transfer: 0.0, state: None, lump: 0.0 },
        }
    }
}

/// The standard perturbation families used by the dominance suite.
pub fn standard_perturbations<'a>(
    policy: &'a SolvedPolicy,
) -> Vec<(String, Box<dyn SimStrategy + 'a>)> {
    let m1 = policy.model.m1();
    let half = if m1.is_finite() { 0.5 * m1 } else { policy.model.dist1.mean() };
    vec![
        (
            "no-reinsurance".into(),
            Box::new(PerturbedStrategy::new(policy, Perturbation::NoReinsurance)) as _,
        ),
        (
            "constant-retention".into(),
            Box::new(PerturbedStrategy::new(policy, Perturbation::ConstantRetention(half))) as _,
        ),
        (
            "thresholds+0.2".into(),
            Box::new(PerturbedStrategy::new(policy, Perturbation::ShiftThresholds(0.2))) as _,
        ),
        (
            "thresholds-0.2".into(),
            Box::new(PerturbedStrategy::new(policy, Perturbation::ShiftThresholds(-0.2))) as _,
        ),
        (
            "proportional-0.7".into(),
            Box::new(PerturbedStrategy::new(policy, Perturbation::Proportional(0.7))) as _,
        ),
        (
            "no-injection".into(),
            Box::new(PerturbedStrategy::new(policy, Perturbation::NoInjection)) as _,
        ),
    ]
}
