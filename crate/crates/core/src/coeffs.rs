//! Aggregate diffusion coefficients for the merged two-line surplus and
//! the characteristic-root machinery built on them.
//!
//! With line-2 retention slaved to line 1 via pi2 = (kappa2/kappa1) y,
//! the merged process at joint retention level y has drift
//! nbar1(y) = kappa1 mu1(y) + kappa2 mu2((kappa2/kappa1) y) and squared
//! volatility nbar2(y) = sigma1^2(y) + sigma2^2((kappa2/kappa1) y).
//! Exponential value segments use the roots of
//! (nbar2/2) gamma^2 + d gamma - delta = 0, where the effective drift d
//! is nbar1 minus whatever dividend rates are active on the band:
//! family 2 pays nothing, family 3 pays cbar2, family 4 pays both caps.

use crate::claims::ClaimDistribution;
use crate::error::{Error, Result};
use crate::numeric::bisect;

/// Discounted two-line dividend/injection model with excess-of-loss
/// reinsurance. `a` weights line 1 in the objective (a <= 1/2 after
/// normalization), `delta` is the discount rate, `cbar1`/`cbar2` the
/// dividend-rate caps, and `kappa_i` the premium-scale factors.
#[derive(Debug, Clone)]
pub struct AggregateModel {
    pub kappa1: f64,
    pub kappa2: f64,
    pub dist1: ClaimDistribution,
    pub dist2: ClaimDistribution,
    pub delta: f64,
    pub a: f64,
    pub cbar1: f64,
    pub cbar2: f64,
}

/// Characteristic roots at the full-retention level y = M1. `g4m` is the
/// negative root of the both-caps family; its positive partner never
/// enters a value function.
#[derive(Debug, Clone, Copy)]
pub struct GammaSet {
    pub g2p: f64,
    pub g2m: f64,
    pub g3p: f64,
    pub g3m: f64,
    pub g4m: f64,
}

impl AggregateModel {
    pub fn new(
        kappa1: f64,
        kappa2: f64,
        dist1: ClaimDistribution,
        dist2: ClaimDistribution,
        delta: f64,
        a: f64,
        cbar1: f64,
        cbar2: f64,
    ) -> Result<Self> {
        if !(kappa1 > 0.0 && kappa2 > 0.0) {
            return Err(Error::Domain(format!(
                "premium scales must be > 0, got kappa1={kappa1}, kappa2={kappa2}"
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::Domain(format!("discount rate must be > 0, got {delta}")));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Domain(format!("weight a must lie in (0, 1), got {a}")));
        }
        if cbar1 < 0.0 || cbar2 < 0.0 {
            return Err(Error::Domain(format!(
                "dividend caps must be >= 0, got cbar1={cbar1}, cbar2={cbar2}"
            )));
        }
        Ok(Self { kappa1, kappa2, dist1, dist2, delta, a, cbar1, cbar2 })
    }

    /// Maximum joint retention level: line 1's support bound.
    pub fn m1(&self) -> f64 {
        self.dist1.support_bound()
    }

    /// Line-2 retention implied by joint level y.
    pub fn pi2_of(&self, y: f64) -> f64 {
        self.kappa2 / self.kappa1 * y
    }

    /// Aggregate drift kernel nbar1(y); y may be infinite.
    pub fn nbar1(&self, y: f64) -> Result<f64> {
        Ok(self.kappa1 * self.dist1.limited_mean(y)?
            + self.kappa2 * self.dist2.limited_mean(self.pi2_of(y))?)
    }

    /// Aggregate squared-volatility kernel nbar2(y); y may be infinite.
    pub fn nbar2(&self, y: f64) -> Result<f64> {
        Ok(self.dist1.limited_second_moment(y)?
            + self.dist2.limited_second_moment(self.pi2_of(y))?)
    }

    /// N1 = nbar1 at full retention.
    pub fn n1(&self) -> f64 {
        self.nbar1(self.m1()).unwrap()
    }

    /// N2 = nbar2 at full retention.
    pub fn n2(&self) -> f64 {
        self.nbar2(self.m1()).unwrap()
    }

    /// Roots of (nbar2(y)/2) g^2 + d g - delta = 0 for effective drift
    /// d = nbar1(y) - rate_out, returned as (positive, negative).
    pub fn gamma_pair(&self, y: f64, rate_out: f64) -> Result<(f64, f64)> {
        if !(y > 0.0) {
            return Err(Error::Singular(format!(
                "characteristic roots undefined at retention {y}: volatility vanishes"
            )));
        }
        let n2 = self.nbar2(y)?;
        if !(n2 > 0.0) {
            return Err(Error::Singular(format!("nbar2({y}) = {n2} is not positive")));
        }
        let d = self.nbar1(y)? - rate_out;
        let s = (d * d + 2.0 * self.delta * n2).sqrt();
        // rationalized forms keep both roots free of cancellation
        if d >= 0.0 {
            Ok((2.0 * self.delta / (d + s), -(d + s) / n2))
        } else {
            Ok(((s - d) / n2, -2.0 * self.delta / (s - d)))
        }
    }

    /// Negative root of the both-caps family at retention y (the tail
    /// decay rate of the value function).
    pub fn gamma4_minus_at(&self, y: f64) -> Result<f64> {
        Ok(self.gamma_pair(y, self.cbar1 + self.cbar2)?.1)
    }

    /// All root families evaluated at full retention.
    pub fn gammas(&self) -> Result<GammaSet> {
        let m1 = self.m1();
        let (g2p, g2m) = self.gamma_pair(m1, 0.0)?;
        let (g3p, g3m) = self.gamma_pair(m1, self.cbar2)?;
        let (_, g4m) = self.gamma_pair(m1, self.cbar1 + self.cbar2)?;
        Ok(GammaSet { g2p, g2m, g3p, g3m, g4m })
    }

    /// Threshold on cbar1 + cbar2 separating the bounded regimes from
    /// the kill-line-2 regime: N1 - kappa1 N2 / (2 M1) + delta M1 / kappa1.
    /// Only meaningful for a bounded line-1 distribution.
    pub fn cap_sum_bound(&self) -> Result<f64> {
        let m1 = self.m1();
        if !m1.is_finite() {
            return Err(Error::UnsupportedConfiguration(
                "cap-sum bound requires bounded line-1 claims".into(),
            ));
        }
        Ok(self.n1() - self.kappa1 * self.n2() / (2.0 * m1) + self.delta * m1 / self.kappa1)
    }
}

/// Time-change coordinate used while the upper dividend threshold is
/// free: zeta(z) maps a candidate lower-coefficient value to the width
/// of the cbar2-only band.
pub fn zeta(g: &GammaSet, a: f64, z: f64) -> f64 {
    let num = g.g3m * (g.g4m - g.g3m) * z;
    let den = (1.0 - a - g.g3m * z) * (g.g3p - g.g4m);
    (num / den).ln() / (g.g3p - g.g3m)
}

/// Matching functional whose root in z pins the lower exponential
/// coefficient K3-. Strictly increasing on ((1-a)/g3m, alpha_ub], with
/// psi -> -a at the left end and psi(alpha_ub) = 1 - 2a.
pub fn psi(g: &GammaSet, a: f64, z: f64) -> f64 {
    let slack = 1.0 - a - g.g3m * z;
    if slack <= 0.0 {
        // at/below the left endpoint the limit applies
        return -a;
    }
    let zt = zeta(g, a, z);
    if !zt.is_finite() {
        return -a;
    }
    slack * (g.g3p * zt).exp() + g.g3m * z * (g.g3m * zt).exp() - a
}

/// Breakpoints of psi's admissible interval. All are negative numbers;
/// the root bracket for K3- always sits inside (left_end, alpha_ub).
#[derive(Debug, Clone, Copy)]
pub struct AlphaLadder {
    /// (1-a)/g3m: left end where psi degenerates to -a.
    pub left_end: f64,
    pub alpha0: f64,
    pub alpha_low: f64,
    pub alpha_bar: f64,
    pub alpha_ub: f64,
}

pub fn alpha_ladder(model: &AggregateModel, g: &GammaSet) -> Result<AlphaLadder> {
    let a = model.a;
    let delta = model.delta;
    let m1 = model.m1();
    if !m1.is_finite() {
        return Err(Error::UnsupportedConfiguration(
            "alpha ladder requires bounded line-1 claims".into(),
        ));
    }
    let n1 = model.n1();
    let n2 = model.n2();
    let scale = (1.0 - a) * g.g3p / (g.g3p - g.g3m);
    let alpha0 = scale
        * (n1 / delta - model.kappa1 * n2 / (2.0 * delta * m1) - 1.0 / g.g3p - model.cbar2 / delta);
    let alpha_low = -scale * (1.0 / g.g3p + model.cbar2 / delta);
    let alpha_bar = scale * (1.0 / g.g2p - 1.0 / g.g3p - model.cbar2 / delta);
    let alpha_ub = (1.0 - a) * (g.g3p - g.g4m) / (g.g3m * (g.g3p - g.g3m));
    Ok(AlphaLadder {
        left_end: (1.0 - a) / g.g3m,
        alpha0,
        alpha_low,
        alpha_bar,
        alpha_ub,
    })
}

/// Lower end of the K3- bracket when both dividend thresholds sit at or
/// above the full-retention point w0.
pub fn alpha_lb_low_thresholds(model: &AggregateModel, l: &AlphaLadder) -> f64 {
    let m1 = model.m1();
    let n1 = model.n1();
    let n2 = model.n2();
    if n1 > model.kappa1 * n2 / (2.0 * m1) {
        let bound = n1 - model.kappa1 * n2 / (2.0 * m1) + model.delta * m1 / model.kappa1;
        if model.cbar2 >= bound {
            l.left_end
        } else {
            l.alpha0
        }
    } else if model.cbar2 >= model.delta * n2 / (2.0 * n1) {
        l.left_end
    } else {
        l.alpha_low
    }
}

/// Lower end of the K3- bracket when the full-retention point w0 falls
/// between the two thresholds.
pub fn alpha_lb_split_thresholds(model: &AggregateModel, l: &AlphaLadder) -> f64 {
    if model.cbar2 > model.delta * model.n2() / (2.0 * model.n1()) {
        l.alpha0
    } else {
        l.alpha_low
    }
}

/// Solve psi(K3-) = 0 on [lo, hi] and derive the matching positive-root
/// coefficient K3+ from the value condition at the upper threshold.
pub fn solve_k3(g: &GammaSet, a: f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let f = |z: f64| psi(g, a, z);
    let width = (hi - lo).abs().max(1e-12);
    let k3m = bisect(&f, lo, hi, 1e-15 * width, 1e-13)?;
    let k3p = (1.0 - a - k3m * g.g3m) / g.g3p;
    Ok((k3m, k3p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two uniform lines with the standard parameter set used throughout
    /// the worked examples: kappa = (4, 2), bounds (1, 1.5), delta = 0.5,
    /// a = 0.3.
    fn uniform_model(cbar1: f64, cbar2: f64) -> AggregateModel {
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

    #[test]
    fn aggregate_kernels_at_full_retention() {
        // closed-form oracle: N1 = 4*(1/2) + 2*(1/2 - 1/12) = 17/6,
        // N2 = 1/3 + (1/4 - 1/18) = 19/36
        let m = uniform_model(3.0, 2.0);
        assert!((m.n1() - 17.0 / 6.0).abs() < 1e-12);
        assert!((m.n2() - 19.0 / 36.0).abs() < 1e-12);
        // threshold 17/6 - 19/18 + 1/8 = 137/72
        assert!((m.cap_sum_bound().unwrap() - 137.0 / 72.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_kernels_use_full_moments() {
        // exponential rates (1, 1.5): N1 = 4*1 + 2*(2/3) = 16/3
        let m = AggregateModel::new(
            4.0,
            2.0,
            ClaimDistribution::exponential(1.0).unwrap(),
            ClaimDistribution::exponential(1.5).unwrap(),
            0.5,
            0.3,
            0.0,
            0.0,
        )
        .unwrap();
        assert_eq!(m.m1(), f64::INFINITY);
        assert!((m.n1() - 16.0 / 3.0).abs() < 1e-12);
        assert!((m.n2() - (2.0 + 2.0 / 2.25)).abs() < 1e-12);
    }

    #[test]
    fn gamma_pairs_satisfy_vieta() {
        let m = uniform_model(3.0, 2.0);
        for y in [0.25, 0.5, 1.0] {
            for rate in [0.0, 2.0, 5.0] {
                let (gp, gm) = m.gamma_pair(y, rate).unwrap();
                let n2 = m.nbar2(y).unwrap();
                let d = m.nbar1(y).unwrap() - rate;
                assert!(gp > 0.0 && gm < 0.0);
                assert!((gp * gm + 2.0 * m.delta / n2).abs() < 1e-12 * gp.abs() * gm.abs());
                assert!((gp + gm + 2.0 * d / n2).abs() < 1e-10);
            }
        }
        assert!(m.gamma_pair(0.0, 0.0).is_err());
    }

    #[test]
    fn gamma_families_are_ordered() {
        let m = uniform_model(3.0, 2.0);
        let g = m.gammas().unwrap();
        // heavier payout => less negative decay root
        assert!(g.g2m < g.g3m && g.g3m < g.g4m && g.g4m < 0.0);
        assert!(g.g2p > 0.0 && g.g3p > g.g2p);
    }

    #[test]
    fn psi_boundary_values() {
        let m = uniform_model(3.0, 2.0);
        let g = m.gammas().unwrap();
        let l = alpha_ladder(&m, &g).unwrap();
        // at alpha_ub the band width is zero, so psi = 1 - 2a exactly
        assert!((zeta(&g, m.a, l.alpha_ub)).abs() < 1e-12);
        assert!((psi(&g, m.a, l.alpha_ub) - (1.0 - 2.0 * m.a)).abs() < 1e-12);
        // approaching the left end, psi -> -a
        let z = l.left_end * (1.0 - 1e-9);
        assert!((psi(&g, m.a, z) + m.a).abs() < 1e-3);
        assert_eq!(psi(&g, m.a, l.left_end), -m.a);
        // ladder ordering for this parameter set
        assert!(l.left_end < l.alpha_ub && l.alpha_ub < 0.0);
    }

    #[test]
    fn k3_root_is_interior_and_signed() {
        let m = uniform_model(3.0, 2.0);
        let g = m.gammas().unwrap();
        let l = alpha_ladder(&m, &g).unwrap();
        let lb = alpha_lb_low_thresholds(&m, &l);
        // cbar sum is above the regime threshold here, so the lower end
        // of the bracket collapses to the left endpoint
        assert_eq!(lb, l.left_end);
        let (k3m, k3p) = solve_k3(&g, m.a, lb, l.alpha_ub).unwrap();
        assert!(psi(&g, m.a, k3m).abs() < 1e-12);
        assert!(k3m < 0.0 && k3p > 0.0);
        assert!(l.left_end < k3m && k3m < l.alpha_ub);
    }

    proptest! {
        #[test]
        fn psi_monotone_on_bracket(t1 in 0.001f64..0.999, t2 in 0.001f64..0.999) {
            let m = uniform_model(3.0, 2.0);
            let g = m.gammas().unwrap();
            let l = alpha_ladder(&m, &g).unwrap();
            let at = |t: f64| l.left_end + t * (l.alpha_ub - l.left_end);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(psi(&g, m.a, at(lo)) <= psi(&g, m.a, at(hi)) + 1e-10);
        }
    }
}
