//! Claim-size distributions and their limited-moment kernels.
//!
//! For retention level s, the limited mean is mu(s) = E(Y ^ s) and the
//! limited second moment is sigma2(s) = E(Y ^ s)^2 (^ = min). Both are
//! integrals of the survival function; uniform and exponential families
//! have closed forms, tabulated survival curves are integrated by
//! adaptive quadrature.

use crate::error::{Error, Result};
use crate::numeric::{adaptive_quad, bisect};

const QUAD_REL: f64 = 1e-10;
const QUAD_ABS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum ClaimDistribution {
    /// Uniform on [0, upper]; bounded support.
    Uniform { upper: f64 },
    /// Exponential with the given rate; unbounded support.
    Exponential { rate: f64 },
    /// Piecewise-linear survival function through the given (y, survival)
    /// sample points. Must start at (0, 1), be non-increasing, and end at
    /// survival 0 (finite support).
    Tabulated { points: Vec<(f64, f64)> },
}

impl ClaimDistribution {
    pub fn uniform(upper: f64) -> Result<Self> {
        if !(upper > 0.0) {
            return Err(Error::Domain(format!("uniform upper must be > 0, got {upper}")));
        }
        Ok(Self::Uniform { upper })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Domain(format!("exponential rate must be > 0, got {rate}")));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("tabulated survival needs >= 2 points".into()));
        }
        if points[0] != (0.0, 1.0) {
            return Err(Error::Domain("tabulated survival must start at (0, 1)".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Domain("tabulated y values must be strictly increasing".into()));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::Domain("tabulated survival must be non-increasing".into()));
            }
        }
        if points.last().unwrap().1 != 0.0 {
            return Err(Error::Domain("tabulated survival must end at 0 (finite support)".into()));
        }
        Ok(Self::Tabulated { points })
    }

    /// Supremum of the support; infinite for the exponential family.
    pub fn support_bound(&self) -> f64 {
        match self {
            Self::Uniform { upper } => *upper,
            Self::Exponential { .. } => f64::INFINITY,
            Self::Tabulated { points } => points.last().unwrap().0,
        }
    }

    /// Survival function 1 - F(y).
    pub fn survival(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        match self {
            Self::Uniform { upper } => (1.0 - y / upper).max(0.0),
            Self::Exponential { rate } => (-rate * y).exp(),
            Self::Tabulated { points } => {
                if y >= points.last().unwrap().0 {
                    return 0.0;
                }
                let i = points.partition_point(|p| p.0 <= y);
                let (y0, s0) = points[i - 1];
                let (y1, s1) = points[i];
                s0 + (s1 - s0) * (y - y0) / (y1 - y0)
            }
        }
    }

    /// Limited mean mu(s); s may be infinite.
    pub fn limited_mean(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::Domain(format!("retention must be >= 0, got {s}")));
        }
        Ok(match self {
            Self::Uniform { upper } => {
                let s = s.min(*upper);
                s - s * s / (2.0 * upper)
            }
            Self::Exponential { rate } => {
                if s.is_infinite() {
                    1.0 / rate
                } else {
                    -(-rate * s).exp_m1() / rate
                }
            }
            Self::Tabulated { .. } => {
                let s = s.min(self.support_bound());
                adaptive_quad(&|y| self.survival(y), 0.0, s, QUAD_REL, QUAD_ABS)
            }
        })
    }

    /// Limited second moment sigma2(s); s may be infinite.
    pub fn limited_second_moment(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::Domain(format!("retention must be >= 0, got {s}")));
        }
        Ok(match self {
            Self::Uniform { upper } => {
                let s = s.min(*upper);
                s * s - 2.0 * s * s * s / (3.0 * upper)
            }
            Self::Exponential { rate } => {
                if s.is_infinite() {
                    2.0 / (rate * rate)
                } else {
                    // 1 - e^{-x}(1+x): direct evaluation loses all digits
                    // for small x, so switch to the series
                    // sum_{k>=2} (-1)^k (k-1)/k! x^k below x = 0.5
                    let x = rate * s;
                    let core = if x < 0.5 {
                        let mut t = x * x / 2.0; // (-1)^k x^k / k! at k = 2
                        let mut sum = t;
                        for k in 3..=24u32 {
                            t *= -x / k as f64;
                            sum += (k - 1) as f64 * t;
                        }
                        sum
                    } else {
                        -(-x).exp_m1() - x * (-x).exp()
                    };
                    2.0 / (rate * rate) * core
                }
            }
            Self::Tabulated { .. } => {
                let s = s.min(self.support_bound());
                adaptive_quad(&|y| 2.0 * y * self.survival(y), 0.0, s, QUAD_REL, QUAD_ABS)
            }
        })
    }

    /// Volatility kernel sigma(s) = sqrt(sigma2(s)).
    pub fn sigma(&self, s: f64) -> Result<f64> {
        Ok(self.limited_second_moment(s)?.sqrt())
    }

    /// h(s) = sigma2(s) / mu(s)^2; increasing in s.
    pub fn h_ratio(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("h ratio needs s > 0, got {s}")));
        }
        let mu = self.limited_mean(s)?;
        if mu <= 0.0 {
            return Err(Error::Singular(format!("limited mean vanishes at s={s}")));
        }
        Ok(self.limited_second_moment(s)? / (mu * mu))
    }

    /// Pure excess-of-loss retention pi0 dominating the mixed strategy
    /// (theta, pi): matches the volatility, theta^2 sigma2(pi/theta) =
    /// sigma2(pi0), and by monotonicity of h gains drift,
    /// mu(pi0) >= theta mu(pi/theta).
    pub fn dominating_pure_xl(&self, theta: f64, pi: f64) -> Result<f64> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Domain(format!("theta must lie in (0,1), got {theta}")));
        }
        if pi < 0.0 {
            return Err(Error::Domain(format!("retention must be >= 0, got {pi}")));
        }
        let target = theta * theta * self.limited_second_moment(pi / theta)?;
        if target == 0.0 {
            return Ok(0.0);
        }
        // sigma2 is strictly increasing up to the support bound, so pi0
        // in [0, pi/theta] brackets the matching retention.
        let hi = (pi / theta).min(self.support_bound());
        let f = |s: f64| self.limited_second_moment(s).unwrap() - target;
        bisect(&f, 0.0, hi, 1e-13 * (1.0 + hi), 0.0)
    }

    /// Full (unlimited) mean.
    pub fn mean(&self) -> f64 {
        self.limited_mean(f64::INFINITY).unwrap()
    }

    /// Full (unlimited) second moment.
    pub fn second_moment(&self) -> f64 {
        self.limited_second_moment(f64::INFINITY).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent quadrature oracle for the limited moments, used to
    /// freeze expected values; deliberately bypasses the closed forms.
    fn mu_oracle(dist: &ClaimDistribution, s: f64) -> f64 {
        let hi = s.min(dist.support_bound().min(200.0));
        adaptive_quad(&|y| dist.survival(y), 0.0, hi, 1e-12, 1e-15)
    }

    fn sigma2_oracle(dist: &ClaimDistribution, s: f64) -> f64 {
        let hi = s.min(dist.support_bound().min(200.0));
        adaptive_quad(&|y| 2.0 * y * dist.survival(y), 0.0, hi, 1e-12, 1e-15)
    }

    #[test]
    fn limited_mean_examples() {
        let u = ClaimDistribution::uniform(1.0).unwrap();
        assert_eq!(u.limited_mean(0.0).unwrap(), 0.0);
        // oracle: integral of (1-y) on [0, 0.5] = 0.375
        let oracle = mu_oracle(&u, 0.5);
        assert!((oracle - 0.375).abs() < 1e-12);
        assert!((u.limited_mean(0.5).unwrap() - 0.375).abs() < 1e-12);

        let e = ClaimDistribution::exponential(1.0).unwrap();
        assert!((e.limited_mean(f64::INFINITY).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limited_second_moment_examples() {
        let u = ClaimDistribution::uniform(1.0).unwrap();
        let oracle = sigma2_oracle(&u, 1.0);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-11);
        assert!((u.limited_second_moment(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(u.limited_second_moment(0.0).unwrap(), 0.0);

        let e = ClaimDistribution::exponential(1.0).unwrap();
        let oracle = sigma2_oracle(&e, f64::INFINITY);
        assert!((oracle - 2.0).abs() < 1e-9);
        assert!((e.limited_second_moment(f64::INFINITY).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn h_ratio_examples() {
        let u = ClaimDistribution::uniform(1.0).unwrap();
        assert!((u.h_ratio(1.0).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        // exponential h(s) -> 1 as s -> 0+
        let e = ClaimDistribution::exponential(1.0).unwrap();
        assert!((e.h_ratio(1e-6).unwrap() - 1.0).abs() < 1e-5);
        // error paths
        assert!(u.h_ratio(0.0).is_err());
    }

    #[test]
    fn negative_retention_rejected() {
        let u = ClaimDistribution::uniform(1.0).unwrap();
        assert!(u.limited_mean(-0.1).is_err());
        assert!(u.limited_second_moment(-0.1).is_err());
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        let dists = [
            ClaimDistribution::uniform(1.0).unwrap(),
            ClaimDistribution::uniform(1.5).unwrap(),
            ClaimDistribution::exponential(1.0).unwrap(),
            ClaimDistribution::exponential(1.5).unwrap(),
        ];
        for d in &dists {
            for s in [0.1, 0.35, 0.7, 1.0, 1.4, 3.0, 10.0] {
                let mu = d.limited_mean(s).unwrap();
                let s2 = d.limited_second_moment(s).unwrap();
                assert!((mu - mu_oracle(d, s)).abs() <= 1e-9 * (1.0 + mu.abs()));
                assert!((s2 - sigma2_oracle(d, s)).abs() <= 1e-9 * (1.0 + s2.abs()));
            }
        }
    }

    #[test]
    fn tabulated_matches_uniform() {
        // a two-point table is exactly Uniform(0, 1)
        let t = ClaimDistribution::tabulated(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let u = ClaimDistribution::uniform(1.0).unwrap();
        for s in [0.2, 0.5, 0.9, 1.0] {
            assert!((t.limited_mean(s).unwrap() - u.limited_mean(s).unwrap()).abs() < 1e-10);
            assert!(
                (t.limited_second_moment(s).unwrap() - u.limited_second_moment(s).unwrap()).abs()
                    < 1e-10
            );
        }
    }

    #[test]
    fn dominating_pure_xl_examples() {
        let u = ClaimDistribution::uniform(1.0).unwrap();
        // theta -> 1: identity
        let pi0 = u.dominating_pure_xl(0.999999, 0.4).unwrap();
        assert!((pi0 - 0.4).abs() < 1e-4);
        // frozen from the bisection oracle on the closed-form sigma2:
        // solve s^2 - 2 s^3 / 3 = 0.25 * sigma2(0.8)
        let target = 0.25 * u.limited_second_moment(0.8).unwrap();
        let oracle = bisect(
            &|s: f64| s * s - 2.0 * s * s * s / 3.0 - target,
            0.0,
            1.0,
            1e-14,
            0.0,
        )
        .unwrap();
        let pi0 = u.dominating_pure_xl(0.5, 0.4).unwrap();
        assert!((pi0 - oracle).abs() < 1e-10);
        assert!(u.dominating_pure_xl(1.5, 0.4).is_err());
    }

    proptest! {
        #[test]
        fn moments_monotone_and_bounded(
            s1 in 1e-6f64..3.0,
            s2 in 1e-6f64..3.0,
            which in 0usize..3,
        ) {
            let d = match which {
                0 => ClaimDistribution::uniform(1.0).unwrap(),
                1 => ClaimDistribution::exponential(1.3).unwrap(),
                _ => ClaimDistribution::tabulated(
                    vec![(0.0, 1.0), (0.5, 0.6), (1.2, 0.2), (2.0, 0.0)]).unwrap(),
            };
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let mu_lo = d.limited_mean(lo).unwrap();
            let mu_hi = d.limited_mean(hi).unwrap();
            let s2_lo = d.limited_second_moment(lo).unwrap();
            let s2_hi = d.limited_second_moment(hi).unwrap();
            prop_assert!(mu_lo <= mu_hi + 1e-12);
            prop_assert!(s2_lo <= s2_hi + 1e-12);
            prop_assert!(d.h_ratio(lo).unwrap() <= d.h_ratio(hi).unwrap() + 1e-12);
            // sigma2(s) <= s mu(s)
            prop_assert!(s2_hi <= hi * mu_hi + 1e-12);
        }

        #[test]
        fn pure_xl_dominates(theta in 0.05f64..0.95, pi in 0.01f64..0.9) {
            let d = ClaimDistribution::uniform(1.0).unwrap();
            let pi0 = d.dominating_pure_xl(theta, pi).unwrap();
            let matched = theta * theta * d.limited_second_moment(pi / theta).unwrap();
            prop_assert!((matched - d.limited_second_moment(pi0).unwrap()).abs() <= 1e-10);
            let gain = d.limited_mean(pi0).unwrap() - theta * d.limited_mean(pi / theta).unwrap();
            prop_assert!(gain >= -1e-12);
        }
    }
}
