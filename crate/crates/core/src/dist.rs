//! Integer-valued claim laws and their transforms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a user-supplied pmf.
pub const MASS_TOL: f64 = 1e-12;

/// Default tail mass discarded when an infinite-support law is made finite.
pub const DEFAULT_TRUNC_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClaimLaw {
    /// `pmf[k] = P(X = k)`.
    Finite { pmf: Vec<f64> },
    /// `P(X = k) = p (1 - p)^k`.
    Geometric { p: f64 },
}

/// Outcome of the net profit check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NetProfit {
    Holds,
    /// `P(X = kappa) = 1`: the surplus never moves.
    TrivialSurvival,
}

/// A finite pmf together with the mass it leaves out.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub pmf: Vec<f64>,
    pub tail: f64,
}

/// Claim distribution of `X`. Immutable; mean and CDF table are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimDistribution {
    law: ClaimLaw,
    trunc_eps: f64,
    mean: f64,
    cdf: Vec<f64>,
}

impl ClaimDistribution {
    pub fn finite(pmf: Vec<f64>) -> Result<Self> {
        Self::new(ClaimLaw::Finite { pmf })
    }

    pub fn geometric(p: f64) -> Result<Self> {
        Self::new(ClaimLaw::Geometric { p })
    }

    /// `X ~ Bernoulli(p)` as a two-point pmf.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::finite(vec![1.0 - p, p])
    }

    pub fn new(law: ClaimLaw) -> Result<Self> {
        match law {
            ClaimLaw::Finite { mut pmf } => {
                if pmf.is_empty() {
                    return Err(Error::InvalidDistribution("empty pmf".into()));
                }
                if let Some((k, v)) = pmf.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidDistribution(format!("pmf[{k}] = {v} is not a probability")));
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(Error::InvalidDistribution(format!("pmf sums to {total}, not 1")));
                }
                while pmf.len() > 1 && pmf[pmf.len() - 1] == 0.0 {
                    pmf.pop();
                }
                let mean = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                let mut acc = 0.0;
                let cdf = pmf
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                Ok(Self {
                    law: ClaimLaw::Finite { pmf },
                    trunc_eps: DEFAULT_TRUNC_EPS,
                    mean,
                    cdf,
                })
            }
            ClaimLaw::Geometric { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::InvalidDistribution(format!(
                        "geometric parameter p = {p} must lie in (0, 1)"
                    )));
                }
                Ok(Self {
                    law: ClaimLaw::Geometric { p },
                    trunc_eps: DEFAULT_TRUNC_EPS,
                    mean: (1.0 - p) / p,
                    cdf: Vec::new(),
                })
            }
        }
    }

    pub fn with_trunc_eps(mut self, eps: f64) -> Self {
        self.trunc_eps = eps;
        self
    }

    pub fn law(&self) -> &ClaimLaw {
        &self.law
    }

    pub fn trunc_eps(&self) -> f64 {
        self.trunc_eps
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.law, ClaimLaw::Finite { .. })
    }

    /// `P(X = k)`.
    pub fn pmf(&self, k: usize) -> f64 {
        match &self.law {
            ClaimLaw::Finite { pmf } => pmf.get(k).copied().unwrap_or(0.0),
            ClaimLaw::Geometric { p } => p * (1.0 - p).powi(k as i32),
        }
    }

    /// `F_X(u) = P(X <= u)`.
    pub fn cdf(&self, u: usize) -> f64 {
        match &self.law {
            ClaimLaw::Finite { .. } => self.cdf.get(u).copied().unwrap_or(1.0),
            ClaimLaw::Geometric { p } => 1.0 - (1.0 - p).powi(u as i32 + 1),
        }
    }

    /// `P(X > u)`, computed without cancellation for the geometric law.
    pub fn tail(&self, u: usize) -> f64 {
        match &self.law {
            ClaimLaw::Finite { .. } => (1.0 - self.cdf(u)).max(0.0),
            ClaimLaw::Geometric { p } => (1.0 - p).powi(u as i32 + 1),
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Radius of convergence of the PGF (infinite for a finite pmf).
    pub fn pgf_radius(&self) -> f64 {
        match &self.law {
            ClaimLaw::Finite { .. } => f64::INFINITY,
            ClaimLaw::Geometric { p } => 1.0 / (1.0 - p),
        }
    }

    /// `G_X(s) = E s^X`.
    pub fn pgf(&self, s: Complex64) -> Result<Complex64> {
        match &self.law {
            ClaimLaw::Finite { pmf } => Ok(pmf
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)),
            ClaimLaw::Geometric { p } => {
                let radius = self.pgf_radius();
                if s.norm() >= radius {
                    return Err(Error::Domain {
                        modulus: s.norm(),
                        radius,
                    });
                }
                Ok(*p / (1.0 - (1.0 - p) * s))
            }
        }
    }

    /// Smallest support point.
    pub fn min_support(&self) -> usize {
        match &self.law {
            ClaimLaw::Finite { pmf } => pmf.iter().position(|&p| p > 0.0).unwrap_or(0),
            ClaimLaw::Geometric { .. } => 0,
        }
    }

    /// Largest support point, `None` for infinite support.
    pub fn max_support(&self) -> Option<usize> {
        match &self.law {
            ClaimLaw::Finite { pmf } => Some(pmf.len() - 1),
            ClaimLaw::Geometric { .. } => None,
        }
    }

    /// Index beyond which the remaining mass is below `eps`.
    pub fn effective_support(&self, eps: f64) -> usize {
        match &self.law {
            ClaimLaw::Finite { pmf } => pmf.len() - 1,
            ClaimLaw::Geometric { p } => {
                // (1-p)^(m+1) <= eps
                let m = (eps.ln() / (1.0 - p).ln()).ceil() - 1.0;
                m.max(0.0) as usize
            }
        }
    }

    pub fn check_net_profit(&self, kappa: u32) -> Result<NetProfit> {
        if self.is_finite() && self.pmf(kappa as usize) == 1.0 {
            return Ok(NetProfit::TrivialSurvival);
        }
        if self.mean < kappa as f64 {
            Ok(NetProfit::Holds)
        } else {
            Err(Error::NetProfitViolation {
                mean: self.mean,
                kappa,
            })
        }
    }

    /// Finite pmf carrying at least `1 - eps` of the mass, plus the exact tail.
    pub fn truncate(&self, eps: f64) -> Truncation {
        match &self.law {
            ClaimLaw::Finite { pmf } => Truncation {
                pmf: pmf.clone(),
                tail: 0.0,
            },
            ClaimLaw::Geometric { .. } => {
                let mut m = self.effective_support(eps);
                // guard against rounding in the log ratio
                while self.tail(m) > eps {
                    m += 1;
                }
                Truncation {
                    pmf: (0..=m).map(|k| self.pmf(k)).collect(),
                    tail: self.tail(m),
                }
            }
        }
    }

    /// gcd of `kappa` and the positive support points.
    pub fn lattice_span(&self, kappa: u32) -> u32 {
        match &self.law {
            ClaimLaw::Geometric { .. } => 1,
            ClaimLaw::Finite { pmf } => pmf
                .iter()
                .enumerate()
                .skip(1)
                .filter(|(_, &p)| p > 0.0)
                .fold(kappa, |g, (k, _)| gcd(g, k as u32)),
        }
    }

    /// Law of `X - shift`; only defined for finite laws with support at or above `shift`.
    pub fn shifted_down(&self, shift: usize) -> Result<Self> {
        if shift == 0 {
            return Ok(self.clone());
        }
        match &self.law {
            ClaimLaw::Finite { pmf } if self.min_support() >= shift => {
                Ok(Self::finite(pmf[shift..].to_vec())?.with_trunc_eps(self.trunc_eps))
            }
            _ => Err(Error::Precondition(format!(
                "cannot shift the claim law down by {shift}"
            ))),
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn example5() -> ClaimDistribution {
        ClaimDistribution::finite(vec![0.128, 0.576, 0.264, 0.032]).unwrap()
    }

    #[test]
    fn pmf_values() {
        let g = ClaimDistribution::geometric(101.0 / 300.0).unwrap();
        assert_eq!(g.pmf(0), 101.0 / 300.0);
        assert_eq!(example5().pmf(2), 0.264);
        let half = ClaimDistribution::geometric(0.5).unwrap();
        assert_relative_eq!(half.pmf(3), 0.0625, epsilon = 1e-16);
        assert_eq!(example5().pmf(17), 0.0);
    }

    #[test]
    fn cdf_values() {
        assert_relative_eq!(example5().cdf(1), 0.704, epsilon = 1e-15);
        assert_eq!(example5().cdf(1000), 1.0);
        let g = ClaimDistribution::geometric(0.3).unwrap();
        assert_relative_eq!(g.cdf(0), 0.3, epsilon = 1e-15);
        assert_relative_eq!(g.cdf(400), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pgf_values() {
        let one = Complex64::new(1.0, 0.0);
        let g = ClaimDistribution::geometric(101.0 / 300.0).unwrap();
        assert_relative_eq!(g.pgf(one).unwrap().re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(example5().pgf(one).unwrap().re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(g.pgf(Complex64::new(0.0, 0.0)).unwrap().re, 101.0 / 300.0);
        let coin = ClaimDistribution::finite(vec![0.5, 0.5]).unwrap();
        assert_eq!(coin.pgf(Complex64::new(-1.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn pgf_outside_radius_is_domain_error() {
        let g = ClaimDistribution::geometric(0.5).unwrap();
        assert!(matches!(g.pgf(Complex64::new(2.0, 0.0)), Err(Error::Domain { .. })));
        assert!(g.pgf(Complex64::new(1.5, 0.0)).is_ok());
    }

    #[test]
    fn means() {
        let g = ClaimDistribution::geometric(101.0 / 300.0).unwrap();
        assert_relative_eq!(g.mean(), 199.0 / 101.0, epsilon = 1e-15);
        assert_relative_eq!(ClaimDistribution::bernoulli(0.3).unwrap().mean(), 0.3);
        assert_relative_eq!(example5().mean(), 1.2, epsilon = 1e-15);
    }

    #[test]
    fn net_profit() {
        let g = ClaimDistribution::geometric(101.0 / 300.0).unwrap();
        assert_eq!(g.check_net_profit(2).unwrap(), NetProfit::Holds);
        let fixed = ClaimDistribution::finite(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(fixed.check_net_profit(2).unwrap(), NetProfit::TrivialSurvival);
        let heavy = ClaimDistribution::geometric(0.25).unwrap();
        match heavy.check_net_profit(2) {
            Err(Error::NetProfitViolation { mean, kappa }) => {
                assert_relative_eq!(mean, 3.0);
                assert_eq!(kappa, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation() {
        let t = ClaimDistribution::finite(vec![0.2, 0.3, 0.5]).unwrap().truncate(1e-3);
        assert_eq!(t.pmf, vec![0.2, 0.3, 0.5]);
        assert_eq!(t.tail, 0.0);

        let t = ClaimDistribution::geometric(0.5).unwrap().truncate(1e-3);
        assert_eq!(t.pmf.len(), 10);
        assert_eq!(t.tail, 2f64.powi(-10));

        let t = ClaimDistribution::geometric(0.9).unwrap().truncate(1e-12);
        assert_eq!(t.pmf.len() - 1, 11);
    }

    #[test]
    fn lattice_spans() {
        let g = ClaimDistribution::geometric(0.7).unwrap();
        assert_eq!(g.lattice_span(2), 1);
        assert_eq!(g.lattice_span(5), 1);
        let even = ClaimDistribution::finite(vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(even.lattice_span(2), 2);
        let three = ClaimDistribution::finite(vec![0.9, 0.0, 0.0, 0.1]).unwrap();
        assert_eq!(three.lattice_span(2), 1);
        let zero = ClaimDistribution::finite(vec![1.0]).unwrap();
        assert_eq!(zero.lattice_span(4), 4);
    }

    #[test]
    fn rejects_bad_pmfs() {
        assert!(ClaimDistribution::finite(vec![]).is_err());
        assert!(ClaimDistribution::finite(vec![0.5, 0.6]).is_err());
        assert!(ClaimDistribution::finite(vec![1.5, -0.5]).is_err());
        assert!(ClaimDistribution::finite(vec![f64::NAN, 1.0]).is_err());
        assert!(ClaimDistribution::geometric(0.0).is_err());
        assert!(ClaimDistribution::geometric(1.0).is_err());
    }

    #[test]
    fn shift_down() {
        let d = ClaimDistribution::finite(vec![0.0, 0.0, 0.9, 0.1]).unwrap();
        let s = d.shifted_down(2).unwrap();
        assert_eq!(s.pmf(0), 0.9);
        assert_eq!(s.pmf(1), 0.1);
        assert!(d.shifted_down(3).is_err());
    }

    fn arb_pmf() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..10).prop_filter_map("zero mass", |w| {
            let total: f64 = w.iter().sum();
            (total > 1e-3).then(|| w.iter().map(|v| v / total).collect())
        })
    }

    proptest! {
        #[test]
        fn cdf_increments_are_pmf(pmf in arb_pmf()) {
            let d = ClaimDistribution::finite(pmf).unwrap();
            for u in 1..12 {
                prop_assert!((d.cdf(u) - d.cdf(u - 1) - d.pmf(u)).abs() <= 1e-14);
            }
        }

        #[test]
        fn geometric_truncation_keeps_mass_and_pgf(p in 0.05f64..0.95, r in 0.0f64..1.0, theta in 0.0f64..std::f64::consts::TAU) {
            let d = ClaimDistribution::geometric(p).unwrap();
            let t = d.truncate(d.trunc_eps());
            let mass: f64 = t.pmf.iter().sum();
            prop_assert!((mass + t.tail - 1.0).abs() <= 1e-12);
            let s = Complex64::from_polar(r, theta);
            let poly = t.pmf.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c);
            prop_assert!((d.pgf(s).unwrap() - poly).norm() <= t.tail + 1e-14);
            let trunc_mean: f64 = t.pmf.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
            prop_assert!((trunc_mean - d.mean()).abs() <= d.trunc_eps() * (t.pmf.len() as f64 + 1.0) + 1e-12);
        }
    }
}
