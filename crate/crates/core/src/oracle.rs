//! Independent checks: simulation of the walk supremum, the one-step
//! stationarity of `M`, the two-sequence limits for `kappa = 2`, and the
//! generating-function identity for `M`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{ClaimDistribution, ClaimLaw};
use crate::error::{Error, Result};

/// Per-path probability of missing a late climb; sets where a path is abandoned.
const CLIMB_EPS: f64 = 1e-12;
const CHUNK: u64 = 4096;

struct Sampler {
    cdf: Vec<f64>,
    /// `guide[i]` is the first index with `cdf > i / guide.len()`.
    guide: Vec<usize>,
    ln_q: Option<f64>,
}

impl Sampler {
    fn new(d: &ClaimDistribution) -> Self {
        let top = d.effective_support(1e-16);
        let cdf: Vec<f64> = (0..=top).map(|k| d.cdf(k)).collect();
        let m = 4 * cdf.len();
        let guide = (0..m).map(|i| cdf.partition_point(|&c| c <= i as f64 / m as f64)).collect();
        let ln_q = match d.law() {
            ClaimLaw::Geometric { p } => Some((1.0 - p).ln()),
            ClaimLaw::Finite { .. } => None,
        };
        Sampler { cdf, guide, ln_q }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> i64 {
        let u: f64 = rng.random();
        let cdf = &self.cdf;
        let mut k = self.guide[(u * self.guide.len() as f64) as usize];
        while k < cdf.len() && cdf[k] <= u {
            k += 1;
        }
        if k < cdf.len() {
            return k as i64;
        }
        match self.ln_q {
            // inversion of the geometric law, used only in the far tail
            Some(l) => ((1.0 - u).ln() / l).floor().max(cdf.len() as f64) as i64,
            None => (cdf.len() - 1) as i64,
        }
    }
}

/// Largest `r > 0` with `E exp(r (X - kappa)) = 1`; `None` when the walk cannot climb.
pub fn lundberg_exponent(d: &ClaimDistribution, kappa: u32) -> Option<f64> {
    if d.max_support().is_some_and(|m| m <= kappa as usize) {
        return None;
    }
    let log_mgf = |r: f64| -> f64 {
        let m = match d.law() {
            ClaimLaw::Geometric { p } => p / (1.0 - (1.0 - p) * r.exp()),
            ClaimLaw::Finite { pmf } => pmf.iter().enumerate().map(|(k, x)| x * (r * k as f64).exp()).sum(),
        };
        m.ln() - r * kappa as f64
    };
    let mut hi = match d.law() {
        ClaimLaw::Geometric { p } => -(1.0 - p).ln() * (1.0 - 1e-12),
        ClaimLaw::Finite { .. } => 1.0,
    };
    while log_mgf(hi) < 0.0 && d.is_finite() {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = log_mgf(mid);
        if v.is_finite() && v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Histogram of `max(-1, sup_{1<=n<=T} S_n)` with `S_n = sum (X_i - kappa)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupremumSample {
    /// `counts[k]` paths had clipped supremum `k - 1`.
    pub counts: Vec<u64>,
    pub paths: u64,
    pub horizon: u64,
    pub seed: u64,
}

impl SupremumSample {
    /// Fraction of paths with `sup S_n < u`.
    pub fn survival(&self, u: usize) -> f64 {
        let hits: u64 = self.counts.iter().take(u + 1).sum();
        hits as f64 / self.paths as f64
    }

    /// Empirical pmf of `M = max(0, sup S_n)`.
    pub fn supremum_pmf(&self) -> Vec<f64> {
        let n = self.paths as f64;
        let mut pmf: Vec<f64> = self.counts.iter().skip(1).map(|&c| c as f64 / n).collect();
        if pmf.is_empty() {
            pmf.push(0.0);
        }
        pmf[0] += self.counts[0] as f64 / n;
        pmf
    }
}

fn run_path(sampler: &Sampler, kappa: i64, climbs: bool, abandon: i64, horizon: u64, seed: u64, path: u64) -> i64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    let mut s: i64 = 0;
    let mut sup: i64 = -1;
    for _ in 0..horizon {
        s += sampler.draw(&mut rng) - kappa;
        sup = sup.max(s);
        // once the walk cannot rise, or has fallen far enough that a return is
        // below CLIMB_EPS, the recorded supremum is final
        if !climbs || sup - s >= abandon {
            break;
        }
    }
    sup
}

/// Simulate `paths` walks; path `i` draws from the ChaCha stream `i` of `seed`,
/// so the result does not depend on how the work is split.
pub fn simulate_maxima(d: &ClaimDistribution, kappa: u32, paths: u64, horizon: u64, seed: u64) -> Result<SupremumSample> {
    d.check_net_profit(kappa)?;
    let sampler = Sampler::new(d);
    let exponent = lundberg_exponent(d, kappa);
    let abandon = match exponent {
        Some(r) if r > 0.0 => (-CLIMB_EPS.ln() / r).ceil().min(i64::MAX as f64 / 4.0) as i64,
        _ => i64::MAX,
    };
    let climbs = exponent.is_some();
    let k = kappa as i64;
    let chunks: Vec<u64> = (0..paths.div_ceil(CHUNK)).collect();
    let counts = chunks
        .par_iter()
        .map(|&c| {
            let mut local: Vec<u64> = Vec::new();
            for path in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                let idx = (run_path(&sampler, k, climbs, abandon, horizon, seed, path) + 1) as usize;
                if local.len() <= idx {
                    local.resize(idx + 1, 0);
                }
                local[idx] += 1;
            }
            local
        })
        .reduce(Vec::new, |mut a, b| {
            if a.len() < b.len() {
                a.resize(b.len(), 0);
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        });
    Ok(SupremumSample {
        counts,
        paths,
        horizon,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub u: Vec<usize>,
    pub phi_hat: Vec<f64>,
    pub std_err: Vec<f64>,
    pub paths: u64,
    pub horizon: u64,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_sample(sample: &SupremumSample, u_list: &[usize]) -> Self {
        let n = sample.paths as f64;
        let phi_hat: Vec<f64> = u_list.iter().map(|&u| sample.survival(u)).collect();
        let std_err = phi_hat.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        Self {
            u: u_list.to_vec(),
            phi_hat,
            std_err,
            paths: sample.paths,
            horizon: sample.horizon,
            seed: sample.seed,
        }
    }
}

pub fn mc_survival(d: &ClaimDistribution, kappa: u32, u_list: &[usize], paths: u64, horizon: u64, seed: u64) -> Result<McEstimate> {
    let sample = simulate_maxima(d, kappa, paths, horizon, seed)?;
    Ok(McEstimate::from_sample(&sample, u_list))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    /// Total variation between the empirical law of `M` and that of `(M + X - kappa)^+`.
    pub tv: f64,
    /// `sum_m sqrt(p(1-p)/N)` over the empirical pmf.
    pub noise: f64,
    pub paths: u64,
}

/// Push the empirical law of `M` one step through `m -> (m + X - kappa)^+` and compare.
pub fn stationarity_from_sample(sample: &SupremumSample, d: &ClaimDistribution, kappa: u32) -> StationarityReport {
    let p = sample.supremum_pmf();
    let k = kappa as usize;
    let mut pushed = vec![0.0; p.len()];
    for (m, &w) in p.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        if m <= k {
            pushed[0] += w * d.cdf(k - m);
        }
        for (target, slot) in pushed.iter_mut().enumerate().skip(1) {
            if target + k >= m {
                *slot += w * d.pmf(target + k - m);
            }
        }
    }
    let inside: f64 = pushed.iter().sum();
    let tv = 0.5 * (p.iter().zip(&pushed).map(|(a, b)| (a - b).abs()).sum::<f64>() + (1.0 - inside).max(0.0));
    let n = sample.paths as f64;
    let noise = p.iter().map(|v| (v * (1.0 - v) / n).sqrt()).sum();
    StationarityReport {
        tv,
        noise,
        paths: sample.paths,
    }
}

pub fn mc_stationarity_check(d: &ClaimDistribution, kappa: u32, paths: u64, horizon: u64, seed: u64) -> Result<StationarityReport> {
    let sample = simulate_maxima(d, kappa, paths, horizon, seed)?;
    Ok(stationarity_from_sample(&sample, d, kappa))
}

/// `beta`, `gamma` with `phi(n) = beta_n phi(0) + gamma_n phi(1)` for `kappa = 2`:
/// `x_0 beta_n = beta_{n-2} - sum_{i=1}^{n-1} x_{n-i} beta_i`, same for `gamma`.
pub fn beta_gamma_sequences(d: &ClaimDistribution, n_max: usize) -> (Vec<f64>, Vec<f64>) {
    let x0 = d.pmf(0);
    let step = |seq: &Vec<f64>, n: usize| (seq[n - 2] - (1..n).map(|i| d.pmf(n - i) * seq[i]).sum::<f64>()) / x0;
    let mut beta = vec![1.0, 0.0];
    let mut gamma = vec![0.0, 1.0];
    for n in 2..=n_max {
        let b = step(&beta, n);
        let g = step(&gamma, n);
        beta.push(b);
        gamma.push(g);
    }
    (beta, gamma)
}

/// `(gamma_{n+1} - gamma_n, beta_n - beta_{n+1}) / det[[beta_n, gamma_n], [beta_{n+1}, gamma_{n+1}]]`.
pub fn cramer_ratios(beta: &[f64], gamma: &[f64], n: usize) -> (f64, f64) {
    let det = beta[n] * gamma[n + 1] - gamma[n] * beta[n + 1];
    ((gamma[n + 1] - gamma[n]) / det, (beta[n] - beta[n + 1]) / det)
}

/// The same ratios without forming the sequences: they are `(phi(0), phi(1))` of the
/// recurrence for `u < n` together with `phi(n) = phi(n+1) = 1`, solved directly.
/// The explicit sequences grow geometrically and the determinant cancels, so this
/// is the only way to reach large `n` in double precision.
pub fn truncated_limits(d: &ClaimDistribution, n: usize) -> Result<(f64, f64)> {
    let size = n + 2;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    for u in 0..n {
        a[(u, u)] += 1.0;
        for i in 1..=u + 2 {
            a[(u, i)] -= d.pmf(u + 2 - i);
        }
    }
    a[(n, n)] = 1.0;
    a[(n + 1, n + 1)] = 1.0;
    b[n] = 1.0;
    b[n + 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::SingularSystem { pivot_ratio: 0.0 })?;
    Ok((x[0], x[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaGammaLimits {
    pub phi0: f64,
    pub phi1: f64,
    /// Change of the ratios between truncation points `n - 1` and `n`.
    pub gap: f64,
    pub n: usize,
}

/// Ratio limits for `kappa = 2`, doubling the truncation point up to `n_max`
/// until consecutive ratios differ by less than `1e-8`.
pub fn beta_gamma_limits(d: &ClaimDistribution, n_max: usize) -> Result<BetaGammaLimits> {
    if d.pmf(0) <= 0.0 {
        return Err(Error::Precondition("the two-sequence limits need P(X = 0) > 0".into()));
    }
    if d.mean() >= 2.0 {
        return Err(Error::NetProfitViolation {
            mean: d.mean(),
            kappa: 2,
        });
    }
    let mut n = 32.min(n_max);
    loop {
        let (a0, a1) = truncated_limits(d, n - 1)?;
        let (b0, b1) = truncated_limits(d, n)?;
        let gap = (b0 - a0).abs().max((b1 - a1).abs());
        if gap < 1e-8 {
            return Ok(BetaGammaLimits {
                phi0: b0,
                phi1: b1,
                gap,
                n,
            });
        }
        if n >= n_max {
            return Err(Error::NonConvergence { gap, n });
        }
        n = (2 * n).min(n_max);
    }
}

/// `max_s |G_M(s)(s^kappa - G_X(s)) - sum_i pi_i sum_j x_j (s^kappa - s^{i+j})|`
/// with `G_M` truncated to the supplied coefficients.
pub fn identity_residual(pi_ext: &[f64], d: &ClaimDistribution, kappa: u32, points: &[Complex64]) -> Result<f64> {
    let k = kappa as usize;
    let mut worst: f64 = 0.0;
    for &s in points {
        let gm = pi_ext.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c);
        let sk = s.powu(kappa);
        let lhs = gm * (sk - d.pgf(s)?);
        let mut rhs = Complex64::new(0.0, 0.0);
        for (i, p) in pi_ext.iter().enumerate().take(k) {
            for j in 0..k - i {
                rhs += p * d.pmf(j) * (sk - s.powu((i + j) as u32));
            }
        }
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// `n` points evenly spaced on the circle of the given radius.
pub fn circle_points(n: usize, radius: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(radius, std::f64::consts::TAU * k as f64 / n as f64))
        .collect()
}
