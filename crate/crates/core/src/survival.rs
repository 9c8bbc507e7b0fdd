//! Survival probabilities: finite horizon by dynamic programming, infinite
//! horizon from the boundary probabilities, and the generating function
//! `Xi(s) = sum_u phi(u+1) s^u`.

use num_complex::Complex64;
use serde::Serialize;

use crate::dist::ClaimDistribution;
use crate::error::{Error, Result};
use crate::pi_solver::{elementary_symmetric, extend_pi, PiVector};
use crate::roots::{build_characteristic, find_unit_disk_roots, RootSet};

const POLE_GAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Recurrence,
    ClosedForm,
    PiSum,
    Series,
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalTable {
    /// `phi(0)..phi(U)`.
    pub phi: Vec<f64>,
    pub kappa: u32,
    pub method: Method,
}

impl SurvivalTable {
    /// Constant premium equal to the only possible claim: the surplus never moves.
    pub fn trivial(kappa: u32, u_max: usize) -> Self {
        let mut phi = vec![1.0; u_max + 1];
        phi[0] = 0.0;
        Self {
            phi,
            kappa,
            method: Method::Trivial,
        }
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.phi.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    /// Largest violation of `phi(u) = sum_{i=1}^{u+kappa} x_{u+kappa-i} phi(i)` over the table.
    pub fn recurrence_defect(&self, d: &ClaimDistribution) -> f64 {
        let k = self.kappa as usize;
        let n = self.phi.len();
        (0..n.saturating_sub(k))
            .map(|u| {
                let rhs: f64 = (1..=u + k).map(|i| d.pmf(u + k - i) * self.phi[i]).sum();
                (self.phi[u] - rhs).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `phi(u, T)` for `u = 0..=U`, `T = 1..=T_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteTimeGrid {
    /// `phi_t[T - 1][u]`.
    pub phi_t: Vec<Vec<f64>>,
    /// Bound on the probability dropped by cutting infinite claim support.
    pub truncation: f64,
}

impl FiniteTimeGrid {
    pub fn get(&self, u: usize, t: usize) -> f64 {
        self.phi_t[t - 1][u]
    }

    pub fn horizon(&self) -> usize {
        self.phi_t.len()
    }
}

/// Conditioning on the first claim `X_1 = j`:
/// `phi(u, 1) = F_X(u + kappa - 1)`, `phi(u, T) = sum_{j=0}^{u+kappa-1} x_j phi(u + kappa - j, T - 1)`.
/// Layer `T` only needs surplus levels up to `U + kappa (T_max - T)`.
pub fn finite_time_grid(d: &ClaimDistribution, kappa: u32, u_max: usize, t_max: usize) -> FiniteTimeGrid {
    let k = kappa as usize;
    let support = d.effective_support(d.trunc_eps() / (t_max.max(1) as f64));
    let truncation = if d.is_finite() { 0.0 } else { t_max as f64 * d.tail(support) };
    let x: Vec<f64> = (0..=support).map(|j| d.pmf(j)).collect();
    let width = |t: usize| u_max + k * (t_max - t) + 1;

    let mut layers = Vec::with_capacity(t_max);
    let mut prev: Vec<f64> = (0..width(1)).map(|u| d.cdf(u + k - 1)).collect();
    for t in 2..=t_max + 1 {
        let cur = if t <= t_max {
            (0..width(t))
                .map(|u| {
                    let top = (u + k - 1).min(support);
                    (0..=top).map(|j| x[j] * prev[u + k - j]).sum()
                })
                .collect()
        } else {
            Vec::new()
        };
        prev.truncate(u_max + 1);
        layers.push(std::mem::replace(&mut prev, cur));
    }
    FiniteTimeGrid {
        phi_t: layers,
        truncation,
    }
}

pub fn finite_time_survival(d: &ClaimDistribution, kappa: u32, u: usize, t: usize) -> f64 {
    assert!(t >= 1, "horizon must be at least one period");
    finite_time_grid(d, kappa, u, t).get(u, t)
}

fn check_range(u: usize, value: f64, tol: f64) -> Result<()> {
    if value < -tol || value > 1.0 + tol || !value.is_finite() {
        Err(Error::RecurrenceBlowup { u, value })
    } else {
        Ok(())
    }
}

/// `phi(0) = sum_{i<kappa} pi_i F_X(kappa-1-i)`.
pub fn phi_zero(pi: &[f64], d: &ClaimDistribution, kappa: u32) -> f64 {
    let k = kappa as usize;
    pi.iter().take(k).enumerate().map(|(i, p)| p * d.cdf(k - 1 - i)).sum()
}

/// `phi(1..=kappa)` from partial sums of `pi`, then the forward recurrence
/// `x_0 phi(u+kappa) = phi(u) - sum_{i=1}^{u+kappa-1} x_{u+kappa-i} phi(i)`.
pub fn ultimate_from_pi(pi: &PiVector, d: &ClaimDistribution, kappa: u32, u_max: usize, tol: f64) -> Result<SurvivalTable> {
    let k = kappa as usize;
    let x0 = d.pmf(0);
    let mut phi = Vec::with_capacity(u_max.max(k) + 1);
    phi.push(phi_zero(&pi.pi, d, kappa));
    let mut acc = 0.0;
    for p in pi.pi.iter().take(k) {
        acc += p;
        phi.push(acc);
    }
    for (u, v) in phi.iter().enumerate() {
        check_range(u, *v, tol)?;
    }
    let mut u = 1;
    while phi.len() <= u_max {
        let n = u + k;
        let s: f64 = (1..n).map(|i| d.pmf(n - i) * phi[i]).sum();
        let v = (phi[u] - s) / x0;
        check_range(n, v, tol)?;
        phi.push(v);
        u += 1;
    }
    phi.truncate(u_max + 1);
    Ok(SurvivalTable {
        phi,
        kappa,
        method: Method::Recurrence,
    })
}

/// Growth of a unit perturbation of `phi(1..=kappa)` under the forward recurrence,
/// `A(u)` for `u = 0..=u_max`. Rounding in the recurrence table is about `eps u A(u)`.
pub fn recurrence_amplification(d: &ClaimDistribution, kappa: u32, u_max: usize) -> Vec<f64> {
    let k = kappa as usize;
    let x0 = d.pmf(0);
    let mut amp = vec![1.0; (u_max + 1).max(k + 1)];
    for start in 1..=k {
        let mut e = vec![0.0; k + 1];
        e[start] = 1.0;
        let mut u = 1;
        while e.len() <= u_max {
            let n = u + k;
            let s: f64 = (1..n).map(|i| d.pmf(n - i) * e[i]).sum();
            e.push((e[u] - s) / x0);
            u += 1;
        }
        for (a, v) in amp.iter_mut().zip(&e) {
            *a = f64::max(*a, v.abs());
        }
    }
    amp.truncate(u_max + 1);
    amp
}

/// Table from the stably extended `pi`: `phi(u+1) = sum_{i<=u} pi_i`.
pub fn table_from_series(pi: &PiVector, d: &ClaimDistribution, kappa: u32, roots: &RootSet, u_max: usize, tol: f64) -> Result<SurvivalTable> {
    let coeffs = xi_coefficients(pi, d, kappa, roots, u_max.max(1) - 1, tol)?;
    let mut phi = Vec::with_capacity(u_max + 1);
    phi.push(phi_zero(&pi.pi, d, kappa));
    phi.extend(coeffs.phi.iter().take(u_max));
    Ok(SurvivalTable {
        phi,
        kappa,
        method: Method::Series,
    })
}

/// `phi(0..=kappa)` from the roots alone (simple roots only).
pub fn initial_values_closed_form(roots: &RootSet, d: &ClaimDistribution, kappa: u32, tol_real: f64) -> Result<Vec<f64>> {
    if !roots.is_simple() {
        return Err(Error::MultipleRootsUnsupported);
    }
    let k = kappa as usize;
    let a = roots.expanded();
    let e = elementary_symmetric(&a);
    let inv_prod = a.iter().map(|v| v - 1.0).product::<Complex64>().inv();
    let x0 = d.pmf(0);
    let sign0 = if (k + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut tilde = vec![sign0 * inv_prod];
    let mut alternating = Complex64::new(0.0, 0.0);
    for u in 1..=k {
        let sign = if (u - 1) % 2 == 0 { 1.0 } else { -1.0 };
        alternating += sign * e[k - u];
        let back: Complex64 = (1..u).map(|i| tilde[i] * d.cdf(u - i)).sum();
        tilde.push(-back / x0 + inv_prod * alternating / x0);
    }
    let scale = kappa as f64 - d.mean();
    let leak = tilde.iter().map(|v| v.im.abs()).fold(0.0, f64::max) * scale;
    if leak > tol_real {
        return Err(Error::ImagLeak { leak, tol: tol_real });
    }
    Ok(tilde.iter().map(|v| v.re * scale).collect())
}

/// `Xi(s) = sum_i pi_i sum_{j<=kappa-1-i} F_X(j) s^{i+j} / (G_X(s) - s^kappa)`.
pub fn xi_eval(pi: &PiVector, d: &ClaimDistribution, kappa: u32, s: Complex64) -> Result<Complex64> {
    let k = kappa as usize;
    let gap = d.pgf(s)? - s.powu(kappa);
    if gap.norm() <= POLE_GAP {
        return Err(Error::NearPole { gap: gap.norm() });
    }
    let mut num = Complex64::new(0.0, 0.0);
    for (i, p) in pi.pi.iter().enumerate().take(k) {
        for j in 0..k - i {
            num += p * d.cdf(j) * s.powu((i + j) as u32);
        }
    }
    Ok(num / gap)
}

/// Closed forms of `Xi` for `kappa = 1` and `kappa = 2`.
pub fn xi_special(d: &ClaimDistribution, kappa: u32, s: Complex64) -> Result<Complex64> {
    let guard = |den: Complex64| {
        if den.norm() <= POLE_GAP {
            Err(Error::NearPole { gap: den.norm() })
        } else {
            Ok(den)
        }
    };
    match kappa {
        1 => Ok((1.0 - d.mean()) / guard(d.pgf(s)? - s)?),
        2 if d.pmf(0) > 0.0 => {
            let roots = find_unit_disk_roots(&build_characteristic(d, 2)?, &Default::default())?;
            let a = roots.roots[0].value();
            let den = guard(d.pgf(s)? - s * s)?;
            Ok((2.0 - d.mean()) / (a - 1.0) * (a - s) / den)
        }
        2 => {
            // G_X(s) / s with the zero mass removed
            let shifted = d.shifted_down(1)?;
            Ok((2.0 - d.mean()) / guard(shifted.pgf(s)? - s)?)
        }
        k => Err(Error::UnsupportedKappa(k)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiSeries {
    /// `phi(1)..=phi(U+1)`.
    pub phi: Vec<f64>,
    /// Remainder left by the factor cancellation; large values mean the roots were inaccurate.
    pub drift: f64,
}

/// Taylor coefficients of `Xi(s) = G_M(s) / (1 - s)`, computed with `kappa` guard terms.
pub fn xi_coefficients(pi: &PiVector, d: &ClaimDistribution, kappa: u32, roots: &RootSet, u_max: usize, tol: f64) -> Result<XiSeries> {
    let ext = extend_pi(pi, d, kappa, roots, u_max + kappa as usize, tol)?;
    let mut acc = 0.0;
    let phi: Vec<f64> = ext
        .pi
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    for (u, v) in phi.iter().enumerate() {
        check_range(u + 1, *v, tol)?;
    }
    Ok(XiSeries {
        phi: phi[..=u_max].to_vec(),
        drift: ext.drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;
    use crate::pi_solver::{assemble_system, solve_pi};
    use crate::roots::reduce_support;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TOL: f64 = 1e-8;

    struct Solved {
        d: ClaimDistribution,
        kappa: u32,
        roots: RootSet,
        pi: PiVector,
    }

    fn solve(d: ClaimDistribution, kappa: u32) -> Solved {
        let red = reduce_support(&d, kappa).unwrap();
        let roots = find_unit_disk_roots(&red.characteristic().unwrap(), &Tolerances::default()).unwrap();
        let pi = solve_pi(&assemble_system(&red.dist, red.kappa, &roots).unwrap(), TOL).unwrap();
        Solved {
            d: red.dist,
            kappa: red.kappa,
            roots,
            pi,
        }
    }

    #[test]
    fn example4_table() {
        let m = solve(ClaimDistribution::geometric(101.0 / 300.0).unwrap(), 3);
        let t = ultimate_from_pi(&m.pi, &m.d, 3, 30, TOL).unwrap();
        let want = [0.480212, 0.582072, 0.663971, 0.729821];
        for (a, b) in t.phi.iter().zip(want) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let closed = initial_values_closed_form(&m.roots, &m.d, 3, TOL).unwrap();
        for (a, b) in closed.iter().zip(&t.phi) {
            assert!((a - b).abs() < 1e-12);
        }
        let series = table_from_series(&m.pi, &m.d, 3, &m.roots, 30, TOL).unwrap();
        for (a, b) in series.phi.iter().zip(&t.phi) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(t.is_monotone(0.0));
        assert!(t.recurrence_defect(&m.d) < 1e-12);
        let phi0 = (3.0 - m.d.mean()) / m.roots.expanded().iter().map(|a| 1.0 - a).product::<Complex64>();
        assert_relative_eq!(phi0.re, t.phi[0], epsilon = 1e-12);
    }

    #[test]
    fn example2_values() {
        let p: f64 = 101.0 / 300.0;
        let m = solve(ClaimDistribution::geometric(p).unwrap(), 2);
        let t = ultimate_from_pi(&m.pi, &m.d, 2, 10, TOL).unwrap();
        let root = 90597f64.sqrt();
        assert_relative_eq!(t.phi[0], (root - 297.0) / 202.0, epsilon = 1e-12);
        assert_relative_eq!(t.phi[1], (45450.0 - 150.0 * root) / 10201.0, epsilon = 1e-12);
        let closed = initial_values_closed_form(&m.roots, &m.d, 2, TOL).unwrap();
        assert_relative_eq!(closed[0], (3.0 * p - 2.0 + (4.0 * p - 3.0 * p * p).sqrt()) / (2.0 * p), epsilon = 1e-12);
    }

    #[test]
    fn example5_table_and_series() {
        let m = solve(ClaimDistribution::finite(vec![0.128, 0.576, 0.264, 0.032]).unwrap(), 3);
        // the forward recurrence amplifies rounding by about 1/x_0 = 7.8 per step
        let t = ultimate_from_pi(&m.pi, &m.d, 3, 10, TOL).unwrap();
        assert_relative_eq!(t.phi[0], 0.968, epsilon = 1e-12);
        assert!(t.phi[1..].iter().all(|v| (v - 1.0).abs() < 1e-9));
        let xi = xi_coefficients(&m.pi, &m.d, 3, &m.roots, 30, TOL).unwrap();
        assert!(xi.phi.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let v = xi_eval(&m.pi, &m.d, 3, Complex64::from(0.3)).unwrap();
        assert_relative_eq!(v.re, 1.0 / 0.7, epsilon = 1e-9);
        assert!(matches!(
            initial_values_closed_form(&m.roots, &m.d, 3, TOL),
            Err(Error::MultipleRootsUnsupported)
        ));
    }

    #[test]
    fn bernoulli_kappa_one() {
        let p = 0.35;
        let m = solve(ClaimDistribution::bernoulli(p).unwrap(), 1);
        let t = ultimate_from_pi(&m.pi, &m.d, 1, 50, TOL).unwrap();
        assert_relative_eq!(t.phi[0], 1.0 - p, epsilon = 1e-15);
        assert!(t.phi[1..].iter().all(|&v| v == 1.0));
        let xi = xi_eval(&m.pi, &m.d, 1, Complex64::from(0.5)).unwrap();
        assert_relative_eq!(xi.re, 2.0, epsilon = 1e-15);
        assert_relative_eq!(xi_special(&m.d, 1, Complex64::from(0.0)).unwrap().re, 1.0, epsilon = 1e-15);
        let closed = initial_values_closed_form(&RootSet::default(), &m.d, 1, TOL).unwrap();
        assert_relative_eq!(closed[0], 1.0 - p, epsilon = 1e-15);
        assert_relative_eq!(closed[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn xi_at_zero_is_phi_one() {
        let m = solve(ClaimDistribution::geometric(101.0 / 300.0).unwrap(), 2);
        let v = xi_eval(&m.pi, &m.d, 2, Complex64::from(0.0)).unwrap();
        assert_relative_eq!(v.re, m.pi.pi[0], epsilon = 1e-15);
        let special = xi_special(&m.d, 2, Complex64::from(0.0)).unwrap();
        assert_relative_eq!(special.re, 0.0295066, epsilon = 1e-7);
    }

    #[test]
    fn xi_special_routes() {
        let s = Complex64::new(0.2, -0.3);
        let m = solve(ClaimDistribution::geometric(0.45).unwrap(), 2);
        let a = xi_eval(&m.pi, &m.d, 2, s).unwrap();
        let b = xi_special(&m.d, 2, s).unwrap();
        assert!((a - b).norm() < 1e-12);

        let d = ClaimDistribution::finite(vec![0.0, 0.6, 0.4]).unwrap();
        let v = xi_special(&d, 2, Complex64::from(0.0)).unwrap();
        assert_relative_eq!(v.re, 1.0, epsilon = 1e-15);
        let m = solve(d.clone(), 2);
        let w = xi_eval(&m.pi, &m.d, m.kappa, s).unwrap();
        assert!((w - xi_special(&d, 2, s).unwrap()).norm() < 1e-12);

        assert!(matches!(xi_special(&d, 3, s), Err(Error::UnsupportedKappa(3))));
    }

    #[test]
    fn xi_rejects_poles() {
        let m = solve(ClaimDistribution::bernoulli(0.3).unwrap(), 1);
        assert!(matches!(xi_eval(&m.pi, &m.d, 1, Complex64::from(1.0)), Err(Error::NearPole { .. })));
    }

    #[test]
    fn finite_time_basics() {
        let p: f64 = 101.0 / 300.0;
        let d = ClaimDistribution::geometric(p).unwrap();
        assert_relative_eq!(finite_time_survival(&d, 2, 0, 1), p * (2.0 - p), epsilon = 1e-15);
        let b = ClaimDistribution::bernoulli(0.4).unwrap();
        for t in 1..6 {
            assert_relative_eq!(finite_time_survival(&b, 1, 1, t), 1.0, epsilon = 1e-15);
        }
        let f = ClaimDistribution::finite(vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(finite_time_survival(&f, 2, 1, 1), 1.0);
    }

    #[test]
    fn finite_time_monotone_and_above_limit() {
        let m = solve(ClaimDistribution::geometric(0.45).unwrap(), 2);
        let t = ultimate_from_pi(&m.pi, &m.d, 2, 10, TOL).unwrap();
        let grid = finite_time_grid(&m.d, 2, 10, 400);
        for u in 0..=10 {
            for tt in 2..=400 {
                assert!(grid.get(u, tt) <= grid.get(u, tt - 1) + 1e-15);
            }
            assert!(grid.get(u, 400) >= t.phi[u] - 1e-12);
            assert!(grid.get(u, 400) - t.phi[u] < 1e-6);
        }
    }

    #[test]
    fn finite_time_matches_enumeration() {
        // all claim sequences of length <= 3 over a small support
        let d = ClaimDistribution::finite(vec![0.3, 0.25, 0.2, 0.15, 0.1]).unwrap();
        let kappa = 2;
        for u in 0..4usize {
            for t in 1..=3usize {
                let mut total = 0.0;
                let mut stack = vec![(0usize, u as i64, 1.0)];
                while let Some((n, w, prob)) = stack.pop() {
                    if n == t {
                        total += prob;
                        continue;
                    }
                    for j in 0..=4 {
                        let next = w + kappa as i64 - j as i64;
                        if next > 0 {
                            stack.push((n + 1, next, prob * d.pmf(j)));
                        }
                    }
                }
                assert_relative_eq!(finite_time_survival(&d, kappa, u, t), total, epsilon = 1e-14);
            }
        }
    }

    fn random_model() -> impl Strategy<Value = (Vec<f64>, u32)> {
        (1u32..=4, prop::collection::vec(0.1f64..1.0, 2..=6)).prop_filter_map("net profit", |(kappa, w)| {
            let total: f64 = w.iter().sum();
            let pmf: Vec<f64> = w.iter().map(|v| v / total).collect();
            let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
            (mean < kappa as f64 - 0.1).then_some((pmf, kappa))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn routes_agree((pmf, kappa) in random_model()) {
            let m = solve(ClaimDistribution::finite(pmf).unwrap(), kappa);
            let u_max = 12;
            let rec = ultimate_from_pi(&m.pi, &m.d, m.kappa, u_max, 1e-6).unwrap();
            let series = table_from_series(&m.pi, &m.d, m.kappa, &m.roots, u_max, TOL).unwrap();
            for (a, b) in rec.phi.iter().zip(&series.phi) {
                prop_assert!((a - b).abs() < 1e-8);
            }
            prop_assert!(series.is_monotone(1e-12));
            let u0: f64 = (1..=m.kappa as usize).map(|i| m.d.pmf(m.kappa as usize - i) * rec.phi[i]).sum();
            prop_assert!((u0 - rec.phi[0]).abs() < 1e-12);
            if m.roots.is_simple() {
                let closed = initial_values_closed_form(&m.roots, &m.d, m.kappa, TOL).unwrap();
                for (a, b) in closed.iter().zip(&rec.phi) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
