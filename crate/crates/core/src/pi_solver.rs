//! Boundary probabilities `pi_i = P(M = i)`, `i < kappa`, of the walk supremum.
//!
//! Every root `a` of the characteristic equation in the unit disk gives a row
//! `sum_i pi_i sum_{j <= kappa-1-i} F_X(j) a^{i+j} = 0`; a root of multiplicity
//! `l` contributes the derivatives of orders `0..l`. The last row is the mean
//! identity `sum_i pi_i sum_j x_j (kappa - i - j) = kappa - E X`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::dist::{ClaimDistribution, ClaimLaw};
use crate::error::{Error, Result};
use crate::poly;
use crate::roots::RootSet;

const PIVOT_RATIO_MIN: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Root { index: usize, order: usize },
    Moment,
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<Complex64>,
    pub b: DVector<Complex64>,
    pub row_kinds: Vec<RowKind>,
}

impl LinearSystem {
    pub fn uses_derivative_rows(&self) -> bool {
        self.row_kinds
            .iter()
            .any(|k| matches!(k, RowKind::Root { order, .. } if *order > 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiVector {
    pub pi: Vec<f64>,
    pub residual: f64,
    pub imag_leak: f64,
}

fn falling(n: usize, m: usize) -> f64 {
    (0..m).map(|k| (n - k) as f64).product()
}

/// Row of the system for a point `s`, differentiated `order` times:
/// column `i` is `d^order/ds^order sum_{j=0}^{kappa-1-i} F_X(j) s^{i+j}`.
pub fn root_row(d: &ClaimDistribution, kappa: u32, s: Complex64, order: usize) -> Vec<Complex64> {
    let k = kappa as usize;
    (0..k)
        .map(|i| {
            (0..k - i)
                .filter(|j| i + j >= order)
                .map(|j| d.cdf(j) * falling(i + j, order) * s.powu((i + j - order) as u32))
                .sum()
        })
        .collect()
}

/// `sum_{j <= kappa-1-i} x_j (kappa - i - j)` for each column `i`.
pub fn moment_row(d: &ClaimDistribution, kappa: u32) -> Vec<f64> {
    let k = kappa as usize;
    (0..k)
        .map(|i| (0..k - i).map(|j| d.pmf(j) * (k - i - j) as f64).sum())
        .collect()
}

pub fn assemble_system(d: &ClaimDistribution, kappa: u32, roots: &RootSet) -> Result<LinearSystem> {
    let k = kappa as usize;
    if roots.total_multiplicity() + 1 != k {
        return Err(Error::Precondition(format!(
            "{} roots supplied for a system of size {k}",
            roots.total_multiplicity()
        )));
    }
    let mut a = DMatrix::zeros(k, k);
    let mut row_kinds = Vec::with_capacity(k);
    let mut r = 0;
    for (index, root) in roots.roots.iter().enumerate() {
        for order in 0..root.multiplicity {
            for (c, v) in root_row(d, kappa, root.value(), order).into_iter().enumerate() {
                a[(r, c)] = v;
            }
            row_kinds.push(RowKind::Root { index, order });
            r += 1;
        }
    }
    for (c, v) in moment_row(d, kappa).into_iter().enumerate() {
        a[(r, c)] = Complex64::from(v);
    }
    row_kinds.push(RowKind::Moment);
    let mut b = DVector::zeros(k);
    b[k - 1] = Complex64::from(kappa as f64 - d.mean());
    Ok(LinearSystem { a, b, row_kinds })
}

fn realify(z: &[Complex64], tol_real: f64) -> Result<(Vec<f64>, f64)> {
    let leak = z.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if leak > tol_real {
        return Err(Error::ImagLeak { leak, tol: tol_real });
    }
    Ok((z.iter().map(|v| v.re).collect(), leak))
}

fn residual(sys: &LinearSystem, pi: &[f64]) -> f64 {
    let x = DVector::from_iterator(pi.len(), pi.iter().map(|&v| Complex64::from(v)));
    (&sys.a * x - &sys.b).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn check_signs(pi: &[f64], tol_real: f64) -> Result<()> {
    match pi.iter().position(|&v| v < -tol_real) {
        Some(index) => Err(Error::NegativePi {
            index,
            value: pi[index],
        }),
        None => Ok(()),
    }
}

/// LU with partial pivoting; the realness of the solution is checked, not assumed.
pub fn solve_pi(sys: &LinearSystem, tol_real: f64) -> Result<PiVector> {
    let lu = sys.a.clone().lu();
    let diag: Vec<f64> = lu.u().diagonal().iter().map(|v| v.norm()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let pivot_ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(pivot_ratio > PIVOT_RATIO_MIN) {
        return Err(Error::SingularSystem { pivot_ratio });
    }
    let z = lu.solve(&sys.b).ok_or(Error::SingularSystem { pivot_ratio })?;
    let (pi, imag_leak) = realify(z.as_slice(), tol_real)?;
    check_signs(&pi, tol_real)?;
    Ok(PiVector {
        residual: residual(sys, &pi),
        pi,
        imag_leak,
    })
}

/// Elementary symmetric polynomials `e_0..e_n` of the given values.
pub fn elementary_symmetric(values: &[Complex64]) -> Vec<Complex64> {
    let mut e = vec![Complex64::new(0.0, 0.0); values.len() + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for (n, &v) in values.iter().enumerate() {
        for k in (1..=n + 1).rev() {
            e[k] = e[k] + e[k - 1] * v;
        }
    }
    e
}

/// Unscaled closed form: `pi~_k = (-1)^k e_{kappa-1-k} / (x_0 prod(a_j - 1))
/// - (1/x_0) sum_{i<k} F_X(k-i) pi~_i`, with `pi = (kappa - E X) pi~`.
pub fn pi_closed_form(d: &ClaimDistribution, kappa: u32, roots: &RootSet, tol_real: f64) -> Result<PiVector> {
    if !roots.is_simple() {
        return Err(Error::MultipleRootsUnsupported);
    }
    let k = kappa as usize;
    let alphas = roots.expanded();
    let e = elementary_symmetric(&alphas);
    let prod: Complex64 = alphas.iter().map(|a| a - 1.0).product();
    let x0 = d.pmf(0);
    let mut tilde: Vec<Complex64> = Vec::with_capacity(k);
    for n in 0..k {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let back: Complex64 = (0..n).map(|i| tilde[i] * d.cdf(n - i)).sum();
        tilde.push(sign * e[k - 1 - n] / (x0 * prod) - back / x0);
    }
    let scale = kappa as f64 - d.mean();
    let z: Vec<Complex64> = tilde.iter().map(|t| t * scale).collect();
    let (pi, imag_leak) = realify(&z, tol_real)?;
    check_signs(&pi, tol_real)?;
    let sys = assemble_system(d, kappa, roots)?;
    Ok(PiVector {
        residual: residual(&sys, &pi),
        pi,
        imag_leak,
    })
}

/// `det A = x_0^kappa prod(a_j - 1) prod_{i<j}(a_j - a_i) / (-1)^(kappa+1)`.
pub fn determinant_formula(roots: &RootSet, x0: f64, kappa: u32) -> Result<Complex64> {
    if !roots.is_simple() {
        return Err(Error::MultipleRootsUnsupported);
    }
    let a = roots.expanded();
    let mut value = Complex64::from(x0.powi(kappa as i32));
    for (j, aj) in a.iter().enumerate() {
        value *= aj - 1.0;
        for ai in &a[..j] {
            value *= aj - ai;
        }
    }
    if kappa.is_multiple_of(2) {
        value = -value;
    }
    Ok(value)
}

/// Relative gap between the numerical determinant and the product formula.
pub fn determinant_identity_check(sys: &LinearSystem, roots: &RootSet, x0: f64) -> Result<f64> {
    let kappa = sys.a.nrows() as u32;
    let formula = determinant_formula(roots, x0, kappa)?;
    let det = sys.a.clone().determinant();
    Ok((det - formula).norm() / formula.norm())
}

/// `s^kappa - G_X(s)` times the PGF denominator, and `sum_i pi_i sum_j x_j (s^kappa - s^{i+j})`
/// times the same factor: `G_M = numerator / denominator` as polynomials.
fn supremum_pgf_parts(pi: &[f64], d: &ClaimDistribution, kappa: u32) -> (Vec<f64>, Vec<f64>) {
    let k = kappa as usize;
    let mut rhs = vec![0.0; k + 1];
    for (i, p) in pi.iter().enumerate().take(k) {
        for j in 0..k - i {
            let w = p * d.pmf(j);
            rhs[k] += w;
            rhs[i + j] -= w;
        }
    }
    match d.law() {
        ClaimLaw::Finite { pmf } => {
            let mut den = vec![0.0; k.max(pmf.len() - 1) + 1];
            den[k] = 1.0;
            for (i, x) in pmf.iter().enumerate() {
                den[i] -= x;
            }
            (rhs, den)
        }
        ClaimLaw::Geometric { p } => {
            let factor = [1.0, -(1.0 - p)];
            let mut den = vec![0.0; k + 2];
            den[0] = -p;
            den[k] += 1.0;
            den[k + 1] = -(1.0 - p);
            (poly::mul(&rhs, &factor), den)
        }
    }
}

/// Real polynomial `(s - 1) prod (s - a_j)` over the roots with multiplicity.
pub fn disk_factor(roots: &RootSet) -> Vec<f64> {
    let mut c = vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
    for a in roots.expanded() {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i + 1] += v;
            next[i] -= v * a;
        }
        c = next;
    }
    c.iter().map(|v| v.re).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiExtension {
    pub pi: Vec<f64>,
    /// Largest remainder left when dividing out the in-disk roots.
    pub drift: f64,
}

/// `pi_0..pi_{n_max}` from `G_M = N/D` after cancelling the factor `(s-1) prod (s - a_j)`
/// shared by `N` and `D`; the remaining denominator has no zeros in the closed disk,
/// so the power-series division is stable.
pub fn extend_pi(pi: &PiVector, d: &ClaimDistribution, kappa: u32, roots: &RootSet, n_max: usize, tol_real: f64) -> Result<PiExtension> {
    if d.pmf(0) <= 0.0 {
        return Err(Error::Precondition("extending pi needs P(X = 0) > 0".into()));
    }
    let (num, den) = supremum_pgf_parts(&pi.pi, d, kappa);
    let factor = disk_factor(roots);
    let (num_q, num_r) = poly::div_rem(&num, &factor);
    let (den_q, den_r) = poly::div_rem(&den, &factor);
    let scale_n = num.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let scale_d = den.iter().map(|v| v.abs()).sum::<f64>();
    let drift = num_r
        .iter()
        .map(|v| v.abs() / scale_n)
        .chain(den_r.iter().map(|v| v.abs() / scale_d))
        .fold(0.0, f64::max);
    let out = poly::series_div(&num_q, &den_q, n_max + 1);
    check_signs(&out, tol_real)?;
    Ok(PiExtension { pi: out, drift })
}

/// Literal recurrence: `x_0 pi_kappa = pi_0 - sum_{i<kappa} pi_i F_X(kappa-i)` and, for
/// `n > kappa`, `x_0 pi_n = pi_{n-kappa} - sum_{i<n} pi_i x_{n-i}`. Errors grow like `x_0^-n`.
pub fn extend_pi_recurrence(pi: &PiVector, d: &ClaimDistribution, kappa: u32, n_max: usize) -> Vec<f64> {
    let k = kappa as usize;
    let x0 = d.pmf(0);
    let mut out: Vec<f64> = pi.pi.iter().copied().take(n_max + 1).collect();
    for n in k..=n_max {
        let v = if n == k {
            out[0] - (0..k).map(|i| out[i] * d.cdf(k - i)).sum::<f64>()
        } else {
            out[n - k] - (0..n).map(|i| out[i] * d.pmf(n - i)).sum::<f64>()
        };
        out.push(v / x0);
    }
    out
}
