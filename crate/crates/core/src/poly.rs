//! Dense real polynomials and power series, coefficients lowest degree first.

use num_complex::Complex64;

pub fn eval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// `sum |c_i| |s|^i`, the scale against which a residual at `s` is judged.
pub fn eval_abs(coeffs: &[f64], s: Complex64) -> f64 {
    let r = s.norm();
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.abs())
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

pub fn nth_derivative(coeffs: &[f64], n: usize) -> Vec<f64> {
    (0..n).fold(coeffs.to_vec(), |c, _| derivative(&c))
}

pub fn degree(coeffs: &[f64]) -> usize {
    coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0)
}

pub fn trim(mut coeffs: Vec<f64>) -> Vec<f64> {
    coeffs.truncate(degree(&coeffs) + 1);
    coeffs
}

/// Long division from the leading coefficient down. Stable when the roots of
/// `den` lie in the closed unit disk.
pub fn div_rem(num: &[f64], den: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dd = degree(den);
    let lead = den[dd];
    let mut rem = num.to_vec();
    let nd = degree(num);
    if nd < dd {
        return (vec![0.0], rem);
    }
    let mut quot = vec![0.0; nd - dd + 1];
    for k in (0..=nd - dd).rev() {
        let c = rem[k + dd] / lead;
        quot[k] = c;
        for (j, d) in den[..=dd].iter().enumerate() {
            rem[k + j] -= c * d;
        }
    }
    rem.truncate(dd.max(1));
    (quot, rem)
}

/// First `n` coefficients of the power series `num / den`; requires `den[0] != 0`.
pub fn series_div(num: &[f64], den: &[f64], n: usize) -> Vec<f64> {
    let d0 = den[0];
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = num.get(k).copied().unwrap_or(0.0);
        for (j, d) in den.iter().enumerate().skip(1).take(k) {
            acc -= d * out[k - j];
        }
        out.push(acc / d0);
    }
    out
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn division_recovers_factors() {
        // (s - 1)(s + 0.5)(2s + 3)
        let a = [-1.0, 1.0];
        let b = [0.5, 1.0];
        let c = [3.0, 2.0];
        let p = mul(&mul(&a, &b), &c);
        let (q, r) = div_rem(&p, &mul(&a, &b));
        assert!(r.iter().all(|v| v.abs() < 1e-15));
        assert!((q[0] - 3.0).abs() < 1e-15 && (q[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn geometric_series() {
        let s = series_div(&[1.0], &[1.0, -0.5], 6);
        for (k, v) in s.iter().enumerate() {
            assert!((v - 0.5f64.powi(k as i32)).abs() < 1e-16);
        }
    }

    #[test]
    fn derivatives() {
        let p = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(derivative(&p), vec![2.0, 6.0, 12.0]);
        assert_eq!(nth_derivative(&p, 2), vec![6.0, 24.0]);
        assert_eq!(eval(&p, Complex64::new(2.0, 0.0)), Complex64::new(49.0, 0.0));
        assert_eq!(degree(&[1.0, 0.0, 2.0, 0.0]), 2);
    }
}
