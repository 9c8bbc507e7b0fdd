//! Roots of `s^kappa = G_X(s)` in the closed unit disk.
//!
//! The equation is cleared of denominators into a real polynomial `Q`, the
//! always-present root `s = 1` is divided out, and the remaining roots are
//! located simultaneously with the Aberth-Ehrlich iteration. Roots inside the
//! disk are then grouped into clusters (one cluster per multiple root) and
//! polished with Newton's method on the derivative whose root is simple.

use num_complex::Complex64;
use serde::Serialize;

use crate::config::Tolerances;
use crate::dist::{ClaimDistribution, ClaimLaw};
use crate::error::{Error, Result};
use crate::poly;

const ABERTH_MAX_ITER: usize = 500;

/// The model after cancelling the common power of `s` (minimal claim `shift`).
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub dist: ClaimDistribution,
    pub kappa: u32,
    pub shift: usize,
}

impl Reduction {
    pub fn original_kappa(&self) -> u32 {
        self.kappa + self.shift as u32
    }

    /// Characteristic polynomial of the reduced model, tagged with the shift.
    pub fn characteristic(&self) -> Result<CharPolynomial> {
        let mut q = build_characteristic(&self.dist, self.kappa)?;
        q.kappa = self.original_kappa();
        q.reduction_shift = self.shift;
        Ok(q)
    }
}

/// Replace `(X, kappa)` by `(X - m, kappa - m)` where `m` is the smallest claim.
/// Survival probabilities are unchanged because `kappa n - sum X_i` is.
pub fn reduce_support(d: &ClaimDistribution, kappa: u32) -> Result<Reduction> {
    let shift = d.min_support();
    if shift >= kappa as usize {
        return Err(Error::Reduction { shift, kappa });
    }
    Ok(Reduction {
        dist: d.shifted_down(shift)?,
        kappa: kappa - shift as u32,
        shift,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharPolynomial {
    /// Coefficients of `Q`, lowest degree first.
    pub coeffs: Vec<f64>,
    pub kappa: u32,
    pub reduction_shift: usize,
    pub trunc_tail: f64,
}

impl CharPolynomial {
    pub fn kappa_eff(&self) -> u32 {
        self.kappa - self.reduction_shift as u32
    }

    pub fn degree(&self) -> usize {
        poly::degree(&self.coeffs)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.coeffs, s)
    }

    /// `sum |c_i|`.
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

/// `Q(s) = s^kappa - G_X(s)` for a finite pmf; `s^kappa (1 - (1-p) s) - p` for the
/// geometric law (both sides multiplied by the PGF denominator).
pub fn build_characteristic(d: &ClaimDistribution, kappa: u32) -> Result<CharPolynomial> {
    if d.pmf(0) <= 0.0 {
        return Err(Error::Precondition(
            "characteristic polynomial needs P(X = 0) > 0; reduce the support first".into(),
        ));
    }
    let k = kappa as usize;
    let coeffs = match d.law() {
        ClaimLaw::Finite { pmf } => {
            let mut c = vec![0.0; k.max(pmf.len() - 1) + 1];
            c[k] = 1.0;
            for (i, x) in pmf.iter().enumerate() {
                c[i] -= x;
            }
            poly::trim(c)
        }
        ClaimLaw::Geometric { p } => {
            let mut c = vec![0.0; k + 2];
            c[0] = -p;
            c[k] += 1.0;
            c[k + 1] = -(1.0 - p);
            c
        }
    };
    Ok(CharPolynomial {
        coeffs,
        kappa,
        reduction_shift: 0,
        trunc_tail: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    pub on_boundary: bool,
}

impl Root {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RootSet {
    pub roots: Vec<Root>,
}

impl RootSet {
    pub fn total_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    pub fn is_simple(&self) -> bool {
        self.roots.iter().all(|r| r.multiplicity == 1)
    }

    pub fn has_boundary_root(&self) -> bool {
        self.roots.iter().any(|r| r.on_boundary)
    }

    /// Root values repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<Complex64> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.value(), r.multiplicity))
            .collect()
    }

    fn signature(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.roots.iter().map(|r| r.multiplicity).collect();
        m.sort_unstable();
        m
    }
}

/// All roots of the polynomial by simultaneous Aberth-Ehrlich iteration.
pub fn aberth(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let coeffs = &coeffs[..=poly::degree(coeffs)];
    let n = coeffs.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let dcoeffs = poly::derivative(coeffs);
    let radius = (coeffs[0].abs() / coeffs[n].abs()).powf(1.0 / n as f64).max(1e-3);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / n as f64 + 0.4;
            Complex64::from_polar(radius, theta)
        })
        .collect();

    let backward = |z: Complex64| poly::eval(coeffs, z).norm() / poly::eval_abs(coeffs, z);
    let accept = 64.0 * n as f64 * f64::EPSILON;
    let mut settled_sweeps = 0;
    for _ in 0..ABERTH_MAX_ITER {
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let p = poly::eval(coeffs, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let dp = poly::eval(&dcoeffs, z[k]);
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| (z[k] - z[j]).inv())
                .sum();
            let denom = dp - p * repulsion;
            if denom.norm() == 0.0 || !denom.is_finite() {
                continue;
            }
            let step = p / denom;
            z[k] -= step;
            max_step = max_step.max(step.norm() / z[k].norm().max(1e-300));
        }
        if z.iter().all(|&r| backward(r) <= accept) || max_step <= 4.0 * f64::EPSILON {
            settled_sweeps += 1;
            if settled_sweeps >= 3 {
                return Ok(z);
            }
        }
    }
    let worst = z.iter().map(|&r| backward(r)).fold(0.0, f64::max);
    if worst <= 1e-12 {
        Ok(z)
    } else {
        Err(Error::ConvergenceFailure {
            iterations: ABERTH_MAX_ITER,
            backward_error: worst,
        })
    }
}

/// Roots of `Q` in `|s| <= 1 + tol.boundary`, excluding `s = 1`, with multiplicities.
pub fn find_unit_disk_roots(q: &CharPolynomial, tol: &Tolerances) -> Result<RootSet> {
    let expected = q.kappa_eff() as usize - 1;
    if expected == 0 {
        return Ok(RootSet { roots: Vec::new() });
    }
    let (deflated, rem) = poly::div_rem(&q.coeffs, &[-1.0, 1.0]);
    let rem = rem[0].abs();
    if rem > 1e-12 * q.scale() {
        return Err(Error::Precondition(format!(
            "s = 1 is not a root of the characteristic polynomial (|Q(1)| = {rem:e})"
        )));
    }
    let all = aberth(&deflated)?;
    let inside: Vec<Complex64> = all
        .iter()
        .copied()
        .filter(|z| z.norm() <= 1.0 + tol.boundary && (z - 1.0).norm() > tol.root)
        .collect();
    let set = cluster_multiplicities(&inside, q, tol)?;
    let found = set.total_multiplicity();
    if found != expected {
        let mut moduli: Vec<f64> = all.iter().map(|z| z.norm()).collect();
        moduli.sort_by(f64::total_cmp);
        return Err(Error::RootCountMismatch {
            expected,
            found,
            detail: format!("root moduli {moduli:?}"),
        });
    }
    Ok(set)
}

/// Merge approximate roots closer than `tol.cluster`, polish each cluster, and
/// enforce conjugate symmetry. Fails with `AmbiguousCluster` when a tolerance
/// ten times larger or smaller would group the roots differently.
pub fn cluster_multiplicities(raw: &[Complex64], q: &CharPolynomial, tol: &Tolerances) -> Result<RootSet> {
    let primary = cluster_at(raw, q, tol, tol.cluster);
    for factor in [0.1, 10.0] {
        let alt = cluster_at(raw, q, tol, tol.cluster * factor);
        if alt.signature() != primary.signature() || alt.roots.len() != primary.roots.len() {
            return Err(Error::AmbiguousCluster {
                primary: Box::new(primary),
                alternative: Box::new(alt),
            });
        }
    }
    Ok(primary)
}

fn cluster_at(raw: &[Complex64], q: &CharPolynomial, tol: &Tolerances, radius: f64) -> RootSet {
    let n = raw.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (raw[i] - raw[j]).norm() <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    let mut index_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if index_of[r] == usize::MAX {
            index_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[index_of[r]].push(raw[i]);
    }

    let mut roots: Vec<Root> = groups
        .iter()
        .map(|g| {
            let mut centroid = g.iter().sum::<Complex64>() / g.len() as f64;
            if centroid.im.abs() <= radius {
                centroid.im = 0.0;
            }
            let value = polish(&q.coeffs, centroid, g.len());
            Root {
                re: value.re,
                im: value.im,
                multiplicity: g.len(),
                on_boundary: false,
            }
        })
        .collect();

    // conjugate closure: pair each upper-half root with its nearest lower-half partner
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] || roots[i].im <= 0.0 {
            continue;
        }
        let target = roots[i].value().conj();
        let partner = (0..roots.len())
            .filter(|&j| !used[j] && j != i && roots[j].im < 0.0 && roots[j].multiplicity == roots[i].multiplicity)
            .min_by(|&a, &b| {
                (roots[a].value() - target)
                    .norm()
                    .total_cmp(&(roots[b].value() - target).norm())
            });
        if let Some(j) = partner {
            let avg = (roots[i].value() + roots[j].value().conj()) / 2.0;
            roots[i].re = avg.re;
            roots[i].im = avg.im;
            roots[j].re = avg.re;
            roots[j].im = -avg.im;
            used[i] = true;
            used[j] = true;
        }
    }

    for r in &mut roots {
        r.on_boundary = (r.value().norm() - 1.0).abs() <= tol.boundary;
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)));
    RootSet { roots }
}

/// Newton on `Q^(l-1)`, whose root is simple when `z0` approximates a root of multiplicity `l`.
fn polish(coeffs: &[f64], z0: Complex64, multiplicity: usize) -> Complex64 {
    let f = poly::nth_derivative(coeffs, multiplicity - 1);
    let df = poly::derivative(&f);
    let mut z = z0;
    let mut best = poly::eval(&f, z).norm();
    for _ in 0..50 {
        let d = poly::eval(&df, z);
        if d.norm() == 0.0 {
            break;
        }
        let next = z - poly::eval(&f, z) / d;
        let r = poly::eval(&f, next).norm();
        if !(r < best) && (next - z).norm() > 1e-15 * z.norm().max(1.0) {
            break;
        }
        let done = (next - z).norm() <= 1e-16 * z.norm().max(1.0);
        z = next;
        best = best.min(r);
        if done {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn roots_of(d: ClaimDistribution, kappa: u32) -> RootSet {
        let red = reduce_support(&d, kappa).unwrap();
        find_unit_disk_roots(&red.characteristic().unwrap(), &Tolerances::default()).unwrap()
    }

    #[test]
    fn reduce_identity_when_zero_claims_possible() {
        let d = ClaimDistribution::geometric(0.4).unwrap();
        let r = reduce_support(&d, 3).unwrap();
        assert_eq!((r.kappa, r.shift), (3, 0));
    }

    #[test]
    fn reduce_cancels_power_of_s() {
        let r = reduce_support(&ClaimDistribution::finite(vec![0.0, 0.6, 0.4]).unwrap(), 2).unwrap();
        assert_eq!((r.kappa, r.shift), (1, 1));
        assert_eq!((r.dist.pmf(0), r.dist.pmf(1)), (0.6, 0.4));

        let r = reduce_support(&ClaimDistribution::finite(vec![0.0, 0.0, 0.9, 0.1]).unwrap(), 3).unwrap();
        assert_eq!((r.kappa, r.shift), (1, 2));
        assert_eq!((r.dist.pmf(0), r.dist.pmf(1)), (0.9, 0.1));
    }

    #[test]
    fn reduce_rejects_claims_above_premium() {
        let d = ClaimDistribution::finite(vec![0.0, 0.0, 0.0, 0.5, 0.5]).unwrap();
        assert!(matches!(reduce_support(&d, 3), Err(Error::Reduction { shift: 3, kappa: 3 })));
    }

    #[test]
    fn characteristic_coefficients() {
        let p = 0.4;
        let q = build_characteristic(&ClaimDistribution::geometric(p).unwrap(), 2).unwrap();
        assert_eq!(q.coeffs, vec![-p, 0.0, 1.0, -(1.0 - p)]);

        let q = build_characteristic(&ClaimDistribution::finite(vec![0.128, 0.576, 0.264, 0.032]).unwrap(), 3).unwrap();
        let want = [-0.128, -0.576, -0.264, 1.0 - 0.032];
        for (a, b) in q.coeffs.iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-16);
        }

        let q = build_characteristic(&ClaimDistribution::bernoulli(0.3).unwrap(), 1).unwrap();
        assert_relative_eq!(q.coeffs[0], -0.7, epsilon = 1e-16);
        assert_relative_eq!(q.coeffs[1], 0.7, epsilon = 1e-16);
        assert_eq!(q.coeffs.len(), 2);
    }

    #[test]
    fn characteristic_requires_mass_at_zero() {
        let d = ClaimDistribution::finite(vec![0.0, 0.6, 0.4]).unwrap();
        assert!(build_characteristic(&d, 2).is_err());
    }

    #[test]
    fn geometric_kappa2_single_real_root() {
        let p: f64 = 101.0 / 300.0;
        let set = roots_of(ClaimDistribution::geometric(p).unwrap(), 2);
        let closed = (p - (4.0 * p - 3.0 * p * p).sqrt()) / (2.0 * (1.0 - p));
        assert_eq!(set.roots.len(), 1);
        assert_eq!(set.roots[0].multiplicity, 1);
        assert_eq!(set.roots[0].im, 0.0);
        assert_relative_eq!(set.roots[0].re, closed, epsilon = 1e-14);
        assert_relative_eq!(closed, -0.502496, epsilon = 1e-6);
    }

    #[test]
    fn geometric_kappa3_conjugate_pair() {
        let set = roots_of(ClaimDistribution::geometric(101.0 / 300.0).unwrap(), 3);
        assert_eq!(set.roots.len(), 2);
        assert!(set.is_simple());
        assert_relative_eq!(set.roots[0].re, -0.368094, epsilon = 1e-6);
        assert_relative_eq!(set.roots[0].im, 0.522097, epsilon = 1e-6);
        assert_eq!(set.roots[1].value(), set.roots[0].value().conj());
    }

    #[test]
    fn double_root_is_clustered() {
        let set = roots_of(ClaimDistribution::finite(vec![0.128, 0.576, 0.264, 0.032]).unwrap(), 3);
        assert_eq!(set.roots.len(), 1);
        assert_eq!(set.roots[0].multiplicity, 2);
        assert_relative_eq!(set.roots[0].re, -4.0 / 11.0, epsilon = 1e-12);
        assert_eq!(set.roots[0].im, 0.0);
    }

    #[test]
    fn clustering_cases() {
        let q = build_characteristic(&ClaimDistribution::finite(vec![0.128, 0.576, 0.264, 0.032]).unwrap(), 3).unwrap();
        let tol = Tolerances::default();
        let raw = [Complex64::new(-0.3636, 1e-9), Complex64::new(-0.36365, -1e-9)];
        // these two sit 5e-5 apart: only a coarse tolerance merges them
        let coarse = Tolerances { cluster: 1e-3, ..tol };
        let set = cluster_multiplicities(&raw, &q, &coarse).unwrap();
        assert_eq!(set.roots.len(), 1);
        assert_eq!(set.roots[0].multiplicity, 2);
        assert_relative_eq!(set.roots[0].re, -4.0 / 11.0, epsilon = 1e-12);

        let raw = [Complex64::new(-4.0 / 11.0 + 1e-9, 1e-9), Complex64::new(-4.0 / 11.0 - 1e-9, -1e-9)];
        let set = cluster_multiplicities(&raw, &q, &tol).unwrap();
        assert_eq!(set.roots[0].multiplicity, 2);

        let far = [Complex64::new(-0.3, 0.5), Complex64::new(-0.3, -0.5)];
        let set = cluster_multiplicities(&far, &q, &tol).unwrap();
        assert_eq!(set.roots.len(), 2);
        assert!(set.is_simple());

        let set = cluster_multiplicities(&[], &q, &tol).unwrap();
        assert!(set.roots.is_empty());
    }

    #[test]
    fn ambiguous_clusters_are_reported() {
        let q = build_characteristic(&ClaimDistribution::finite(vec![0.128, 0.576, 0.264, 0.032]).unwrap(), 3).unwrap();
        let raw = [Complex64::new(-0.3, 0.0), Complex64::new(-0.3 + 5e-6, 0.0)];
        match cluster_multiplicities(&raw, &q, &Tolerances::default()) {
            Err(Error::AmbiguousCluster { primary, alternative }) => {
                assert_eq!(primary.roots.len(), 2);
                assert_eq!(alternative.roots.len(), 1);
            }
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn kappa_one_has_no_roots() {
        let set = roots_of(ClaimDistribution::bernoulli(0.4).unwrap(), 1);
        assert!(set.roots.is_empty());
        let set = roots_of(ClaimDistribution::geometric(0.7).unwrap(), 1);
        assert!(set.roots.is_empty());
    }

    #[test]
    fn boundary_root_for_even_support() {
        let set = roots_of(ClaimDistribution::finite(vec![0.5, 0.0, 0.5]).unwrap(), 2);
        assert_eq!(set.roots.len(), 1);
        assert!(set.roots[0].on_boundary);
        assert_relative_eq!(set.roots[0].re, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn lattice_span_three_gives_cube_roots_of_unity() {
        // support {0, 3}, kappa = 3: roots of unity of order 3 on the boundary
        let set = roots_of(ClaimDistribution::finite(vec![0.6, 0.0, 0.0, 0.4]).unwrap(), 3);
        assert_eq!(set.total_multiplicity(), 2);
        for r in &set.roots {
            assert!(r.on_boundary);
            assert_relative_eq!(r.value().powu(3).re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn residuals_and_conjugate_closure() {
        let d = ClaimDistribution::finite(vec![0.2, 0.1, 0.1, 0.3, 0.05, 0.05, 0.2]).unwrap();
        let red = reduce_support(&d, 5).unwrap();
        let q = red.characteristic().unwrap();
        let set = find_unit_disk_roots(&q, &Tolerances::default()).unwrap();
        assert_eq!(set.total_multiplicity(), 4);
        for r in &set.roots {
            assert!(q.eval(r.value()).norm() <= 1e-10 * q.scale());
            assert!(set.roots.iter().any(|o| (o.value() - r.value().conj()).norm() == 0.0));
            assert!((r.value() - 1.0).norm() > 1e-10);
        }
    }
}
