//! validate -> reduce -> roots -> pi -> tables, plus the cross-checks run on the result.

use num_complex::Complex64;
use serde::Serialize;

use crate::config::ModelConfig;
use crate::dist::{ClaimDistribution, NetProfit};
use crate::error::{Error, Result};
use crate::oracle::{self, McEstimate, StationarityReport};
use crate::pi_solver::{self, LinearSystem, PiVector};
use crate::roots::{self, CharPolynomial, RootSet};
use crate::survival::{self, FiniteTimeGrid, SurvivalTable};

const LOW_MASS_AT_ZERO: f64 = 0.05;
const LONG_TABLE: usize = 50;
pub const MC_LEVELS: [usize; 5] = [0, 1, 2, 5, 10];
const BIAS_HORIZON_CAP: usize = 20_000;
const MC_ROUNDING: f64 = 1e-12;
const BETA_GAMMA_N_MAX: usize = 4096;
/// Predicted rounding level up to which the forward recurrence is compared.
const STABLE_ROUNDING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// The deterministic part of a run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub config: ModelConfig,
    pub dist: ClaimDistribution,
    pub net_profit: NetProfit,
    pub reduced: Option<Reduced>,
    /// Primary table, from the stable series route (or the degenerate closed form).
    pub table: SurvivalTable,
    pub finite: Option<FiniteTimeGrid>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

/// Everything computed for the reduced model `(X - m, kappa - m)`.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub dist: ClaimDistribution,
    pub kappa: u32,
    pub shift: usize,
    pub characteristic: CharPolynomial,
    pub roots: RootSet,
    pub system: LinearSystem,
    pub pi: PiVector,
    pub pi_closed: Option<PiVector>,
    pub recurrence: Option<SurvivalTable>,
    pub drift: f64,
}

impl Solution {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn solve(cfg: &ModelConfig) -> Result<Solution> {
    cfg.validate()?;
    let dist = cfg.distribution()?;
    let net_profit = dist.check_net_profit(cfg.kappa)?;
    let mut warnings = Vec::new();
    let mut checks = Vec::new();
    let finite = (cfg.t_max > 0).then(|| survival::finite_time_grid(&dist, cfg.kappa, cfg.u_max, cfg.t_max));
    if finite.is_some() {
        warnings.push(
            "finite-time recursion conditions on the first claim X_1 = j for every j >= 0, \
             including j = 0, which the one-line statement of the recursion leaves out"
                .into(),
        );
    }

    if net_profit == NetProfit::TrivialSurvival {
        warnings.push("every claim equals the premium: phi(0) = 0 and phi(u) = 1 for u >= 1".into());
        let table = SurvivalTable::trivial(cfg.kappa, cfg.u_max);
        let mut sol = Solution {
            config: cfg.clone(),
            dist,
            net_profit,
            reduced: None,
            table,
            finite,
            checks,
            warnings,
        };
        finite_checks(&mut sol);
        return Ok(sol);
    }

    let tol = cfg.tolerances;
    let red = roots::reduce_support(&dist, cfg.kappa)?;
    if red.shift > 0 {
        warnings.push(format!(
            "smallest claim is {}: solving the equivalent model with premium {} and claims X - {}",
            red.shift, red.kappa, red.shift
        ));
    }
    let q = red.characteristic()?;
    let roots = match roots::find_unit_disk_roots(&q, &tol) {
        Ok(r) => r,
        Err(Error::AmbiguousCluster { primary, alternative }) => {
            warnings.push(format!(
                "root clustering is sensitive to the cluster tolerance: multiplicities {:?} at {:e}, {:?} at a tolerance 10x away; using the former",
                primary.roots.iter().map(|r| r.multiplicity).collect::<Vec<_>>(),
                tol.cluster,
                alternative.roots.iter().map(|r| r.multiplicity).collect::<Vec<_>>(),
            ));
            let expected = red.kappa as usize - 1;
            if primary.total_multiplicity() != expected {
                return Err(Error::RootCountMismatch {
                    expected,
                    found: primary.total_multiplicity(),
                    detail: "after an ambiguous clustering".into(),
                });
            }
            *primary
        }
        Err(e) => return Err(e),
    };
    if roots.has_boundary_root() {
        warnings.push(format!(
            "a root lies on the unit circle (claims live on a lattice of span {}); it is kept in the system",
            red.dist.lattice_span(red.kappa)
        ));
    }
    let x0 = red.dist.pmf(0);
    if x0 < LOW_MASS_AT_ZERO && cfg.u_max > LONG_TABLE {
        warnings.push(format!(
            "P(X = 0) = {x0:.3e} is small and u_max = {} is large: the forward recurrence loses about log10(1/x0) digits per step; the table uses the series route",
            cfg.u_max
        ));
    }

    let scale = q.scale();
    let mut worst_root: f64 = 0.0;
    for r in &roots.roots {
        for j in 0..r.multiplicity {
            let dq = crate::poly::nth_derivative(&q.coeffs, j);
            worst_root = worst_root.max(crate::poly::eval(&dq, r.value()).norm());
        }
    }
    checks.push(Check::at_most("root residual / scale", worst_root / scale, tol.root));

    let system = pi_solver::assemble_system(&red.dist, red.kappa, &roots)?;
    let pi = pi_solver::solve_pi(&system, tol.real)?;
    checks.push(Check::at_most("pi linear-system residual", pi.residual, 1e-10));
    let moment: f64 = pi_solver::moment_row(&red.dist, red.kappa).iter().zip(&pi.pi).map(|(m, p)| m * p).sum();
    checks.push(Check::at_most(
        "mean identity defect",
        (red.kappa as f64 - red.dist.mean() - moment).abs(),
        1e-10,
    ));
    let pi_sum: f64 = pi.pi.iter().sum();
    checks.push(Check::at_most("sum of pi above one", (pi_sum - 1.0).max(0.0), 1e-10));

    let mut pi_closed = None;
    if roots.is_simple() {
        let closed = pi_solver::pi_closed_form(&red.dist, red.kappa, &roots, tol.real)?;
        let gap = closed.pi.iter().zip(&pi.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("pi: closed form vs linear solve", gap, 1e-9));
        pi_closed = Some(closed);
        let det = pi_solver::determinant_identity_check(&system, &roots, x0)?;
        checks.push(Check::at_most("determinant product formula (relative)", det, 1e-8));
    }

    let xi = survival::xi_coefficients(&pi, &red.dist, red.kappa, &roots, cfg.u_max.max(1) - 1, tol.real)?;
    checks.push(Check::at_most("series factor-cancellation drift", xi.drift, 1e-8));
    let table = survival::table_from_series(&pi, &red.dist, red.kappa, &roots, cfg.u_max, tol.real)?;
    let table = SurvivalTable {
        kappa: cfg.kappa,
        ..table
    };
    checks.push(Check::at_most(
        "phi non-decreasing (largest drop)",
        table.phi.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max),
        tol.real,
    ));
    let k = red.kappa as usize;
    if table.phi.len() > k {
        let u0: f64 = (1..=k).map(|i| red.dist.pmf(k - i) * table.phi[i]).sum();
        checks.push(Check::at_most("phi(0) identity defect", (u0 - table.phi[0]).abs(), 1e-12));
    }
    if roots.is_simple() {
        let closed = survival::initial_values_closed_form(&roots, &red.dist, red.kappa, tol.real)?;
        let gap = closed.iter().zip(&table.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("phi(0..kappa): closed form vs series", gap, 1e-9));
    }

    let recurrence = recurrence_prefix(&pi, &red.dist, red.kappa, cfg.u_max, tol.real, &mut warnings);
    if let Some(rec) = &recurrence {
        let gap = rec.phi.iter().zip(&table.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-9 {
            warnings.push(format!(
                "forward recurrence differs from the series table by {gap:.3e}; the series table is reported"
            ));
        }
        let amp = survival::recurrence_amplification(&red.dist, red.kappa, rec.phi.len() - 1);
        let stable = amp
            .iter()
            .enumerate()
            .take_while(|(u, a)| f64::EPSILON * (*u as f64 + 1.0) * **a <= STABLE_ROUNDING)
            .count();
        let gap = rec.phi[..stable]
            .iter()
            .zip(&table.phi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        checks.push(Check::at_most(
            format!("phi: recurrence vs series for u < {stable}"),
            gap,
            1e-9,
        ));
    }

    let mut sol = Solution {
        config: cfg.clone(),
        dist,
        net_profit,
        reduced: Some(Reduced {
            dist: red.dist,
            kappa: red.kappa,
            shift: red.shift,
            characteristic: q,
            roots,
            system,
            pi,
            pi_closed,
            recurrence,
            drift: xi.drift,
        }),
        table,
        finite,
        checks,
        warnings,
    };
    finite_checks(&mut sol);
    Ok(sol)
}

/// Literal forward recurrence; when it leaves `[0, 1]` the stable prefix is kept.
fn recurrence_prefix(pi: &PiVector, d: &ClaimDistribution, kappa: u32, u_max: usize, tol: f64, warnings: &mut Vec<String>) -> Option<SurvivalTable> {
    match survival::ultimate_from_pi(pi, d, kappa, u_max, tol) {
        Ok(t) => Some(t),
        Err(Error::RecurrenceBlowup { u, value }) => {
            warnings.push(format!(
                "forward recurrence left [0, 1] at u = {u} (phi = {value:.3e}); compared on u < {u} only"
            ));
            (u > kappa as usize + 1)
                .then(|| survival::ultimate_from_pi(pi, d, kappa, u - 1, tol).ok())
                .flatten()
        }
        Err(_) => None,
    }
}

fn finite_checks(sol: &mut Solution) {
    let Some(grid) = &sol.finite else { return };
    let mut rise: f64 = 0.0;
    let mut below: f64 = 0.0;
    for t in 1..=grid.horizon() {
        for u in 0..grid.phi_t[t - 1].len() {
            if t > 1 {
                rise = rise.max(grid.get(u, t) - grid.get(u, t - 1));
            }
            below = below.max(sol.table.phi[u] - grid.get(u, t));
        }
    }
    let tol = sol.config.tolerances.real;
    sol.checks.push(Check::at_most("phi(u,T) increase in T", rise, 1e-12));
    sol.checks.push(Check::at_most("phi(u,T) below phi(u)", below, tol + grid.truncation));
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub mc: McEstimate,
    pub bias_horizon: usize,
    pub bias: Vec<f64>,
    pub stationarity: StationarityReport,
    pub beta_gamma: Option<oracle::BetaGammaLimits>,
    pub identity_residual: Option<f64>,
}

/// Simulation, stationarity, two-sequence limits and the generating-function identity.
pub fn verify(sol: &mut Solution) -> Result<OracleReport> {
    let cfg = sol.config.clone();
    let levels: Vec<usize> = MC_LEVELS.iter().copied().filter(|&u| u <= cfg.u_max).collect();
    let sample = oracle::simulate_maxima(&sol.dist, cfg.kappa, cfg.mc.paths, cfg.mc.horizon, cfg.mc.seed)?;
    let mc = McEstimate::from_sample(&sample, &levels);
    let bias_horizon = (cfg.mc.horizon as usize).min(BIAS_HORIZON_CAP);
    let u_top = levels.iter().copied().max().unwrap_or(0);
    let grid = survival::finite_time_grid(&sol.dist, cfg.kappa, u_top, bias_horizon);
    let bias: Vec<f64> = levels
        .iter()
        .map(|&u| (grid.get(u, bias_horizon) - sol.table.phi[u]).max(0.0) + grid.truncation)
        .collect();
    for (i, &u) in levels.iter().enumerate() {
        let exact = sol.table.phi[u];
        let err = (mc.phi_hat[i] - exact).abs();
        // an estimate of exactly 0 or 1 has zero sample variance; the binomial
        // error at the exact value keeps the band honest in that case
        let sigma = mc.std_err[i].max((exact * (1.0 - exact) / mc.paths as f64).max(0.0).sqrt());
        sol.checks.push(Check::at_most(
            format!("Monte Carlo phi({u}) deviation"),
            err,
            3.0 * sigma + bias[i] + MC_ROUNDING,
        ));
    }
    let stationarity = oracle::stationarity_from_sample(&sample, &sol.dist, cfg.kappa);
    sol.checks.push(Check::at_most(
        "stationarity of M: total variation",
        stationarity.tv,
        3.0 * stationarity.noise,
    ));

    let mut beta_gamma = None;
    let mut identity_residual = None;
    if let Some(red) = &sol.reduced {
        if red.kappa == 2 {
            let lim = oracle::beta_gamma_limits(&red.dist, BETA_GAMMA_N_MAX)?;
            let gap = (lim.phi0 - sol.table.phi[0]).abs().max((lim.phi1 - sol.table.phi[1]).abs());
            sol.checks.push(Check::at_most("two-sequence limits vs phi(0), phi(1)", gap, 1e-6));
            beta_gamma = Some(lim);
        }
        if red.kappa <= 2 {
            let pts = oracle::circle_points(16, 0.9);
            let mut worst: f64 = 0.0;
            for s in &pts {
                let a = survival::xi_eval(&red.pi, &red.dist, red.kappa, *s)?;
                let b = survival::xi_special(&red.dist, red.kappa, *s)?;
                worst = worst.max((a - b).norm());
            }
            sol.checks.push(Check::at_most("generating function: special form", worst, 1e-10));
        }
        let n = pi_length(red);
        let ext = pi_solver::extend_pi(&red.pi, &red.dist, red.kappa, &red.roots, n, cfg.tolerances.real)?;
        let tail = (1.0 - ext.pi.iter().sum::<f64>()).abs();
        let pts = oracle::circle_points(20, 0.9);
        let res = oracle::identity_residual(&ext.pi, &red.dist, red.kappa, &pts)?;
        sol.checks.push(Check::at_most("supremum pgf identity residual", res, 1e-8 + 2.0 * tail));
        identity_residual = Some(res);

        let s = Complex64::new(0.3, 0.2);
        let direct = survival::xi_eval(&red.pi, &red.dist, red.kappa, s)?;
        let series = extend_series_xi(&ext.pi, s);
        let series_tail = tail * s.norm().powi(n as i32) / (1.0 - s.norm());
        sol.checks.push(Check::at_most(
            "generating function: closed form vs coefficients",
            (direct - series).norm(),
            1e-10 + series_tail,
        ));
    }
    Ok(OracleReport {
        mc,
        bias_horizon,
        bias,
        stationarity,
        beta_gamma,
        identity_residual,
    })
}

fn extend_series_xi(pi: &[f64], s: Complex64) -> Complex64 {
    let mut acc = 0.0;
    let mut power = Complex64::new(1.0, 0.0);
    let mut out = Complex64::new(0.0, 0.0);
    for p in pi {
        acc += p;
        out += acc * power;
        power *= s;
    }
    out
}

/// Extend `pi` until the remaining mass is below `1e-10` (or a hard cap).
pub fn pi_length(red: &Reduced) -> usize {
    let mut n = 256;
    loop {
        let Ok(ext) = pi_solver::extend_pi(&red.pi, &red.dist, red.kappa, &red.roots, n, 1.0) else {
            return n;
        };
        if 1.0 - ext.pi.iter().sum::<f64>() < 1e-10 || n >= 1 << 16 {
            return n;
        }
        n *= 2;
    }
}
