//! Human report and CSV tables for a run.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use crate::dist::{ClaimLaw, NetProfit};
use crate::pipeline::{OracleReport, Solution};

/// `%g`-style formatting with `digits` significant digits.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, x);
        let (mantissa, e) = s.split_once('e').unwrap();
        format!("{}e{}", trim_zeros(mantissa), e)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn complex(re: f64, im: f64, digits: usize) -> String {
    if im == 0.0 {
        sig(re, digits)
    } else if im > 0.0 {
        format!("{} + {}i", sig(re, digits), sig(im, digits))
    } else {
        format!("{} - {}i", sig(re, digits), sig(-im, digits))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub stages: Vec<(&'static str, Duration)>,
}

pub fn render_report(sol: &Solution, oracles: Option<&OracleReport>, timings: Option<&Timings>) -> String {
    const D: usize = 6;
    let cfg = &sol.config;
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "model");
    let _ = writeln!(w, "  premium per period: {}", cfg.kappa);
    match &cfg.dist {
        ClaimLaw::Finite { pmf } => {
            let probs: Vec<String> = pmf.iter().map(|p| sig(*p, D)).collect();
            let _ = writeln!(w, "  claims: finite pmf ({})", probs.join(", "));
        }
        ClaimLaw::Geometric { p } => {
            let _ = writeln!(w, "  claims: geometric, P(X = k) = p (1 - p)^k with p = {}", sig(*p, D));
        }
    }
    let _ = writeln!(w, "  mean claim: {}", sig(sol.dist.mean(), D));
    let _ = writeln!(
        w,
        "  net profit condition: {}",
        match sol.net_profit {
            NetProfit::Holds => "holds",
            NetProfit::TrivialSurvival => "degenerate (claim always equals premium)",
        }
    );

    if let Some(red) = &sol.reduced {
        if red.shift > 0 {
            let _ = writeln!(w, "  reduced to premium {} with claims shifted down by {}", red.kappa, red.shift);
        }
        let _ = writeln!(w, "\nroots in the closed unit disk (excluding s = 1)");
        if red.roots.roots.is_empty() {
            let _ = writeln!(w, "  none");
        }
        for r in &red.roots.roots {
            let _ = writeln!(
                w,
                "  {}  multiplicity {}{}",
                complex(r.re, r.im, D),
                r.multiplicity,
                if r.on_boundary { "  (on |s| = 1)" } else { "" }
            );
        }
        let _ = writeln!(w, "\nboundary probabilities P(M = i)");
        for (i, p) in red.pi.pi.iter().enumerate() {
            let _ = writeln!(w, "  pi_{i} = {}", sig(*p, D));
        }
        let _ = writeln!(
            w,
            "  system rows: {}; residual {}; imaginary part dropped {}",
            if red.system.uses_derivative_rows() {
                "values and derivatives at a multiple root"
            } else {
                "values at simple roots"
            },
            sig(red.pi.residual, 3),
            sig(red.pi.imag_leak, 3)
        );
        if let Some(closed) = &red.pi_closed {
            let gap = closed.pi.iter().zip(&red.pi.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let _ = writeln!(w, "  closed form agrees to {}", sig(gap, 3));
        }
    }

    let _ = writeln!(w, "\nultimate survival phi(u)");
    for (u, p) in sol.table.phi.iter().enumerate() {
        let _ = writeln!(w, "  {u:>4}  {}", sig(*p, D));
    }

    if let Some(grid) = &sol.finite {
        let t = grid.horizon();
        let _ = writeln!(w, "\nfinite-time survival at T = {t}");
        for (u, p) in grid.phi_t[t - 1].iter().enumerate() {
            let _ = writeln!(
                w,
                "  {u:>4}  {}  (above phi(u) by {})",
                sig(*p, D),
                sig(p - sol.table.phi[u], 3)
            );
        }
    }

    if let Some(o) = oracles {
        let _ = writeln!(
            w,
            "\nMonte Carlo ({} paths, horizon {}, seed {})",
            o.mc.paths, o.mc.horizon, o.mc.seed
        );
        for (i, u) in o.mc.u.iter().enumerate() {
            let _ = writeln!(
                w,
                "  u = {u:>2}: {} +- {} (exact {}, horizon bias <= {})",
                sig(o.mc.phi_hat[i], D),
                sig(o.mc.std_err[i], 2),
                sig(sol.table.phi[*u], D),
                sig(o.bias[i], 2)
            );
        }
        let _ = writeln!(
            w,
            "  stationarity of M: total variation {} (noise scale {})",
            sig(o.stationarity.tv, 3),
            sig(o.stationarity.noise, 3)
        );
        if let Some(bg) = &o.beta_gamma {
            let _ = writeln!(
                w,
                "  two-sequence limits at n = {}: phi(0) = {}, phi(1) = {}",
                bg.n,
                sig(bg.phi0, D),
                sig(bg.phi1, D)
            );
        }
    }

    let _ = writeln!(w, "\nchecks");
    for c in &sol.checks {
        let _ = writeln!(
            w,
            "  {}  {}: {} (limit {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            sig(c.value, 3),
            sig(c.tolerance, 3)
        );
    }

    if !sol.warnings.is_empty() {
        let _ = writeln!(w, "\nwarnings");
        for msg in &sol.warnings {
            let _ = writeln!(w, "  - {msg}");
        }
    }

    if let Some(t) = timings {
        let _ = writeln!(w, "\ntimings");
        for (stage, d) in &t.stages {
            let _ = writeln!(w, "  {stage}: {:.3} s", d.as_secs_f64());
        }
    }
    out
}

const M: usize = 12;

pub fn survival_csv(sol: &Solution) -> String {
    let mut s = String::from("u,phi\n");
    for (u, p) in sol.table.phi.iter().enumerate() {
        let _ = writeln!(s, "{u},{}", sig(*p, M));
    }
    s
}

pub fn finite_time_csv(sol: &Solution) -> String {
    let mut s = String::from("u,t,phi\n");
    if let Some(grid) = &sol.finite {
        for t in 1..=grid.horizon() {
            for (u, p) in grid.phi_t[t - 1].iter().enumerate() {
                let _ = writeln!(s, "{u},{t},{}", sig(*p, M));
            }
        }
    }
    s
}

pub fn roots_csv(sol: &Solution) -> String {
    let mut s = String::from("re,im,multiplicity,on_boundary\n");
    if let Some(red) = &sol.reduced {
        for r in &red.roots.roots {
            let _ = writeln!(s, "{},{},{},{}", sig(r.re, M), sig(r.im, M), r.multiplicity, r.on_boundary);
        }
    }
    s
}

pub fn verification_csv(sol: &Solution) -> String {
    let mut s = String::from("check,value,tolerance,passed\n");
    for c in &sol.checks {
        let _ = writeln!(s, "{},{},{},{}", c.name.replace(',', ";"), sig(c.value, M), sig(c.tolerance, M), c.passed);
    }
    s
}

pub fn write_tables(dir: &Path, sol: &Solution) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("survival.csv"), survival_csv(sol))?;
    std::fs::write(dir.join("finite_time.csv"), finite_time_csv(sol))?;
    std::fs::write(dir.join("roots.csv"), roots_csv(sol))?;
    std::fs::write(dir.join("verification.csv"), verification_csv(sol))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(0.480212345, 6), "0.480212");
        assert_eq!(sig(0.0295066234, 6), "0.0295066");
        assert_eq!(sig(1.0, 6), "1");
        assert_eq!(sig(0.0, 6), "0");
        assert_eq!(sig(123456789.0, 6), "1.23457e8");
        assert_eq!(sig(-1.5e-9, 3), "-1.5e-9");
        assert_eq!(sig(0.99999999, 6), "1");
        assert_eq!(sig(0.0197691329, 12), "0.0197691329");
    }
}
