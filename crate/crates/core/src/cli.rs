//! Command-line front end: one config in, report and CSV tables out.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};

use crate::config::ModelConfig;
use crate::error::Error;
use crate::pipeline;
use crate::report::{self, Timings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// CSV tables only.
    Csv,
    /// `report.txt` plus the CSV tables.
    Report,
}

#[derive(Debug, Parser)]
#[command(name = "ruin", version, about = "Survival probabilities for the discrete-time risk model with integer premium")]
pub struct Args {
    /// JSON model config.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub u_max: Option<usize>,
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Run the simulation and limit-sequence oracles.
    #[arg(long)]
    pub verify: bool,
    #[arg(long)]
    pub mc_paths: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; without it the report (or survival CSV) goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Report)]
    pub format: Format,
    /// Leave timings out of the report so identical runs give identical files.
    #[arg(long)]
    pub no_timings: bool,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;

fn load(args: &Args) -> Result<ModelConfig, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = ModelConfig::from_json(&text)?;
    if let Some(u) = args.u_max {
        cfg.u_max = u;
    }
    if let Some(t) = args.t_max {
        cfg.t_max = t;
    }
    if let Some(n) = args.mc_paths {
        cfg.mc.paths = n;
    }
    if let Some(s) = args.seed {
        cfg.mc.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NetProfitViolation { .. } | Error::Reduction { .. } => EXIT_REJECTED,
        _ => EXIT_CHECK_FAILED,
    }
}

/// Run the pipeline and write outputs; returns the process exit code.
pub fn run(args: &Args) -> i32 {
    match run_inner(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NetProfitViolation { .. } = e {
                eprintln!("the mean claim must be strictly below the premium for survival to be possible");
            }
            exit_code(&e)
        }
    }
}

fn run_inner(args: &Args) -> Result<i32, Error> {
    let cfg = load(args)?;
    let mut timings = Timings::default();
    let start = Instant::now();
    let mut sol = pipeline::solve(&cfg)?;
    timings.stages.push(("solve", start.elapsed()));
    for w in &sol.warnings {
        eprintln!("warning: {w}");
    }
    let oracles = if args.verify {
        let start = Instant::now();
        let o = pipeline::verify(&mut sol)?;
        timings.stages.push(("verify", start.elapsed()));
        Some(o)
    } else {
        None
    };
    let text = report::render_report(&sol, oracles.as_ref(), (!args.no_timings).then_some(&timings));
    match &args.out {
        Some(dir) => {
            report::write_tables(dir, &sol)?;
            if args.format == Format::Report {
                std::fs::write(dir.join("report.txt"), &text)?;
            }
        }
        None => match args.format {
            Format::Report => print!("{text}"),
            Format::Csv => print!("{}", report::survival_csv(&sol)),
        },
    }
    let failed: Vec<_> = sol.checks.iter().filter(|c| !c.passed).collect();
    for c in &failed {
        eprintln!("check failed: {} = {:e} exceeds {:e}", c.name, c.value, c.tolerance);
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn main() -> ! {
    let args = Args::parse();
    std::process::exit(run(&args))
}
