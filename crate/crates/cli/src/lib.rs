//! Command-line front end: problem files, forcing expressions and the
//! `check`, `solve`, `sweep`, `gridsearch` and `dump-spline` verbs.

pub mod commands;
pub mod config;
pub mod expr;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fracbvp::sweep::SweepParameter;

use crate::commands::{Exit, Failure, Format, GridArgs, SweepArgs};

#[derive(Debug, Parser)]
#[command(name = "fracbvp", version, about = "Fractional-periodic Hilfer boundary value problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Reserved; recorded in the diagnostics.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the convergence constants and assumption verdicts.
    Check,
    /// Solve and write the solution, diagnostics and plot data.
    Solve,
    /// Solve over a list of h, q, eps or beta values.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        /// Skip the error columns.
        #[arg(long)]
        no_errors: bool,
        /// Grid size of the reference solution for problems without a closed form.
        #[arg(long, default_value_t = 400)]
        reference_grid: usize,
    },
    /// Grid search for a zero of the boundary defect.
    Gridsearch {
        #[arg(long)]
        grid_start: f64,
        #[arg(long)]
        grid_stop: f64,
        #[arg(long)]
        grid_step: f64,
        /// `T` or `x0_<i>`.
        #[arg(long, default_value = "T")]
        variable: String,
        /// Re-grid around the minimum with the step divided by this factor.
        #[arg(long)]
        refine: Option<usize>,
        /// Grid values whose solutions are written out.
        #[arg(long, value_delimiter = ',')]
        dump_at: Vec<f64>,
    },
    /// Solve and write the spline coefficients.
    DumpSpline,
}

/// Runs the command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code as i32,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.exit as i32
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Exit, Failure> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(Exit::Config, format!("cannot set up {n} threads: {e}")))?;
    }
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| Failure::new(Exit::Config, "--config is required"))?;
    let cfg = config::load(path).map_err(|e| Failure::new(Exit::Config, e.0))?;
    match &cli.command {
        Command::Check => commands::check(&cfg),
        Command::Solve => commands::solve(&cfg, &c.out, c.format, c.seed),
        Command::DumpSpline => commands::dump_spline(&cfg, &c.out, c.format),
        Command::Sweep {
            param,
            values,
            no_errors,
            reference_grid,
        } => {
            let parameter: SweepParameter = param.parse().map_err(|e: fracbvp::Error| Failure::new(Exit::Config, e.to_string()))?;
            let args = SweepArgs {
                parameter,
                values: values.clone(),
                errors: !no_errors,
                reference_grid: *reference_grid,
            };
            commands::sweep(&cfg, &args, &c.out, c.format)
        }
        Command::Gridsearch {
            grid_start,
            grid_stop,
            grid_step,
            variable,
            refine,
            dump_at,
        } => {
            let args = GridArgs {
                variable: commands::parse_variable(variable)?,
                start: *grid_start,
                stop: *grid_stop,
                step: *grid_step,
                refine: *refine,
                dump_at: dump_at.clone(),
            };
            commands::gridsearch(&cfg, &args, &c.out, c.format)
        }
    }
}
