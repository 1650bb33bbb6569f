//! fg: closed geodesics on Zermelo-rotated spheres from the command
//! line. Four subcommands: the closed-form catalog with indices
//! (`katok`), the numeric orbit search cross-checked against it
//! (`find`), the loop-space rank tables (`loopspace`), and the integer
//! skeleton of the second-geodesic argument (`theorem`).
//!
//! Exit codes: 0 when every check passes, 1 when any check fails or a
//! computation breaks down, 2 on invalid input.

mod ops;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use finsler_geodesics::{par, Error};

#[derive(Parser)]
#[command(
    name = "fg",
    version,
    about = "closed geodesics, Morse indices, and loop-space bookkeeping for rotated spheres"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the output to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricArgs {
    /// Number of rotation planes; the sphere is S^{2m-1}.
    #[arg(long)]
    m: usize,
    /// Rotation weights, comma separated, pairwise coprime, increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<u64>,
    /// Rotation amplitude; admissible when mu * a(weights) < 1.
    #[arg(long)]
    mu: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form orbit catalog with lengths, indices, nullities, and
    /// the metric invariants, each cross-checked independently.
    Katok {
        #[command(flatten)]
        metric: MetricArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Numeric closed-orbit search, cross-checked against the catalog.
    Find {
        #[command(flatten)]
        metric: MetricArgs,
        /// Keep only orbits with length up to this bound.
        #[arg(long, default_value_t = 10.0)]
        bound: f64,
        /// Number of shooting seeds.
        #[arg(long, default_value_t = 200)]
        seeds: usize,
        /// Closure residual tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Homology rank tables of the loop-space pairs, the unit tangent
    /// bundle, and the plane Grassmannian.
    Loopspace {
        /// The sphere is S^{2m-1}.
        #[arg(long)]
        m: u64,
        #[arg(long, default_value_t = 24)]
        max_degree: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Integer skeleton of the second-geodesic argument.
    Theorem {
        /// A single value `3` or an inclusive range `2..50`.
        #[arg(long)]
        m: String,
        /// Override the auxiliary prime (must divide neither m nor m-1).
        #[arg(long)]
        p: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn main() -> ExitCode {
    par::init_thread_cap_from_env();
    let cli = Cli::parse();

    let (result, out_args) = match cli.command {
        Command::Katok { metric, output } => {
            (ops::katok(metric.m, metric.weights, metric.mu), output)
        }
        Command::Find { metric, bound, seeds, tol, output } => {
            (ops::find(metric.m, metric.weights, metric.mu, bound, seeds, tol), output)
        }
        Command::Loopspace { m, max_degree, output } => {
            (ops::loopspace_tables(m, max_degree), output)
        }
        Command::Theorem { m, p, output } => (ops::theorem(&m, p), output),
    };

    let command_output = match result {
        Ok(out) => out,
        Err(err) => {
            eprintln!("error: {err}");
            return match err {
                Error::InvalidInput(_) | Error::InvalidMetric(_) | Error::DegenerateMetric(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            };
        }
    };

    let rendered = match out_args.format {
        Format::Json => output::render_json(&command_output.report),
        Format::Csv => command_output.csv.clone(),
        Format::Text => output::render_text(&command_output),
    };
    if let Err(err) = output::emit(&rendered, out_args.out.as_deref()) {
        eprintln!("error: cannot write output: {err}");
        return ExitCode::from(1);
    }

    if command_output.report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
