//! `dcad`: evaluate programs, synchronize vertex edits back into parameters,
//! check gradients, benchmark, and serve the HTTP API.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dcad_core::objectives::ObjectiveId;

#[derive(Debug, Parser)]
#[command(
    name = "dcad",
    version,
    about = "Differentiable CAD programs with inverse vertex editing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a program and write its mesh and parameters.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Turn a vertex edit into a gallery of parameter updates.
    Sync {
        #[command(flatten)]
        model: ModelArgs,
        /// Edit document (JSON with `moved`, `fixed`, optional `objectives` and `gamma`).
        edit: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Compare analytic gradients with central differences at random feasible points.
    Gradcheck {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        points: usize,
        /// Energies to check (comma separated); defaults to all of them.
        #[arg(long, value_delimiter = ',')]
        objectives: Vec<ObjectiveId>,
        /// Also write the rows as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time compilation and synchronization of random edits.
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        edits: usize,
        /// Vertices moved per edit.
        #[arg(long, default_value_t = 10)]
        vertices: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solve: SolveArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// A .dcad file, or the name of a bundled model.
    model: String,
    /// Override a parameter: `--set w=3`.
    #[arg(long = "set", value_parser = parse_key_val)]
    set: Vec<(String, f64)>,
    /// Parameter values from a file this tool wrote (params.json or gallery.json).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Gallery option to take parameters from when `--params` is a gallery.
    #[arg(long, default_value_t = 0)]
    option: usize,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Objectives to run (comma separated), replacing the default set.
    #[arg(long, value_delimiter = ',')]
    objectives: Vec<ObjectiveId>,
    /// Objective weight: `--gamma vol=0.01`.
    #[arg(long, value_parser = parse_key_val)]
    gamma: Vec<(String, f64)>,
    /// Optimality tolerance of each solve.
    #[arg(long)]
    tol: Option<f64>,
}

fn parse_key_val(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
