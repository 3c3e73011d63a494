//! `biquad`: PSD certificates, SOS decompositions and SOS-rank bounds for biquadratic forms.
//!
//! Exit codes: 0 success (PSD where applicable), 1 error, 2 form not PSD,
//! 3 form not x-symmetric, 4 inconclusive.

mod commands;
mod io;

use std::io::{stderr, stdout, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use biquad::Tolerances;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "biquad", version, about = "PSD certificates, SOS decompositions and SOS-rank bounds for biquadratic forms")]
pub struct Cli {
    /// Print the full result as JSON on standard output.
    #[arg(long, global = true)]
    pub json: bool,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Restarts for randomized searches.
    #[arg(long, global = true, default_value_t = 8)]
    pub restarts: usize,

    /// Rank and PSD decision tolerance (relative to the spectral radius).
    #[arg(long, global = true, env = "BIQUAD_TOL")]
    pub tol: Option<f64>,

    /// Include wall-clock time in the JSON result.
    #[arg(long, global = true)]
    pub timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decide PSD-ness of an x-symmetric form through its Q and R matrices.
    CheckPsd {
        file: PathBuf,
        /// Swap the roles of x and y before analysis (for y-symmetric forms).
        #[arg(long)]
        transpose: bool,
    },
    /// Write an explicit SOS decomposition of a PSD x-symmetric form.
    Decompose {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        #[arg(long)]
        transpose: bool,
        /// Decomposition output file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the simple form P_{m,n,s} and report its SOS rank.
    GenSimple {
        m: usize,
        n: usize,
        s: usize,
        /// Form output file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Support set output file.
        #[arg(long)]
        support_out: Option<PathBuf>,
    },
    /// Bound the SOS rank of any form through its Gram family.
    SosRank {
        file: PathBuf,
        #[arg(long)]
        transpose: bool,
    },
    /// Move a PSD Gram point to the PSD boundary (rank at most mn - 1).
    ReduceRank {
        file: PathBuf,
        #[arg(long)]
        transpose: bool,
        /// Decomposition output file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute M-eigenpairs by alternating eigen-steps.
    Meig {
        file: PathBuf,
        #[arg(long)]
        transpose: bool,
    },
    /// Time the naive and structured decompositions on random PSD instances.
    Bench {
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        trials: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Naive,
    Structured,
    Auto,
}

#[derive(Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NotPsd,
    Inconclusive,
    Error,
}

/// What a command produced, before rendering.
pub struct Outcome {
    pub status: Status,
    pub exit: u8,
    pub payload: Value,
    pub summary: Vec<String>,
    pub seed_used: bool,
}

impl Outcome {
    pub fn ok(payload: Value, summary: Vec<String>) -> Self {
        Self {
            status: Status::Ok,
            exit: 0,
            payload,
            summary,
            seed_used: false,
        }
    }

    pub fn with_seed(mut self) -> Self {
        self.seed_used = true;
        self
    }
}

#[derive(Serialize)]
struct CommandResult<'a> {
    command: &'a str,
    status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    payload: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing_ms: Option<f64>,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::CheckPsd { .. } => "check-psd",
        Command::Decompose { .. } => "decompose",
        Command::GenSimple { .. } => "gen-simple",
        Command::SosRank { .. } => "sos-rank",
        Command::ReduceRank { .. } => "reduce-rank",
        Command::Meig { .. } => "meig",
        Command::Bench { .. } => "bench",
    }
}

fn tolerances(cli: &Cli) -> anyhow::Result<Tolerances> {
    let tol = match cli.tol {
        Some(t) => Tolerances::default().with_decision_tol(t),
        None => Tolerances::default(),
    };
    tol.validate()?;
    Ok(tol)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 1 } else { 0 });
        }
    };
    let name = command_name(&cli.command);
    let started = Instant::now();
    let outcome = tolerances(&cli).and_then(|tol| commands::run(&cli, &tol)).unwrap_or_else(|err| Outcome {
        status: Status::Error,
        exit: 1,
        payload: json!({ "error": format!("{err:#}") }),
        summary: vec![format!("error: {err:#}")],
        seed_used: false,
    });
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut out = stdout().lock();
    if cli.json {
        let result = CommandResult {
            command: name,
            status: outcome.status,
            seed: outcome.seed_used.then_some(cli.seed),
            payload: outcome.payload,
            timing_ms: cli.timing.then_some(elapsed_ms),
        };
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&result).expect("result serializes"));
    } else {
        let to_stderr = outcome.status == Status::Error;
        for line in &outcome.summary {
            let _ = if to_stderr {
                writeln!(stderr(), "{line}")
            } else {
                writeln!(out, "{line}")
            };
        }
        if outcome.seed_used {
            let _ = writeln!(out, "seed: {}", cli.seed);
        }
        if cli.timing {
            let _ = writeln!(out, "time: {elapsed_ms:.1} ms");
        }
    }
    ExitCode::from(outcome.exit)
}
