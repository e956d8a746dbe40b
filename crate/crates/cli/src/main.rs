//! `jetgamma`: verification of collective commutation closure for tuples of
//! total-differential operators, extraction of bi-differential Christoffel
//! symbols, and bi-Hamiltonian hierarchy generation.
//!
//! Exit codes: 0 = all checks pass, 2 = a mathematical verdict is negative,
//! 1 = usage or input error.

mod commands;

use jetgamma_cli as _;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "jetgamma",
    about = "Symbolic total-differential operator calculus on jet spaces",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub(crate) struct CommonArgs {
    /// Scenario file (TOML).
    pub(crate) scenario: PathBuf,
    /// Comma-separated operator names; defaults to the scenario's list.
    #[arg(long, value_delimiter = ',')]
    pub(crate) ops: Vec<String>,
    /// Ansatz derivative-order bound per argument slot.
    #[arg(long)]
    pub(crate) order: Option<u32>,
    /// Ansatz coefficient-monomial degree bound.
    #[arg(long)]
    pub(crate) degree: Option<u32>,
    /// Match the identities on shell (uses the scenario equation).
    #[arg(long)]
    pub(crate) on_shell: bool,
    /// Emit machine-readable JSON instead of text.
    #[arg(long)]
    pub(crate) json: bool,
    /// Seed for the numeric cross-check points.
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Check collective commutation closure of the selected tuple.
    CheckInvolutive(CommonArgs),
    /// Extract the Christoffel symbols, gauge report and symmetry table.
    ExtractGamma {
        #[command(flatten)]
        common: CommonArgs,
        /// Also transform the family by the reparametrization in this file
        /// and cross-validate against direct extraction.
        #[arg(long)]
        transform: Option<PathBuf>,
    },
    /// Check linear compatibility via the λ-combination bracket.
    LinearCompat(CommonArgs),
    /// Run the bi-Hamiltonian recursion and verify the hierarchy.
    Magri {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// The two structures, comma separated; defaults to the scenario pair.
        #[arg(long, value_delimiter = ',')]
        pair: Vec<String>,
        /// Number of recursion steps beyond the seed functional.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Print the bracket induced by a single operator on its domain.
    Bracket {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Operator name.
        #[arg(long)]
        op: String,
        #[arg(long)]
        order: Option<u32>,
        #[arg(long)]
        degree: Option<u32>,
        #[arg(long)]
        on_shell: bool,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe (e.g. `jetgamma ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap reserves exit code 2 for usage errors; this tool uses 2
            // for negative mathematical verdicts, so usage errors map to 1.
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::CheckInvolutive(common) => commands::check_involutive(&common),
        Command::ExtractGamma { common, transform } => {
            commands::extract_gamma_cmd(&common, transform.as_deref())
        }
        Command::LinearCompat(common) => commands::linear_compat(&common),
        Command::Magri {
            scenario,
            pair,
            steps,
            json,
        } => commands::magri_cmd(&scenario, &pair, steps, json),
        Command::Bracket {
            scenario,
            op,
            order,
            degree,
            on_shell,
            json,
        } => commands::bracket(&scenario, &op, order, degree, on_shell, json),
    }
}
