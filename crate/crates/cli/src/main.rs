//! `irealize`: check, extract, run and normalize proof files; run the
//! exact-real demos.

mod app;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "irealize",
    version,
    about = "Monadic realizers and witness extraction for HA + EM1"
)]
pub struct Cli {
    /// Output style.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    pub format: Format,
    /// Seed for randomly generated demo inputs.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Sexpr,
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse a proof file and check every derivation and term.
    Check { file: PathBuf },
    /// Decorate a closed derivation with its realizer.
    Extract {
        file: PathBuf,
        #[arg(long)]
        deriv: String,
        #[arg(long, default_value = "ir")]
        monad: String,
    },
    /// Evaluate a named term, optionally inside the learning loop.
    Run {
        file: PathBuf,
        #[arg(long)]
        term: String,
        /// Initial state entry `KEY=W`; KEY is `REL[a,..]` or `(atomrel x ATOM)[a,..]`.
        #[arg(long = "state")]
        state: Vec<String>,
        #[arg(long)]
        learn: bool,
        #[arg(long)]
        fuel: Option<usize>,
        #[arg(long)]
        trace: bool,
    },
    /// Normalize a derivation, printing one line per rewrite with --trace.
    Normalize {
        file: PathBuf,
        #[arg(long)]
        deriv: String,
        #[arg(long)]
        fuel: Option<usize>,
        #[arg(long)]
        trace: bool,
    },
    /// Normalize a closed derivation of ∃x P and print the witness.
    ExtractWitness {
        file: PathBuf,
        #[arg(long)]
        deriv: String,
        #[arg(long)]
        fuel: Option<usize>,
        #[arg(long)]
        trace: bool,
    },
    /// Exact real arithmetic demos.
    #[command(subcommand)]
    Demo(Demo),
}

#[derive(Subcommand)]
pub enum Demo {
    /// Index of the least of some reals, found by learning.
    LeastElement {
        /// Comma separated rationals `p/q`.
        #[arg(long, conflicts_with = "random")]
        values: Option<String>,
        /// Use this many seeded random rationals instead.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 2)]
        precision: u32,
        #[arg(long)]
        trace: bool,
    },
    /// A point and two others bounding a convex angle around all points.
    ConvexAngle {
        /// Points `x,y;x,y;...` with rational coordinates.
        #[arg(long, conflicts_with = "random")]
        points: Option<String>,
        #[arg(long)]
        random: Option<usize>,
        /// Largest precision tried when deciding an orientation.
        #[arg(long, default_value_t = 64)]
        precision: u32,
        #[arg(long)]
        trace: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut out = std::io::stdout().lock();
    match app::run(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
