use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harness::{execute, Command, Options, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "stablab", version, about = "Stable-solution estimates laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one problem; writes the solution dump and a summary row.
    Solve(Common),
    /// Trace the stable branch from lambda = 0.
    Branch(Common),
    /// Run the estimate suite; exits 4 if any row fails.
    Verify(Common),
    /// Observed orders over grid refinements.
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output.dir` next to the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "STABLAB_THREADS")]
    threads: Option<usize>,
    /// Omit the timestamp line from CSV output.
    #[arg(long)]
    no_timestamp: bool,
    /// Overwrite the regression fixtures with this run's ratios.
    #[arg(long)]
    bless: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Branch(a) => (Command::Branch, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Convergence(a) => (Command::Convergence, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let opts = Options {
        config: args.config,
        out: args.out,
        timestamp: !args.no_timestamp,
        bless: args.bless,
    };
    match execute(cmd, &opts) {
        Ok(out) => {
            println!("{}", out.message.trim_end());
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
