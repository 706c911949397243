use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use conserv_cli::{commands, CliError, RunConfig};
use conserv_core::engine::Mode;

#[derive(Parser)]
#[command(name = "conserv", version, about = "Run, certify and check conservative fixed-point iterations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate to the tolerance; writes trace.csv and summary.json.
    Run(Flags),
    /// Check orthonormality, neutrality, norm reduction and dissipativity; writes verify.json.
    Verify(Flags),
    /// Compare the fixed point with the reference solver; writes compare.json.
    Compare(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sync,
    Async,
}

/// Each flag overrides the matching field of the configuration file.
#[derive(Args)]
struct Flags {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// lasso_huber, lasso_augmented, minimax_fir, minimax_fir_split, svm or sparse_equalizer.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Trigger probability in async mode.
    #[arg(long)]
    p: Option<f64>,
    /// Relaxation factor in (0, 1].
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record distance to a reference fixed point in the trace.
    #[arg(long)]
    reference: bool,
    /// Record the objective in the trace.
    #[arg(long)]
    objective: bool,
}

impl Flags {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.problem {
            cfg.problem = p.parse()?;
        }
        if let Some(m) = self.mode {
            cfg.mode = match m {
                ModeArg::Sync => Mode::Sync,
                ModeArg::Async => Mode::Async,
            };
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(p, gamma, seed, tol, max_iters, out);
        cfg.reference |= self.reference;
        cfg.objective |= self.objective;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<String, CliError> {
    Ok(match command {
        Command::Run(flags) => {
            let cfg = flags.resolve()?;
            let s = commands::run(&cfg)?;
            format!(
                "{}: converged in {} iterations (self-residual {:e}); wrote {}",
                s.problem,
                s.iterations,
                s.final_residual.unwrap_or(f64::NAN),
                cfg.out.display()
            )
        }
        Command::Verify(flags) => {
            let cfg = flags.resolve()?;
            let r = commands::verify(&cfg)?;
            format!("{}: all applicable certificates pass; wrote {}", r.problem, cfg.out.join(commands::VERIFY_FILE).display())
        }
        Command::Compare(flags) => {
            let cfg = flags.resolve()?;
            let r = commands::compare(&cfg)?;
            format!(
                "{}: matches reference (max difference {:e}); wrote {}",
                r.comparison.problem,
                r.comparison.solution_error,
                cfg.out.join(commands::COMPARE_FILE).display()
            )
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("conserv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
