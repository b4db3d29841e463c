use std::path::PathBuf;
use std::process::ExitCode;

use avqmetts_cli::{cmd_binder, cmd_ed, cmd_fidelity, cmd_run, CliResult, Overrides, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Finite-temperature Ising simulations by adaptive variational METTS.
///
/// Relative output directories are placed under $AVQMETTS_OUTPUT_ROOT when it
/// is set. Exit codes: 0 success, 2 configuration error, 3 numerical failure,
/// 4 no Binder crossing, 1 other errors.
#[derive(Parser)]
#[command(name = "avqmetts", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a METTS ensemble at every configured beta.
    Run(Common),
    /// Exact spectrum and thermal averages.
    Ed(Common),
    /// Binder-cumulant scans over h_x and their crossings.
    Binder(Common),
    /// One variational trajectory against the exact imaginary-time flow.
    Fidelity(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Inverse temperatures, comma separated.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Walkers.
    #[arg(long)]
    s_w: Option<usize>,
    /// Recorded samples per walker.
    #[arg(long)]
    s_0: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to every available core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    lx: Option<usize>,
    #[arg(long)]
    ly: Option<usize>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    h_x: Option<f64>,
    #[arg(long)]
    h_z: Option<f64>,
    #[arg(long)]
    delta_tau: Option<f64>,
    #[arg(long)]
    l_cut: Option<f64>,
    #[arg(long)]
    solver_cutoff: Option<f64>,
}

impl Common {
    fn resolve(self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply(&Overrides {
            output: self.output,
            beta: self.beta,
            s_w: self.s_w,
            s_0: self.s_0,
            burn_in: self.burn_in,
            seed: self.seed,
            threads: self.threads,
            lx: self.lx,
            ly: self.ly,
            j: self.j,
            h_x: self.h_x,
            h_z: self.h_z,
            delta_tau: self.delta_tau,
            l_cut: self.l_cut,
            solver_cutoff: self.solver_cutoff,
        });
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => c.resolve().and_then(|c| cmd_run(&c)),
        Command::Ed(c) => c.resolve().and_then(|c| cmd_ed(&c)),
        Command::Binder(c) => c.resolve().and_then(|c| cmd_binder(&c)),
        Command::Fidelity(c) => c.resolve().and_then(|c| cmd_fidelity(&c)),
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("avqmetts: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
