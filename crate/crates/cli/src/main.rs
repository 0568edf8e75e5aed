use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdp::fxp::FxpFormat;
use hdp::tensorio::Distribution;
use hdp_cli::config::parse_list;
use hdp_cli::{cmd_compare, cmd_gen, cmd_run, cmd_sweep, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "hdp", version, about = "Hybrid dynamic pruning for attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic HDPT tensor.
    Gen {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value = "gaussian(0,1)")]
        dist: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "Q8.8")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one configuration and write output, masks and stats.
    Run(Common),
    /// Evaluate every (rho_b, tau_h) pair of the grid.
    Sweep(Common),
    /// Compare pruning masks with Top-K at the same pruned fraction.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Compare Top-K against itself.
        #[arg(long)]
        self_compare: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// One value or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<String>,
    /// One value or a comma list.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    simulate: bool,
    #[arg(long)]
    format: Option<String>,
    /// `exclude` or `zero`.
    #[arg(long)]
    pruned_logit: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let o = Overrides {
            rho_b: self.rho.as_deref().map(|s| parse_list("rho_b", s)).transpose()?,
            tau_h: self.tau.as_deref().map(|s| parse_list("tau_h", s)).transpose()?,
            seed: self.seed,
            out_dir: self.out.clone(),
            simulate: self.simulate,
            format: self.format.clone(),
            pruned_logit: self.pruned_logit.clone(),
        };
        RunConfig::resolve(self.config.as_deref(), &o)
    }
}

fn dispatch(cmd: Command) -> Result<String, CliError> {
    match cmd {
        Command::Gen { rows, cols, dist, seed, format, out } => {
            let dist: Distribution = dist.parse().map_err(|e| CliError::Config(format!("dist: {e}")))?;
            let format: FxpFormat = format.parse().map_err(|e| CliError::Config(format!("format: {e}")))?;
            cmd_gen(rows, cols, dist, seed, format, &out)
        }
        Command::Run(c) => cmd_run(&c.resolve()?),
        Command::Sweep(c) => cmd_sweep(&c.resolve()?),
        Command::Compare { common, self_compare } => cmd_compare(&common.resolve()?, self_compare),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hdp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
