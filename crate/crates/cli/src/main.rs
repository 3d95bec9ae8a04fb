use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use d2dstore_cli::commands::{execute, Command, RunManifest};

#[derive(Parser)]
#[command(name = "d2dstore", version, about = "Cost model, simulator and code search for D2D-assisted storage")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form costs over the configured codes, schemes and grid.
    Analytic(Common),
    /// Discrete-event simulation with a per-point comparison report.
    Simulate(Common),
    /// Minimum-cost code per repair interval.
    Search(Common),
    /// Data series for the reference figures.
    Figures(Common),
    /// Golden-value comparison and acceptance criteria.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Criteria to run, e.g. `--criteria C1,C4` (all by default).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Config override `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, criteria) = match cli.command {
        Cmd::Analytic(c) => (Command::Analytic, c, Vec::new()),
        Cmd::Simulate(c) => (Command::Simulate, c, Vec::new()),
        Cmd::Search(c) => (Command::Search, c, Vec::new()),
        Cmd::Figures(c) => (Command::Figures, c, Vec::new()),
        Cmd::Validate { common, criteria } => (Command::Validate, common, criteria),
    };
    let manifest = RunManifest {
        command,
        config_path: common.config,
        output_dir: common.out,
        seed: common.seed,
        overrides: common.overrides,
        criteria,
        force: common.force,
    };
    eprintln!("d2dstore {}: writing to {}", command.as_str(), manifest.output_dir.display());
    match execute(&manifest, |line| eprintln!("{line}")) {
        Ok(out) => {
            for name in out.names() {
                eprintln!("wrote {}", manifest.output_dir.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
