use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use capcal_cli::commands::{self, CommandResult, Options};
use capcal_cli::config::LoadedConfig;
use capcal_core::InversionMethod;

#[derive(Parser)]
#[command(name = "capcal", version, about = "Calibrate survey problem rates against utilization data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides [run] output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Threshold inversion method; overrides [run] method.
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<InversionMethod>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Survey-implied utilization thresholds per facility.
    Calibrate,
    /// Chi-square tests of problems against neighborhood.
    Chisq,
    /// Distance-decay fits and central-access index.
    Spatial,
    /// Synthetic data and threshold round-trip report.
    Simulate,
    /// Every analysis the config has inputs for.
    Report,
}

fn parse_method(s: &str) -> Result<InversionMethod, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config_path) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let cfg = match LoadedConfig::load(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let opts = Options { out: cli.out, method: cli.method };
    let result: CommandResult = match cli.command {
        Command::Calibrate => commands::cmd_calibrate(&cfg, &opts),
        Command::Chisq => commands::cmd_chisq(&cfg, &opts),
        Command::Spatial => commands::cmd_spatial(&cfg, &opts),
        Command::Simulate => commands::cmd_simulate(&cfg, &opts),
        Command::Report => commands::cmd_report(&cfg, &opts),
    };
    let (outcome, err) = match result {
        Ok(o) => (o, None),
        Err((e, o)) => (o, Some(e)),
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for f in &outcome.files {
        println!("{}", f.display());
    }
    match err {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
