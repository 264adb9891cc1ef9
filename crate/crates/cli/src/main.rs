use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sinterpress_cli::commands::{
    cmd_compaction_curve, cmd_dilatometer, cmd_heat1d, cmd_point_run, cmd_press,
    cmd_yield_surface, CmdError,
};
use sinterpress_cli::config::RunConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sinterpress",
    version,
    about = "Material-point simulation of ceramic powder compaction and sintering",
    after_help = "Config files hold flat `key = value` lines (# comments). Material keys \
match the parameter table (sigma_m, E, nu, eta_v1, ...); command options are dotted \
(press.stroke_ratio, dilatometer.t_max_C, heat.schedule_csv, ...). `--set` wins over \
the config file, which wins over built-in defaults."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file with `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output CSV path (default: stdout, or the config `out` key).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Override one key, e.g. --set sigma_m=120 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Write the effective configuration to a reloadable file.
    #[arg(long, global = true, value_name = "PATH")]
    dump_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compaction-curve closed forms and the geometric diagnostic.
    CompactionCurve,
    /// Yield-surface meridians for a list of densities.
    YieldSurface,
    /// Free-sintering dilatometer ramp.
    Dilatometer,
    /// Die pressing with axial unload.
    Press,
    /// 1D firing of a thermally coupled column.
    Heat1d,
    /// Generic load program from a file.
    PointRun,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CmdError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            sinterpress_cli::ConfigError(format!("cannot read {}: {e}", path.display()))
        })?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    for assignment in &cli.set {
        cfg.apply_set(assignment)?;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CmdError> {
    let cfg = build_config(cli)?;
    if let Some(path) = &cli.dump_config {
        std::fs::write(path, cfg.dump()).map_err(|e| {
            sinterpress_cli::ConfigError(format!("cannot write {}: {e}", path.display()))
        })?;
    }
    let csv = match cli.command {
        Command::CompactionCurve => cmd_compaction_curve(&cfg)?,
        Command::YieldSurface => cmd_yield_surface(&cfg)?,
        Command::Dilatometer => cmd_dilatometer(&cfg)?,
        Command::Press => cmd_press(&cfg)?,
        Command::Heat1d => cmd_heat1d(&cfg)?,
        Command::PointRun => cmd_point_run(&cfg)?,
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| {
            sinterpress_cli::ConfigError(format!("cannot write {}: {e}", path.display()))
        })?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CmdError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
