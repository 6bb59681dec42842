use clap::{Args, Parser, Subcommand};
use linf_accel::config::{self, Mode, RunConfig};
use linf_accel::run::{self, RunError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Minimum L∞-acceleration curves: integrate, shoot, check and compare.
#[derive(Parser, Debug)]
#[command(name = "linf-accel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate an initial value problem.
    Ivp(RunArgs),
    /// Solve a two-point boundary problem.
    Bvp(RunArgs),
    /// Check the per-segment necessary conditions on a trajectory.
    Check(RunArgs),
    /// Natural cubic spline baseline through data points.
    Baseline(RunArgs),
    /// Shipped configurations.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand, Debug)]
enum PresetAction {
    List,
    /// Print a preset's configuration as JSON.
    Show { name: String },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn load(args: &RunArgs, mode: Mode) -> Result<RunConfig, RunError> {
    let cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| RunError::Validation(vec![e]))?
        }
        (None, Some(name)) => config::preset(name).ok_or_else(|| RunError::Validation(vec![format!("unknown preset {name}")]))?,
        (None, None) => unreachable!("clap requires one of --config, --preset"),
    };
    if cfg.mode != mode {
        let name = |m: Mode| serde_json::to_value(m).unwrap().as_str().unwrap().to_string();
        return Err(RunError::Validation(vec![format!("config mode {} does not match subcommand {}", name(cfg.mode), name(mode))]));
    }
    Ok(cfg)
}

fn dispatch(args: &RunArgs, mode: Mode) -> i32 {
    match load(args, mode) {
        Ok(cfg) => run::run(&cfg, &args.out),
        Err(e) => {
            println!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Ivp(a) => dispatch(a, Mode::Ivp),
        Command::Bvp(a) => dispatch(a, Mode::Bvp),
        Command::Check(a) => dispatch(a, Mode::Check),
        Command::Baseline(a) => dispatch(a, Mode::Baseline),
        Command::Presets { action: PresetAction::List } => {
            for (name, about) in config::PRESETS {
                println!("{name:<20} {about}");
            }
            0
        }
        Command::Presets { action: PresetAction::Show { name } } => match config::preset(name) {
            Some(cfg) => {
                println!("{}", cfg.to_json());
                0
            }
            None => {
                println!("{}", RunError::Validation(vec![format!("unknown preset {name}")]).to_json());
                run::EXIT_VALIDATION
            }
        },
    };
    ExitCode::from(code as u8)
}
