use std::path::PathBuf;

use clap::{Parser, Subcommand};

use outerloop::cli::{self, validate::ValidateOptions, SimulateOptions};

#[derive(Parser)]
#[command(
    name = "outerloop",
    version,
    about = "Outer-loop controller simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or bundled preset and write trajectory.csv and
    /// manifest.toml.
    Simulate {
        /// Scenario TOML path or preset name.
        config: String,
        /// Output directory (default: $OUTERLOOP_OUT_DIR/<name> or runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override timing.plant_substeps.
        #[arg(long)]
        plant_substeps: Option<usize>,
        /// Override timing.duration (s).
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run model anchors, regressor suites, gain gates and short presets.
    Validate {
        /// Only run checks whose name contains this text.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, hide = true)]
        perturb_dynamics: bool,
    },
    /// Extract the series of one figure from a trajectory CSV.
    Plotdata {
        csv: PathBuf,
        #[arg(long)]
        figure: String,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled presets.
    Presets,
}

fn main() {
    let args = Cli::parse();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = match args.command {
        Command::Simulate {
            config,
            out: dir,
            plant_substeps,
            duration,
        } => cli::cmd_simulate(
            &SimulateOptions {
                config,
                out: dir,
                plant_substeps,
                duration,
            },
            &mut out,
            &mut err,
        ),
        Command::Validate {
            filter,
            perturb_dynamics,
        } => cli::cmd_validate(
            &ValidateOptions {
                filter,
                perturb_dynamics,
            },
            &mut out,
            &mut err,
        ),
        Command::Plotdata {
            csv,
            figure,
            out: dest,
        } => cli::cmd_plotdata(&csv, &figure, dest.as_deref(), &mut out, &mut err),
        Command::Presets => {
            use std::io::Write;
            for name in cli::presets::names() {
                let _ = writeln!(out, "{name}");
            }
            cli::EXIT_OK
        }
    };
    std::process::exit(code);
}
