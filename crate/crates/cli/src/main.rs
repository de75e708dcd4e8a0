use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmesim::gme::GmeParams;
use gmesim_cli::commands::{self, FIELD_HEADER, SWEEP_HEADER};
use gmesim_cli::config::{ExperimentConfig, Format};
use gmesim_cli::CliError;

/// Single-atom analogue of gravity-mediated entanglement: protocol
/// simulation, decoherence sweeps, field-theory tables and the gravitational
/// phase calculator.
#[derive(Debug, Parser)]
#[command(name = "gmesim", version)]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; point i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shots per tomography setting.
    #[arg(long, global = true)]
    shots: Option<u64>,
    /// Use exact probabilities instead of sampled shots.
    #[arg(long, global = true)]
    infinite_shots: bool,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Preparation, interaction, tomography and metrics for each configured point.
    Simulate,
    /// W(τ) at fixed Δτ with the noise model active.
    Sweep,
    /// J, K and D tables plus the near-field residual.
    Fieldtheory,
    /// Gravitational phase for two superposed masses.
    GmePhase {
        #[arg(long, default_value_t = 1e-14)]
        mass_kg: f64,
        #[arg(long, default_value_t = 200e-6)]
        d_uu_m: f64,
        #[arg(long, default_value_t = 280e-6)]
        d_ud_m: f64,
        #[arg(long, default_value_t = 2.5)]
        tau_s: f64,
        /// Internal frequencies ω_n, ω_j for the mass correction.
        #[arg(long, num_args = 2, value_names = ["OMEGA_N", "OMEGA_J"])]
        omega_spin_rad_per_s: Option<Vec<f64>>,
    },
    /// Print the canonical form of a pulse program ("fig1c" for the built-in).
    Parse { program: String },
}

fn config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = Some(seed);
    }
    if let Some(shots) = cli.shots {
        cfg.run.shots = shots;
        cfg.run.infinite_shots = false;
    }
    if cli.infinite_shots {
        cfg.run.infinite_shots = true;
    }
    if let Some(f) = cli.format {
        cfg.run.format = f;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = config(cli)?;
    let format = cfg.run.format;
    match &cli.command {
        Command::Simulate => commands::render_simulate(&commands::simulate(&cfg)?, format),
        Command::Sweep => commands::render_rows(&commands::sweep(&cfg)?, &SWEEP_HEADER, format),
        Command::Fieldtheory => commands::render_rows(&commands::fieldtheory(&cfg)?, &FIELD_HEADER, format),
        Command::GmePhase { mass_kg, d_uu_m, d_ud_m, tau_s, omega_spin_rad_per_s } => {
            let mut p = GmeParams::new(*mass_kg, *d_uu_m, *d_ud_m, *tau_s);
            p.omega_spin = omega_spin_rad_per_s.as_ref().map(|w| [w[0], w[1]]);
            commands::render_json(&commands::gme_phase(&p)?)
        }
        Command::Parse { program } => commands::parse_program(program, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = execute(&cli).and_then(|text| match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gmesim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
