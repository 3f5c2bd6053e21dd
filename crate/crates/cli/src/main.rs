//! Batch scenario runner for the ringtx simulator.
//!
//! Subcommands: `simulate` (full chain with CSV artifacts and a run
//! summary), `calibrate` (discharge-capacitor root finding in both
//! models), `sweep` (metric vs. parameter CSV) and `spectrum` (PSD of the
//! scenario waveform). Exit codes: 0 success, 2 config error, 3 runtime
//! model error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ringtx_core::error::Error;
use ringtx_core::oscillator::RingModel;
use ringtx_core::phase::PhaseAngle;
use ringtx_core::scenario::{run_calibrate, run_simulate, run_spectrum, run_sweep, Scenario};

#[derive(Parser)]
#[command(name = "ringtx", version, about = "ring-oscillator multi-DPSK transmitter simulator")]
struct Cli {
    /// Scenario config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the oscillator model (circuit | phase).
    #[arg(long, global = true)]
    model: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full modulation/demodulation chain and write artifacts.
    Simulate,
    /// Find the discharge capacitance for a target phase step.
    Calibrate {
        /// Target step in degrees.
        #[arg(long, default_value_t = 22.5)]
        target_lsb_deg: f64,
    },
    /// Rerun the scenario across parameter values and tabulate metrics.
    Sweep {
        /// Parameter path, e.g. impairments.phase_noise_diffusion.
        #[arg(long)]
        axis: String,
        /// Comma-separated values (SI suffixes allowed for numeric axes).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Compute the PSD of the scenario waveform.
    Spectrum,
}

fn load_scenario(cli: &Cli) -> Result<Scenario, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut scn = Scenario::parse_text(&text)?;
    if let Some(seed) = cli.seed {
        scn.sim.rng_seed = seed;
        scn.sim.impairments.seed = 0;
        scn.sim = ringtx_core::config::validate_config(scn.sim)?;
    }
    if let Some(model) = &cli.model {
        scn.model = RingModel::parse(model)?;
    }
    Ok(scn)
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Simulate => {
            let scn = load_scenario(cli)?;
            let out = run_simulate(&scn, Some(&cli.out))?;
            print!("{}", out.summary_text);
            for p in &out.written {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Calibrate { target_lsb_deg } => {
            let scn = load_scenario(cli)?;
            let out = run_calibrate(
                &scn.sim.osc,
                PhaseAngle::from_degrees(*target_lsb_deg),
                Some(&cli.out),
            )?;
            println!("target_deg={}", out.target_deg);
            println!("circuit_cdis_farad={:e}", out.circuit_cdis);
            println!("circuit_residual_deg={:e}", out.circuit_residual_deg);
            println!("phase_cdis_farad={:e}", out.phase_cdis);
            println!("phase_residual_deg={:e}", out.phase_residual_deg);
            if let Some(p) = &out.written {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Sweep { axis, values } => {
            let scn = load_scenario(cli)?;
            let out = run_sweep(&scn, axis, values, Some(&cli.out))?;
            print!("{}", out.csv_text);
            if let Some(p) = &out.written {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Spectrum => {
            let scn = load_scenario(cli)?;
            let (spectrum, suppression, written) = run_spectrum(&scn, Some(&cli.out))?;
            println!("nfft={}", spectrum.nfft);
            println!("segments={}", spectrum.segments_averaged);
            println!(
                "carrier_offset_hz={}",
                spectrum.freq_bins[spectrum.carrier_bin]
            );
            for (off, db) in &suppression {
                println!("suppression_db@{off:+}={db}");
            }
            if let Some(p) = &written {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
