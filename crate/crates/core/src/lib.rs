//! Simulator for a PLL-free, ring-oscillator-based multi-DPSK transmitter.
//!
//! The transmit chain modulates phase directly inside an N-stage ring
//! oscillator: a control unit turns each baseband pulse into a trigger
//! window synchronized to the ring, and each trigger momentarily connects
//! a small discharge capacitor to one oscillator node, extracting charge
//! and delaying every subsequent edge by a fixed 22.5° step. Symbols are
//! encoded as trigger counts (1..=16 per symbol period), which yields
//! 16/8/4/2-point differential PSK from one hardware structure. The
//! receive side recovers the carrier, measures settled phases, slices
//! differentially, and reports EVM, error rates and spectra.
//!
//! Crate layout follows the chain:
//!
//! * [`config`] — domain types, config file format, validation
//! * [`oscillator`] — event-driven PWL ring + phase-domain model,
//!   charge-extraction trigger, `c_dis` calibration
//! * [`control`] — BBP-to-trigger-window logic, delay tuning, PVT Monte
//!   Carlo
//! * [`modulator`] — Gray-coded DPSK encoding, trigger scheduling, phase
//!   trajectories
//! * [`frontend`] — waveform synthesis and impairments
//! * [`receiver`] — carrier recovery, differential demodulation
//! * [`metrics`] — EVM, error rates, averaged-periodogram PSD
//! * [`scenario`] — batch runner behind the CLI
//!
//! Independent runs (Monte Carlo trials, sweep rows) execute in parallel
//! through [`par`] when the default `parallel` feature is on; disabling it
//! falls back to sequential loops with identical results.

pub mod config;
pub mod control;
pub mod error;
pub mod frontend;
pub mod metrics;
pub mod modulator;
pub mod oscillator;
pub mod par;
pub mod phase;
pub mod profiles;
pub mod receiver;
pub mod scenario;

pub use config::{mode_params, validate_config, ModemTiming, ModulationMode, SimConfig};
pub use control::{
    check_window_alignment, generate_tp_windows, monte_carlo_alignment, tune_delays,
    BbpPulseTrain, ControlConfig, TpWindow,
};
pub use error::{Error, Result};
pub use frontend::{apply_impairments, synthesize_waveform, ImpairmentConfig, Waveform};
pub use metrics::{
    compute_evm, compute_spectrum, error_rates, EvmNormalization, EvmReference, EvmReport,
    SpectrumReport,
};
pub use modulator::{encode_dpsk, modulate, schedule_bbps, DpskFrame, PhaseTrajectory};
pub use oscillator::{
    calibrate_cdis, free_running_period, phase_shift_per_trigger, simulate_ring, IsfProfile,
    OscConfig, RingModel, RingSim, RingState,
};
pub use phase::PhaseAngle;
pub use receiver::{decide, demodulate_dpsk, estimate_carrier, CdrEstimate, DemodResult};
pub use scenario::{run_calibrate, run_simulate, run_spectrum, run_sweep, OutputKind, Scenario};
