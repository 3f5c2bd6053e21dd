//! Batch scenario runner: the full encode → schedule → trigger → ring →
//! frontend → receiver → metrics chain, plus calibration, parameter sweeps
//! and spectrum runs, with CSV artifacts and a key=value run summary.
//!
//! Everything is deterministic under the scenario seed: payload bits,
//! impairment streams, Monte Carlo trials and per-row sweep seeds all
//! derive from it, so identical configs produce byte-identical summaries.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{
    build_sim_config, parse_si, validate_config, ModulationMode, RawConfig, SimConfig,
};
use crate::control::check_window_alignment;
use crate::error::{Error, Result};
use crate::frontend::{apply_impairments, synthesize_waveform, Waveform};
use crate::metrics::{
    compute_evm, compute_spectrum, error_rates, EvmNormalization, EvmReference, EvmReport,
    ErrorRates, SpectrumReport,
};
use crate::modulator::{encode_dpsk, modulate, DpskFrame, ModulationRun};
use crate::oscillator::{
    calibrate_cdis, measure_single_trigger_shift, phase_shift_per_trigger, IsfProfile, OscConfig,
    RingModel,
};
use crate::par::{derive_seed, map_indexed};
use crate::phase::PhaseAngle;
use crate::receiver::{
    demodulate_dpsk, estimate_carrier_at_epoch, estimate_symbol_epoch, write_demod_csv,
};

/// Artifact kinds a run can emit (one file each).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OutputKind {
    Constellation,
    Spectrum,
    Waveform,
    Windows,
    Summary,
}

impl OutputKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constellation" => Ok(OutputKind::Constellation),
            "spectrum" => Ok(OutputKind::Spectrum),
            "waveform" => Ok(OutputKind::Waveform),
            "windows" => Ok(OutputKind::Windows),
            "summary" => Ok(OutputKind::Summary),
            other => Err(Error::Config(format!("unknown output kind '{other}'"))),
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            OutputKind::Constellation => "constellation.csv",
            OutputKind::Spectrum => "spectrum.csv",
            OutputKind::Waveform => "waveform.csv",
            OutputKind::Windows => "windows.csv",
            OutputKind::Summary => "run_summary",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputKind::Constellation => "constellation",
            OutputKind::Spectrum => "spectrum",
            OutputKind::Waveform => "waveform",
            OutputKind::Windows => "windows",
            OutputKind::Summary => "summary",
        }
    }
}

/// A complete simulation scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub sim: SimConfig,
    pub mode: ModulationMode,
    /// Transmitted symbols including the reference (>= 2).
    pub n_symbols: usize,
    pub outputs: BTreeSet<OutputKind>,
    pub model: RingModel,
    /// FFT size for spectrum artifacts (capped to the waveform length).
    pub nfft: usize,
    /// Run the blind symbol-timing search instead of assuming epoch 0.
    pub estimate_timing: bool,
}

impl Scenario {
    pub fn new(sim: SimConfig, mode: ModulationMode, n_symbols: usize, model: RingModel) -> Self {
        Scenario {
            sim,
            mode,
            n_symbols,
            outputs: BTreeSet::from([OutputKind::Summary]),
            model,
            nfft: 2048,
            estimate_timing: false,
        }
    }

    /// Parse a scenario config (simulation sections plus `scenario.*`).
    pub fn parse_text(text: &str) -> Result<Scenario> {
        let mut raw = RawConfig::parse(text)?;
        let sim = build_sim_config(&mut raw)?;
        let mode = match raw.get_str("scenario.mode") {
            Some(s) => ModulationMode::parse(&s)?,
            None => ModulationMode::Dpsk16,
        };
        let n_symbols = raw.get_usize("scenario.n_symbols")?.unwrap_or(256);
        let model = match raw.get_str("scenario.model") {
            Some(s) => RingModel::parse(&s)?,
            None => RingModel::PhaseDomain,
        };
        let outputs = match raw.get_str("scenario.outputs") {
            Some(list) => list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(OutputKind::parse)
                .collect::<Result<BTreeSet<_>>>()?,
            None => BTreeSet::from([OutputKind::Summary]),
        };
        let nfft = raw.get_usize("scenario.nfft")?.unwrap_or(2048);
        let estimate_timing = match raw.get_str("scenario.estimate_timing") {
            Some(s) => match s.trim() {
                "true" | "1" => true,
                "false" | "0" => false,
                other => {
                    return Err(Error::Config(format!(
                        "scenario.estimate_timing: expected true/false, got '{other}'"
                    )))
                }
            },
            None => false,
        };
        raw.finish()?;
        let sim = validate_config(sim)?;
        let scn = Scenario {
            sim,
            mode,
            n_symbols,
            outputs,
            model,
            nfft,
            estimate_timing,
        };
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_symbols < 2 {
            return Err(Error::Config(
                "scenario.n_symbols must be >= 2 (reference plus data)".into(),
            ));
        }
        if self.nfft < 4 {
            return Err(Error::Config("scenario.nfft must be >= 4".into()));
        }
        Ok(())
    }

    pub fn to_config_text(&self) -> String {
        let mut s = self.sim.to_config_text();
        let _ = writeln!(s, "scenario.mode = {}", self.mode.name());
        let _ = writeln!(s, "scenario.n_symbols = {}", self.n_symbols);
        let _ = writeln!(s, "scenario.model = {}", self.model.name());
        let outs: Vec<&str> = self.outputs.iter().map(|o| o.name()).collect();
        let _ = writeln!(s, "scenario.outputs = {}", outs.join(","));
        let _ = writeln!(s, "scenario.nfft = {}", self.nfft);
        let _ = writeln!(s, "scenario.estimate_timing = {}", self.estimate_timing);
        s
    }
}

/// Everything a simulate run yields.
#[derive(Debug)]
pub struct RunOutcome {
    pub frame: DpskFrame,
    pub rates: ErrorRates,
    pub evm: EvmReport,
    pub freq_offset_est_hz: f64,
    pub spectrum: SpectrumReport,
    /// `(signed offset Hz, dB below carrier)` at ± the baseband clock.
    pub suppression: Vec<(f64, f64)>,
    pub summary_text: String,
    pub written: Vec<PathBuf>,
}

fn random_payload(scn: &Scenario) -> Vec<bool> {
    let n_data = scn.n_symbols - 1;
    let n_bits = n_data * scn.mode.bits_per_symbol() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scn.sim.rng_seed, "payload", 0));
    (0..n_bits).map(|_| rng.gen()).collect()
}

fn synthesize_scenario(scn: &Scenario) -> Result<(DpskFrame, ModulationRun, Waveform)> {
    let payload = random_payload(scn);
    let frame = encode_dpsk(&payload, scn.mode)?;
    let run = modulate(&frame, &scn.sim, scn.model)?;
    let clean = synthesize_waveform(
        &run.trajectory,
        scn.sim.sample_rate,
        run.trajectory.duration(),
    )?;
    let carrier = scn.sim.derived().carrier_hz;
    let wave = apply_impairments(&clean, &scn.sim.impairments, carrier);
    Ok((frame, run, wave))
}

fn spectrum_of(scn: &Scenario, wave: &Waveform) -> Result<SpectrumReport> {
    let mut nfft = scn.nfft.min(wave.samples.len()).next_power_of_two();
    if nfft > wave.samples.len() {
        nfft /= 2;
    }
    if nfft < 4 {
        return Err(Error::Metrics("waveform too short for a spectrum".into()));
    }
    let segments = if wave.samples.len() >= 2 * nfft { 4 } else { 1 };
    compute_spectrum(wave, nfft, segments)
}

fn suppression_pair(scn: &Scenario, spectrum: &SpectrumReport) -> Vec<(f64, f64)> {
    let f_bb = scn.sim.modem.baseband_clock;
    let halfwidth = scn.sim.modem.symbol_rate / 4.0;
    [f_bb, -f_bb]
        .iter()
        .filter_map(|&off| spectrum.suppression_at(off, halfwidth).map(|db| (off, db)))
        .collect()
}

/// Run the full chain and write the requested artifacts.
///
/// With `out_dir = None` nothing touches the filesystem; the summary text
/// is produced either way.
pub fn run_simulate(scn: &Scenario, out_dir: Option<&Path>) -> Result<RunOutcome> {
    scn.validate()?;
    let (frame, modrun, wave) = synthesize_scenario(scn)?;
    let epoch = if scn.estimate_timing {
        estimate_symbol_epoch(&wave, &scn.sim.modem)?
    } else {
        0.0
    };
    let cdr = estimate_carrier_at_epoch(&wave, &scn.sim.modem, epoch)?;
    let demod = demodulate_dpsk(&wave, scn.mode, &cdr, &scn.sim.modem)?;
    let rates = error_rates(&demod, &frame)?;
    let evm = compute_evm(
        &demod.diff_points,
        scn.mode,
        EvmReference::NearestIdeal,
        EvmNormalization::AverageMeasured,
    )?;
    let spectrum = spectrum_of(scn, &wave)?;
    let suppression = suppression_pair(scn, &spectrum);

    let mut summary = String::new();
    let _ = writeln!(summary, "mode={}", scn.mode.name());
    let _ = writeln!(summary, "model={}", scn.model.name());
    let _ = writeln!(summary, "n_symbols={}", scn.n_symbols);
    let _ = writeln!(summary, "seed={}", scn.sim.rng_seed);
    let _ = writeln!(summary, "carrier_hz={}", scn.sim.derived().carrier_hz);
    let _ = writeln!(summary, "symbol_rate={}", scn.sim.modem.symbol_rate);
    let _ = writeln!(summary, "freq_offset_est_hz={}", cdr.freq_offset);
    let _ = writeln!(summary, "evm_rms_percent={}", evm.evm_rms_percent);
    let _ = writeln!(summary, "ser={}", rates.ser);
    let _ = writeln!(summary, "ber={}", rates.ber);
    for (off, db) in &suppression {
        let _ = writeln!(summary, "suppression_db@{off:+}={db}");
    }

    let mut written = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        for kind in &scn.outputs {
            let path = dir.join(kind.file_name());
            match kind {
                OutputKind::Summary => fs::write(&path, &summary)?,
                OutputKind::Constellation => {
                    let mut buf = Vec::new();
                    write_demod_csv(&mut buf, &demod, Some(&frame.symbols))?;
                    fs::write(&path, buf)?;
                }
                OutputKind::Spectrum => {
                    let mut buf = Vec::new();
                    spectrum.write_csv(&mut buf)?;
                    fs::write(&path, buf)?;
                }
                OutputKind::Waveform => {
                    let mut buf = Vec::new();
                    wave.write_csv(&mut buf)?;
                    fs::write(&path, buf)?;
                }
                OutputKind::Windows => {
                    // designated edge per window: first modulated rising
                    // edge after the window's clock instant
                    let targets: Vec<f64> = modrun
                        .windows
                        .iter()
                        .map(|w| {
                            let clk = w.t_open - scn.sim.control.d1;
                            let j = modrun.modulated_edges.partition_point(|&e| e <= clk);
                            modrun.modulated_edges.get(j).copied().unwrap_or(f64::NAN)
                        })
                        .collect();
                    let report = check_window_alignment(&modrun.windows, &targets);
                    let mut buf = Vec::new();
                    crate::control::write_windows_csv(&mut buf, &modrun.windows, &report.margins)?;
                    fs::write(&path, buf)?;
                }
            }
            written.push(path);
        }
    }

    Ok(RunOutcome {
        frame,
        rates,
        evm,
        freq_offset_est_hz: cdr.freq_offset,
        spectrum,
        suppression,
        summary_text: summary,
        written,
    })
}

/// Calibration outcome for both models.
#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub target_deg: f64,
    pub circuit_cdis: f64,
    pub phase_cdis: f64,
    pub circuit_residual_deg: f64,
    pub phase_residual_deg: f64,
    pub fragment_text: String,
    pub written: Option<PathBuf>,
}

/// Calibrate `c_dis` with both models, report residuals, and write the
/// winning value back as a config fragment.
pub fn run_calibrate(
    osc: &OscConfig,
    target_lsb: PhaseAngle,
    out_dir: Option<&Path>,
) -> Result<CalibrationOutcome> {
    let circuit_cdis = calibrate_cdis(osc, target_lsb, RingModel::Circuit)?;
    let phase_cdis = calibrate_cdis(osc, target_lsb, RingModel::PhaseDomain)?;
    let target = target_lsb.degrees();

    let mut circuit_cfg = osc.clone();
    circuit_cfg.c_dis = circuit_cdis;
    let circuit_residual_deg = measure_single_trigger_shift(&circuit_cfg)? - target;

    let mut phase_cfg = osc.clone();
    phase_cfg.c_dis = phase_cdis;
    let isf = IsfProfile::for_ring(&phase_cfg);
    let phase_residual_deg =
        phase_shift_per_trigger(&phase_cfg, &isf, isf.peak_phase).degrees() - target;

    let fragment_text = format!("osc.c_dis = {circuit_cdis:e}\n");
    let written = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("cdis_fragment.conf");
            fs::write(&path, &fragment_text)?;
            Some(path)
        }
        None => None,
    };
    Ok(CalibrationOutcome {
        target_deg: target,
        circuit_cdis,
        phase_cdis,
        circuit_residual_deg,
        phase_residual_deg,
        fragment_text,
        written,
    })
}

/// Set a single parameter by path. Numeric paths accept SI suffixes.
pub fn set_axis(scn: &mut Scenario, path: &str, value: &str) -> Result<()> {
    let num = || parse_si(value);
    match path {
        "osc.i_ch" => scn.sim.osc.i_ch = num()?,
        "osc.c_p" => scn.sim.osc.c_p = num()?,
        "osc.v_dd" => scn.sim.osc.v_dd = num()?,
        "osc.c_dis" => scn.sim.osc.c_dis = num()?,
        "osc.v_threshold" => scn.sim.osc.v_threshold = num()?,
        "control.d1" => scn.sim.control.d1 = num()?,
        "control.d2" => scn.sim.control.d2 = num()?,
        "control.pvt_sigma" => scn.sim.control.pvt_sigma = num()?,
        "modem.symbol_rate" => scn.sim.modem.symbol_rate = num()?,
        "modem.baseband_clock" => scn.sim.modem.baseband_clock = num()?,
        "modem.bbp_rate" => scn.sim.modem.bbp_rate = num()?,
        "modem.settle_fraction" => scn.sim.modem.settle_fraction = num()?,
        "impairments.phase_noise_diffusion" => {
            scn.sim.impairments.phase_noise_diffusion = num()?
        }
        "impairments.freq_drift_ppm" => scn.sim.impairments.freq_drift_ppm = num()?,
        "impairments.awgn_snr_db" => scn.sim.impairments.awgn_snr_db = Some(num()?),
        "sim.sample_rate" => scn.sim.sample_rate = num()?,
        "scenario.mode" => scn.mode = ModulationMode::parse(value)?,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter path '{other}'"
            )))
        }
    }
    Ok(())
}

/// One sweep row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub evm_rms_percent: f64,
    pub ser: f64,
    pub ber: f64,
    /// Worst (smallest) suppression of the two baseband-clock sidebands.
    pub suppression_db: f64,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    pub csv_text: String,
    pub written: Option<PathBuf>,
}

/// Sweep a parameter over `values`. Rows run concurrently with seeds
/// derived from the master seed by row index, so results are order-stable
/// and reproducible.
pub fn run_sweep(
    scn: &Scenario,
    axis: &str,
    values: &[String],
    out_dir: Option<&Path>,
) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    // fail fast on a bad path before spawning rows
    set_axis(&mut scn.clone(), axis, &values[0])?;

    let master = scn.sim.rng_seed;
    let results = map_indexed(values.len(), |i| -> Result<SweepRow> {
        let mut row = scn.clone();
        row.outputs = BTreeSet::new();
        set_axis(&mut row, axis, &values[i])?;
        row.sim.rng_seed = derive_seed(master, "sweep-row", i as u64);
        row.sim.impairments.seed = derive_seed(row.sim.rng_seed, "impairments", 0);
        row.sim = validate_config(row.sim)?;
        let out = run_simulate(&row, None)?;
        let suppression_db = out
            .suppression
            .iter()
            .map(|&(_, db)| db)
            .fold(f64::INFINITY, f64::min);
        Ok(SweepRow {
            value: values[i].clone(),
            evm_rms_percent: out.evm.evm_rms_percent,
            ser: out.rates.ser,
            ber: out.rates.ber,
            suppression_db,
        })
    });
    let mut rows = Vec::with_capacity(values.len());
    for r in results {
        rows.push(r?);
    }

    let mut csv = String::new();
    let _ = writeln!(csv, "{axis},evm_rms_percent,ser,ber,suppression_db");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.value, r.evm_rms_percent, r.ser, r.ber, r.suppression_db
        );
    }
    let written = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("sweep.csv");
            fs::write(&path, &csv)?;
            Some(path)
        }
        None => None,
    };
    Ok(SweepOutcome {
        axis: axis.to_string(),
        rows,
        csv_text: csv,
        written,
    })
}

/// Synthesize the scenario waveform and compute its PSD.
pub fn run_spectrum(scn: &Scenario, out_dir: Option<&Path>) -> Result<(SpectrumReport, Vec<(f64, f64)>, Option<PathBuf>)> {
    scn.validate()?;
    let (_, _, wave) = synthesize_scenario(scn)?;
    let spectrum = spectrum_of(scn, &wave)?;
    let suppression = suppression_pair(scn, &spectrum);
    let written = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(OutputKind::Spectrum.file_name());
            let mut buf = Vec::new();
            spectrum.write_csv(&mut buf)?;
            fs::write(&path, buf)?;
            Some(path)
        }
        None => None,
    };
    Ok((spectrum, suppression, written))
}
