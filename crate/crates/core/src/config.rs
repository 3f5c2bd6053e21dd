//! Simulator configuration: domain types, plain-text config format, and
//! validation.
//!
//! Config files are flat `section.key = value` lines. `#` starts a comment,
//! blank lines are ignored. Numeric values accept the SI suffixes
//! `G M k u n p` (1e9, 1e6, 1e3, 1e-6, 1e-9, 1e-12); parsing is
//! deterministic, and serializing a validated config reproduces a
//! semantically identical one on re-parse.
//!
//! ```text
//! # ring oscillator
//! osc.n_stages   = 3
//! osc.i_ch       = 57.6u
//! osc.c_p        = 10e-15
//! osc.v_dd       = 0.8
//! osc.c_dis      = 3.75e-15
//! control.d1     = 243p
//! control.d2     = 69p
//! control.pvt_sigma = 0.2
//! modem.symbol_rate    = 2M
//! modem.baseband_clock = 4M
//! modem.bbp_rate       = 160M
//! sim.sample_rate = 64M
//! sim.rng_seed    = 1
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::control::ControlConfig;
use crate::error::{Error, Result};
use crate::frontend::ImpairmentConfig;
use crate::oscillator::{free_running_period, OscConfig};
use crate::par::derive_seed;
use crate::phase::PhaseAngle;

/// Largest trigger count a symbol can need (a full 360° turn at one-LSB
/// resolution).
pub const MAX_BBPS_PER_SYMBOL: u32 = 16;

/// Supported differential PSK modes.
///
/// The hardware LSB is 22.5°; coarser modes spend several triggers per
/// effective constellation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulationMode {
    Dpsk16,
    Dpsk8,
    Qdpsk,
    Dbpsk,
}

impl ModulationMode {
    pub const ALL: [ModulationMode; 4] = [
        ModulationMode::Dpsk16,
        ModulationMode::Dpsk8,
        ModulationMode::Qdpsk,
        ModulationMode::Dbpsk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModulationMode::Dpsk16 => "16DPSK",
            ModulationMode::Dpsk8 => "8DPSK",
            ModulationMode::Qdpsk => "QDPSK",
            ModulationMode::Dbpsk => "DBPSK",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "16DPSK" => Ok(ModulationMode::Dpsk16),
            "8DPSK" => Ok(ModulationMode::Dpsk8),
            "QDPSK" | "4DPSK" => Ok(ModulationMode::Qdpsk),
            "DBPSK" | "2DPSK" => Ok(ModulationMode::Dbpsk),
            other => Err(Error::Config(format!(
                "unknown modulation mode '{other}' (expected 16DPSK, 8DPSK, QDPSK or DBPSK)"
            ))),
        }
    }

    /// Bits carried per symbol.
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            ModulationMode::Dpsk16 => 4,
            ModulationMode::Dpsk8 => 3,
            ModulationMode::Qdpsk => 2,
            ModulationMode::Dbpsk => 1,
        }
    }

    /// Triggers spent per effective constellation step.
    pub fn bbps_per_lsb(self) -> u32 {
        match self {
            ModulationMode::Dpsk16 => 1,
            ModulationMode::Dpsk8 => 2,
            ModulationMode::Qdpsk => 4,
            ModulationMode::Dbpsk => 8,
        }
    }

    /// Constellation size `2^bits_per_symbol`.
    pub fn constellation_size(self) -> u32 {
        1 << self.bits_per_symbol()
    }

    /// Effective phase step in degrees (exact: a multiple of 22.5).
    pub fn effective_lsb_deg(self) -> f64 {
        22.5 * self.bbps_per_lsb() as f64
    }
}

/// Effective phase step and constellation size for a mode.
pub fn mode_params(mode: ModulationMode) -> (PhaseAngle, u32) {
    (
        PhaseAngle::from_degrees(mode.effective_lsb_deg()),
        mode.constellation_size(),
    )
}

/// Baseband timing: symbol rate, baseband clock and trigger-pulse grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModemTiming {
    /// Symbols per second.
    pub symbol_rate: f64,
    /// Baseband clock in Hz; defaults to twice the symbol rate.
    pub baseband_clock: f64,
    /// Trigger-pulse slot rate in Hz.
    pub bbp_rate: f64,
    /// BBP high time expressed in oscillator cycles; resolved during
    /// validation when left at 0.
    pub bbp_high_cycles: u32,
    /// BBP high time in seconds (derived: `bbp_high_cycles` × period).
    pub bbp_high_s: f64,
    /// Fraction of the symbol period, at the tail, used as the settled
    /// measurement window.
    pub settle_fraction: f64,
}

impl ModemTiming {
    /// Symbol period in seconds.
    pub fn symbol_period(&self) -> f64 {
        1.0 / self.symbol_rate
    }

    /// Trigger slots available per symbol period.
    pub fn slots_per_symbol(&self) -> u32 {
        (self.bbp_rate / self.symbol_rate).floor() as u32
    }

    /// Trigger slots per baseband clock period.
    pub fn slots_per_baseband_period(&self) -> u32 {
        (self.bbp_rate / self.baseband_clock).floor() as u32
    }
}

/// Top-level simulator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub osc: OscConfig,
    pub control: ControlConfig,
    pub modem: ModemTiming,
    pub impairments: ImpairmentConfig,
    /// Complex-baseband sample rate, samples/second.
    pub sample_rate: f64,
    /// Master seed; every random stream below derives from it.
    pub rng_seed: u64,
}

/// Quantities derived from a validated config.
#[derive(Debug, Clone, Copy)]
pub struct Derived {
    pub period_s: f64,
    pub carrier_hz: f64,
    pub symbol_period_s: f64,
    pub slots_per_symbol: u32,
    pub samples_per_symbol: f64,
}

impl SimConfig {
    pub fn derived(&self) -> Derived {
        let period_s = free_running_period(&self.osc);
        Derived {
            period_s,
            carrier_hz: 1.0 / period_s,
            symbol_period_s: self.modem.symbol_period(),
            slots_per_symbol: self.modem.slots_per_symbol(),
            samples_per_symbol: self.sample_rate / self.modem.symbol_rate,
        }
    }

    /// Parse a config file body into a validated `SimConfig`.
    pub fn parse_text(text: &str) -> Result<SimConfig> {
        let mut raw = RawConfig::parse(text)?;
        let cfg = build_sim_config(&mut raw)?;
        raw.finish()?;
        validate_config(cfg)
    }

    /// Serialize to the config-file format. Floats are written at full
    /// round-trip precision without SI suffixes.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "osc.n_stages = {}", self.osc.n_stages);
        let _ = writeln!(s, "osc.i_ch = {:e}", self.osc.i_ch);
        let _ = writeln!(s, "osc.c_p = {:e}", self.osc.c_p);
        let _ = writeln!(s, "osc.v_dd = {}", self.osc.v_dd);
        let _ = writeln!(s, "osc.c_dis = {:e}", self.osc.c_dis);
        let _ = writeln!(s, "osc.v_threshold = {}", self.osc.v_threshold);
        let _ = writeln!(s, "osc.modulated_node = {}", self.osc.modulated_node);
        let _ = writeln!(s, "osc.output_node = {}", self.osc.output_node);
        let _ = writeln!(s, "control.d1 = {:e}", self.control.d1);
        let _ = writeln!(s, "control.d2 = {:e}", self.control.d2);
        let _ = writeln!(s, "control.pvt_sigma = {}", self.control.pvt_sigma);
        let _ = writeln!(s, "modem.symbol_rate = {}", self.modem.symbol_rate);
        let _ = writeln!(s, "modem.baseband_clock = {}", self.modem.baseband_clock);
        let _ = writeln!(s, "modem.bbp_rate = {}", self.modem.bbp_rate);
        let _ = writeln!(s, "modem.bbp_high_cycles = {}", self.modem.bbp_high_cycles);
        let _ = writeln!(s, "modem.settle_fraction = {}", self.modem.settle_fraction);
        let _ = writeln!(
            s,
            "impairments.phase_noise_diffusion = {}",
            self.impairments.phase_noise_diffusion
        );
        let _ = writeln!(
            s,
            "impairments.freq_drift_ppm = {}",
            self.impairments.freq_drift_ppm
        );
        if let Some(end) = self.impairments.freq_drift_ppm_end {
            let _ = writeln!(s, "impairments.freq_drift_ppm_end = {end}");
        }
        if let Some(snr) = self.impairments.awgn_snr_db {
            let _ = writeln!(s, "impairments.awgn_snr_db = {snr}");
        }
        let _ = writeln!(s, "impairments.seed = {}", self.impairments.seed);
        let _ = writeln!(s, "sim.sample_rate = {}", self.sample_rate);
        let _ = writeln!(s, "sim.rng_seed = {}", self.rng_seed);
        s
    }
}

/// Check every cross-field invariant and fill in derived fields.
///
/// Returns the normalized config or a rejection naming the violated
/// invariant.
pub fn validate_config(mut cfg: SimConfig) -> Result<SimConfig> {
    cfg.osc.validate()?;
    let period = free_running_period(&cfg.osc);

    if cfg.control.d1 <= 0.0 || cfg.control.d2 <= 0.0 {
        return Err(Error::Config(
            "control.d1 and control.d2 must be positive".into(),
        ));
    }
    if cfg.control.d2 >= period {
        return Err(Error::Config(format!(
            "control.d2 = {:.3e}s is not narrower than one oscillation period ({:.3e}s)",
            cfg.control.d2, period
        )));
    }
    if !(0.0..1.0).contains(&cfg.control.pvt_sigma) {
        return Err(Error::Config(
            "control.pvt_sigma must lie in [0, 1)".into(),
        ));
    }

    let m = &mut cfg.modem;
    if m.symbol_rate <= 0.0 || m.baseband_clock <= 0.0 || m.bbp_rate <= 0.0 {
        return Err(Error::Config("modem rates must be positive".into()));
    }
    if m.slots_per_baseband_period() < MAX_BBPS_PER_SYMBOL {
        return Err(Error::Config(format!(
            "modem.bbp_rate too low for {} triggers/symbol: only {} slots per baseband period",
            MAX_BBPS_PER_SYMBOL,
            m.slots_per_baseband_period()
        )));
    }
    if m.slots_per_symbol() < MAX_BBPS_PER_SYMBOL {
        return Err(Error::Config(format!(
            "modem.bbp_rate too low for {} triggers/symbol: only {} slots per symbol period",
            MAX_BBPS_PER_SYMBOL,
            m.slots_per_symbol()
        )));
    }
    if !(0.0 < m.settle_fraction && m.settle_fraction < 0.9) {
        return Err(Error::Config(
            "modem.settle_fraction must lie in (0, 0.9)".into(),
        ));
    }
    if m.bbp_high_cycles == 0 {
        // Wide enough that the window (d1 + d2 past a captured edge) always
        // completes while the pulse is still high.
        let span = (cfg.control.d1 + cfg.control.d2) / period;
        m.bbp_high_cycles = span.ceil() as u32 + 2;
    }
    m.bbp_high_s = m.bbp_high_cycles as f64 * period;
    if m.bbp_high_s >= 1.0 / m.bbp_rate {
        return Err(Error::Config(format!(
            "BBP high time ({} cycles = {:.3e}s) does not fit in one bbp_rate slot ({:.3e}s)",
            m.bbp_high_cycles,
            m.bbp_high_s,
            1.0 / m.bbp_rate
        )));
    }

    if cfg.sample_rate < 8.0 * cfg.modem.symbol_rate {
        return Err(Error::Config(format!(
            "sim.sample_rate = {:.3e} is below 8 × symbol_rate = {:.3e}",
            cfg.sample_rate,
            8.0 * cfg.modem.symbol_rate
        )));
    }

    if cfg.impairments.phase_noise_diffusion < 0.0 {
        return Err(Error::Config(
            "impairments.phase_noise_diffusion must be non-negative".into(),
        ));
    }
    if cfg.impairments.seed == 0 {
        cfg.impairments.seed = derive_seed(cfg.rng_seed, "impairments", 0);
    }

    Ok(cfg)
}

/// Parse a number with an optional SI suffix (`G M k u n p`).
pub fn parse_si(value: &str) -> Result<f64> {
    let v = value.trim();
    if v.is_empty() {
        return Err(Error::Config("empty numeric value".into()));
    }
    let (body, mult) = match v.chars().last().unwrap() {
        'G' => (&v[..v.len() - 1], 1e9),
        'M' => (&v[..v.len() - 1], 1e6),
        'k' => (&v[..v.len() - 1], 1e3),
        'u' => (&v[..v.len() - 1], 1e-6),
        'n' => (&v[..v.len() - 1], 1e-9),
        'p' => (&v[..v.len() - 1], 1e-12),
        _ => (v, 1.0),
    };
    body.trim()
        .parse::<f64>()
        .map(|x| x * mult)
        .map_err(|_| Error::Config(format!("cannot parse number '{value}'")))
}

/// Parsed `section.key = value` lines with consumption tracking, so unknown
/// keys can be rejected by name after every consumer has taken its share.
pub struct RawConfig {
    entries: BTreeMap<String, (String, bool)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'section.key = value'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if !key.contains('.') {
                return Err(Error::Config(format!(
                    "line {}: key '{key}' has no section prefix",
                    lineno + 1
                )));
            }
            if entries
                .insert(key.clone(), (value.trim().to_string(), false))
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(RawConfig { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        if let Some((v, consumed)) = self.entries.get_mut(key) {
            *consumed = true;
            Some(v.clone())
        } else {
            None
        }
    }

    pub fn get_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            Some(v) => parse_si(&v)
                .map(Some)
                .map_err(|e| Error::Config(format!("{key}: {e}"))),
            None => Ok(None),
        }
    }

    pub fn require_f64(&mut self, key: &str) -> Result<f64> {
        self.get_f64(key)?
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    pub fn get_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| Error::Config(format!("{key}: cannot parse integer '{v}'"))),
            None => Ok(None),
        }
    }

    pub fn get_usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    pub fn get_str(&mut self, key: &str) -> Option<String> {
        self.take(key)
    }

    /// Error on any key no consumer claimed.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self
            .entries
            .iter()
            .filter(|(_, (_, consumed))| !consumed)
            .map(|(k, _)| k)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown config key(s): {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}

/// Assemble a `SimConfig` from raw entries (validation happens separately).
pub fn build_sim_config(raw: &mut RawConfig) -> Result<SimConfig> {
    let n_stages = raw
        .get_usize("osc.n_stages")?
        .ok_or_else(|| Error::Config("missing required key 'osc.n_stages'".into()))?;
    let v_dd = raw.require_f64("osc.v_dd")?;
    let modulated_node = raw.get_usize("osc.modulated_node")?.unwrap_or(1);
    let osc = OscConfig {
        n_stages,
        i_ch: raw.require_f64("osc.i_ch")?,
        c_p: raw.require_f64("osc.c_p")?,
        v_dd,
        c_dis: raw.require_f64("osc.c_dis")?,
        v_threshold: raw.get_f64("osc.v_threshold")?.unwrap_or(v_dd / 2.0),
        modulated_node,
        output_node: raw
            .get_usize("osc.output_node")?
            .unwrap_or((modulated_node + 1) % n_stages.max(1)),
    };

    let control = ControlConfig {
        d1: raw.require_f64("control.d1")?,
        d2: raw.require_f64("control.d2")?,
        pvt_sigma: raw.get_f64("control.pvt_sigma")?.unwrap_or(0.0),
    };

    let symbol_rate = raw.require_f64("modem.symbol_rate")?;
    let modem = ModemTiming {
        symbol_rate,
        baseband_clock: raw
            .get_f64("modem.baseband_clock")?
            .unwrap_or(2.0 * symbol_rate),
        bbp_rate: raw.require_f64("modem.bbp_rate")?,
        bbp_high_cycles: raw.get_u64("modem.bbp_high_cycles")?.unwrap_or(0) as u32,
        bbp_high_s: 0.0,
        settle_fraction: raw.get_f64("modem.settle_fraction")?.unwrap_or(0.25),
    };

    let impairments = ImpairmentConfig {
        phase_noise_diffusion: raw
            .get_f64("impairments.phase_noise_diffusion")?
            .unwrap_or(0.0),
        freq_drift_ppm: raw.get_f64("impairments.freq_drift_ppm")?.unwrap_or(0.0),
        freq_drift_ppm_end: raw.get_f64("impairments.freq_drift_ppm_end")?,
        awgn_snr_db: raw.get_f64("impairments.awgn_snr_db")?,
        seed: raw.get_u64("impairments.seed")?.unwrap_or(0),
    };

    Ok(SimConfig {
        osc,
        control,
        modem,
        impairments,
        sample_rate: raw.require_f64("sim.sample_rate")?,
        rng_seed: raw.get_u64("sim.rng_seed")?.unwrap_or(1),
    })
}
