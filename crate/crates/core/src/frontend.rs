//! Complex-baseband waveform synthesis and channel impairments.
//!
//! The carrier is handled analytically: samples are `exp(j·φ(t))` with the
//! modulation phase interpolated from the trajectory, so the envelope is
//! exactly constant until additive noise. Sign convention: accumulated edge
//! delay counts as positive modulation phase, so a real-passband rendering
//! is `cos(2π·f_c·t − φ(t))`.
//!
//! Impairments: a constant (or linearly ramped) carrier frequency offset
//! given in ppm of the carrier, Wiener (white-FM) phase noise with
//! diffusion `D` in rad²/s, and complex AWGN at a per-sample SNR. All three
//! draw from fixed seed-derived streams whose values do not depend on the
//! impairment magnitudes, so sweeps over a magnitude reuse identical noise
//! shapes.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::modulator::PhaseTrajectory;
use crate::par::derive_seed;

/// Sampled complex-baseband signal referenced to the nominal carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: f64,
    pub t0: f64,
    pub samples: Vec<Complex64>,
}

impl Waveform {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn sample_time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.sample_rate
    }

    /// Mean squared magnitude.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// CSV dump: `t_seconds,i,q`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t_seconds,i,q")?;
        for (k, s) in self.samples.iter().enumerate() {
            writeln!(out, "{},{},{}", self.sample_time(k), s.re, s.im)?;
        }
        Ok(())
    }

    /// Binary dump: magic `RTIQ`, u32 LE version (1), f64 LE sample rate,
    /// u64 LE sample count, then interleaved little-endian f64 I/Q pairs.
    pub fn write_iq_binary<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(b"RTIQ")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&self.sample_rate.to_le_bytes())?;
        out.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for s in &self.samples {
            out.write_all(&s.re.to_le_bytes())?;
            out.write_all(&s.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read back a binary dump.
    pub fn read_iq_binary<R: std::io::Read>(input: &mut R) -> Result<Waveform> {
        let mut head = [0u8; 24];
        input.read_exact(&mut head)?;
        if &head[0..4] != b"RTIQ" {
            return Err(Error::Frontend("bad IQ magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != 1 {
            return Err(Error::Frontend(format!("unsupported IQ version {version}")));
        }
        let sample_rate = f64::from_le_bytes(head[8..16].try_into().unwrap());
        let n = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
        let mut payload = vec![0u8; n * 16];
        input.read_exact(&mut payload)?;
        let samples = payload
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                )
            })
            .collect();
        Ok(Waveform {
            sample_rate,
            t0: 0.0,
            samples,
        })
    }
}

/// Channel and oscillator impairments.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpairmentConfig {
    /// Wiener phase-noise diffusion rate, rad²/s.
    pub phase_noise_diffusion: f64,
    /// Carrier frequency offset in ppm of the carrier (start value).
    pub freq_drift_ppm: f64,
    /// Optional end value; a linear ramp over the waveform when set.
    pub freq_drift_ppm_end: Option<f64>,
    /// Per-sample complex SNR in dB; `None` disables additive noise.
    pub awgn_snr_db: Option<f64>,
    /// Seed for the impairment streams (0 = derive from the master seed).
    pub seed: u64,
}

impl ImpairmentConfig {
    pub fn clean() -> Self {
        ImpairmentConfig {
            phase_noise_diffusion: 0.0,
            freq_drift_ppm: 0.0,
            freq_drift_ppm_end: None,
            awgn_snr_db: None,
            seed: 1,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.phase_noise_diffusion == 0.0
            && self.freq_drift_ppm == 0.0
            && self.freq_drift_ppm_end.is_none()
            && self.awgn_snr_db.is_none()
    }
}

/// Sample `exp(j·φ(t))` over `duration` at `sample_rate`.
pub fn synthesize_waveform(
    traj: &PhaseTrajectory,
    sample_rate: f64,
    duration: f64,
) -> Result<Waveform> {
    if duration > traj.duration() * (1.0 + 1e-12) {
        return Err(Error::Frontend(format!(
            "trajectory ({:.6e}s) shorter than requested duration ({duration:.6e}s)",
            traj.duration()
        )));
    }
    let n = (duration * sample_rate).round() as usize;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / sample_rate;
            Complex64::from_polar(1.0, traj.phase_deg_at(t).to_radians())
        })
        .collect();
    Ok(Waveform {
        sample_rate,
        t0: 0.0,
        samples,
    })
}

/// Apply frequency drift, Wiener phase noise and AWGN.
///
/// `carrier_hz` scales the ppm drift numbers. Deterministic under
/// `imp.seed`; a zero/absent impairment leaves the samples bit-identical.
pub fn apply_impairments(w: &Waveform, imp: &ImpairmentConfig, carrier_hz: f64) -> Waveform {
    let mut out = w.clone();
    let n = out.samples.len();
    let dt = 1.0 / out.sample_rate;
    let duration = n as f64 * dt;

    let f0 = imp.freq_drift_ppm * 1e-6 * carrier_hz;
    let f1 = imp.freq_drift_ppm_end.map_or(f0, |p| p * 1e-6 * carrier_hz);
    if f0 != 0.0 || f1 != f0 {
        for (k, s) in out.samples.iter_mut().enumerate() {
            let t = k as f64 * dt;
            // phase of a linear frequency ramp: 2π (f0 t + (f1−f0) t²/2T)
            let phase = 2.0 * std::f64::consts::PI
                * (f0 * t + (f1 - f0) * t * t / (2.0 * duration));
            *s *= Complex64::from_polar(1.0, phase);
        }
    }

    if imp.phase_noise_diffusion > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(imp.seed, "wiener", 0));
        let step = (imp.phase_noise_diffusion * dt).sqrt();
        let mut theta = 0.0;
        for s in out.samples.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            theta += step * z;
            *s *= Complex64::from_polar(1.0, theta);
        }
    }

    if let Some(snr_db) = imp.awgn_snr_db {
        let sig_power = out.mean_power();
        let noise_power = sig_power * 10f64.powf(-snr_db / 10.0);
        let sigma = (noise_power / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(imp.seed, "awgn", 0));
        for s in out.samples.iter_mut() {
            let zr: f64 = StandardNormal.sample(&mut rng);
            let zi: f64 = StandardNormal.sample(&mut rng);
            *s += Complex64::new(sigma * zr, sigma * zi);
        }
    }

    out
}

/// Render the trajectory as a real passband signal `cos(2π f_c t − φ(t))`.
///
/// Meant for spectrum plots at scaled carrier frequencies; requires at
/// least 8 samples per carrier cycle.
pub fn passband_samples(
    traj: &PhaseTrajectory,
    carrier_hz: f64,
    sample_rate: f64,
    duration: f64,
) -> Result<Vec<(f64, f64)>> {
    if sample_rate < 8.0 * carrier_hz {
        return Err(Error::Frontend(format!(
            "passband sample rate {sample_rate:.3e} is below 8 x carrier = {:.3e}",
            8.0 * carrier_hz
        )));
    }
    if duration > traj.duration() * (1.0 + 1e-12) {
        return Err(Error::Frontend("trajectory shorter than duration".into()));
    }
    let n = (duration * sample_rate).round() as usize;
    Ok((0..n)
        .map(|k| {
            let t = k as f64 / sample_rate;
            let phase = 2.0 * std::f64::consts::PI * carrier_hz * t
                - traj.phase_deg_at(t).to_radians();
            (t, phase.cos())
        })
        .collect())
}
