//! Receiver-side quality metrics: RMS EVM, symbol/bit error rates, and an
//! averaged-periodogram power spectral density.
//!
//! EVM reference selection defaults to the nearest ideal grid point;
//! normalization rescales the measured points so their RMS (or peak)
//! magnitude is 1 before comparison, which makes the figure invariant to
//! overall scaling. The PSD uses a periodic Hann window (bin-centered
//! tones leak only into adjacent bins) with power-density normalization,
//! so the integral over frequency reproduces the mean signal power.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::config::ModulationMode;
use crate::error::{Error, Result};
use crate::frontend::Waveform;
use crate::modulator::{bits_for_increment, DpskFrame};
use crate::receiver::DemodResult;

/// Which ideal point each measured point is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvmReference<'a> {
    /// Nearest constellation grid point (default).
    NearestIdeal,
    /// The transmitted increments (debugging mode).
    Transmitted(&'a [u32]),
}

/// How measured magnitudes are normalized before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvmNormalization {
    /// RMS of the measured points scales to 1 (default).
    AverageMeasured,
    /// Peak measured magnitude scales to 1.
    PeakMeasured,
}

#[derive(Debug, Clone)]
pub struct EvmReport {
    pub evm_rms_percent: f64,
    pub error_vectors: Vec<Complex64>,
    pub reference_points: Vec<Complex64>,
    pub reference_mode: &'static str,
    pub normalization: &'static str,
}

/// RMS EVM of differential constellation points against unit-circle
/// references: `100 · sqrt(mean |p−r|²) / sqrt(mean |r|²)`.
pub fn compute_evm(
    points: &[Complex64],
    mode: ModulationMode,
    reference: EvmReference<'_>,
    normalization: EvmNormalization,
) -> Result<EvmReport> {
    if points.len() < 2 {
        return Err(Error::Metrics(format!(
            "EVM needs at least 2 points, got {}",
            points.len()
        )));
    }
    if let EvmReference::Transmitted(tx) = reference {
        if tx.len() != points.len() {
            return Err(Error::Metrics(format!(
                "transmitted reference length {} does not match {} points",
                tx.len(),
                points.len()
            )));
        }
    }
    let scale = match normalization {
        EvmNormalization::AverageMeasured => {
            let rms =
                (points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64).sqrt();
            if rms <= 0.0 {
                return Err(Error::Metrics("all points are zero".into()));
            }
            1.0 / rms
        }
        EvmNormalization::PeakMeasured => {
            let peak = points.iter().map(|p| p.norm()).fold(0.0_f64, f64::max);
            if peak <= 0.0 {
                return Err(Error::Metrics("all points are zero".into()));
            }
            1.0 / peak
        }
    };
    let lsb = mode.effective_lsb_deg();
    let mut error_vectors = Vec::with_capacity(points.len());
    let mut reference_points = Vec::with_capacity(points.len());
    let mut err_power = 0.0;
    let mut ref_power = 0.0;
    for (i, p) in points.iter().enumerate() {
        let p = p * scale;
        let k = match reference {
            EvmReference::NearestIdeal => {
                crate::receiver::decide(crate::phase::PhaseAngle::from_degrees(
                    p.arg().to_degrees(),
                ), mode)
            }
            EvmReference::Transmitted(tx) => tx[i],
        };
        let r = Complex64::from_polar(1.0, (k as f64 * lsb).to_radians());
        let e = p - r;
        err_power += e.norm_sqr();
        ref_power += r.norm_sqr();
        error_vectors.push(e);
        reference_points.push(r);
    }
    let evm_rms_percent = 100.0 * (err_power / ref_power).sqrt();
    Ok(EvmReport {
        evm_rms_percent,
        error_vectors,
        reference_points,
        reference_mode: match reference {
            EvmReference::NearestIdeal => "nearest_ideal",
            EvmReference::Transmitted(_) => "transmitted",
        },
        normalization: match normalization {
            EvmNormalization::AverageMeasured => "average_measured",
            EvmNormalization::PeakMeasured => "peak_measured",
        },
    })
}

/// Two-sided averaged-periodogram PSD, dB relative to the carrier bin.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Bin center frequencies, −fs/2 .. fs/2, relative to the nominal
    /// carrier (baseband DC).
    pub freq_bins: Vec<f64>,
    /// Power density per bin, dB relative to the carrier bin.
    pub psd_db: Vec<f64>,
    /// Linear power density (power per Hz).
    pub psd_linear: Vec<f64>,
    pub carrier_bin: usize,
    pub nfft: usize,
    pub segments_averaged: usize,
}

impl SpectrumReport {
    /// Bin spacing in Hz.
    pub fn bin_width(&self) -> f64 {
        self.freq_bins[1] - self.freq_bins[0]
    }

    /// Total power recovered from the PSD (for energy checks).
    pub fn total_power(&self) -> f64 {
        self.psd_linear.iter().sum::<f64>() * self.bin_width()
    }

    /// Carrier-relative suppression (positive dB below carrier) of the
    /// strongest bin within `offset ± halfwidth` of the carrier bin.
    pub fn suppression_at(&self, offset_hz: f64, halfwidth_hz: f64) -> Option<f64> {
        let carrier_freq = self.freq_bins[self.carrier_bin];
        let lo = carrier_freq + offset_hz - halfwidth_hz;
        let hi = carrier_freq + offset_hz + halfwidth_hz;
        let peak = self
            .freq_bins
            .iter()
            .zip(&self.psd_db)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, db)| *db)
            .fold(f64::NEG_INFINITY, f64::max);
        if peak.is_finite() {
            Some(-peak)
        } else {
            None
        }
    }

    /// CSV dump: `freq_hz,psd_db`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "freq_hz,psd_db")?;
        for (f, db) in self.freq_bins.iter().zip(&self.psd_db) {
            writeln!(out, "{f},{db}")?;
        }
        Ok(())
    }
}

/// Averaged periodogram over `segments` Hann-windowed slices.
///
/// Segment starts are spread evenly across the waveform; with one segment
/// the slice sits at the start.
pub fn compute_spectrum(w: &Waveform, nfft: usize, segments: usize) -> Result<SpectrumReport> {
    if nfft < 4 {
        return Err(Error::Metrics("nfft must be at least 4".into()));
    }
    if w.samples.len() < nfft {
        return Err(Error::Metrics(format!(
            "waveform ({} samples) shorter than nfft = {nfft}",
            w.samples.len()
        )));
    }
    if segments == 0 {
        return Err(Error::Metrics("segment count must be positive".into()));
    }
    let max_hop = w.samples.len() - nfft;
    let (segments, hop) = if segments == 1 || max_hop == 0 {
        (1, 0)
    } else {
        let hop = max_hop / (segments - 1);
        if hop == 0 {
            return Err(Error::Metrics(format!(
                "nfft = {nfft} too large for {segments} segments over {} samples",
                w.samples.len()
            )));
        }
        (segments, hop)
    };

    // periodic Hann: integer-bin tones leak only into adjacent bins
    let window: Vec<f64> = (0..nfft)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / nfft as f64).cos()))
        .collect();
    let window_power: f64 = window.iter().map(|x| x * x).sum();

    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut acc = vec![0.0f64; nfft];
    for s in 0..segments {
        let start = s * hop;
        let mut buf: Vec<Complex64> = w.samples[start..start + nfft]
            .iter()
            .zip(&window)
            .map(|(x, wn)| x * wn)
            .collect();
        fft.process(&mut buf);
        for (a, x) in acc.iter_mut().zip(&buf) {
            *a += x.norm_sqr();
        }
    }
    let fs = w.sample_rate;
    let norm = 1.0 / (segments as f64 * fs * window_power);
    // fftshift so bins run from -fs/2 to fs/2
    let half = nfft / 2;
    let mut psd_linear = vec![0.0f64; nfft];
    let mut freq_bins = vec![0.0f64; nfft];
    for i in 0..nfft {
        let raw = (i + half) % nfft;
        psd_linear[i] = acc[raw] * norm;
        freq_bins[i] = (i as f64 - half as f64) * fs / nfft as f64;
    }
    let carrier_bin = psd_linear
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let p_carrier = psd_linear[carrier_bin].max(f64::MIN_POSITIVE);
    let psd_db = psd_linear
        .iter()
        .map(|&p| 10.0 * (p.max(1e-300) / p_carrier).log10())
        .collect();
    Ok(SpectrumReport {
        freq_bins,
        psd_db,
        psd_linear,
        carrier_bin,
        nfft,
        segments_averaged: segments,
    })
}

/// Symbol and bit error rates.
#[derive(Debug, Clone)]
pub struct ErrorRates {
    pub ser: f64,
    pub ber: f64,
    pub symbol_errors: Vec<bool>,
}

/// Compare decisions against the transmitted frame; BER counts Gray-coded
/// bit differences.
pub fn error_rates(result: &DemodResult, tx: &DpskFrame) -> Result<ErrorRates> {
    let decided = &result.decided_increments;
    if decided.len() != tx.symbols.len() {
        return Err(Error::Metrics(format!(
            "decision count {} does not match {} transmitted data symbols",
            decided.len(),
            tx.symbols.len()
        )));
    }
    if decided.is_empty() {
        return Err(Error::Metrics("no symbols to compare".into()));
    }
    let mut sym_err = 0usize;
    let mut bit_err = 0usize;
    let mut symbol_errors = Vec::with_capacity(decided.len());
    for (&d, &t) in decided.iter().zip(&tx.symbols) {
        let err = d != t;
        symbol_errors.push(err);
        if err {
            sym_err += 1;
            let a = bits_for_increment(d, tx.mode);
            let b = bits_for_increment(t, tx.mode);
            bit_err += a.iter().zip(&b).filter(|(x, y)| x != y).count();
        }
    }
    let n = decided.len() as f64;
    let bits = n * tx.mode.bits_per_symbol() as f64;
    Ok(ErrorRates {
        ser: sym_err as f64 / n,
        ber: bit_err as f64 / bits,
        symbol_errors,
    })
}

/// Constellation dump: `symbol_index,i,q` of the differential points.
pub fn write_constellation_csv<W: std::io::Write>(
    out: &mut W,
    points: &[Complex64],
) -> std::io::Result<()> {
    writeln!(out, "symbol_index,i,q")?;
    for (i, p) in points.iter().enumerate() {
        writeln!(out, "{i},{},{}", p.re, p.im)?;
    }
    Ok(())
}
