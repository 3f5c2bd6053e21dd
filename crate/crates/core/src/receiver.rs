//! Reference software receiver: carrier recovery, settled-phase
//! measurement, differential detection and grid decisions.
//!
//! The carrier phase slews while a symbol's trigger burst runs, so every
//! measurement uses only the settle window at the tail of each symbol
//! period (fraction set by `modem.settle_fraction`). The frequency offset
//! comes from per-window least-squares slopes of the unwrapped phase,
//! which keeps the estimator blind to the modulation (no phase steps occur
//! inside a window); the documented pull-in range is a quarter of the
//! symbol rate.

use num_complex::Complex64;

use crate::config::{ModemTiming, ModulationMode};
use crate::error::{Error, Result};
use crate::frontend::Waveform;
use crate::phase::{wrap_deg_0_360, wrap_deg_pm180, PhaseAngle};

/// Carrier/clock recovery estimate.
#[derive(Debug, Clone, Copy)]
pub struct CdrEstimate {
    /// Estimated carrier offset from nominal, Hz.
    pub freq_offset: f64,
    /// Settled phase of the first (reference) symbol after derotation.
    pub phase_origin: PhaseAngle,
    /// Start of symbol 0, seconds.
    pub symbol_epoch: f64,
}

/// Differential demodulation output.
#[derive(Debug, Clone)]
pub struct DemodResult {
    /// Wrapped settled-phase differences between consecutive symbols, deg.
    pub soft_diff_phases: Vec<f64>,
    /// Hard decisions, each in `1..=constellation_size` (a full turn is
    /// reported as `constellation_size`).
    pub decided_increments: Vec<u32>,
    /// Differential constellation points (symbol i+1's settled vector
    /// rotated back by symbol i's settled phase).
    pub diff_points: Vec<Complex64>,
    /// Per-symbol settled mean vectors after derotation.
    pub settled_means: Vec<Complex64>,
}

/// Sample index range of each symbol's settle window.
fn settle_windows(
    w: &Waveform,
    timing: &ModemTiming,
    epoch: f64,
) -> Result<Vec<std::ops::Range<usize>>> {
    let ts = timing.symbol_period();
    let n_sym = ((w.duration() - epoch) / ts + 1e-9).floor() as usize;
    if n_sym == 0 {
        return Err(Error::Receiver("waveform shorter than one symbol".into()));
    }
    let fs = w.sample_rate;
    let mut out = Vec::with_capacity(n_sym);
    for i in 0..n_sym {
        let start = epoch + (i as f64 + 1.0 - timing.settle_fraction) * ts;
        let end = epoch + (i as f64 + 1.0) * ts;
        let k0 = (start * fs).ceil() as usize;
        let k1 = ((end * fs).ceil() as usize).min(w.samples.len());
        if k1 <= k0 + 1 {
            return Err(Error::Receiver(format!(
                "settle window of symbol {i} holds {} samples; timing misconfiguration",
                k1.saturating_sub(k0)
            )));
        }
        out.push(k0..k1);
    }
    Ok(out)
}

/// Estimate the carrier frequency offset from per-symbol settle windows.
///
/// Requires at least 8 symbols. Each window contributes the least-squares
/// slope of its unwrapped phase; slopes are averaged. Offsets beyond
/// `symbol_rate / 4` are rejected rather than silently wrapped.
pub fn estimate_carrier(w: &Waveform, timing: &ModemTiming) -> Result<CdrEstimate> {
    estimate_carrier_at_epoch(w, timing, 0.0)
}

/// `estimate_carrier` with an explicit symbol epoch (for use with the
/// optional timing estimator).
pub fn estimate_carrier_at_epoch(
    w: &Waveform,
    timing: &ModemTiming,
    epoch: f64,
) -> Result<CdrEstimate> {
    let windows = settle_windows(w, timing, epoch)?;
    if windows.len() < 8 {
        return Err(Error::Receiver(format!(
            "carrier estimation needs >= 8 symbols, got {}",
            windows.len()
        )));
    }
    let fs = w.sample_rate;
    let mut slopes = Vec::with_capacity(windows.len());
    for (i, r) in windows.iter().enumerate() {
        let samples = &w.samples[r.clone()];
        // unwrap inside the window via sample-to-sample increments
        let mut phases = Vec::with_capacity(samples.len());
        let mut acc = samples[0].arg();
        phases.push(acc);
        for pair in samples.windows(2) {
            let inc = (pair[1] * pair[0].conj()).arg();
            if inc.abs() > 0.9 * std::f64::consts::PI {
                return Err(Error::Receiver(format!(
                    "unwrap failure in settle window {i}: phase jump {:.3} rad \
                     (SNR too low or drift out of range)",
                    inc
                )));
            }
            acc += inc;
            phases.push(acc);
        }
        let n = phases.len() as f64;
        let t_mean = (phases.len() - 1) as f64 / 2.0 / fs;
        let p_mean = phases.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, p) in phases.iter().enumerate() {
            let dt = k as f64 / fs - t_mean;
            num += dt * (p - p_mean);
            den += dt * dt;
        }
        slopes.push(num / den);
    }
    let freq_offset = slopes.iter().sum::<f64>() / slopes.len() as f64
        / (2.0 * std::f64::consts::PI);
    if freq_offset.abs() > timing.symbol_rate / 4.0 {
        return Err(Error::Receiver(format!(
            "estimated offset {freq_offset:.3e} Hz beyond the pull-in range \
             (symbol_rate/4 = {:.3e} Hz)",
            timing.symbol_rate / 4.0
        )));
    }
    // settled phase of the reference symbol after derotation
    let r0 = windows[0].clone();
    let mut m0 = Complex64::new(0.0, 0.0);
    for k in r0 {
        let t = w.sample_time(k);
        m0 += w.samples[k]
            * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * freq_offset * t);
    }
    Ok(CdrEstimate {
        freq_offset,
        phase_origin: PhaseAngle::from_degrees(m0.arg().to_degrees()),
        symbol_epoch: epoch,
    })
}

/// Optional blind symbol-timing search.
///
/// Trigger bursts are front-packed, so the strongest phase slew of every
/// symbol happens right at its start. Folding per-sample phase-increment
/// energy modulo the symbol period concentrates that slew in one bin; the
/// bin's position is the epoch.
pub fn estimate_symbol_epoch(w: &Waveform, timing: &ModemTiming) -> Result<f64> {
    let fs = w.sample_rate;
    let per_symbol = (fs / timing.symbol_rate).round() as usize;
    if per_symbol < 4 {
        return Err(Error::Receiver("too few samples per symbol".into()));
    }
    let mut hist = vec![0.0f64; per_symbol];
    for (k, pair) in w.samples.windows(2).enumerate() {
        let slew = (pair[1] * pair[0].conj()).arg().abs();
        hist[(k + 1) % per_symbol] += slew;
    }
    let best = hist
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(best as f64 / fs)
}

/// Nearest constellation step for a wrapped phase difference.
///
/// `argmin` over `k = 1..=constellation_size` of the wrapped distance to
/// `k × LSB`; ties break toward the smaller `k`. A zero differential is
/// therefore reported as `constellation_size` (the full-turn convention the
/// encoder uses).
pub fn decide(diff_phase: PhaseAngle, mode: ModulationMode) -> u32 {
    let lsb = mode.effective_lsb_deg();
    let m = mode.constellation_size();
    let d = diff_phase.degrees();
    let mut best_k = 1;
    let mut best_dist = f64::INFINITY;
    for k in 1..=m {
        let dist = wrap_deg_pm180(d - k as f64 * lsb).abs();
        if dist < best_dist {
            best_dist = dist;
            best_k = k;
        }
    }
    best_k
}

/// Differential demodulation: derotate by the CDR estimate, measure each
/// symbol's settled phase, difference consecutive symbols and slice on the
/// mode's grid.
pub fn demodulate_dpsk(
    w: &Waveform,
    mode: ModulationMode,
    cdr: &CdrEstimate,
    timing: &ModemTiming,
) -> Result<DemodResult> {
    let windows = settle_windows(w, timing, cdr.symbol_epoch)?;
    let mut means = Vec::with_capacity(windows.len());
    for r in windows {
        let len = r.len() as f64;
        let mut m = Complex64::new(0.0, 0.0);
        for k in r {
            let t = w.sample_time(k);
            m += w.samples[k]
                * Complex64::from_polar(
                    1.0,
                    -2.0 * std::f64::consts::PI * cdr.freq_offset * t,
                );
        }
        m /= len;
        if m.norm() < 1e-12 {
            return Err(Error::Receiver(
                "settled vector vanished; SNR too low to demodulate".into(),
            ));
        }
        means.push(m);
    }
    let mut soft = Vec::with_capacity(means.len().saturating_sub(1));
    let mut decided = Vec::with_capacity(soft.capacity());
    let mut points = Vec::with_capacity(soft.capacity());
    for pair in means.windows(2) {
        let p = pair[1] * pair[0].conj() / pair[0].norm();
        let diff = wrap_deg_0_360(p.arg().to_degrees());
        soft.push(diff);
        decided.push(decide(PhaseAngle::from_degrees(diff), mode));
        points.push(p);
    }
    Ok(DemodResult {
        soft_diff_phases: soft,
        decided_increments: decided,
        diff_points: points,
        settled_means: means,
    })
}

/// Demod dump:
/// `symbol_index,soft_phase_deg,decided_increment,tx_increment,error_flag`.
pub fn write_demod_csv<W: std::io::Write>(
    out: &mut W,
    result: &DemodResult,
    tx_increments: Option<&[u32]>,
) -> std::io::Result<()> {
    writeln!(
        out,
        "symbol_index,soft_phase_deg,decided_increment,tx_increment,error_flag"
    )?;
    for (i, (soft, dec)) in result
        .soft_diff_phases
        .iter()
        .zip(&result.decided_increments)
        .enumerate()
    {
        match tx_increments.and_then(|tx| tx.get(i)) {
            Some(&tx) => writeln!(
                out,
                "{i},{soft},{dec},{tx},{}",
                u8::from(*dec != tx)
            )?,
            None => writeln!(out, "{i},{soft},{dec},,")?,
        }
    }
    Ok(())
}
