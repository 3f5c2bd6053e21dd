//! Behavioral model of the trigger-window control unit.
//!
//! Two DFFs and two delay lines turn each baseband pulse (BBP) into one
//! trigger-pulse (TP) window aligned to the oscillator: while the BBP is
//! low both flops are held in reset; the first tapped-stage rising edge
//! inside the pulse clocks the first flop through the `d1` delay line and
//! opens the window; `d2` later the second flop closes it. One window per
//! BBP, width exactly `d2` in nominal mode.
//!
//! A clock edge whose delayed arrival falls past the end of its BBP meets
//! a flop already in reset, so no window is emitted; the pulse is reported
//! instead. PVT spread is modeled as independent Gaussian multiplicative
//! perturbations on `d1` and `d2` per Monte Carlo trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oscillator::{free_running_period, plateau_delay, OscConfig, RingSim};
use crate::par::{derive_seed, map_indexed};

/// Delay-line configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    /// Window-position delay, seconds.
    pub d1: f64,
    /// Window-width delay, seconds.
    pub d2: f64,
    /// Fractional standard deviation applied to `d1` and `d2` in Monte
    /// Carlo trials.
    pub pvt_sigma: f64,
}

/// One baseband pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbpPulse {
    pub t_rise: f64,
    pub t_fall: f64,
}

/// A sorted, non-overlapping train of baseband pulses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BbpPulseTrain {
    pub pulses: Vec<BbpPulse>,
}

impl BbpPulseTrain {
    /// Check ordering, non-overlap, and the minimum pulse width (one
    /// oscillator period, so a clock edge can be captured).
    pub fn validate(&self, min_pulse_s: f64) -> Result<()> {
        let mut prev_fall = f64::NEG_INFINITY;
        for (i, p) in self.pulses.iter().enumerate() {
            if p.t_fall <= p.t_rise {
                return Err(Error::Control(format!("BBP {i} has non-positive width")));
            }
            if p.t_rise < prev_fall {
                return Err(Error::Control(format!("BBP {i} overlaps its predecessor")));
            }
            if p.t_fall - p.t_rise < min_pulse_s {
                return Err(Error::Control(format!(
                    "BBP {i} narrower than one oscillator period ({min_pulse_s:.3e}s)"
                )));
            }
            prev_fall = p.t_fall;
        }
        Ok(())
    }
}

/// One trigger window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpWindow {
    pub t_open: f64,
    pub t_close: f64,
    pub source_bbp: usize,
}

/// A BBP that produced no window, with the reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// No tapped-stage rising edge inside the pulse.
    NoClockEdge,
    /// The delayed clock edge arrived after the pulse ended (flop reset).
    DelayedPastPulse,
}

#[derive(Debug, Clone, Copy)]
pub struct SkippedBbp {
    pub bbp_index: usize,
    pub reason: SkipReason,
}

/// Output of window generation.
#[derive(Debug, Clone, Default)]
pub struct WindowGen {
    pub windows: Vec<TpWindow>,
    pub skipped: Vec<SkippedBbp>,
}

impl WindowGen {
    pub fn into_windows(self) -> Result<Vec<TpWindow>> {
        if let Some(s) = self.skipped.first() {
            return Err(Error::Control(format!(
                "BBP {} produced no trigger window ({:?})",
                s.bbp_index, s.reason
            )));
        }
        Ok(self.windows)
    }
}

/// Generate one TP window per BBP from the tapped stage's rising edges.
///
/// For each pulse, the first edge `e` with `t_rise <= e <= t_fall` opens a
/// window at `e + d1` that closes at `e + d1 + d2`; pulses that capture no
/// edge, or whose delayed edge lands past the pulse, are reported.
pub fn generate_tp_windows(
    bbp: &BbpPulseTrain,
    vo_prev_edges: &[f64],
    cfg: &ControlConfig,
) -> WindowGen {
    let mut out = WindowGen::default();
    for (i, p) in bbp.pulses.iter().enumerate() {
        let idx = vo_prev_edges.partition_point(|&e| e < p.t_rise);
        match vo_prev_edges.get(idx) {
            Some(&e) if e <= p.t_fall => {
                let t_open = e + cfg.d1;
                if t_open > p.t_fall {
                    out.skipped.push(SkippedBbp {
                        bbp_index: i,
                        reason: SkipReason::DelayedPastPulse,
                    });
                } else {
                    out.windows.push(TpWindow {
                        t_open,
                        t_close: t_open + cfg.d2,
                        source_bbp: i,
                    });
                }
            }
            _ => out.skipped.push(SkippedBbp {
                bbp_index: i,
                reason: SkipReason::NoClockEdge,
            }),
        }
    }
    out
}

/// Containment report for a window list against its designated edges.
#[derive(Debug, Clone)]
pub struct AlignmentReport {
    pub covered: usize,
    pub total: usize,
    /// Per window: distance from the designated edge to the closest window
    /// boundary; negative when the edge escapes the window.
    pub margins: Vec<f64>,
}

/// The modulated-node edge each BBP's window is meant to capture: the
/// first one after the pulse's clock edge. `None` when the pulse captures
/// no clock edge at all.
pub fn designated_edges(
    bbp: &BbpPulseTrain,
    vo_prev_edges: &[f64],
    modulated_edges: &[f64],
) -> Vec<Option<f64>> {
    bbp.pulses
        .iter()
        .map(|p| {
            let idx = vo_prev_edges.partition_point(|&e| e < p.t_rise);
            let clk = vo_prev_edges.get(idx).copied().filter(|&e| e <= p.t_fall)?;
            let j = modulated_edges.partition_point(|&e| e <= clk);
            modulated_edges.get(j).copied()
        })
        .collect()
}

/// For each window, check whether its designated rising edge
/// (`target_edges[source_bbp]`) falls strictly inside `(t_open, t_close)`
/// and report the margin to the boundaries. Containment is judged against
/// the specific edge the window was supposed to catch, so a window that
/// slipped a whole period onto the next edge still counts as a miss.
pub fn check_window_alignment(windows: &[TpWindow], target_edges: &[f64]) -> AlignmentReport {
    let mut covered = 0;
    let mut margins = Vec::with_capacity(windows.len());
    for w in windows {
        let margin = match target_edges.get(w.source_bbp) {
            Some(&e) => (e - w.t_open).min(w.t_close - e),
            None => f64::NEG_INFINITY,
        };
        if margin > 0.0 {
            covered += 1;
        }
        margins.push(margin);
    }
    AlignmentReport {
        covered,
        total: windows.len(),
        margins,
    }
}

/// Measure the tap-to-modulated rising-edge offset from actual simulated
/// edge times.
pub fn measure_stage_offset(osc: &OscConfig) -> Result<f64> {
    let period = free_running_period(osc);
    let mut sim = RingSim::new(osc)?;
    sim.watch_node(osc.prev_node());
    sim.watch_node(osc.modulated_node);
    sim.advance_to(12.0 * period);
    let prev = sim.edges(osc.prev_node());
    let modn = sim.edges(osc.modulated_node);
    if prev.len() < 4 || modn.is_empty() {
        return Err(Error::Control("offset measurement run too short".into()));
    }
    let p = prev[2];
    let m = modn
        .iter()
        .copied()
        .find(|&e| e > p)
        .ok_or_else(|| Error::Control("no modulated edge after tap edge".into()))?;
    Ok(m - p)
}

/// Pick nominal `d1`/`d2` that keep the modulated rising edge inside the
/// window across the PVT box `±safety_sigma × pvt_sigma`.
///
/// The window is centered on the edge with margin
/// `m = plateau delay + 2% of the period` (so the trigger-delayed crossing
/// also stays inside), then widened so the worst corner of the
/// multiplicative box still contains the edge with that margin; the split
/// between `d1` and `d2` equalizes the two worst-case boundary margins.
pub fn tune_delays(osc: &OscConfig, pvt_sigma: f64, safety_sigma: f64) -> Result<ControlConfig> {
    let period = free_running_period(osc);
    let offset = measure_stage_offset(osc)?;
    let margin = plateau_delay(osc) + 0.02 * period;
    let k = pvt_sigma * safety_sigma;
    if k >= 1.0 {
        return Err(Error::Control(format!(
            "PVT box {k:.2} >= 1: a multiplicative spread that wide cannot be covered"
        )));
    }
    if margin >= offset {
        return Err(Error::Control(
            "required margin exceeds the stage offset; window cannot be centered".into(),
        ));
    }
    let d2 = (2.0 * margin + 2.0 * k * offset) / (1.0 - k * k);
    if d2 >= period {
        return Err(Error::Control(format!(
            "required window width {d2:.3e}s is not narrower than the period {period:.3e}s"
        )));
    }
    let d1 = (offset - margin) / (1.0 + k);
    Ok(ControlConfig {
        d1,
        d2,
        pvt_sigma,
    })
}

/// Monte Carlo alignment across PVT trials.
#[derive(Debug, Clone)]
pub struct AlignmentMc {
    pub trials: usize,
    pub passed: usize,
    pub worst_margin: f64,
}

impl AlignmentMc {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

/// Rerun window generation + containment with `d1`, `d2` perturbed by
/// independent Gaussian factors per trial. The designated edges come from
/// the unperturbed geometry; trials run in parallel with derived seeds and
/// results are identical across thread counts.
pub fn monte_carlo_alignment(
    bbp: &BbpPulseTrain,
    vo_prev_edges: &[f64],
    modulated_edges: &[f64],
    cfg: &ControlConfig,
    trials: usize,
    seed: u64,
) -> AlignmentMc {
    let target_edges: Vec<f64> = designated_edges(bbp, vo_prev_edges, modulated_edges)
        .into_iter()
        .map(|e| e.unwrap_or(f64::NAN))
        .collect();
    let results = map_indexed(trials, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pvt-trial", i as u64));
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let perturbed = ControlConfig {
            d1: (cfg.d1 * (1.0 + cfg.pvt_sigma * z1)).max(1e-3 * cfg.d1),
            d2: (cfg.d2 * (1.0 + cfg.pvt_sigma * z2)).max(1e-3 * cfg.d2),
            pvt_sigma: cfg.pvt_sigma,
        };
        let gen = generate_tp_windows(bbp, vo_prev_edges, &perturbed);
        if !gen.skipped.is_empty() {
            return (false, f64::NEG_INFINITY);
        }
        let report = check_window_alignment(&gen.windows, &target_edges);
        let worst = report
            .margins
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        (report.covered == report.total && report.total == bbp.pulses.len(), worst)
    });
    let passed = results.iter().filter(|(ok, _)| *ok).count();
    let worst_margin = results
        .iter()
        .map(|&(_, m)| m)
        .fold(f64::INFINITY, f64::min);
    AlignmentMc {
        trials,
        passed,
        worst_margin,
    }
}

/// Window list dump: `bbp_index,t_open,t_close,margin_seconds`.
pub fn write_windows_csv<W: std::io::Write>(
    out: &mut W,
    windows: &[TpWindow],
    margins: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "bbp_index,t_open,t_close,margin_seconds")?;
    for (w, m) in windows.iter().zip(margins) {
        writeln!(out, "{},{},{},{}", w.source_bbp, w.t_open, w.t_close, m)?;
    }
    Ok(())
}
