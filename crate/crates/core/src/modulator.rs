//! Multi-trigger DPSK encoder and phase-trajectory synthesis.
//!
//! A frame starts with a reference symbol sent as a single trigger; each
//! data symbol then spends `increment × bbps_per_lsb` triggers (1..=16) in
//! its symbol period, front-packed on the trigger-slot grid so the carrier
//! settles before the measurement tail. Bits map to phase increments
//! through a Gray code (adjacent constellation steps differ in one bit);
//! the all-zeros group maps to a full-turn increment so every symbol emits
//! at least one trigger.

use crate::config::{ModemTiming, ModulationMode, SimConfig};
use crate::control::{generate_tp_windows, BbpPulse, BbpPulseTrain, TpWindow};
use crate::error::{Error, Result};
use crate::oscillator::{free_running_period, RingModel, RingSim};
use crate::phase::wrap_deg_0_360;

/// Hardware phase step per trigger, degrees.
pub const HARDWARE_LSB_DEG: f64 = 22.5;

pub fn gray_encode(i: u32) -> u32 {
    i ^ (i >> 1)
}

pub fn gray_decode(g: u32) -> u32 {
    let mut v = g;
    v ^= v >> 16;
    v ^= v >> 8;
    v ^= v >> 4;
    v ^= v >> 2;
    v ^= v >> 1;
    v
}

/// An encoded symbol stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DpskFrame {
    pub mode: ModulationMode,
    pub payload_bits: Vec<bool>,
    /// Data phase increments in effective-LSB units, each in
    /// `1..=constellation_size`.
    pub symbols: Vec<u32>,
    /// Whether a single-trigger reference symbol leads the frame.
    pub includes_reference: bool,
}

impl DpskFrame {
    /// Trigger counts per transmitted symbol (reference first).
    pub fn transmitted_bbp_counts(&self) -> Vec<u32> {
        let mut counts = Vec::with_capacity(self.symbols.len() + 1);
        if self.includes_reference {
            counts.push(1);
        }
        counts.extend(
            self.symbols
                .iter()
                .map(|&k| k * self.mode.bbps_per_lsb()),
        );
        counts
    }

    pub fn n_transmitted(&self) -> usize {
        self.symbols.len() + usize::from(self.includes_reference)
    }

    /// Cumulative end-of-symbol phases in degrees (exact accumulation on
    /// the 22.5° grid), one per transmitted symbol.
    pub fn symbol_end_phases_deg(&self) -> Vec<f64> {
        let mut acc: u64 = 0;
        self.transmitted_bbp_counts()
            .iter()
            .map(|&c| {
                acc += u64::from(c);
                wrap_deg_0_360(HARDWARE_LSB_DEG * acc as f64)
            })
            .collect()
    }

    /// Frame dump: `symbol_index,increment_lsb,bbp_count,phase_deg_end`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "symbol_index,increment_lsb,bbp_count,phase_deg_end")?;
        let counts = self.transmitted_bbp_counts();
        let phases = self.symbol_end_phases_deg();
        let bbl = self.mode.bbps_per_lsb() as f64;
        for (i, (c, p)) in counts.iter().zip(&phases).enumerate() {
            writeln!(out, "{i},{},{c},{p}", *c as f64 / bbl)?;
        }
        Ok(())
    }
}

/// Bits a decided increment decodes back to (MSB first).
pub fn bits_for_increment(k: u32, mode: ModulationMode) -> Vec<bool> {
    let m = mode.constellation_size();
    let v = gray_encode(k % m);
    let bps = mode.bits_per_symbol();
    (0..bps).rev().map(|b| (v >> b) & 1 == 1).collect()
}

/// Gray-map a bit stream to phase increments.
///
/// Groups are MSB first. Each group's Gray index becomes the increment;
/// index 0 maps to a full turn (`constellation_size`), so the trigger
/// count stays in `1..=16`.
pub fn encode_dpsk(bits: &[bool], mode: ModulationMode) -> Result<DpskFrame> {
    let bps = mode.bits_per_symbol() as usize;
    if bits.len() % bps != 0 {
        return Err(Error::Modulator(format!(
            "bit count {} not divisible by {} bits/symbol",
            bits.len(),
            bps
        )));
    }
    let m = mode.constellation_size();
    let symbols = bits
        .chunks(bps)
        .map(|group| {
            let v = group.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
            let i = gray_decode(v);
            if i == 0 {
                m
            } else {
                i
            }
        })
        .collect();
    Ok(DpskFrame {
        mode,
        payload_bits: bits.to_vec(),
        symbols,
        includes_reference: true,
    })
}

/// Trigger pulses placed on the slot grid, plus symbol boundaries.
#[derive(Debug, Clone)]
pub struct BbpSchedule {
    pub pulses: BbpPulseTrain,
    /// `n_transmitted + 1` boundary times, starting at 0.
    pub symbol_boundaries: Vec<f64>,
}

/// Pack each symbol's triggers from the start of its symbol period on
/// consecutive slots; the rest of the period is idle settle time.
pub fn schedule_bbps(frame: &DpskFrame, timing: &ModemTiming) -> Result<BbpSchedule> {
    let counts = frame.transmitted_bbp_counts();
    let slots = timing.slots_per_symbol();
    let slot_dt = 1.0 / timing.bbp_rate;
    let sym_dt = timing.symbol_period();
    let mut pulses = Vec::new();
    for (s, &count) in counts.iter().enumerate() {
        if count > slots {
            return Err(Error::Modulator(format!(
                "symbol {s} needs {count} triggers but only {slots} slots fit in a symbol period"
            )));
        }
        let t_sym = s as f64 * sym_dt;
        for j in 0..count {
            let t_rise = t_sym + j as f64 * slot_dt;
            pulses.push(BbpPulse {
                t_rise,
                t_fall: t_rise + timing.bbp_high_s,
            });
        }
    }
    let symbol_boundaries = (0..=counts.len()).map(|s| s as f64 * sym_dt).collect();
    Ok(BbpSchedule {
        pulses: BbpPulseTrain { pulses },
        symbol_boundaries,
    })
}

/// Modulation phase over time, in degrees, as sorted `(t, phase)` points
/// with linear interpolation between them. Duplicate times encode steps;
/// queries at a duplicate time take the later value.
#[derive(Debug, Clone)]
pub struct PhaseTrajectory {
    pub points: Vec<(f64, f64)>,
}

impl PhaseTrajectory {
    pub fn duration(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }

    /// Interpolated phase at `t` (flat extrapolation beyond the ends).
    pub fn phase_deg_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if pts.is_empty() {
            return 0.0;
        }
        let idx = pts.partition_point(|p| p.0 <= t);
        if idx == 0 {
            return pts[0].1;
        }
        if idx == pts.len() {
            return pts[pts.len() - 1].1;
        }
        let (t0, p0) = pts[idx - 1];
        let (t1, p1) = pts[idx];
        if t1 == t0 {
            return p1;
        }
        p0 + (p1 - p0) * (t - t0) / (t1 - t0)
    }

    /// Same trajectory plus a linear phase ramp (used to fold a constant
    /// frequency offset into the trajectory domain).
    pub fn with_linear_ramp_deg(&self, deg_per_s: f64) -> PhaseTrajectory {
        PhaseTrajectory {
            points: self
                .points
                .iter()
                .map(|&(t, p)| (t, p + deg_per_s * t))
                .collect(),
        }
    }
}

/// Everything a modulation run produces besides the trajectory.
pub struct ModulationRun {
    pub trajectory: PhaseTrajectory,
    pub windows: Vec<TpWindow>,
    pub schedule: BbpSchedule,
    /// Rising edges of the modulated node over the run (actual in circuit
    /// mode, ideal grid in phase-domain mode); used for window margins.
    pub modulated_edges: Vec<f64>,
}

/// Produce the transmitted phase trajectory for a frame.
///
/// Phase-domain mode accumulates exact 22.5° steps at trigger instants;
/// circuit mode co-simulates the ring with the control unit (windows are
/// generated from the tapped stage's actual, already-shifted edges) and
/// derives the phase from the output node's edge delays.
pub fn modulate(frame: &DpskFrame, cfg: &SimConfig, model: RingModel) -> Result<ModulationRun> {
    let schedule = schedule_bbps(frame, &cfg.modem)?;
    let period = free_running_period(&cfg.osc);
    schedule.pulses.validate(period)?;
    let duration = *schedule.symbol_boundaries.last().unwrap();
    match model {
        RingModel::PhaseDomain => {
            let mut points = vec![(0.0, 0.0)];
            let mut acc: u64 = 0;
            for p in &schedule.pulses.pulses {
                let t = p.t_rise + cfg.control.d1;
                points.push((t, HARDWARE_LSB_DEG * acc as f64));
                acc += 1;
                points.push((t, HARDWARE_LSB_DEG * acc as f64));
            }
            points.push((duration, HARDWARE_LSB_DEG * acc as f64));
            // windows against the ideal free-running grid, for dumps
            let (windows, modulated_edges) = ideal_grid_windows(&schedule.pulses, cfg)?;
            Ok(ModulationRun {
                trajectory: PhaseTrajectory { points },
                windows,
                schedule,
                modulated_edges,
            })
        }
        RingModel::Circuit => {
            let osc = &cfg.osc;
            let mut sim = RingSim::new(osc)?;
            sim.watch_node(osc.prev_node());
            sim.watch_node(osc.modulated_node);
            let mut windows = Vec::with_capacity(schedule.pulses.pulses.len());
            for (i, p) in schedule.pulses.pulses.iter().enumerate() {
                let e =
                    sim.next_rising_edge_at_or_after(osc.prev_node(), p.t_rise, cfg.control.d1)?;
                if e > p.t_fall {
                    return Err(Error::Control(format!(
                        "BBP {i} captured no clock edge (pulse narrower than a cycle?)"
                    )));
                }
                let t_open = e + cfg.control.d1;
                if t_open > p.t_fall {
                    return Err(Error::Control(format!(
                        "BBP {i}: delayed clock edge lands past the pulse; raise bbp_high_cycles"
                    )));
                }
                let w = TpWindow {
                    t_open,
                    t_close: t_open + cfg.control.d2,
                    source_bbp: i,
                };
                sim.queue_window(w)?;
                windows.push(w);
                sim.advance_to(p.t_fall.max(w.t_close));
            }
            sim.advance_to(duration);
            let edges = sim.edges(osc.output_node);
            if edges.len() < 2 {
                return Err(Error::Oscillator("run produced too few edges".into()));
            }
            let trajectory = trajectory_from_edges(edges, period, duration);
            let modulated_edges = sim.edges(osc.modulated_node).to_vec();
            Ok(ModulationRun {
                trajectory,
                windows,
                schedule,
                modulated_edges,
            })
        }
    }
}

/// Windows computed against the unperturbed edge grid (phase-domain runs
/// have no circuit to co-simulate; dumps still want window placements).
fn ideal_grid_windows(
    pulses: &BbpPulseTrain,
    cfg: &SimConfig,
) -> Result<(Vec<TpWindow>, Vec<f64>)> {
    let period = free_running_period(&cfg.osc);
    let duration = pulses
        .pulses
        .last()
        .map_or(0.0, |p| p.t_fall + 2.0 * period);
    let mut sim = RingSim::new(&cfg.osc)?;
    sim.watch_node(cfg.osc.prev_node());
    sim.watch_node(cfg.osc.modulated_node);
    sim.advance_to(duration);
    let gen = generate_tp_windows(pulses, sim.edges(cfg.osc.prev_node()), &cfg.control);
    Ok((
        gen.into_windows()?,
        sim.edges(cfg.osc.modulated_node).to_vec(),
    ))
}

/// Convert output-node edge times into a modulation-phase polyline.
///
/// Edge `k` of an unperturbed ring lands at `e_0 + k·T`; any excess is
/// accumulated delay, which counts as positive modulation phase. Runs of
/// equal phase collapse to segment endpoints.
fn trajectory_from_edges(edges: &[f64], period: f64, duration: f64) -> PhaseTrajectory {
    let e0 = edges[0];
    let tol = 1e-9;
    let mut points: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut pending: Option<(f64, f64)> = None;
    let mut last_phase = 0.0;
    for (k, &e) in edges.iter().enumerate() {
        let phase = 360.0 * ((e - e0) / period - k as f64);
        if (phase - last_phase).abs() <= tol {
            pending = Some((e, last_phase));
        } else {
            if let Some(p) = pending.take() {
                points.push(p);
            }
            points.push((e, phase));
            last_phase = phase;
        }
    }
    if let Some(p) = pending.take() {
        points.push(p);
    }
    points.push((duration.max(points.last().unwrap().0), last_phase));
    PhaseTrajectory { points }
}
