//! N-stage ring oscillator models and the charge-extraction trigger event.
//!
//! Two interoperable models:
//!
//! * an event-driven piecewise-linear (PWL) circuit model — each inverter
//!   drives its output node with a constant current `i_ch` into `c_p`,
//!   switching direction when its input crosses the threshold, with the
//!   voltage hard-clamped to the rails. All threshold crossings are solved
//!   exactly (one linear solve per segment), so edge times carry no
//!   timestep error at any carrier frequency;
//! * a fast phase-domain model built on a sensitivity profile `Γ(θ)` that
//!   maps the trigger phase to the phase shift per unit extracted charge.
//!
//! A trigger connects an initially empty capacitor `c_dis` to the modulated
//! node: an instantaneous charge-sharing step `V' = V·c_p/(c_p+c_dis)` at
//! window open, the node then carries `c_p + c_dis` until window close, and
//! `c_dis` is reset to zero charge before the next connection. A window
//! straddling the rising threshold crossing delays every subsequent edge by
//! the constant `v_threshold · c_dis / i_ch`, which is what makes the shift
//! per trigger insensitive to the exact window position.
//!
//! Phase sign convention: accumulated edge *delay* counts as positive
//! modulation phase. One calibrated trigger advances the modulation phase
//! by +22.5°.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::control::TpWindow;
use crate::error::{Error, Result};
use crate::phase::{wrap_deg_0_360, PhaseAngle};

/// Ring-oscillator electrical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OscConfig {
    /// Number of inverter stages; odd, >= 3.
    pub n_stages: usize,
    /// Per-stage charging current, amperes.
    pub i_ch: f64,
    /// Per-node total capacitance, farads.
    pub c_p: f64,
    /// Supply voltage, volts.
    pub v_dd: f64,
    /// Discharge capacitor, farads.
    pub c_dis: f64,
    /// Inverter switching threshold, volts.
    pub v_threshold: f64,
    /// Node the discharge capacitor connects to.
    pub modulated_node: usize,
    /// Node driving the output buffer. Defaults to `modulated_node + 1`.
    pub output_node: usize,
}

impl OscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages < 3 || self.n_stages % 2 == 0 {
            return Err(Error::Config(format!(
                "osc.n_stages must be odd and >= 3, got {}",
                self.n_stages
            )));
        }
        if self.i_ch <= 0.0 || self.c_p <= 0.0 || self.v_dd <= 0.0 || self.c_dis <= 0.0 {
            return Err(Error::Config(
                "osc.i_ch, osc.c_p, osc.v_dd, osc.c_dis must be positive".into(),
            ));
        }
        if self.c_dis >= 10.0 * self.c_p {
            return Err(Error::Config(format!(
                "osc.c_dis = {:.3e} exceeds the sanity bound 10 x c_p = {:.3e}",
                self.c_dis,
                10.0 * self.c_p
            )));
        }
        if !(self.v_threshold > 0.0 && self.v_threshold < self.v_dd) {
            return Err(Error::Config(
                "osc.v_threshold must lie strictly between 0 and v_dd".into(),
            ));
        }
        if self.modulated_node >= self.n_stages || self.output_node >= self.n_stages {
            return Err(Error::Config(
                "osc.modulated_node / osc.output_node out of range".into(),
            ));
        }
        Ok(())
    }

    /// Node the control unit taps (the stage before the modulated one).
    pub fn prev_node(&self) -> usize {
        (self.modulated_node + self.n_stages - 1) % self.n_stages
    }

    /// Ramp slew rate `i_ch / c_p`, volts/second.
    pub fn slew(&self) -> f64 {
        self.i_ch / self.c_p
    }

    /// Time for a node to rise from rail to threshold.
    fn tau_rise(&self) -> f64 {
        self.v_threshold / self.slew()
    }

    /// Time for a node to fall from rail to threshold.
    fn tau_fall(&self) -> f64 {
        (self.v_dd - self.v_threshold) / self.slew()
    }
}

/// Analytic free-running period of the PWL ring.
///
/// Going around the loop twice costs `n` rail-to-threshold rises plus `n`
/// rail-to-threshold falls, so the period is `n · v_dd · c_p / i_ch`
/// independent of the threshold (as long as nodes reach the rails between
/// direction flips, which holds for thresholds away from the rails).
pub fn free_running_period(cfg: &OscConfig) -> f64 {
    cfg.n_stages as f64 * cfg.v_dd * cfg.c_p / cfg.i_ch
}

/// Edge delay produced by one trigger whose window straddles the rising
/// threshold crossing (closed form of the PWL charge-sharing plateau).
pub fn plateau_delay(cfg: &OscConfig) -> f64 {
    cfg.v_threshold * cfg.c_dis / cfg.i_ch
}

/// Same delay expressed as degrees of carrier phase.
pub fn plateau_shift_deg(cfg: &OscConfig) -> f64 {
    360.0 * plateau_delay(cfg) / free_running_period(cfg)
}

/// One threshold crossing of the steady-state cycle, with `t` in `[0, T)`.
#[derive(Debug, Clone, Copy)]
pub struct SteadyCrossing {
    pub node: usize,
    pub rising: bool,
    pub t: f64,
}

/// The 2N threshold crossings of one steady-state period, anchored so that
/// node 0 crosses the threshold upward at t = 0.
pub fn steady_crossings(cfg: &OscConfig) -> Vec<SteadyCrossing> {
    let (tau_f, tau_r) = (cfg.tau_fall(), cfg.tau_rise());
    let n = cfg.n_stages;
    (0..2 * n)
        .map(|k| SteadyCrossing {
            node: k % n,
            rising: k % 2 == 0,
            t: (k as f64 / 2.0).ceil() * tau_f + (k as f64 / 2.0).floor() * tau_r,
        })
        .collect()
}

/// Offset from a rising edge of `prev_node` to the next rising edge of the
/// modulated node, in seconds.
pub fn stage_rise_offset(cfg: &OscConfig) -> f64 {
    let period = free_running_period(cfg);
    let events = steady_crossings(cfg);
    let t_prev = events
        .iter()
        .find(|e| e.node == cfg.prev_node() && e.rising)
        .expect("prev node rise present")
        .t;
    let t_mod = events
        .iter()
        .find(|e| e.node == cfg.modulated_node && e.rising)
        .expect("modulated node rise present")
        .t;
    let mut d = t_mod - t_prev;
    if d <= 0.0 {
        d += period;
    }
    d
}

/// Time in `[0, T)` at which the modulated node starts its rising ramp
/// (its driver flips upward), in the `steady_crossings` frame.
pub fn modulated_ramp_start(cfg: &OscConfig) -> f64 {
    steady_crossings(cfg)
        .iter()
        .find(|e| e.node == cfg.prev_node() && !e.rising)
        .expect("prev node fall present")
        .t
}

/// Snapshot of the live circuit state.
#[derive(Debug, Clone)]
pub struct RingState {
    pub node_voltages: Vec<f64>,
    pub node_slopes: Vec<f64>,
    pub sim_time: f64,
    pub cdis_connected: bool,
    /// Charge held by `c_dis`; retained after disconnect until the reset
    /// that precedes the next connection.
    pub cdis_charge: f64,
}

/// One applied charge extraction. Extraction (charge drawn from the node)
/// is a negative injection.
#[derive(Debug, Clone, Copy)]
pub struct ChargeEvent {
    pub t_inject: f64,
    pub delta_q: f64,
    pub target_node: usize,
}

/// Event-driven simulator for the PWL ring.
///
/// Starts exactly on the oscillation limit cycle, so reported edges are
/// steady from t = 0. Windows are applied in queue order; `advance_to`
/// processes every event up to the requested time.
pub struct RingSim {
    cfg: OscConfig,
    period: f64,
    t: f64,
    v: Vec<f64>,
    drive_up: Vec<bool>,
    cdis_attached: bool,
    cdis_charge: f64,
    pending: VecDeque<TpWindow>,
    active_close: Option<f64>,
    watched: Vec<bool>,
    edges: Vec<Vec<f64>>,
    charge_events: Vec<ChargeEvent>,
    trace: Option<Vec<(f64, Vec<f64>)>>,
}

impl RingSim {
    pub fn new(cfg: &OscConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_stages;
        let period = free_running_period(cfg);
        let slew = cfg.slew();

        // Construct the limit-cycle state at t = 0 (node 0 rising through
        // the threshold). Each node sits on the segment started by its
        // driver's most recent flip, which is its input's most recent
        // crossing at or before t = 0.
        let events = steady_crossings(cfg);
        let mut v = vec![0.0; n];
        let mut drive_up = vec![true; n];
        for node in 0..n {
            let input = (node + n - 1) % n;
            let mut last_t = f64::NEG_INFINITY;
            let mut last_rising = false;
            for e in events.iter().filter(|e| e.node == input) {
                // Map each periodic crossing to its occurrence at or before 0.
                let t = if e.t > 0.0 { e.t - period } else { e.t };
                if t > last_t {
                    last_t = t;
                    last_rising = e.rising;
                }
            }
            // Input rising => this node driven down from v_dd, and vice versa.
            drive_up[node] = !last_rising;
            let elapsed = -last_t;
            v[node] = if drive_up[node] {
                (slew * elapsed).min(cfg.v_dd)
            } else {
                (cfg.v_dd - slew * elapsed).max(0.0)
            };
        }

        let mut sim = RingSim {
            cfg: cfg.clone(),
            period,
            t: 0.0,
            v,
            drive_up,
            cdis_attached: false,
            cdis_charge: 0.0,
            pending: VecDeque::new(),
            active_close: None,
            watched: vec![false; n],
            edges: vec![Vec::new(); n],
            charge_events: Vec::new(),
            trace: None,
        };
        sim.watched[cfg.output_node] = true;
        Ok(sim)
    }

    /// Record rising edges of `node` from now on.
    pub fn watch_node(&mut self, node: usize) {
        self.watched[node] = true;
    }

    /// Record `(t, voltages)` at every event from now on.
    pub fn enable_trace(&mut self) {
        let mut tr = Vec::new();
        tr.push((self.t, self.v.clone()));
        self.trace = Some(tr);
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn edges(&self, node: usize) -> &[f64] {
        &self.edges[node]
    }

    pub fn charge_events(&self) -> &[ChargeEvent] {
        &self.charge_events
    }

    pub fn trace(&self) -> Option<&[(f64, Vec<f64>)]> {
        self.trace.as_deref()
    }

    pub fn state(&self) -> RingState {
        RingState {
            node_voltages: self.v.clone(),
            node_slopes: (0..self.cfg.n_stages).map(|i| self.slope(i)).collect(),
            sim_time: self.t,
            cdis_connected: self.cdis_attached,
            cdis_charge: self.cdis_charge,
        }
    }

    /// Queue a trigger window. Windows must be in the future, ordered, and
    /// no wider than one oscillation period.
    pub fn queue_window(&mut self, w: TpWindow) -> Result<()> {
        let width = w.t_close - w.t_open;
        if !(width > 0.0) {
            return Err(Error::Oscillator(format!(
                "TP window has non-positive width ({width:.3e}s)"
            )));
        }
        if width > self.period {
            return Err(Error::Oscillator(format!(
                "TP window ({width:.3e}s) longer than one oscillation period ({:.3e}s)",
                self.period
            )));
        }
        if w.t_open < self.t {
            return Err(Error::Oscillator(
                "TP window opens before current simulation time".into(),
            ));
        }
        let prev_close = self
            .pending
            .back()
            .map(|p| p.t_close)
            .or(self.active_close)
            .unwrap_or(f64::NEG_INFINITY);
        if w.t_open < prev_close {
            return Err(Error::Oscillator("overlapping TP windows".into()));
        }
        self.pending.push_back(w);
        Ok(())
    }

    fn slope(&self, node: usize) -> f64 {
        let c_eff = if self.cdis_attached && node == self.cfg.modulated_node {
            self.cfg.c_p + self.cfg.c_dis
        } else {
            self.cfg.c_p
        };
        let mag = self.cfg.i_ch / c_eff;
        if self.drive_up[node] {
            mag
        } else {
            -mag
        }
    }

    /// Next threshold crossing of `node`, if its current segment heads for
    /// the threshold.
    fn crossing_time(&self, node: usize) -> Option<f64> {
        let v = self.v[node];
        let vth = self.cfg.v_threshold;
        let s = self.slope(node);
        if self.drive_up[node] && v < vth {
            Some(self.t + (vth - v) / s)
        } else if !self.drive_up[node] && v > vth {
            Some(self.t + (v - vth) / (-s))
        } else {
            None
        }
    }

    fn advance_voltages(&mut self, t_new: f64) {
        let dt = t_new - self.t;
        for i in 0..self.cfg.n_stages {
            let s = self.slope(i);
            self.v[i] = (self.v[i] + s * dt).clamp(0.0, self.cfg.v_dd);
        }
        self.t = t_new;
    }

    fn record_trace_point(&mut self) {
        if let Some(tr) = &mut self.trace {
            tr.push((self.t, self.v.clone()));
        }
    }

    /// Run every event up to `t_stop` and leave the state at `t_stop`.
    pub fn advance_to(&mut self, t_stop: f64) {
        loop {
            let mut t_cross = f64::INFINITY;
            for i in 0..self.cfg.n_stages {
                if let Some(tc) = self.crossing_time(i) {
                    if tc < t_cross {
                        t_cross = tc;
                    }
                }
            }
            let t_open = if self.active_close.is_none() {
                self.pending.front().map_or(f64::INFINITY, |w| w.t_open)
            } else {
                f64::INFINITY
            };
            let t_close = self.active_close.unwrap_or(f64::INFINITY);
            let t_next = t_cross.min(t_open).min(t_close);

            if t_next > t_stop {
                self.advance_voltages(t_stop);
                return;
            }

            // Collect crossings due exactly at t_next before mutating state.
            let due: Vec<usize> = (0..self.cfg.n_stages)
                .filter(|&i| self.crossing_time(i) == Some(t_next))
                .collect();
            self.advance_voltages(t_next);

            for &i in &due {
                let rising = self.drive_up[i];
                self.v[i] = self.cfg.v_threshold; // pin exactly on the threshold
                if rising && self.watched[i] {
                    self.edges[i].push(t_next);
                }
                let next = (i + 1) % self.cfg.n_stages;
                self.drive_up[next] = !rising;
            }

            if t_close == t_next {
                // Disconnect; c_dis keeps its charge until the reset that
                // precedes the next connection.
                self.cdis_attached = false;
                self.active_close = None;
            }
            if t_open == t_next && self.active_close.is_none() {
                let w = self.pending.pop_front().expect("pending window");
                let m = self.cfg.modulated_node;
                let v_before = self.v[m];
                let v_after = v_before * self.cfg.c_p / (self.cfg.c_p + self.cfg.c_dis);
                self.v[m] = v_after;
                self.cdis_attached = true;
                self.cdis_charge = self.cfg.c_dis * v_after;
                self.charge_events.push(ChargeEvent {
                    t_inject: t_next,
                    delta_q: -(v_before - v_after) * self.cfg.c_p,
                    target_node: m,
                });
                // The instantaneous dip can cross the threshold; the next
                // stage sees a falling input edge.
                if v_before >= self.cfg.v_threshold && v_after < self.cfg.v_threshold {
                    let next = (m + 1) % self.cfg.n_stages;
                    self.drive_up[next] = true;
                }
                self.active_close = Some(w.t_close);
            }

            self.record_trace_point();
        }
    }

    /// Advance until `node` records a rising edge at or after `t`, and
    /// return it. Advancement happens in increments of at most `max_step`,
    /// so on return the simulation time exceeds the found edge by less
    /// than `max_step` (callers that queue a window at `edge + d` pass
    /// `max_step <= d`). Errors if no edge shows up within a generous
    /// horizon.
    pub fn next_rising_edge_at_or_after(
        &mut self,
        node: usize,
        t: f64,
        max_step: f64,
    ) -> Result<f64> {
        debug_assert!(self.watched[node]);
        let step = max_step.min(self.period).max(1e-6 * self.period);
        let horizon = t + 8.0 * self.period;
        loop {
            let idx = self.edges[node].partition_point(|&e| e < t);
            if let Some(&e) = self.edges[node].get(idx) {
                return Ok(e);
            }
            if self.t >= horizon {
                return Err(Error::Oscillator(format!(
                    "no rising edge of node {node} within 8 periods after t = {t:.3e}s"
                )));
            }
            let next = (self.t + step).min(horizon);
            self.advance_to(next);
        }
    }
}

/// Result of an open-loop run: rising edges of the output node plus the
/// exact PWL breakpoints of every node (one row per event).
pub struct RingRun {
    pub rising_edges: Vec<f64>,
    pub trace: Vec<(f64, Vec<f64>)>,
    pub charge_events: Vec<ChargeEvent>,
}

/// Simulate the ring for `duration` with a pre-built window schedule.
///
/// The schedule must be sorted and non-overlapping; a window wider than one
/// oscillation period is rejected as a control-unit misconfiguration.
pub fn simulate_ring(cfg: &OscConfig, duration: f64, schedule: &[TpWindow]) -> Result<RingRun> {
    let mut sim = RingSim::new(cfg)?;
    sim.enable_trace();
    for w in schedule {
        sim.queue_window(*w)?;
    }
    sim.advance_to(duration);
    Ok(RingRun {
        rising_edges: sim.edges(cfg.output_node).to_vec(),
        trace: sim.trace().unwrap().to_vec(),
        charge_events: sim.charge_events().to_vec(),
    })
}

/// Write the node trace as CSV (`t_seconds,node_0,...,node_{N-1}`).
pub fn write_node_trace_csv<W: std::io::Write>(
    out: &mut W,
    trace: &[(f64, Vec<f64>)],
) -> std::io::Result<()> {
    if let Some((_, v)) = trace.first() {
        let header: Vec<String> = (0..v.len()).map(|i| format!("node_{i}")).collect();
        writeln!(out, "t_seconds,{}", header.join(","))?;
    }
    for (t, v) in trace {
        let vals: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{t},{}", vals.join(","))?;
    }
    Ok(())
}

/// Write rising-edge times as a one-column CSV.
pub fn write_edges_csv<W: std::io::Write>(out: &mut W, edges: &[f64]) -> std::io::Result<()> {
    writeln!(out, "t_rising_edge_seconds")?;
    for e in edges {
        writeln!(out, "{e}")?;
    }
    Ok(())
}

/// Impulse-sensitivity profile `Γ(θ)` of the modulated node.
///
/// θ = 0 at the start of the node's rising ramp. The default shape is
/// piecewise-triangular: zero across both rail-clamped flats, a positive
/// peak at mid-rise and a negative trough at mid-fall. The peak value is
/// set so that the predicted shift for a trigger at the transition equals
/// the event-driven model's charge-sharing plateau.
#[derive(Debug, Clone)]
pub struct IsfProfile {
    pub gamma_max: f64,
    pub peak_phase: PhaseAngle,
    knots: Vec<(f64, f64)>,
}

impl IsfProfile {
    /// Default profile for a ring configuration.
    pub fn for_ring(cfg: &OscConfig) -> Self {
        let n = cfg.n_stages as f64;
        let rise_deg = 360.0 / n;
        let flat_hi_deg = 360.0 * (n - 2.0) * cfg.v_threshold / (n * cfg.v_dd);
        let fall_deg = rise_deg;
        let gamma_max = 2.0 * PI * (cfg.c_p + cfg.c_dis) / (n * cfg.c_p);
        let fall_start = rise_deg + flat_hi_deg;
        let knots = vec![
            (0.0, 0.0),
            (rise_deg / 2.0, gamma_max),
            (rise_deg, 0.0),
            (fall_start, 0.0),
            (fall_start + fall_deg / 2.0, -gamma_max),
            (fall_start + fall_deg, 0.0),
            (360.0, 0.0),
        ];
        IsfProfile {
            gamma_max,
            peak_phase: PhaseAngle::from_degrees(rise_deg / 2.0),
            knots,
        }
    }

    /// Γ at a phase, by periodic linear interpolation.
    pub fn gamma(&self, theta: PhaseAngle) -> f64 {
        let x = wrap_deg_0_360(theta.degrees());
        for pair in self.knots.windows(2) {
            let (x0, y0) = pair[0];
            let (x1, y1) = pair[1];
            if x >= x0 && x <= x1 {
                if x1 == x0 {
                    return y0;
                }
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            }
        }
        0.0
    }

    /// Profile with every value scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        IsfProfile {
            gamma_max: self.gamma_max * factor,
            peak_phase: self.peak_phase,
            knots: self.knots.iter().map(|&(x, y)| (x, y * factor)).collect(),
        }
    }
}

/// Phase-domain shift for one trigger at `trigger_phase`:
/// `Δφ = Γ(θ) · |Δq_eff| / q_max` with `q_max = c_p·v_dd` and `Δq_eff` the
/// charge drawn by the sharing step at the transition point.
pub fn phase_shift_per_trigger(
    cfg: &OscConfig,
    isf: &IsfProfile,
    trigger_phase: PhaseAngle,
) -> PhaseAngle {
    let q_max = cfg.c_p * cfg.v_dd;
    let dq_eff = cfg.c_dis * cfg.v_threshold * cfg.c_p / (cfg.c_p + cfg.c_dis);
    let dphi_rad = isf.gamma(trigger_phase) * dq_eff / q_max;
    PhaseAngle::from_radians(dphi_rad)
}

/// Which model backs a calibration or a modulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingModel {
    Circuit,
    PhaseDomain,
}

impl RingModel {
    pub fn name(self) -> &'static str {
        match self {
            RingModel::Circuit => "circuit",
            RingModel::PhaseDomain => "phase",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circuit" => Ok(RingModel::Circuit),
            "phase" | "phase_domain" | "phase-domain" => Ok(RingModel::PhaseDomain),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected circuit or phase)"
            ))),
        }
    }
}

/// Width used for a nominally-timed measurement window, kept inside the
/// region where opening cannot glitch the node below threshold from above.
fn measurement_window_width(cfg: &OscConfig) -> f64 {
    let period = free_running_period(cfg);
    let slew = cfg.slew();
    let tau_r = cfg.v_threshold / slew;
    let flat_lo = (cfg.n_stages as f64 - 2.0) * (cfg.v_dd - cfg.v_threshold) / slew;
    let safe_max = 1.8 * (tau_r + flat_lo);
    let want = 2.0 * (plateau_delay(cfg) + 0.02 * period);
    want.clamp(0.05 * period, safe_max.min(0.9 * period))
}

/// Measure the asymptotic output-phase shift (degrees) caused by a single
/// trigger window centered on a rising edge of the modulated node.
pub fn measure_single_trigger_shift(cfg: &OscConfig) -> Result<f64> {
    let period = free_running_period(cfg);
    let width = measurement_window_width(cfg);
    let mut sim = RingSim::new(cfg)?;

    // The sim starts on the limit cycle, so the modulated node's rising
    // crossings sit on an exact grid; center the window on one a few
    // cycles in and compare late output edges against an early reference.
    let cross = steady_crossings(cfg)
        .iter()
        .find(|e| e.node == cfg.modulated_node && e.rising)
        .expect("modulated node rise present")
        .t;
    let target = cross + 6.0 * period;
    sim.queue_window(TpWindow {
        t_open: target - width / 2.0,
        t_close: target + width / 2.0,
        source_bbp: 0,
    })?;
    sim.advance_to(target + 14.0 * period);

    let edges = sim.edges(cfg.output_node);
    let reference: Vec<f64> = edges.iter().copied().filter(|&e| e < target - width).collect();
    let late: Vec<f64> = edges
        .iter()
        .copied()
        .filter(|&e| e > target + width / 2.0 + 4.0 * period)
        .collect();
    if reference.len() < 2 || late.len() < 2 {
        return Err(Error::Oscillator(
            "not enough edges to measure a trigger shift".into(),
        ));
    }
    let e_ref = reference[reference.len() - 1];
    let k_ref = reference.len() - 1;
    let e_late = late[late.len() - 1];
    let k_late = edges.iter().position(|&e| e == e_late).unwrap();
    let delay = (e_late - e_ref) - (k_late - k_ref) as f64 * period;
    Ok(360.0 * delay / period)
}

/// Recovery span after a flat-top dip: the time the node needs to climb
/// back to the rail after the sharing step, expressed in degrees.
pub fn dip_recovery_deg(cfg: &OscConfig) -> f64 {
    360.0 * cfg.v_dd * cfg.c_dis / (cfg.i_ch * free_running_period(cfg))
}

/// Sweep the trigger phase over one full cycle of the modulated node.
///
/// The trigger phase is the node phase at window open, with θ = 0 at the
/// start of its rising ramp. Returns `(theta_deg, shift_deg)` per point;
/// shifts are wrapped, valid for |shift| < half a period.
pub fn sweep_trigger_phase(
    cfg: &OscConfig,
    n_points: usize,
    width: f64,
) -> Result<Vec<(f64, f64)>> {
    let period = free_running_period(cfg);
    let ramp_start = modulated_ramp_start(cfg);
    let mut out = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let theta = 360.0 * i as f64 / n_points as f64;
        let t_open = ramp_start + 6.0 * period + theta / 360.0 * period;
        let mut sim = RingSim::new(cfg)?;
        sim.queue_window(TpWindow {
            t_open,
            t_close: t_open + width,
            source_bbp: 0,
        })?;
        sim.advance_to(t_open + width + 10.0 * period);
        let edges = sim.edges(cfg.output_node);
        let reference: Vec<f64> = edges.iter().copied().filter(|&e| e < t_open).collect();
        let late: Vec<f64> = edges
            .iter()
            .copied()
            .filter(|&e| e > t_open + width + 4.0 * period)
            .collect();
        if reference.is_empty() || late.is_empty() {
            return Err(Error::Oscillator("sweep run too short".into()));
        }
        let e_ref = *reference.last().unwrap();
        let e_late = *late.last().unwrap();
        let raw = (e_late - e_ref) / period;
        let delay_cycles = raw - raw.round();
        out.push((theta, 360.0 * delay_cycles));
    }
    Ok(out)
}

/// Find `c_dis` so that one nominally-timed trigger shifts the phase by
/// `target_lsb`, by bisection on the monotone map `c_dis -> shift`.
pub fn calibrate_cdis(cfg: &OscConfig, target_lsb: PhaseAngle, model: RingModel) -> Result<f64> {
    let target = target_lsb.degrees();
    if !(target > 0.0 && target < 90.0) {
        return Err(Error::Oscillator(format!(
            "calibration target must lie in (0deg, 90deg), got {target}deg"
        )));
    }
    let shift_for = |c_dis: f64| -> Result<f64> {
        let mut probe = cfg.clone();
        probe.c_dis = c_dis;
        match model {
            RingModel::Circuit => measure_single_trigger_shift(&probe),
            RingModel::PhaseDomain => {
                let isf = IsfProfile::for_ring(&probe);
                Ok(phase_shift_per_trigger(&probe, &isf, isf.peak_phase).degrees())
            }
        }
    };

    let mut lo = cfg.c_p / 1000.0;
    let mut hi = 10.0 * cfg.c_p * 0.999; // stay inside the sanity bound
    let f_lo = shift_for(lo)? - target;
    let f_hi = shift_for(hi)? - target;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::Oscillator(format!(
            "no bracket for target {target}deg within [c_p/1000, 10*c_p] \
             (shift range [{:.4}, {:.4}]deg)",
            f_lo + target,
            f_hi + target
        )));
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if shift_for(mid)? - target < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::derive_seed;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_cfg() -> OscConfig {
        OscConfig {
            n_stages: 3,
            i_ch: 10e-6,
            c_p: 10e-15,
            v_dd: 0.8,
            c_dis: 3.75e-15,
            v_threshold: 0.4,
            modulated_node: 1,
            output_node: 2,
        }
    }

    #[test]
    fn test_free_running_period_regression() {
        // n=3, i_ch=10uA, c_p=10fF, v_dd=0.8V: locked closed-form constant.
        let cfg = base_cfg();
        let t = free_running_period(&cfg);
        assert!((t / 2.4e-9 - 1.0).abs() < 1e-12, "period {t:e}");
    }

    #[test]
    fn test_period_scaling() {
        let cfg = base_cfg();
        let t0 = free_running_period(&cfg);
        let mut c2 = cfg.clone();
        c2.i_ch *= 2.0;
        assert!((free_running_period(&c2) - t0 / 2.0).abs() < 1e-24);
        let mut c3 = cfg.clone();
        c3.c_p *= 2.0;
        c3.c_dis *= 2.0;
        assert!((free_running_period(&c3) - t0 * 2.0).abs() < 1e-24);
    }

    #[test]
    fn test_simulated_period_matches_analytic() {
        // Event-driven oracle: mean inter-edge interval over >= 100 cycles.
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let run = simulate_ring(&cfg, 110.0 * period, &[]).unwrap();
        let edges = &run.rising_edges;
        assert!(edges.len() >= 100, "got {} edges", edges.len());
        let mean = (edges[edges.len() - 1] - edges[0]) / (edges.len() - 1) as f64;
        assert!(
            (mean / period - 1.0).abs() < 1e-3,
            "mean {mean:e} vs analytic {period:e}"
        );
    }

    #[test]
    fn test_unperturbed_edges_uniform() {
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let run = simulate_ring(&cfg, 200.0 * period, &[]).unwrap();
        for pair in run.rising_edges.windows(2) {
            let dt = pair[1] - pair[0];
            assert!(
                (dt / period - 1.0).abs() < 1e-9,
                "interval {dt:e} deviates from {period:e}"
            );
        }
    }

    #[test]
    fn test_randomized_configs_period_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(7, "period-oracle", 0));
        for trial in 0..20 {
            let n_stages = *[3usize, 5, 7, 9].iter().nth(rng.gen_range(0..4)).unwrap();
            let v_dd = rng.gen_range(0.5..1.2);
            let cfg = OscConfig {
                n_stages,
                i_ch: rng.gen_range(1e-6..100e-6),
                c_p: rng.gen_range(2e-15..50e-15),
                v_dd,
                c_dis: 1e-15,
                v_threshold: v_dd * rng.gen_range(0.3..0.7),
                modulated_node: 1,
                output_node: 2,
            };
            let period = free_running_period(&cfg);
            let run = simulate_ring(&cfg, 105.0 * period, &[]).unwrap();
            let e = &run.rising_edges;
            assert!(e.len() >= 100);
            let mean = (e[e.len() - 1] - e[0]) / (e.len() - 1) as f64;
            assert!(
                (mean / period - 1.0).abs() < 1e-3,
                "trial {trial}: {mean:e} vs {period:e}"
            );
        }
    }

    #[test]
    fn test_straddling_window_constant_delay() {
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let measured = measure_single_trigger_shift(&cfg).unwrap();
        let expected = plateau_shift_deg(&cfg);
        assert!(
            (measured - expected).abs() < 1e-6,
            "measured {measured} vs plateau {expected}"
        );
        // and all post-trigger intervals return to the free-running period
        let ramp = modulated_ramp_start(&cfg);
        let width = 0.1 * period;
        let t_open = ramp + 6.0 * period + 0.1 * period;
        let run = simulate_ring(
            &cfg,
            30.0 * period,
            &[TpWindow {
                t_open,
                t_close: t_open + width,
                source_bbp: 0,
            }],
        )
        .unwrap();
        let late: Vec<f64> = run
            .rising_edges
            .iter()
            .copied()
            .filter(|&e| e > t_open + width + 2.0 * period)
            .collect();
        for pair in late.windows(2) {
            assert!(((pair[1] - pair[0]) / period - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn test_flat_top_window_no_shift() {
        // Window placed entirely on the high rail: the dip recovers and the
        // shift stays below 2% of the straddling-case shift.
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let straddle = measure_single_trigger_shift(&cfg).unwrap();
        // flat-top of the modulated node starts one rise after ramp start
        let ramp = modulated_ramp_start(&cfg);
        let rise = cfg.v_dd / cfg.slew();
        let t_open = ramp + 6.0 * period + rise + 0.01 * period;
        let width = 0.05 * period;
        let run = simulate_ring(
            &cfg,
            30.0 * period,
            &[TpWindow {
                t_open,
                t_close: t_open + width,
                source_bbp: 0,
            }],
        )
        .unwrap();
        let edges = &run.rising_edges;
        let early: Vec<f64> = edges.iter().copied().filter(|&e| e < t_open).collect();
        let late: Vec<f64> = edges
            .iter()
            .copied()
            .filter(|&e| e > t_open + width + 4.0 * period)
            .collect();
        let raw = (late.last().unwrap() - early.last().unwrap()) / period;
        let shift = 360.0 * (raw - raw.round());
        assert!(
            shift.abs() <= 0.02 * straddle.abs(),
            "flat-top shift {shift} vs straddle {straddle}"
        );
    }

    #[test]
    fn test_amplitude_and_frequency_invariance() {
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        // a burst of 5 windows, one per cycle, tracking the accumulated delay
        let ramp = modulated_ramp_start(&cfg);
        let shift_s = plateau_delay(&cfg);
        let width = measurement_window_width(&cfg);
        let tau_r = cfg.v_threshold / cfg.slew();
        let mut windows = Vec::new();
        for k in 0..5 {
            let center = ramp + tau_r + (6 + k) as f64 * period + k as f64 * shift_s;
            windows.push(TpWindow {
                t_open: center - width / 2.0,
                t_close: center + width / 2.0,
                source_bbp: k as usize,
            });
        }
        let run = simulate_ring(&cfg, 30.0 * period, &windows).unwrap();
        // amplitude: output node still swings rail to rail
        let out = cfg.output_node;
        let steady: Vec<f64> = run
            .trace
            .iter()
            .filter(|(t, _)| *t > 2.0 * period)
            .map(|(_, v)| v[out])
            .collect();
        let vmax = steady.iter().cloned().fold(f64::MIN, f64::max);
        let vmin = steady.iter().cloned().fold(f64::MAX, f64::min);
        assert!((vmax - cfg.v_dd).abs() < 1e-3 * cfg.v_dd, "vmax {vmax}");
        assert!(vmin.abs() < 1e-3 * cfg.v_dd, "vmin {vmin}");
        // frequency: asymptotic interval equals the free period within 0.01%
        let last = windows.last().unwrap().t_close;
        let late: Vec<f64> = run
            .rising_edges
            .iter()
            .copied()
            .filter(|&e| e > last + 2.0 * period)
            .collect();
        for pair in late.windows(2) {
            assert!(((pair[1] - pair[0]) / period - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn test_accumulation_linearity() {
        // n tracked triggers on consecutive cycles accumulate n times the
        // single shift within 0.5 degrees.
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let single = measure_single_trigger_shift(&cfg).unwrap();
        let shift_s = plateau_delay(&cfg);
        let width = measurement_window_width(&cfg);
        let ramp = modulated_ramp_start(&cfg);
        let tau_r = cfg.v_threshold / cfg.slew();
        for n in [1usize, 4, 8, 16] {
            let mut windows = Vec::new();
            for k in 0..n {
                let center = ramp + tau_r + (6 + k) as f64 * period + k as f64 * shift_s;
                windows.push(TpWindow {
                    t_open: center - width / 2.0,
                    t_close: center + width / 2.0,
                    source_bbp: k,
                });
            }
            let stop = windows.last().unwrap().t_close + 8.0 * period;
            let run = simulate_ring(&cfg, stop, &windows).unwrap();
            let edges = &run.rising_edges;
            let first_open = windows[0].t_open;
            let early: Vec<(usize, f64)> = edges
                .iter()
                .copied()
                .enumerate()
                .filter(|&(_, e)| e < first_open - width)
                .collect();
            let (k_ref, e_ref) = *early.last().unwrap();
            let (k_late, e_late) = (edges.len() - 1, edges[edges.len() - 1]);
            let delay = (e_late - e_ref) - (k_late - k_ref) as f64 * period;
            let total = 360.0 * delay / period;
            assert!(
                (total - n as f64 * single).abs() < 0.5,
                "n={n}: total {total} vs {}",
                n as f64 * single
            );
        }
    }

    #[test]
    fn test_phase_shift_per_trigger_model() {
        let cfg = base_cfg();
        let isf = IsfProfile::for_ring(&cfg);
        // calibrated c_dis gives one LSB at the peak
        let at_peak = phase_shift_per_trigger(&cfg, &isf, isf.peak_phase);
        assert!((at_peak.degrees() - 22.5).abs() < 1e-9, "{}", at_peak.degrees());
        // zero on the clamped flat (just after the rise completes)
        let n = cfg.n_stages as f64;
        let flat = PhaseAngle::from_degrees(360.0 / n + 1.0);
        assert_eq!(phase_shift_per_trigger(&cfg, &isf, flat).degrees(), 0.0);
        // linear in the profile
        let half = isf.scaled(0.5);
        let at_half = phase_shift_per_trigger(&cfg, &half, half.peak_phase);
        assert!((at_half.degrees() - 11.25).abs() < 1e-9);
    }

    #[test]
    fn test_isf_sweep_structure() {
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let width = 0.06 * period;
        let width_deg = 360.0 * width / period;
        let sweep = sweep_trigger_phase(&cfg, 48, width).unwrap();
        let max_shift = sweep.iter().map(|&(_, s)| s).fold(f64::MIN, f64::max);
        let argmax = sweep
            .iter()
            .cloned()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0;
        // maximum where the window reaches the rising ramp (possibly
        // opening late in the preceding flat)
        let rise_deg = 360.0 / cfg.n_stages as f64;
        assert!(
            argmax < rise_deg || argmax > 360.0 - width_deg,
            "argmax at {argmax} deg"
        );
        assert!(max_shift > 0.0);
        // near-zero wherever the window (plus dip recovery on the high
        // rail) sits entirely inside a clamped flat
        let n = cfg.n_stages as f64;
        let flat_hi_start = rise_deg;
        let fall_start =
            rise_deg + 360.0 * (n - 2.0) * cfg.v_threshold / (n * cfg.v_dd);
        let fall_end = fall_start + rise_deg;
        let guard = dip_recovery_deg(&cfg).max(width_deg);
        let mut flat_points = 0;
        for &(theta, shift) in &sweep {
            let in_flat_hi = theta > flat_hi_start + 2.0 && theta < fall_start - guard - 2.0;
            let in_flat_lo = theta > fall_end + 2.0 && theta < 358.0 - width_deg;
            if in_flat_hi || in_flat_lo {
                flat_points += 1;
                assert!(
                    shift.abs() <= 0.02 * max_shift,
                    "flat shift {shift} at {theta} deg (max {max_shift})"
                );
            }
        }
        assert!(flat_points >= 3, "only {flat_points} flat sample points");
    }

    #[test]
    fn test_calibrate_cdis_circuit() {
        let mut cfg = base_cfg();
        cfg.c_dis = 1e-15; // start uncalibrated
        let c = calibrate_cdis(&cfg, PhaseAngle::from_degrees(22.5), RingModel::Circuit).unwrap();
        // closed-form optimum for v_th = v_dd/2 is n*c_p/8
        assert!(
            (c - 3.75e-15).abs() < 1e-19,
            "calibrated {c:e} vs 3.75e-15"
        );
        let mut check = cfg.clone();
        check.c_dis = c;
        let shift = measure_single_trigger_shift(&check).unwrap();
        assert!((shift - 22.5).abs() < 0.05, "re-simulated shift {shift}");
    }

    #[test]
    fn test_calibrate_cdis_monotone_and_models_agree() {
        let cfg = base_cfg();
        let c_22 = calibrate_cdis(&cfg, PhaseAngle::from_degrees(22.5), RingModel::Circuit).unwrap();
        let c_45 = calibrate_cdis(&cfg, PhaseAngle::from_degrees(45.0), RingModel::Circuit).unwrap();
        assert!(c_45 > c_22, "{c_45:e} <= {c_22:e}");
        let c_pd = calibrate_cdis(&cfg, PhaseAngle::from_degrees(22.5), RingModel::PhaseDomain)
            .unwrap();
        assert!(
            ((c_pd - c_22) / c_22).abs() < 0.2,
            "models disagree: {c_pd:e} vs {c_22:e}"
        );
    }

    #[test]
    fn test_calibrate_rejects_out_of_range_target() {
        let cfg = base_cfg();
        assert!(calibrate_cdis(&cfg, PhaseAngle::from_degrees(0.0), RingModel::Circuit).is_err());
        // tiny targets drive c_dis toward zero
        let c = calibrate_cdis(&cfg, PhaseAngle::from_degrees(0.5), RingModel::PhaseDomain)
            .unwrap();
        assert!(c < 0.1e-15, "c_dis {c:e} not small");
    }

    #[test]
    fn test_model_equivalence_after_calibration() {
        let mut cfg = base_cfg();
        cfg.c_dis =
            calibrate_cdis(&cfg, PhaseAngle::from_degrees(22.5), RingModel::Circuit).unwrap();
        let isf = IsfProfile::for_ring(&cfg);
        let pd = phase_shift_per_trigger(&cfg, &isf, isf.peak_phase).degrees();
        let circuit = measure_single_trigger_shift(&cfg).unwrap();
        assert!((pd - circuit).abs() < 0.25, "pd {pd} vs circuit {circuit}");
    }

    #[test]
    fn test_charge_event_sign() {
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let ramp = modulated_ramp_start(&cfg);
        let t_open = ramp + 6.0 * period + 0.1 * period;
        let run = simulate_ring(
            &cfg,
            10.0 * period,
            &[TpWindow {
                t_open,
                t_close: t_open + 0.05 * period,
                source_bbp: 0,
            }],
        )
        .unwrap();
        assert_eq!(run.charge_events.len(), 1);
        let ev = run.charge_events[0];
        assert!(ev.delta_q < 0.0, "extraction must be negative injection");
        assert_eq!(ev.target_node, cfg.modulated_node);
    }

    #[test]
    fn test_overlapping_windows_rejected() {
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let w1 = TpWindow {
            t_open: 2.0 * period,
            t_close: 2.2 * period,
            source_bbp: 0,
        };
        let w2 = TpWindow {
            t_open: 2.1 * period,
            t_close: 2.3 * period,
            source_bbp: 1,
        };
        assert!(simulate_ring(&cfg, 5.0 * period, &[w1, w2]).is_err());
        let too_wide = TpWindow {
            t_open: 2.0 * period,
            t_close: 3.5 * period,
            source_bbp: 0,
        };
        assert!(simulate_ring(&cfg, 5.0 * period, &[too_wide]).is_err());
    }

    #[test]
    fn test_trace_and_edge_csv_writers() {
        let cfg = base_cfg();
        let period = free_running_period(&cfg);
        let run = simulate_ring(&cfg, 3.0 * period, &[]).unwrap();
        let mut trace_csv = Vec::new();
        write_node_trace_csv(&mut trace_csv, &run.trace).unwrap();
        let text = String::from_utf8(trace_csv).unwrap();
        assert!(text.starts_with("t_seconds,node_0,node_1,node_2\n"));
        assert_eq!(text.lines().count(), run.trace.len() + 1);
        let mut edge_csv = Vec::new();
        write_edges_csv(&mut edge_csv, &run.rising_edges).unwrap();
        let text = String::from_utf8(edge_csv).unwrap();
        assert_eq!(text.lines().count(), run.rising_edges.len() + 1);
    }

    #[test]
    fn test_stage_rise_offset_matches_simulation() {
        for n in [3usize, 5, 7] {
            let mut cfg = base_cfg();
            cfg.n_stages = n;
            cfg.output_node = 2 % n;
            let analytic = stage_rise_offset(&cfg);
            let mut sim = RingSim::new(&cfg).unwrap();
            sim.watch_node(cfg.prev_node());
            sim.watch_node(cfg.modulated_node);
            let period = free_running_period(&cfg);
            sim.advance_to(12.0 * period);
            let prev = sim.edges(cfg.prev_node());
            let modn = sim.edges(cfg.modulated_node);
            let p = prev[3];
            let m = modn.iter().copied().find(|&e| e > p).unwrap();
            assert!(
                ((m - p) - analytic).abs() < 1e-15 * period.max(1.0) + 1e-18,
                "n={n}: sim offset {} vs analytic {analytic}",
                m - p
            );
        }
    }
}
