//! Cross-module integration: bundled configs, waveform/trajectory
//! agreement, and metric monotonicity across the impairment grid.

use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ringtx_core::config::ModulationMode;
use ringtx_core::frontend::synthesize_waveform;
use ringtx_core::modulator::{encode_dpsk, modulate};
use ringtx_core::oscillator::RingModel;
use ringtx_core::phase::wrap_deg_pm180;
use ringtx_core::scenario::{run_simulate, Scenario};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn bundled_paper_config_runs_clean() {
    let text = std::fs::read_to_string(config_path("paper.conf")).unwrap();
    let mut scn = Scenario::parse_text(&text).unwrap();
    scn.n_symbols = 64; // keep the smoke run short
    let out = run_simulate(&scn, None).unwrap();
    assert_eq!(out.rates.ser, 0.0);
    assert!(out.evm.evm_rms_percent < 1.0);
}

#[test]
fn bundled_scaled_config_runs_clean_in_circuit_mode() {
    let text = std::fs::read_to_string(config_path("scaled.conf")).unwrap();
    let scn = Scenario::parse_text(&text).unwrap();
    assert_eq!(scn.model, RingModel::Circuit);
    let out = run_simulate(&scn, None).unwrap();
    assert_eq!(out.rates.ser, 0.0);
    assert!(out.evm.evm_rms_percent < 1.0);
}

#[test]
fn waveform_symbol_end_phases_match_trajectory() {
    // sampled waveform vs the trajectory it came from, at symbol ends
    let sim = ringtx_core::config::validate_config(ringtx_core::profiles::paper()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let payload: Vec<bool> = (0..4 * 100).map(|_| rng.gen()).collect();
    let frame = encode_dpsk(&payload, ModulationMode::Dpsk16).unwrap();
    let run = modulate(&frame, &sim, RingModel::PhaseDomain).unwrap();
    let wave = synthesize_waveform(&run.trajectory, sim.sample_rate, run.trajectory.duration())
        .unwrap();
    let sym = sim.modem.symbol_period();
    for s in 0..frame.n_transmitted() {
        // last sample strictly inside symbol s
        let t_end = (s as f64 + 1.0) * sym;
        let k = ((t_end * sim.sample_rate).ceil() as usize - 1).min(wave.samples.len() - 1);
        let t_k = wave.sample_time(k);
        let measured = wave.samples[k].arg().to_degrees();
        let expected = run.trajectory.phase_deg_at(t_k);
        let err = wrap_deg_pm180(measured - expected).abs();
        assert!(err < 0.01, "symbol {s}: waveform {measured} vs trajectory {expected}");
    }
}

#[test]
fn evm_monotone_over_impairment_grid() {
    // same master seed everywhere, so noise shapes are shared and only
    // magnitudes change
    let sim = ringtx_core::config::validate_config(ringtx_core::profiles::paper()).unwrap();
    let base = Scenario::new(sim, ModulationMode::Dpsk16, 200, RingModel::PhaseDomain);
    let diffusions = [0.0, 1000.0, 4000.0];
    let snrs = [40.0, 25.0, 15.0];
    let mut grid = vec![vec![0.0f64; snrs.len()]; diffusions.len()];
    for (i, &d) in diffusions.iter().enumerate() {
        for (j, &snr) in snrs.iter().enumerate() {
            let mut scn = base.clone();
            scn.sim.impairments.phase_noise_diffusion = d;
            scn.sim.impairments.awgn_snr_db = Some(snr);
            grid[i][j] = run_simulate(&scn, None).unwrap().evm.evm_rms_percent;
        }
    }
    for j in 0..snrs.len() {
        for i in 1..diffusions.len() {
            assert!(
                grid[i][j] >= grid[i - 1][j] - 1e-9,
                "EVM not non-decreasing in diffusion at snr {}: {:?}",
                snrs[j],
                grid
            );
        }
    }
    for i in 0..diffusions.len() {
        for j in 1..snrs.len() {
            // lower SNR (later column) must not reduce EVM
            assert!(
                grid[i][j] >= grid[i][j - 1] - 1e-9,
                "EVM not non-increasing in SNR at D {}: {:?}",
                diffusions[i],
                grid
            );
        }
    }
}
