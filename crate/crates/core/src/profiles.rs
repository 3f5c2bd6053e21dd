//! Canned configurations.
//!
//! `paper` runs the full-rate point (2.4 GHz carrier, 2 MSps); `scaled`
//! divides every rate by 1000 (2.4 MHz carrier, 2 kSps) with all ratios
//! preserved, which keeps circuit-mode runs cheap in tests. The model is
//! ratio-invariant, so results transfer between the two.

use crate::config::{ModemTiming, SimConfig};
use crate::control::tune_delays;
use crate::frontend::ImpairmentConfig;
use crate::oscillator::OscConfig;

fn build(osc: OscConfig, rate_scale: f64) -> SimConfig {
    let control = tune_delays(&osc, 0.2, 0.0).expect("nominal tuning is feasible");
    SimConfig {
        osc,
        control,
        modem: ModemTiming {
            symbol_rate: 2e6 * rate_scale,
            baseband_clock: 4e6 * rate_scale,
            bbp_rate: 160e6 * rate_scale,
            bbp_high_cycles: 0,
            bbp_high_s: 0.0,
            settle_fraction: 0.25,
        },
        impairments: ImpairmentConfig {
            seed: 0,
            ..ImpairmentConfig::clean()
        },
        sample_rate: 64e6 * rate_scale,
        rng_seed: 1,
    }
}

/// Full-rate profile: 3-stage ring at 2.4 GHz, 2 MSps, 160 MHz trigger
/// grid, discharge capacitor calibrated for a 22.5° step.
pub fn paper() -> SimConfig {
    build(
        OscConfig {
            n_stages: 3,
            i_ch: 57.6e-6,
            c_p: 10e-15,
            v_dd: 0.8,
            c_dis: 3.75e-15,
            v_threshold: 0.4,
            modulated_node: 1,
            output_node: 2,
        },
        1.0,
    )
}

/// All rates divided by 1000; same geometry and ratios.
pub fn scaled() -> SimConfig {
    build(
        OscConfig {
            n_stages: 3,
            i_ch: 57.6e-9,
            c_p: 10e-15,
            v_dd: 0.8,
            c_dis: 3.75e-15,
            v_threshold: 0.4,
            modulated_node: 1,
            output_node: 2,
        },
        1e-3,
    )
}

/// Scaled profile with a 7-stage ring (smaller tap-to-modulated offset
/// relative to the period, used for window-robustness studies).
pub fn scaled_n7() -> SimConfig {
    build(
        OscConfig {
            n_stages: 7,
            i_ch: 134.4e-9,
            c_p: 10e-15,
            v_dd: 0.8,
            c_dis: 8.75e-15,
            v_threshold: 0.4,
            modulated_node: 1,
            output_node: 2,
        },
        1e-3,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_config;
    use crate::oscillator::{free_running_period, plateau_shift_deg};

    #[test]
    fn test_profiles_validate() {
        for cfg in [paper(), scaled(), scaled_n7()] {
            validate_config(cfg).expect("profile validates");
        }
    }

    #[test]
    fn test_paper_carrier_frequency() {
        let cfg = paper();
        let f = 1.0 / free_running_period(&cfg.osc);
        assert!((f / 2.4e9 - 1.0).abs() < 1e-12, "carrier {f}");
        let fs = 1.0 / free_running_period(&scaled().osc);
        assert!((fs / 2.4e6 - 1.0).abs() < 1e-12, "scaled carrier {fs}");
    }

    #[test]
    fn test_profiles_calibrated_to_one_lsb() {
        for cfg in [paper(), scaled(), scaled_n7()] {
            let shift = plateau_shift_deg(&cfg.osc);
            assert!((shift - 22.5).abs() < 1e-9, "shift {shift}");
        }
    }
}
