//! Phase-angle arithmetic.
//!
//! Angles are carried in degrees so that constellation geometry stays exact:
//! every grid point is an integer multiple of 22.5°, and 22.5 is a dyadic
//! rational with an exact f64 representation. Conversion to radians happens
//! only at waveform synthesis.

use std::f64::consts::PI;

/// An angle with canonical range [0°, 360°).
///
/// Wrap-around arithmetic is total; the difference of two angles lies in
/// (−180°, 180°].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAngle {
    degrees: f64,
}

impl PhaseAngle {
    pub const ZERO: PhaseAngle = PhaseAngle { degrees: 0.0 };

    /// Construct from degrees, wrapping into [0, 360).
    pub fn from_degrees(deg: f64) -> Self {
        PhaseAngle {
            degrees: wrap_deg_0_360(deg),
        }
    }

    /// Construct from radians, wrapping into [0, 2π).
    pub fn from_radians(rad: f64) -> Self {
        Self::from_degrees(rad * 180.0 / PI)
    }

    /// Canonical value in degrees, [0, 360).
    pub fn degrees(self) -> f64 {
        self.degrees
    }

    /// Canonical value in radians, [0, 2π).
    pub fn radians(self) -> f64 {
        self.degrees * PI / 180.0
    }

    /// Wrapped sum.
    pub fn add(self, other: PhaseAngle) -> PhaseAngle {
        Self::from_degrees(self.degrees + other.degrees)
    }

    /// Signed wrapped difference `self − other`, in (−180°, 180°].
    pub fn diff_degrees(self, other: PhaseAngle) -> f64 {
        wrap_deg_pm180(self.degrees - other.degrees)
    }
}

/// Wrap a degree value into [0, 360).
pub fn wrap_deg_0_360(deg: f64) -> f64 {
    let mut d = deg % 360.0;
    if d < 0.0 {
        d += 360.0;
    }
    // `-0.0 % 360.0` and values like 359.999... stay put; 360.0 folds to 0.
    if d >= 360.0 {
        d -= 360.0;
    }
    d
}

/// Wrap a degree value into (−180, 180].
pub fn wrap_deg_pm180(deg: f64) -> f64 {
    let mut d = deg % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_canonical_range() {
        assert_eq!(PhaseAngle::from_degrees(360.0).degrees(), 0.0);
        assert_eq!(PhaseAngle::from_degrees(-90.0).degrees(), 270.0);
        assert_eq!(PhaseAngle::from_degrees(725.0).degrees(), 5.0);
    }

    #[test]
    fn test_diff_in_half_open_interval() {
        let a = PhaseAngle::from_degrees(10.0);
        let b = PhaseAngle::from_degrees(350.0);
        assert_eq!(a.diff_degrees(b), 20.0);
        assert_eq!(b.diff_degrees(a), -20.0);
        // exactly opposite angles map to +180, not -180
        let c = PhaseAngle::from_degrees(180.0);
        assert_eq!(c.diff_degrees(PhaseAngle::ZERO), 180.0);
        assert_eq!(PhaseAngle::ZERO.diff_degrees(c), 180.0);
    }

    #[test]
    fn test_grid_points_exact() {
        // 22.5 is dyadic; the whole 16-point grid is exact in f64.
        for k in 0..16u32 {
            let p = PhaseAngle::from_degrees(22.5 * k as f64);
            assert_eq!(p.degrees(), 22.5 * k as f64);
        }
        assert_eq!(22.5 * 16.0, 360.0);
    }

    #[test]
    fn test_wrap_total_random() {
        let mut x = 12345.678_f64;
        for _ in 0..1000 {
            x = (x * 1.3 + 7.7) % 1e6 - 5e5;
            let w = wrap_deg_0_360(x);
            assert!((0.0..360.0).contains(&w), "wrap({x}) = {w}");
            let d = wrap_deg_pm180(x);
            assert!(d > -180.0 && d <= 180.0, "wrap_pm({x}) = {d}");
        }
    }

    #[test]
    fn test_radians_roundtrip() {
        let p = PhaseAngle::from_radians(1.0);
        assert!((p.radians() - 1.0).abs() < 1e-15);
    }
}
