//! Physical and geometric constants of the robot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All physical constants of the robot and its wheels.
///
/// The shipped defaults describe a 278 kg four wheel-leg platform with
/// 0.2 m diameter tires and a 40:1 reduction drive. Values that the
/// platform datasheet does not pin down (yaw inertia, wheel spin inertia,
/// drive-train resistance, geometry of the wheel layout) are documented
/// estimates and can be overridden from a parameter file or a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParams {
    /// Total mass `m` (kg).
    pub mass: f64,
    /// Yaw inertia `I` about the vertical axis through the COG (kg m^2).
    /// Default is the flat-box estimate `m (l^2 + d0^2) / 12`.
    pub yaw_inertia: f64,
    /// Wheelbase `l`: longitudinal distance between front and rear axles (m).
    pub wheelbase: f64,
    /// Nominal track width `d0`: lateral distance between wheel pairs (m).
    pub track_width0: f64,
    /// Maximum additional track widening available from the legs (m).
    pub track_stretch_max: f64,
    /// Wheel radius `r` (m).
    pub wheel_radius: f64,
    /// Wheel spin inertia `J_w` (kg m^2), including drive-train inertia
    /// reflected through the reduction gear.
    pub wheel_inertia: f64,
    /// Motor torque gain per input unit for each wheel (N m / unit).
    pub motor_gain: [f64; 4],
    /// Coulomb resistance torque in the transmission (N m).
    pub coulomb_torque: f64,
    /// Viscous resistance coefficient in the transmission (N m s/rad).
    pub viscous_coeff: f64,
    /// Tire friction curve coefficient `c1` (peak factor), dry asphalt.
    pub tire_c1: f64,
    /// Tire friction curve coefficient `c2` (shape factor), dry asphalt.
    pub tire_c2: f64,
    /// Tire friction curve coefficient `c3` (linear falloff), dry asphalt.
    pub tire_c3: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        let mass = 278.0;
        let wheelbase = 1.2;
        let track_width0 = 1.2;
        RobotParams {
            mass,
            yaw_inertia: mass * (wheelbase * wheelbase + track_width0 * track_width0) / 12.0,
            wheelbase,
            track_width0,
            track_stretch_max: 0.5,
            wheel_radius: 0.1,
            wheel_inertia: 0.5,
            motor_gain: [15.0; 4],
            coulomb_torque: 0.5,
            viscous_coeff: 0.05,
            tire_c1: 1.2801,
            tire_c2: 23.99,
            tire_c3: 0.52,
            gravity: 9.81,
        }
    }
}

impl RobotParams {
    /// Static vertical load carried by each wheel (N). The 3-DOF model has
    /// no load transfer, so the split is an even quarter of the weight.
    pub fn wheel_load(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }

    /// Largest track width the legs can reach (m).
    pub fn track_width_max(&self) -> f64 {
        self.track_width0 + self.track_stretch_max
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("wheelbase", self.wheelbase),
            ("track_width0", self.track_width0),
            ("wheel_radius", self.wheel_radius),
            ("wheel_inertia", self.wheel_inertia),
            ("tire_c1", self.tire_c1),
            ("tire_c2", self.tire_c2),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parse(format!(
                    "robot parameter `{name}` must be strictly positive, got {v}"
                )));
            }
        }
        let non_negative = [
            ("track_stretch_max", self.track_stretch_max),
            ("coulomb_torque", self.coulomb_torque),
            ("viscous_coeff", self.viscous_coeff),
            ("tire_c3", self.tire_c3),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Parse(format!(
                    "robot parameter `{name}` must be non-negative, got {v}"
                )));
            }
        }
        for (i, k) in self.motor_gain.iter().enumerate() {
            if !(*k > 0.0) || !k.is_finite() {
                return Err(Error::Parse(format!(
                    "robot parameter `motor_gain[{i}]` must be strictly positive, got {k}"
                )));
            }
        }
        Ok(())
    }

    /// Parse a flat `key = value` parameter file (TOML syntax).
    /// Missing keys fall back to the defaults; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: RobotParams =
            toml::from_str(text).map_err(|e| Error::Parse(format!("robot parameters: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("robot parameters always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = RobotParams::default();
        p.validate().unwrap();
        assert!((p.wheel_load() - 278.0 * 9.81 / 4.0).abs() < 1e-12);
        assert!((p.track_width_max() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn straddle_headroom_over_nominal_track() {
        // The widest obstacle the shipped platform is expected to straddle is
        // 1.6 m; the legs must reach past that.
        let p = RobotParams::default();
        assert!(p.track_width_max() > 1.6);
    }

    #[test]
    fn file_roundtrip() {
        let p = RobotParams::default();
        let text = p.to_toml_string();
        let q = RobotParams::from_toml_str(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RobotParams::from_toml_str("masss = 1.0").unwrap_err();
        assert!(err.to_string().contains("masss"), "{err}");
    }

    #[test]
    fn non_positive_rejected() {
        let err = RobotParams::from_toml_str("mass = -3.0").unwrap_err();
        assert!(err.to_string().contains("mass"));
    }
}
