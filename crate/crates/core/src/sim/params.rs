//! Physical parameter blocks and the simulation configuration.
//!
//! Defaults describe a medium-scale hobby robot: 5 kg chassis, 0.1 m wheels,
//! a 12 V / 2500 mAh pack and four small brushed DC motors. Every field can be
//! overridden from a TOML file; missing fields keep their defaults.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

/// Conversion from a rated mAh figure to ampere-seconds.
pub const MAH_TO_AMPERE_SECONDS: f64 = 3.6;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn require_positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            field,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}

/// Brushed DC motor constants. The torque constant is the aggregate drive
/// constant of all four motors acting on the total battery current.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotorParams {
    /// Armature resistance (ohm).
    pub armature_resistance: f64,
    /// Armature inductance (henry).
    pub inductance: f64,
    /// Torque constant (N·m/A).
    pub torque_constant: f64,
    /// Back-EMF constant (V·s/rad).
    pub backemf_constant: f64,
    /// Electrical-to-mechanical conversion efficiency, in (0, 1].
    pub efficiency: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            armature_resistance: 0.5,
            inductance: 2e-3,
            torque_constant: 0.02,
            backemf_constant: 0.02,
            efficiency: 0.80,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive("motor.armature_resistance", self.armature_resistance)?;
        require_positive("motor.inductance", self.inductance)?;
        require_positive("motor.torque_constant", self.torque_constant)?;
        require_positive("motor.backemf_constant", self.backemf_constant)?;
        require_positive("motor.efficiency", self.efficiency)?;
        if self.efficiency > 1.0 {
            return Err(ConfigError::Invalid {
                field: "motor.efficiency",
                reason: format!("must be <= 1, got {}", self.efficiency),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChassisParams {
    /// Total robot mass (kg).
    pub mass: f64,
    /// Wheel radius (m).
    pub wheel_radius: f64,
    pub drag_coefficient: f64,
    pub rolling_resistance: f64,
    /// Frontal cross-section (m²).
    pub frontal_area: f64,
    /// Motor-to-wheel reduction. Gearbox dynamics are not modelled.
    pub gear_ratio: f64,
}

impl Default for ChassisParams {
    fn default() -> Self {
        Self {
            mass: 5.0,
            wheel_radius: 0.1,
            drag_coefficient: 1.2,
            rolling_resistance: 0.02,
            frontal_area: 0.05,
            gear_ratio: 1.0,
        }
    }
}

impl ChassisParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive("chassis.mass", self.mass)?;
        require_positive("chassis.wheel_radius", self.wheel_radius)?;
        require_positive("chassis.drag_coefficient", self.drag_coefficient)?;
        require_positive("chassis.rolling_resistance", self.rolling_resistance)?;
        require_positive("chassis.frontal_area", self.frontal_area)?;
        require_positive("chassis.gear_ratio", self.gear_ratio)
    }
}

/// Battery pack. Capacity is held in ampere-seconds; config files give it in mAh.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "BatteryFile")]
pub struct BatteryParams {
    pub capacity_as: f64,
    pub open_circuit_voltage: f64,
    pub internal_resistance: f64,
}

impl BatteryParams {
    pub fn from_mah(capacity_mah: f64, open_circuit_voltage: f64, internal_resistance: f64) -> Self {
        Self {
            capacity_as: capacity_mah * MAH_TO_AMPERE_SECONDS,
            open_circuit_voltage,
            internal_resistance,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive("battery.capacity_mah", self.capacity_as)?;
        require_positive("battery.open_circuit_voltage", self.open_circuit_voltage)?;
        require_positive("battery.internal_resistance", self.internal_resistance)
    }
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryFile::default().into()
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BatteryFile {
    capacity_mah: f64,
    open_circuit_voltage: f64,
    internal_resistance: f64,
}

impl Default for BatteryFile {
    fn default() -> Self {
        Self {
            capacity_mah: 2500.0,
            open_circuit_voltage: 12.0,
            internal_resistance: 0.05,
        }
    }
}

impl From<BatteryFile> for BatteryParams {
    fn from(f: BatteryFile) -> Self {
        BatteryParams::from_mah(f.capacity_mah, f.open_circuit_voltage, f.internal_resistance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentParams {
    /// kg/m³
    pub air_density: f64,
    /// Headwind speed (m/s), added to the robot speed in the drag term.
    pub wind_speed: f64,
    pub gravity: f64,
}

impl Default for EnvironmentParams {
    fn default() -> Self {
        Self {
            air_density: 1.225,
            wind_speed: 1.0,
            gravity: 9.81,
        }
    }
}

impl EnvironmentParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive("environment.air_density", self.air_density)?;
        require_positive("environment.gravity", self.gravity)?;
        if !(self.wind_speed.is_finite() && self.wind_speed >= 0.0) {
            return Err(ConfigError::Invalid {
                field: "environment.wind_speed",
                reason: format!("must be finite and >= 0, got {}", self.wind_speed),
            });
        }
        Ok(())
    }
}

/// Full simulation setup: physical blocks plus integration and recording settings.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub motor: MotorParams,
    pub chassis: ChassisParams,
    pub battery: BatteryParams,
    pub environment: EnvironmentParams,
    /// Integrator step (s).
    pub dt_s: f64,
    /// Sampling interval of recorded series (s); an integer multiple of `dt_s`.
    pub record_interval_s: f64,
    pub duration_s: f64,
    pub initial_soc_pct: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            motor: MotorParams::default(),
            chassis: ChassisParams::default(),
            battery: BatteryParams::default(),
            environment: EnvironmentParams::default(),
            dt_s: 1e-3,
            record_interval_s: 10.0,
            duration_s: 300.0,
            initial_soc_pct: 100.0,
        }
    }
}

impl SimulationConfig {
    /// Parses a TOML document and validates the result.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: SimulationConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.motor.validate()?;
        self.chassis.validate()?;
        self.battery.validate()?;
        self.environment.validate()?;
        require_positive("dt_s", self.dt_s)?;
        require_positive("record_interval_s", self.record_interval_s)?;
        require_positive("duration_s", self.duration_s)?;
        if self.dt_s > self.record_interval_s {
            return Err(ConfigError::Invalid {
                field: "dt_s",
                reason: format!(
                    "must not exceed record_interval_s ({} > {})",
                    self.dt_s, self.record_interval_s
                ),
            });
        }
        if self.record_interval_s > self.duration_s {
            return Err(ConfigError::Invalid {
                field: "record_interval_s",
                reason: format!(
                    "must not exceed duration_s ({} > {})",
                    self.record_interval_s, self.duration_s
                ),
            });
        }
        let ratio = self.record_interval_s / self.dt_s;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(ConfigError::Invalid {
                field: "record_interval_s",
                reason: format!(
                    "must be an integer multiple of dt_s ({} / {} = {ratio})",
                    self.record_interval_s, self.dt_s
                ),
            });
        }
        if !(self.initial_soc_pct.is_finite()
            && self.initial_soc_pct > 0.0
            && self.initial_soc_pct <= 100.0)
        {
            return Err(ConfigError::Invalid {
                field: "initial_soc_pct",
                reason: format!("must lie in (0, 100], got {}", self.initial_soc_pct),
            });
        }
        Ok(())
    }

    /// Integrator steps between two recorded samples.
    pub fn steps_per_record(&self) -> usize {
        (self.record_interval_s / self.dt_s).round() as usize
    }

    /// Number of recorded samples after t = 0.
    pub fn record_count(&self) -> usize {
        (self.duration_s / self.record_interval_s + 1e-9).floor() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_robot() {
        let c = SimulationConfig::default();
        assert_eq!(c.battery.capacity_as, 9000.0);
        assert_eq!(c.motor.torque_constant, c.motor.backemf_constant);
        assert_eq!(c.steps_per_record(), 10_000);
        assert_eq!(c.record_count(), 30);
        c.validate().unwrap();
    }

    #[test]
    fn empty_toml_gives_defaults() {
        assert_eq!(SimulationConfig::from_toml_str("").unwrap(), SimulationConfig::default());
    }

    #[test]
    fn partial_toml_overrides_fields() {
        let c = SimulationConfig::from_toml_str(
            "duration_s = 60.0\n[battery]\ncapacity_mah = 1000\n[environment]\nwind_speed = 0.0\n",
        )
        .unwrap();
        assert_eq!(c.duration_s, 60.0);
        assert_eq!(c.battery.capacity_as, 3600.0);
        assert_eq!(c.battery.open_circuit_voltage, 12.0);
        assert_eq!(c.environment.wind_speed, 0.0);
        assert_eq!(c.motor, MotorParams::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = SimulationConfig::from_toml_str("[motor]\nresistance = 1.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = SimulationConfig::from_toml_str("[chassis]\nmass = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("chassis.mass"));
        let err = SimulationConfig::from_toml_str("[motor]\nefficiency = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("motor.efficiency"));
        let err = SimulationConfig::from_toml_str("dt_s = 0.003\n").unwrap_err();
        assert!(err.to_string().contains("record_interval_s"));
        let err = SimulationConfig::from_toml_str("initial_soc_pct = 120.0\n").unwrap_err();
        assert!(err.to_string().contains("initial_soc_pct"));
    }
}
