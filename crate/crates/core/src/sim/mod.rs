//! Fixed-step physics simulation of a PWM-driven four-wheel robot.
//!
//! State is (motor current, forward speed, SOC). Each step integrates, with
//! classical RK4:
//!
//! * `L·dI/dt = p·V_batt(I) − K_e·ω − R·I`, with `V_batt = V_oc − I·R_int`
//! * `m·dv/dt = η·K_t·G/r·I − F_roll − F_drag(v)`, clamped to `v ≥ 0`
//! * `dSOC/dt = −100·I/Q_cap` (SOC in percent, capacity in A·s)
//!
//! `I` is the total current of all four motors. Rolling resistance only acts
//! once the robot moves or the drive force exceeds it; below that the chassis
//! is held at rest.

mod dynamics;
mod params;
mod series;

pub use dynamics::{
    drive_force, resistive_forces, settle, step, terminal_voltage, ResistiveForces, SimulationState,
};
pub use params::{
    BatteryParams, ChassisParams, ConfigError, EnvironmentParams, MotorParams, SimulationConfig,
    MAH_TO_AMPERE_SECONDS,
};
pub use series::{
    generate_dataset, read_series_csv, simulate, write_series_csv, SeriesCsvError, SocSample,
    SocTimeSeries, DEFAULT_PWM_GRID, SERIES_CSV_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("pwm {0}% outside [0, 100]")]
    InvalidPwm(f64),
    #[error("pwm level {0}% listed twice")]
    DuplicateLevel(f64),
    #[error("battery depleted at t = {time_s} s")]
    BatteryDepleted { time_s: f64 },
    #[error("non-finite state at t = {time_s} s")]
    NonFinite { time_s: f64 },
    #[error("velocity did not settle within {max_time_s} s")]
    NotSettled { max_time_s: f64 },
    #[error("pwm {pwm_pct}%: {source}")]
    Level {
        pwm_pct: f64,
        #[source]
        source: Box<SimError>,
    },
}
