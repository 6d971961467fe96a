//! Coupled electrical / mechanical / charge dynamics and the RK4 stepper.

use super::params::{BatteryParams, ChassisParams, EnvironmentParams, SimulationConfig};
use super::SimError;

/// Battery terminal voltage under load. May go negative; callers decide on clamping.
pub fn terminal_voltage(battery: &BatteryParams, current_a: f64) -> f64 {
    battery.open_circuit_voltage - current_a * battery.internal_resistance
}

/// Magnitudes of the two forces opposing forward motion (N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistiveForces {
    /// Rolling resistance `C_rr·m·g`. Whether it acts at rest is decided by the stepper.
    pub rolling: f64,
    /// Aerodynamic drag on the air-relative speed `v + v_w`.
    pub drag: f64,
}

impl ResistiveForces {
    pub fn total(&self) -> f64 {
        self.rolling + self.drag
    }
}

pub fn resistive_forces(
    chassis: &ChassisParams,
    environment: &EnvironmentParams,
    velocity_mps: f64,
) -> ResistiveForces {
    let rolling = chassis.rolling_resistance * chassis.mass * environment.gravity;
    let relative = velocity_mps + environment.wind_speed;
    let drag = 0.5
        * environment.air_density
        * chassis.drag_coefficient
        * chassis.frontal_area
        * relative
        * relative;
    ResistiveForces { rolling, drag }
}

/// Tractive force at the wheels for a given total motor current.
pub fn drive_force(config: &SimulationConfig, current_a: f64) -> f64 {
    config.motor.efficiency * config.motor.torque_constant * config.chassis.gear_ratio
        / config.chassis.wheel_radius
        * current_a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationState {
    pub time_s: f64,
    pub velocity_mps: f64,
    /// Total battery current drawn by all four motors (A).
    pub current_a: f64,
    pub soc_pct: f64,
}

impl SimulationState {
    pub fn at_rest(soc_pct: f64) -> Self {
        Self {
            time_s: 0.0,
            velocity_mps: 0.0,
            current_a: 0.0,
            soc_pct,
        }
    }

    /// Motor shaft speed (rad/s).
    pub fn angular_velocity(&self, chassis: &ChassisParams) -> f64 {
        chassis.gear_ratio * self.velocity_mps / chassis.wheel_radius
    }

    fn is_finite(&self) -> bool {
        self.time_s.is_finite()
            && self.velocity_mps.is_finite()
            && self.current_a.is_finite()
            && self.soc_pct.is_finite()
    }
}

#[derive(Clone, Copy)]
struct Rates {
    current: f64,
    velocity: f64,
    soc: f64,
}

fn rates(config: &SimulationConfig, pwm: f64, current: f64, velocity: f64) -> Rates {
    let motor = &config.motor;
    let velocity = velocity.max(0.0);
    let omega = config.chassis.gear_ratio * velocity / config.chassis.wheel_radius;

    let applied = pwm * terminal_voltage(&config.battery, current);
    let d_current =
        (applied - motor.backemf_constant * omega - motor.armature_resistance * current)
            / motor.inductance;

    let drive = drive_force(config, current);
    let resist = resistive_forces(&config.chassis, &config.environment, velocity);
    let d_velocity = if velocity <= 0.0 && drive <= resist.rolling {
        // held by static friction until the drive force breaks away
        0.0
    } else {
        let accel = (drive - resist.total()) / config.chassis.mass;
        if velocity <= 0.0 {
            accel.max(0.0)
        } else {
            accel
        }
    };

    let d_soc = -100.0 * current / config.battery.capacity_as;
    Rates {
        current: d_current,
        velocity: d_velocity,
        soc: d_soc,
    }
}

/// One classical RK4 step without depletion checks. Velocity is clamped at zero
/// and SOC to [0, 100] afterwards.
pub(crate) fn advance(state: &SimulationState, pwm: f64, config: &SimulationConfig) -> SimulationState {
    let h = config.dt_s;
    let (i0, v0, s0) = (state.current_a, state.velocity_mps, state.soc_pct);

    let k1 = rates(config, pwm, i0, v0);
    let k2 = rates(config, pwm, i0 + 0.5 * h * k1.current, v0 + 0.5 * h * k1.velocity);
    let k3 = rates(config, pwm, i0 + 0.5 * h * k2.current, v0 + 0.5 * h * k2.velocity);
    let k4 = rates(config, pwm, i0 + h * k3.current, v0 + h * k3.velocity);

    let combine = |a: f64, b: f64, c: f64, d: f64| h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
    SimulationState {
        time_s: state.time_s + h,
        current_a: i0 + combine(k1.current, k2.current, k3.current, k4.current),
        velocity_mps: (v0 + combine(k1.velocity, k2.velocity, k3.velocity, k4.velocity)).max(0.0),
        soc_pct: (s0 + combine(k1.soc, k2.soc, k3.soc, k4.soc)).clamp(0.0, 100.0),
    }
}

/// Advances the state by one `dt_s` at duty fraction `pwm_fraction`.
pub fn step(
    state: &SimulationState,
    pwm_fraction: f64,
    config: &SimulationConfig,
) -> Result<SimulationState, SimError> {
    if !(0.0..=1.0).contains(&pwm_fraction) {
        return Err(SimError::InvalidPwm(pwm_fraction * 100.0));
    }
    if !state.is_finite() {
        return Err(SimError::NonFinite { time_s: state.time_s });
    }
    if state.soc_pct <= 0.0 {
        return Err(SimError::BatteryDepleted { time_s: state.time_s });
    }
    let next = advance(state, pwm_fraction, config);
    if !next.is_finite() {
        return Err(SimError::NonFinite { time_s: next.time_s });
    }
    Ok(next)
}

/// Runs from rest at constant duty until the velocity changes by less than
/// 1e-6 m/s over one second of simulated time. SOC is not checked here since it
/// does not feed back into the dynamics.
pub fn settle(
    pwm_fraction: f64,
    config: &SimulationConfig,
    max_time_s: f64,
) -> Result<SimulationState, SimError> {
    if !(0.0..=1.0).contains(&pwm_fraction) {
        return Err(SimError::InvalidPwm(pwm_fraction * 100.0));
    }
    let steps_per_second = (1.0 / config.dt_s).round().max(1.0) as usize;
    let mut state = SimulationState::at_rest(config.initial_soc_pct);
    let mut previous = state.velocity_mps;
    while state.time_s < max_time_s {
        for _ in 0..steps_per_second {
            state = advance(&state, pwm_fraction, config);
        }
        if !state.is_finite() {
            return Err(SimError::NonFinite { time_s: state.time_s });
        }
        if (state.velocity_mps - previous).abs() < 1e-6 {
            return Ok(state);
        }
        previous = state.velocity_mps;
    }
    Err(SimError::NotSettled { max_time_s })
}
