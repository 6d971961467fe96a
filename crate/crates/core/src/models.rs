//! Closed-form SOC models.
//!
//! Three identified model forms, with `t` in seconds and `p` in percent:
//!
//! * Model 1, SOC over time and duty:
//!   `a − b·t − c·p − d·p² − e·p³ − f·ln(1+t) − g·t/(p+1) + h·ln(1+t)/(1+t)`
//! * Model 2, SOC at a fixed horizon: `a·p² − b·p + c`
//! * Model 3, SOC rate: `−a − b·p² − c·p³ − d/(1+t) − e/(p+1) + f·(1−ln(1+t))/(1+t)²`
//!
//! The theoretical two-regime approximation works with the duty *fraction*
//! `p ∈ [0, 1]` instead, as do the motor equations it is derived from.

use std::io::{BufRead, Write};

use crate::csvfmt::sig12;
use crate::library::{assemble, LibraryError, LibrarySpec, Target};
use crate::regression::{ols, stlsq, RegressionError, RegularizationParams, SparseCoefficients, ThresholdScale};
use crate::sim::{
    settle, BatteryParams, ChassisParams, EnvironmentParams, MotorParams, SimError, SimulationConfig,
    SocTimeSeries,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model1Coefficients {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub e1: f64,
    pub f1: f64,
    pub g1: f64,
    pub h1: f64,
}

impl Model1Coefficients {
    pub const PUBLISHED: Self = Self {
        a1: 100.1,
        b1: 0.00131,
        c1: 0.000114,
        d1: 9.93e-6,
        e1: 3.17e-7,
        f1: 0.00107,
        g1: 0.014,
        h1: 0.106,
    };
    pub const NAMES: [&'static str; 8] = ["a1", "b1", "c1", "d1", "e1", "f1", "g1", "h1"];

    pub fn to_array(&self) -> [f64; 8] {
        [self.a1, self.b1, self.c1, self.d1, self.e1, self.f1, self.g1, self.h1]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        let [a1, b1, c1, d1, e1, f1, g1, h1] = v;
        Self { a1, b1, c1, d1, e1, f1, g1, h1 }
    }
}

impl Default for Model1Coefficients {
    fn default() -> Self {
        Self::PUBLISHED
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model2Coefficients {
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl Model2Coefficients {
    pub const PUBLISHED: Self = Self { a2: 0.0021, b2: 1.1496, c2: 101.011 };
    pub const NAMES: [&'static str; 3] = ["a2", "b2", "c2"];

    pub fn to_array(&self) -> [f64; 3] {
        [self.a2, self.b2, self.c2]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        let [a2, b2, c2] = v;
        Self { a2, b2, c2 }
    }
}

impl Default for Model2Coefficients {
    fn default() -> Self {
        Self::PUBLISHED
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model3Coefficients {
    pub a3: f64,
    pub b3: f64,
    pub c3: f64,
    pub d3: f64,
    pub e3: f64,
    pub f3: f64,
}

impl Model3Coefficients {
    pub const PUBLISHED: Self = Self {
        a3: 0.00131,
        b3: 9.93e-6,
        c3: 3.17e-7,
        d3: 0.00107,
        e3: 0.014,
        f3: 0.106,
    };
    pub const NAMES: [&'static str; 6] = ["a3", "b3", "c3", "d3", "e3", "f3"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.a3, self.b3, self.c3, self.d3, self.e3, self.f3]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        let [a3, b3, c3, d3, e3, f3] = v;
        Self { a3, b3, c3, d3, e3, f3 }
    }
}

impl Default for Model3Coefficients {
    fn default() -> Self {
        Self::PUBLISHED
    }
}

/// Rate coefficients paired with a Model 1 set: `a↔b₁, b↔d₁, c↔e₁, d↔f₁, e↔g₁, f↔h₁`.
impl From<&Model1Coefficients> for Model3Coefficients {
    fn from(c: &Model1Coefficients) -> Self {
        Self { a3: c.b1, b3: c.d1, c3: c.e1, d3: c.f1, e3: c.g1, f3: c.h1 }
    }
}

pub fn eval_model1(c: &Model1Coefficients, t: f64, p: f64) -> f64 {
    let log = t.ln_1p();
    c.a1 - c.b1 * t - c.c1 * p - c.d1 * p * p - c.e1 * p * p * p - c.f1 * log - c.g1 * t / (p + 1.0)
        + c.h1 * log / (1.0 + t)
}

/// Analytic `∂/∂t` of Model 1.
pub fn model1_time_derivative(c: &Model1Coefficients, t: f64, p: f64) -> f64 {
    let u = 1.0 + t;
    -c.b1 - c.f1 / u - c.g1 / (p + 1.0) + c.h1 * (1.0 - t.ln_1p()) / (u * u)
}

pub fn eval_model2(c: &Model2Coefficients, p: f64) -> f64 {
    c.a2 * p * p - c.b2 * p + c.c2
}

/// SOC rate in percent per second.
pub fn eval_model3(c: &Model3Coefficients, t: f64, p: f64) -> f64 {
    let u = 1.0 + t;
    -c.a3 - c.b3 * p * p - c.c3 * p * p * p - c.d3 / u - c.e3 / (p + 1.0)
        + c.f3 * (1.0 - t.ln_1p()) / (u * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Model1,
    Model2,
    Model3,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Model1 => "model1",
            ModelKind::Model2 => "model2",
            ModelKind::Model3 => "model3",
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(ModelKind::Model1),
            2 => Some(ModelKind::Model2),
            3 => Some(ModelKind::Model3),
            _ => None,
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        [ModelKind::Model1, ModelKind::Model2, ModelKind::Model3]
            .into_iter()
            .find(|k| k.tag() == tag)
    }
}

/// Any of the three model forms with its coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SocModel {
    Model1(Model1Coefficients),
    Model2(Model2Coefficients),
    Model3(Model3Coefficients),
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing `# model_kind=...` header")]
    MissingKind,
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("coefficient `{0}` missing from model file")]
    MissingCoefficient(&'static str),
}

impl SocModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SocModel::Model1(_) => ModelKind::Model1,
            SocModel::Model2(_) => ModelKind::Model2,
            SocModel::Model3(_) => ModelKind::Model3,
        }
    }

    pub fn published(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Model1 => SocModel::Model1(Model1Coefficients::PUBLISHED),
            ModelKind::Model2 => SocModel::Model2(Model2Coefficients::PUBLISHED),
            ModelKind::Model3 => SocModel::Model3(Model3Coefficients::PUBLISHED),
        }
    }

    /// SOC (models 1 and 2, `t` ignored by model 2) or SOC rate (model 3).
    pub fn predict(&self, t: f64, p: f64) -> f64 {
        match self {
            SocModel::Model1(c) => eval_model1(c, t, p),
            SocModel::Model2(c) => eval_model2(c, p),
            SocModel::Model3(c) => eval_model3(c, t, p),
        }
    }

    /// SOC at `t`. Model 3 is integrated from a full charge with Simpson's rule
    /// (at least 64 panels, 16 per second).
    pub fn soc_at(&self, t: f64, p: f64) -> f64 {
        match self {
            SocModel::Model3(c) => {
                if t <= 0.0 {
                    return 100.0;
                }
                let n = 2 * (8.0 * t).ceil().max(32.0) as usize;
                let h = t / n as f64;
                let mut sum = eval_model3(c, 0.0, p) + eval_model3(c, t, p);
                for k in 1..n {
                    let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                    sum += w * eval_model3(c, k as f64 * h, p);
                }
                100.0 + sum * h / 3.0
            }
            _ => self.predict(t, p),
        }
    }

    pub fn coefficients(&self) -> Vec<(&'static str, f64)> {
        match self {
            SocModel::Model1(c) => Model1Coefficients::NAMES.into_iter().zip(c.to_array()).collect(),
            SocModel::Model2(c) => Model2Coefficients::NAMES.into_iter().zip(c.to_array()).collect(),
            SocModel::Model3(c) => Model3Coefficients::NAMES.into_iter().zip(c.to_array()).collect(),
        }
    }

    /// Coefficient file: a `# model_kind=` comment, then `name,value` rows.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# model_kind={}", self.kind().tag())?;
        writeln!(out, "name,value")?;
        for (name, value) in self.coefficients() {
            writeln!(out, "{name},{}", sig12(value))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, ModelFileError> {
        let mut kind = None;
        let mut values: Vec<(String, f64)> = Vec::new();
        let mut seen_header = false;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(tag) = comment.trim().strip_prefix("model_kind=") {
                    let tag = tag.trim();
                    kind = Some(ModelKind::from_tag(tag).ok_or_else(|| ModelFileError::UnknownKind(tag.into()))?);
                }
                continue;
            }
            if !seen_header {
                if line != "name,value" {
                    return Err(ModelFileError::Format {
                        line: i + 1,
                        reason: format!("expected header `name,value`, got `{line}`"),
                    });
                }
                seen_header = true;
                continue;
            }
            let (name, value) = line.split_once(',').ok_or_else(|| ModelFileError::Format {
                line: i + 1,
                reason: format!("expected `name,value`, got `{line}`"),
            })?;
            let value: f64 = value.trim().parse().map_err(|_| ModelFileError::Format {
                line: i + 1,
                reason: format!("`{value}` is not a number"),
            })?;
            values.push((name.trim().to_string(), value));
        }
        let kind = kind.ok_or(ModelFileError::MissingKind)?;
        let lookup = |name: &'static str| {
            values
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| *v)
                .ok_or(ModelFileError::MissingCoefficient(name))
        };
        Ok(match kind {
            ModelKind::Model1 => {
                let mut v = [0.0; 8];
                for (slot, name) in v.iter_mut().zip(Model1Coefficients::NAMES) {
                    *slot = lookup(name)?;
                }
                SocModel::Model1(Model1Coefficients::from_array(v))
            }
            ModelKind::Model2 => {
                let mut v = [0.0; 3];
                for (slot, name) in v.iter_mut().zip(Model2Coefficients::NAMES) {
                    *slot = lookup(name)?;
                }
                SocModel::Model2(Model2Coefficients::from_array(v))
            }
            ModelKind::Model3 => {
                let mut v = [0.0; 6];
                for (slot, name) in v.iter_mut().zip(Model3Coefficients::NAMES) {
                    *slot = lookup(name)?;
                }
                SocModel::Model3(Model3Coefficients::from_array(v))
            }
        })
    }
}

// Theoretical two-regime approximation (duty as a fraction).

/// Current at startup, before any back-EMF: `p·V_oc / (R + p·R_int)`.
pub fn theoretical_startup_current(p_fraction: f64, motor: &MotorParams, battery: &BatteryParams) -> f64 {
    p_fraction * battery.open_circuit_voltage
        / (motor.armature_resistance + p_fraction * battery.internal_resistance)
}

/// Transient SOC loss (percent) with the `ln(1+t)` saturation form.
pub fn theoretical_transient_dsoc(
    p_fraction: f64,
    t: f64,
    motor: &MotorParams,
    battery: &BatteryParams,
) -> f64 {
    100.0 * theoretical_startup_current(p_fraction, motor, battery) / battery.capacity_as * t.ln_1p()
}

/// Transient SOC loss (percent) for an exponentially decaying startup current
/// with rate `alpha` (1/s).
pub fn theoretical_transient_dsoc_exp(
    p_fraction: f64,
    t: f64,
    alpha: f64,
    motor: &MotorParams,
    battery: &BatteryParams,
) -> f64 {
    100.0 * theoretical_startup_current(p_fraction, motor, battery) / (alpha * battery.capacity_as)
        * (-(-alpha * t).exp_m1())
}

/// Steady-state current from the force balance `K_t·G/r·I = C_rr·m·g + ½ρC_dA(v+v_w)²`.
pub fn theoretical_ss_current(
    v_ss: f64,
    chassis: &ChassisParams,
    environment: &EnvironmentParams,
    motor: &MotorParams,
) -> f64 {
    let forces = crate::sim::resistive_forces(chassis, environment, v_ss);
    chassis.wheel_radius / (motor.torque_constant * chassis.gear_ratio) * forces.total()
}

/// Source of the steady-state speed at a duty fraction.
pub trait SteadyStateVelocity {
    fn steady_state_velocity(&self, p_fraction: f64) -> Result<f64, SimError>;
}

impl<F> SteadyStateVelocity for F
where
    F: Fn(f64) -> Result<f64, SimError>,
{
    fn steady_state_velocity(&self, p_fraction: f64) -> Result<f64, SimError> {
        self(p_fraction)
    }
}

/// Runs the simulator until the velocity settles.
#[derive(Debug, Clone, Copy)]
pub struct SimulatedSteadyState<'a> {
    pub config: &'a SimulationConfig,
    pub max_time_s: f64,
}

impl<'a> SimulatedSteadyState<'a> {
    pub fn new(config: &'a SimulationConfig) -> Self {
        Self { config, max_time_s: 3_600.0 }
    }
}

impl SteadyStateVelocity for SimulatedSteadyState<'_> {
    fn steady_state_velocity(&self, p_fraction: f64) -> Result<f64, SimError> {
        Ok(settle(p_fraction, self.config, self.max_time_s)?.velocity_mps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TheoreticalParams {
    /// Lumped transient decay rate (1/s). `None` selects the `ln(1+t)` form.
    pub alpha: Option<f64>,
    pub config: SimulationConfig,
}

/// `100 − ΔSOC_transient − ΔSOC_steady` in percent.
///
/// When the robot never breaks away (`v_ss = 0`) the force balance does not
/// apply; the steady current is then the stalled-motor current.
pub fn theoretical_composite_soc(
    p_fraction: f64,
    t: f64,
    params: &TheoreticalParams,
    velocity: &impl SteadyStateVelocity,
) -> Result<f64, SimError> {
    let c = &params.config;
    if p_fraction == 0.0 || t == 0.0 {
        return Ok(100.0);
    }
    let transient = match params.alpha {
        Some(alpha) => theoretical_transient_dsoc_exp(p_fraction, t, alpha, &c.motor, &c.battery),
        None => theoretical_transient_dsoc(p_fraction, t, &c.motor, &c.battery),
    };
    let v_ss = velocity.steady_state_velocity(p_fraction)?;
    let i_ss = if v_ss > 0.0 {
        theoretical_ss_current(v_ss, &c.chassis, &c.environment, &c.motor)
    } else {
        theoretical_startup_current(p_fraction, &c.motor, &c.battery)
    };
    let steady = 100.0 * i_ss * t / c.battery.capacity_as;
    Ok(100.0 - transient - steady)
}

// Fitting.

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("need at least {needed} distinct pwm levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },
    #[error("series at pwm {pwm_pct}% has no sample at t = {horizon_s} s")]
    MissingHorizon { pwm_pct: f64, horizon_s: f64 },
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<C> {
    pub coefficients: C,
    /// Raw regression output, one entry per basis column.
    pub regression: SparseCoefficients,
    pub rows: usize,
}

/// Sparsity settings for model fits: a 1e-5 threshold on each term's RMS
/// contribution to the target.
pub fn model_fit_params() -> RegularizationParams {
    RegularizationParams {
        threshold: 1e-5,
        threshold_scale: ThresholdScale::ColumnRms,
        ..RegularizationParams::default()
    }
}

fn distinct_levels(dataset: &[SocTimeSeries]) -> usize {
    let mut levels: Vec<f64> = dataset.iter().map(|s| s.pwm_pct).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels.len()
}

fn require_levels(dataset: &[SocTimeSeries], needed: usize) -> Result<(), FitError> {
    let got = distinct_levels(dataset);
    if got < needed {
        return Err(FitError::TooFewLevels { needed, got });
    }
    Ok(())
}

pub fn fit_model1(dataset: &[SocTimeSeries]) -> Result<FittedModel<Model1Coefficients>, FitError> {
    fit_model1_with(dataset, &model_fit_params())
}

/// Thresholded least squares of SOC values on the Model 1 basis.
pub fn fit_model1_with(
    dataset: &[SocTimeSeries],
    params: &RegularizationParams,
) -> Result<FittedModel<Model1Coefficients>, FitError> {
    require_levels(dataset, 2)?;
    let dm = assemble(&LibrarySpec::model1(), dataset, Target::Soc)?;
    let xi = stlsq(&dm, params)?;
    let v = &xi.values;
    let coefficients = Model1Coefficients::from_array([v[0], -v[1], -v[2], -v[3], -v[4], -v[5], -v[6], v[7]]);
    Ok(FittedModel { coefficients, regression: xi, rows: dm.nrows() })
}

/// Quadratic least squares of the SOC at `horizon_s` against PWM.
pub fn fit_model2(
    dataset: &[SocTimeSeries],
    horizon_s: f64,
) -> Result<FittedModel<Model2Coefficients>, FitError> {
    require_levels(dataset, 3)?;
    let finals = dataset
        .iter()
        .map(|s| {
            let sample = s.sample_at(horizon_s).ok_or(FitError::MissingHorizon {
                pwm_pct: s.pwm_pct,
                horizon_s,
            })?;
            Ok(SocTimeSeries { pwm_pct: s.pwm_pct, samples: vec![*sample], depleted: s.depleted })
        })
        .collect::<Result<Vec<_>, FitError>>()?;
    let dm = assemble(&LibrarySpec::model2(), &finals, Target::Soc)?;
    let xi = ols(&dm)?;
    let v = &xi.values;
    let coefficients = Model2Coefficients::from_array([v[0], -v[1], v[2]]);
    Ok(FittedModel { coefficients, regression: xi, rows: dm.nrows() })
}

pub fn fit_model3(dataset: &[SocTimeSeries]) -> Result<FittedModel<Model3Coefficients>, FitError> {
    fit_model3_with(dataset, &model_fit_params())
}

/// Thresholded least squares of finite-difference SOC rates on the Model 3 basis.
pub fn fit_model3_with(
    dataset: &[SocTimeSeries],
    params: &RegularizationParams,
) -> Result<FittedModel<Model3Coefficients>, FitError> {
    require_levels(dataset, 2)?;
    let dm = assemble(&LibrarySpec::model3(), dataset, Target::SocRate)?;
    let xi = stlsq(&dm, params)?;
    let v = &xi.values;
    let coefficients = Model3Coefficients::from_array([-v[0], -v[1], -v[2], -v[3], -v[4], v[5]]);
    Ok(FittedModel { coefficients, regression: xi, rows: dm.nrows() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SocSample, DEFAULT_PWM_GRID};

    const PUB1: Model1Coefficients = Model1Coefficients::PUBLISHED;

    fn synthetic(levels: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<SocTimeSeries> {
        levels
            .iter()
            .map(|&p| SocTimeSeries {
                pwm_pct: p,
                samples: (0..=30)
                    .map(|k| {
                        let t = 10.0 * k as f64;
                        SocSample { time_s: t, soc_pct: f(t, p), current_a: 0.0, velocity_mps: 0.0 }
                    })
                    .collect(),
                depleted: false,
            })
            .collect()
    }

    #[test]
    fn model1_examples() {
        assert!((eval_model1(&PUB1, 0.0, 0.0) - 100.1).abs() < 1e-12);
        assert!((eval_model1(&PUB1, 300.0, 90.0) - 99.335).abs() < 5e-4);
        assert!((eval_model1(&PUB1, 0.0, 90.0) - 99.778).abs() < 5e-4);
        // exact arithmetic: 100.1 − 0.000114·90 − 9.93e-6·8100 − 3.17e-7·729000
        assert!((eval_model1(&PUB1, 0.0, 90.0) - 99.778214).abs() < 1e-9);
    }

    #[test]
    fn model2_examples() {
        let c = Model2Coefficients::PUBLISHED;
        assert!((eval_model2(&c, 0.0) - 101.011).abs() < 1e-12);
        assert!((eval_model2(&c, 40.0) - 58.387).abs() < 1e-9);
        assert!((eval_model2(&c, 90.0) - 14.557).abs() < 1e-9);
    }

    #[test]
    fn model3_examples() {
        let c = Model3Coefficients::PUBLISHED;
        assert!((eval_model3(&c, 0.0, 0.0) - 0.08962).abs() < 1e-12);
        assert!((eval_model3(&c, 1e12, 0.0) + 0.01531).abs() < 1e-9);
    }

    #[test]
    fn published_rate_coefficients_pair_with_model1() {
        assert_eq!(Model3Coefficients::from(&PUB1), Model3Coefficients::PUBLISHED);
    }

    #[test]
    fn model1_derivative_matches_finite_difference() {
        for &(t, p) in &[(0.5, 10.0), (12.0, 40.0), (250.0, 90.0)] {
            let h = 1e-5;
            let fd = (eval_model1(&PUB1, t + h, p) - eval_model1(&PUB1, t - h, p)) / (2.0 * h);
            assert!((fd - model1_time_derivative(&PUB1, t, p)).abs() < 1e-8);
        }
    }

    #[test]
    fn model3_equals_model1_derivative_at_zero_pwm() {
        let c3 = Model3Coefficients::from(&PUB1);
        for t in [0.0, 1.0, 10.0, 300.0] {
            assert!((eval_model3(&c3, t, 0.0) - model1_time_derivative(&PUB1, t, 0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn integrated_rate_model_matches_antiderivative() {
        let c = Model3Coefficients::PUBLISHED;
        let m = SocModel::Model3(c);
        for &(t, p) in &[(0.0, 40.0), (7.3, 10.0), (300.0, 90.0)] {
            let u: f64 = 1.0 + t;
            let exact = 100.0 - (c.a3 + c.b3 * p * p + c.c3 * p * p * p) * t - c.d3 * u.ln() - c.e3 * t / (p + 1.0)
                + c.f3 * u.ln() / u;
            assert!((m.soc_at(t, p) - exact).abs() < 1e-6, "t={t} p={p}");
        }
        let m1 = SocModel::Model1(PUB1);
        assert_eq!(m1.soc_at(12.0, 30.0), eval_model1(&PUB1, 12.0, 30.0));
    }

    #[test]
    fn model3_differs_from_model1_derivative_by_pwm_polynomial() {
        // The rate model carries −b·p² − c·p³, which Model 1's time derivative lacks.
        let c3 = Model3Coefficients::from(&PUB1);
        for &(t, p) in &[(3.0, 20.0), (100.0, 90.0)] {
            let gap = eval_model3(&c3, t, p) - model1_time_derivative(&PUB1, t, p);
            assert!((gap + c3.b3 * p * p + c3.c3 * p * p * p).abs() < 1e-14);
        }
    }

    #[test]
    fn model1_derivative_integrates_back() {
        // Simpson quadrature of ∂t Model 1 reproduces the Model 1 increment.
        for p in [0.0, 40.0, 90.0] {
            let (t_end, n) = (300.0, 30_000);
            let h = t_end / n as f64;
            let mut acc = 0.0;
            for k in 0..=n {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * model1_time_derivative(&PUB1, k as f64 * h, p);
            }
            let integral = acc * h / 3.0;
            let want = eval_model1(&PUB1, t_end, p) - eval_model1(&PUB1, 0.0, p);
            assert!((integral - want).abs() < 1e-9, "p={p}: {integral} vs {want}");
        }
    }

    #[test]
    fn startup_current_examples() {
        let c = SimulationConfig::default();
        assert_eq!(theoretical_startup_current(0.0, &c.motor, &c.battery), 0.0);
        assert!((theoretical_startup_current(0.9, &c.motor, &c.battery) - 19.8165).abs() < 1e-4);
        assert!((theoretical_startup_current(0.4, &c.motor, &c.battery) - 9.2308).abs() < 1e-4);
    }

    #[test]
    fn transient_dsoc_examples() {
        let c = SimulationConfig::default();
        assert_eq!(theoretical_transient_dsoc(0.9, 0.0, &c.motor, &c.battery), 0.0);
        assert_eq!(theoretical_transient_dsoc(0.0, 100.0, &c.motor, &c.battery), 0.0);
        assert!((theoretical_transient_dsoc(0.9, 10.0, &c.motor, &c.battery) - 0.5280).abs() < 1e-4);
    }

    #[test]
    fn transient_dsoc_is_increasing_and_concave() {
        let c = SimulationConfig::default();
        let f = |t: f64| theoretical_transient_dsoc(0.6, t, &c.motor, &c.battery);
        let ts: Vec<f64> = (0..200).map(|k| k as f64 * 1.5).collect();
        for w in ts.windows(3) {
            assert!(f(w[1]) >= f(w[0]));
            assert!(f(w[2]) - f(w[1]) <= f(w[1]) - f(w[0]) + 1e-15);
        }
    }

    #[test]
    fn ss_current_examples() {
        let c = SimulationConfig::default();
        let i = theoretical_ss_current(0.0, &c.chassis, &c.environment, &c.motor);
        assert!((i - 5.08875).abs() < 1e-12);
        let flat = ChassisParams { rolling_resistance: 0.0, ..c.chassis };
        let calm = EnvironmentParams { wind_speed: 0.0, ..c.environment };
        assert_eq!(theoretical_ss_current(0.0, &flat, &calm, &c.motor), 0.0);
    }

    #[test]
    fn composite_boundaries() {
        let params = TheoreticalParams::default();
        let fixed = |_p: f64| -> Result<f64, SimError> { Ok(6.0) };
        assert_eq!(theoretical_composite_soc(0.7, 0.0, &params, &fixed).unwrap(), 100.0);
        assert_eq!(theoretical_composite_soc(0.0, 250.0, &params, &fixed).unwrap(), 100.0);
        let mut previous = 100.0;
        for k in 1..60 {
            let soc = theoretical_composite_soc(0.7, k as f64 * 5.0, &params, &fixed).unwrap();
            assert!(soc < previous);
            previous = soc;
        }
    }

    #[test]
    fn composite_matches_current_quadrature() {
        // Oracle: trapezoidal quadrature of I0·e^{−ατ} + I_ss over [0, T].
        let c = SimulationConfig::default();
        let (p, t_end, v_ss) = (0.9, 300.0, 6.05);
        let i0 = theoretical_startup_current(p, &c.motor, &c.battery);
        let i_ss = theoretical_ss_current(v_ss, &c.chassis, &c.environment, &c.motor);
        let velocity = |_p: f64| -> Result<f64, SimError> { Ok(v_ss) };
        let quadrature = |alpha: f64| {
            let n = 300_000;
            let h = t_end / n as f64;
            let current = |tau: f64| i0 * (-alpha * tau).exp() + i_ss;
            let mut q = 0.5 * (current(0.0) + current(t_end));
            for k in 1..n {
                q += current(k as f64 * h);
            }
            100.0 - 100.0 * q * h / c.battery.capacity_as
        };

        let alpha = 0.2;
        let exact = TheoreticalParams { alpha: Some(alpha), config: c };
        let soc = theoretical_composite_soc(p, t_end, &exact, &velocity).unwrap();
        assert!((soc - quadrature(alpha)).abs() < 1e-6);

        // the ln(1+t) form absorbs α ≈ 1/ln(1+T)
        let log_form = TheoreticalParams { alpha: None, config: c };
        let soc = theoretical_composite_soc(p, t_end, &log_form, &velocity).unwrap();
        let oracle = quadrature(1.0 / t_end.ln_1p());
        assert!((soc - oracle).abs() < 0.5, "{soc} vs {oracle}");
    }

    #[test]
    fn fit_model1_round_trip() {
        let data = synthetic(&DEFAULT_PWM_GRID, |t, p| eval_model1(&PUB1, t, p));
        let fit = fit_model1(&data).unwrap();
        assert_eq!(fit.rows, 310);
        for (got, want) in fit.coefficients.to_array().iter().zip(PUB1.to_array()) {
            assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn fit_model2_exact_quadratic() {
        let c = Model2Coefficients { a2: 0.003, b2: 0.9, c2: 100.5 };
        let data = synthetic(&[20.0, 50.0, 80.0, 100.0], |_t, p| eval_model2(&c, p));
        let fit = fit_model2(&data, 300.0).unwrap();
        let residual: f64 = data
            .iter()
            .map(|s| (eval_model2(&fit.coefficients, s.pwm_pct) - s.samples[30].soc_pct).abs())
            .sum();
        assert!(residual < 1e-10);
        assert!(matches!(fit_model2(&data[..2], 300.0), Err(FitError::TooFewLevels { needed: 3, .. })));
        assert!(matches!(fit_model2(&data, 305.0), Err(FitError::MissingHorizon { .. })));
    }

    #[test]
    fn fit_model3_on_exact_rates() {
        // Finite differences of a linear-in-t SOC are exact, so the constant and
        // 1/(p+1) rate terms are recovered.
        let data = synthetic(&[20.0, 40.0, 60.0, 80.0, 100.0], |t, p| 100.0 - 0.01 * t - 0.5 * t / (p + 1.0));
        let fit = fit_model3(&data).unwrap();
        assert!((fit.coefficients.a3 - 0.01).abs() < 1e-10);
        assert!((fit.coefficients.e3 - 0.5).abs() < 1e-9);
        assert_eq!(fit.regression.active_names(), vec!["1", "1/(p+1)"]);
    }

    #[test]
    fn model_file_round_trip() {
        for kind in [ModelKind::Model1, ModelKind::Model2, ModelKind::Model3] {
            let model = SocModel::published(kind);
            let mut buf = Vec::new();
            model.write(&mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.starts_with(&format!("# model_kind={}\nname,value\n", kind.tag())));
            assert_eq!(SocModel::read(buf.as_slice()).unwrap(), model);
        }
    }

    #[test]
    fn model_file_errors() {
        assert!(matches!(SocModel::read("name,value\na2,1\n".as_bytes()), Err(ModelFileError::MissingKind)));
        assert!(matches!(
            SocModel::read("# model_kind=model9\n".as_bytes()),
            Err(ModelFileError::UnknownKind(_))
        ));
        assert!(matches!(
            SocModel::read("# model_kind=model2\nname,value\na2,1\nb2,2\n".as_bytes()),
            Err(ModelFileError::MissingCoefficient("c2"))
        ));
        assert!(matches!(
            SocModel::read("# model_kind=model2\nname,value\na2,x\n".as_bytes()),
            Err(ModelFileError::Format { line: 3, .. })
        ));
    }
}
