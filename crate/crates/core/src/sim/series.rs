use std::io::{Read, Write};

use rayon::prelude::*;

use super::dynamics::{step, SimulationState};
use super::params::SimulationConfig;
use super::SimError;
use crate::csvfmt::fixed6;

/// Default duty-cycle grid, in percent.
pub const DEFAULT_PWM_GRID: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

/// Header shared by single-series and whole-dataset CSV files.
pub const SERIES_CSV_HEADER: &str = "time_s,pwm_pct,soc_pct,current_a,velocity_mps";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocSample {
    pub time_s: f64,
    pub soc_pct: f64,
    pub current_a: f64,
    pub velocity_mps: f64,
}

impl SocSample {
    fn from_state(time_s: f64, state: &SimulationState) -> Self {
        Self {
            time_s,
            soc_pct: state.soc_pct,
            current_a: state.current_a,
            velocity_mps: state.velocity_mps,
        }
    }
}

/// Recorded trajectory for one constant duty cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SocTimeSeries {
    pub pwm_pct: f64,
    pub samples: Vec<SocSample>,
    /// Set when the battery reached 0% before the configured duration; the
    /// last sample is then taken at the depletion instant.
    pub depleted: bool,
}

impl SocTimeSeries {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.time_s)
    }

    pub fn soc(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.soc_pct)
    }

    /// Sample recorded at `time_s`, if any.
    pub fn sample_at(&self, time_s: f64) -> Option<&SocSample> {
        self.samples.iter().find(|s| (s.time_s - time_s).abs() < 1e-9)
    }
}

/// Simulates forward motion from rest at a constant duty cycle (percent).
pub fn simulate(pwm_pct: f64, config: &SimulationConfig) -> Result<SocTimeSeries, SimError> {
    if !(0.0..=100.0).contains(&pwm_pct) {
        return Err(SimError::InvalidPwm(pwm_pct));
    }
    config.validate()?;
    let pwm = pwm_pct / 100.0;
    let steps = config.steps_per_record();

    let mut state = SimulationState::at_rest(config.initial_soc_pct);
    let mut samples = Vec::with_capacity(config.record_count() + 1);
    samples.push(SocSample::from_state(0.0, &state));

    for k in 1..=config.record_count() {
        for _ in 0..steps {
            state = step(&state, pwm, config)?;
            if state.soc_pct <= 0.0 {
                samples.push(SocSample::from_state(state.time_s, &state));
                return Ok(SocTimeSeries { pwm_pct, samples, depleted: true });
            }
        }
        let t = k as f64 * config.record_interval_s;
        state.time_s = t;
        samples.push(SocSample::from_state(t, &state));
    }
    Ok(SocTimeSeries { pwm_pct, samples, depleted: false })
}

/// Simulates every level; levels run in parallel but results follow input order.
pub fn generate_dataset(
    pwm_levels: &[f64],
    config: &SimulationConfig,
) -> Result<Vec<SocTimeSeries>, SimError> {
    for (i, &level) in pwm_levels.iter().enumerate() {
        if !(0.0..=100.0).contains(&level) {
            return Err(SimError::InvalidPwm(level));
        }
        if pwm_levels[..i].contains(&level) {
            return Err(SimError::DuplicateLevel(level));
        }
    }
    config.validate()?;
    pwm_levels
        .par_iter()
        .map(|&level| {
            simulate(level, config).map_err(|e| SimError::Level {
                pwm_pct: level,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Writes series in order with six-decimal fixed formatting and LF endings.
pub fn write_series_csv<W: Write>(series: &[SocTimeSeries], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_CSV_HEADER.split(','))?;
    for s in series {
        for sample in &s.samples {
            w.write_record([
                fixed6(sample.time_s),
                fixed6(s.pwm_pct),
                fixed6(sample.soc_pct),
                fixed6(sample.current_a),
                fixed6(sample.velocity_mps),
            ])?;
        }
    }
    w.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum SeriesCsvError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header `{0}`, expected `{SERIES_CSV_HEADER}`")]
    Header(String),
    #[error("line {line}: field `{field}` is not a number: `{value}`")]
    Number {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: time {time_s} does not increase within pwm {pwm_pct}")]
    Order { line: u64, pwm_pct: f64, time_s: f64 },
}

/// Reads a series or dataset CSV. Consecutive rows with the same PWM value
/// form one series.
pub fn read_series_csv<R: Read>(input: R) -> Result<Vec<SocTimeSeries>, SeriesCsvError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != SERIES_CSV_HEADER {
        return Err(SeriesCsvError::Header(header));
    }
    const FIELDS: [&str; 5] = ["time_s", "pwm_pct", "soc_pct", "current_a", "velocity_mps"];

    let mut out: Vec<SocTimeSeries> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut values = [0.0; 5];
        for (slot, (field, raw)) in values.iter_mut().zip(FIELDS.iter().zip(record.iter())) {
            *slot = raw.trim().parse().map_err(|_| SeriesCsvError::Number {
                line,
                field,
                value: raw.to_string(),
            })?;
        }
        let [time_s, pwm_pct, soc_pct, current_a, velocity_mps] = values;
        let sample = SocSample { time_s, soc_pct, current_a, velocity_mps };
        match out.last_mut() {
            Some(series) if series.pwm_pct == pwm_pct => {
                if series.samples.last().is_some_and(|last| last.time_s >= time_s) {
                    return Err(SeriesCsvError::Order { line, pwm_pct, time_s });
                }
                series.samples.push(sample);
            }
            _ => out.push(SocTimeSeries {
                pwm_pct,
                samples: vec![sample],
                depleted: false,
            }),
        }
    }
    Ok(out)
}
