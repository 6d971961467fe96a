//! Error metrics between recorded and predicted SOC, plus the published
//! reference tables.
//!
//! Errors are absolute differences in SOC percentage points.

use std::io::Write;

use crate::csvfmt::fixed6;
use crate::sim::SocTimeSeries;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocPoint {
    pub time_s: f64,
    pub soc_pct: f64,
}

impl SocPoint {
    pub const fn new(time_s: f64, soc_pct: f64) -> Self {
        Self { time_s, soc_pct }
    }
}

/// Recorded points of a simulated series.
pub fn series_points(series: &SocTimeSeries) -> Vec<SocPoint> {
    series.samples.iter().map(|s| SocPoint::new(s.time_s, s.soc_pct)).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("series lengths differ ({recorded} recorded vs {predicted} predicted)")]
    LengthMismatch { recorded: usize, predicted: usize },
    #[error("timestamp mismatch at index {index}: {recorded} vs {predicted}")]
    TimestampMismatch { index: usize, recorded: f64, predicted: f64 },
    #[error("timestamps must strictly increase (index {index})")]
    NonIncreasing { index: usize },
    #[error("cannot compare empty series")]
    Empty,
    #[error("no fixture named `{0}`")]
    UnknownFixture(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub times_s: Vec<f64>,
    pub recorded: Vec<f64>,
    pub predicted: Vec<f64>,
    pub per_sample_abs_error: Vec<f64>,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    /// Time of the first sample attaining the maximum error.
    pub argmax_time_s: f64,
}

impl ValidationReport {
    /// `time_s,recorded,predicted,abs_error`
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "recorded", "predicted", "abs_error"])?;
        for i in 0..self.times_s.len() {
            w.write_record([
                fixed6(self.times_s[i]),
                fixed6(self.recorded[i]),
                fixed6(self.predicted[i]),
                fixed6(self.per_sample_abs_error[i]),
            ])?;
        }
        w.flush()
    }

    pub fn summary(&self, label: &str) -> String {
        format!(
            "{label}: {} samples, mean abs error {:.6}, max abs error {:.6} at t = {} s",
            self.times_s.len(),
            self.mean_abs_error,
            self.max_abs_error,
            self.argmax_time_s
        )
    }
}

/// Per-sample absolute errors with their mean and maximum. Symmetric in its arguments.
pub fn error_metrics(recorded: &[SocPoint], predicted: &[SocPoint]) -> Result<ValidationReport, ValidationError> {
    if recorded.len() != predicted.len() {
        return Err(ValidationError::LengthMismatch {
            recorded: recorded.len(),
            predicted: predicted.len(),
        });
    }
    if recorded.is_empty() {
        return Err(ValidationError::Empty);
    }
    for (i, (r, p)) in recorded.iter().zip(predicted).enumerate() {
        if (r.time_s - p.time_s).abs() > 1e-9 {
            return Err(ValidationError::TimestampMismatch {
                index: i,
                recorded: r.time_s,
                predicted: p.time_s,
            });
        }
        if i > 0 && !(r.time_s > recorded[i - 1].time_s) {
            return Err(ValidationError::NonIncreasing { index: i });
        }
    }

    let errors: Vec<f64> = recorded.iter().zip(predicted).map(|(r, p)| (r.soc_pct - p.soc_pct).abs()).collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let (argmax, max) = errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    Ok(ValidationReport {
        times_s: recorded.iter().map(|r| r.time_s).collect(),
        recorded: recorded.iter().map(|r| r.soc_pct).collect(),
        predicted: predicted.iter().map(|p| p.soc_pct).collect(),
        per_sample_abs_error: errors,
        mean_abs_error: mean,
        max_abs_error: max,
        argmax_time_s: recorded[argmax].time_s,
    })
}

/// Evaluates `model(t, p)` at the recorded timestamps and compares.
pub fn validate_model(
    model: impl Fn(f64, f64) -> f64,
    pwm_pct: f64,
    recorded: &[SocPoint],
) -> Result<ValidationReport, ValidationError> {
    let predicted: Vec<SocPoint> =
        recorded.iter().map(|r| SocPoint::new(r.time_s, model(r.time_s, pwm_pct))).collect();
    error_metrics(recorded, &predicted)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureRow {
    pub time_s: f64,
    pub recorded_soc: f64,
    pub predicted_soc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFixture {
    pub label: &'static str,
    pub pwm_pct: f64,
    pub rows: &'static [FixtureRow],
}

impl ReferenceFixture {
    pub fn recorded(&self) -> Vec<SocPoint> {
        self.rows.iter().map(|r| SocPoint::new(r.time_s, r.recorded_soc)).collect()
    }

    /// Published predictions, when the table has them.
    pub fn predicted(&self) -> Option<Vec<SocPoint>> {
        self.rows
            .iter()
            .map(|r| r.predicted_soc.map(|p| SocPoint::new(r.time_s, p)))
            .collect()
    }

    /// `time_s,recorded_soc[,predicted_soc]`, values as published (two decimals).
    pub fn to_csv(&self) -> String {
        let with_prediction = self.rows.iter().all(|r| r.predicted_soc.is_some());
        let mut out = String::from(if with_prediction {
            "time_s,recorded_soc,predicted_soc\n"
        } else {
            "time_s,recorded_soc\n"
        });
        for r in self.rows {
            match r.predicted_soc {
                Some(p) if with_prediction => {
                    out.push_str(&format!("{},{:.2},{:.2}\n", r.time_s, r.recorded_soc, p))
                }
                _ => out.push_str(&format!("{},{:.2}\n", r.time_s, r.recorded_soc)),
            }
        }
        out
    }
}

const fn rec(time_s: f64, recorded_soc: f64) -> FixtureRow {
    FixtureRow { time_s, recorded_soc, predicted_soc: None }
}

const fn pair(time_s: f64, recorded_soc: f64, predicted: f64) -> FixtureRow {
    FixtureRow { time_s, recorded_soc, predicted_soc: Some(predicted) }
}

/// Example 40% PWM dataset.
static TABLE_I: [FixtureRow; 10] = [
    rec(0.0, 100.00),
    rec(10.0, 99.63),
    rec(20.0, 99.41),
    rec(30.0, 99.20),
    rec(40.0, 98.99),
    rec(50.0, 98.77),
    rec(60.0, 98.56),
    rec(70.0, 98.35),
    rec(80.0, 98.14),
    rec(90.0, 97.93),
];

/// Validation at 90% PWM, recorded vs. predicted.
static TABLE_V: [FixtureRow; 16] = [
    pair(0.0, 100.00, 99.18),
    pair(20.0, 96.88, 96.80),
    pair(40.0, 94.63, 94.63),
    pair(60.0, 92.41, 92.49),
    pair(80.0, 90.22, 90.36),
    pair(100.0, 88.05, 88.23),
    pair(120.0, 85.87, 86.11),
    pair(140.0, 83.71, 83.99),
    pair(160.0, 81.56, 81.88),
    pair(180.0, 79.42, 79.77),
    pair(200.0, 77.28, 77.66),
    pair(220.0, 75.15, 75.55),
    pair(240.0, 73.03, 73.44),
    pair(260.0, 70.92, 71.33),
    pair(280.0, 68.82, 69.22),
    pair(300.0, 66.73, 67.11),
];

/// Validation at 40% PWM, recorded vs. predicted.
static TABLE_VI: [FixtureRow; 16] = [
    pair(0.0, 100.00, 99.92),
    pair(20.0, 99.42, 99.42),
    pair(40.0, 98.99, 98.99),
    pair(60.0, 98.56, 98.58),
    pair(80.0, 98.14, 98.17),
    pair(100.0, 97.72, 97.77),
    pair(120.0, 97.30, 97.37),
    pair(140.0, 96.88, 96.97),
    pair(160.0, 96.46, 96.58),
    pair(180.0, 96.04, 96.18),
    pair(200.0, 95.62, 95.78),
    pair(220.0, 95.20, 95.39),
    pair(240.0, 94.78, 94.99),
    pair(260.0, 94.36, 94.59),
    pair(280.0, 93.95, 94.20),
    pair(300.0, 93.53, 93.80),
];

/// The three published tables, labelled `table_I`, `table_V`, `table_VI`.
pub fn load_fixtures() -> Vec<ReferenceFixture> {
    vec![
        ReferenceFixture { label: "table_I", pwm_pct: 40.0, rows: &TABLE_I },
        ReferenceFixture { label: "table_V", pwm_pct: 90.0, rows: &TABLE_V },
        ReferenceFixture { label: "table_VI", pwm_pct: 40.0, rows: &TABLE_VI },
    ]
}

/// Looks a fixture up by label (`table_V`) or bare numeral (`V`).
pub fn fixture(name: &str) -> Result<ReferenceFixture, ValidationError> {
    load_fixtures()
        .into_iter()
        .find(|f| f.label == name || f.label.strip_prefix("table_") == Some(name))
        .ok_or_else(|| ValidationError::UnknownFixture(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn published_pair(label: &str) -> (Vec<SocPoint>, Vec<SocPoint>) {
        let f = fixture(label).unwrap();
        (f.recorded(), f.predicted().unwrap())
    }

    #[test]
    fn table_v_errors() {
        let (rec, pred) = published_pair("table_V");
        let r = error_metrics(&rec, &pred).unwrap();
        assert!((r.max_abs_error - 0.82).abs() < 1e-9);
        assert_eq!(r.argmax_time_s, 0.0);
        assert!((r.mean_abs_error - 0.304375).abs() < 1e-9);
    }

    #[test]
    fn table_vi_errors() {
        let (rec, pred) = published_pair("VI");
        let r = error_metrics(&rec, &pred).unwrap();
        assert!((r.max_abs_error - 0.27).abs() < 1e-9);
        assert_eq!(r.argmax_time_s, 300.0);
        assert!((r.mean_abs_error - 0.119375).abs() < 1e-9);
    }

    #[test]
    fn metrics_are_symmetric_and_consistent() {
        let (rec, pred) = published_pair("table_V");
        let a = error_metrics(&rec, &pred).unwrap();
        let b = error_metrics(&pred, &rec).unwrap();
        assert_eq!(a.per_sample_abs_error, b.per_sample_abs_error);
        assert_eq!(a.mean_abs_error, b.mean_abs_error);
        let mean = a.per_sample_abs_error.iter().sum::<f64>() / 16.0;
        assert_eq!(a.mean_abs_error, mean);
        assert_eq!(a.max_abs_error, a.per_sample_abs_error.iter().copied().fold(0.0, f64::max));
        assert!(a.max_abs_error >= a.mean_abs_error);
    }

    #[test]
    fn metric_errors() {
        let a = [SocPoint::new(0.0, 1.0), SocPoint::new(10.0, 1.0)];
        let b = [SocPoint::new(0.0, 1.0), SocPoint::new(11.0, 1.0)];
        assert!(matches!(error_metrics(&a, &b), Err(ValidationError::TimestampMismatch { index: 1, .. })));
        assert!(matches!(error_metrics(&a, &b[..1]), Err(ValidationError::LengthMismatch { .. })));
        assert!(matches!(error_metrics(&[], &[]), Err(ValidationError::Empty)));
        let c = [SocPoint::new(5.0, 1.0), SocPoint::new(5.0, 1.0)];
        assert!(matches!(error_metrics(&c, &c), Err(ValidationError::NonIncreasing { index: 1 })));
    }

    #[test]
    fn self_validation_is_exact() {
        let rec = fixture("table_I").unwrap().recorded();
        let lookup = |t: f64, _p: f64| rec.iter().find(|r| r.time_s == t).unwrap().soc_pct;
        let r = validate_model(lookup, 40.0, &rec).unwrap();
        assert!(r.per_sample_abs_error.iter().all(|&e| e == 0.0));
        assert_eq!(r.max_abs_error, 0.0);
    }

    #[test]
    fn fixture_rows() {
        let t1 = fixture("table_I").unwrap();
        assert_eq!((t1.rows[1].time_s, t1.rows[1].recorded_soc), (10.0, 99.63));
        assert!(t1.predicted().is_none());
        let t5 = fixture("V").unwrap();
        assert_eq!(t5.rows[0], FixtureRow { time_s: 0.0, recorded_soc: 100.00, predicted_soc: Some(99.18) });
        assert_eq!(t5.pwm_pct, 90.0);
        let t6 = fixture("table_VI").unwrap();
        assert_eq!(*t6.rows.last().unwrap(), FixtureRow { time_s: 300.0, recorded_soc: 93.53, predicted_soc: Some(93.80) });
        assert!(matches!(fixture("table_IX"), Err(ValidationError::UnknownFixture(_))));
    }

    #[test]
    fn fixture_csv_text() {
        let csv = fixture("V").unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[0], "time_s,recorded_soc,predicted_soc");
        assert_eq!(lines[1], "0,100.00,99.18");
        assert_eq!(lines[16], "300,66.73,67.11");
    }

    #[test]
    fn report_csv() {
        let (rec, pred) = published_pair("table_VI");
        let r = error_metrics(&rec, &pred).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "time_s,recorded,predicted,abs_error");
        assert_eq!(text.lines().nth(1).unwrap(), "0.000000,100.000000,99.920000,0.080000");
    }
}
