//! Candidate-function library and design-matrix assembly.
//!
//! PWM enters every candidate in percent. Published coefficient sets only give
//! sensible magnitudes under that convention (e.g. `c·p` with `p = 90`).

use std::collections::HashSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::csvfmt::sig12;
use crate::regression::{finite_difference, RegressionError};
use crate::sim::SocTimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateKind {
    Constant,
    LinearTime,
    /// `p^k`, k in 1..=3.
    PwmPower(u8),
    /// `t·p`
    Interaction,
    /// `ln(1+t)`
    Log1pTime,
    /// `ln(1+t)/(1+t)`
    Log1pOverOnePlusTime,
    /// `t/(p+1)`
    TimeOverPwmPlusOne,
    /// `1/(1+t)`
    InverseOnePlusTime,
    /// `1/(p+1)`, used by the rate model.
    InversePwmPlusOne,
    /// `(1 − ln(1+t))/(1+t)²`, the time derivative of `ln(1+t)/(1+t)`.
    Log1pRateTerm,
}

impl CandidateKind {
    pub fn evaluate(self, t: f64, p: f64) -> f64 {
        match self {
            CandidateKind::Constant => 1.0,
            CandidateKind::LinearTime => t,
            CandidateKind::PwmPower(k) => p.powi(k as i32),
            CandidateKind::Interaction => t * p,
            CandidateKind::Log1pTime => t.ln_1p(),
            CandidateKind::Log1pOverOnePlusTime => t.ln_1p() / (1.0 + t),
            CandidateKind::TimeOverPwmPlusOne => t / (p + 1.0),
            CandidateKind::InverseOnePlusTime => 1.0 / (1.0 + t),
            CandidateKind::InversePwmPlusOne => 1.0 / (p + 1.0),
            CandidateKind::Log1pRateTerm => (1.0 - t.ln_1p()) / ((1.0 + t) * (1.0 + t)),
        }
    }

    pub fn default_name(self) -> String {
        match self {
            CandidateKind::Constant => "1".into(),
            CandidateKind::LinearTime => "t".into(),
            CandidateKind::PwmPower(1) => "p".into(),
            CandidateKind::PwmPower(k) => format!("p^{k}"),
            CandidateKind::Interaction => "t*p".into(),
            CandidateKind::Log1pTime => "ln(1+t)".into(),
            CandidateKind::Log1pOverOnePlusTime => "ln(1+t)/(1+t)".into(),
            CandidateKind::TimeOverPwmPlusOne => "t/(p+1)".into(),
            CandidateKind::InverseOnePlusTime => "1/(1+t)".into(),
            CandidateKind::InversePwmPlusOne => "1/(p+1)".into(),
            CandidateKind::Log1pRateTerm => "(1-ln(1+t))/(1+t)^2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFunction {
    pub name: String,
    pub kind: CandidateKind,
}

impl From<CandidateKind> for CandidateFunction {
    fn from(kind: CandidateKind) -> Self {
        Self { name: kind.default_name(), kind }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LibraryError {
    #[error("library must contain at least one candidate")]
    EmptyLibrary,
    #[error("candidate name `{0}` appears more than once")]
    DuplicateName(String),
    #[error("pwm power {0} not supported (expected 1, 2 or 3)")]
    PwmPower(u8),
    #[error("invalid sample (t = {t}, p = {p}): inputs must be finite and non-negative")]
    InvalidInput { t: f64, p: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("series at pwm {pwm_pct}% has {len} samples, need at least {needed}")]
    ShortSeries { pwm_pct: f64, len: usize, needed: usize },
    #[error("target length {target} does not match {rows} rows")]
    DimensionMismatch { rows: usize, target: usize },
    #[error("non-finite entry in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Ordered, named set of candidate functions.
#[derive(Debug, Clone, PartialEq)]
pub struct LibrarySpec {
    functions: Vec<CandidateFunction>,
}

impl LibrarySpec {
    pub fn new(functions: Vec<CandidateFunction>) -> Result<Self, LibraryError> {
        if functions.is_empty() {
            return Err(LibraryError::EmptyLibrary);
        }
        let mut seen = HashSet::new();
        for f in &functions {
            if let CandidateKind::PwmPower(k) = f.kind {
                if !(1..=3).contains(&k) {
                    return Err(LibraryError::PwmPower(k));
                }
            }
            if !seen.insert(f.name.as_str()) {
                return Err(LibraryError::DuplicateName(f.name.clone()));
            }
        }
        Ok(Self { functions })
    }

    pub fn from_kinds(kinds: &[CandidateKind]) -> Result<Self, LibraryError> {
        Self::new(kinds.iter().map(|&k| k.into()).collect())
    }

    /// The ten-function SINDy library: `1, t, p, p², p³, t·p, ln(1+t),
    /// ln(1+t)/(1+t), t/(p+1), 1/(1+t)`.
    pub fn sindy_default() -> Self {
        use CandidateKind::*;
        Self::from_kinds(&[
            Constant,
            LinearTime,
            PwmPower(1),
            PwmPower(2),
            PwmPower(3),
            Interaction,
            Log1pTime,
            Log1pOverOnePlusTime,
            TimeOverPwmPlusOne,
            InverseOnePlusTime,
        ])
        .expect("default library is valid")
    }

    /// Basis of the SOC(t, p) model, in coefficient order a..h.
    pub fn model1() -> Self {
        use CandidateKind::*;
        Self::from_kinds(&[
            Constant,
            LinearTime,
            PwmPower(1),
            PwmPower(2),
            PwmPower(3),
            Log1pTime,
            TimeOverPwmPlusOne,
            Log1pOverOnePlusTime,
        ])
        .expect("model 1 library is valid")
    }

    /// Basis of the final-SOC quadratic, in coefficient order a..c.
    pub fn model2() -> Self {
        use CandidateKind::*;
        Self::from_kinds(&[PwmPower(2), PwmPower(1), Constant]).expect("model 2 library is valid")
    }

    /// Basis of the SOC-rate model, in coefficient order a..f.
    pub fn model3() -> Self {
        use CandidateKind::*;
        Self::from_kinds(&[
            Constant,
            PwmPower(2),
            PwmPower(3),
            InverseOnePlusTime,
            InversePwmPlusOne,
            Log1pRateTerm,
        ])
        .expect("model 3 library is valid")
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[CandidateFunction] {
        &self.functions
    }

    pub fn names(&self) -> Vec<String> {
        self.functions.iter().map(|f| f.name.clone()).collect()
    }
}

impl Default for LibrarySpec {
    fn default() -> Self {
        Self::sindy_default()
    }
}

/// Evaluates every candidate at `(t, p)`, with `p` in percent.
pub fn evaluate_row(spec: &LibrarySpec, t: f64, p: f64) -> Result<Vec<f64>, LibraryError> {
    if !(t.is_finite() && p.is_finite() && t >= 0.0 && p >= 0.0) {
        return Err(LibraryError::InvalidInput { t, p });
    }
    Ok(spec.functions.iter().map(|f| f.kind.evaluate(t, p)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Soc,
    SocRate,
}

/// Candidate evaluations over all samples plus the regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub theta: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub target: DVector<f64>,
    /// `(t_s, pwm_pct)` of each row.
    pub sample_coords: Vec<(f64, f64)>,
}

impl DesignMatrix {
    /// Builds a matrix from raw parts, checking shapes and finiteness.
    pub fn from_parts(
        theta: DMatrix<f64>,
        column_names: Vec<String>,
        target: DVector<f64>,
        sample_coords: Vec<(f64, f64)>,
    ) -> Result<Self, LibraryError> {
        if theta.nrows() != target.len() {
            return Err(LibraryError::DimensionMismatch {
                rows: theta.nrows(),
                target: target.len(),
            });
        }
        if theta.ncols() != column_names.len() || sample_coords.len() != theta.nrows() {
            return Err(LibraryError::DimensionMismatch {
                rows: theta.nrows(),
                target: target.len(),
            });
        }
        for (j, col) in theta.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|x| !x.is_finite()) {
                return Err(LibraryError::NonFinite { column: column_names[j].clone(), row });
            }
        }
        if let Some(row) = target.iter().position(|x| !x.is_finite()) {
            return Err(LibraryError::NonFinite { column: "target".into(), row });
        }
        Ok(Self { theta, column_names, target, sample_coords })
    }

    pub fn nrows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.theta.ncols()
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        Self {
            theta: self.theta.select_columns(columns),
            column_names: columns.iter().map(|&j| self.column_names[j].clone()).collect(),
            target: self.target.clone(),
            sample_coords: self.sample_coords.clone(),
        }
    }

    /// Debug export: `t_s,pwm_pct,<columns…>,target`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t_s".to_string(), "pwm_pct".to_string()];
        header.extend(self.column_names.iter().cloned());
        header.push("target".into());
        w.write_record(&header)?;
        for (i, &(t, p)) in self.sample_coords.iter().enumerate() {
            let mut row = vec![sig12(t), sig12(p)];
            row.extend(self.theta.row(i).iter().map(|&x| sig12(x)));
            row.push(sig12(self.target[i]));
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// Stacks all (series, sample) rows in series-major order.
pub fn assemble(
    spec: &LibrarySpec,
    dataset: &[SocTimeSeries],
    target: Target,
) -> Result<DesignMatrix, LibraryError> {
    if dataset.is_empty() {
        return Err(LibraryError::EmptyDataset);
    }
    let needed = match target {
        Target::Soc => 1,
        Target::SocRate => 2,
    };
    let mut coords = Vec::new();
    let mut y = Vec::new();
    for series in dataset {
        if series.samples.len() < needed {
            return Err(LibraryError::ShortSeries {
                pwm_pct: series.pwm_pct,
                len: series.samples.len(),
                needed,
            });
        }
        match target {
            Target::Soc => y.extend(series.soc()),
            Target::SocRate => y.extend(finite_difference(series)?),
        }
        coords.extend(series.times().map(|t| (t, series.pwm_pct)));
    }

    let mut theta = DMatrix::zeros(coords.len(), spec.len());
    for (i, &(t, p)) in coords.iter().enumerate() {
        for (j, v) in evaluate_row(spec, t, p)?.into_iter().enumerate() {
            theta[(i, j)] = v;
        }
    }
    DesignMatrix::from_parts(theta, spec.names(), DVector::from_vec(y), coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SocSample;

    fn series(pwm: f64, points: &[(f64, f64)]) -> SocTimeSeries {
        SocTimeSeries {
            pwm_pct: pwm,
            samples: points
                .iter()
                .map(|&(t, soc)| SocSample { time_s: t, soc_pct: soc, current_a: 0.0, velocity_mps: 0.0 })
                .collect(),
            depleted: false,
        }
    }

    fn assert_row(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn default_library_order() {
        assert_eq!(
            LibrarySpec::default().names(),
            ["1", "t", "p", "p^2", "p^3", "t*p", "ln(1+t)", "ln(1+t)/(1+t)", "t/(p+1)", "1/(1+t)"]
        );
    }

    #[test]
    fn row_at_origin() {
        let row = evaluate_row(&LibrarySpec::default(), 0.0, 0.0).unwrap();
        assert_eq!(row, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn row_where_log_is_one() {
        let t = std::f64::consts::E - 1.0;
        let row = evaluate_row(&LibrarySpec::default(), t, 1.0).unwrap();
        let inv_e = (-1.0f64).exp();
        assert_row(&row, &[1.0, t, 1.0, 1.0, 1.0, t, 1.0, inv_e, t / 2.0, inv_e], 1e-15);
        assert_row(
            &row,
            &[1.0, 1.718282, 1.0, 1.0, 1.0, 1.718282, 1.0, 0.367879, 0.859141, 0.367879],
            1e-6,
        );
    }

    #[test]
    fn row_at_ten_seconds_forty_percent() {
        let row = evaluate_row(&LibrarySpec::default(), 10.0, 40.0).unwrap();
        assert_row(
            &row,
            &[1.0, 10.0, 40.0, 1600.0, 64000.0, 400.0, 2.397895, 0.217990, 0.243902, 0.090909],
            1e-6,
        );
    }

    #[test]
    fn invalid_inputs_rejected() {
        let lib = LibrarySpec::default();
        assert!(evaluate_row(&lib, f64::NAN, 1.0).is_err());
        assert!(evaluate_row(&lib, 1.0, -1.0).is_err());
        assert!(matches!(LibrarySpec::new(vec![]), Err(LibraryError::EmptyLibrary)));
        assert!(matches!(
            LibrarySpec::from_kinds(&[CandidateKind::Constant, CandidateKind::Constant]),
            Err(LibraryError::DuplicateName(_))
        ));
        assert!(matches!(
            LibrarySpec::from_kinds(&[CandidateKind::PwmPower(4)]),
            Err(LibraryError::PwmPower(4))
        ));
    }

    #[test]
    fn assemble_stacks_series_major() {
        let data = vec![
            series(40.0, &[(0.0, 100.0), (10.0, 99.63)]),
            series(90.0, &[(0.0, 100.0), (10.0, 97.9)]),
        ];
        let m = assemble(&LibrarySpec::default(), &data, Target::Soc).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (4, 10));
        assert_eq!(m.sample_coords, vec![(0.0, 40.0), (10.0, 40.0), (0.0, 90.0), (10.0, 90.0)]);
        assert_eq!(m.target[0], 100.0);
        let first = evaluate_row(&LibrarySpec::default(), 0.0, 40.0).unwrap();
        assert_eq!(m.theta.row(0).iter().copied().collect::<Vec<_>>(), first);
    }

    #[test]
    fn rate_target_uses_finite_differences() {
        let data = vec![series(40.0, &[(0.0, 100.0), (10.0, 99.63)])];
        let m = assemble(&LibrarySpec::default(), &data, Target::SocRate).unwrap();
        assert_eq!(m.nrows(), 2);
        assert!((m.target[0] + 0.037).abs() < 1e-12);
        assert!((m.target[1] + 0.037).abs() < 1e-12);

        let short = vec![series(40.0, &[(0.0, 100.0)])];
        assert!(matches!(
            assemble(&LibrarySpec::default(), &short, Target::SocRate),
            Err(LibraryError::ShortSeries { .. })
        ));
        assert!(matches!(
            assemble(&LibrarySpec::default(), &[], Target::Soc),
            Err(LibraryError::EmptyDataset)
        ));
    }

    #[test]
    fn zero_time_columns() {
        let data = vec![series(55.0, &[(0.0, 100.0)])];
        let m = assemble(&LibrarySpec::default(), &data, Target::Soc).unwrap();
        for name in ["t", "t*p", "ln(1+t)", "ln(1+t)/(1+t)", "t/(p+1)"] {
            let j = m.column_names.iter().position(|c| c == name).unwrap();
            assert_eq!(m.theta[(0, j)], 0.0, "{name}");
        }
        let j = m.column_names.iter().position(|c| c == "1/(1+t)").unwrap();
        assert_eq!(m.theta[(0, j)], 1.0);
    }

    #[test]
    fn csv_export_has_named_header() {
        let data = vec![series(40.0, &[(0.0, 100.0)])];
        let m = assemble(&LibrarySpec::model2(), &data, Target::Soc).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t_s,pwm_pct,p^2,p,1,target");
        assert_eq!(text.lines().count(), 2);
    }
}
