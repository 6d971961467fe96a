//! Least-squares machinery for sparse identification.
//!
//! All solvers scale design columns to unit 2-norm before factorizing and map
//! coefficients back to physical units afterwards. The least-squares contract
//! is the normal-equations solution `(ΘᵀΘ)⁻¹Θᵀy`; it is computed through a
//! Householder QR of the scaled matrix, since the raw Gram matrix of columns
//! such as `1`, `t` and `p³` is too badly conditioned to invert directly.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::csvfmt::sig12;
use crate::library::DesignMatrix;
use crate::sim::SocTimeSeries;

/// Diagonal entries of R below this fraction of the largest one mark a
/// numerically dependent column.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum RegressionError {
    #[error("need at least 2 samples for a finite difference, got {0}")]
    TooFewSamples(usize),
    #[error("sample times must strictly increase (index {index}, t = {time_s})")]
    NonIncreasingTime { index: usize, time_s: f64 },
    #[error("{rows} samples cannot determine {cols} coefficients")]
    Underdetermined { rows: usize, cols: usize },
    #[error("design matrix is rank deficient; dependent columns: {}", .columns.join(", "))]
    Singular { columns: Vec<String> },
    #[error("coordinate descent did not converge after {iterations} sweeps")]
    NotConverged {
        iterations: usize,
        last: Box<SparseCoefficients>,
    },
    #[error("thresholding eliminated every candidate")]
    EmptyModel,
    #[error("invalid regularization parameter: {0}")]
    InvalidParams(String),
}

/// Which magnitude the sparsity threshold is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdScale {
    /// The coefficient itself, in physical units.
    #[default]
    Physical,
    /// The coefficient times the RMS of its column: the typical size of the
    /// term's contribution to the target.
    ColumnRms,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub lambda: f64,
    pub threshold: f64,
    pub threshold_scale: ThresholdScale,
    pub max_iterations: usize,
    pub convergence_tol: f64,
}

impl Default for RegularizationParams {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            threshold: 1e-5,
            threshold_scale: ThresholdScale::Physical,
            max_iterations: 100_000,
            convergence_tol: 1e-10,
        }
    }
}

impl RegularizationParams {
    fn check(&self) -> Result<(), RegressionError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(RegressionError::InvalidParams(format!("lambda = {}", self.lambda)));
        }
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(RegressionError::InvalidParams(format!("threshold = {}", self.threshold)));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(RegressionError::InvalidParams(format!(
                "convergence_tol = {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Coefficient vector with its active-term mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoefficients {
    pub values: Vec<f64>,
    pub active: Vec<bool>,
    pub column_names: Vec<String>,
    pub threshold_used: f64,
}

impl SparseCoefficients {
    fn dense(values: Vec<f64>, column_names: Vec<String>) -> Self {
        Self {
            active: vec![true; values.len()],
            values,
            column_names,
            threshold_used: 0.0,
        }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.column_names.iter().position(|n| n == name).map(|j| self.values[j])
    }

    pub fn active_names(&self) -> Vec<&str> {
        self.column_names
            .iter()
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn predict(&self, theta: &DMatrix<f64>) -> DVector<f64> {
        theta * DVector::from_column_slice(&self.values)
    }

    /// `name,value,active` rows, values to 12 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "value", "active"])?;
        for ((name, &v), &a) in self.column_names.iter().zip(&self.values).zip(&self.active) {
            w.write_record([name.as_str(), &sig12(v), if a { "true" } else { "false" }])?;
        }
        w.flush()
    }
}

/// Forward differences of SOC over time, with a backward difference at the
/// final sample so the output has one rate per sample (percent per second).
pub fn finite_difference(series: &SocTimeSeries) -> Result<Vec<f64>, RegressionError> {
    let s = &series.samples;
    if s.len() < 2 {
        return Err(RegressionError::TooFewSamples(s.len()));
    }
    for (i, w) in s.windows(2).enumerate() {
        if !(w[1].time_s > w[0].time_s) {
            return Err(RegressionError::NonIncreasingTime { index: i + 1, time_s: w[1].time_s });
        }
    }
    let slope = |a: usize, b: usize| (s[b].soc_pct - s[a].soc_pct) / (s[b].time_s - s[a].time_s);
    let n = s.len();
    Ok((0..n)
        .map(|i| if i + 1 < n { slope(i, i + 1) } else { slope(n - 2, n - 1) })
        .collect())
}

fn column_norms(theta: &DMatrix<f64>) -> Vec<f64> {
    theta.column_iter().map(|c| c.norm()).collect()
}

/// Solves `min ‖y − Θξ‖² + λ‖ξ‖²` on unit-norm-scaled columns via QR of the
/// augmented system `[Θ D⁻¹; √λ D⁻¹] ζ = [y; 0]`, returning `ξ = D⁻¹ζ`.
fn least_squares(
    theta: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
    lambda: f64,
) -> Result<Vec<f64>, RegressionError> {
    let (n, m) = theta.shape();
    if lambda == 0.0 && n < m {
        return Err(RegressionError::Underdetermined { rows: n, cols: m });
    }
    let norms = column_norms(theta);
    if lambda == 0.0 {
        let zero: Vec<String> = norms
            .iter()
            .zip(names)
            .filter(|(&d, _)| d == 0.0)
            .map(|(_, name)| name.clone())
            .collect();
        if !zero.is_empty() {
            return Err(RegressionError::Singular { columns: zero });
        }
    }
    let scale: Vec<f64> = norms.iter().map(|&d| if d > 0.0 { d } else { 1.0 }).collect();

    let extra = if lambda > 0.0 { m } else { 0 };
    let mut a = DMatrix::zeros(n + extra, m);
    for j in 0..m {
        for i in 0..n {
            a[(i, j)] = theta[(i, j)] / scale[j];
        }
        if lambda > 0.0 {
            a[(n + j, j)] = lambda.sqrt() / scale[j];
        }
    }
    let mut b = DVector::zeros(n + extra);
    b.rows_mut(0, n).copy_from(y);

    let qr = a.qr();
    qr.q_tr_mul(&mut b);
    let r = qr.r();
    let r = r.view((0, 0), (m, m)).into_owned();

    let max_diag = (0..m).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let dependent: Vec<String> = (0..m)
        .filter(|&j| !(r[(j, j)].abs() > RANK_TOLERANCE * max_diag))
        .map(|j| names[j].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(RegressionError::Singular { columns: dependent });
    }

    let zeta = r
        .solve_upper_triangular(&b.rows(0, m).into_owned())
        .ok_or_else(|| RegressionError::Singular { columns: names.to_vec() })?;
    Ok(zeta.iter().zip(&scale).map(|(z, d)| z / d).collect())
}

/// Ordinary least squares.
pub fn ols(dm: &DesignMatrix) -> Result<SparseCoefficients, RegressionError> {
    let xi = least_squares(&dm.theta, &dm.target, &dm.column_names, 0.0)?;
    Ok(SparseCoefficients::dense(xi, dm.column_names.clone()))
}

/// Ridge regression, `(ΘᵀΘ + λI)⁻¹Θᵀy` with the penalty on physical coefficients.
pub fn ridge(dm: &DesignMatrix, params: &RegularizationParams) -> Result<SparseCoefficients, RegressionError> {
    params.check()?;
    let xi = least_squares(&dm.theta, &dm.target, &dm.column_names, params.lambda)?;
    Ok(SparseCoefficients::dense(xi, dm.column_names.clone()))
}

/// `‖y − Θξ‖² + λ‖ξ‖₁`
pub fn lasso_objective(dm: &DesignMatrix, values: &[f64], lambda: f64) -> f64 {
    let xi = DVector::from_column_slice(values);
    let residual = &dm.target - &dm.theta * xi;
    residual.norm_squared() + lambda * values.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft_threshold(x: f64, k: f64) -> f64 {
    if x > k {
        x - k
    } else if x < -k {
        x + k
    } else {
        0.0
    }
}

/// LASSO, `min ‖y − Θξ‖² + λ‖ξ‖₁`, by cyclic coordinate descent.
///
/// Columns are scaled to unit norm internally; the per-column penalty is
/// adjusted so the objective is still the one on physical coefficients.
/// Convergence is declared when the largest change of a scaled coefficient
/// during a sweep drops below `convergence_tol`.
pub fn lasso(dm: &DesignMatrix, params: &RegularizationParams) -> Result<SparseCoefficients, RegressionError> {
    params.check()?;
    let m = dm.ncols();
    let norms = column_norms(&dm.theta);
    let mut scaled = dm.theta.clone();
    for (j, &d) in norms.iter().enumerate() {
        if d > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / d);
        }
    }

    let mut zeta = vec![0.0; m];
    let mut residual = dm.target.clone();
    let to_physical = |zeta: &[f64]| -> SparseCoefficients {
        let values: Vec<f64> = zeta
            .iter()
            .zip(&norms)
            .map(|(&z, &d)| if d > 0.0 { z / d } else { 0.0 })
            .collect();
        SparseCoefficients {
            active: values.iter().map(|&v| v != 0.0).collect(),
            values,
            column_names: dm.column_names.clone(),
            threshold_used: 0.0,
        }
    };

    // ξ = 0 satisfies the optimality conditions exactly; skip the sweeps so
    // rounding in the scaled columns cannot leave ulp-sized coefficients.
    if params.lambda >= 2.0 * (dm.theta.transpose() * &dm.target).amax() {
        return Ok(to_physical(&zeta));
    }

    for _sweep in 0..params.max_iterations {
        let mut max_change: f64 = 0.0;
        for j in 0..m {
            let d = norms[j];
            if d == 0.0 {
                continue;
            }
            let col = scaled.column(j);
            let rho = col.dot(&residual) + zeta[j];
            let updated = soft_threshold(rho, params.lambda / (2.0 * d));
            let delta = updated - zeta[j];
            if delta != 0.0 {
                residual.axpy(-delta, &col, 1.0);
                zeta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < params.convergence_tol {
            return Ok(to_physical(&zeta));
        }
    }
    Err(RegressionError::NotConverged {
        iterations: params.max_iterations,
        last: Box::new(to_physical(&zeta)),
    })
}

/// Sequentially thresholded least squares.
///
/// Repeats: OLS on the active columns, then drop every active term whose
/// magnitude (per `threshold_scale`) is below `threshold`, all in one pass.
/// Stops once the active set no longer changes.
pub fn stlsq(dm: &DesignMatrix, params: &RegularizationParams) -> Result<SparseCoefficients, RegressionError> {
    params.check()?;
    let n = dm.nrows();
    let rms: Vec<f64> = column_norms(&dm.theta)
        .into_iter()
        .map(|d| d / (n.max(1) as f64).sqrt())
        .collect();
    let magnitude = |j: usize, v: f64| match params.threshold_scale {
        ThresholdScale::Physical => v.abs(),
        ThresholdScale::ColumnRms => (v * rms[j]).abs(),
    };

    let mut active: Vec<usize> = (0..dm.ncols()).collect();
    loop {
        let sub = dm.theta.select_columns(&active);
        let names: Vec<String> = active.iter().map(|&j| dm.column_names[j].clone()).collect();
        let xi = least_squares(&sub, &dm.target, &names, 0.0)?;

        let keep: Vec<usize> = active
            .iter()
            .zip(&xi)
            .filter(|(&j, &v)| magnitude(j, v) >= params.threshold)
            .map(|(&j, _)| j)
            .collect();

        if keep.len() == active.len() {
            let mut values = vec![0.0; dm.ncols()];
            let mut mask = vec![false; dm.ncols()];
            for (&j, &v) in active.iter().zip(&xi) {
                values[j] = v;
                mask[j] = true;
            }
            return Ok(SparseCoefficients {
                values,
                active: mask,
                column_names: dm.column_names.clone(),
                threshold_used: params.threshold,
            });
        }
        if keep.is_empty() {
            return Err(RegressionError::EmptyModel);
        }
        active = keep;
    }
}
