use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::baselines::SolverReport;
use crate::error::{Error, Result};

/// Version of the results JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

/// `fraction · max_f (max f − min f)` over the rows of `x`.
pub fn noise_sigma(x: &DMatrix<f64>, fraction: f64) -> Result<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidArgument(
            "noise calibration needs a nonempty training set".into(),
        ));
    }
    let range = x
        .row_iter()
        .map(|r| r.max() - r.min())
        .fold(f64::NEG_INFINITY, f64::max);
    let sigma = fraction * range;
    if !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "noise level is {sigma}: training signals have zero amplitude, so the noise covariance is singular"
        )));
    }
    Ok(sigma)
}

/// `‖x − x̂‖² / ‖x‖²`.
pub fn relative_mse(x: &[f64], estimate: &[f64]) -> Result<f64> {
    if x.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: estimate.len(),
        });
    }
    let norm: f64 = x.iter().map(|v| v * v).sum();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument(
            "relative error of a zero signal".into(),
        ));
    }
    let err: f64 = x.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / norm)
}

/// Per-row relative errors of `estimate` against `x`, both signals-as-rows.
pub fn relative_mse_rows(x: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.shape() != estimate.shape() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: estimate.len(),
        });
    }
    (0..x.nrows())
        .map(|j| {
            let a: Vec<f64> = x.row(j).iter().copied().collect();
            let b: Vec<f64> = estimate.row(j).iter().copied().collect();
            relative_mse(&a, &b)
        })
        .collect()
}

/// Mean relative error over the rows.
pub fn mean_relative_mse(x: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    let v = relative_mse_rows(x, estimate)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

// NaN is written as null by serde_json; read it back as NaN
fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Option::<f64>::deserialize(d).map(|v| v.unwrap_or(f64::NAN))
}

/// Mean and standard error.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodStatus {
    Ok,
    Failed,
}

/// Outcome of one method, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub name: String,
    pub status: MethodStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(deserialize_with = "null_as_nan")]
    pub mean_relative_mse: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub std_error: f64,
    pub per_signal: Vec<f64>,
    pub hyperparameters: BTreeMap<String, f64>,
    /// Tuning curve: grid value → mean relative error on the tuning set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tuning_curve: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl MethodReport {
    pub fn completed(method: Method, per_signal_fraction: Vec<f64>) -> Self {
        let per_signal: Vec<f64> = per_signal_fraction.iter().map(|v| 100.0 * v).collect();
        let (mean, se) = mean_and_stderr(&per_signal);
        Self {
            method,
            name: method.name().into(),
            status: MethodStatus::Ok,
            error: None,
            mean_relative_mse: mean,
            std_error: se,
            per_signal,
            hyperparameters: BTreeMap::new(),
            tuning_curve: Vec::new(),
            solver: None,
            notes: BTreeMap::new(),
        }
    }

    pub fn failed(method: Method, error: &Error) -> Self {
        Self {
            method,
            name: method.name().into(),
            status: MethodStatus::Failed,
            error: Some(error.to_string()),
            mean_relative_mse: f64::NAN,
            std_error: f64::NAN,
            per_signal: Vec::new(),
            hyperparameters: BTreeMap::new(),
            tuning_curve: Vec::new(),
            solver: None,
            notes: BTreeMap::new(),
        }
    }

    pub fn ok(&self) -> bool {
        self.status == MethodStatus::Ok
    }
}

/// Everything an experiment reports except timings, which live in
/// [`Timings`] so that the report bytes are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub sigma: f64,
    pub clustering_accuracy: Option<f64>,
    pub methods: Vec<MethodReport>,
}

impl MetricsReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    /// Mean relative MSE in percent of a completed method.
    pub fn mse(&self, m: Method) -> Option<f64> {
        self.method(m)
            .filter(|r| r.ok())
            .map(|r| r.mean_relative_mse)
    }

    pub fn all_ok(&self) -> bool {
        self.methods.iter().all(MethodReport::ok)
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_cases() {
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 2.0, 1.0]);
        assert!((noise_sigma(&x, 0.1).unwrap() - 0.2).abs() < 1e-15);
        let two = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, 1.0]);
        assert!((noise_sigma(&two, 0.1).unwrap() - 0.4).abs() < 1e-15);
        let flat = DMatrix::from_element(3, 4, 2.5);
        assert!(matches!(noise_sigma(&flat, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn relative_mse_cases() {
        let x = [1.0, -2.0, 2.0];
        assert_eq!(relative_mse(&x, &x).unwrap(), 0.0);
        assert_eq!(relative_mse(&x, &[0.0; 3]).unwrap(), 1.0);
        assert!(relative_mse(&[0.0; 2], &[1.0; 2]).is_err());
        assert!(relative_mse(&x, &[0.0; 2]).is_err());
    }

    #[test]
    fn report_mean_matches_values() {
        let r = MethodReport::completed(Method::B, vec![0.01, 0.02, 0.03, 0.05]);
        let mean = r.per_signal.iter().sum::<f64>() / 4.0;
        assert!((r.mean_relative_mse - mean).abs() < 1e-12);
        assert!(r.std_error > 0.0);
    }
}
