//! Benchmark scoring of model activations against primate data.
//!
//! Neural benchmarks fit a cross-validated linear readout from activations to
//! recordings and score held-out Pearson correlations. The behavioral
//! benchmark trains a multinomial logistic classifier and correlates its
//! confusion pattern with a reference pattern. Both divide by a user-supplied
//! ceiling.

mod behavior;
pub mod io;
mod neural;

pub use behavior::{behavior_score, model_pattern, LogisticConfig, LogisticModel};
pub use neural::{neural_score, NeuralConfig};

use crate::records::Region;
use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("ceiling must be positive, got {0}")]
    InvalidCeiling(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least {need} stimuli, got {got}")]
    TooFewStimuli { need: usize, got: usize },
    #[error("held-out split has {got} stimuli, need at least 3")]
    TooFewHeldOut { got: usize },
    #[error("train fraction must lie in (0.5, 0.95], got {0}")]
    InvalidTrainFraction(f64),
    #[error("ridge penalty must be non-negative, got {0}")]
    InvalidRidge(f64),
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("no neuroid had a defined correlation in any repeat")]
    NoValidNeuroids,
    #[error("class {0} has no training examples")]
    MissingClass(String),
    #[error("pattern length {got} does not match expected {expected}")]
    PatternLength { got: usize, expected: usize },
    #[error("pattern has zero variance; correlation undefined")]
    ConstantPattern,
    #[error("invalid input file {path}: {message}")]
    File { path: String, message: String },
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("repeats must be positive")]
    NoRepeats,
}

/// How per-neuroid correlations are reduced to one score per repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Median,
    Mean,
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregate::Median => "median",
            Aggregate::Mean => "mean",
        })
    }
}

impl FromStr for Aggregate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(Aggregate::Median),
            "mean" => Ok(Aggregate::Mean),
            other => Err(format!("unknown aggregate {other:?}")),
        }
    }
}

impl Aggregate {
    pub fn apply(self, values: &mut [f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        match self {
            Aggregate::Mean => Some(values.iter().sum::<f64>() / values.len() as f64),
            Aggregate::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                Some(if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                })
            }
        }
    }
}

/// Activations and recordings over a shared stimulus axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkData {
    pub stimulus_ids: Vec<String>,
    /// stimuli x features
    pub activations: DMatrix<f64>,
    /// stimuli x neuroids
    pub recordings: DMatrix<f64>,
    pub ceiling: f64,
    pub region: Region,
}

impl BenchmarkData {
    pub fn validate(&self) -> Result<(), AlignmentError> {
        if self.activations.nrows() != self.recordings.nrows() {
            return Err(AlignmentError::Shape(format!(
                "activations have {} stimuli, recordings have {}",
                self.activations.nrows(),
                self.recordings.nrows()
            )));
        }
        if !self.stimulus_ids.is_empty() && self.stimulus_ids.len() != self.activations.nrows() {
            return Err(AlignmentError::Shape(format!(
                "{} stimulus ids for {} rows",
                self.stimulus_ids.len(),
                self.activations.nrows()
            )));
        }
        check_finite(&self.activations)?;
        check_finite(&self.recordings)?;
        check_ceiling(self.ceiling)
    }
}

/// Inputs for the behavioral benchmark. Labels are class indices `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorData {
    pub train_features: DMatrix<f64>,
    pub train_labels: Vec<usize>,
    pub test_features: DMatrix<f64>,
    /// True class of each test image; needed to know which classes are incorrect.
    pub test_labels: Vec<usize>,
    pub n_classes: usize,
    /// Reference pattern, image-major with incorrect classes ascending.
    pub primate_pattern: Vec<f64>,
    pub ceiling: f64,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub region: Region,
    pub raw: f64,
    pub ceiled: f64,
    pub ceiling: f64,
    /// Per-neuroid Pearson r averaged over the repeats in which it was defined.
    /// Empty for the behavioral benchmark.
    pub per_neuroid: Vec<f64>,
    pub n_repeats: usize,
    pub seed: u64,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<(), AlignmentError> {
    for (k, v) in m.iter().enumerate() {
        if !v.is_finite() {
            // nalgebra storage is column-major
            return Err(AlignmentError::NonFinite {
                row: k % m.nrows(),
                col: k / m.nrows(),
            });
        }
    }
    Ok(())
}

fn check_ceiling(ceiling: f64) -> Result<(), AlignmentError> {
    if ceiling > 0.0 && ceiling.is_finite() {
        Ok(())
    } else {
        Err(AlignmentError::InvalidCeiling(ceiling))
    }
}

/// `raw / ceiling`. Values above one are allowed and logged.
pub fn ceiling_normalize(raw: f64, ceiling: f64) -> Result<f64, AlignmentError> {
    check_ceiling(ceiling)?;
    if ceiling > 1.0 {
        warn!("ceiling {ceiling} exceeds 1");
    }
    let v = raw / ceiling;
    if v > 1.0 {
        warn!("ceiled score {v} exceeds 1 (raw {raw}, ceiling {ceiling})");
    }
    Ok(v)
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    // sqrt of the rounded product keeps self-correlation exactly 1.
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_examples() {
        assert!((ceiling_normalize(0.4, 0.8).unwrap() - 0.5).abs() < 1e-15);
        assert!((ceiling_normalize(0.9, 0.8).unwrap() - 1.125).abs() < 1e-15);
        assert_eq!(ceiling_normalize(0.0, 0.3).unwrap(), 0.0);
        assert!(matches!(
            ceiling_normalize(0.5, 0.0),
            Err(AlignmentError::InvalidCeiling(_))
        ));
    }

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0, -4.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&a, &[1.0; 4]), None);
    }

    #[test]
    fn aggregates() {
        assert_eq!(Aggregate::Median.apply(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(Aggregate::Median.apply(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(Aggregate::Mean.apply(&mut [1.0, 2.0]), Some(1.5));
        assert_eq!(Aggregate::Mean.apply(&mut []), None);
    }
}
