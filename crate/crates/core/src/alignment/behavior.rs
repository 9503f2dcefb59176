use super::{pearson, Aggregate, AlignmentError, BehaviorData, ScoreReport};
use crate::numerics::{minimize, GradientMode, LineSearch, Objective, OptimizerConfig};
use crate::records::Region;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// L2 penalty on the weights (not the intercepts).
    pub l2: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1e-4,
            grad_tol: 1e-6,
            max_iters: 5000,
        }
    }
}

/// Softmax classifier over standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub n_classes: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `(features + 1) x classes`, last row holds the intercepts.
    pub weights: DMatrix<f64>,
    pub converged: bool,
}

struct CrossEntropy<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [usize],
    k: usize,
    l2: f64,
}

impl Objective for CrossEntropy<'_> {
    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let (n, p, k) = (self.x.nrows(), self.x.ncols(), self.k);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut z = vec![0.0; k];
        for i in 0..n {
            for c in 0..k {
                let mut s = w[p * k + c];
                for f in 0..p {
                    s += self.x[(i, f)] * w[f * k + c];
                }
                z[c] = s;
            }
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            let log_norm = max + sum.ln();
            loss += log_norm - z[self.y[i]];
            for c in 0..k {
                let prob = (z[c] - log_norm).exp();
                let r = prob - if c == self.y[i] { 1.0 } else { 0.0 };
                for f in 0..p {
                    grad[f * k + c] += r * self.x[(i, f)];
                }
                grad[p * k + c] += r;
            }
        }
        let inv_n = 1.0 / n as f64;
        loss *= inv_n;
        grad.iter_mut().for_each(|g| *g *= inv_n);
        for (g, wv) in grad.iter_mut().zip(w).take(p * k) {
            *g += self.l2 * wv;
            loss += 0.5 * self.l2 * wv * wv;
        }
        loss
    }
}

impl LogisticModel {
    pub fn fit(
        x: &DMatrix<f64>,
        y: &[usize],
        n_classes: usize,
        cfg: &LogisticConfig,
    ) -> Result<LogisticModel, AlignmentError> {
        if x.nrows() != y.len() {
            return Err(AlignmentError::Shape(format!(
                "{} feature rows for {} labels",
                x.nrows(),
                y.len()
            )));
        }
        super::check_finite(x)?;
        let mut seen = vec![false; n_classes];
        for &c in y {
            if c >= n_classes {
                return Err(AlignmentError::Shape(format!("label {c} outside 0..{n_classes}")));
            }
            seen[c] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(AlignmentError::MissingClass(c.to_string()));
        }
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
        let scale: Vec<f64> = x
            .column_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let xs = standardize(x, &mean, &scale);
        let p = x.ncols();
        let obj = CrossEntropy {
            x: &xs,
            y,
            k: n_classes,
            l2: cfg.l2,
        };
        let opt = OptimizerConfig {
            max_iters: cfg.max_iters,
            grad_tol: cfg.grad_tol,
            line_search: LineSearch::default(),
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-6,
        };
        let res = minimize(&obj, &vec![0.0; (p + 1) * n_classes], &opt)
            .expect("cross-entropy is finite at zero weights");
        Ok(LogisticModel {
            n_classes,
            mean,
            scale,
            weights: DMatrix::from_row_slice(p + 1, n_classes, &res.x_star),
            converged: res.converged,
        })
    }

    /// Class probabilities, one row per input row.
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, AlignmentError> {
        let p = self.mean.len();
        if x.ncols() != p {
            return Err(AlignmentError::Shape(format!(
                "classifier expects {p} features, got {}",
                x.ncols()
            )));
        }
        let xs = standardize(x, &self.mean, &self.scale);
        let k = self.n_classes;
        let mut out = DMatrix::zeros(x.nrows(), k);
        for i in 0..x.nrows() {
            let z: Vec<f64> = (0..k)
                .map(|c| {
                    self.weights[(p, c)] + (0..p).map(|f| xs[(i, f)] * self.weights[(f, c)]).sum::<f64>()
                })
                .collect();
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            for c in 0..k {
                out[(i, c)] = (z[c] - max).exp() / sum;
            }
        }
        Ok(out)
    }
}

fn standardize(x: &DMatrix<f64>, mean: &[f64], scale: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - mean[j]) / scale[j])
}

/// Flatten `probs` into the confusion pattern: for each image in row order,
/// the probabilities of every class other than its true class, ascending.
pub fn model_pattern(probs: &DMatrix<f64>, labels: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(labels.len() * probs.ncols().saturating_sub(1));
    for (i, &y) in labels.iter().enumerate() {
        for c in 0..probs.ncols() {
            if c != y {
                out.push(probs[(i, c)]);
            }
        }
    }
    out
}

/// Train the classifier, build its confusion pattern on the test images, and
/// correlate it with the reference pattern.
///
/// Training is full-batch and deterministic; `seed` is recorded for
/// provenance only.
pub fn behavior_score(data: &BehaviorData, seed: u64) -> Result<ScoreReport, AlignmentError> {
    behavior_score_with(data, seed, &LogisticConfig::default())
}

pub fn behavior_score_with(
    data: &BehaviorData,
    seed: u64,
    cfg: &LogisticConfig,
) -> Result<ScoreReport, AlignmentError> {
    if data.test_features.nrows() != data.test_labels.len() {
        return Err(AlignmentError::Shape(format!(
            "{} test rows for {} test labels",
            data.test_features.nrows(),
            data.test_labels.len()
        )));
    }
    if let Some(&bad) = data.test_labels.iter().find(|&&c| c >= data.n_classes) {
        return Err(AlignmentError::Shape(format!("test label {bad} outside 0..{}", data.n_classes)));
    }
    let expected = data.test_labels.len() * data.n_classes.saturating_sub(1);
    if data.primate_pattern.len() != expected {
        return Err(AlignmentError::PatternLength {
            got: data.primate_pattern.len(),
            expected,
        });
    }
    super::check_finite(&data.test_features)?;
    let model = LogisticModel::fit(&data.train_features, &data.train_labels, data.n_classes, cfg)
        .map_err(|e| match e {
            AlignmentError::MissingClass(c) => {
                let name = c
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| data.class_names.get(i).cloned())
                    .unwrap_or(c);
                AlignmentError::MissingClass(name)
            }
            other => other,
        })?;
    let probs = model.predict_proba(&data.test_features)?;
    let pattern = model_pattern(&probs, &data.test_labels);
    let raw = pearson(&pattern, &data.primate_pattern).ok_or(AlignmentError::ConstantPattern)?;
    let mut warnings = Vec::new();
    if !model.converged {
        warnings.push("logistic classifier hit its iteration cap".to_string());
    }
    Ok(ScoreReport {
        region: Region::Behavior,
        raw,
        ceiled: super::ceiling_normalize(raw, data.ceiling)?,
        ceiling: data.ceiling,
        per_neuroid: Vec::new(),
        n_repeats: 1,
        seed,
        aggregate: Aggregate::Mean,
        warnings,
    })
}
