use super::{pearson, Aggregate, AlignmentError, BenchmarkData, ScoreReport};
use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub repeats: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Ridge penalty; zero means minimum-norm least squares.
    pub ridge: f64,
    pub aggregate: Aggregate,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            repeats: 10,
            train_fraction: 0.9,
            seed: 0,
            ridge: 0.0,
            aggregate: Aggregate::Median,
        }
    }
}

const MIN_STIMULI: usize = 20;

/// Column means of `m`.
fn col_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

fn center(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Multi-output linear map from centered `x` to centered `y`.
fn fit_readout(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    if ridge > 0.0 {
        let p = x.ncols();
        let mut gram = x.transpose() * x;
        for i in 0..p {
            gram[(i, i)] += ridge;
        }
        let rhs = x.transpose() * y;
        if let Some(chol) = gram.clone().cholesky() {
            return chol.solve(&rhs);
        }
        // Fall through to the pseudo-inverse if Cholesky fails numerically.
    }
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = max_sv * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    svd.solve(y, tol).expect("svd computed with both U and V")
}

struct RepeatOutcome {
    score: Option<f64>,
    per_neuroid: Vec<Option<f64>>,
    undefined: usize,
}

fn run_repeat(data: &BenchmarkData, cfg: &NeuralConfig, repeat: usize) -> RepeatOutcome {
    let n = data.activations.nrows();
    let n_train = ((n as f64) * cfg.train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(repeat as u64);
    order.shuffle(&mut rng);
    let (train, test) = order.split_at(n_train);

    let x_train = data.activations.select_rows(train);
    let y_train = data.recordings.select_rows(train);
    let x_test = data.activations.select_rows(test);
    let y_test = data.recordings.select_rows(test);

    let mx = col_means(&x_train);
    let my = col_means(&y_train);
    let w = fit_readout(&center(&x_train, &mx), &center(&y_train, &my), cfg.ridge);
    let mut pred = center(&x_test, &mx) * w;
    for (j, mut col) in pred.column_iter_mut().enumerate() {
        col.add_scalar_mut(my[j]);
    }

    let per_neuroid: Vec<Option<f64>> = (0..y_test.ncols())
        .map(|j| {
            let p: Vec<f64> = pred.column(j).iter().copied().collect();
            let t: Vec<f64> = y_test.column(j).iter().copied().collect();
            pearson(&p, &t)
        })
        .collect();
    let mut valid: Vec<f64> = per_neuroid.iter().flatten().copied().collect();
    let undefined = per_neuroid.len() - valid.len();
    RepeatOutcome {
        score: cfg.aggregate.apply(&mut valid),
        per_neuroid,
        undefined,
    }
}

/// Cross-validated linear readout score.
///
/// Each repeat draws an independent random split (its own ChaCha stream of
/// `seed`), fits a linear map with intercept on the training stimuli, and
/// correlates held-out predictions with recordings per neuroid. Neuroids whose
/// correlation is undefined on a split are left out of that repeat.
pub fn neural_score(data: &BenchmarkData, cfg: &NeuralConfig) -> Result<ScoreReport, AlignmentError> {
    data.validate()?;
    let n = data.activations.nrows();
    if n < MIN_STIMULI {
        return Err(AlignmentError::TooFewStimuli { need: MIN_STIMULI, got: n });
    }
    if !(cfg.train_fraction > 0.5 && cfg.train_fraction <= 0.95) {
        return Err(AlignmentError::InvalidTrainFraction(cfg.train_fraction));
    }
    if !(cfg.ridge >= 0.0) {
        return Err(AlignmentError::InvalidRidge(cfg.ridge));
    }
    if cfg.repeats == 0 {
        return Err(AlignmentError::NoRepeats);
    }
    let n_train = ((n as f64) * cfg.train_fraction).round() as usize;
    if n - n_train < 3 {
        return Err(AlignmentError::TooFewHeldOut { got: n - n_train });
    }

    let outcomes: Vec<RepeatOutcome> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_repeat(data, cfg, r))
        .collect();

    let mut warnings = Vec::new();
    let n_neuroids = data.recordings.ncols();
    let mut sums = vec![0.0; n_neuroids];
    let mut counts = vec![0usize; n_neuroids];
    let mut scores = Vec::with_capacity(outcomes.len());
    for (r, o) in outcomes.iter().enumerate() {
        if o.undefined > 0 {
            let msg = format!("repeat {r}: {} neuroid(s) with zero held-out variance excluded", o.undefined);
            warn!("{msg}");
            warnings.push(msg);
        }
        for (j, v) in o.per_neuroid.iter().enumerate() {
            if let Some(v) = v {
                sums[j] += v;
                counts[j] += 1;
            }
        }
        if let Some(s) = o.score {
            scores.push(s);
        }
    }
    if scores.is_empty() {
        return Err(AlignmentError::NoValidNeuroids);
    }
    let raw = scores.iter().sum::<f64>() / scores.len() as f64;
    let per_neuroid = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    Ok(ScoreReport {
        region: data.region,
        raw,
        ceiled: super::ceiling_normalize(raw, data.ceiling)?,
        ceiling: data.ceiling,
        per_neuroid,
        n_repeats: cfg.repeats,
        seed: cfg.seed,
        aggregate: cfg.aggregate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::Region;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn data(x: DMatrix<f64>, y: DMatrix<f64>) -> BenchmarkData {
        BenchmarkData {
            stimulus_ids: vec![],
            activations: x,
            recordings: y,
            ceiling: 1.0,
            region: Region::IT,
        }
    }

    #[test]
    fn identity_pairing_scores_one() {
        let x = gaussian(200, 8, 1);
        let r = neural_score(&data(x.clone(), x), &NeuralConfig::default()).unwrap();
        assert!(r.ceiled >= 0.99, "{r:?}");
    }

    #[test]
    fn affine_feature_transform_is_invisible() {
        let x = gaussian(300, 6, 2);
        let map = gaussian(6, 10, 3);
        let noise = gaussian(300, 10, 4) * 0.7;
        let y = &x * map + noise;
        let t = gaussian(6, 6, 5) + DMatrix::identity(6, 6) * 3.0;
        let mut x2 = &x * t;
        for mut col in x2.column_iter_mut() {
            col.add_scalar_mut(4.2);
        }
        let cfg = NeuralConfig::default();
        let a = neural_score(&data(x, y.clone()), &cfg).unwrap();
        let b = neural_score(&data(x2, y), &cfg).unwrap();
        assert!((a.raw - b.raw).abs() < 1e-6, "{} vs {}", a.raw, b.raw);
    }

    #[test]
    fn neuroid_permutation_is_invisible() {
        let x = gaussian(150, 5, 6);
        let y = &x * gaussian(5, 7, 7) + gaussian(150, 7, 8);
        let perm: Vec<usize> = vec![3, 0, 6, 1, 5, 2, 4];
        let y2 = y.select_columns(&perm);
        let cfg = NeuralConfig::default();
        let a = neural_score(&data(x.clone(), y), &cfg).unwrap();
        let b = neural_score(&data(x, y2), &cfg).unwrap();
        assert!((a.raw - b.raw).abs() < 1e-12);
    }

    #[test]
    fn deterministic_under_seed() {
        let x = gaussian(100, 4, 9);
        let y = &x * gaussian(4, 3, 10) + gaussian(100, 3, 11);
        let cfg = NeuralConfig { seed: 17, ..Default::default() };
        let a = neural_score(&data(x.clone(), y.clone()), &cfg).unwrap();
        let b = neural_score(&data(x, y), &cfg).unwrap();
        assert_eq!(a.raw.to_bits(), b.raw.to_bits());
    }

    #[test]
    fn ridge_handles_wide_features() {
        let x = gaussian(40, 100, 12);
        let y = &x * gaussian(100, 5, 13);
        let cfg = NeuralConfig { ridge: 1.0, ..Default::default() };
        let r = neural_score(&data(x.clone(), y.clone()), &cfg).unwrap();
        assert!(r.raw.is_finite());
        let min_norm = neural_score(&data(x, y), &NeuralConfig::default()).unwrap();
        assert!(min_norm.raw.is_finite());
    }

    #[test]
    fn constant_neuroid_is_excluded_with_warning() {
        let x = gaussian(100, 4, 14);
        let mut y = &x * gaussian(4, 3, 15);
        y.column_mut(1).fill(2.0);
        let r = neural_score(&data(x, y), &NeuralConfig::default()).unwrap();
        assert!(!r.warnings.is_empty());
        assert!(r.per_neuroid[1].is_nan());
        assert!(r.raw > 0.99);
    }

    #[test]
    fn input_validation() {
        let x = gaussian(10, 2, 16);
        assert!(matches!(
            neural_score(&data(x.clone(), x.clone()), &NeuralConfig::default()),
            Err(AlignmentError::TooFewStimuli { .. })
        ));
        let x = gaussian(30, 2, 17);
        let y = gaussian(29, 2, 18);
        assert!(matches!(
            neural_score(&data(x.clone(), y), &NeuralConfig::default()),
            Err(AlignmentError::Shape(_))
        ));
        let cfg = NeuralConfig { train_fraction: 0.95, ..Default::default() };
        assert!(matches!(
            neural_score(&data(x.clone(), x.clone()), &cfg),
            Err(AlignmentError::TooFewHeldOut { got: 1 })
        ));
        let cfg = NeuralConfig { train_fraction: 0.4, ..Default::default() };
        assert!(matches!(
            neural_score(&data(x.clone(), x), &cfg),
            Err(AlignmentError::InvalidTrainFraction(_))
        ));
    }
}
