//! Seeded synthetic data with known ground truth.
//!
//! Curves are generated from the closed forms with multiplicative log-normal
//! noise, benchmarks from a random linear map plus Gaussian noise, and the
//! behavioral task from isotropic Gaussian blobs whose Bayes posterior is
//! available in closed form. Everything is deterministic given the seed.

use crate::alignment::{model_pattern, pearson, BehaviorData, BenchmarkData};
use crate::fit::{CurvePoint, JointPoint, XKind};
use crate::records::{RecordsError, Region, RunRecord, RunTable, SamplesPerClass};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("grid {0} must be non-empty with positive finite values")]
    InvalidGrid(&'static str),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error("invalid generator: {0}")]
    Invalid(String),
    #[error("point {index}: misalignment {l} maps to a score outside [0, 1]")]
    ScoreOutOfRange { index: usize, l: f64 },
    #[error(transparent)]
    Records(#[from] RecordsError),
}

/// True parameters of a curve generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum CurveSpec {
    Power {
        #[serde(rename = "E")]
        e: f64,
        #[serde(rename = "A")]
        a: f64,
        alpha: f64,
    },
    Shifted {
        #[serde(rename = "E")]
        e: f64,
        #[serde(rename = "A")]
        a: f64,
        alpha: f64,
        lambda: f64,
    },
    Joint {
        #[serde(rename = "E")]
        e: f64,
        #[serde(rename = "A")]
        a: f64,
        alpha: f64,
        #[serde(rename = "B")]
        b: f64,
        beta: f64,
    },
}

impl CurveSpec {
    /// Noise-free misalignment at `x` (single-variable forms).
    pub fn eval_x(&self, x: f64) -> f64 {
        match *self {
            CurveSpec::Power { e, a, alpha } => e + a * x.powf(-alpha),
            CurveSpec::Shifted { e, a, alpha, lambda } => e + a * (x + 10f64.powf(lambda)).powf(-alpha),
            CurveSpec::Joint { .. } => f64::NAN,
        }
    }

    /// Noise-free misalignment at `(n, d)` (joint form).
    pub fn eval_nd(&self, n: f64, d: f64) -> f64 {
        match *self {
            CurveSpec::Joint { e, a, alpha, b, beta } => e + a * n.powf(-alpha) + b * d.powf(-beta),
            _ => f64::NAN,
        }
    }

    pub fn is_joint(&self) -> bool {
        matches!(self, CurveSpec::Joint { .. })
    }
}

/// Curve generator. Grid values are in the same units the parameters refer to;
/// use [`scale_x`] or [`scale_nd`] to express points in raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveGenerator {
    pub spec: CurveSpec,
    /// Used by the single-variable forms.
    #[serde(default)]
    pub x_grid: Vec<f64>,
    /// Used by the joint form; every `(n, d)` pair of the two grids is emitted.
    #[serde(default)]
    pub n_grid: Vec<f64>,
    #[serde(default)]
    pub d_grid: Vec<f64>,
    pub noise_sigma_log: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratedPoints {
    Curve(Vec<CurvePoint>),
    Joint(Vec<JointPoint>),
}

/// Points plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCurve {
    pub truth: CurveSpec,
    pub points: GeneratedPoints,
}

impl GeneratedCurve {
    pub fn curve(&self) -> &[CurvePoint] {
        match &self.points {
            GeneratedPoints::Curve(p) => p,
            GeneratedPoints::Joint(_) => &[],
        }
    }

    pub fn joint(&self) -> &[JointPoint] {
        match &self.points {
            GeneratedPoints::Joint(p) => p,
            GeneratedPoints::Curve(_) => &[],
        }
    }
}

fn check_grid(g: &[f64], name: &'static str) -> Result<(), SynthError> {
    if g.is_empty() || g.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(SynthError::InvalidGrid(name));
    }
    Ok(())
}

/// `n` points spaced evenly in log10 between `10^lo` and `10^hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![10f64.powf(lo)],
        _ => (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Samples-per-class levels of a subsampled training campaign.
pub const SUBSAMPLING_LEVELS: [u64; 6] = [1, 3, 10, 30, 100, 300];

/// Dataset sizes for the subsampling levels times `n_classes`.
pub fn subsampling_grid(n_classes: u64) -> Vec<f64> {
    SUBSAMPLING_LEVELS.iter().map(|d| (d * n_classes) as f64).collect()
}

pub fn gen_curve_points(g: &CurveGenerator) -> Result<GeneratedCurve, SynthError> {
    if !(g.noise_sigma_log >= 0.0 && g.noise_sigma_log.is_finite()) {
        return Err(SynthError::InvalidNoise(g.noise_sigma_log));
    }
    let noise = Normal::new(0.0, g.noise_sigma_log).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut jitter = |l: f64| {
        if g.noise_sigma_log == 0.0 {
            l
        } else {
            l * noise.sample(&mut rng).exp()
        }
    };
    let points = if g.spec.is_joint() {
        check_grid(&g.n_grid, "n_grid")?;
        check_grid(&g.d_grid, "d_grid")?;
        let mut out = Vec::with_capacity(g.n_grid.len() * g.d_grid.len());
        for &n in &g.n_grid {
            for &d in &g.d_grid {
                out.push(JointPoint { n, d, l: jitter(g.spec.eval_nd(n, d)) });
            }
        }
        GeneratedPoints::Joint(out)
    } else {
        check_grid(&g.x_grid, "x_grid")?;
        GeneratedPoints::Curve(
            g.x_grid
                .iter()
                .map(|&x| CurvePoint { x, l: jitter(g.spec.eval_x(x)) })
                .collect(),
        )
    };
    Ok(GeneratedCurve { truth: g.spec, points })
}

/// Multiply every x by `scale` (rescaled units to raw counts).
pub fn scale_x(points: &[CurvePoint], scale: f64) -> Vec<CurvePoint> {
    points.iter().map(|p| CurvePoint { x: p.x * scale, l: p.l }).collect()
}

pub fn scale_nd(points: &[JointPoint], n_scale: f64, d_scale: f64) -> Vec<JointPoint> {
    points
        .iter()
        .map(|p| JointPoint { n: p.n * n_scale, d: p.d * d_scale, l: p.l })
        .collect()
}

/// A run before it is given identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRun {
    pub n_params: u64,
    pub samples_seen: u64,
    pub flops: f64,
    pub scores: BTreeMap<Region, f64>,
}

fn score_of(l: f64, index: usize) -> Result<f64, SynthError> {
    let s = 1.0 - l;
    if (0.0..=1.0).contains(&s) {
        Ok(s)
    } else {
        Err(SynthError::ScoreOutOfRange { index, l })
    }
}

fn uniform_scores(s: f64) -> BTreeMap<Region, f64> {
    Region::ALL.iter().map(|&r| (r, s)).collect()
}

/// Runs whose flops follow raw `(C, L)` points, every region scored `1 - L`.
/// Parameters and samples are split as `C = 6 N D` with `N = D`.
pub fn runs_for_flops_curve(points: &[CurvePoint]) -> Result<Vec<SyntheticRun>, SynthError> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = ((p.x / 6.0).sqrt().round() as u64).max(1);
            let d = ((p.x / (6.0 * n as f64)).round() as u64).max(1);
            Ok(SyntheticRun {
                n_params: n,
                samples_seen: d,
                flops: p.x,
                scores: uniform_scores(score_of(p.l, i)?),
            })
        })
        .collect()
}

/// Size held fixed for the other axis when a curve is over parameters or samples.
pub const FIXED_OTHER_AXIS: u64 = 1_000_000;

/// Runs for raw `(X, L)` points of any kind. For parameter and sample curves
/// the other axis is held at [`FIXED_OTHER_AXIS`] and flops follow `6 N D`.
pub fn runs_for_curve(points: &[CurvePoint], kind: XKind) -> Result<Vec<SyntheticRun>, SynthError> {
    if kind == XKind::Flops {
        return runs_for_flops_curve(points);
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = (p.x.round() as u64).max(1);
            let (n, d) = match kind {
                XKind::Params => (x, FIXED_OTHER_AXIS),
                _ => (FIXED_OTHER_AXIS, x),
            };
            Ok(SyntheticRun {
                n_params: n,
                samples_seen: d,
                flops: 6.0 * n as f64 * d as f64,
                scores: uniform_scores(score_of(p.l, i)?),
            })
        })
        .collect()
}

/// Runs at raw `(N, D, L)` points with `C = 6 N D`, every region scored `1 - L`.
pub fn runs_for_joint(points: &[JointPoint]) -> Result<Vec<SyntheticRun>, SynthError> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = (p.n.round() as u64).max(1);
            let d = (p.d.round() as u64).max(1);
            Ok(SyntheticRun {
                n_params: n,
                samples_seen: d,
                flops: 6.0 * n as f64 * d as f64,
                scores: uniform_scores(score_of(p.l, i)?),
            })
        })
        .collect()
}

/// Runs over a raw flops grid where each region follows its own power law.
/// `curves` are in rescaled units (`C / c_scale`).
pub fn runs_for_regions(
    curves: &[(Region, CurveSpec)],
    flops: &[f64],
    c_scale: f64,
    noise_sigma_log: f64,
    seed: u64,
) -> Result<Vec<SyntheticRun>, SynthError> {
    check_grid(flops, "flops")?;
    let grid: Vec<f64> = flops.iter().map(|c| c / c_scale).collect();
    let mut per_region = Vec::with_capacity(curves.len());
    for (k, (region, spec)) in curves.iter().enumerate() {
        let g = CurveGenerator {
            spec: *spec,
            x_grid: grid.clone(),
            n_grid: vec![],
            d_grid: vec![],
            noise_sigma_log,
            seed: seed.wrapping_add(k as u64),
        };
        per_region.push((*region, gen_curve_points(&g)?));
    }
    let mut out = runs_for_flops_curve(&flops.iter().map(|&x| CurvePoint { x, l: 0.5 }).collect::<Vec<_>>())?;
    for (i, run) in out.iter_mut().enumerate() {
        for (region, curve) in &per_region {
            run.scores.insert(*region, score_of(curve.curve()[i].l, i)?);
        }
    }
    Ok(out)
}

/// Give runs identifiers and wrap them in a table.
pub fn run_table(runs: &[SyntheticRun], family: &str, source: &str) -> Result<RunTable, SynthError> {
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, r)| RunRecord {
            run_id: format!("syn{i:04}"),
            family: family.to_string(),
            arch: format!("{}-synthetic", family.to_lowercase()),
            dataset: "synthetic".to_string(),
            samples_per_class: SamplesPerClass::Full,
            seed: 0,
            n_params: r.n_params,
            samples_seen: r.samples_seen,
            flops: r.flops,
            scores: r.scores.clone(),
            val_accuracy: None,
        })
        .collect();
    Ok(RunTable::new(rows, source)?)
}

/// Linear-map benchmark generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGenerator {
    pub n_stimuli: usize,
    pub n_features: usize,
    pub n_neuroids: usize,
    /// Standard deviation of the additive recording noise.
    pub noise_sigma: f64,
    pub seed: u64,
    pub ceiling: f64,
    pub region: Region,
}

impl Default for BenchmarkGenerator {
    fn default() -> Self {
        BenchmarkGenerator {
            n_stimuli: 500,
            n_features: 10,
            n_neuroids: 20,
            noise_sigma: 0.0,
            seed: 0,
            ceiling: 1.0,
            region: Region::IT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBenchmark {
    pub data: BenchmarkData,
    pub map: DMatrix<f64>,
    /// Population Pearson r of each neuroid with its noise-free signal.
    pub theoretical_r: Vec<f64>,
}

/// Noise level giving signal-to-total standard deviation ratio `rho` for
/// unit-variance signal.
pub fn noise_for_target_r(rho: f64) -> f64 {
    (1.0 / (rho * rho) - 1.0).max(0.0).sqrt()
}

/// Activations are i.i.d. standard normal and map columns have unit norm, so
/// every neuroid's signal has unit variance and `r = 1 / sqrt(1 + sigma^2)`.
pub fn gen_benchmark(g: &BenchmarkGenerator) -> Result<GeneratedBenchmark, SynthError> {
    if g.n_stimuli < 20 {
        return Err(SynthError::Invalid(format!("need at least 20 stimuli, got {}", g.n_stimuli)));
    }
    if g.n_features == 0 || g.n_neuroids == 0 {
        return Err(SynthError::Invalid("features and neuroids must be positive".into()));
    }
    if !(g.noise_sigma >= 0.0 && g.noise_sigma.is_finite()) {
        return Err(SynthError::InvalidNoise(g.noise_sigma));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut map = DMatrix::from_fn(g.n_features, g.n_neuroids, |_, _| StandardNormal.sample(&mut rng));
    for mut col in map.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let activations: DMatrix<f64> =
        DMatrix::from_fn(g.n_stimuli, g.n_features, |_, _| StandardNormal.sample(&mut rng));
    let noise: DMatrix<f64> = DMatrix::from_fn(g.n_stimuli, g.n_neuroids, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        g.noise_sigma * z
    });
    let recordings = &activations * &map + noise;
    let theoretical_r = map
        .column_iter()
        .map(|c| {
            let s2 = c.norm_squared();
            (s2 / (s2 + g.noise_sigma * g.noise_sigma)).sqrt()
        })
        .collect();
    Ok(GeneratedBenchmark {
        data: BenchmarkData {
            stimulus_ids: (0..g.n_stimuli).map(|i| format!("stim{i:05}")).collect(),
            activations,
            recordings,
            ceiling: g.ceiling,
            region: g.region,
        },
        map,
        theoretical_r,
    })
}

/// Gaussian-blob classification task.
///
/// Class `c` has mean `separation * e_c` and identity covariance, with equal
/// priors. The Bayes posterior is then `softmax(separation * x_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorGenerator {
    pub n_classes: usize,
    pub n_features: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    /// Standard deviation of Gaussian noise added to the Bayes pattern to form
    /// the reference pattern.
    pub pattern_noise: f64,
    pub ceiling: f64,
    pub seed: u64,
}

impl Default for BehaviorGenerator {
    fn default() -> Self {
        BehaviorGenerator {
            n_classes: 4,
            n_features: 8,
            train_per_class: 540,
            test_per_class: 60,
            separation: 1.5,
            pattern_noise: 0.0,
            ceiling: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBehavior {
    pub data: BehaviorData,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// Confusion pattern of the Bayes-optimal classifier on the test images.
    pub bayes_pattern: Vec<f64>,
    /// Pearson r between the Bayes pattern and the reference pattern.
    pub analytic_r: f64,
}

/// Posterior class probabilities of the blob task.
pub fn bayes_posterior(x: &DMatrix<f64>, n_classes: usize, separation: f64) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(x.nrows(), n_classes);
    for i in 0..x.nrows() {
        let logits: Vec<f64> = (0..n_classes).map(|c| separation * x[(i, c)]).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for c in 0..n_classes {
            p[(i, c)] = (logits[c] - m).exp() / z;
        }
    }
    p
}

pub fn gen_behavior(g: &BehaviorGenerator) -> Result<GeneratedBehavior, SynthError> {
    if g.n_classes < 2 || g.n_features < g.n_classes {
        return Err(SynthError::Invalid("need at least 2 classes and n_features >= n_classes".into()));
    }
    if g.train_per_class == 0 || g.test_per_class == 0 {
        return Err(SynthError::Invalid("per-class counts must be positive".into()));
    }
    if !(g.pattern_noise >= 0.0 && g.pattern_noise.is_finite()) {
        return Err(SynthError::InvalidNoise(g.pattern_noise));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut draw = |per: usize| {
        let n = per * g.n_classes;
        let labels: Vec<usize> = (0..n).map(|i| i % g.n_classes).collect();
        let x = DMatrix::from_fn(n, g.n_features, |i, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if j == labels[i] {
                g.separation + z
            } else {
                z
            }
        });
        (x, labels)
    };
    let (train_x, train_y) = draw(g.train_per_class);
    let (test_x, test_y) = draw(g.test_per_class);
    let bayes = model_pattern(&bayes_posterior(&test_x, g.n_classes, g.separation), &test_y);
    let primate: Vec<f64> = bayes
        .iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(&mut rng);
            p + g.pattern_noise * z
        })
        .collect();
    let analytic_r = pearson(&bayes, &primate).unwrap_or(f64::NAN);
    Ok(GeneratedBehavior {
        train_ids: (0..train_y.len()).map(|i| format!("train{i:05}")).collect(),
        test_ids: (0..test_y.len()).map(|i| format!("test{i:05}")).collect(),
        data: BehaviorData {
            train_features: train_x,
            train_labels: train_y,
            test_features: test_x,
            test_labels: test_y,
            n_classes: g.n_classes,
            primate_pattern: primate,
            ceiling: g.ceiling,
            class_names: (0..g.n_classes).map(|c| c.to_string()).collect(),
        },
        bayes_pattern: bayes,
        analytic_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{behavior_score, neural_score, NeuralConfig};

    fn fig1b() -> CurveGenerator {
        CurveGenerator {
            spec: CurveSpec::Power { e: 0.52, a: 0.55, alpha: 0.16 },
            x_grid: logspace(-2.0, 2.0, 30),
            n_grid: vec![],
            d_grid: vec![],
            noise_sigma_log: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn noise_free_points_follow_closed_form() {
        let c = gen_curve_points(&fig1b()).unwrap();
        for p in c.curve() {
            let truth = 0.52 + 0.55 * p.x.powf(-0.16);
            assert!((p.l - truth).abs() <= 1e-12);
        }
    }

    #[test]
    fn noisy_points_are_reproducible_and_seed_dependent() {
        let mut g = fig1b();
        g.noise_sigma_log = 0.05;
        let a = gen_curve_points(&g).unwrap();
        let b = gen_curve_points(&g).unwrap();
        assert_eq!(a, b);
        g.seed = 2;
        assert_ne!(a, gen_curve_points(&g).unwrap());
    }

    #[test]
    fn joint_grid_on_subsampling_levels() {
        let g = CurveGenerator {
            spec: CurveSpec::Joint { e: 0.3, a: 1.0, alpha: 0.34, b: 2.0, beta: 0.28 },
            x_grid: vec![],
            n_grid: logspace(0.0, 2.0, 4),
            d_grid: subsampling_grid(1000).iter().map(|d| d / 1e4).collect(),
            noise_sigma_log: 0.0,
            seed: 0,
        };
        let c = gen_curve_points(&g).unwrap();
        assert_eq!(c.joint().len(), 24);
        assert_eq!(subsampling_grid(1000), vec![1e3, 3e3, 1e4, 3e4, 1e5, 3e5]);
    }

    #[test]
    fn empty_or_negative_grid_rejected() {
        let mut g = fig1b();
        g.x_grid = vec![1.0, -1.0];
        assert!(matches!(gen_curve_points(&g), Err(SynthError::InvalidGrid(_))));
    }

    #[test]
    fn attenuation_formula() {
        assert_eq!(noise_for_target_r(1.0), 0.0);
        let s = noise_for_target_r(0.8);
        assert!((1.0 / (1.0 + s * s)).sqrt() - 0.8 < 1e-15);
        let g = BenchmarkGenerator { noise_sigma: s, ..Default::default() };
        let b = gen_benchmark(&g).unwrap();
        assert!(b.theoretical_r.iter().all(|r| (r - 0.8).abs() < 1e-12));
        let b2 = gen_benchmark(&BenchmarkGenerator { seed: 9, ..g }).unwrap();
        assert_ne!(b.data.recordings, b2.data.recordings);
        assert_eq!(b.theoretical_r, b2.theoretical_r);
    }

    #[test]
    fn noiseless_benchmark_scores_near_one() {
        let b = gen_benchmark(&BenchmarkGenerator::default()).unwrap();
        assert!(b.theoretical_r.iter().all(|r| *r == 1.0));
        let r = neural_score(&b.data, &NeuralConfig::default()).unwrap();
        assert!(r.ceiled >= 0.99);
    }

    #[test]
    fn runs_reject_out_of_range_scores() {
        let pts = [CurvePoint { x: 1e15, l: 1.2 }];
        assert!(matches!(runs_for_flops_curve(&pts), Err(SynthError::ScoreOutOfRange { .. })));
        let pts = [CurvePoint { x: 6e14, l: 0.6 }];
        let runs = runs_for_flops_curve(&pts).unwrap();
        assert_eq!(runs[0].n_params, 10_000_000);
        assert!((runs[0].scores[&Region::IT] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn behavior_self_pattern_tracks_bayes() {
        let g = gen_behavior(&BehaviorGenerator::default()).unwrap();
        assert_eq!(g.analytic_r, 1.0);
        let r = behavior_score(&g.data, 0).unwrap();
        assert!((r.raw - g.analytic_r).abs() < 0.05, "{}", r.raw);
    }
}
