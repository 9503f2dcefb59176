//! Bootstrap confidence intervals for fitted parameters and curves.
//!
//! Rows (or, optionally, whole clusters of rows) are resampled with
//! replacement and refit. Each resample draws from its own ChaCha stream of
//! the seed, so results are identical however the work is scheduled.

use crate::fit::{
    fit_joint, fit_joint_from, fit_power_law, fit_power_law_from, fit_shifted_power_law,
    fit_shifted_power_law_from, AnyFit, CurvePoint, FitConfig, FitError, FitForm, FitInput, JointPoint, XKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Largest tolerated share of failed refits.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("need at least 2 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("ci level must lie in (0, 1), got {0}")]
    InvalidCiLevel(f64),
    #[error("fit on the full data failed: {0}")]
    PointFit(FitError),
    #[error("{failed} of {total} resamples failed to fit (first error: {first_error})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first_error: String,
    },
    #[error("{labels} cluster labels for {points} points")]
    ClusterLength { labels: usize, points: usize },
    #[error("form {form} does not match the data kind")]
    WrongDataKind { form: FitForm },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub ci_level: f64,
    pub seed: u64,
    /// Where to evaluate curve intervals, in raw units.
    pub curve_grid: Vec<FitInput>,
    /// Start each refit from the full-data optimum instead of the whole grid.
    #[serde(default)]
    pub warm_start: bool,
    /// Optional cluster label per point; when set, clusters are resampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<String>>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            ci_level: 0.95,
            seed: 0,
            curve_grid: Vec::new(),
            warm_start: false,
            clusters: None,
        }
    }
}

/// Points to bootstrap.
#[derive(Debug, Clone, Copy)]
pub enum BootstrapData<'a> {
    Curve { points: &'a [CurvePoint], x_kind: XKind },
    Joint(&'a [JointPoint]),
}

impl BootstrapData<'_> {
    fn len(&self) -> usize {
        match self {
            BootstrapData::Curve { points, .. } => points.len(),
            BootstrapData::Joint(p) => p.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveBand {
    #[serde(flatten)]
    pub at: FitInput,
    /// Point-estimate misalignment.
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "lo_L")]
    pub lo_l: f64,
    #[serde(rename = "hi_L")]
    pub hi_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point_estimate: AnyFit,
    pub param_ci: BTreeMap<String, Interval>,
    pub curve_ci: Vec<CurveBand>,
    pub resamples: usize,
    pub ci_level: f64,
    pub seed: u64,
    pub n_failed_resamples: usize,
}

fn fit_once(
    data: BootstrapData<'_>,
    idx: Option<&[usize]>,
    form: FitForm,
    cfg: &FitConfig,
    warm: Option<&[Vec<f64>]>,
) -> Result<AnyFit, FitError> {
    match data {
        BootstrapData::Curve { points, x_kind } => {
            let pts: Vec<CurvePoint> = match idx {
                Some(idx) => idx.iter().map(|&i| points[i]).collect(),
                None => points.to_vec(),
            };
            match (form, warm) {
                (FitForm::Power, None) => fit_power_law(&pts, cfg, x_kind).map(AnyFit::Power),
                (FitForm::Power, Some(w)) => fit_power_law_from(&pts, cfg, x_kind, w).map(AnyFit::Power),
                (FitForm::Shifted, None) => fit_shifted_power_law(&pts, cfg, x_kind).map(AnyFit::Shifted),
                (FitForm::Shifted, Some(w)) => {
                    fit_shifted_power_law_from(&pts, cfg, x_kind, w).map(AnyFit::Shifted)
                }
                (FitForm::Joint, _) => Err(FitError::WrongInputKind),
            }
        }
        BootstrapData::Joint(points) => {
            let pts: Vec<JointPoint> = match idx {
                Some(idx) => idx.iter().map(|&i| points[i]).collect(),
                None => points.to_vec(),
            };
            match (form, warm) {
                (FitForm::Joint, None) => fit_joint(&pts, cfg).map(AnyFit::Joint),
                (FitForm::Joint, Some(w)) => fit_joint_from(&pts, cfg, w).map(AnyFit::Joint),
                _ => Err(FitError::WrongInputKind),
            }
        }
    }
}

fn predict_raw(fit: &AnyFit, at: FitInput) -> Result<f64, FitError> {
    let p = match (fit, at) {
        (AnyFit::Power(f), FitInput::X { x }) => f.predict_raw(x)?,
        (AnyFit::Shifted(f), FitInput::X { x }) => f.predict_raw(x)?,
        (AnyFit::Joint(f), FitInput::ND { n, d }) => f.predict_raw(n, d)?,
        _ => return Err(FitError::WrongInputKind),
    };
    Ok(p.l)
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interval(mut values: Vec<f64>, level: f64) -> Interval {
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Interval {
        lo: percentile(&values, tail),
        hi: percentile(&values, 1.0 - tail),
    }
}

/// Row indices for resample `k`.
fn draw_indices(n: usize, clusters: Option<&[Vec<usize>]>, seed: u64, k: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    match clusters {
        None => (0..n).map(|_| rng.random_range(0..n)).collect(),
        Some(groups) => {
            let mut out = Vec::with_capacity(n);
            for _ in 0..groups.len() {
                out.extend_from_slice(&groups[rng.random_range(0..groups.len())]);
            }
            out
        }
    }
}

fn group_by_label(labels: &[String]) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        map.entry(l.as_str()).or_default().push(i);
    }
    map.into_values().collect()
}

/// Refit on bootstrap resamples and report percentile intervals.
pub fn bootstrap_fit(
    data: BootstrapData<'_>,
    form: FitForm,
    fit_cfg: &FitConfig,
    bs_cfg: &BootstrapConfig,
) -> Result<BootstrapResult, UncertaintyError> {
    if bs_cfg.resamples < 2 {
        return Err(UncertaintyError::TooFewResamples(bs_cfg.resamples));
    }
    if !(bs_cfg.ci_level > 0.0 && bs_cfg.ci_level < 1.0) {
        return Err(UncertaintyError::InvalidCiLevel(bs_cfg.ci_level));
    }
    let joint_data = matches!(data, BootstrapData::Joint(_));
    if joint_data != (form == FitForm::Joint) {
        return Err(UncertaintyError::WrongDataKind { form });
    }
    let n = data.len();
    let groups = match &bs_cfg.clusters {
        Some(labels) if labels.len() != n => {
            return Err(UncertaintyError::ClusterLength { labels: labels.len(), points: n })
        }
        Some(labels) => Some(group_by_label(labels)),
        None => None,
    };

    let point = fit_once(data, None, form, fit_cfg, None).map_err(UncertaintyError::PointFit)?;
    let warm_init = point.optimizer_params();
    let warm = if bs_cfg.warm_start && warm_init.iter().all(|v| v.is_finite()) {
        Some(vec![warm_init])
    } else {
        None
    };

    let fits: Vec<Result<AnyFit, FitError>> = (0..bs_cfg.resamples)
        .into_par_iter()
        .map(|k| {
            let idx = draw_indices(n, groups.as_deref(), bs_cfg.seed, k);
            fit_once(data, Some(&idx), form, fit_cfg, warm.as_deref())
        })
        .collect();

    let mut ok = Vec::with_capacity(fits.len());
    let mut first_error = None;
    for f in fits {
        match f {
            Ok(f) => ok.push(f),
            Err(e) => {
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    let failed = bs_cfg.resamples - ok.len();
    if failed as f64 > MAX_FAILED_FRACTION * bs_cfg.resamples as f64 || ok.len() < 2 {
        return Err(UncertaintyError::TooManyFailures {
            failed,
            total: bs_cfg.resamples,
            first_error: first_error.unwrap_or_default(),
        });
    }
    if failed > 0 {
        log::warn!("{failed} of {} resamples failed and were excluded", bs_cfg.resamples);
    }

    let names: Vec<&'static str> = point.params().iter().map(|(n, _)| *n).collect();
    let mut param_ci = BTreeMap::new();
    for (j, name) in names.iter().enumerate() {
        let values: Vec<f64> = ok.iter().map(|f| f.params()[j].1).collect();
        param_ci.insert(name.to_string(), interval(values, bs_cfg.ci_level));
    }

    let mut grid = bs_cfg.curve_grid.clone();
    grid.sort_by(|a, b| match (a, b) {
        (FitInput::X { x: p }, FitInput::X { x: q }) => p.total_cmp(q),
        (FitInput::ND { n: n1, d: d1 }, FitInput::ND { n: n2, d: d2 }) => n1.total_cmp(n2).then(d1.total_cmp(d2)),
        (FitInput::X { .. }, _) => std::cmp::Ordering::Less,
        _ => std::cmp::Ordering::Greater,
    });
    let mut curve_ci = Vec::with_capacity(grid.len());
    for at in grid {
        let l = predict_raw(&point, at).map_err(UncertaintyError::PointFit)?;
        let values: Vec<f64> = ok.iter().filter_map(|f| predict_raw(f, at).ok()).collect();
        let iv = interval(values, bs_cfg.ci_level);
        curve_ci.push(CurveBand { at, l, lo_l: iv.lo, hi_l: iv.hi });
    }

    Ok(BootstrapResult {
        point_estimate: point,
        param_ci,
        curve_ci,
        resamples: bs_cfg.resamples,
        ci_level: bs_cfg.ci_level,
        seed: bs_cfg.seed,
        n_failed_resamples: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::Rescale;
    use crate::synth::{gen_curve_points, logspace, CurveGenerator, CurveSpec};

    fn points(sigma: f64, seed: u64) -> Vec<CurvePoint> {
        let g = CurveGenerator {
            spec: CurveSpec::Power { e: 0.52, a: 0.55, alpha: 0.16 },
            x_grid: logspace(-3.0, 3.0, 30),
            n_grid: vec![],
            d_grid: vec![],
            noise_sigma_log: sigma,
            seed,
        };
        gen_curve_points(&g).unwrap().curve().to_vec()
    }

    fn cfg() -> FitConfig {
        FitConfig {
            rescale: Rescale::identity(),
            ..Default::default()
        }
    }

    fn bs(resamples: usize, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            resamples,
            seed,
            curve_grid: logspace(-3.0, 3.0, 5).into_iter().map(|x| FitInput::X { x }).collect(),
            warm_start: true,
            ..Default::default()
        }
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.125), 1.5);
        assert_eq!(percentile(&v, 1.0), 5.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = points(0.05, 3);
        let data = BootstrapData::Curve { points: &p, x_kind: XKind::Flops };
        let a = bootstrap_fit(data, FitForm::Power, &cfg(), &bs(40, 7)).unwrap();
        let b = bootstrap_fit(data, FitForm::Power, &cfg(), &bs(40, 7)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = bootstrap_fit(data, FitForm::Power, &cfg(), &bs(40, 8)).unwrap();
        assert_ne!(a.param_ci, c.param_ci);
    }

    #[test]
    fn noise_free_intervals_collapse() {
        let p = points(0.0, 0);
        let data = BootstrapData::Curve { points: &p, x_kind: XKind::Flops };
        let r = bootstrap_fit(data, FitForm::Power, &cfg(), &bs(30, 1)).unwrap();
        for (name, iv) in &r.param_ci {
            assert!(iv.hi - iv.lo < 1e-6, "{name}: {iv:?}");
        }
        for b in &r.curve_ci {
            assert!(b.hi_l - b.lo_l < 1e-6);
            assert!(b.lo_l <= b.hi_l);
        }
        assert_eq!(r.n_failed_resamples, 0);
    }

    #[test]
    fn curve_bands_are_ordered_and_valid() {
        let p = points(0.05, 11);
        let data = BootstrapData::Curve { points: &p, x_kind: XKind::Flops };
        let mut c = bs(30, 2);
        c.curve_grid.reverse();
        let r = bootstrap_fit(data, FitForm::Power, &cfg(), &c).unwrap();
        let xs: Vec<f64> = r
            .curve_ci
            .iter()
            .map(|b| match b.at {
                FitInput::X { x } => x,
                _ => unreachable!(),
            })
            .collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        assert!(r.curve_ci.iter().all(|b| b.lo_l <= b.hi_l));
        assert!(r.param_ci.values().all(|iv| iv.lo <= iv.hi));
    }

    #[test]
    fn clusters_resample_whole_groups() {
        let idx = draw_indices(6, Some(&[vec![0, 1, 2], vec![3, 4, 5]]), 5, 0);
        assert_eq!(idx.len(), 6);
        assert!(idx[..3] == [0, 1, 2] || idx[..3] == [3, 4, 5]);
        let p = points(0.02, 4);
        let labels: Vec<String> = (0..p.len()).map(|i| format!("g{}", i / 3)).collect();
        let mut c = bs(20, 3);
        c.clusters = Some(labels);
        let data = BootstrapData::Curve { points: &p, x_kind: XKind::Flops };
        assert!(bootstrap_fit(data, FitForm::Power, &cfg(), &c).is_ok());
        c.clusters = Some(vec!["a".into()]);
        assert!(matches!(
            bootstrap_fit(data, FitForm::Power, &cfg(), &c),
            Err(UncertaintyError::ClusterLength { .. })
        ));
    }

    #[test]
    fn validation() {
        let p = points(0.0, 0);
        let data = BootstrapData::Curve { points: &p, x_kind: XKind::Flops };
        assert_eq!(
            bootstrap_fit(data, FitForm::Power, &cfg(), &bs(1, 0)),
            Err(UncertaintyError::TooFewResamples(1))
        );
        let mut c = bs(10, 0);
        c.ci_level = 1.0;
        assert!(matches!(
            bootstrap_fit(data, FitForm::Power, &cfg(), &c),
            Err(UncertaintyError::InvalidCiLevel(_))
        ));
        assert!(matches!(
            bootstrap_fit(data, FitForm::Joint, &cfg(), &bs(10, 0)),
            Err(UncertaintyError::WrongDataKind { .. })
        ));
    }

    #[test]
    fn too_many_failures_abort() {
        // Four points, one x value repeated: many resamples have < 3 distinct x.
        let p = vec![
            CurvePoint { x: 1.0, l: 0.9 },
            CurvePoint { x: 1.0, l: 0.9 },
            CurvePoint { x: 2.0, l: 0.8 },
            CurvePoint { x: 4.0, l: 0.7 },
        ];
        let data = BootstrapData::Curve { points: &p, x_kind: XKind::Flops };
        assert!(matches!(
            bootstrap_fit(data, FitForm::Power, &cfg(), &bs(50, 0)),
            Err(UncertaintyError::TooManyFailures { .. })
        ));
    }
}
