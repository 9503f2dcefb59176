//! Parametric misalignment curves and their robust fits.
//!
//! Three forms are supported, all fit on misalignment `L` in rescaled units:
//!
//! - power law: `L = E + A X^-alpha`
//! - shifted power law: `L = E + A (X + 10^lambda)^-alpha`, finite at `X = 0`
//! - joint: `L = E + A N^-alpha + B D^-beta`
//!
//! Every fit minimizes the sum of Huber penalties on log residuals, where the
//! prediction `log L` is written as a log-sum-exp of log-space terms. The
//! parameters `(e, a, b)` are the logs of `(E, A, B)`. Each fit runs BFGS from
//! every point of an initialization grid and keeps the lowest objective.

mod objective;

pub use objective::{JointObjective, PowerLawObjective, ShiftedObjective};

use crate::records::{RecordsError, RunTable, Target};
use crate::numerics::{minimize, HuberParams, MinimizeResult, NumericsError, Objective, OptimizerConfig};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Misalignment values at or below this are clamped before taking logs.
pub const MIN_MISALIGNMENT: f64 = 1e-6;
/// A fit with `A` or `|alpha|` below this has no usable power-law component.
pub const DEGENERATE_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} distinct x values, got {got}")]
    TooFewDistinct { need: usize, got: usize },
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("insufficient span in {axis}: {got} distinct value(s), need 2")]
    InsufficientSpan { axis: &'static str, got: usize },
    #[error("input {what} at index {index} is not positive and finite ({value})")]
    InvalidInput { what: &'static str, index: usize, value: f64 },
    #[error("every grid initialization diverged")]
    AllDiverged,
    #[error("initialization grid is empty")]
    EmptyGrid,
    #[error("input kind does not match the fitted form")]
    WrongInputKind,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Which run quantity a single-variable curve is fit against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XKind {
    Flops,
    Params,
    Samples,
}

impl fmt::Display for XKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XKind::Flops => "flops",
            XKind::Params => "params",
            XKind::Samples => "samples",
        })
    }
}

impl FromStr for XKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flops" | "C" => Ok(XKind::Flops),
            "params" | "N" => Ok(XKind::Params),
            "samples" | "D" => Ok(XKind::Samples),
            other => Err(format!("unknown x kind {other:?}")),
        }
    }
}

/// Divisors applied to raw counts before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub c_scale: f64,
    pub n_scale: f64,
    pub d_scale: f64,
}

impl Default for Rescale {
    fn default() -> Self {
        Rescale {
            c_scale: 1e13,
            n_scale: 1e5,
            d_scale: 1e4,
        }
    }
}

impl Rescale {
    pub fn identity() -> Self {
        Rescale {
            c_scale: 1.0,
            n_scale: 1.0,
            d_scale: 1.0,
        }
    }

    pub fn scale_for(&self, kind: XKind) -> f64 {
        match kind {
            XKind::Flops => self.c_scale,
            XKind::Params => self.n_scale,
            XKind::Samples => self.d_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub huber: HuberParams,
    pub grid_e: Vec<f64>,
    pub grid_a: Vec<f64>,
    pub grid_alpha: Vec<f64>,
    pub grid_lambda: Vec<f64>,
    pub rescale: Rescale,
    pub optimizer: OptimizerConfig,
    /// Hold lambda at its grid value instead of optimizing it.
    pub freeze_lambda: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            huber: HuberParams::default(),
            grid_e: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            grid_a: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            grid_alpha: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            grid_lambda: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            rescale: Rescale::default(),
            optimizer: OptimizerConfig::default(),
            freeze_lambda: false,
        }
    }
}

impl FitConfig {
    fn check_grids(&self) -> Result<(), FitError> {
        if self.grid_e.is_empty() || self.grid_a.is_empty() || self.grid_alpha.is_empty() {
            return Err(FitError::EmptyGrid);
        }
        Ok(())
    }

    /// `(e, a, alpha)` initializations in grid order (e outermost).
    pub fn power_grid(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for &e in &self.grid_e {
            for &a in &self.grid_a {
                for &al in &self.grid_alpha {
                    out.push(vec![e, a, al]);
                }
            }
        }
        out
    }

    pub fn shifted_grid(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for p in self.power_grid() {
            for &l in &self.grid_lambda {
                let mut q = p.clone();
                q.push(l);
                out.push(q);
            }
        }
        out
    }

    /// `(e, a, alpha, b, beta)` initializations; `b` and `beta` reuse the a and alpha grids.
    pub fn joint_grid(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for p in self.power_grid() {
            for &b in &self.grid_a {
                for &be in &self.grid_alpha {
                    out.push(vec![p[0], p[1], p[2], b, be]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    pub n: f64,
    pub d: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    pub objective: f64,
    pub init_used: Vec<f64>,
    pub degenerate: bool,
    pub converged: bool,
    /// Divisor applied to raw X before fitting.
    pub x_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedPowerLawFit {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub objective: f64,
    pub init_used: Vec<f64>,
    pub degenerate: bool,
    pub converged: bool,
    pub x_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFit {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub beta: f64,
    pub objective: f64,
    pub init_used: Vec<f64>,
    pub degenerate: bool,
    pub converged: bool,
    pub n_scale: f64,
    pub d_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Misalignment.
    pub l: f64,
    /// Alignment, `1 - l`.
    pub s: f64,
}

impl Prediction {
    fn from_l(l: f64) -> Self {
        Prediction { l, s: 1.0 - l }
    }
}

fn check_positive(what: &'static str, index: usize, value: f64) -> Result<(), FitError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FitError::InvalidInput { what, index, value })
    }
}

impl PowerLawFit {
    /// Misalignment at `x`, in the fit's rescaled units.
    pub fn predict(&self, x: f64) -> Result<Prediction, FitError> {
        check_positive("x", 0, x)?;
        Ok(Prediction::from_l(self.e + self.a * x.powf(-self.alpha)))
    }

    /// Misalignment at a raw (unscaled) `x`.
    pub fn predict_raw(&self, x: f64) -> Result<Prediction, FitError> {
        self.predict(x / self.x_scale)
    }

    /// Same curve expressed in raw units: `A_raw = A * s^alpha`.
    pub fn in_raw_units(&self) -> PowerLawFit {
        PowerLawFit {
            a: self.a * self.x_scale.powf(self.alpha),
            x_scale: 1.0,
            ..self.clone()
        }
    }
}

impl ShiftedPowerLawFit {
    /// Defined for `x >= 0`; at `x = 0` this is `E + A 10^(-lambda alpha)`.
    pub fn predict(&self, x: f64) -> Result<Prediction, FitError> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(FitError::InvalidInput { what: "x", index: 0, value: x });
        }
        Ok(Prediction::from_l(
            self.e + self.a * (x + 10f64.powf(self.lambda)).powf(-self.alpha),
        ))
    }

    pub fn predict_raw(&self, x: f64) -> Result<Prediction, FitError> {
        self.predict(x / self.x_scale)
    }
}

impl JointFit {
    pub fn predict(&self, n: f64, d: f64) -> Result<Prediction, FitError> {
        check_positive("n", 0, n)?;
        check_positive("d", 0, d)?;
        Ok(Prediction::from_l(
            self.e + self.a * n.powf(-self.alpha) + self.b * d.powf(-self.beta),
        ))
    }

    pub fn predict_raw(&self, n: f64, d: f64) -> Result<Prediction, FitError> {
        self.predict(n / self.n_scale, d / self.d_scale)
    }
}

/// Input to [`AnyFit::predict`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitInput {
    X { x: f64 },
    ND { n: f64, d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitForm {
    Power,
    Shifted,
    Joint,
}

impl fmt::Display for FitForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitForm::Power => "power",
            FitForm::Shifted => "shifted",
            FitForm::Joint => "joint",
        })
    }
}

impl FromStr for FitForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power" => Ok(FitForm::Power),
            "shifted" => Ok(FitForm::Shifted),
            "joint" => Ok(FitForm::Joint),
            other => Err(format!("unknown form {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum AnyFit {
    Power(PowerLawFit),
    Shifted(ShiftedPowerLawFit),
    Joint(JointFit),
}

impl AnyFit {
    pub fn form(&self) -> FitForm {
        match self {
            AnyFit::Power(_) => FitForm::Power,
            AnyFit::Shifted(_) => FitForm::Shifted,
            AnyFit::Joint(_) => FitForm::Joint,
        }
    }

    /// Evaluate in rescaled units.
    pub fn predict(&self, input: FitInput) -> Result<Prediction, FitError> {
        match (self, input) {
            (AnyFit::Power(f), FitInput::X { x }) => f.predict(x),
            (AnyFit::Shifted(f), FitInput::X { x }) => f.predict(x),
            (AnyFit::Joint(f), FitInput::ND { n, d }) => f.predict(n, d),
            _ => Err(FitError::WrongInputKind),
        }
    }

    /// Named parameters in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match self {
            AnyFit::Power(f) => vec![("E", f.e), ("A", f.a), ("alpha", f.alpha)],
            AnyFit::Shifted(f) => vec![("E", f.e), ("A", f.a), ("alpha", f.alpha), ("lambda", f.lambda)],
            AnyFit::Joint(f) => vec![
                ("E", f.e),
                ("A", f.a),
                ("alpha", f.alpha),
                ("B", f.b),
                ("beta", f.beta),
            ],
        }
    }

    pub fn objective(&self) -> f64 {
        match self {
            AnyFit::Power(f) => f.objective,
            AnyFit::Shifted(f) => f.objective,
            AnyFit::Joint(f) => f.objective,
        }
    }

    pub fn degenerate(&self) -> bool {
        match self {
            AnyFit::Power(f) => f.degenerate,
            AnyFit::Shifted(f) => f.degenerate,
            AnyFit::Joint(f) => f.degenerate,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            AnyFit::Power(f) => f.converged,
            AnyFit::Shifted(f) => f.converged,
            AnyFit::Joint(f) => f.converged,
        }
    }

    pub fn init_used(&self) -> &[f64] {
        match self {
            AnyFit::Power(f) => &f.init_used,
            AnyFit::Shifted(f) => &f.init_used,
            AnyFit::Joint(f) => &f.init_used,
        }
    }

    /// Log-space parameter vector as seen by the optimizer.
    pub fn optimizer_params(&self) -> Vec<f64> {
        match self {
            AnyFit::Power(f) => vec![f.e.ln(), f.a.ln(), f.alpha],
            AnyFit::Shifted(f) => vec![f.e.ln(), f.a.ln(), f.alpha, f.lambda],
            AnyFit::Joint(f) => vec![f.e.ln(), f.a.ln(), f.alpha, f.b.ln(), f.beta],
        }
    }
}

fn log_misalignment(l: f64, index: usize) -> Result<f64, FitError> {
    if !l.is_finite() {
        return Err(FitError::InvalidInput { what: "L", index, value: l });
    }
    if l <= MIN_MISALIGNMENT {
        warn!("misalignment {l} at index {index} clamped to {MIN_MISALIGNMENT}");
        return Ok(MIN_MISALIGNMENT.ln());
    }
    Ok(l.ln())
}

fn count_distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

struct Best {
    result: MinimizeResult,
    init: Vec<f64>,
}

/// Run BFGS from every initialization and keep the lowest objective.
///
/// Ties on the objective go to the smaller fitted `alpha` (coordinate
/// `alpha_index`), then to the earlier grid point. Results are gathered in grid
/// order before the reduction, so parallel and serial runs agree.
fn best_of<O: Objective + Sync>(
    objective: &O,
    inits: &[Vec<f64>],
    cfg: &OptimizerConfig,
    alpha_index: usize,
) -> Result<Best, FitError> {
    if inits.is_empty() {
        return Err(FitError::EmptyGrid);
    }
    cfg.validate()?;
    let results: Vec<Option<MinimizeResult>> = inits
        .par_iter()
        .map(|x0| {
            minimize(objective, x0, cfg)
                .ok()
                .filter(|r| r.f_star.is_finite() && r.x_star.iter().all(|v| v.is_finite()))
        })
        .collect();
    let mut best: Option<(usize, &MinimizeResult)> = None;
    for (i, r) in results.iter().enumerate() {
        let Some(r) = r else { continue };
        let better = match best {
            None => true,
            Some((_, b)) => {
                r.f_star < b.f_star
                    || (r.f_star == b.f_star && r.x_star[alpha_index] < b.x_star[alpha_index])
            }
        };
        if better {
            best = Some((i, r));
        }
    }
    let (i, r) = best.ok_or(FitError::AllDiverged)?;
    Ok(Best {
        result: r.clone(),
        init: inits[i].clone(),
    })
}

fn prepare_curve(points: &[CurvePoint], scale: f64) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints { need: 3, got: points.len() });
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut log_l = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        check_positive("x", i, p.x)?;
        xs.push(p.x / scale);
        log_l.push(log_misalignment(p.l, i)?);
    }
    let distinct = count_distinct(xs.iter().copied());
    if distinct < 3 {
        return Err(FitError::TooFewDistinct { need: 3, got: distinct });
    }
    Ok((xs, log_l))
}

fn is_degenerate(a: f64, alpha: f64) -> bool {
    a < DEGENERATE_THRESHOLD || alpha.abs() < DEGENERATE_THRESHOLD
}

/// Fit `L = E + A X^-alpha` to raw `(X, L)` points.
///
/// `X` is divided by the rescale factor for `x_kind`. When the fitted exponent
/// is numerically zero the power-law term is a constant; it is folded into `E`
/// so flat data reports `A = 0`.
pub fn fit_power_law(points: &[CurvePoint], cfg: &FitConfig, x_kind: XKind) -> Result<PowerLawFit, FitError> {
    cfg.check_grids()?;
    fit_power_law_from(points, cfg, x_kind, &cfg.power_grid())
}

/// [`fit_power_law`] from an explicit list of `(e, a, alpha)` initializations.
pub fn fit_power_law_from(
    points: &[CurvePoint],
    cfg: &FitConfig,
    x_kind: XKind,
    inits: &[Vec<f64>],
) -> Result<PowerLawFit, FitError> {
    let x_scale = cfg.rescale.scale_for(x_kind);
    let (xs, log_l) = prepare_curve(points, x_scale)?;
    let obj = PowerLawObjective {
        log_x: xs.iter().map(|x| x.ln()).collect(),
        log_l,
        huber: cfg.huber,
    };
    let best = best_of(&obj, inits, &cfg.optimizer, 2)?;
    let p = &best.result.x_star;
    let (mut e, mut a, alpha) = (p[0].exp(), p[1].exp(), p[2]);
    let degenerate = is_degenerate(a, alpha);
    let mut objective = best.result.f_star;
    if alpha.abs() < DEGENERATE_THRESHOLD {
        e += a;
        a = 0.0;
        objective = obj.value(&[e.ln(), f64::NEG_INFINITY, alpha]);
    }
    Ok(PowerLawFit {
        e,
        a,
        alpha,
        objective,
        init_used: best.init,
        degenerate,
        converged: best.result.converged,
        x_scale,
    })
}

/// Fit `L = E + A (X + 10^lambda)^-alpha`.
///
/// With `freeze_lambda`, lambda stays at its grid value for each start and the
/// best `(grid lambda, e, a, alpha)` combination wins.
pub fn fit_shifted_power_law(
    points: &[CurvePoint],
    cfg: &FitConfig,
    x_kind: XKind,
) -> Result<ShiftedPowerLawFit, FitError> {
    cfg.check_grids()?;
    if cfg.grid_lambda.is_empty() {
        return Err(FitError::EmptyGrid);
    }
    fit_shifted_power_law_from(points, cfg, x_kind, &cfg.shifted_grid())
}

pub fn fit_shifted_power_law_from(
    points: &[CurvePoint],
    cfg: &FitConfig,
    x_kind: XKind,
    inits: &[Vec<f64>],
) -> Result<ShiftedPowerLawFit, FitError> {
    let x_scale = cfg.rescale.scale_for(x_kind);
    let (xs, log_l) = prepare_curve(points, x_scale)?;
    let base = ShiftedObjective {
        x: xs,
        log_l,
        huber: cfg.huber,
        frozen_lambda: None,
    };
    let (best, lambda) = if cfg.freeze_lambda {
        // Group starts by lambda; each group optimizes (e, a, alpha) only.
        let mut lambdas: Vec<f64> = Vec::new();
        for p in inits {
            if !lambdas.contains(&p[3]) {
                lambdas.push(p[3]);
            }
        }
        let mut winner: Option<(Best, f64)> = None;
        for lam in lambdas {
            let obj = ShiftedObjective {
                frozen_lambda: Some(lam),
                ..base.clone()
            };
            let sub: Vec<Vec<f64>> = inits
                .iter()
                .filter(|p| p[3] == lam)
                .map(|p| p[..3].to_vec())
                .collect();
            let Ok(mut b) = best_of(&obj, &sub, &cfg.optimizer, 2) else { continue };
            b.init.push(lam);
            let replace = match &winner {
                None => true,
                Some((w, _)) => {
                    b.result.f_star < w.result.f_star
                        || (b.result.f_star == w.result.f_star && b.result.x_star[2] < w.result.x_star[2])
                }
            };
            if replace {
                winner = Some((b, lam));
            }
        }
        winner.ok_or(FitError::AllDiverged)?
    } else {
        let b = best_of(&base, inits, &cfg.optimizer, 2)?;
        let lam = b.result.x_star[3];
        (b, lam)
    };
    let p = &best.result.x_star;
    let (mut e, mut a, alpha) = (p[0].exp(), p[1].exp(), p[2]);
    let degenerate = is_degenerate(a, alpha);
    let mut objective = best.result.f_star;
    if alpha.abs() < DEGENERATE_THRESHOLD {
        e += a;
        a = 0.0;
        let obj = ShiftedObjective {
            frozen_lambda: Some(lambda),
            ..base
        };
        objective = obj.value(&[e.ln(), f64::NEG_INFINITY, alpha]);
    }
    Ok(ShiftedPowerLawFit {
        e,
        a,
        alpha,
        lambda,
        objective,
        init_used: best.init,
        degenerate,
        converged: best.result.converged,
        x_scale,
    })
}

/// Fit `L = E + A N^-alpha + B D^-beta` to raw `(N, D, L)` points.
pub fn fit_joint(points: &[JointPoint], cfg: &FitConfig) -> Result<JointFit, FitError> {
    cfg.check_grids()?;
    fit_joint_from(points, cfg, &cfg.joint_grid())
}

pub fn fit_joint_from(points: &[JointPoint], cfg: &FitConfig, inits: &[Vec<f64>]) -> Result<JointFit, FitError> {
    if points.len() < 5 {
        return Err(FitError::TooFewPoints { need: 5, got: points.len() });
    }
    let (ns, ds) = (cfg.rescale.n_scale, cfg.rescale.d_scale);
    let mut log_n = Vec::with_capacity(points.len());
    let mut log_d = Vec::with_capacity(points.len());
    let mut log_l = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        check_positive("n", i, p.n)?;
        check_positive("d", i, p.d)?;
        log_n.push((p.n / ns).ln());
        log_d.push((p.d / ds).ln());
        log_l.push(log_misalignment(p.l, i)?);
    }
    let dn = count_distinct(log_n.iter().copied());
    if dn < 2 {
        return Err(FitError::InsufficientSpan { axis: "N", got: dn });
    }
    let dd = count_distinct(log_d.iter().copied());
    if dd < 2 {
        return Err(FitError::InsufficientSpan { axis: "D", got: dd });
    }
    let obj = JointObjective {
        log_n,
        log_d,
        log_l,
        huber: cfg.huber,
    };
    let best = best_of(&obj, inits, &cfg.optimizer, 2)?;
    let p = &best.result.x_star;
    let (e, a, alpha, b, beta) = (p[0].exp(), p[1].exp(), p[2], p[3].exp(), p[4]);
    Ok(JointFit {
        e,
        a,
        alpha,
        b,
        beta,
        objective: best.result.f_star,
        init_used: best.init,
        degenerate: is_degenerate(a, alpha) || is_degenerate(b, beta),
        converged: best.result.converged,
        n_scale: ns,
        d_scale: ds,
    })
}

/// Alignment gain of a region's curve, `A * 10^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGain {
    pub gain: f64,
    pub degenerate: bool,
}

/// `A * 10^alpha`, or zero with the degenerate flag set when the fit has no
/// power-law component.
pub fn region_gain(fit: &PowerLawFit) -> RegionGain {
    if fit.degenerate || fit.a == 0.0 {
        RegionGain { gain: 0.0, degenerate: true }
    } else {
        RegionGain {
            gain: fit.a * 10f64.powf(fit.alpha),
            degenerate: false,
        }
    }
}

/// `(X, L)` points from a run table, with `L = 1 - S` for `target`.
pub fn curve_points(table: &RunTable, x_kind: XKind, target: Target) -> Result<Vec<CurvePoint>, RecordsError> {
    table
        .rows
        .iter()
        .map(|r| {
            let x = match x_kind {
                XKind::Flops => r.flops,
                XKind::Params => r.n_params as f64,
                XKind::Samples => r.samples_seen as f64,
            };
            Ok(CurvePoint { x, l: target.score(r)?.l })
        })
        .collect()
}

/// `(N, D, L)` points from a run table.
pub fn joint_points(table: &RunTable, target: Target) -> Result<Vec<JointPoint>, RecordsError> {
    table
        .rows
        .iter()
        .map(|r| {
            Ok(JointPoint {
                n: r.n_params as f64,
                d: r.samples_seen as f64,
                l: target.score(r)?.l,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect()
    }

    fn power_points(e: f64, a: f64, alpha: f64, xs: &[f64]) -> Vec<CurvePoint> {
        xs.iter()
            .map(|&x| CurvePoint { x, l: e + a * x.powf(-alpha) })
            .collect()
    }

    fn unscaled() -> FitConfig {
        FitConfig {
            rescale: Rescale::identity(),
            ..FitConfig::default()
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn recovers_saturating_neural_curve() {
        let pts = power_points(0.52, 0.55, 0.16, &logspace(-2.0, 2.0, 30));
        let f = fit_power_law(&pts, &unscaled(), XKind::Flops).unwrap();
        assert!(rel(f.e, 0.52) < 0.01, "{f:?}");
        assert!(rel(f.a, 0.55) < 0.01, "{f:?}");
        assert!(rel(f.alpha, 0.16) < 0.01, "{f:?}");
        assert!(!f.degenerate);
    }

    #[test]
    fn recovers_non_saturating_behavior_curve() {
        let pts = power_points(0.0, 1.4, 0.06, &logspace(-2.0, 2.0, 30));
        let f = fit_power_law(&pts, &unscaled(), XKind::Flops).unwrap();
        assert!(f.e < 1e-3, "{f:?}");
        assert!(rel(f.a, 1.4) < 0.01, "{f:?}");
        assert!(rel(f.alpha, 0.06) < 0.01, "{f:?}");
    }

    #[test]
    fn flat_data_is_degenerate() {
        let pts: Vec<CurvePoint> = logspace(-2.0, 2.0, 20)
            .into_iter()
            .map(|x| CurvePoint { x, l: 0.3 })
            .collect();
        let f = fit_power_law(&pts, &unscaled(), XKind::Flops).unwrap();
        assert!(f.degenerate, "{f:?}");
        assert!((f.e - 0.3).abs() < 1e-3, "{f:?}");
        assert!(f.a < 1e-3, "{f:?}");
        assert_eq!(region_gain(&f).gain, 0.0);
    }

    #[test]
    fn too_few_distinct_x() {
        let pts = vec![
            CurvePoint { x: 1.0, l: 0.5 },
            CurvePoint { x: 1.0, l: 0.4 },
            CurvePoint { x: 2.0, l: 0.3 },
            CurvePoint { x: 2.0, l: 0.3 },
        ];
        assert!(matches!(
            fit_power_law(&pts, &unscaled(), XKind::Flops),
            Err(FitError::TooFewDistinct { got: 2, .. })
        ));
    }

    #[test]
    fn non_positive_x_rejected() {
        let mut pts = power_points(0.5, 1.0, 0.5, &logspace(0.0, 2.0, 5));
        pts[2].x = 0.0;
        assert!(matches!(
            fit_power_law(&pts, &unscaled(), XKind::Flops),
            Err(FitError::InvalidInput { index: 2, .. })
        ));
    }

    #[test]
    fn tiny_misalignment_is_clamped_not_rejected() {
        let mut pts = power_points(0.1, 1.0, 0.5, &logspace(0.0, 2.0, 10));
        pts[9].l = 0.0;
        assert!(fit_power_law(&pts, &unscaled(), XKind::Flops).is_ok());
    }

    #[test]
    fn shifted_recovery() {
        let xs = logspace(0.0, 5.0, 40);
        let pts: Vec<CurvePoint> = xs
            .iter()
            .map(|&x| CurvePoint { x, l: 0.5 + 2.0 * (x + 10.0).powf(-0.5) })
            .collect();
        let f = fit_shifted_power_law(&pts, &unscaled(), XKind::Samples).unwrap();
        assert!(rel(f.e, 0.5) < 0.02, "{f:?}");
        assert!(rel(f.a, 2.0) < 0.02, "{f:?}");
        assert!(rel(f.alpha, 0.5) < 0.02, "{f:?}");
        assert!(rel(f.lambda, 1.0) < 0.02, "{f:?}");
    }

    #[test]
    fn shifted_full_grid_no_worse_than_restricted() {
        let xs = logspace(0.0, 4.0, 25);
        let pts: Vec<CurvePoint> = xs
            .iter()
            .map(|&x| CurvePoint { x, l: 0.4 + 1.5 * (x + 30.0).powf(-0.4) * (1.0 + 0.01 * (x.ln()).sin()) })
            .collect();
        let full = fit_shifted_power_law(&pts, &unscaled(), XKind::Samples).unwrap();
        let restricted_cfg = FitConfig {
            grid_lambda: vec![0.0],
            ..unscaled()
        };
        let restricted = fit_shifted_power_law(&pts, &restricted_cfg, XKind::Samples).unwrap();
        assert!(full.objective <= restricted.objective);
    }

    #[test]
    fn frozen_lambda_stays_on_grid() {
        let xs = logspace(0.0, 4.0, 25);
        let pts: Vec<CurvePoint> = xs
            .iter()
            .map(|&x| CurvePoint { x, l: 0.5 + 2.0 * (x + 10f64.powf(1.2)).powf(-0.5) })
            .collect();
        let cfg = FitConfig {
            freeze_lambda: true,
            ..unscaled()
        };
        let frozen = fit_shifted_power_law(&pts, &cfg, XKind::Samples).unwrap();
        assert!(cfg.grid_lambda.contains(&frozen.lambda));
        let free = fit_shifted_power_law(&pts, &unscaled(), XKind::Samples).unwrap();
        assert!(free.objective <= frozen.objective);
    }

    #[test]
    fn shifted_prediction_at_zero() {
        let f = ShiftedPowerLawFit {
            e: 0.5,
            a: 2.0,
            alpha: 0.5,
            lambda: 3.0,
            objective: 0.0,
            init_used: vec![],
            degenerate: false,
            converged: true,
            x_scale: 1.0,
        };
        let p = f.predict(0.0).unwrap();
        assert!((p.l - (0.5 + 2.0 * 10f64.powf(-1.5))).abs() < 1e-15);
    }

    #[test]
    fn prediction_examples() {
        let f = PowerLawFit {
            e: 0.52,
            a: 0.55,
            alpha: 0.16,
            objective: 0.0,
            init_used: vec![],
            degenerate: false,
            converged: true,
            x_scale: 1e13,
        };
        let p = f.predict(1.0).unwrap();
        assert!((p.l - 1.07).abs() < 1e-12);
        assert!((p.s + 0.07).abs() < 1e-12);
        assert!(f.predict(0.0).is_err());
        assert!((f.predict_raw(1e13).unwrap().l - 1.07).abs() < 1e-12);
        let g = region_gain(&f);
        assert!((g.gain - 0.55 * 10f64.powf(0.16)).abs() < 1e-15);
        assert!((g.gain - 0.7950).abs() < 1e-4);
    }

    #[test]
    fn behavioral_curve_tends_to_full_alignment() {
        let f = PowerLawFit {
            e: 0.0,
            a: 1.4,
            alpha: 0.06,
            objective: 0.0,
            init_used: vec![],
            degenerate: false,
            converged: true,
            x_scale: 1.0,
        };
        let s: Vec<f64> = [1e3, 1e30, 1e300].iter().map(|&x| f.predict(x).unwrap().s).collect();
        assert!(s[0] < s[1] && s[1] < s[2]);
        assert!(s[2] > 0.98);
    }

    #[test]
    fn unit_gain() {
        let mut f = PowerLawFit {
            e: 0.1,
            a: 1.0,
            alpha: 0.0,
            objective: 0.0,
            init_used: vec![],
            degenerate: false,
            converged: true,
            x_scale: 1.0,
        };
        // Flagged degenerate because alpha is zero; the raw formula still gives 1.
        assert_eq!(f.a * 10f64.powf(f.alpha), 1.0);
        f.degenerate = true;
        assert_eq!(region_gain(&f), RegionGain { gain: 0.0, degenerate: true });
    }

    #[test]
    fn joint_recovery() {
        let mut pts = Vec::new();
        for n in logspace(-1.0, 3.0, 10) {
            for d in logspace(-1.0, 3.0, 10) {
                pts.push(JointPoint { n, d, l: 0.3 + n.powf(-0.34) + 2.0 * d.powf(-0.28) });
            }
        }
        let f = fit_joint(&pts, &unscaled()).unwrap();
        for (got, want) in [(f.e, 0.3), (f.a, 1.0), (f.alpha, 0.34), (f.b, 2.0), (f.beta, 0.28)] {
            assert!(rel(got, want) < 0.02, "{f:?}");
        }
    }

    #[test]
    fn joint_needs_span() {
        let pts: Vec<JointPoint> = (0..6)
            .map(|i| JointPoint { n: 5.0, d: 1.0 + i as f64, l: 0.5 })
            .collect();
        assert!(matches!(
            fit_joint(&pts, &unscaled()),
            Err(FitError::InsufficientSpan { axis: "N", .. })
        ));
    }

    #[test]
    fn grids_have_expected_sizes() {
        let cfg = FitConfig::default();
        assert_eq!(cfg.power_grid().len(), 150);
        assert_eq!(cfg.shifted_grid().len(), 750);
        assert_eq!(cfg.joint_grid().len(), 4500);
    }

    #[test]
    fn any_fit_rejects_mismatched_input() {
        let f = AnyFit::Power(PowerLawFit {
            e: 0.1,
            a: 1.0,
            alpha: 0.5,
            objective: 0.0,
            init_used: vec![],
            degenerate: false,
            converged: true,
            x_scale: 1.0,
        });
        assert_eq!(f.predict(FitInput::ND { n: 1.0, d: 1.0 }), Err(FitError::WrongInputKind));
        assert!(f.predict(FitInput::X { x: 4.0 }).is_ok());
    }
}
