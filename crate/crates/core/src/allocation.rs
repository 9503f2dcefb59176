//! Compute model `C = m (N D)^n` and compute-optimal allocations.
//!
//! All arithmetic happens in the rescaled units the joint fit was made in.
//! [`ComputeModel`] remembers its scales so a budget in raw FLOPs can be
//! converted once at the boundary, and results converted back with
//! [`AllocationResult::in_raw_units`].

use crate::fit::{FitError, JointFit, Rescale};
use crate::numerics::{loglog_linreg, NumericsError};
use crate::records::RunTable;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("need at least 2 runs with distinct N*D products, got {0}")]
    DegenerateProducts(usize),
    #[error("joint fit is degenerate; allocation is undefined")]
    DegenerateFit,
    #[error("alpha + beta is zero")]
    ZeroExponentSum,
    #[error("G is undefined: {0}")]
    UndefinedG(&'static str),
    #[error("budget must be positive and finite, got {0}")]
    InvalidBudget(f64),
    #[error("brute-force grid needs at least 100 points, got {0}")]
    GridTooSmall(usize),
    #[error("compute model is in different N/D units than the fit")]
    UnitMismatch,
    #[error("compute model needs m > 0 and n > 0, got m={m}, n={n}")]
    InvalidComputeModel { m: f64, n: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// `C = m (N D)^n`, in the units given by the scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeModel {
    pub m: f64,
    pub n: f64,
    pub r2: f64,
    pub n_points: usize,
    #[serde(default = "one")]
    pub c_scale: f64,
    #[serde(default = "one")]
    pub n_scale: f64,
    #[serde(default = "one")]
    pub d_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ComputeModel {
    /// A model with no fit diagnostics, e.g. the common `C = 6 N D`.
    pub fn fixed(m: f64, n: f64) -> Self {
        ComputeModel {
            m,
            n,
            r2: 1.0,
            n_points: 0,
            c_scale: 1.0,
            n_scale: 1.0,
            d_scale: 1.0,
        }
    }

    pub fn flops(&self, n: f64, d: f64) -> f64 {
        self.m * (n * d).powf(self.n)
    }

    fn validate(&self) -> Result<(), AllocationError> {
        if self.m > 0.0 && self.n > 0.0 && self.m.is_finite() && self.n.is_finite() {
            Ok(())
        } else {
            Err(AllocationError::InvalidComputeModel { m: self.m, n: self.n })
        }
    }
}

/// Regress `log C` on `log(N D)` for `(N D, C)` pairs already in the desired units.
pub fn fit_compute_model_points(nd: &[f64], c: &[f64]) -> Result<ComputeModel, AllocationError> {
    let mut distinct: Vec<f64> = nd.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(AllocationError::DegenerateProducts(distinct.len()));
    }
    let fit = loglog_linreg(nd, c)?;
    Ok(ComputeModel {
        m: fit.intercept.exp(),
        n: fit.slope,
        r2: fit.r2,
        n_points: nd.len(),
        c_scale: 1.0,
        n_scale: 1.0,
        d_scale: 1.0,
    })
}

/// Fit the compute model to a run table's flops against `n_params * samples_seen`,
/// all divided by `rescale`.
pub fn fit_compute_model(runs: &RunTable, rescale: &Rescale) -> Result<ComputeModel, AllocationError> {
    let nd: Vec<f64> = runs
        .rows
        .iter()
        .map(|r| (r.n_params as f64 / rescale.n_scale) * (r.samples_seen as f64 / rescale.d_scale))
        .collect();
    let c: Vec<f64> = runs.rows.iter().map(|r| r.flops / rescale.c_scale).collect();
    let mut cm = fit_compute_model_points(&nd, &c)?;
    cm.c_scale = rescale.c_scale;
    cm.n_scale = rescale.n_scale;
    cm.d_scale = rescale.d_scale;
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationCoefficients {
    pub a_prime: f64,
    pub b_prime: f64,
    #[serde(rename = "G")]
    pub g: f64,
}

/// `a' = beta / (alpha + beta)`, `b' = 1 - a'`, `G = (alpha A / (beta B))^(1 / (alpha + beta))`.
pub fn allocation_coefficients(fit: &JointFit) -> Result<AllocationCoefficients, AllocationError> {
    let s = fit.alpha + fit.beta;
    if s == 0.0 {
        return Err(AllocationError::ZeroExponentSum);
    }
    if fit.beta == 0.0 {
        return Err(AllocationError::UndefinedG("beta is zero"));
    }
    if fit.b == 0.0 {
        return Err(AllocationError::UndefinedG("B is zero"));
    }
    if fit.degenerate || fit.a <= 0.0 || fit.alpha <= 0.0 || fit.b < 0.0 || fit.beta < 0.0 {
        return Err(AllocationError::DegenerateFit);
    }
    let a_prime = fit.beta / s;
    let g = ((fit.alpha * fit.a) / (fit.beta * fit.b)).powf(1.0 / s);
    if !(g > 0.0 && g.is_finite()) {
        return Err(AllocationError::UndefinedG("non-finite"));
    }
    Ok(AllocationCoefficients {
        a_prime,
        b_prime: 1.0 - a_prime,
        g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    BruteForce,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed_form",
            Method::BruteForce => "brute_force",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    #[serde(rename = "budget_C")]
    pub budget_c: f64,
    pub n_star: f64,
    pub d_star: f64,
    #[serde(rename = "predicted_L")]
    pub predicted_l: f64,
    #[serde(rename = "predicted_S")]
    pub predicted_s: f64,
    pub method: Method,
}

impl AllocationResult {
    /// Budget in raw FLOPs and `(N*, D*)` in raw counts.
    pub fn in_raw_units(&self, cm: &ComputeModel) -> AllocationResult {
        AllocationResult {
            budget_c: self.budget_c * cm.c_scale,
            n_star: self.n_star * cm.n_scale,
            d_star: self.d_star * cm.d_scale,
            ..*self
        }
    }
}

fn check_budget(c: f64) -> Result<(), AllocationError> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(AllocationError::InvalidBudget(c))
    }
}

fn check_units(fit: &JointFit, cm: &ComputeModel) -> Result<(), AllocationError> {
    if fit.n_scale == cm.n_scale && fit.d_scale == cm.d_scale {
        Ok(())
    } else {
        Err(AllocationError::UnitMismatch)
    }
}

fn result(fit: &JointFit, budget_c: f64, n_star: f64, d_star: f64, method: Method) -> Result<AllocationResult, AllocationError> {
    let p = fit.predict(n_star, d_star)?;
    Ok(AllocationResult {
        budget_c,
        n_star,
        d_star,
        predicted_l: p.l,
        predicted_s: p.s,
        method,
    })
}

/// `N* = G (C/m)^(a'/n)`, `D* = G^-1 (C/m)^(b'/n)`.
pub fn optimal_allocation(fit: &JointFit, cm: &ComputeModel, budget_c: f64) -> Result<AllocationResult, AllocationError> {
    cm.validate()?;
    check_units(fit, cm)?;
    check_budget(budget_c)?;
    let k = allocation_coefficients(fit)?;
    let base = budget_c / cm.m;
    let n_star = k.g * base.powf(k.a_prime / cm.n);
    let d_star = base.powf(k.b_prime / cm.n) / k.g;
    result(fit, budget_c, n_star, d_star, Method::ClosedForm)
}

/// Allocation under `C = 6 N D`: `N* = G (C/6)^a'`, `D* = G^-1 (C/6)^b'`.
pub fn optimal_allocation_6nd(fit: &JointFit, budget_c: f64) -> Result<AllocationResult, AllocationError> {
    check_budget(budget_c)?;
    let k = allocation_coefficients(fit)?;
    let base = budget_c / 6.0;
    let n_star = k.g * base.powf(k.a_prime);
    let d_star = base.powf(k.b_prime) / k.g;
    result(fit, budget_c, n_star, d_star, Method::ClosedForm)
}

/// Default brute-force resolution.
pub const BRUTE_FORCE_POINTS: usize = 10_000;
/// Decades of N covered by the brute-force grid, centred on the closed form.
pub const BRUTE_FORCE_DECADES: f64 = 12.0;

/// Spacing of the brute-force grid in log10(N).
pub fn grid_spacing(grid_points: usize) -> f64 {
    BRUTE_FORCE_DECADES / (grid_points - 1) as f64
}

/// Minimize the fitted loss along the budget curve `D = (C/m)^(1/n) / N` over a
/// log-spaced grid of N. Ties go to the smaller N.
pub fn brute_force_allocation(
    fit: &JointFit,
    cm: &ComputeModel,
    budget_c: f64,
    grid_points: usize,
) -> Result<AllocationResult, AllocationError> {
    if grid_points < 100 {
        return Err(AllocationError::GridTooSmall(grid_points));
    }
    let centre = optimal_allocation(fit, cm, budget_c)?;
    let nd = (budget_c / cm.m).powf(1.0 / cm.n);
    let lo = centre.n_star.log10() - BRUTE_FORCE_DECADES / 2.0;
    let step = grid_spacing(grid_points);
    let losses: Vec<(f64, f64, f64)> = (0..grid_points)
        .into_par_iter()
        .map(|i| {
            let n = 10f64.powf(lo + step * i as f64);
            let d = nd / n;
            let l = fit.predict(n, d).map(|p| p.l).unwrap_or(f64::INFINITY);
            (n, d, l)
        })
        .collect();
    let mut best = 0;
    for (i, t) in losses.iter().enumerate() {
        if t.2 < losses[best].2 {
            best = i;
        }
    }
    let (n, d, _) = losses[best];
    result(fit, budget_c, n, d, Method::BruteForce)
}

/// Closed form checked against the brute-force grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub brute_force: AllocationResult,
    /// `|log10 N*_closed - log10 N*_grid|`.
    pub log10_n_discrepancy: f64,
    pub grid_spacing_log10: f64,
    pub grid_points: usize,
    pub within_one_cell: bool,
}

pub fn verify_allocation(
    fit: &JointFit,
    cm: &ComputeModel,
    closed: &AllocationResult,
    grid_points: usize,
) -> Result<Verification, AllocationError> {
    let brute = brute_force_allocation(fit, cm, closed.budget_c, grid_points)?;
    let disc = (closed.n_star.log10() - brute.n_star.log10()).abs();
    let spacing = grid_spacing(grid_points);
    Ok(Verification {
        brute_force: brute,
        log10_n_discrepancy: disc,
        grid_spacing_log10: spacing,
        grid_points,
        // small slack for the rounding in log10 of both sides
        within_one_cell: disc <= spacing * (1.0 + 1e-9),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn joint(e: f64, a: f64, alpha: f64, b: f64, beta: f64) -> JointFit {
        JointFit {
            e,
            a,
            alpha,
            b,
            beta,
            objective: 0.0,
            init_used: vec![],
            degenerate: false,
            converged: true,
            n_scale: 1.0,
            d_scale: 1.0,
        }
    }

    #[test]
    fn compute_model_examples() {
        let nd: Vec<f64> = (1..=10).map(|i| 1e3 * i as f64 * i as f64).collect();
        let c: Vec<f64> = nd.iter().map(|x| 6.0 * x).collect();
        let cm = fit_compute_model_points(&nd, &c).unwrap();
        assert!((cm.m - 6.0).abs() < 1e-9 && (cm.n - 1.0).abs() < 1e-12 && cm.r2 == 1.0, "{cm:?}");

        let c: Vec<f64> = nd.iter().map(|x| 2.0 * x.powf(1.1)).collect();
        let cm = fit_compute_model_points(&nd, &c).unwrap();
        assert!((cm.m - 2.0).abs() < 1e-9 && (cm.n - 1.1).abs() < 1e-12);

        assert_eq!(
            fit_compute_model_points(&[5.0, 5.0], &[30.0, 30.0]),
            Err(AllocationError::DegenerateProducts(1))
        );
    }

    #[test]
    fn coefficient_examples() {
        let k = allocation_coefficients(&joint(0.1, 1.0, 0.3, 1.0, 0.3)).unwrap();
        assert_eq!((k.a_prime, k.b_prime, k.g), (0.5, 0.5, 1.0));
        let k = allocation_coefficients(&joint(0.1, 1.0, 0.2, 2.0, 0.3)).unwrap();
        assert!((k.a_prime - 0.6).abs() < 1e-15);
        assert!((k.b_prime - 0.4).abs() < 1e-15);
        assert!((k.g - 1.0 / 9.0).abs() < 1e-15);
        assert!(allocation_coefficients(&joint(0.1, 1.0, 0.2, 2.0, 0.0)).is_err());
        assert!(allocation_coefficients(&joint(0.1, 1.0, 0.2, 0.0, 0.3)).is_err());
        let mut f = joint(0.1, 1.0, 0.2, 1.0, 0.3);
        f.degenerate = true;
        assert_eq!(allocation_coefficients(&f), Err(AllocationError::DegenerateFit));
    }

    #[test]
    fn symmetric_allocation() {
        let f = joint(0.1, 1.0, 0.3, 1.0, 0.3);
        let cm = ComputeModel::fixed(6.0, 1.0);
        let r = optimal_allocation(&f, &cm, 6e6).unwrap();
        assert!((r.n_star - 1000.0).abs() < 1e-9 && (r.d_star - 1000.0).abs() < 1e-9);
        let b = brute_force_allocation(&f, &cm, 6e6, BRUTE_FORCE_POINTS).unwrap();
        assert!((b.n_star.log10() - b.d_star.log10()).abs() <= 2.0 * grid_spacing(BRUTE_FORCE_POINTS));
    }

    #[test]
    fn six_nd_path_is_bitwise_identical() {
        let f = joint(0.2, 1.3, 0.34, 2.1, 0.28);
        let a = optimal_allocation(&f, &ComputeModel::fixed(6.0, 1.0), 3.7e4).unwrap();
        let b = optimal_allocation_6nd(&f, 3.7e4).unwrap();
        assert_eq!(a.n_star.to_bits(), b.n_star.to_bits());
        assert_eq!(a.d_star.to_bits(), b.d_star.to_bits());
    }

    #[test]
    fn larger_alpha_shifts_budget_to_data() {
        let f = joint(0.0, 1.0, 0.9, 1.0, 0.1);
        let k = allocation_coefficients(&f).unwrap();
        assert!(k.a_prime < k.b_prime);
    }

    #[test]
    fn errors() {
        let f = joint(0.1, 1.0, 0.3, 1.0, 0.3);
        let cm = ComputeModel::fixed(6.0, 1.0);
        assert_eq!(optimal_allocation(&f, &cm, 0.0), Err(AllocationError::InvalidBudget(0.0)));
        assert_eq!(brute_force_allocation(&f, &cm, 1.0, 50), Err(AllocationError::GridTooSmall(50)));
        let mut cm2 = cm;
        cm2.n_scale = 1e5;
        assert_eq!(optimal_allocation(&f, &cm2, 1.0), Err(AllocationError::UnitMismatch));
    }

    fn arb_fit() -> impl Strategy<Value = JointFit> {
        (0.0..1.0f64, 0.1..5.0f64, 0.05..1.0f64, 0.1..5.0f64, 0.05..1.0f64)
            .prop_map(|(e, a, alpha, b, beta)| joint(e, a, alpha, b, beta))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn product_satisfies_budget(f in arb_fit(), m in 0.5..10.0f64, n in 0.7..1.3f64, lc in -3.0..6.0f64) {
            let cm = ComputeModel::fixed(m, n);
            let c = 10f64.powf(lc);
            let r = optimal_allocation(&f, &cm, c).unwrap();
            let target = (c / m).powf(1.0 / n);
            prop_assert!(((r.n_star * r.d_star) - target).abs() <= 1e-12 * target);
            prop_assert!((cm.flops(r.n_star, r.d_star) - c).abs() <= 1e-9 * c);
        }

        #[test]
        fn coefficients_sum_to_one(f in arb_fit()) {
            let k = allocation_coefficients(&f).unwrap();
            prop_assert_eq!(k.a_prime + k.b_prime, 1.0);
            prop_assert!(k.g > 0.0);
        }

        #[test]
        fn budget_scaling(f in arb_fit(), m in 0.5..10.0f64, n in 0.7..1.3f64, k in prop::sample::select(vec![2.0, 10.0])) {
            let cm = ComputeModel::fixed(m, n);
            let coef = allocation_coefficients(&f).unwrap();
            let r1 = optimal_allocation(&f, &cm, 100.0).unwrap();
            let r2 = optimal_allocation(&f, &cm, 100.0 * k).unwrap();
            let expect = k.powf(coef.a_prime / n);
            prop_assert!((r2.n_star / r1.n_star - expect).abs() <= 1e-12 * expect);
        }

        #[test]
        fn closed_form_beats_every_grid_point(f in arb_fit(), m in 0.5..10.0f64, n in 0.7..1.3f64) {
            let cm = ComputeModel::fixed(m, n);
            let c = 1e3;
            let r = optimal_allocation(&f, &cm, c).unwrap();
            let nd = (c / m).powf(1.0 / n);
            for i in 0..400 {
                let nn = 10f64.powf(r.n_star.log10() - 6.0 + 12.0 * i as f64 / 399.0);
                let l = f.predict(nn, nd / nn).unwrap().l;
                prop_assert!(r.predicted_l <= l + 1e-10);
            }
        }
    }
}
