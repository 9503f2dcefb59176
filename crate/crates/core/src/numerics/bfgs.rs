//! Dense BFGS with an Armijo backtracking line search.
//!
//! The problems solved here are small (at most a few thousand parameters for
//! the behavioral classifier, usually 3 to 5 for curve fits), so the inverse
//! Hessian approximation is stored densely.

use super::NumericsError;
use serde::{Deserialize, Serialize};

/// A differentiable scalar function of a parameter vector.
pub trait Objective {
    /// Evaluate the function and write its gradient into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.value_grad(x, &mut g)
    }
}

impl<F> Objective for F
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    /// Sufficient-decrease constant.
    pub c: f64,
    /// Step shrink factor per rejected trial.
    pub backtrack: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            c: 1e-4,
            backtrack: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Convergence threshold on the infinity norm of the gradient.
    pub grad_tol: f64,
    pub line_search: LineSearch,
    pub gradient_mode: GradientMode,
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            line_search: LineSearch::default(),
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        let ls = self.line_search;
        if !(ls.c > 0.0 && ls.c < 1.0) {
            return Err(NumericsError::InvalidConfig("armijo c must lie in (0, 1)"));
        }
        if !(ls.backtrack > 0.0 && ls.backtrack < 1.0) {
            return Err(NumericsError::InvalidConfig(
                "backtrack factor must lie in (0, 1)",
            ));
        }
        if self.max_iters == 0 {
            return Err(NumericsError::InvalidConfig("max_iters must be positive"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(NumericsError::InvalidConfig("grad_tol must be positive"));
        }
        if !(self.fd_step > 0.0) {
            return Err(NumericsError::InvalidConfig("fd_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Central-difference gradient with a step scaled to the magnitude of each coordinate.
pub fn finite_difference_gradient<O: Objective + ?Sized>(
    f: &O,
    x: &[f64],
    step: f64,
    grad: &mut [f64],
) {
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f.value(&probe);
        probe[i] = x[i] - h;
        let fm = f.value(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
}

/// Largest per-coordinate disagreement between the analytic gradient of `f`
/// and a central finite difference at `x`, relative to the gradient's scale
/// (the larger infinity norm of the two).
///
/// Components far below that scale are not judged against their own size:
/// there the finite difference is dominated by rounding in `f` itself.
pub fn check_gradient<O: Objective + ?Sized>(f: &O, x: &[f64], fd_step: f64) -> f64 {
    let mut analytic = vec![0.0; x.len()];
    f.value_grad(x, &mut analytic);
    let mut numeric = vec![0.0; x.len()];
    finite_difference_gradient(f, x, fd_step, &mut numeric);
    let scale = inf_norm(&analytic).max(inf_norm(&numeric)).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

struct Evaluator<'a, O: ?Sized> {
    f: &'a O,
    mode: GradientMode,
    fd_step: f64,
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self.mode {
            GradientMode::Analytic => self.f.value_grad(x, grad),
            GradientMode::FiniteDifference => {
                finite_difference_gradient(self.f, x, self.fd_step, grad);
                self.f.value(x)
            }
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn reset_identity(h: &mut [f64], n: usize, scale: f64) {
    h.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        h[i * n + i] = scale;
    }
}

/// Minimize `f` from `x0` with BFGS.
///
/// Accepted steps never increase the objective. Non-finite trial values are
/// treated as failed Armijo trials and shrink the step. Hitting the iteration
/// cap returns the last (best) iterate with `converged = false`.
pub fn minimize<O: Objective + ?Sized>(
    f: &O,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<MinimizeResult, NumericsError> {
    cfg.validate()?;
    let n = x0.len();
    let ev = Evaluator {
        f,
        mode: cfg.gradient_mode,
        fd_step: cfg.fd_step,
    };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = ev.eval(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteStart { value: fx });
    }

    let mut h = vec![0.0; n * n];
    reset_identity(&mut h, n, 1.0);
    let mut h_is_identity = true;
    let mut first_update = true;

    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    let mut iterations = 0;
    let ls = cfg.line_search;

    while iterations < cfg.max_iters {
        if inf_norm(&g) <= cfg.grad_tol {
            break;
        }

        for i in 0..n {
            p[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            reset_identity(&mut h, n, 1.0);
            h_is_identity = true;
            for i in 0..n {
                p[i] = -g[i];
            }
            slope = dot(&g, &p);
        }

        // Armijo backtracking.
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            for i in 0..n {
                x_new[i] = x[i] + t * p[i];
            }
            let f_trial = ev.eval(&x_new, &mut g_new);
            if f_trial.is_finite()
                && g_new.iter().all(|v| v.is_finite())
                && f_trial <= fx + ls.c * t * slope
            {
                accepted = Some(f_trial);
                break;
            }
            t *= ls.backtrack;
        }

        let Some(f_trial) = accepted else {
            if h_is_identity {
                break;
            }
            // The curvature model may be stale; retry along steepest descent.
            reset_identity(&mut h, n, 1.0);
            h_is_identity = true;
            first_update = true;
            continue;
        };

        iterations += 1;
        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_trial;

        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * yy.sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if first_update {
                reset_identity(&mut h, n, sy / yy);
                first_update = false;
            }
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let rho = 1.0 / sy;
            for i in 0..n {
                hy[i] = dot(&h[i * n..(i + 1) * n], &y);
            }
            let yhy = dot(&y, &hy);
            let coef = (1.0 + rho * yhy) * rho;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            h_is_identity = false;
        }
    }

    let grad_norm = inf_norm(&g);
    Ok(MinimizeResult {
        converged: grad_norm <= cfg.grad_tol,
        x_star: x,
        f_star: fx,
        iterations,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (1.0, 100.0);
        g[0] = -2.0 * (a - x[0]) - 4.0 * b * (x[1] - x[0] * x[0]) * x[0];
        g[1] = 2.0 * b * (x[1] - x[0] * x[0]);
        (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            (x[0] - 3.0).powi(2)
        };
        let r = minimize(&f, &[0.0], &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.x_star[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let cfg = OptimizerConfig {
            max_iters: 2000,
            ..Default::default()
        };
        let r = minimize(&rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.x_star[0] - 1.0).abs() < 1e-4);
        assert!((r.x_star[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rosenbrock_with_finite_differences() {
        let cfg = OptimizerConfig {
            max_iters: 2000,
            grad_tol: 1e-6,
            gradient_mode: GradientMode::FiniteDifference,
            ..Default::default()
        };
        let r = minimize(&rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!((r.x_star[0] - 1.0).abs() < 1e-4, "{r:?}");
        assert!((r.x_star[1] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn flat_function_stays_put() {
        let f = |_: &[f64], g: &mut [f64]| {
            g.iter_mut().for_each(|v| *v = 0.0);
            4.2
        };
        let r = minimize(&f, &[1.0, -2.0], &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.x_star, vec![1.0, -2.0]);
        assert_eq!(r.grad_norm, 0.0);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            x[0].ln()
        };
        assert!(matches!(
            minimize(&f, &[-1.0], &OptimizerConfig::default()),
            Err(NumericsError::NonFiniteStart { .. })
        ));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let cfg = OptimizerConfig {
            max_iters: 3,
            ..Default::default()
        };
        let r = minimize(&rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        assert!(r.f_star < rosenbrock(&[-1.2, 1.0], &mut [0.0; 2]));
    }

    #[test]
    fn deterministic_trajectory() {
        let cfg = OptimizerConfig::default();
        let a = minimize(&rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        let b = minimize(&rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert_eq!(a.x_star[0].to_bits(), b.x_star[0].to_bits());
        assert_eq!(a.x_star[1].to_bits(), b.x_star[1].to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn invalid_line_search_rejected() {
        let mut cfg = OptimizerConfig::default();
        cfg.line_search.c = 1.5;
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            x[0] * x[0]
        };
        assert!(matches!(
            minimize(&f, &[1.0], &cfg),
            Err(NumericsError::InvalidConfig(_))
        ));
    }

    #[test]
    fn gradient_checks() {
        let good = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            x[0] * x[0]
        };
        assert!(check_gradient(&good, &[2.0], 1e-6) < 1e-8);
        let bad = |x: &[f64], g: &mut [f64]| {
            g[0] = 4.0 * x[0];
            x[0] * x[0]
        };
        assert!((check_gradient(&bad, &[2.0], 1e-6) - 0.5).abs() < 1e-6);
    }
}
