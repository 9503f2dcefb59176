//! Huber-penalized log-residual objectives for the three curve forms.
//!
//! Each form models `log L` as a log-sum-exp of log-space terms, so the
//! gradient flows through the softmax weights of the LSE and the piecewise
//! derivative of the Huber penalty.

use crate::numerics::{huber, huber_derivative, lse_weights, HuberParams, Objective};

const LN_10: f64 = std::f64::consts::LN_10;

/// `sum_i huber(LSE(a - alpha ln X_i, e) - ln L_i)` over parameters `[e, a, alpha]`.
#[derive(Debug, Clone)]
pub struct PowerLawObjective {
    pub log_x: Vec<f64>,
    pub log_l: Vec<f64>,
    pub huber: HuberParams,
}

impl Objective for PowerLawObjective {
    fn value_grad(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        let (e, a, alpha) = (p[0], p[1], p[2]);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut w = [0.0; 2];
        let mut total = 0.0;
        for (lx, ll) in self.log_x.iter().zip(&self.log_l) {
            let pred = lse_weights(&[a - alpha * lx, e], &mut w);
            let r = pred - ll;
            total += huber(r, self.huber);
            let d = huber_derivative(r, self.huber);
            grad[0] += d * w[1];
            grad[1] += d * w[0];
            grad[2] -= d * w[0] * lx;
        }
        total
    }
}

/// `sum_i huber(LSE(a - alpha ln(X_i + 10^lambda), e) - ln L_i)`.
///
/// Parameters are `[e, a, alpha, lambda]`, or `[e, a, alpha]` when
/// `frozen_lambda` pins lambda.
#[derive(Debug, Clone)]
pub struct ShiftedObjective {
    pub x: Vec<f64>,
    pub log_l: Vec<f64>,
    pub huber: HuberParams,
    pub frozen_lambda: Option<f64>,
}

impl Objective for ShiftedObjective {
    fn value_grad(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        let (e, a, alpha) = (p[0], p[1], p[2]);
        let lambda = self.frozen_lambda.unwrap_or_else(|| p[3]);
        let shift = 10f64.powf(lambda);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut w = [0.0; 2];
        let mut total = 0.0;
        for (x, ll) in self.x.iter().zip(&self.log_l) {
            let xs = x + shift;
            let lxs = xs.ln();
            let pred = lse_weights(&[a - alpha * lxs, e], &mut w);
            let r = pred - ll;
            total += huber(r, self.huber);
            let d = huber_derivative(r, self.huber);
            grad[0] += d * w[1];
            grad[1] += d * w[0];
            grad[2] -= d * w[0] * lxs;
            if self.frozen_lambda.is_none() {
                grad[3] -= d * w[0] * alpha * shift * LN_10 / xs;
            }
        }
        total
    }
}

/// `sum_i huber(LSE(a - alpha ln N_i, b - beta ln D_i, e) - ln L_i)` over
/// `[e, a, alpha, b, beta]`.
#[derive(Debug, Clone)]
pub struct JointObjective {
    pub log_n: Vec<f64>,
    pub log_d: Vec<f64>,
    pub log_l: Vec<f64>,
    pub huber: HuberParams,
}

impl Objective for JointObjective {
    fn value_grad(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        let (e, a, alpha, b, beta) = (p[0], p[1], p[2], p[3], p[4]);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut w = [0.0; 3];
        let mut total = 0.0;
        for ((ln, ld), ll) in self.log_n.iter().zip(&self.log_d).zip(&self.log_l) {
            let pred = lse_weights(&[a - alpha * ln, b - beta * ld, e], &mut w);
            let r = pred - ll;
            total += huber(r, self.huber);
            let d = huber_derivative(r, self.huber);
            grad[0] += d * w[2];
            grad[1] += d * w[0];
            grad[2] -= d * w[0] * ln;
            grad[3] += d * w[1];
            grad[4] -= d * w[1] * ld;
        }
        total
    }
}
