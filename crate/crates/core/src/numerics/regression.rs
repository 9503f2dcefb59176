use super::NumericsError;
use serde::{Deserialize, Serialize};

/// Result of an ordinary least-squares fit of `ln y = intercept + slope * ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

pub fn loglog_linreg(x: &[f64], y: &[f64]) -> Result<LogLogFit, NumericsError> {
    if x.len() != y.len() {
        return Err(NumericsError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(NumericsError::TooFewPoints {
            need: 2,
            got: x.len(),
        });
    }
    for (index, &value) in x.iter().chain(y.iter()).enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(NumericsError::NonPositive {
                index: index % x.len(),
                value,
            });
        }
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Relative check: identical x values can leave rounding-level spread.
    let scale = lx.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if sxx <= (n * 1e-24) * scale * scale {
        return Err(NumericsError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(LogLogFit {
        intercept,
        slope,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn exact_linear() {
        let x = logspace(0.0, 3.0, 10);
        let y: Vec<f64> = x.iter().map(|v| 6.0 * v).collect();
        let fit = loglog_linreg(&x, &y).unwrap();
        assert!((fit.intercept - 6f64.ln()).abs() < 1e-12);
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_power() {
        let x = logspace(-2.0, 4.0, 25);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v.powf(1.1)).collect();
        let fit = loglog_linreg(&x, &y).unwrap();
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-12);
        assert!((fit.slope - 1.1).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_invalid() {
        assert_eq!(
            loglog_linreg(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]),
            Err(NumericsError::DegenerateX)
        );
        assert!(matches!(
            loglog_linreg(&[1.0, 2.0], &[1.0, -2.0]),
            Err(NumericsError::NonPositive { index: 1, .. })
        ));
        assert!(matches!(
            loglog_linreg(&[1.0], &[1.0]),
            Err(NumericsError::TooFewPoints { .. })
        ));
    }
}
