use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Ordinary least squares `y = intercept + slope·x` with a 95% half-width
/// on the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
    pub r_squared: f64,
    /// Largest absolute residual.
    pub max_residual: f64,
    pub n_points: usize,
}

pub const CONFIDENCE: f64 = 0.95;

pub fn least_squares(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    if n < 3 {
        return Err(Error::Estimation(format!(
            "need at least 3 points for a slope with an interval, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::Estimation("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut sse = 0.0;
    let mut max_residual: f64 = 0.0;
    for (a, b) in x.iter().zip(y) {
        let r = b - (intercept + slope * a);
        sse += r * r;
        max_residual = max_residual.max(r.abs());
    }
    let dof = nf - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Estimation(e.to_string()))?
        .inverse_cdf(0.5 + CONFIDENCE / 2.0);
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        half_width: t * se,
        r_squared,
        max_residual,
        n_points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 2.0 * v).collect();
        let f = least_squares(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.5).abs() < 1e-12);
        assert!(f.half_width < 1e-12);
    }

    #[test]
    fn t_quantile_matches_table() {
        // Residuals ±1 alternating, slope se known in closed form.
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, -1.0, 1.0, -1.0];
        let f = least_squares(&x, &y).unwrap();
        let sxx = 5.0;
        let sse: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| {
                let r = b - (f.intercept + f.slope * a);
                r * r
            })
            .sum();
        let se = (sse / 2.0 / sxx).sqrt();
        assert!((f.half_width / se - 4.302_652_729_911).abs() < 1e-6);
    }
}
