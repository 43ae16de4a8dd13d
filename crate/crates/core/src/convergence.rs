//! Observed-order estimation from refinement sweeps.

use crate::{Error, Result};

/// Least-squares slope of `log(err)` against `log(step)`.
pub fn loglog_slope(steps: &[f64], errors: &[f64]) -> Result<f64> {
    if steps.len() != errors.len() {
        return Err(Error::DimensionMismatch {
            expected: steps.len(),
            got: errors.len(),
        });
    }
    if steps.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: steps.len(),
        });
    }
    let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Successive-pair orders `log(e_i / e_{i+1}) / log(s_i / s_{i+1})`.
pub fn pairwise_orders(steps: &[f64], errors: &[f64]) -> Vec<f64> {
    steps
        .windows(2)
        .zip(errors.windows(2))
        .map(|(s, e)| (e[0] / e[1]).ln() / (s[0] / s[1]).ln())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let steps = [0.5, 0.25, 0.125, 0.0625];
        let errors: Vec<f64> = steps.iter().map(|h: &f64| 3.0 * h.powi(3)).collect();
        assert!((loglog_slope(&steps, &errors).unwrap() - 3.0).abs() < 1e-12);
        for order in pairwise_orders(&steps, &errors) {
            assert!((order - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_single_sample() {
        assert!(matches!(
            loglog_slope(&[1.0], &[1.0]),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
