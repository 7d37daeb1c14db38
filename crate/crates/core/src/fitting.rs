//! Log-log slope fits for the scaling experiments.

use serde::{Deserialize, Serialize};

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points_used: usize,
}

/// Fit `log y = slope * log x + intercept`. Non-positive `y` values void the
/// fit (`None`), as do fewer than three points. With `drop_extremes` the
/// smallest and largest `x` are excluded as transient/rounding guards.
pub fn fit_loglog(xs: &[f64], ys: &[f64], drop_extremes: bool) -> Option<LogLogFit> {
    assert_eq!(xs.len(), ys.len());
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if drop_extremes && pairs.len() >= 5 {
        pairs.remove(0);
        pairs.pop();
    }
    if pairs.len() < 3 || pairs.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let n = pairs.len() as f64;
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let dof = (logs.len() as f64 - 2.0).max(1.0);
    let slope_stderr = (ss_res / dof / sxx).sqrt();
    Some(LogLogFit {
        slope,
        intercept,
        slope_stderr,
        points_used: logs.len(),
    })
}

/// Least-squares constant for a pinned exponent: the geometric mean of
/// `y / x^slope`.
pub fn fixed_slope_constant(xs: &[f64], ys: &[f64], slope: f64) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.is_empty() || xs.iter().zip(ys).any(|(&x, &y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let mean: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| y.ln() - slope * x.ln())
        .sum::<f64>()
        / xs.len() as f64;
    Some(mean.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let xs: Vec<f64> = (1..=8).map(|i| 0.01 * 1.5f64.powi(i)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 3.7 * x.powf(4.0)).collect();
        let fit = fit_loglog(&xs, &ys, true).unwrap();
        assert!((fit.slope - 4.0).abs() < 1e-10);
        assert!((fit.intercept.exp() - 3.7).abs() < 1e-9);
        assert!(fit.slope_stderr < 1e-10);
        assert_eq!(fit.points_used, 6);

        let c = fixed_slope_constant(&xs, &ys, 4.0).unwrap();
        assert!((c - 3.7).abs() < 1e-10);
    }

    #[test]
    fn zero_column_is_not_a_fit() {
        let xs = [0.1, 0.2, 0.4, 0.8];
        let ys = [0.0, 0.0, 0.0, 0.0];
        assert!(fit_loglog(&xs, &ys, false).is_none());
    }
}
