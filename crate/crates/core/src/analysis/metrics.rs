//! Scalar fine-tuning metrics and bootstrap intervals.

use rand::Rng as _;

use crate::rng::from_seed;
use crate::{Error, Result};

fn check_p0(p0: f64) -> Result<()> {
    if p0 == 0.0 || !p0.is_finite() {
        return Err(Error::InvalidArgument(format!("initial performance must be finite and non-zero, got {p0}")));
    }
    Ok(())
}

/// `(min(returns) - p0) / p0`; negative values are drops below the start.
pub fn degradation(p0: f64, returns: &[f64]) -> Result<f64> {
    check_p0(p0)?;
    if returns.is_empty() {
        return Err(Error::InvalidArgument("no online returns".into()));
    }
    let worst = returns.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((worst - p0) / p0)
}

/// `(mean of the last ceil(tail * n) returns - p0) / p0`.
pub fn final_improvement(p0: f64, returns: &[f64], tail_fraction: f64) -> Result<f64> {
    check_p0(p0)?;
    if returns.is_empty() {
        return Err(Error::InvalidArgument("no online returns".into()));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("tail fraction {tail_fraction} outside (0, 1]")));
    }
    // Guard the ceiling against representation error (0.1 * 10 = 1.0000000000000002).
    let k = ((tail_fraction * returns.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let tail = &returns[returns.len() - k..];
    let mean = tail.iter().sum::<f64>() / k as f64;
    Ok((mean - p0) / p0)
}

/// Trapezoidal area under `(step, value)` points divided by `step_budget`.
pub fn auc(points: &[(f64, f64)], step_budget: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("area needs at least two points".into()));
    }
    if !(step_budget > 0.0) {
        return Err(Error::InvalidArgument(format!("step budget must be positive, got {step_budget}")));
    }
    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x1 < x0 {
            return Err(Error::InvalidArgument("steps must be non-decreasing".into()));
        }
        area += 0.5 * (y0 + y1) * (x1 - x0);
    }
    Ok(area / step_budget)
}

/// Percentile bootstrap interval of the mean of `values`.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return Err(Error::InvalidArgument("bootstrap needs values and resamples".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")));
    }
    let mut rng = from_seed(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let pick = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Ok((pick(alpha), pick(1.0 - alpha)))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
