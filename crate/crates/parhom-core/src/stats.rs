//! Small statistics helpers shared by the Monte Carlo modules: mean,
//! unbiased variance, standard errors, deterministic quantiles, and a plain
//! least-squares line fit.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn stderr(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the unbiased variance estimator, from the fourth
/// central moment: Var[V] ≈ (m4 - V^2 (n-3)/(n-1)) / n.
pub fn variance_stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return f64::INFINITY;
    }
    let m = mean(xs);
    let v = variance(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
    let var_v = (m4 - v * v * (n as f64 - 3.0) / (n as f64 - 1.0)) / n as f64;
    var_v.max(0.0).sqrt()
}

/// Quantile with linear interpolation on the sorted copy; deterministic.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty());
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN samples"));
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    if k + 1 < sorted.len() {
        sorted[k] * (1.0 - frac) + sorted[k + 1] * frac
    } else {
        sorted[k]
    }
}

/// Half-width of the order-statistic confidence interval for a quantile at
/// `z` standard deviations (nonparametric; falls back to the sample range on
/// tiny ensembles).
pub fn quantile_ci_halfwidth(xs: &[f64], p: f64, z: f64) -> f64 {
    let n = xs.len();
    if n < 3 {
        return f64::INFINITY;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN samples"));
    let spread = z * (n as f64 * p * (1.0 - p)).sqrt();
    let center = p * (n - 1) as f64;
    let lo = (center - spread).floor().max(0.0) as usize;
    let hi = ((center + spread).ceil() as usize).min(n - 1);
    0.5 * (sorted[hi] - sorted[lo])
}

/// Least-squares slope and intercept of y against x.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return (0.0, y.first().copied().unwrap_or(0.0));
    }
    let xm = mean(x);
    let ym = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - xm) * (xi - xm);
        sxy += (xi - xm) * (yi - ym);
    }
    if sxx == 0.0 {
        return (0.0, ym);
    }
    let slope = sxy / sxx;
    (slope, ym - slope * xm)
}
