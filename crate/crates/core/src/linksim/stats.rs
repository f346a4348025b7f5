//! Binomial confidence intervals.

/// Two-sided 95 % normal quantile.
pub const Z95: f64 = 1.96;

/// 95 % Wilson score interval for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    assert!(trials >= 1 && errors <= trials, "need 0 <= errors <= trials, trials >= 1");
    // Upper bound taken as the mirrored lower bound so that the interval
    // is exactly symmetric under errors -> trials - errors.
    (lower_bound(errors, trials), 1.0 - lower_bound(trials - errors, trials))
}

fn lower_bound(errors: u64, trials: u64) -> f64 {
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (center - half).max(0.0)
}

/// Half-width of the Wilson interval.
pub fn wilson_half_width(errors: u64, trials: u64) -> f64 {
    let (lo, hi) = wilson_interval(errors, trials);
    (hi - lo) / 2.0
}
