use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const DEFAULT_Z: f64 = 1.959964;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("interval needs at least one trial")]
    NoTrials,
    #[error("{successes} successes exceed {n} trials")]
    TooManySuccesses { successes: u64, n: u64 },
    #[error("z must be positive and finite, got {0}")]
    BadZ(f64),
}

/// Wilson score interval for a binomial proportion, clamped to [0, 1].
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 {
        return Err(StatsError::NoTrials);
    }
    if successes > n {
        return Err(StatsError::TooManySuccesses { successes, n });
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(StatsError::BadZ(z));
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    // The endpoints at p = 0 and p = 1 are exact; computing them would leave
    // rounding residue on the wrong side of p.
    let lower = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, 1.0) };
    let upper = if successes == n { 1.0 } else { (center + half).clamp(0.0, 1.0) };
    Ok((lower, upper))
}
