//! Small numerical helpers: normal distribution, binomial tails and the
//! Wilson score interval.

use crate::error::{Error, Result};
use alloc::format;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Inverse of the standard normal CDF, by bisection on `erfc`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `Pr[X <= x]` for `X ~ Binomial(n, p)`.
pub fn binomial_cdf(x: u64, n: u64, p: f64) -> f64 {
    if x >= n || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let (lp, lq) = (libm::log(p), libm::log1p(-p));
    let mut total = 0.0;
    for i in 0..=x {
        total += libm::exp(ln_choose(n, i) + i as f64 * lp + (n - i) as f64 * lq);
    }
    total.min(1.0)
}

/// One-sided exact (Clopper-Pearson) upper confidence bound for a binomial
/// proportion after observing `successes` out of `trials`.
pub fn binomial_upper_bound(successes: u64, trials: u64, level: f64) -> Result<f64> {
    if trials == 0 || successes > trials || !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "binomial bound needs successes <= trials, trials >= 1 and level in (0,1); got {successes}/{trials} at {level}"
        )));
    }
    if successes == trials {
        return Ok(1.0);
    }
    let tail = 1.0 - level;
    let (mut lo, mut hi) = (successes as f64 / trials as f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if binomial_cdf(successes, trials, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Wilson score interval for a binomial proportion at a two-sided `level`.
pub fn wilson_ci(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials || !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "wilson interval needs successes <= trials, trials >= 1 and level in (0,1); got {successes}/{trials} at {level}"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = normal_quantile(0.5 + level / 2.0);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.995) - 2.575_829_303_548_900_4).abs() < 1e-12);
        assert!(normal_quantile(0.5).abs() < 1e-15);
    }

    // Reference values from scipy.stats (Wilson formula with z = 1.959964).
    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_ci(0, 10, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.277_532_799_862_889_2).abs() < 1e-9);
        let (lo, hi) = wilson_ci(10, 10, 0.95).unwrap();
        assert!((lo - 0.722_467_200_137_110_7).abs() < 1e-9);
        assert_eq!(hi, 1.0);
        let (lo, hi) = wilson_ci(5, 10, 0.95).unwrap();
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(((lo + hi) / 2.0 - 0.5).abs() < 1e-12);
        let (lo, hi) = wilson_ci(4900, 100_000, 0.95).unwrap();
        assert!((lo - 0.047_679_298_617_046_81).abs() < 1e-9);
        assert!((hi - 0.050_355_350_010_503_105).abs() < 1e-9);
    }

    #[test]
    fn wilson_zero_events_upper() {
        let r = 1000u64;
        let (_, hi) = wilson_ci(0, r, 0.95).unwrap();
        let z2 = 1.959_963_984_540_054_f64.powi(2);
        assert!((hi - z2 / (r as f64 + z2)).abs() < 1e-12);
    }

    #[test]
    fn wilson_domain() {
        assert!(wilson_ci(3, 2, 0.95).is_err());
        assert!(wilson_ci(0, 0, 0.95).is_err());
    }

    // scipy.stats.beta.ppf(0.99, x + 1, n - x)
    #[test]
    fn clopper_pearson_upper() {
        let u = binomial_upper_bound(0, 100_000, 0.99).unwrap();
        assert!((u - 4.605_064_149_653_605e-5).abs() < 1e-12);
        let u = binomial_upper_bound(5, 100, 0.99).unwrap();
        assert!((u - 0.125_851_730_697_678_63).abs() < 1e-9);
        let u = binomial_upper_bound(21_600, 100_000, 0.99).unwrap();
        assert!((u - 0.219_043_510_079_196_9).abs() < 1e-7);
        assert_eq!(binomial_upper_bound(7, 7, 0.99).unwrap(), 1.0);
    }
}
