//! Synthetic population models and their ground-truth labeler.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::LossFunction;
use crate::rng::RngStream;
use crate::stats::{normal_cdf, normal_pdf};

pub(crate) const UNIT_TOLERANCE: f64 = 1e-9;

/// Largest response scale the planted model will calibrate to. Targets at or
/// above the mean reachable with this scale (`mu = 1` included) saturate here.
const MAX_SCALE: f64 = 1e12;

/// Population from which `(x, y)` samples are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionModel {
    /// All `d + 1` coordinates i.i.d. standard normal; every linear
    /// hypothesis is null.
    GlobalNull { d: usize },
    PlantedLinear(PlantedLinear),
}

/// `x ~ N(0, I_d)`, `y = scale * <w_true, x> + sigma_y * eps`.
///
/// `scale` is solved for so that `E[truncate(y * <w_true, x>)] = mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedLinear {
    w_true: Vec<f64>,
    mu: f64,
    sigma_y: f64,
    scale: f64,
}

impl PlantedLinear {
    pub fn w_true(&self) -> &[f64] {
        &self.w_true
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }
    /// Response scale in front of `<w_true, x>`.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Ground truth of a hypothesis under a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truth {
    Null,
    Alternative,
}

pub(crate) fn check_unit(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    let norm = libm::sqrt(w.iter().map(|v| v * v).sum::<f64>());
    if (norm - 1.0).abs().is_nan() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::Norm { norm });
    }
    Ok(())
}

impl DistributionModel {
    pub fn global_null(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        Ok(Self::GlobalNull { d })
    }

    pub fn planted_linear(w_true: Vec<f64>, mu: f64, sigma_y: f64) -> Result<Self> {
        check_unit(&w_true)?;
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::Domain(alloc::format!("signal mu must lie in (0, 1], got {mu}")));
        }
        if !(sigma_y >= 0.0 && sigma_y.is_finite()) {
            return Err(Error::Domain(alloc::format!("noise sigma_y must be >= 0, got {sigma_y}")));
        }
        let scale = calibrate_scale(mu, sigma_y);
        Ok(Self::PlantedLinear(PlantedLinear {
            w_true,
            mu,
            sigma_y,
            scale,
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::GlobalNull { d } => *d,
            Self::PlantedLinear(p) => p.w_true.len(),
        }
    }

    pub fn is_global_null(&self) -> bool {
        matches!(self, Self::GlobalNull { .. })
    }

    /// Draws `n` i.i.d. samples. Per sample the stream yields `x_1..x_d`
    /// followed by `y` (or the response noise).
    pub fn sample_dataset(&self, n: usize, stream: &RngStream) -> Dataset {
        let d = self.dim();
        let mut rng = stream.rng();
        let mut data = Dataset::with_capacity(d, n).expect("model dimension is >= 1");
        let mut x = vec![0.0; d];
        for _ in 0..n {
            for v in x.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let noise: f64 = StandardNormal.sample(&mut rng);
            let y = match self {
                Self::GlobalNull { .. } => noise,
                Self::PlantedLinear(p) => p.scale * dot(&p.w_true, &x) + p.sigma_y * noise,
            };
            data.push_unchecked(&x, y);
        }
        data
    }

    /// Population value of `E[y <w, x>]` for a direction `w`.
    pub fn population_correlation(&self, w: &[f64]) -> f64 {
        match self {
            Self::GlobalNull { .. } => 0.0,
            Self::PlantedLinear(p) => p.scale * dot(&p.w_true, w),
        }
    }

    /// Labels the hypothesis tested through `loss`. Linear hypotheses are
    /// alternatives iff `E[y <w, x>] > 0`; a constant loss `c` is an
    /// alternative iff `c > 0`.
    pub fn truth(&self, loss: &LossFunction) -> Truth {
        let positive = match loss {
            LossFunction::Constant(c) => *c > 0.0,
            LossFunction::Correlation { w } | LossFunction::TruncatedCorrelation { w } => {
                self.population_correlation(w) > 0.0
            }
        };
        if positive {
            Truth::Alternative
        } else {
            Truth::Null
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `E[truncate_[-1,1](X)]` for `X ~ N(m, s^2)`.
fn clamped_normal_mean(m: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return m.clamp(-1.0, 1.0);
    }
    let a = (-1.0 - m) / s;
    let b = (1.0 - m) / s;
    let (fa, fb) = (normal_cdf(a), normal_cdf(b));
    -fa + (1.0 - fb) + m * (fb - fa) + s * (normal_pdf(a) - normal_pdf(b))
}

/// `E[truncate(y * <w_true, x>)]` under the planted model with the given
/// scale. Conditioning on `z = <w_true, x>` gives `y z ~ N(scale z^2,
/// sigma^2 z^2)`; the outer expectation over `z` is integrated with
/// composite Simpson on `[0, 12]` (the integrand is even in `z`).
pub fn planted_truncated_mean(scale: f64, sigma_y: f64) -> f64 {
    const INTERVALS: usize = 12_000;
    const UPPER: f64 = 12.0;
    let h = UPPER / INTERVALS as f64;
    let f = |z: f64| normal_pdf(z) * clamped_normal_mean(scale * z * z, sigma_y * z);
    let mut acc = f(0.0) + f(UPPER);
    for i in 1..INTERVALS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    2.0 * acc * h / 3.0
}

fn calibrate_scale(mu: f64, sigma_y: f64) -> f64 {
    if planted_truncated_mean(MAX_SCALE, sigma_y) <= mu {
        return MAX_SCALE;
    }
    // the truncated mean is nondecreasing in the scale; bisect in log space
    let (mut lo, mut hi) = (libm::log(1e-9), libm::log(MAX_SCALE));
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if planted_truncated_mean(libm::exp(mid), sigma_y) < mu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    libm::exp(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset() {
        let m = DistributionModel::global_null(3).unwrap();
        let data = m.sample_dataset(0, &RngStream::new(5));
        assert!(data.is_empty());
        assert_eq!(data.dim(), 3);
    }

    // scipy.integrate.quad + brentq reference scales.
    #[test]
    fn calibrated_scales_match_reference() {
        for (mu, sigma, expect) in [
            (0.8, 0.0, 6.872_315_215_026_133),
            (0.8, 0.5, 7.051_996_521_750_039),
            (0.55, 0.0, 1.190_359_217_463_524),
            (0.55, 0.5, 1.337_782_011_697_919),
        ] {
            let scale = calibrate_scale(mu, sigma);
            assert!((scale / expect - 1.0).abs() < 1e-4, "{mu} {sigma}: {scale} vs {expect}");
        }
    }

    #[test]
    fn full_signal_saturates() {
        let m = DistributionModel::planted_linear(vec![1.0, 0.0], 1.0, 0.0).unwrap();
        match m {
            DistributionModel::PlantedLinear(p) => assert_eq!(p.scale(), MAX_SCALE),
            _ => unreachable!(),
        }
    }

    #[test]
    fn constructor_errors() {
        assert!(matches!(
            DistributionModel::planted_linear(vec![1.0, 1.0], 0.5, 0.0),
            Err(Error::Norm { .. })
        ));
        assert!(DistributionModel::planted_linear(vec![1.0], 0.0, 0.0).is_err());
        assert!(DistributionModel::planted_linear(vec![1.0], 1.5, 0.0).is_err());
        assert!(DistributionModel::planted_linear(vec![1.0], 0.5, -1.0).is_err());
        assert!(DistributionModel::global_null(0).is_err());
    }

    #[test]
    fn labels() {
        let null = DistributionModel::global_null(2).unwrap();
        let w = LossFunction::linear(vec![1.0, 0.0]).unwrap();
        assert_eq!(null.truth(&w), Truth::Null);
        let planted = DistributionModel::planted_linear(vec![1.0, 0.0], 0.8, 0.0).unwrap();
        assert_eq!(planted.truth(&w), Truth::Alternative);
        let orth = LossFunction::linear(vec![0.0, 1.0]).unwrap();
        assert_eq!(planted.truth(&orth), Truth::Null);
        let neg = LossFunction::linear(vec![-1.0, 0.0]).unwrap();
        assert_eq!(planted.truth(&neg), Truth::Null);
        assert_eq!(null.truth(&LossFunction::Constant(1.0)), Truth::Alternative);
        assert_eq!(null.truth(&LossFunction::Constant(0.0)), Truth::Null);
    }
}
