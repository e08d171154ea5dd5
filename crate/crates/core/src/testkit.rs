//! Hypothesis tests, their false-positive bounds and sample-size formulas.
//!
//! Two test families are supported:
//!
//! * gapped-loss tests: a loss bounded in `[-1, 1]` whose population mean is
//!   at most 0 under the null, accepted iff the empirical mean strictly
//!   exceeds a threshold `tau` (default 1/2). Hoeffding gives the
//!   false-positive bound `exp(-h tau^2 / 2)`, i.e. `exp(-h/8)` at 1/2.
//! * correlation tests: the untruncated empirical correlation
//!   `mean(y <w, x>)` against a threshold (default 1). No closed-form bound is
//!   used; [`calibrate_correlation_null`] estimates it by simulation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{empirical_mean_loss, LossFunction};
use crate::model::DistributionModel;
use crate::rng::RngStream;
use crate::stats::binomial_upper_bound;

pub const DEFAULT_GAPPED_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 1.0;
/// Width of the `[-1, 1]` loss range.
pub const GAPPED_RANGE_WIDTH: f64 = 2.0;
/// Confidence of the one-sided upper bound stored in calibration tables.
pub const CALIBRATION_LEVEL: f64 = 0.99;
pub const MIN_CALIBRATION_REPLICATIONS: u64 = 10_000;

/// Threshold test on the empirical mean of a loss bounded in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GappedLossTest {
    loss: LossFunction,
    threshold: f64,
    label: String,
}

impl GappedLossTest {
    pub fn new(loss: LossFunction, threshold: f64, label: impl Into<String>) -> Result<Self> {
        if !loss.is_bounded() {
            return Err(Error::Unbounded);
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::Domain(format!("gapped threshold must lie in (0, 1), got {threshold}")));
        }
        Ok(Self {
            loss,
            threshold,
            label: label.into(),
        })
    }

    /// Test with the default threshold 1/2.
    pub fn standard(loss: LossFunction, label: impl Into<String>) -> Result<Self> {
        Self::new(loss, DEFAULT_GAPPED_THRESHOLD, label)
    }

    pub fn loss(&self) -> &LossFunction {
        &self.loss
    }
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Hoeffding false-positive bound on a holdout of `h` samples.
    pub fn false_positive_bound(&self, h: usize) -> f64 {
        hoeffding_p_bound(h, self.threshold, GAPPED_RANGE_WIDTH)
    }

    fn ln_false_positive_bound(&self, h: usize) -> f64 {
        ln_hoeffding_p_bound(h, self.threshold, GAPPED_RANGE_WIDTH)
    }
}

/// Strict-exceedance test on the empirical correlation `mean(y <w, x>)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTest {
    loss: LossFunction,
    threshold: f64,
}

impl CorrelationTest {
    pub fn w(&self) -> &[f64] {
        self.loss.direction().expect("correlation loss has a direction")
    }
    pub fn loss(&self) -> &LossFunction {
        &self.loss
    }
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

pub fn make_correlation_test(w: Vec<f64>, threshold: f64) -> Result<CorrelationTest> {
    if !threshold.is_finite() {
        return Err(Error::Domain(format!("correlation threshold must be finite, got {threshold}")));
    }
    Ok(CorrelationTest {
        loss: LossFunction::correlation(w)?,
        threshold,
    })
}

/// Loss `truncate_[-1,1](y <w, x>)` for a unit vector `w`.
pub fn make_linear_loss(w: Vec<f64>) -> Result<LossFunction> {
    LossFunction::linear(w)
}

/// SHA-256 of a test's canonical description.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TestHash(pub [u8; 32]);

impl fmt::Display for TestHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for TestHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestHash({self})")
    }
}

/// Any test that can be submitted to a mechanism.
#[derive(Debug, Clone, PartialEq)]
pub enum TestSpec {
    Gapped(GappedLossTest),
    Correlation(CorrelationTest),
}

impl From<GappedLossTest> for TestSpec {
    fn from(t: GappedLossTest) -> Self {
        Self::Gapped(t)
    }
}

impl From<CorrelationTest> for TestSpec {
    fn from(t: CorrelationTest) -> Self {
        Self::Correlation(t)
    }
}

impl TestSpec {
    pub fn loss(&self) -> &LossFunction {
        match self {
            Self::Gapped(t) => &t.loss,
            Self::Correlation(t) => &t.loss,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Self::Gapped(t) => t.threshold,
            Self::Correlation(t) => t.threshold,
        }
    }

    /// Test statistic on `data`: the empirical mean of the loss.
    pub fn statistic(&self, data: &Dataset) -> Result<f64> {
        empirical_mean_loss(self.loss(), data)
    }

    /// Acceptance decision for an already computed statistic (strict `>`).
    pub fn decide(&self, statistic: f64) -> bool {
        statistic > self.threshold()
    }

    pub fn accepts(&self, data: &Dataset) -> Result<bool> {
        Ok(self.decide(self.statistic(data)?))
    }

    pub fn hash(&self) -> TestHash {
        let mut buf = Vec::new();
        let label = match self {
            Self::Gapped(t) => {
                buf.push(0u8);
                t.label.as_bytes()
            }
            Self::Correlation(_) => {
                buf.push(1u8);
                &[][..]
            }
        };
        buf.extend_from_slice(&self.threshold().to_bits().to_le_bytes());
        self.loss().encode(&mut buf);
        buf.extend_from_slice(&(label.len() as u64).to_le_bytes());
        buf.extend_from_slice(label);
        TestHash(Sha256::digest(&buf).into())
    }
}

/// 1 iff the empirical mean truncated loss exceeds the threshold.
pub fn evaluate_gapped_test(test: &GappedLossTest, data: &Dataset) -> Result<bool> {
    Ok(empirical_mean_loss(&test.loss, data)? > test.threshold)
}

fn ln_hoeffding_p_bound(h: usize, gap: f64, range_width: f64) -> f64 {
    -2.0 * h as f64 * gap * gap / (range_width * range_width)
}

/// `exp(-2 h gap^2 / range_width^2)`: Hoeffding's bound on the probability
/// that the mean of `h` i.i.d. variables with the given range exceeds its
/// expectation by more than `gap`.
pub fn hoeffding_p_bound(h: usize, gap: f64, range_width: f64) -> f64 {
    libm::exp(ln_hoeffding_p_bound(h, gap, range_width))
}

fn check_budget_domain(s: u64, k: u32, p0: f64) -> Result<()> {
    if s == 0 || k == 0 || u64::from(k) > s || !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Domain(format!(
            "need s >= 1, 1 <= k <= s and p0 in (0,1); got s={s}, k={k}, p0={p0}"
        )));
    }
    Ok(())
}

fn ln_per_test_alpha(s: u64, k: u32, p0: f64) -> f64 {
    libm::log(p0) - f64::from(k) * libm::log(s as f64)
}

/// Per-test level `p0 / s^k`.
///
/// `s^k` is formed in log space when it would overflow. At `k = 1` the
/// result is nudged by at most one ulp so that `alpha * s == p0` holds in
/// floating point whenever such a neighbour exists.
pub fn per_test_alpha(s: u64, k: u32, p0: f64) -> Result<f64> {
    check_budget_domain(s, k, p0)?;
    let sf = s as f64;
    if k == 1 {
        let q = p0 / sf;
        for cand in [q, q.next_down(), q.next_up()] {
            if cand * sf == p0 {
                return Ok(cand);
            }
        }
        return Ok(q);
    }
    let ln_sk = f64::from(k) * libm::log(sf);
    if ln_sk < 700.0 {
        Ok(p0 / libm::pow(sf, f64::from(k)))
    } else {
        Ok(libm::exp(ln_per_test_alpha(s, k, p0)))
    }
}

/// Below this level comparisons switch to log space to avoid underflow.
const LOG_SPACE_BELOW: f64 = 1e-280;

fn within_level(bound: f64, ln_bound: f64, alpha: f64, ln_alpha: f64) -> bool {
    if alpha >= LOG_SPACE_BELOW {
        bound <= alpha
    } else {
        ln_bound <= ln_alpha
    }
}

/// Smallest holdout size `h` with `exp(-h/8) <= p0 / s^k`, i.e.
/// `ceil(8 ln(s^k / p0))`.
pub fn required_holdout_size(s: u64, k: u32, p0: f64) -> Result<usize> {
    let alpha = per_test_alpha(s, k, p0)?;
    let ln_alpha = ln_per_test_alpha(s, k, p0);
    let meets = |h: usize| {
        within_level(
            hoeffding_p_bound(h, DEFAULT_GAPPED_THRESHOLD, GAPPED_RANGE_WIDTH),
            ln_hoeffding_p_bound(h, DEFAULT_GAPPED_THRESHOLD, GAPPED_RANGE_WIDTH),
            alpha,
            ln_alpha,
        )
    };
    let mut h = libm::ceil(-8.0 * ln_alpha).max(0.0) as usize;
    while !meets(h) {
        h += 1;
    }
    while h > 0 && meets(h - 1) {
        h -= 1;
    }
    Ok(h)
}

/// Query budget `s_max`, confirmation budget `k_max`, overall target `p0`
/// and the resulting per-test level `alpha = p0 / s_max^k_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSpec {
    s_max: u64,
    k_max: u32,
    p0: f64,
    alpha: f64,
    ln_alpha: f64,
}

impl BudgetSpec {
    pub fn new(s_max: u64, k_max: u32, p0: f64) -> Result<Self> {
        let alpha = per_test_alpha(s_max, k_max, p0)?;
        Ok(Self {
            s_max,
            k_max,
            p0,
            alpha,
            ln_alpha: ln_per_test_alpha(s_max, k_max, p0),
        })
    }

    pub fn s_max(&self) -> u64 {
        self.s_max
    }
    pub fn k_max(&self) -> u32 {
        self.k_max
    }
    pub fn p0(&self) -> f64 {
        self.p0
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn required_holdout_size(&self) -> usize {
        required_holdout_size(self.s_max, self.k_max, self.p0).expect("validated at construction")
    }

    /// Whether a gapped test evaluated on `h` samples is certified at this level.
    pub fn admits_gapped(&self, test: &GappedLossTest, h: usize) -> bool {
        within_level(
            test.false_positive_bound(h),
            test.ln_false_positive_bound(h),
            self.alpha,
            self.ln_alpha,
        )
    }

    /// Whether an externally supplied bound (e.g. from calibration) is
    /// within the per-test level.
    pub fn admits_bound(&self, bound: f64) -> bool {
        within_level(bound, libm::log(bound), self.alpha, self.ln_alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEntry {
    pub n: usize,
    /// Observed exceedance frequency.
    pub p_hat: f64,
    pub exceedances: u64,
    pub replications: u64,
    /// One-sided exact binomial upper bound at [`CALIBRATION_LEVEL`].
    pub upper_99: f64,
}

/// Simulated null false-positive rates of the correlation test.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub d: usize,
    pub threshold: f64,
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    pub fn entry(&self, n: usize) -> Option<&CalibrationEntry> {
        self.entries.iter().find(|e| e.n == n)
    }

    /// Certified false-positive bound for a correlation test on `n` samples.
    pub fn bound_for(&self, test: &CorrelationTest, n: usize) -> Option<f64> {
        if test.threshold != self.threshold || test.w().len() != self.d {
            return None;
        }
        self.entry(n).map(|e| e.upper_99)
    }
}

/// Estimates `Pr[mean(y x_1) > 1]` under the global null for every `n` in
/// `sizes`, from `replications` fresh datasets each.
///
/// Replication `r` at size `n` draws from substream `(n, r)` of `stream`.
/// By rotational invariance of the global null the rate is the same for
/// every unit direction, so `w = e_1` is used.
pub fn calibrate_correlation_null(
    sizes: &[usize],
    d: usize,
    replications: u64,
    stream: &RngStream,
) -> Result<CalibrationTable> {
    if replications < MIN_CALIBRATION_REPLICATIONS {
        return Err(Error::Domain(format!(
            "calibration needs at least {MIN_CALIBRATION_REPLICATIONS} replications, got {replications}"
        )));
    }
    let model = DistributionModel::global_null(d)?;
    let mut e1 = alloc::vec![0.0; d];
    e1[0] = 1.0;
    let test = make_correlation_test(e1, DEFAULT_CORRELATION_THRESHOLD)?;
    let mut entries = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let by_size = stream.child(n as u64);
        let mut exceedances = 0u64;
        for r in 0..replications {
            let data = model.sample_dataset(n, &by_size.child(r));
            if empirical_mean_loss(test.loss(), &data)? > test.threshold {
                exceedances += 1;
            }
        }
        entries.push(calibration_entry(n, exceedances, replications)?);
    }
    Ok(CalibrationTable {
        d,
        threshold: DEFAULT_CORRELATION_THRESHOLD,
        entries,
    })
}

pub fn calibration_entry(n: usize, exceedances: u64, replications: u64) -> Result<CalibrationEntry> {
    Ok(CalibrationEntry {
        n,
        p_hat: exceedances as f64 / replications as f64,
        exceedances,
        replications,
        upper_99: binomial_upper_bound(exceedances, replications, CALIBRATION_LEVEL)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use alloc::vec;

    fn one(x: &[f64], y: f64) -> Dataset {
        Dataset::from_samples(x.len(), [Sample::new(x.to_vec(), y).unwrap()]).unwrap()
    }

    #[test]
    fn linear_loss_values() {
        let loss = make_linear_loss(vec![1.0, 0.0]).unwrap();
        let s = Sample::new(vec![0.2, 5.0], 1.0).unwrap();
        assert_eq!(loss.eval(s.as_ref()), 0.2);
        let s = Sample::new(vec![3.0, 5.0], 1.0).unwrap();
        assert_eq!(loss.eval(s.as_ref()), 1.0);
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let loss = make_linear_loss(vec![r, r]).unwrap();
        let s = Sample::new(vec![1.0, 1.0], -1.0).unwrap();
        assert_eq!(loss.eval(s.as_ref()), -1.0);
        assert!(matches!(make_linear_loss(vec![1.0, 1.0]), Err(Error::Norm { .. })));
    }

    #[test]
    fn gapped_decisions() {
        let data = one(&[1.0], 1.0);
        let t = GappedLossTest::standard(LossFunction::Constant(1.0), "one").unwrap();
        assert!(evaluate_gapped_test(&t, &data).unwrap());
        let t = GappedLossTest::standard(LossFunction::Constant(0.5), "half").unwrap();
        assert!(!evaluate_gapped_test(&t, &data).unwrap());
        assert_eq!(
            evaluate_gapped_test(&t, &Dataset::new(1).unwrap()),
            Err(Error::EmptyData)
        );
    }

    #[test]
    fn gapped_construction_guards() {
        assert_eq!(
            GappedLossTest::standard(LossFunction::Correlation { w: vec![1.0] }, "x"),
            Err(Error::Unbounded)
        );
        assert_eq!(
            GappedLossTest::standard(LossFunction::Constant(1.5), "x"),
            Err(Error::Unbounded)
        );
        assert!(GappedLossTest::new(LossFunction::Constant(0.0), 1.0, "x").is_err());
        assert!(GappedLossTest::new(LossFunction::Constant(0.0), 0.0, "x").is_err());
    }

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_p_bound(0, 0.5, 2.0), 1.0);
        assert!((hoeffding_p_bound(8, 0.5, 2.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((hoeffding_p_bound(184, 0.5, 2.0) / 1.026_187_963_170_189e-10 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn holdout_size_examples() {
        assert_eq!(required_holdout_size(1, 1, libm::exp(-1.0)).unwrap(), 8);
        assert_eq!(required_holdout_size(1000, 1, 0.05).unwrap(), 80);
        assert_eq!(required_holdout_size(1 << 20, 2, 0.05).unwrap(), 246);
        assert_eq!(required_holdout_size(50, 2, 0.05).unwrap(), 87);
        assert!(required_holdout_size(0, 1, 0.05).is_err());
        assert!(required_holdout_size(3, 4, 0.05).is_err());
        assert!(required_holdout_size(3, 1, 1.0).is_err());
        assert!(required_holdout_size(3, 0, 0.5).is_err());
    }

    #[test]
    fn holdout_size_extreme_budget() {
        let s = 1u64 << 63;
        let h = required_holdout_size(s, 64, 0.05).unwrap();
        let expect = 8.0 * (64.0 * 63.0 * core::f64::consts::LN_2 - libm::log(0.05));
        assert_eq!(h, libm::ceil(expect) as usize);
        assert_eq!(per_test_alpha(s, 64, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(per_test_alpha(100, 1, 0.05).unwrap() * 100.0, 0.05);
        assert!((per_test_alpha(100, 1, 0.05).unwrap() - 5e-4).abs() < 1e-18);
        assert_eq!(per_test_alpha(1, 1, 0.05).unwrap(), 0.05);
        assert!((per_test_alpha(1000, 2, 0.01).unwrap() / 1e-8 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_examples() {
        let t = make_correlation_test(vec![1.0], 1.0).unwrap();
        let spec = TestSpec::Correlation(t);
        let data = one(&[3.0], 1.0);
        assert_eq!(spec.statistic(&data).unwrap(), 3.0);
        assert!(spec.accepts(&data).unwrap());
        let t = make_correlation_test(vec![1.0], 0.0).unwrap();
        let two = Dataset::from_samples(
            1,
            [Sample::new(vec![2.0], 1.0).unwrap(), Sample::new(vec![-2.0], 1.0).unwrap()],
        )
        .unwrap();
        let spec = TestSpec::Correlation(t);
        assert_eq!(spec.statistic(&two).unwrap(), 0.0);
        assert!(!spec.accepts(&two).unwrap());
        assert!(matches!(make_correlation_test(vec![2.0], 1.0), Err(Error::Norm { .. })));
    }

    #[test]
    fn hashes_depend_on_description() {
        let a: TestSpec = GappedLossTest::standard(LossFunction::Constant(1.0), "a").unwrap().into();
        let b: TestSpec = GappedLossTest::standard(LossFunction::Constant(1.0), "b").unwrap().into();
        let c: TestSpec = GappedLossTest::new(LossFunction::Constant(1.0), 0.4, "a").unwrap().into();
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash(), a.clone().hash());
        assert_eq!(alloc::format!("{}", a.hash()).len(), 64);
    }

    #[test]
    fn calibration_guards() {
        assert!(calibrate_correlation_null(&[1], 1, 100, &RngStream::new(1)).is_err());
        assert_eq!(
            calibrate_correlation_null(&[0], 1, 10_000, &RngStream::new(1)),
            Err(Error::EmptyData)
        );
    }
}
