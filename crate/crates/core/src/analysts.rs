//! Scripted adaptive analysts and the session loop that drives them.
//!
//! An analyst sees the exploration set, the responses to its own earlier
//! queries and a private random stream. It never receives a reference to
//! the holdout: the [`AnalystStrategy::next`] signature admits nothing else.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mechanisms::{LockReason, Mechanism, MechanismResponse, OracleMode, TranscriptEntry};
use crate::model::{DistributionModel, Truth};
use crate::rng::RngStream;
use crate::testkit::{make_correlation_test, GappedLossTest, TestSpec, DEFAULT_CORRELATION_THRESHOLD};
use crate::loss::LossFunction;

/// Ridge added to the normal equations when they are not positive definite.
pub const OLS_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Propose(TestSpec),
    Stop,
}

/// A sequential hypothesis-proposing policy.
pub trait AnalystStrategy {
    /// `history[i]` is the response to this analyst's `i`-th proposal.
    fn next(&mut self, exploration: &Dataset, history: &[MechanismResponse], rng: &mut dyn RngCore) -> Action;
}

/// Which test family an analyst phrases its probes in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeFamily {
    /// Untruncated correlation exceeding 1.
    Correlation,
    /// Truncated loss with the default 1/2 threshold.
    Gapped,
}

fn probe(family: ProbeFamily, w: Vec<f64>, label: &str) -> TestSpec {
    match family {
        ProbeFamily::Correlation => make_correlation_test(w, DEFAULT_CORRELATION_THRESHOLD)
            .expect("probe directions are unit vectors")
            .into(),
        ProbeFamily::Gapped => GappedLossTest::standard(
            LossFunction::linear(w).expect("probe directions are unit vectors"),
            label,
        )
        .expect("truncated loss is bounded")
        .into(),
    }
}

/// Probes every basis direction, then combines the observed correlation
/// signs into `w* = sign(c) / sqrt(d)`.
///
/// When responses carry values the `i`-th value is recorded as `c_i`. Bit
/// responses reveal nothing about `c_i`, so its sign defaults to `+1`
/// (as does `sign(0)`).
#[derive(Debug, Clone)]
pub struct FreedmanAdversary {
    d: usize,
    family: ProbeFamily,
    step: usize,
    correlations: Vec<Option<f64>>,
    final_direction: Option<Vec<f64>>,
}

impl FreedmanAdversary {
    pub fn new(d: usize, family: ProbeFamily) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        Ok(Self {
            d,
            family,
            step: 0,
            correlations: vec![None; d],
            final_direction: None,
        })
    }

    /// Recorded `c_i` (None where the response was a bare bit).
    pub fn correlations(&self) -> &[Option<f64>] {
        &self.correlations
    }

    pub fn final_direction(&self) -> Option<&[f64]> {
        self.final_direction.as_deref()
    }

    fn combined_direction(&self) -> Vec<f64> {
        let scale = 1.0 / libm::sqrt(self.d as f64);
        self.correlations
            .iter()
            .map(|c| match c {
                Some(v) if *v < 0.0 => -scale,
                _ => scale,
            })
            .collect()
    }
}

impl AnalystStrategy for FreedmanAdversary {
    fn next(&mut self, _exploration: &Dataset, history: &[MechanismResponse], _rng: &mut dyn RngCore) -> Action {
        for (i, r) in history.iter().enumerate().take(self.d.min(self.step)) {
            self.correlations[i] = r.value();
        }
        let action = if self.step < self.d {
            let mut e = vec![0.0; self.d];
            e[self.step] = 1.0;
            Action::Propose(probe(self.family, e, &format!("freedman/e{}", self.step + 1)))
        } else if self.step == self.d {
            let w = self.combined_direction();
            self.final_direction = Some(w.clone());
            Action::Propose(probe(self.family, w, "freedman/combined"))
        } else {
            Action::Stop
        };
        self.step += 1;
        action
    }
}

/// Proposes i.i.d. uniformly random unit directions as gapped-loss tests
/// until the mechanism stops answering.
#[derive(Debug, Clone)]
pub struct RandomSearch {
    d: usize,
    proposed: u64,
}

impl RandomSearch {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        Ok(Self { d, proposed: 0 })
    }
}

pub(crate) fn random_unit_vector(d: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = libm::sqrt(w.iter().map(|v| v * v).sum::<f64>());
        if norm > 1e-12 {
            w.iter_mut().for_each(|v| *v /= norm);
            return w;
        }
    }
}

impl AnalystStrategy for RandomSearch {
    fn next(&mut self, _exploration: &Dataset, _history: &[MechanismResponse], rng: &mut dyn RngCore) -> Action {
        self.proposed += 1;
        let w = random_unit_vector(self.d, rng);
        Action::Propose(probe(ProbeFamily::Gapped, w, &format!("random/{}", self.proposed)))
    }
}

/// Fits least squares on the exploration set and validates the fitted
/// direction once.
#[derive(Debug, Clone, Default)]
pub struct PlantedAnalyst {
    done: bool,
    fitted: Option<Vec<f64>>,
}

impl PlantedAnalyst {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fitted(&self) -> Option<&[f64]> {
        self.fitted.as_deref()
    }
}

impl AnalystStrategy for PlantedAnalyst {
    fn next(&mut self, exploration: &Dataset, _history: &[MechanismResponse], _rng: &mut dyn RngCore) -> Action {
        if self.done {
            return Action::Stop;
        }
        self.done = true;
        match ols_fit(exploration) {
            Ok(w) => {
                self.fitted = Some(w.clone());
                Action::Propose(probe(ProbeFamily::Gapped, w, "planted/ols"))
            }
            Err(_) => Action::Stop,
        }
    }
}

/// Stops without proposing anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct StopImmediately;

impl AnalystStrategy for StopImmediately {
    fn next(&mut self, _: &Dataset, _: &[MechanismResponse], _: &mut dyn RngCore) -> Action {
        Action::Stop
    }
}

/// Proposes a fixed list of tests in order, then stops.
#[derive(Debug, Clone)]
pub struct Scripted {
    tests: Vec<TestSpec>,
    next: usize,
}

impl Scripted {
    pub fn new(tests: Vec<TestSpec>) -> Self {
        Self { tests, next: 0 }
    }
}

impl AnalystStrategy for Scripted {
    fn next(&mut self, _: &Dataset, _: &[MechanismResponse], _: &mut dyn RngCore) -> Action {
        match self.tests.get(self.next) {
            Some(t) => {
                self.next += 1;
                Action::Propose(t.clone())
            }
            None => Action::Stop,
        }
    }
}

/// Least-squares coefficients of `y` on `x`, scaled to unit length.
///
/// Normal equations whose Cholesky factor is singular or numerically close
/// to it (diagonal ratio below 1e-7) are solved with an [`OLS_RIDGE`]
/// ridge instead.
pub fn ols_fit(exploration: &Dataset) -> Result<Vec<f64>> {
    let d = exploration.dim();
    let n = exploration.len();
    if n < d {
        return Err(Error::InsufficientData { needed: d, got: n });
    }
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut xty = DVector::<f64>::zeros(d);
    for s in exploration.iter() {
        for i in 0..d {
            xty[i] += s.x[i] * s.y;
            for j in 0..=i {
                gram[(i, j)] += s.x[i] * s.x[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    let well_conditioned = |ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        let diag = ch.l_dirty().diagonal();
        diag.min() > 1e-7 * diag.max()
    };
    let coef = match gram.clone().cholesky().filter(well_conditioned) {
        Some(ch) => ch.solve(&xty),
        None => {
            let ridged = gram + DMatrix::<f64>::identity(d, d) * OLS_RIDGE;
            ridged
                .cholesky()
                .ok_or_else(|| Error::Domain("normal equations are singular".into()))?
                .solve(&xty)
        }
    };
    let norm = coef.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Domain("least-squares fit is degenerate".into()));
    }
    Ok(coef.iter().map(|c| c / norm).collect())
}

/// Caps the session applies on top of whatever the mechanism enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionLimits {
    pub s_max: u64,
    pub k_max: u32,
    pub mode: OracleMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    KReached,
    RejectsReached,
    SExhausted,
    AnalystStopped,
    PoolExhausted,
    TestTooWeak,
    OverfitBudgetExhausted,
    MechanismError,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::KReached => "k_reached",
            Self::RejectsReached => "rejects_reached",
            Self::SExhausted => "s_exhausted",
            Self::AnalystStopped => "analyst_stopped",
            Self::PoolExhausted => "pool_exhausted",
            Self::TestTooWeak => "test_too_weak",
            Self::OverfitBudgetExhausted => "overfit_budget_exhausted",
            Self::MechanismError => "mechanism_error",
        }
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::Locked(LockReason::KReached) => Self::KReached,
            Error::Locked(LockReason::RejectsReached) => Self::RejectsReached,
            Error::Locked(LockReason::BudgetExhausted) | Error::BatchExceedsBudget { .. } => Self::SExhausted,
            Error::PoolExhausted => Self::PoolExhausted,
            Error::TestTooWeak { .. } => Self::TestTooWeak,
            Error::OverfitBudgetExhausted => Self::OverfitBudgetExhausted,
            _ => Self::MechanismError,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmedTest {
    pub query_index: u64,
    pub test: TestSpec,
    pub truth: Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub confirmed: Vec<ConfirmedTest>,
    /// Hash and confirmation bit of every answered query.
    pub transcript: Vec<TranscriptEntry>,
    /// Raw mechanism responses, in order.
    pub responses: Vec<MechanismResponse>,
    pub stop_reason: StopReason,
    pub error: Option<Error>,
}

impl SessionResult {
    pub fn queries_used(&self) -> u64 {
        self.responses.len() as u64
    }

    pub fn false_confirmations(&self) -> usize {
        self.confirmed.iter().filter(|c| c.truth == Truth::Null).count()
    }

    pub fn true_confirmations(&self) -> usize {
        self.confirmed.iter().filter(|c| c.truth == Truth::Alternative).count()
    }
}

/// Runs the propose/validate loop until the analyst stops, a limit is hit
/// or the mechanism refuses. Confirmed tests are labelled by `model`.
pub fn run_session<A, M>(
    analyst: &mut A,
    mechanism: &mut M,
    exploration: &Dataset,
    model: &DistributionModel,
    limits: SessionLimits,
    stream: &RngStream,
) -> SessionResult
where
    A: AnalystStrategy + ?Sized,
    M: Mechanism + ?Sized,
{
    let mut rng = stream.rng();
    let mut result = SessionResult {
        confirmed: Vec::new(),
        transcript: Vec::new(),
        responses: Vec::new(),
        stop_reason: StopReason::AnalystStopped,
        error: None,
    };
    let k = u64::from(limits.k_max);
    let mut rejections = 0u64;
    loop {
        let confirmations = result.confirmed.len() as u64;
        match limits.mode {
            OracleMode::StopOnConfirms if confirmations >= k => {
                result.stop_reason = StopReason::KReached;
                break;
            }
            OracleMode::StopOnRejects if rejections >= k => {
                result.stop_reason = StopReason::RejectsReached;
                break;
            }
            _ => {}
        }
        if result.queries_used() >= limits.s_max {
            result.stop_reason = StopReason::SExhausted;
            break;
        }
        let test = match analyst.next(exploration, &result.responses, &mut rng) {
            Action::Stop => {
                result.stop_reason = StopReason::AnalystStopped;
                break;
            }
            Action::Propose(t) => t,
        };
        match mechanism.respond(&test) {
            Ok(response) => {
                result.responses.push(response);
                let index = result.queries_used();
                let bit = response.confirms(&test);
                result.transcript.push(TranscriptEntry {
                    query_index: index,
                    test_hash: test.hash(),
                    bit,
                });
                if bit {
                    let truth = model.truth(test.loss());
                    result.confirmed.push(ConfirmedTest {
                        query_index: index,
                        test,
                        truth,
                    });
                } else {
                    rejections += 1;
                }
            }
            Err(e) => {
                result.stop_reason = StopReason::from_error(&e);
                result.error = Some(e);
                break;
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::mechanisms::{GenericHoldoutOracle, NaiveDisclosure};
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha20Rng {
        rand_chacha::ChaCha20Rng::seed_from_u64(0)
    }

    fn assert_close(got: &[f64], want: &[f64]) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{got:?} vs {want:?}");
        }
    }

    fn empty(d: usize) -> Dataset {
        Dataset::new(d).unwrap()
    }

    #[test]
    fn freedman_probes_basis_first() {
        let mut a = FreedmanAdversary::new(3, ProbeFamily::Correlation).unwrap();
        match a.next(&empty(3), &[], &mut rng()) {
            Action::Propose(TestSpec::Correlation(t)) => assert_eq!(t.w(), &[1.0, 0.0, 0.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn freedman_combines_signs() {
        let mut a = FreedmanAdversary::new(2, ProbeFamily::Correlation).unwrap();
        let mut r = rng();
        let x = empty(2);
        a.next(&x, &[], &mut r);
        a.next(&x, &[MechanismResponse::Value(0.3)], &mut r);
        let history = [MechanismResponse::Value(0.3), MechanismResponse::Value(-0.2)];
        let s = core::f64::consts::FRAC_1_SQRT_2;
        match a.next(&x, &history, &mut r) {
            Action::Propose(TestSpec::Correlation(t)) => assert_close(t.w(), &[s, -s]),
            other => panic!("{other:?}"),
        }
        assert_eq!(a.next(&x, &history, &mut r), Action::Stop);
    }

    #[test]
    fn freedman_degrades_on_bits() {
        let mut a = FreedmanAdversary::new(2, ProbeFamily::Gapped).unwrap();
        let mut r = rng();
        let x = empty(2);
        a.next(&x, &[], &mut r);
        a.next(&x, &[MechanismResponse::Bit(false)], &mut r);
        let history = [MechanismResponse::Bit(false), MechanismResponse::Bit(false)];
        let s = core::f64::consts::FRAC_1_SQRT_2;
        match a.next(&x, &history, &mut r) {
            Action::Propose(TestSpec::Gapped(t)) => assert_close(t.loss().direction().unwrap(), &[s, s]),
            other => panic!("{other:?}"),
        }
        assert_eq!(a.correlations(), &[None, None]);
    }

    #[test]
    fn random_search_unit_and_seeded() {
        let mut a = RandomSearch::new(5).unwrap();
        let mut b = RandomSearch::new(5).unwrap();
        let (pa, pb) = (a.next(&empty(5), &[], &mut rng()), b.next(&empty(5), &[], &mut rng()));
        assert_eq!(pa, pb);
        match pa {
            Action::Propose(t) => {
                let w = t.loss().direction().unwrap();
                let norm: f64 = w.iter().map(|v| v * v).sum();
                assert!((norm.sqrt() - 1.0).abs() < 1e-9);
            }
            Action::Stop => panic!(),
        }
    }

    #[test]
    fn ols_exact_recovery() {
        let model = DistributionModel::global_null(2).unwrap();
        let noise = model.sample_dataset(50, &RngStream::new(4));
        let data = Dataset::from_samples(
            2,
            noise.iter().map(|s| Sample::new(s.x.to_vec(), 3.0 * s.x[0]).unwrap()),
        )
        .unwrap();
        let w = ols_fit(&data).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-6 && w[1].abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn ols_too_small() {
        let data = DistributionModel::global_null(4).unwrap().sample_dataset(3, &RngStream::new(1));
        assert_eq!(ols_fit(&data), Err(Error::InsufficientData { needed: 4, got: 3 }));
    }

    #[test]
    fn ols_rank_deficient_uses_ridge() {
        // second feature duplicates the first
        let base = DistributionModel::global_null(1).unwrap().sample_dataset(20, &RngStream::new(2));
        let data = Dataset::from_samples(
            2,
            base.iter().map(|s| Sample::new(vec![s.x[0], s.x[0]], 2.0 * s.x[0]).unwrap()),
        )
        .unwrap();
        let w = ols_fit(&data).unwrap();
        let s = core::f64::consts::FRAC_1_SQRT_2;
        assert!((w[0] - s).abs() < 1e-6 && (w[1] - s).abs() < 1e-6, "{w:?}");
    }

    fn limits(s: u64, k: u32) -> SessionLimits {
        SessionLimits {
            s_max: s,
            k_max: k,
            mode: OracleMode::StopOnConfirms,
        }
    }

    #[test]
    fn immediate_stop() {
        let model = DistributionModel::global_null(2).unwrap();
        let h = model.sample_dataset(100, &RngStream::new(1));
        let mut oracle = GenericHoldoutOracle::new(h, 10, 1, 0.05, OracleMode::StopOnConfirms).unwrap();
        let r = run_session(&mut StopImmediately, &mut oracle, &empty(2), &model, limits(10, 1), &RngStream::new(2));
        assert!(r.confirmed.is_empty());
        assert_eq!(r.stop_reason, StopReason::AnalystStopped);
    }

    #[test]
    fn session_stops_after_k_confirmations() {
        let model = DistributionModel::global_null(2).unwrap();
        let h = model.sample_dataset(100, &RngStream::new(1));
        let one: TestSpec = GappedLossTest::standard(LossFunction::Constant(1.0), "one").unwrap().into();
        let mut analyst = Scripted::new(vec![one.clone(), one.clone(), one]);
        let mut naive = NaiveDisclosure::new(h).unwrap();
        let r = run_session(&mut analyst, &mut naive, &empty(2), &model, limits(10, 2), &RngStream::new(2));
        assert_eq!(r.stop_reason, StopReason::KReached);
        assert_eq!(r.queries_used(), 2);
        assert_eq!(r.confirmed.len(), 2);
    }

    #[test]
    fn locked_oracle_maps_to_stop_reason() {
        let model = DistributionModel::global_null(2).unwrap();
        let h = model.sample_dataset(100, &RngStream::new(1));
        let mut oracle = GenericHoldoutOracle::new(h, 3, 1, 0.05, OracleMode::StopOnConfirms).unwrap();
        let mut analyst = RandomSearch::new(2).unwrap();
        // session cap above the oracle budget: the oracle's lock ends the run
        let r = run_session(&mut analyst, &mut oracle, &empty(2), &model, limits(10, 1), &RngStream::new(3));
        assert_eq!(r.stop_reason, StopReason::SExhausted);
        assert_eq!(r.queries_used(), 3);
        assert_eq!(r.error, Some(Error::Locked(LockReason::BudgetExhausted)));
    }

    #[test]
    fn weak_test_ends_session() {
        let model = DistributionModel::global_null(2).unwrap();
        let h = model.sample_dataset(10, &RngStream::new(1));
        let mut oracle = GenericHoldoutOracle::new(h, 1000, 1, 0.05, OracleMode::StopOnConfirms).unwrap();
        let mut analyst = RandomSearch::new(2).unwrap();
        let r = run_session(&mut analyst, &mut oracle, &empty(2), &model, limits(1000, 1), &RngStream::new(3));
        assert_eq!(r.stop_reason, StopReason::TestTooWeak);
        assert_eq!(r.queries_used(), 0);
    }
}
