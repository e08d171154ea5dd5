//! Leaky baselines the generic oracle is compared against, and the
//! confidence estimate on an untouched second holdout.

use alloc::format;

use rand_distr::{Distribution, Open01};

use super::{Mechanism, MechanismResponse};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{empirical_mean_loss, LossFunction};
use crate::rng::{RngStream, StreamRng};
use crate::testkit::{TestSpec, GAPPED_RANGE_WIDTH};

/// Exact empirical mean loss on the holdout. No budget, no lock.
pub fn naive_disclosure_query(holdout: &Dataset, loss: &LossFunction) -> Result<f64> {
    empirical_mean_loss(loss, holdout)
}

/// Reveals the exact test statistic of every query.
#[derive(Debug, Clone)]
pub struct NaiveDisclosure {
    holdout: Dataset,
}

impl NaiveDisclosure {
    pub fn new(holdout: Dataset) -> Result<Self> {
        if holdout.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok(Self { holdout })
    }
}

impl Mechanism for NaiveDisclosure {
    fn respond(&mut self, test: &TestSpec) -> Result<MechanismResponse> {
        naive_disclosure_query(&self.holdout, test.loss()).map(MechanismResponse::Value)
    }
}

/// Evaluates `test` on `pool[cursor..cursor + test_size]` and returns the
/// outcome with the advanced cursor.
pub fn fresh_split_query(
    pool: &Dataset,
    cursor: usize,
    test: &TestSpec,
    test_size: usize,
) -> Result<(bool, usize)> {
    if test_size == 0 {
        return Err(Error::EmptyData);
    }
    let end = cursor.checked_add(test_size).ok_or(Error::PoolExhausted)?;
    if end > pool.len() {
        return Err(Error::PoolExhausted);
    }
    let chunk = pool.slice(cursor, end)?;
    Ok((test.accepts(&chunk)?, end))
}

/// Uses a fresh, never reused chunk of the pool for every query.
#[derive(Debug, Clone)]
pub struct FreshSplit {
    pool: Dataset,
    cursor: usize,
    test_size: usize,
}

impl FreshSplit {
    pub fn new(pool: Dataset, test_size: usize) -> Result<Self> {
        if test_size == 0 {
            return Err(Error::EmptyData);
        }
        Ok(Self {
            pool,
            cursor: 0,
            test_size,
        })
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }
}

impl Mechanism for FreshSplit {
    fn respond(&mut self, test: &TestSpec) -> Result<MechanismResponse> {
        let (bit, cursor) = fresh_split_query(&self.pool, self.cursor, test, self.test_size)?;
        self.cursor = cursor;
        Ok(MechanismResponse::Bit(bit))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdoutParams {
    /// Similarity threshold `T` on `|mean_exploration - mean_holdout|`.
    pub threshold: f64,
    /// Laplace scale of both the threshold and the answer noise.
    pub noise: f64,
    /// Number of dissimilar answers allowed; `None` means one per holdout sample.
    pub overfit_budget: Option<u64>,
}

impl Default for ThresholdoutParams {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            noise: 0.03,
            overfit_budget: None,
        }
    }
}

/// Behavioural simplification of the reusable-holdout mechanism: answer from
/// the exploration set while it agrees with the holdout, otherwise spend one
/// unit of overfitting budget and release a noised holdout value.
#[derive(Debug, Clone)]
pub struct ThresholdoutBaseline {
    exploration: Dataset,
    holdout: Dataset,
    threshold: f64,
    noise: f64,
    budget: u64,
    rng: StreamRng,
}

impl ThresholdoutBaseline {
    pub fn new(
        exploration: Dataset,
        holdout: Dataset,
        params: ThresholdoutParams,
        noise_stream: &RngStream,
    ) -> Result<Self> {
        if exploration.is_empty() || holdout.is_empty() {
            return Err(Error::EmptyData);
        }
        if !(params.threshold >= 0.0 && params.noise >= 0.0) {
            return Err(Error::Domain(format!(
                "thresholdout needs T >= 0 and noise >= 0, got T={} noise={}",
                params.threshold, params.noise
            )));
        }
        let budget = params.overfit_budget.unwrap_or(holdout.len() as u64);
        Ok(Self {
            exploration,
            holdout,
            threshold: params.threshold,
            noise: params.noise,
            budget,
            rng: noise_stream.rng(),
        })
    }

    pub fn remaining_budget(&self) -> u64 {
        self.budget
    }

    fn laplace(&mut self) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        let u: f64 = Open01.sample(&mut self.rng);
        let u = u - 0.5;
        -self.noise * u.signum() * libm::log(1.0 - 2.0 * u.abs())
    }
}

pub fn thresholdout_query(baseline: &mut ThresholdoutBaseline, loss: &LossFunction) -> Result<f64> {
    if baseline.budget == 0 {
        return Err(Error::OverfitBudgetExhausted);
    }
    let on_exploration = empirical_mean_loss(loss, &baseline.exploration)?;
    let on_holdout = empirical_mean_loss(loss, &baseline.holdout)?;
    let slack = baseline.threshold + baseline.laplace();
    if (on_exploration - on_holdout).abs() <= slack {
        Ok(on_exploration)
    } else {
        baseline.budget -= 1;
        Ok(on_holdout + baseline.laplace())
    }
}

impl Mechanism for ThresholdoutBaseline {
    fn respond(&mut self, test: &TestSpec) -> Result<MechanismResponse> {
        thresholdout_query(self, test.loss()).map(MechanismResponse::ThresholdoutValue)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Mean loss on a fresh dataset with a two-sided Hoeffding interval,
/// clamped to the loss range `[-1, 1]`.
pub fn estimate_confidence(loss: &LossFunction, fresh: &Dataset, level: f64) -> Result<ConfidenceEstimate> {
    if !loss.is_bounded() {
        return Err(Error::Unbounded);
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1], got {level}")));
    }
    let mean = empirical_mean_loss(loss, fresh)?;
    let half_width = libm::sqrt(
        GAPPED_RANGE_WIDTH * GAPPED_RANGE_WIDTH * libm::log(2.0 / (1.0 - level)) / (2.0 * fresh.len() as f64),
    );
    Ok(ConfidenceEstimate {
        mean,
        half_width,
        lo: (mean - half_width).max(-1.0),
        hi: (mean + half_width).min(1.0),
    })
}
