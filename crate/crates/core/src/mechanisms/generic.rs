use alloc::vec::Vec;
use core::fmt;

use super::{LockReason, Mechanism, MechanismResponse};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::testkit::{BudgetSpec, CalibrationTable, TestHash, TestSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OracleMode {
    /// Lock after `k_max` confirmations.
    #[default]
    StopOnConfirms,
    /// Lock after `k_max` rejections.
    StopOnRejects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleState {
    Active,
    Locked(LockReason),
}

/// One audited query: 1-based index, hash of the test, and the bit returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TranscriptEntry {
    pub query_index: u64,
    pub test_hash: TestHash,
    pub bit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleWarning {
    /// The holdout is smaller than the gapped-loss family needs at this
    /// budget; gapped queries will fail with `TestTooWeak`.
    UndersizedHoldout { holdout: usize, required: usize },
}

/// Budgeted holdout validator that reveals one bit per query.
///
/// The holdout is owned and never handed out: every public accessor returns
/// counters, lock state, warnings or the transcript (hashes and bits).
pub struct GenericHoldoutOracle {
    holdout: Dataset,
    budget: BudgetSpec,
    mode: OracleMode,
    queries_used: u64,
    confirmations: u64,
    rejections: u64,
    state: OracleState,
    transcript: Vec<TranscriptEntry>,
    calibration: Option<CalibrationTable>,
    warnings: Vec<OracleWarning>,
}

impl fmt::Debug for GenericHoldoutOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericHoldoutOracle")
            .field("holdout_size", &self.holdout.len())
            .field("budget", &self.budget)
            .field("mode", &self.mode)
            .field("queries_used", &self.queries_used)
            .field("confirmations", &self.confirmations)
            .field("rejections", &self.rejections)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

impl GenericHoldoutOracle {
    pub fn new(holdout: Dataset, s_max: u64, k_max: u32, p0: f64, mode: OracleMode) -> Result<Self> {
        if holdout.is_empty() {
            return Err(Error::EmptyData);
        }
        let budget = BudgetSpec::new(s_max, k_max, p0)?;
        let required = budget.required_holdout_size();
        let mut warnings = Vec::new();
        if holdout.len() < required {
            warnings.push(OracleWarning::UndersizedHoldout {
                holdout: holdout.len(),
                required,
            });
        }
        Ok(Self {
            holdout,
            budget,
            mode,
            queries_used: 0,
            confirmations: 0,
            rejections: 0,
            state: OracleState::Active,
            transcript: Vec::new(),
            calibration: None,
            warnings,
        })
    }

    /// Attaches a null calibration table, enabling correlation-family tests.
    pub fn with_calibration(mut self, table: CalibrationTable) -> Self {
        self.calibration = Some(table);
        self
    }

    pub fn state(&self) -> OracleState {
        self.state
    }
    pub fn is_active(&self) -> bool {
        self.state == OracleState::Active
    }
    pub fn mode(&self) -> OracleMode {
        self.mode
    }
    pub fn budget(&self) -> &BudgetSpec {
        &self.budget
    }
    pub fn queries_used(&self) -> u64 {
        self.queries_used
    }
    pub fn confirmations(&self) -> u64 {
        self.confirmations
    }
    pub fn rejections(&self) -> u64 {
        self.rejections
    }
    pub fn remaining_queries(&self) -> u64 {
        self.budget.s_max() - self.queries_used
    }
    pub fn holdout_size(&self) -> usize {
        self.holdout.len()
    }
    pub fn warnings(&self) -> &[OracleWarning] {
        &self.warnings
    }
    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    fn ensure_active(&self) -> Result<()> {
        match self.state {
            OracleState::Active => Ok(()),
            OracleState::Locked(reason) => Err(Error::Locked(reason)),
        }
    }

    /// Checks that `test` is certified at the per-test level on this
    /// holdout. Failing tests consume no budget.
    fn certify(&self, test: &TestSpec) -> Result<()> {
        if let Some(d) = test.loss().dim() {
            if d != self.holdout.dim() {
                return Err(Error::Dimension {
                    expected: self.holdout.dim(),
                    got: d,
                });
            }
        }
        let h = self.holdout.len();
        let alpha = self.budget.alpha();
        match test {
            TestSpec::Gapped(t) => {
                if self.budget.admits_gapped(t, h) {
                    Ok(())
                } else {
                    Err(Error::TestTooWeak {
                        bound: t.false_positive_bound(h),
                        alpha,
                    })
                }
            }
            TestSpec::Correlation(t) => {
                let bound = self.calibration.as_ref().and_then(|c| c.bound_for(t, h));
                match bound {
                    Some(b) if self.budget.admits_bound(b) => Ok(()),
                    Some(b) => Err(Error::TestTooWeak { bound: b, alpha }),
                    None => Err(Error::TestTooWeak { bound: 1.0, alpha }),
                }
            }
        }
    }

    fn record(&mut self, test: &TestSpec, bit: bool) {
        self.queries_used += 1;
        self.transcript.push(TranscriptEntry {
            query_index: self.queries_used,
            test_hash: test.hash(),
            bit,
        });
        if bit {
            self.confirmations += 1;
        } else {
            self.rejections += 1;
        }
        let k = u64::from(self.budget.k_max());
        let lock = match self.mode {
            OracleMode::StopOnConfirms if self.confirmations >= k => Some(LockReason::KReached),
            OracleMode::StopOnRejects if self.rejections >= k => Some(LockReason::RejectsReached),
            _ if self.queries_used >= self.budget.s_max() => Some(LockReason::BudgetExhausted),
            _ => None,
        };
        if let Some(reason) = lock {
            self.state = OracleState::Locked(reason);
        }
    }

    /// Evaluates `test` on the sealed holdout and returns only its outcome.
    pub fn query(&mut self, test: &TestSpec) -> Result<bool> {
        self.ensure_active()?;
        self.certify(test)?;
        let bit = test.accepts(&self.holdout)?;
        self.record(test, bit);
        Ok(bit)
    }

    /// Validates a family of tests together.
    ///
    /// All preconditions (size against remaining budget, certification of
    /// every test) are checked before anything is evaluated. Tests are then
    /// evaluated in order; if the stop condition is met partway, the oracle
    /// locks and the bits evaluated so far are returned, so the returned
    /// vector can be shorter than `tests`.
    pub fn query_batch(&mut self, tests: &[TestSpec]) -> Result<Vec<bool>> {
        self.ensure_active()?;
        let remaining = self.remaining_queries();
        if tests.len() as u64 > remaining {
            return Err(Error::BatchExceedsBudget {
                requested: tests.len(),
                remaining: remaining as usize,
            });
        }
        for t in tests {
            self.certify(t)?;
        }
        let mut bits = Vec::with_capacity(tests.len());
        for t in tests {
            if !self.is_active() {
                break;
            }
            let bit = t.accepts(&self.holdout)?;
            self.record(t, bit);
            bits.push(bit);
        }
        Ok(bits)
    }
}

impl Mechanism for GenericHoldoutOracle {
    fn respond(&mut self, test: &TestSpec) -> Result<MechanismResponse> {
        self.query(test).map(MechanismResponse::Bit)
    }
}
