//! Holdout mechanisms: the budgeted one-bit oracle and leaky baselines.

mod baselines;
mod generic;

pub use baselines::{
    estimate_confidence, fresh_split_query, naive_disclosure_query, thresholdout_query,
    ConfidenceEstimate, FreshSplit, NaiveDisclosure, ThresholdoutBaseline, ThresholdoutParams,
};
pub use generic::{
    GenericHoldoutOracle, OracleMode, OracleState, OracleWarning, TranscriptEntry,
};

use core::fmt;

use crate::error::Result;
use crate::testkit::TestSpec;

/// What a mechanism reveals about the holdout for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MechanismResponse {
    Bit(bool),
    Value(f64),
    ThresholdoutValue(f64),
}

impl MechanismResponse {
    /// Whether the response confirms `test`. Value responses are judged by
    /// the test's own threshold.
    pub fn confirms(&self, test: &TestSpec) -> bool {
        match *self {
            Self::Bit(b) => b,
            Self::Value(v) | Self::ThresholdoutValue(v) => test.decide(v),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Self::Bit(_) => None,
            Self::Value(v) | Self::ThresholdoutValue(v) => Some(v),
        }
    }
}

/// Why a generic oracle stopped answering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LockReason {
    /// `k_max` confirmations reached (stop-on-confirms mode).
    KReached,
    /// `k_max` rejections reached (stop-on-rejects mode).
    RejectsReached,
    /// `s_max` queries used.
    BudgetExhausted,
}

impl fmt::Display for LockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::KReached => "confirmation budget reached",
            Self::RejectsReached => "rejection budget reached",
            Self::BudgetExhausted => "query budget exhausted",
        })
    }
}

/// Anything that answers hypothesis-test queries against held-out data.
pub trait Mechanism {
    fn respond(&mut self, test: &TestSpec) -> Result<MechanismResponse>;
}
