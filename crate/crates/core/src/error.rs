use alloc::string::String;

use crate::mechanisms::LockReason;

/// Errors produced by the holdout library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("size {size} out of range (max {max})")]
    Size { size: usize, max: usize },
    #[error("invalid range: lo {lo} > hi {hi}")]
    Range { lo: f64, hi: f64 },
    #[error("empty dataset")]
    EmptyData,
    #[error("vector norm {norm} is not 1")]
    Norm { norm: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("oracle is locked: {0}")]
    Locked(LockReason),
    #[error("test false-positive bound {bound:e} exceeds per-test level {alpha:e}")]
    TestTooWeak { bound: f64, alpha: f64 },
    #[error("batch of {requested} tests exceeds remaining budget {remaining}")]
    BatchExceedsBudget { requested: usize, remaining: usize },
    #[error("holdout pool exhausted")]
    PoolExhausted,
    #[error("thresholdout overfitting budget exhausted")]
    OverfitBudgetExhausted,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("loss is not bounded in [-1, 1]")]
    Unbounded,
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
