//! Side-by-side Freedman attack on naive disclosure and the generic oracle.

use genhold_core::analysts::{run_session, FreedmanAdversary, ProbeFamily, SessionLimits, SessionResult};
use genhold_core::data::Dataset;
use genhold_core::mechanisms::{GenericHoldoutOracle, NaiveDisclosure, OracleMode, OracleState};
use genhold_core::model::DistributionModel;
use genhold_core::rng::RngStream;
use genhold_core::testkit::DEFAULT_CORRELATION_THRESHOLD;
use genhold_core::{Error, Result};

pub const ATTACK_P0: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackColumn {
    pub mechanism: &'static str,
    /// Exact statistic of the last answered query, where the mechanism
    /// reveals one.
    pub final_statistic: Option<f64>,
    /// The adversary's combined test got through.
    pub passed: bool,
    pub queries_used: u64,
    pub false_confirmations: u64,
    pub stop_reason: &'static str,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    pub s_max: u64,
    pub k_max: u32,
    pub p0: f64,
    pub alpha: f64,
    pub required_holdout: usize,
    pub holdout: usize,
    pub queries_used: u64,
    pub confirmations: u64,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub naive: AttackColumn,
    pub generic: AttackColumn,
    pub ledger: BudgetLedger,
}

fn column(mechanism: &'static str, session: &SessionResult, final_index: u64) -> AttackColumn {
    let final_statistic = session.responses.last().and_then(|r| r.value());
    let passed = session
        .transcript
        .iter()
        .any(|e| e.query_index == final_index && e.bit);
    AttackColumn {
        mechanism,
        final_statistic,
        passed,
        queries_used: session.queries_used(),
        false_confirmations: session.false_confirmations() as u64,
        stop_reason: session.stop_reason.as_str(),
        error: session.error.as_ref().map(ToString::to_string),
    }
}

/// Draws `n` global-null samples from `seed`, uses all of them as the
/// holdout, and lets the adversary probe each mechanism.
///
/// Naive disclosure gets correlation probes with no budget. The generic
/// oracle gets gapped probes under `s = d + 1, k = 1, p0 = 0.05`.
pub fn freedman_attack(d: usize, n: usize, seed: u64) -> Result<AttackReport> {
    if d == 0 {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let model = DistributionModel::global_null(d)?;
    let root = RngStream::new(seed);
    let holdout = model.sample_dataset(n, &root.child(0));
    let exploration = Dataset::new(d)?;
    let s_max = d as u64 + 1;

    let mut adversary = FreedmanAdversary::new(d, ProbeFamily::Correlation)?;
    let mut naive = NaiveDisclosure::new(holdout.clone())?;
    let unlimited = SessionLimits {
        s_max,
        k_max: u32::MAX,
        mode: OracleMode::StopOnConfirms,
    };
    let naive_session = run_session(&mut adversary, &mut naive, &exploration, &model, unlimited, &root.child(2));
    let mut naive_col = column("naive_disclosure", &naive_session, s_max);
    naive_col.passed = naive_col
        .final_statistic
        .is_some_and(|v| naive_session.queries_used() == s_max && v > DEFAULT_CORRELATION_THRESHOLD);

    let mut adversary = FreedmanAdversary::new(d, ProbeFamily::Gapped)?;
    let mut oracle = GenericHoldoutOracle::new(holdout, s_max, 1, ATTACK_P0, OracleMode::StopOnConfirms)?;
    let limits = SessionLimits {
        s_max,
        k_max: 1,
        mode: OracleMode::StopOnConfirms,
    };
    let generic_session = run_session(&mut adversary, &mut oracle, &exploration, &model, limits, &root.child(2));
    let generic_col = column("generic", &generic_session, s_max);
    let ledger = BudgetLedger {
        s_max,
        k_max: 1,
        p0: ATTACK_P0,
        alpha: oracle.budget().alpha(),
        required_holdout: oracle.budget().required_holdout_size(),
        holdout: oracle.holdout_size(),
        queries_used: oracle.queries_used(),
        confirmations: oracle.confirmations(),
        state: match oracle.state() {
            OracleState::Active => "active".to_owned(),
            OracleState::Locked(r) => format!("locked ({r})"),
        },
    };
    Ok(AttackReport {
        d,
        n,
        seed,
        naive: naive_col,
        generic: generic_col,
        ledger,
    })
}
