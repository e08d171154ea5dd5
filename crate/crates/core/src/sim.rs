//! Seeded Monte Carlo estimation of false-discovery rates and power.
//!
//! Replication `r` draws everything from substream `(r,)` of the root seed:
//! `(r, 0)` data, `(r, 1)` partition, `(r, 2)` analyst, `(r, 3)` mechanism
//! noise. Outcomes are therefore a pure function of `(config, r)`, and
//! [`Tally`] aggregation is a commutative sum, so any evaluation order or
//! worker count gives the same estimates.

use alloc::boxed::Box;
use alloc::format;

use sha2::{Digest, Sha256};

use crate::analysts::{
    run_session, AnalystStrategy, FreedmanAdversary, PlantedAnalyst, ProbeFamily, RandomSearch, SessionLimits,
    StopImmediately, StopReason,
};
use crate::data::partition;
use crate::error::{Error, Result};
use crate::mechanisms::{
    FreshSplit, GenericHoldoutOracle, Mechanism, NaiveDisclosure, OracleMode, ThresholdoutBaseline,
    ThresholdoutParams, TranscriptEntry,
};
use crate::model::DistributionModel;
use crate::rng::RngStream;
pub use crate::stats::wilson_ci;
use crate::testkit::{required_holdout_size, BudgetSpec};

const STREAM_DATA: u64 = 0;
const STREAM_PARTITION: u64 = 1;
const STREAM_ANALYST: u64 = 2;
const STREAM_MECHANISM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MechanismSpec {
    Generic { mode: OracleMode },
    NaiveDisclosure,
    /// Each query consumes `test_size` unused holdout samples.
    FreshSplit { test_size: usize },
    Thresholdout(ThresholdoutParams),
}

impl MechanismSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Generic { .. } => "generic",
            Self::NaiveDisclosure => "naive_disclosure",
            Self::FreshSplit { .. } => "fresh_split",
            Self::Thresholdout(_) => "thresholdout",
        }
    }

    /// Probe family a Freedman adversary uses against this mechanism:
    /// bounded tests where a per-test level is enforced, raw correlations
    /// against the leaky ones.
    pub fn natural_probe_family(&self) -> ProbeFamily {
        match self {
            Self::Generic { .. } | Self::FreshSplit { .. } => ProbeFamily::Gapped,
            Self::NaiveDisclosure | Self::Thresholdout(_) => ProbeFamily::Correlation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalystSpec {
    RandomSearch,
    /// `None` picks the mechanism's natural family.
    Freedman { family: Option<ProbeFamily> },
    Planted,
    Stop,
}

impl AnalystSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RandomSearch => "random_search",
            Self::Freedman { .. } => "freedman",
            Self::Planted => "planted",
            Self::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldoutSize {
    /// Smallest size certifying gapped-loss tests at `p0 / s^k`.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: DistributionModel,
    pub n_total: usize,
    pub holdout_size: HoldoutSize,
    pub s_max: u64,
    pub k_max: u32,
    pub p0: f64,
    pub mechanism: MechanismSpec,
    pub analyst: AnalystSpec,
    pub replications: u64,
    pub root_seed: u64,
}

impl ExperimentConfig {
    pub fn resolved_holdout_size(&self) -> Result<usize> {
        match self.holdout_size {
            HoldoutSize::Fixed(h) => Ok(h),
            HoldoutSize::Auto => {
                if self.s_max == 0 {
                    Ok(0)
                } else {
                    required_holdout_size(self.s_max, self.k_max, self.p0)
                }
            }
        }
    }

    /// `s^k * alpha`, which equals `p0` by construction of `alpha`.
    pub fn theoretical_bound(&self) -> f64 {
        self.p0
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        let h = self.resolved_holdout_size()?;
        if h > self.n_total {
            return Err(Error::Config(format!(
                "holdout_size {h} exceeds n_total {}",
                self.n_total
            )));
        }
        if self.s_max > 0 {
            BudgetSpec::new(self.s_max, self.k_max, self.p0)?;
        } else if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::Config(format!("p0 must lie in (0,1), got {}", self.p0)));
        }
        Ok(())
    }
}

/// Counters of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationOutcome {
    pub rep_index: u64,
    pub queries_used: u64,
    pub confirmations: u64,
    pub false_confirmations: u64,
    pub true_confirmations: u64,
    pub stop_reason: StopReason,
    /// SHA-256 over the session transcript.
    pub transcript_digest: [u8; 32],
}

fn digest_transcript(entries: &[TranscriptEntry]) -> [u8; 32] {
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.query_index.to_le_bytes());
        h.update(e.test_hash.0);
        h.update([u8::from(e.bit)]);
    }
    h.finalize().into()
}

fn build_analyst(config: &ExperimentConfig) -> Result<Box<dyn AnalystStrategy>> {
    let d = config.model.dim();
    Ok(match config.analyst {
        AnalystSpec::RandomSearch => Box::new(RandomSearch::new(d)?),
        AnalystSpec::Freedman { family } => Box::new(FreedmanAdversary::new(
            d,
            family.unwrap_or_else(|| config.mechanism.natural_probe_family()),
        )?),
        AnalystSpec::Planted => Box::new(PlantedAnalyst::new()),
        AnalystSpec::Stop => Box::new(StopImmediately),
    })
}

/// One draw of the experiment: sample, split, run a session, count.
pub fn run_replication(config: &ExperimentConfig, rep_index: u64) -> Result<ReplicationOutcome> {
    if rep_index >= config.replications {
        return Err(Error::Domain(format!(
            "replication index {rep_index} out of range (R = {})",
            config.replications
        )));
    }
    let h = config.resolved_holdout_size()?;
    if config.s_max == 0 {
        return Ok(ReplicationOutcome {
            rep_index,
            queries_used: 0,
            confirmations: 0,
            false_confirmations: 0,
            true_confirmations: 0,
            stop_reason: StopReason::SExhausted,
            transcript_digest: digest_transcript(&[]),
        });
    }
    let stream = RngStream::new(config.root_seed).child(rep_index);
    let data = config.model.sample_dataset(config.n_total, &stream.child(STREAM_DATA));
    let split = partition(&data, h, &stream.child(STREAM_PARTITION))?;
    let mut analyst = build_analyst(config)?;
    let mode = match config.mechanism {
        MechanismSpec::Generic { mode } => mode,
        _ => OracleMode::StopOnConfirms,
    };
    let mut mechanism: Box<dyn Mechanism> = match config.mechanism {
        MechanismSpec::Generic { mode } => Box::new(GenericHoldoutOracle::new(
            split.holdout,
            config.s_max,
            config.k_max,
            config.p0,
            mode,
        )?),
        MechanismSpec::NaiveDisclosure => Box::new(NaiveDisclosure::new(split.holdout)?),
        MechanismSpec::FreshSplit { test_size } => Box::new(FreshSplit::new(split.holdout, test_size)?),
        MechanismSpec::Thresholdout(params) => Box::new(ThresholdoutBaseline::new(
            split.exploration.clone(),
            split.holdout,
            params,
            &stream.child(STREAM_MECHANISM),
        )?),
    };
    let limits = SessionLimits {
        s_max: config.s_max,
        k_max: config.k_max,
        mode,
    };
    let session = run_session(
        analyst.as_mut(),
        mechanism.as_mut(),
        &split.exploration,
        &config.model,
        limits,
        &stream.child(STREAM_ANALYST),
    );
    Ok(ReplicationOutcome {
        rep_index,
        queries_used: session.queries_used(),
        confirmations: session.confirmed.len() as u64,
        false_confirmations: session.false_confirmations() as u64,
        true_confirmations: session.true_confirmations() as u64,
        stop_reason: session.stop_reason,
        transcript_digest: digest_transcript(&session.transcript),
    })
}

/// Order-independent aggregate of replication outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub replications: u64,
    /// Replications with at least one false confirmation.
    pub with_false: u64,
    /// Replications with at least one true confirmation.
    pub with_true: u64,
    pub queries: u64,
}

impl Tally {
    pub fn record(&mut self, o: &ReplicationOutcome) {
        self.replications += 1;
        self.with_false += u64::from(o.false_confirmations > 0);
        self.with_true += u64::from(o.true_confirmations > 0);
        self.queries += o.queries_used;
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            replications: self.replications + other.replications,
            with_false: self.with_false + other.with_false,
            with_true: self.with_true + other.with_true,
            queries: self.queries + other.queries,
        }
    }
}

impl<'a> FromIterator<&'a ReplicationOutcome> for Tally {
    fn from_iter<I: IntoIterator<Item = &'a ReplicationOutcome>>(iter: I) -> Self {
        let mut t = Tally::default();
        for o in iter {
            t.record(o);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwerEstimate {
    pub false_discovery_rate: f64,
    pub events: u64,
    pub replications: u64,
    pub wilson_95: (f64, f64),
    /// `s^k * alpha = p0`.
    pub theoretical_bound: f64,
    /// Binomial standard deviation `sqrt(p0 (1 - p0) / R)` at the bound.
    pub mc_sigma: f64,
    /// `rate <= bound + 3 * mc_sigma`.
    pub bound_satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub power: f64,
    pub events: u64,
    pub replications: u64,
    pub wilson_95: (f64, f64),
}

pub fn fwer_from_tally(config: &ExperimentConfig, tally: &Tally) -> Result<FwerEstimate> {
    let r = tally.replications;
    let bound = config.theoretical_bound();
    let mc_sigma = libm::sqrt(bound * (1.0 - bound) / r as f64);
    let rate = tally.with_false as f64 / r as f64;
    Ok(FwerEstimate {
        false_discovery_rate: rate,
        events: tally.with_false,
        replications: r,
        wilson_95: wilson_ci(tally.with_false, r, 0.95)?,
        theoretical_bound: bound,
        mc_sigma,
        bound_satisfied: rate <= bound + 3.0 * mc_sigma,
    })
}

pub fn power_from_tally(tally: &Tally) -> Result<PowerEstimate> {
    Ok(PowerEstimate {
        power: tally.with_true as f64 / tally.replications as f64,
        events: tally.with_true,
        replications: tally.replications,
        wilson_95: wilson_ci(tally.with_true, tally.replications, 0.95)?,
    })
}

fn run_all(config: &ExperimentConfig) -> Result<Tally> {
    config.validate()?;
    let mut tally = Tally::default();
    for r in 0..config.replications {
        tally.record(&run_replication(config, r)?);
    }
    Ok(tally)
}

/// Fraction of replications confirming at least one false hypothesis.
/// Only defined when every hypothesis is null, i.e. under the global null.
pub fn estimate_fwer(config: &ExperimentConfig) -> Result<FwerEstimate> {
    if !config.model.is_global_null() {
        return Err(Error::Config("FWER estimation needs the global null model".into()));
    }
    fwer_from_tally(config, &run_all(config)?)
}

/// Fraction of replications confirming at least one true hypothesis.
pub fn estimate_power(config: &ExperimentConfig) -> Result<PowerEstimate> {
    if config.model.is_global_null() {
        return Err(Error::Config("power estimation needs a planted model".into()));
    }
    power_from_tally(&run_all(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn null_config(s: u64, k: u32, r: u64) -> ExperimentConfig {
        ExperimentConfig {
            model: DistributionModel::global_null(5).unwrap(),
            n_total: 120,
            holdout_size: HoldoutSize::Auto,
            s_max: s,
            k_max: k,
            p0: 0.05,
            mechanism: MechanismSpec::Generic {
                mode: OracleMode::StopOnConfirms,
            },
            analyst: AnalystSpec::RandomSearch,
            replications: r,
            root_seed: 42,
        }
    }

    #[test]
    fn replication_is_deterministic() {
        let c = null_config(20, 1, 10);
        assert_eq!(run_replication(&c, 3).unwrap(), run_replication(&c, 3).unwrap());
        assert_ne!(
            run_replication(&c, 3).unwrap().transcript_digest,
            run_replication(&c, 4).unwrap().transcript_digest
        );
        assert!(run_replication(&c, 10).is_err());
    }

    #[test]
    fn fwer_zero_budget() {
        let c = null_config(0, 1, 50);
        let est = estimate_fwer(&c).unwrap();
        assert_eq!(est.false_discovery_rate, 0.0);
        assert!(est.bound_satisfied);
    }

    #[test]
    fn fwer_rejects_planted_model() {
        let mut c = null_config(5, 1, 5);
        c.model = DistributionModel::planted_linear(alloc::vec![1.0, 0.0, 0.0, 0.0, 0.0], 0.8, 0.0).unwrap();
        assert!(matches!(estimate_fwer(&c), Err(Error::Config(_))));
        assert!(matches!(estimate_power(&null_config(5, 1, 5)), Err(Error::Config(_))));
    }

    #[test]
    fn null_confirmations_are_null() {
        // naive disclosure with a Freedman adversary confirms often; every
        // confirmation must still be labelled null
        let mut c = null_config(31, 1, 20);
        c.model = DistributionModel::global_null(30).unwrap();
        c.n_total = 10;
        c.holdout_size = HoldoutSize::Fixed(10);
        c.mechanism = MechanismSpec::NaiveDisclosure;
        c.analyst = AnalystSpec::Freedman { family: None };
        let mut confirmed = 0;
        for r in 0..20 {
            let o = run_replication(&c, r).unwrap();
            assert_eq!(o.true_confirmations, 0);
            assert_eq!(o.false_confirmations, o.confirmations);
            confirmed += o.confirmations;
        }
        assert!(confirmed > 0);
    }

    #[test]
    fn saturated_signal_always_confirms() {
        let mut w = alloc::vec![0.0; 5];
        w[0] = 1.0;
        let c = ExperimentConfig {
            model: DistributionModel::planted_linear(w, 1.0, 0.0).unwrap(),
            n_total: 260,
            holdout_size: HoldoutSize::Fixed(200),
            s_max: 1,
            k_max: 1,
            p0: 0.05,
            mechanism: MechanismSpec::Generic {
                mode: OracleMode::StopOnConfirms,
            },
            analyst: AnalystSpec::Planted,
            replications: 50,
            root_seed: 5,
        };
        let p = estimate_power(&c).unwrap();
        assert_eq!(p.power, 1.0);
        let o = run_replication(&c, 0).unwrap();
        assert_eq!(o.true_confirmations, 1);
    }

    #[test]
    fn tally_order_independent() {
        let c = null_config(10, 1, 30);
        let outcomes: Vec<_> = (0..30).map(|r| run_replication(&c, r).unwrap()).collect();
        let forward: Tally = outcomes.iter().collect();
        let backward: Tally = outcomes.iter().rev().collect();
        let split = outcomes[..7].iter().collect::<Tally>().merge(outcomes[7..].iter().collect());
        assert_eq!(forward, backward);
        assert_eq!(forward, split);
    }

    #[test]
    fn wilson_at_estimate_examples() {
        let c = null_config(10, 1, 100_000);
        let t = Tally {
            replications: 100_000,
            with_false: 4900,
            with_true: 0,
            queries: 0,
        };
        let est = fwer_from_tally(&c, &t).unwrap();
        assert_eq!(est.false_discovery_rate, 0.049);
        assert!((est.wilson_95.0 - 0.047_679_298_617_046_81).abs() < 1e-9);
        assert!((est.wilson_95.1 - 0.050_355_350_010_503_105).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        let mut c = null_config(10, 1, 0);
        assert!(c.validate().is_err());
        c.replications = 1;
        c.holdout_size = HoldoutSize::Fixed(500);
        assert!(c.validate().is_err());
        c.holdout_size = HoldoutSize::Auto;
        c.k_max = 11;
        assert!(c.validate().is_err());
    }
}
