//! JSON configuration and result files, and the per-replication CSV.
//!
//! Every struct here rejects unknown keys. Numbers are written in the
//! shortest form that parses back to the same `f64`, so a written file
//! round-trips exactly.

use std::fmt;
use std::io::Write;

use genhold_core::analysts::ProbeFamily;
use genhold_core::mechanisms::{OracleMode, ThresholdoutParams};
use genhold_core::model::DistributionModel;
use genhold_core::rng::PRNG_ID;
use genhold_core::sim::{AnalystSpec, ExperimentConfig, HoldoutSize, MechanismSpec, ReplicationOutcome};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const RESULT_SCHEMA: &str = "genhold.result.v1";

/// Malformed or inconsistent input. `path` is the JSON key path when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: Some(path.to_owned()),
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        if let Some(p) = self.path.as_deref().filter(|p| !p.is_empty() && *p != ".") {
            write!(f, "at `{p}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GlobalNull,
    PlantedLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_true: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_y: Option<f64>,
}

/// `"auto"` or an explicit sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldoutField {
    Auto,
    Fixed(usize),
}

impl Serialize for HoldoutField {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Fixed(h) => s.serialize_u64(*h as u64),
        }
    }
}

impl<'de> Deserialize<'de> for HoldoutField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = HoldoutField;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or \"auto\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<HoldoutField, E> {
                usize::try_from(v)
                    .map(HoldoutField::Fixed)
                    .map_err(|_| E::custom("holdout size too large"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<HoldoutField, E> {
                if v == "auto" {
                    Ok(HoldoutField::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub s: u64,
    pub k: u32,
    pub p0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Generic,
    NaiveDisclosure,
    FreshSplit,
    Thresholdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeField {
    StopOnConfirms,
    StopOnRejects,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overfit_budget: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    pub kind: MechanismKind,
    #[serde(default)]
    pub params: MechanismParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalystKind {
    RandomSearch,
    Freedman,
    Planted,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyField {
    Correlation,
    Gapped,
}

impl From<FamilyField> for ProbeFamily {
    fn from(f: FamilyField) -> Self {
        match f {
            FamilyField::Correlation => ProbeFamily::Correlation,
            FamilyField::Gapped => ProbeFamily::Gapped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalystParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalystSection {
    pub kind: AnalystKind,
    #[serde(default)]
    pub params: AnalystParams,
}

/// On-disk experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub n_total: usize,
    pub holdout_size: HoldoutField,
    pub budgets: Budgets,
    pub mechanism: MechanismSection,
    pub analyst: AnalystSection,
    pub replications: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prng_id: Option<String>,
}

fn parse_json<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError {
            path: Some(path),
            line: Some(inner.line()),
            column: Some(inner.column()),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| ConfigError {
        path: None,
        line: Some(e.line()),
        column: Some(e.column()),
        message: e.to_string(),
    })?;
    Ok(value)
}

fn core_err(path: &'static str) -> impl Fn(genhold_core::Error) -> ConfigError {
    move |e| ConfigError::at(path, e.to_string())
}

fn unused<T>(field: &Option<T>, path: &str, kind: &str) -> Result<(), ConfigError> {
    match field {
        Some(_) => Err(ConfigError::at(path, format!("not a parameter of kind `{kind}`"))),
        None => Ok(()),
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        parse_json(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates the file and builds the harness configuration.
    pub fn to_experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        if let Some(id) = &self.prng_id {
            if id != PRNG_ID {
                return Err(ConfigError::at(
                    "prng_id",
                    format!("this build provides `{PRNG_ID}`, config asks for `{id}`"),
                ));
            }
        }
        let m = &self.model;
        let model = match m.kind {
            ModelKind::GlobalNull => {
                unused(&m.w_true, "model.w_true", "global_null")?;
                unused(&m.mu, "model.mu", "global_null")?;
                unused(&m.sigma_y, "model.sigma_y", "global_null")?;
                DistributionModel::global_null(m.d).map_err(core_err("model.d"))?
            }
            ModelKind::PlantedLinear => {
                let w = match &m.w_true {
                    Some(w) if w.len() != m.d => {
                        return Err(ConfigError::at(
                            "model.w_true",
                            format!("has {} entries but d = {}", w.len(), m.d),
                        ))
                    }
                    Some(w) => w.clone(),
                    None => {
                        if m.d == 0 {
                            return Err(ConfigError::at("model.d", "must be >= 1"));
                        }
                        let mut e1 = vec![0.0; m.d];
                        e1[0] = 1.0;
                        e1
                    }
                };
                let mu = m.mu.ok_or_else(|| ConfigError::at("model.mu", "required for planted_linear"))?;
                DistributionModel::planted_linear(w, mu, m.sigma_y.unwrap_or(0.0)).map_err(core_err("model"))?
            }
        };
        let p = &self.mechanism.params;
        let mechanism = match self.mechanism.kind {
            MechanismKind::Generic => {
                unused(&p.test_size, "mechanism.params.test_size", "generic")?;
                unused(&p.threshold, "mechanism.params.threshold", "generic")?;
                unused(&p.noise, "mechanism.params.noise", "generic")?;
                unused(&p.overfit_budget, "mechanism.params.overfit_budget", "generic")?;
                MechanismSpec::Generic {
                    mode: match p.mode.unwrap_or(ModeField::StopOnConfirms) {
                        ModeField::StopOnConfirms => OracleMode::StopOnConfirms,
                        ModeField::StopOnRejects => OracleMode::StopOnRejects,
                    },
                }
            }
            MechanismKind::NaiveDisclosure => {
                if *p != MechanismParams::default() {
                    return Err(ConfigError::at("mechanism.params", "naive_disclosure takes no parameters"));
                }
                MechanismSpec::NaiveDisclosure
            }
            MechanismKind::FreshSplit => {
                unused(&p.mode, "mechanism.params.mode", "fresh_split")?;
                unused(&p.threshold, "mechanism.params.threshold", "fresh_split")?;
                unused(&p.noise, "mechanism.params.noise", "fresh_split")?;
                unused(&p.overfit_budget, "mechanism.params.overfit_budget", "fresh_split")?;
                let test_size = p
                    .test_size
                    .ok_or_else(|| ConfigError::at("mechanism.params.test_size", "required for fresh_split"))?;
                if test_size == 0 {
                    return Err(ConfigError::at("mechanism.params.test_size", "must be >= 1"));
                }
                MechanismSpec::FreshSplit { test_size }
            }
            MechanismKind::Thresholdout => {
                unused(&p.mode, "mechanism.params.mode", "thresholdout")?;
                unused(&p.test_size, "mechanism.params.test_size", "thresholdout")?;
                let d = ThresholdoutParams::default();
                MechanismSpec::Thresholdout(ThresholdoutParams {
                    threshold: p.threshold.unwrap_or(d.threshold),
                    noise: p.noise.unwrap_or(d.noise),
                    overfit_budget: p.overfit_budget,
                })
            }
        };
        let a = &self.analyst;
        let analyst = match a.kind {
            AnalystKind::Freedman => AnalystSpec::Freedman {
                family: a.params.family.map(Into::into),
            },
            other => {
                unused(&a.params.family, "analyst.params.family", analyst_name(other))?;
                match other {
                    AnalystKind::RandomSearch => AnalystSpec::RandomSearch,
                    AnalystKind::Planted => AnalystSpec::Planted,
                    _ => AnalystSpec::Stop,
                }
            }
        };
        let config = ExperimentConfig {
            model,
            n_total: self.n_total,
            holdout_size: match self.holdout_size {
                HoldoutField::Auto => HoldoutSize::Auto,
                HoldoutField::Fixed(h) => HoldoutSize::Fixed(h),
            },
            s_max: self.budgets.s,
            k_max: self.budgets.k,
            p0: self.budgets.p0,
            mechanism,
            analyst,
            replications: self.replications,
            root_seed: self.seed,
        };
        config.validate().map_err(|e| ConfigError {
            path: None,
            line: None,
            column: None,
            message: e.to_string(),
        })?;
        Ok(config)
    }
}

fn analyst_name(kind: AnalystKind) -> &'static str {
    match kind {
        AnalystKind::RandomSearch => "random_search",
        AnalystKind::Freedman => "freedman",
        AnalystKind::Planted => "planted",
        AnalystKind::Stop => "stop",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Fwer,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimates {
    pub kind: EstimateKind,
    pub rate: f64,
    /// Wilson 95% interval.
    pub ci: [f64; 2],
    pub events: u64,
    pub replications: u64,
    pub mean_queries: f64,
}

/// Summary written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub schema: String,
    pub config_echo: ConfigFile,
    pub prng_id: String,
    pub mechanism: String,
    pub analyst: String,
    pub holdout_size: usize,
    pub estimates: Estimates,
    /// `s^k * alpha` for FWER runs, null for power runs.
    pub bound: Option<f64>,
    pub mc_sigma: Option<f64>,
    pub bound_satisfied: Option<bool>,
    /// Hex SHA-256 over the per-replication transcript digests in order.
    pub transcript_digest: String,
}

impl ResultFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let r: Self = parse_json(text)?;
        if r.schema != RESULT_SCHEMA {
            return Err(ConfigError::at(
                "schema",
                format!("expected `{RESULT_SCHEMA}`, found `{}`", r.schema),
            ));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub rep_index: u64,
    pub queries_used: u64,
    pub confirmations: u64,
    pub false_confirmations: u64,
    pub stop_reason: String,
}

impl From<&ReplicationOutcome> for ReplicationRow {
    fn from(o: &ReplicationOutcome) -> Self {
        Self {
            rep_index: o.rep_index,
            queries_used: o.queries_used,
            confirmations: o.confirmations,
            false_confirmations: o.false_confirmations,
            stop_reason: o.stop_reason.as_str().to_owned(),
        }
    }
}

pub fn write_replications<W: Write>(out: W, outcomes: &[ReplicationOutcome]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in outcomes {
        w.serialize(ReplicationRow::from(o))?;
    }
    w.flush()?;
    Ok(())
}
