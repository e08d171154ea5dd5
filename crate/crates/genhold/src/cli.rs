//! The `genhold` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad input (flags, config,
//! schema), 3 a declared FWER bound check failed.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use genhold_core::rng::{RngStream, PRNG_ID};
use genhold_core::sim::{fwer_from_tally, power_from_tally, Tally};
use genhold_core::testkit::{calibrate_correlation_null, per_test_alpha, required_holdout_size, MIN_CALIBRATION_REPLICATIONS};
use serde::Serialize;

use crate::attack::{freedman_attack, AttackReport};
use crate::formats::{write_replications, ConfigFile, EstimateKind, Estimates, ResultFile, RESULT_SCHEMA};
use crate::parallel::{combined_digest, resolve_threads, run_replications};

pub const EXIT_IO: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_BOUND: u8 = 3;

pub const RESULT_FILE: &str = "result.json";
pub const REPLICATIONS_FILE: &str = "replications.csv";

#[derive(Debug, Parser)]
#[command(name = "genhold", version, about = "Budgeted one-bit holdout oracle: calibration, simulation and attack demos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Gapped,
    Correlation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Required holdout size and per-test level over a grid of budgets.
    Calibrate {
        #[arg(long = "s", value_delimiter = ',', required = true)]
        s: Vec<u64>,
        #[arg(long = "k", value_delimiter = ',', default_value = "1")]
        k: Vec<u32>,
        #[arg(long, default_value_t = 0.05)]
        p0: f64,
        #[arg(long, value_enum, default_value_t = Family::Gapped)]
        family: Family,
        /// Null replications per size (correlation family only).
        #[arg(long, default_value_t = MIN_CALIBRATION_REPLICATIONS)]
        replications: u64,
        /// Candidate holdout sizes (correlation family only).
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256,512")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run a Monte Carlo experiment from a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; affects wall time only. Falls back to GH_THREADS.
        #[arg(long)]
        threads: Option<usize>,
        /// Format of the summary printed to stdout.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Freedman adversary against naive disclosure and the generic oracle.
    Attack {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Merge result files into one CSV table.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failed command: message for stderr plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Calibrate {
            s,
            k,
            p0,
            family,
            replications,
            sizes,
            seed,
            format,
        } => calibrate(&s, &k, p0, family, replications, &sizes, seed, format),
        Command::Simulate {
            config,
            out,
            seed,
            threads,
            format,
        } => simulate(&config, &out, seed, threads, format),
        Command::Attack { d, n, seed } => attack(d, n, seed),
        Command::Report { results, out } => report(&results, out.as_deref()),
    }
}

#[derive(Debug, Serialize)]
struct CalibrationRow {
    family: &'static str,
    s: u64,
    k: u32,
    p0: f64,
    alpha: f64,
    h: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
fn calibrate(
    s_list: &[u64],
    k_list: &[u32],
    p0: f64,
    family: Family,
    replications: u64,
    sizes: &[usize],
    seed: u64,
    format: Format,
) -> Result<u8, Failure> {
    let table = match family {
        Family::Gapped => None,
        Family::Correlation => {
            let mut sizes = sizes.to_vec();
            sizes.sort_unstable();
            sizes.dedup();
            Some(calibrate_correlation_null(&sizes, 1, replications, &RngStream::new(seed)).map_err(|e| Failure::input(e.to_string()))?)
        }
    };
    let mut rows = Vec::new();
    for &s in s_list {
        for &k in k_list {
            if u64::from(k) > s {
                return Err(Failure::input(format!("k = {k} exceeds s = {s}")));
            }
            let alpha = per_test_alpha(s, k, p0).map_err(|e| Failure::input(e.to_string()))?;
            let (name, h) = match &table {
                None => (
                    "gapped",
                    Some(required_holdout_size(s, k, p0).map_err(|e| Failure::input(e.to_string()))?),
                ),
                Some(t) => ("correlation", t.entries.iter().find(|e| e.upper_99 <= alpha).map(|e| e.n)),
            };
            rows.push(CalibrationRow {
                family: name,
                s,
                k,
                p0,
                alpha,
                h,
            });
        }
    }
    let mut out = io::stdout().lock();
    match format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&rows).expect("rows serialize");
            let _ = writeln!(out, "{text}");
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &rows {
                w.serialize(r).map_err(|e| Failure::input(e.to_string()))?;
            }
            let _ = w.flush();
        }
    }
    if let Some(t) = &table {
        if rows.iter().any(|r| r.h.is_none()) {
            let floor = t.entries.iter().map(|e| e.upper_99).fold(f64::INFINITY, f64::min);
            eprintln!(
                "note: no candidate size certifies some levels; smallest 99% null bound with {} replications is {floor:e}",
                t.entries.first().map_or(0, |e| e.replications)
            );
        }
    }
    Ok(0)
}

/// Row shared by `simulate --format csv` and `report`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub source: String,
    pub mechanism: String,
    pub analyst: String,
    pub kind: String,
    pub replications: Option<u64>,
    pub events: Option<u64>,
    pub rate: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub bound: Option<f64>,
    pub bound_satisfied: Option<bool>,
    pub prng_id: String,
}

impl SummaryRow {
    fn from_result(source: &str, r: &ResultFile) -> Self {
        Self {
            source: source.to_owned(),
            mechanism: r.mechanism.clone(),
            analyst: r.analyst.clone(),
            kind: match r.estimates.kind {
                EstimateKind::Fwer => "fwer",
                EstimateKind::Power => "power",
            }
            .to_owned(),
            replications: Some(r.estimates.replications),
            events: Some(r.estimates.events),
            rate: Some(r.estimates.rate),
            ci_lo: Some(r.estimates.ci[0]),
            ci_hi: Some(r.estimates.ci[1]),
            bound: r.bound,
            bound_satisfied: r.bound_satisfied,
            prng_id: r.prng_id.clone(),
        }
    }
}

/// Runs every replication of `config` and assembles the result file.
pub fn simulate_config(file: &ConfigFile, threads: Option<usize>) -> Result<(ResultFile, Vec<genhold_core::sim::ReplicationOutcome>), Failure> {
    let config = file.to_experiment().map_err(|e| Failure::input(format!("config: {e}")))?;
    let outcomes = run_replications(&config, threads).map_err(|e| Failure::input(e.to_string()))?;
    let tally: Tally = outcomes.iter().collect();
    let mean_queries = tally.queries as f64 / tally.replications as f64;
    let (estimates, bound, mc_sigma, satisfied) = if config.model.is_global_null() {
        let f = fwer_from_tally(&config, &tally).map_err(|e| Failure::input(e.to_string()))?;
        (
            Estimates {
                kind: EstimateKind::Fwer,
                rate: f.false_discovery_rate,
                ci: [f.wilson_95.0, f.wilson_95.1],
                events: f.events,
                replications: f.replications,
                mean_queries,
            },
            Some(f.theoretical_bound),
            Some(f.mc_sigma),
            Some(f.bound_satisfied),
        )
    } else {
        let p = power_from_tally(&tally).map_err(|e| Failure::input(e.to_string()))?;
        (
            Estimates {
                kind: EstimateKind::Power,
                rate: p.power,
                ci: [p.wilson_95.0, p.wilson_95.1],
                events: p.events,
                replications: p.replications,
                mean_queries,
            },
            None,
            None,
            None,
        )
    };
    let result = ResultFile {
        schema: RESULT_SCHEMA.to_owned(),
        config_echo: file.clone(),
        prng_id: PRNG_ID.to_owned(),
        mechanism: config.mechanism.name().to_owned(),
        analyst: config.analyst.name().to_owned(),
        holdout_size: config.resolved_holdout_size().map_err(|e| Failure::input(e.to_string()))?,
        estimates,
        bound,
        mc_sigma,
        bound_satisfied: satisfied,
        transcript_digest: hex::encode(combined_digest(&outcomes)),
    };
    Ok((result, outcomes))
}

fn simulate(path: &Path, out_dir: &Path, seed: Option<u64>, threads: Option<usize>, format: Format) -> Result<u8, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let mut file = ConfigFile::parse(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    let threads = resolve_threads(threads).map_err(Failure::input)?;
    let (result, outcomes) = simulate_config(&file, threads)?;

    fs::create_dir_all(out_dir).map_err(|e| Failure::io(out_dir, e))?;
    let result_path = out_dir.join(RESULT_FILE);
    fs::write(&result_path, result.to_json()).map_err(|e| Failure::io(&result_path, e))?;
    let csv_path = out_dir.join(REPLICATIONS_FILE);
    let csv_file = fs::File::create(&csv_path).map_err(|e| Failure::io(&csv_path, e))?;
    write_replications(io::BufWriter::new(csv_file), &outcomes)
        .map_err(|e| Failure::io(&csv_path, io::Error::other(e)))?;

    let mut stdout = io::stdout().lock();
    match format {
        Format::Json => {
            let _ = stdout.write_all(result.to_json().as_bytes());
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(stdout);
            let _ = w.serialize(SummaryRow::from_result(&result_path.display().to_string(), &result));
            let _ = w.flush();
        }
    }
    Ok(match result.bound_satisfied {
        Some(false) => {
            eprintln!(
                "bound check failed: rate {} > {} + 3 * {}",
                result.estimates.rate,
                result.bound.unwrap_or(f64::NAN),
                result.mc_sigma.unwrap_or(f64::NAN)
            );
            EXIT_BOUND
        }
        _ => 0,
    })
}

pub fn render_attack(r: &AttackReport) -> String {
    let mut s = format!("freedman attack: d={} n={} seed={}\n", r.d, r.n, r.seed);
    s += &format!(
        "{:<18} {:>16} {:>8} {:>8} {:>10}  {}\n",
        "mechanism", "final_statistic", "verdict", "queries", "false_conf", "stop"
    );
    for c in [&r.naive, &r.generic] {
        let stat = c.final_statistic.map_or_else(|| "n/a (1 bit)".to_owned(), |v| format!("{v:.6}"));
        s += &format!(
            "{:<18} {:>16} {:>8} {:>8} {:>10}  {}{}\n",
            c.mechanism,
            stat,
            if c.passed { "PASS" } else { "FAIL" },
            c.queries_used,
            c.false_confirmations,
            c.stop_reason,
            c.error.as_ref().map_or_else(String::new, |e| format!(" ({e})")),
        );
    }
    let l = &r.ledger;
    s += &format!(
        "budget ledger (generic): s={} k={} p0={} alpha={:e} s^k*alpha={} required_h={} h={} queries_used={} confirmations={} state={}\n",
        l.s_max,
        l.k_max,
        l.p0,
        l.alpha,
        l.alpha * (l.s_max as f64).powi(l.k_max as i32),
        l.required_holdout,
        l.holdout,
        l.queries_used,
        l.confirmations,
        l.state
    );
    s
}

fn attack(d: usize, n: usize, seed: u64) -> Result<u8, Failure> {
    if d == 0 || n == 0 {
        return Err(Failure::input("attack needs d >= 1 and n >= 1"));
    }
    let report = freedman_attack(d, n, seed).map_err(|e| Failure::input(e.to_string()))?;
    print!("{}", render_attack(&report));
    Ok(0)
}

fn report(paths: &[PathBuf], out: Option<&Path>) -> Result<u8, Failure> {
    let mut rows = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
        let r = ResultFile::parse(&text).map_err(|e| Failure::input(format!("{}: schema mismatch: {e}", p.display())))?;
        rows.push(SummaryRow::from_result(&p.display().to_string(), &r));
    }
    let mut ids: Vec<&str> = rows.iter().map(|r| r.prng_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() > 1 {
        let warning = SummaryRow {
            source: "WARNING".to_owned(),
            mechanism: String::new(),
            analyst: String::new(),
            kind: "prng_id_mismatch".to_owned(),
            replications: None,
            events: None,
            rate: None,
            ci_lo: None,
            ci_hi: None,
            bound: None,
            bound_satisfied: None,
            prng_id: ids.join(";"),
        };
        rows.push(warning);
    }
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| Failure::io(p, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::io(out.unwrap_or(Path::new("-")), io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Failure::io(out.unwrap_or(Path::new("-")), e))?;
    let mut err = io::stderr().lock();
    let _ = writeln!(err, "{:<18} {:<14} {:<6} {:>12} {:>10} {:>6}", "mechanism", "analyst", "kind", "rate", "bound", "ok");
    for r in &rows {
        let _ = writeln!(
            err,
            "{:<18} {:<14} {:<6} {:>12} {:>10} {:>6}",
            r.mechanism,
            r.analyst,
            r.kind,
            r.rate.map_or_else(String::new, |v| format!("{v:.6}")),
            r.bound.map_or_else(|| "-".to_owned(), |v| v.to_string()),
            r.bound_satisfied.map_or("-", |b| if b { "yes" } else { "NO" }),
        );
    }
    Ok(0)
}
