//! Command-line front end: configures runs, verifies them against the
//! oracle and writes JSON reports.

pub mod args;
pub mod report;

use std::collections::BTreeMap;
use std::io::Write;

use cjrio_core::oracle;
use cjrio_core::protocol::{
    enumerate_map, outcome_labels, run_full, ProtocolConfig, RunOutcome, RunResult, SessionOptions,
    MAX_ENUMERATED_BRANCHES,
};
use cjrio_core::reference::{check_checkpoint, Erratum};
use clap::error::ErrorKind;
use clap::Parser;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use args::{Cli, Command, Mode, RunArgs};
use report::{Aggregate, BranchReport, ConfigEcho, Frequency, RunReport, StatsReport, Status, UnitaryEcho};

/// A final state passes when its overlap with the target is at least this.
pub const FIDELITY_THRESHOLD: f64 = 1.0 - 1e-10;
pub const MIN_SAMPLES: usize = 100;
pub const MAX_ENUMERATED_M: usize = 4;
pub const MAX_ENUMERATED_N: usize = 3;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FIDELITY: i32 = 1;
pub const EXIT_BLOCKED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("invalid configuration: {0}")]
    Invalid(#[source] cjrio_core::Error),
    #[error("simulation failed: {0}")]
    Run(#[source] cjrio_core::Error),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => EXIT_CONFIG,
            CliError::Run(_) | CliError::Io(_) => EXIT_FIDELITY,
        }
    }
}

/// Parses `args` (including the program name), runs the command, writes the
/// report and returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let (rest, unitaries) = match args::extract_unitary_flags(args.into_iter().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_CONFIG,
            };
        }
    };
    let output = match &cli.command {
        Command::Simulate(a) | Command::Enumerate(a) => a.output.clone(),
        Command::Stats(s) => s.run.output.clone(),
    };
    let result = execute(&cli.command, &unitaries).and_then(|report| {
        write_report(&report, output.as_deref())?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            eprint!("{}", summary(&report));
            exit_code(&report)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, unitaries: &BTreeMap<usize, String>) -> Result<RunReport, CliError> {
    match command {
        Command::Simulate(a) => match a.mode.unwrap_or(Mode::Sample) {
            Mode::Sample => simulate(a, unitaries),
            Mode::Enumerate => enumerate(a, unitaries),
        },
        Command::Enumerate(a) => match a.mode.unwrap_or(Mode::Enumerate) {
            Mode::Sample => simulate(a, unitaries),
            Mode::Enumerate => enumerate(a, unitaries),
        },
        Command::Stats(s) => stats(&s.run, s.samples, unitaries),
    }
}

pub fn exit_code(report: &RunReport) -> i32 {
    if report.aggregate.failed > 0 || report.aggregate.undocumented_errata > 0 {
        EXIT_FIDELITY
    } else if report.aggregate.blocked {
        EXIT_BLOCKED
    } else {
        EXIT_PASS
    }
}

pub fn to_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn write_report(report: &RunReport, path: Option<&std::path::Path>) -> Result<(), CliError> {
    let json = to_json(report);
    match path {
        Some(p) => std::fs::write(p, json)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(json.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

struct Prepared {
    config: ProtocolConfig,
    unitaries: Vec<UnitaryEcho>,
}

fn prepare(a: &RunArgs, specs: &BTreeMap<usize, String>) -> Result<Prepared, CliError> {
    let ops = args::resolve_unitaries(specs, a.m, a.seed)?;
    let consent = args::consent_from_masks(a.n, a.consent, a.consent_final)?;
    let unitaries = ops
        .iter()
        .enumerate()
        .map(|(i, (spec, op))| UnitaryEcho {
            party: format!("Bob{}", i + 1),
            spec: spec.clone(),
            u: op.u(),
            v: op.v(),
        })
        .collect();
    let config = ProtocolConfig::new(a.m, a.n, ops.into_iter().map(|(_, op)| op).collect(), a.alpha, a.beta)
        .and_then(|c| c.with_consent(consent))
        .and_then(|c| c.with_variant(a.variant.into()))
        .map_err(CliError::Invalid)?;
    Ok(Prepared { config, unitaries })
}

fn echo(a: &RunArgs, p: &Prepared, mode: Mode, samples: Option<usize>) -> ConfigEcho {
    ConfigEcho {
        m: p.config.m,
        n: p.config.n,
        variant: p.config.variant,
        alpha: p.config.alpha,
        beta: p.config.beta,
        unitaries: p.unitaries.clone(),
        consent: p.config.consent.clone(),
        seed: a.seed,
        mode: mode.name(),
        check_paper_eqs: a.check_paper_eqs,
        samples,
    }
}

/// Rejects configurations too large to enumerate, reporting the count.
pub fn enumeration_guard(config: &ProtocolConfig) -> Result<(), CliError> {
    let count = config.branch_count();
    if count > MAX_ENUMERATED_BRANCHES {
        return Err(CliError::Invalid(cjrio_core::Error::TooManyBranches(count, MAX_ENUMERATED_BRANCHES)));
    }
    if config.m > MAX_ENUMERATED_M || config.n > MAX_ENUMERATED_N {
        return Err(CliError::Config(format!(
            "enumeration supports M <= {MAX_ENUMERATED_M} and N <= {MAX_ENUMERATED_N}; \
             this configuration has {count} branches"
        )));
    }
    Ok(())
}

fn status(outcome: &RunOutcome, fidelity: Option<f64>) -> Status {
    match (outcome, fidelity) {
        (RunOutcome::Blocked { .. }, _) => Status::Blocked,
        (_, Some(f)) if f >= FIDELITY_THRESHOLD => Status::Pass,
        _ => Status::Fail,
    }
}

struct BranchData {
    report: BranchReport,
    classical_bits: usize,
    errata: Vec<Erratum>,
}

fn branch_data(result: RunResult, config: &ProtocolConfig, check: bool) -> cjrio_core::Result<BranchData> {
    let target = config.target()?;
    let fidelity = match result.outcome.final_state() {
        Some(s) => Some(oracle::target_fidelity(s, &target)?),
        None => None,
    };
    let mut errata = Vec::new();
    if check {
        for record in &result.checkpoints {
            if let Some(e) = check_checkpoint(record, config)? {
                errata.push(e);
            }
        }
    }
    Ok(BranchData {
        report: BranchReport {
            bits: result.bits(),
            probability: result.probability,
            fidelity,
            status: status(&result.outcome, fidelity),
        },
        classical_bits: result.transcript.classical_bits,
        errata,
    })
}

fn aggregate(labels: Vec<String>, config: &ProtocolConfig, data: &[BranchData]) -> Aggregate {
    let min_fidelity = data.iter().filter_map(|d| d.report.fidelity).reduce(f64::min);
    let failed = data.iter().filter(|d| d.report.status == Status::Fail).count();
    let blocked = data.iter().any(|d| d.report.status == Status::Blocked);
    let undocumented_errata = data.iter().flat_map(|d| &d.errata).filter(|e| !e.documented).count();
    Aggregate {
        labels,
        branch_count: data.len(),
        expected_branch_count: u64::try_from(config.branch_count()).unwrap_or(u64::MAX),
        min_fidelity,
        probability_sum: data.iter().map(|d| d.report.probability).sum(),
        classical_bits: data.iter().map(|d| d.classical_bits).max().unwrap_or(0),
        blocked,
        failed,
        undocumented_errata,
        passed: failed == 0 && undocumented_errata == 0 && !blocked,
    }
}

fn simulate(a: &RunArgs, specs: &BTreeMap<usize, String>) -> Result<RunReport, CliError> {
    let p = prepare(a, specs)?;
    let options = SessionOptions { record_checkpoints: a.check_paper_eqs, ..Default::default() };
    let result = run_full(&p.config, a.seed, options).map_err(CliError::Run)?;
    let transcript = result.transcript.clone();
    let data = branch_data(result, &p.config, a.check_paper_eqs).map_err(CliError::Run)?;
    let aggregate = aggregate(transcript.labels(), &p.config, std::slice::from_ref(&data));
    Ok(RunReport {
        schema_version: report::SCHEMA_VERSION,
        command: "simulate",
        config: echo(a, &p, Mode::Sample, None),
        target: p.config.target().map_err(CliError::Run)?,
        branches: vec![data.report],
        aggregate,
        transcript: Some(transcript),
        stats: None,
        errata: data.errata,
    })
}

fn enumerate(a: &RunArgs, specs: &BTreeMap<usize, String>) -> Result<RunReport, CliError> {
    let p = prepare(a, specs)?;
    enumeration_guard(&p.config)?;
    let options = SessionOptions { record_checkpoints: a.check_paper_eqs, ..Default::default() };
    let check = a.check_paper_eqs;
    let config = &p.config;
    let data = enumerate_map(config, options, |r| branch_data(r, config, check)).map_err(CliError::Run)?;
    let labels = outcome_labels(config.m, config.n).map_err(CliError::Run)?;
    let aggregate = aggregate(labels, config, &data);
    let mut branches = Vec::with_capacity(data.len());
    let mut errata = Vec::new();
    for d in data {
        branches.push(d.report);
        errata.extend(d.errata);
    }
    Ok(RunReport {
        schema_version: report::SCHEMA_VERSION,
        command: "enumerate",
        config: echo(a, &p, Mode::Enumerate, None),
        target: config.target().map_err(CliError::Run)?,
        branches,
        aggregate,
        transcript: None,
        stats: None,
        errata,
    })
}

/// Per-run seeds for `stats`, drawn from their own stream.
pub fn sample_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    (0..count).map(|_| rng.next_u64()).collect()
}

fn stats(a: &RunArgs, samples: usize, specs: &BTreeMap<usize, String>) -> Result<RunReport, CliError> {
    if samples < MIN_SAMPLES {
        return Err(CliError::Config(format!("--samples must be at least {MIN_SAMPLES}")));
    }
    let p = prepare(a, specs)?;
    enumeration_guard(&p.config)?;
    let config = &p.config;
    let exact = enumerate_map(config, SessionOptions { validate_frame: false, ..Default::default() }, |r| {
        Ok((r.bits(), r.probability))
    })
    .map_err(CliError::Run)?;

    let options = SessionOptions::default();
    let mut data = Vec::with_capacity(samples);
    for seed in sample_seeds(a.seed, samples) {
        let r = run_full(config, seed, options).map_err(CliError::Run)?;
        data.push(branch_data(r, config, false).map_err(CliError::Run)?);
    }
    let sampled: Vec<&[u8]> = data.iter().map(|d| d.report.bits.as_slice()).collect();
    let labels = outcome_labels(config.m, config.n).map_err(CliError::Run)?;

    let mut bits = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        for value in 0..2u8 {
            bits.push(frequency(&exact, &sampled, &[i], &[value], &labels, std::slice::from_ref(label)));
        }
    }
    let mut joint = Vec::new();
    for m in 0..2u8 {
        for n in 0..2u8 {
            joint.push(frequency(&exact, &sampled, &[1, 2], &[m, n], &labels, &[]));
        }
    }

    let mut aggregate = aggregate(labels, config, &data);
    aggregate.branch_count = exact.len();
    aggregate.probability_sum = exact.iter().map(|(_, p)| p).sum();
    let stats = StatsReport {
        samples,
        completed: data.iter().filter(|d| d.report.fidelity.is_some()).count(),
        blocked: data.iter().filter(|d| d.report.status == Status::Blocked).count(),
        bits,
        joint,
    };
    Ok(RunReport {
        schema_version: report::SCHEMA_VERSION,
        command: "stats",
        config: echo(a, &p, Mode::Sample, Some(samples)),
        target: config.target().map_err(CliError::Run)?,
        branches: Vec::new(),
        aggregate,
        transcript: None,
        stats: Some(stats),
        errata: Vec::new(),
    })
}

/// Frequency of `values` at `positions` among runs that reached every
/// position, against the exact conditional probability.
fn frequency(
    exact: &[(Vec<u8>, f64)],
    sampled: &[&[u8]],
    positions: &[usize],
    values: &[u8],
    labels: &[String],
    names: &[String],
) -> Frequency {
    let last = positions.iter().copied().max().unwrap_or(0);
    let hit = |bits: &[u8]| positions.iter().zip(values).all(|(&i, &v)| bits[i] == v);
    let (mut reach, mut match_p) = (0.0, 0.0);
    for (bits, p) in exact.iter().filter(|(b, _)| b.len() > last) {
        reach += p;
        if hit(bits) {
            match_p += p;
        }
    }
    let reached: Vec<&&[u8]> = sampled.iter().filter(|b| b.len() > last).collect();
    let count = reached.iter().filter(|b| hit(b)).count();
    let names = if names.is_empty() { positions.iter().map(|&i| labels[i].clone()).collect() } else { names.to_vec() };
    let expected = if reach > 0.0 { match_p / reach } else { 0.0 };
    Frequency::new(names, values.to_vec(), reached.len(), count, expected)
}

/// Human-readable digest for standard error.
pub fn summary(report: &RunReport) -> String {
    let c = &report.config;
    let g = &report.aggregate;
    let mut s = format!(
        "cjrio {}: M={} N={} variant={} seed={}\n",
        report.command, c.m, c.n, c.variant, c.seed
    );
    s += &format!(
        "  branches {} (full run {}), probability sum {:.12}\n",
        g.branch_count, g.expected_branch_count, g.probability_sum
    );
    match g.min_fidelity {
        Some(f) => s += &format!("  min fidelity {f:.15}, failed {}\n", g.failed),
        None => s += "  no run completed\n",
    }
    s += &format!("  classical bits {}, blocked {}\n", g.classical_bits, if g.blocked { "yes" } else { "no" });
    if let Some(t) = &report.transcript {
        let bits: Vec<String> = t.outcomes.iter().map(|b| format!("{}={}", b.label, b.value)).collect();
        s += &format!("  outcomes {}\n", bits.join(" "));
        if let Some(b) = t.blocked {
            s += &format!("  controller {} withheld consent at step {}\n", b.controller, b.step);
        }
    }
    if c.check_paper_eqs {
        s += &format!("  errata {} ({} undocumented)\n", report.errata.len(), g.undocumented_errata);
    }
    if let Some(st) = &report.stats {
        let outside = st.bits.iter().chain(&st.joint).filter(|f| !f.within_3_sigma).count();
        s += &format!(
            "  samples {} (completed {}, blocked {}), frequencies outside 3 sigma: {}\n",
            st.samples, st.completed, st.blocked, outside
        );
    }
    let verdict = match exit_code(report) {
        EXIT_PASS => "PASS",
        EXIT_BLOCKED => "BLOCKED",
        _ => "FAIL",
    };
    s += &format!("  result {verdict}\n");
    s
}
