use cjrio_core::oracle::TargetState;
use cjrio_core::protocol::{Consent, Transcript, Variant};
use cjrio_core::reference::Erratum;
use num_complex::Complex64;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: ConfigEcho,
    pub target: TargetState,
    pub branches: Vec<BranchReport>,
    pub aggregate: Aggregate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Transcript>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<StatsReport>,
    pub errata: Vec<Erratum>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub m: usize,
    pub n: usize,
    pub variant: Variant,
    pub alpha: Complex64,
    pub beta: Complex64,
    pub unitaries: Vec<UnitaryEcho>,
    pub consent: Vec<Consent>,
    pub seed: u64,
    pub mode: &'static str,
    pub check_paper_eqs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitaryEcho {
    pub party: String,
    pub spec: String,
    pub u: Complex64,
    pub v: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Blocked,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchReport {
    pub bits: Vec<u8>,
    pub probability: f64,
    pub fidelity: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub labels: Vec<String>,
    pub branch_count: usize,
    /// Branches of a fully consenting run, `2^bits`.
    pub expected_branch_count: u64,
    pub min_fidelity: Option<f64>,
    pub probability_sum: f64,
    pub classical_bits: usize,
    pub blocked: bool,
    pub failed: usize,
    pub undocumented_errata: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub samples: usize,
    pub completed: usize,
    pub blocked: usize,
    pub bits: Vec<Frequency>,
    pub joint: Vec<Frequency>,
}

/// Empirical frequency of one outcome against its exact probability, with
/// the binomial standard deviation for the number of runs that reached it.
#[derive(Debug, Clone, Serialize)]
pub struct Frequency {
    pub labels: Vec<String>,
    pub value: Vec<u8>,
    pub trials: usize,
    pub count: usize,
    pub frequency: f64,
    pub expected: f64,
    pub sigma: f64,
    pub within_3_sigma: bool,
}

impl Frequency {
    pub fn new(labels: Vec<String>, value: Vec<u8>, trials: usize, count: usize, expected: f64) -> Self {
        let frequency = if trials == 0 { 0.0 } else { count as f64 / trials as f64 };
        let sigma = if trials == 0 { 0.0 } else { (expected * (1.0 - expected) / trials as f64).sqrt() };
        let within_3_sigma = (frequency - expected).abs() <= 3.0 * sigma + 1e-12;
        Frequency { labels, value, trials, count, frequency, expected, sigma, within_3_sigma }
    }
}
