//! The multi-party protocol: configuration, transcripts, single runs and
//! exhaustive branch enumeration.

mod session;

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame::CorrectionExpr;
use crate::hilbert::{Dof, HybridState, PhotonId, COMPARE_TOLERANCE, INPUT_TOLERANCE};
use crate::kerr::sample_index;
use crate::optics::{PauliPower, Su2Operator};
use crate::oracle::{self, TargetState};
use crate::reference::CheckpointRecord;

pub use session::Session;

/// Enumeration refuses configurations with more branches than this.
pub const MAX_ENUMERATED_BRANCHES: u128 = 1 << 17;

/// Which protocol family a run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Any number of joint parties and controllers.
    #[default]
    Cjrio,
    /// Joint parties only.
    Jrio,
    /// One party, one or more controllers.
    Crio,
    /// One party, no controller.
    Rio,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cjrio => "cjrio",
            Variant::Jrio => "jrio",
            Variant::Crio => "crio",
            Variant::Rio => "rio",
        }
    }

    pub fn check(self, m: usize, n: usize) -> Result<()> {
        let (ok, requirement) = match self {
            Variant::Cjrio => (m >= 1, "m >= 1"),
            Variant::Jrio => (m >= 2 && n == 0, "m >= 2 and n = 0"),
            Variant::Crio => (m == 1 && n >= 1, "m = 1 and n >= 1"),
            Variant::Rio => (m == 1 && n == 0, "m = 1 and n = 0"),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::VariantMismatch { variant: self.name(), requirement })
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A controller's two decisions: releasing the spatial channel and
/// releasing the polarization bit at the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Consent {
    pub entangle: bool,
    pub release: bool,
}

impl Consent {
    pub const GRANTED: Consent = Consent { entangle: true, release: true };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolConfig {
    pub m: usize,
    pub n: usize,
    /// `U^1 ... U^M`.
    pub unitaries: Vec<Su2Operator>,
    pub alpha: Complex64,
    pub beta: Complex64,
    pub consent: Vec<Consent>,
    pub variant: Variant,
}

impl ProtocolConfig {
    /// A validated configuration in which every controller consents.
    pub fn new(
        m: usize,
        n: usize,
        unitaries: Vec<Su2Operator>,
        alpha: Complex64,
        beta: Complex64,
    ) -> Result<Self> {
        let config = ProtocolConfig {
            m,
            n,
            unitaries,
            alpha,
            beta,
            consent: vec![Consent::GRANTED; n],
            variant: Variant::Cjrio,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_consent(mut self, consent: Vec<Consent>) -> Result<Self> {
        self.consent = consent;
        self.validate()?;
        Ok(self)
    }

    pub fn with_variant(mut self, variant: Variant) -> Result<Self> {
        self.variant = variant;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::NoJointParty);
        }
        self.variant.check(self.m, self.n)?;
        if self.unitaries.len() != self.m {
            return Err(Error::UnitaryCount { expected: self.m, got: self.unitaries.len() });
        }
        if self.consent.len() != self.n {
            return Err(Error::ConsentCount { expected: self.n, got: self.consent.len() });
        }
        let norm_sq = self.alpha.norm_sqr() + self.beta.norm_sqr();
        if !norm_sq.is_finite() {
            return Err(Error::NonFinite);
        }
        if (norm_sq - 1.0).abs() > INPUT_TOLERANCE {
            return Err(Error::NotNormalized(norm_sq));
        }
        Ok(())
    }

    pub fn target(&self) -> Result<TargetState> {
        oracle::direct_apply(&self.unitaries, self.alpha, self.beta)
    }

    /// Outcome bits of a run in which every controller consents.
    pub fn outcome_bit_count(&self) -> usize {
        5 + 2 * self.n + 4 * (self.m - 1)
    }

    /// Branches of a fully consenting run: every bit is an independent
    /// binary outcome.
    pub fn branch_count(&self) -> u128 {
        1u128.checked_shl(self.outcome_bit_count() as u32).unwrap_or(u128::MAX)
    }
}

/// Decides which measurement outcome a run follows.
pub trait OutcomeChooser {
    /// Index into `probabilities`, which lists the possible outcomes in
    /// ascending order.
    fn choose(&mut self, probabilities: &[f64]) -> usize;
}

/// Samples outcomes from a seeded generator.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        Sampler { rng }
    }
}

impl OutcomeChooser for Sampler {
    fn choose(&mut self, probabilities: &[f64]) -> usize {
        sample_index(probabilities, &mut self.rng)
    }
}

/// Follows a fixed list of choices and takes the first outcome afterwards.
#[derive(Debug, Clone, Default)]
pub struct Script {
    prefix: Vec<usize>,
    position: usize,
}

impl Script {
    pub fn new(prefix: Vec<usize>) -> Self {
        Script { prefix, position: 0 }
    }
}

impl OutcomeChooser for Script {
    fn choose(&mut self, probabilities: &[f64]) -> usize {
        let choice = self.prefix.get(self.position).copied().unwrap_or(0);
        self.position += 1;
        choice.min(probabilities.len().saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionOptions {
    /// Check every correction against the brute-force search and every
    /// path the frame predicts against the state.
    pub validate_frame: bool,
    /// Keep a copy of the state at each named checkpoint.
    pub record_checkpoints: bool,
    /// End the run after the controllers' last measurement, before Alice
    /// corrects her polarization.
    pub stop_before_alice_fix: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { validate_frame: true, record_checkpoints: false, stop_before_alice_fix: false }
    }
}

/// A participant. Alice holds X and A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Alice,
    Bob(usize),
    Charlie(usize),
}

impl Party {
    pub fn of(photon: PhotonId) -> Party {
        match photon {
            PhotonId::X | PhotonId::A => Party::Alice,
            PhotonId::Bob(i) => Party::Bob(i),
            PhotonId::Charlie(j) => Party::Charlie(j),
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Alice => write!(f, "Alice"),
            Party::Bob(i) => write!(f, "Bob{i}"),
            Party::Charlie(j) => write!(f, "Charlie{j}"),
        }
    }
}

impl Serialize for Party {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeBit {
    pub label: String,
    pub step: u8,
    pub party: Party,
    pub value: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    Homodyne,
    Projective,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementRecord {
    pub step: u8,
    pub party: Party,
    pub kind: MeasurementKind,
    pub photons: Vec<PhotonId>,
    /// Phase class for homodyne readouts, projector index otherwise.
    pub outcome: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionRecord {
    pub step: u8,
    pub party: Party,
    pub photon: PhotonId,
    pub dof: Dof,
    pub x_exponent: String,
    pub z_exponent: String,
    pub power: PauliPower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorRecord {
    pub step: u8,
    pub party: Party,
    pub photon: PhotonId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Broadcast {
    pub bit: String,
    pub from: Party,
    pub to: Vec<Party>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Blocked {
    pub step: u8,
    pub controller: usize,
}

/// Everything that happened classically during one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcript {
    pub outcomes: Vec<OutcomeBit>,
    pub measurements: Vec<MeasurementRecord>,
    pub corrections: Vec<CorrectionRecord>,
    pub operators: Vec<OperatorRecord>,
    /// Bits sent to parties whose later actions depend on them.
    pub broadcasts: Vec<Broadcast>,
    pub classical_bits: usize,
    /// Protocol steps in which some party acted.
    pub steps: Vec<u8>,
    pub seed: Option<u64>,
    /// Corrections `Z^z X^x` apply X first.
    pub correction_order: &'static str,
    pub blocked: Option<Blocked>,
}

impl Transcript {
    pub(crate) fn new() -> Self {
        Transcript {
            outcomes: Vec::new(),
            measurements: Vec::new(),
            corrections: Vec::new(),
            operators: Vec::new(),
            broadcasts: Vec::new(),
            classical_bits: 0,
            steps: Vec::new(),
            seed: None,
            correction_order: "x-then-z",
            blocked: None,
        }
    }

    pub fn bits(&self) -> Vec<u8> {
        self.outcomes.iter().map(|o| o.value).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.outcomes.iter().map(|o| o.label.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub enum RunOutcome {
    /// Only Alice's photon is left, carrying the target.
    Completed { final_state: HybridState },
    /// A controller withheld consent.
    Blocked { blocked: Blocked, state: HybridState },
    /// Stopped on request before Alice's polarization fix.
    Stopped { state: HybridState },
}

impl RunOutcome {
    pub fn state(&self) -> &HybridState {
        match self {
            RunOutcome::Completed { final_state } => final_state,
            RunOutcome::Blocked { state, .. } | RunOutcome::Stopped { state } => state,
        }
    }

    pub fn final_state(&self) -> Option<&HybridState> {
        match self {
            RunOutcome::Completed { final_state } => Some(final_state),
            _ => None,
        }
    }
}

/// A correction together with the symbolic exponents that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionFormula {
    pub step: u8,
    pub party: Party,
    pub expr: CorrectionExpr,
    /// Names of the outcome variables the exponents refer to.
    pub labels: Vec<String>,
}

impl CorrectionFormula {
    pub fn x_exponent(&self) -> String {
        self.expr.x.render(&self.labels)
    }

    pub fn z_exponent(&self) -> String {
        self.expr.z.render(&self.labels)
    }

    /// The correction for a given list of outcome values.
    pub fn power(&self, values: &[u8]) -> PauliPower {
        self.expr.eval(values)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub transcript: Transcript,
    /// Probability of the followed branch.
    pub probability: f64,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Chosen index at every measurement.
    pub choices: Vec<usize>,
    /// Number of possible outcomes at every measurement.
    pub option_counts: Vec<usize>,
    pub formulas: Vec<CorrectionFormula>,
}

impl RunResult {
    pub fn bits(&self) -> Vec<u8> {
        self.transcript.bits()
    }
}

/// One sampled run.
pub fn run_full(config: &ProtocolConfig, seed: u64, options: SessionOptions) -> Result<RunResult> {
    let mut result = Session::new(config, options, Sampler::new(seed))?.run()?;
    result.transcript.seed = Some(seed);
    Ok(result)
}

/// Runs a reduced variant; the configuration must fit the variant.
pub fn run_reduction(
    variant: Variant,
    config: &ProtocolConfig,
    seed: u64,
    options: SessionOptions,
) -> Result<RunResult> {
    let config = config.clone().with_variant(variant)?;
    run_full(&config, seed, options)
}

/// The run that follows `prefix` and then always the first outcome.
pub fn run_scripted(config: &ProtocolConfig, prefix: Vec<usize>, options: SessionOptions) -> Result<RunResult> {
    Session::new(config, options, Script::new(prefix))?.run()
}

type Keyed<T> = Vec<(Vec<usize>, T)>;

fn explore<T, F>(config: &ProtocolConfig, options: SessionOptions, prefix: Vec<usize>, f: &F) -> Result<Keyed<T>>
where
    T: Send,
    F: Fn(RunResult) -> Result<T> + Sync,
{
    let depth = prefix.len();
    let result = run_scripted(config, prefix, options)?;
    let choices = result.choices.clone();
    let children: Vec<Vec<usize>> = (depth..choices.len())
        .flat_map(|d| {
            let base = &choices[..d];
            (1..result.option_counts[d]).map(move |alt| {
                let mut p = base.to_vec();
                p.push(alt);
                p
            })
        })
        .collect();
    let mut out = vec![(choices, f(result)?)];
    let nested: Vec<Keyed<T>> = children.into_par_iter().map(|p| explore(config, options, p, f)).collect::<Result<_>>()?;
    out.extend(nested.into_iter().flatten());
    Ok(out)
}

/// Visits every branch and returns `f` of each, in lexicographic order of
/// the outcome sequence.
pub fn enumerate_map<T, F>(config: &ProtocolConfig, options: SessionOptions, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(RunResult) -> Result<T> + Sync,
{
    config.validate()?;
    let mut all = explore(config, options, Vec::new(), &f)?;
    all.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(all.into_iter().map(|(_, t)| t).collect())
}

#[derive(Debug, Clone)]
pub struct BranchRecord {
    pub bits: Vec<u8>,
    pub probability: f64,
    pub outcome: RunOutcome,
    /// `|<target|final>|` for completed runs.
    pub fidelity: Option<f64>,
}

/// Every branch with its probability and, for completed runs, the fidelity
/// against the oracle.
pub fn run_all_branches(config: &ProtocolConfig, options: SessionOptions) -> Result<Vec<BranchRecord>> {
    let target = config.target()?;
    enumerate_map(config, options, |r| {
        let fidelity = match r.outcome.final_state() {
            Some(s) => Some(oracle::target_fidelity(s, &target)?),
            None => None,
        };
        Ok(BranchRecord { bits: r.bits(), probability: r.probability, outcome: r.outcome, fidelity })
    })
}

/// Labels of the outcome bits of a consenting run, in transcript order.
pub fn outcome_labels(m: usize, n: usize) -> Result<Vec<String>> {
    let config = probe_config(m, n)?;
    let result = run_scripted(&config, Vec::new(), SessionOptions { validate_frame: false, ..Default::default() })?;
    Ok(result.transcript.labels())
}

fn probe_config(m: usize, n: usize) -> Result<ProtocolConfig> {
    ProtocolConfig::new(
        m,
        n,
        vec![Su2Operator::identity(); m],
        Complex64::new(0.6, 0.0),
        Complex64::new(0.8, 0.0),
    )
}

/// The symbolic corrections of the protocol for `m` joint parties and `n`
/// controllers, read off a validated run with identity operators on the
/// probe input `(0.6, 0.8)`.
pub fn derive_corrections(m: usize, n: usize) -> Result<Vec<CorrectionFormula>> {
    let config = probe_config(m, n)?;
    Ok(run_scripted(&config, Vec::new(), SessionOptions::default())?.formulas)
}

/// Probability that each outcome bit is 0 and 1, over branches that
/// produced the full set of bits.
pub fn outcome_marginals(records: &[BranchRecord], bit_count: usize) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; bit_count];
    for r in records.iter().filter(|r| r.bits.len() == bit_count) {
        for (slot, bit) in out.iter_mut().zip(&r.bits) {
            slot[*bit as usize] += r.probability;
        }
    }
    out
}

/// Whether Alice needs the controllers' last bits: for every assignment of
/// the other outcomes, no single polarization Pauli works for all values
/// of the controllers' bits.
pub fn controllers_are_necessary(config: &ProtocolConfig) -> Result<bool> {
    if config.n == 0 {
        return Err(Error::VariantMismatch { variant: "controller check", requirement: "n >= 1" });
    }
    let target = config.target()?.amplitudes();
    let options = SessionOptions { stop_before_alice_fix: true, ..Default::default() };
    let rows = enumerate_map(config, options, |r| {
        let labels = r.transcript.labels();
        let key: Vec<u8> = labels
            .iter()
            .zip(r.bits())
            .filter(|(l, _)| !l.starts_with('v'))
            .map(|(_, b)| b)
            .collect();
        let qubit = r.outcome.state().qubit(PhotonId::A, Dof::Polar)?;
        Ok((key, qubit))
    })?;
    let mut groups: BTreeMap<Vec<u8>, Vec<[Complex64; 2]>> = BTreeMap::new();
    for (key, qubit) in rows {
        groups.entry(key).or_default().push(qubit);
    }
    for qubits in groups.values() {
        for power in PauliPower::all() {
            let works = qubits
                .iter()
                .all(|q| oracle::matching_paulis(*q, target, COMPARE_TOLERANCE).contains(&power));
            if works {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
