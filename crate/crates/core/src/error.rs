use thiserror::Error;

use crate::hilbert::{Dof, PhotonId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input amplitudes are not normalized: |alpha|^2 + |beta|^2 = {0}")]
    NotNormalized(f64),
    #[error("at least one joint party is required")]
    NoJointParty,
    #[error("configuration needs {0} photons, at most 64 are supported")]
    TooManyPhotons(usize),
    #[error("photon {0} is not part of this state")]
    UnknownPhoton(PhotonId),
    #[error("photon {0} has already been measured out")]
    DeadPhoton(PhotonId),
    #[error("states have different photon registries")]
    RegistryMismatch,
    #[error("the set of kept photons is empty")]
    EmptyKeepSet,
    #[error("amplitude is not finite")]
    NonFinite,
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("operator is not unitary: |u|^2 + |v|^2 = {0}")]
    NonUnitary(f64),
    #[error("polarizing beam splitter on {photon} expects a single input path {path}")]
    PbsInputPaths { photon: PhotonId, path: u8 },
    #[error("cross-Kerr multiplier {0} is not one of -1, +1, +2")]
    InvalidMultiplier(i32),
    #[error("coherent probe has already been read out")]
    ProbeConsumed,
    #[error("{photon} is entangled in its {dof} degree of freedom")]
    NotSeparable { photon: PhotonId, dof: Dof },
    #[error("protocol incomplete: photon {0} is still alive")]
    ProtocolIncomplete(PhotonId),
    #[error("at least one unitary is required")]
    EmptyUnitaryList,
    #[error("expected {expected} unitaries, got {got}")]
    UnitaryCount { expected: usize, got: usize },
    #[error("frame rule violated: {0}")]
    FrameRule(String),
    #[error("Pauli frame inconsistent at {step} on branch [{branch}]: predicted {predicted}, search found {found}")]
    FrameInconsistency {
        step: String,
        branch: String,
        predicted: String,
        found: String,
    },
    #[error("no Pauli correction restores the expected qubit")]
    NoCorrection,
    #[error("several Pauli corrections restore the expected qubit")]
    AmbiguousCorrection,
    #[error("variant {variant} requires {requirement}")]
    VariantMismatch {
        variant: &'static str,
        requirement: &'static str,
    },
    #[error("consent list has {got} entries for {expected} controllers")]
    ConsentCount { expected: usize, got: usize },
    #[error("branch count {0} exceeds the enumeration limit {1}")]
    TooManyBranches(u128, u128),
}
