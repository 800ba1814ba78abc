//! Ground truth that does not go through the protocol: the joint unitary
//! applied directly to Alice's input, and an exhaustive search over the four
//! Pauli corrections.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{Dof, HybridState, PhotonId, COMPARE_TOLERANCE};
use crate::optics::{PauliPower, Su2Operator};

/// `a0 |a0> + a1 |a1>` on Alice's photon, polarization V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetState {
    pub a0: Complex64,
    pub a1: Complex64,
}

impl TargetState {
    pub fn amplitudes(&self) -> [Complex64; 2] {
        [self.a0, self.a1]
    }

    /// The target embedded in the registry of `like`.
    pub fn embed(&self, like: &HybridState) -> Result<HybridState> {
        HybridState::builder(like.registry())
            .term(self.a0, &[(PhotonId::A, 0, 1)])?
            .term(self.a1, &[(PhotonId::A, 1, 1)])?
            .build()
    }
}

/// `U^1 U^2 ... U^M (alpha, beta)^T`, computed with plain 2x2 arithmetic.
pub fn direct_apply(unitaries: &[Su2Operator], alpha: Complex64, beta: Complex64) -> Result<TargetState> {
    if unitaries.is_empty() {
        return Err(Error::EmptyUnitaryList);
    }
    let mut a = alpha;
    let mut b = beta;
    for op in unitaries.iter().rev() {
        let (u, v) = (op.u(), op.v());
        let na = u * a + v * b;
        let nb = -v.conj() * a + u.conj() * b;
        a = na;
        b = nb;
    }
    Ok(TargetState { a0: a, a1: b })
}

fn require_only_a(state: &HybridState) -> Result<()> {
    if let Some(other) = state.registry().live().find(|p| *p != PhotonId::A) {
        return Err(Error::ProtocolIncomplete(other));
    }
    state.registry().live_slot(PhotonId::A)?;
    Ok(())
}

/// `|<target|final>|` for a finished run.
pub fn target_fidelity(final_state: &HybridState, target: &TargetState) -> Result<f64> {
    require_only_a(final_state)?;
    target.embed(final_state)?.fidelity(final_state)
}

/// Whether a finished run produced the target up to a global phase.
pub fn assert_equiv(final_state: &HybridState, target: &TargetState, tol: f64) -> Result<bool> {
    Ok(target_fidelity(final_state, target)? >= 1.0 - tol)
}

fn qubit_fidelity(a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
    let inner = a[0].conj() * b[0] + a[1].conj() * b[1];
    let na = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
    let nb = (b[0].norm_sqr() + b[1].norm_sqr()).sqrt();
    inner.norm() / (na * nb)
}

/// `Z^z X^x q` with X applied first.
pub fn apply_pauli_to_qubit(power: PauliPower, q: [Complex64; 2]) -> [Complex64; 2] {
    let mut out = if power.x == 1 { [q[1], q[0]] } else { q };
    if power.z == 1 {
        out[1] = -out[1];
    }
    out
}

/// Every Pauli power that maps `qubit` onto `expected` up to a global phase.
pub fn matching_paulis(qubit: [Complex64; 2], expected: [Complex64; 2], tol: f64) -> Vec<PauliPower> {
    PauliPower::all()
        .into_iter()
        .filter(|p| qubit_fidelity(expected, apply_pauli_to_qubit(*p, qubit)) >= 1.0 - tol)
        .collect()
}

/// The unique Pauli power that turns the qubit held by `photon` in `dof`
/// into `expected`.
pub fn brute_force_correction(
    state: &HybridState,
    photon: PhotonId,
    dof: Dof,
    expected: [Complex64; 2],
) -> Result<PauliPower> {
    let qubit = state.qubit(photon, dof)?;
    match matching_paulis(qubit, expected, COMPARE_TOLERANCE).as_slice() {
        [] => Err(Error::NoCorrection),
        [only] => Ok(*only),
        _ => Err(Error::AmbiguousCorrection),
    }
}

/// Checks a predicted correction against the exhaustive search. When the
/// expected qubit is a basis state several powers work; the prediction then
/// only has to be one of them.
pub fn check_prediction(
    state: &HybridState,
    photon: PhotonId,
    dof: Dof,
    expected: [Complex64; 2],
    predicted: PauliPower,
) -> Result<()> {
    let qubit = state.qubit(photon, dof)?;
    let found = matching_paulis(qubit, expected, COMPARE_TOLERANCE);
    let degenerate = (expected[0] * expected[1]).norm() < COMPARE_TOLERANCE;
    let ok = match found.as_slice() {
        [only] => *only == predicted,
        [] => false,
        many => degenerate && many.contains(&predicted),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::FrameInconsistency {
            step: format!("{photon} {dof}"),
            branch: String::new(),
            predicted: predicted.to_string(),
            found: found.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", "),
        })
    }
}
