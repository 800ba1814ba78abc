//! Simulation and verification of controlled-joint remote implementation of
//! operators on photons hyperentangled in path and polarization.
//!
//! The crate is organised bottom-up:
//!
//! * [`hilbert`]: sparse hybrid path/polarization states.
//! * [`optics`]: beam splitters, wave plates, Paulis and SU(2) operators.
//! * [`kerr`]: cross-Kerr phase tagging and sign-blind homodyne readout.
//! * [`frame`]: XOR-affine Pauli-frame tracking of the encoded qubit.
//! * [`protocol`]: the multi-party state machine, branch enumeration and
//!   reduced variants.
//! * [`oracle`]: direct matrix application and brute-force correction search.
//! * [`reference`]: closed-form intermediate states and the errata check.

pub mod error;
pub mod frame;
pub mod hilbert;
pub mod kerr;
pub mod optics;
pub mod oracle;
pub mod protocol;
pub mod reference;

pub use error::{Error, Result};
pub use hilbert::{build_initial_state, Dof, HybridState, Ket, Mode, PhotonId, Registry};
pub use optics::{PauliPower, Su2Operator};
