//! Linear-optical elements and local unitaries on single photons.
//!
//! Conventions:
//! * balanced beam splitter: `|j> -> (|0> + (-1)^j |1>) / sqrt(2)` on the path bit;
//! * half-wave plate: `H <-> V` on one path only;
//! * quarter-wave plate: `H -> (H + V)/sqrt(2)`, `V -> (H - V)/sqrt(2)` on one path only;
//! * polarizing beam splitter: transmits H, reflects V onto the other path.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{Dof, HybridState, PhotonId, INPUT_TOLERANCE};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `[[u, v], [-v*, u*]]` with `|u|^2 + |v|^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Su2Operator {
    u: Complex64,
    v: Complex64,
}

impl Su2Operator {
    pub fn new(u: Complex64, v: Complex64) -> Result<Self> {
        let norm_sq = u.norm_sqr() + v.norm_sqr();
        if !norm_sq.is_finite() || (norm_sq - 1.0).abs() > INPUT_TOLERANCE {
            return Err(Error::NonUnitary(norm_sq));
        }
        Ok(Su2Operator { u, v })
    }

    pub fn identity() -> Self {
        Su2Operator { u: ONE, v: ZERO }
    }

    /// `i X`, the SU(2) representative of a bit flip.
    pub fn pauli_x() -> Self {
        Su2Operator { u: ZERO, v: Complex64::i() }
    }

    /// `i Z`, the SU(2) representative of a phase flip.
    pub fn pauli_z() -> Self {
        Su2Operator { u: Complex64::i(), v: ZERO }
    }

    /// `[[1, 1], [-1, 1]] / sqrt(2)`.
    pub fn hadamard_like() -> Self {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        Su2Operator { u: h, v: h }
    }

    /// Haar-random element of SU(2).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let g: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        Su2Operator {
            u: Complex64::new(g[0] / norm, g[1] / norm),
            v: Complex64::new(g[2] / norm, g[3] / norm),
        }
    }

    pub fn u(&self) -> Complex64 {
        self.u
    }

    pub fn v(&self) -> Complex64 {
        self.v
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [[self.u, self.v], [-self.v.conj(), self.u.conj()]]
    }

    pub fn adjoint(&self) -> Self {
        Su2Operator { u: self.u.conj(), v: -self.v }
    }

    /// `self * other`.
    pub fn compose(&self, other: &Su2Operator) -> Self {
        Su2Operator {
            u: self.u * other.u - self.v * other.v.conj(),
            v: self.u * other.v + self.v * other.u.conj(),
        }
    }

    pub fn apply(&self, q: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.u * q[0] + self.v * q[1],
            -self.v.conj() * q[0] + self.u.conj() * q[1],
        ]
    }
}

/// `Z^z X^x`: X is applied first, then Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct PauliPower {
    pub x: u8,
    pub z: u8,
}

impl PauliPower {
    pub const IDENTITY: PauliPower = PauliPower { x: 0, z: 0 };

    pub fn new(x: u8, z: u8) -> Self {
        PauliPower { x: x & 1, z: z & 1 }
    }

    /// The four powers in `(x, z)` lexicographic order.
    pub fn all() -> [PauliPower; 4] {
        [
            PauliPower::new(0, 0),
            PauliPower::new(0, 1),
            PauliPower::new(1, 0),
            PauliPower::new(1, 1),
        ]
    }

    /// Exponent-wise XOR; correct up to a global phase.
    pub fn compose(self, other: PauliPower) -> PauliPower {
        PauliPower::new(self.x ^ other.x, self.z ^ other.z)
    }

    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        let zs = if self.z == 1 { -ONE } else { ONE };
        if self.x == 1 {
            // Z^z X = [[0, 1], [zs, 0]]
            [[ZERO, ONE], [zs, ZERO]]
        } else {
            [[ONE, ZERO], [ZERO, zs]]
        }
    }
}

impl fmt::Display for PauliPower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Z^{} X^{}", self.z, self.x)
    }
}

fn hadamard() -> [[Complex64; 2]; 2] {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

fn flip() -> [[Complex64; 2]; 2] {
    [[ZERO, ONE], [ONE, ZERO]]
}

/// Mixes the two paths of `photon` on a balanced beam splitter.
pub fn apply_bbs(state: &HybridState, photon: PhotonId) -> Result<HybridState> {
    state.apply_local(photon, Dof::Spatial, hadamard(), None)
}

/// Half-wave plate on `path`: exchanges H and V there.
pub fn apply_hwp(state: &HybridState, photon: PhotonId, path: u8) -> Result<HybridState> {
    state.apply_local(photon, Dof::Polar, flip(), Some((Dof::Spatial, path & 1)))
}

/// Quarter-wave plate on `path`, used as a polarization Hadamard.
pub fn apply_qwp(state: &HybridState, photon: PhotonId, path: u8) -> Result<HybridState> {
    state.apply_local(photon, Dof::Polar, hadamard(), Some((Dof::Spatial, path & 1)))
}

/// Polarizing beam splitter fed from `in_path` only: H stays on `in_path`,
/// V leaves on the other path.
pub fn apply_pbs(state: &HybridState, photon: PhotonId, in_path: u8) -> Result<HybridState> {
    let in_path = in_path & 1;
    let slot = state.registry().live_slot(photon)?;
    if state.terms().any(|(k, _)| k.bit(slot, Dof::Spatial) != in_path) {
        return Err(Error::PbsInputPaths { photon, path: in_path });
    }
    state.permute(photon, |slot, k| {
        if k.bit(slot, Dof::Polar) == 1 {
            k.flipped(slot, Dof::Spatial)
        } else {
            k
        }
    })
}

/// `Z^z X^x` on the path qubit.
pub fn apply_pauli_spatial(state: &HybridState, photon: PhotonId, power: PauliPower) -> Result<HybridState> {
    state.apply_local(photon, Dof::Spatial, power.matrix(), None)
}

/// `Z^z X^x` on the polarization qubit.
pub fn apply_pauli_polar(state: &HybridState, photon: PhotonId, power: PauliPower) -> Result<HybridState> {
    state.apply_local(photon, Dof::Polar, power.matrix(), None)
}

pub fn apply_pauli(state: &HybridState, photon: PhotonId, dof: Dof, power: PauliPower) -> Result<HybridState> {
    match dof {
        Dof::Spatial => apply_pauli_spatial(state, photon, power),
        Dof::Polar => apply_pauli_polar(state, photon, power),
    }
}

/// Applies `op` to the path qubit with path 0 as the first basis vector.
pub fn apply_su2_spatial(state: &HybridState, photon: PhotonId, op: &Su2Operator) -> Result<HybridState> {
    state.apply_local(photon, Dof::Spatial, op.matrix(), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_initial_state, Registry};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn single(amps: &[(u8, u8, Complex64)]) -> HybridState {
        let r = Registry::new(1, 0).unwrap();
        let mut b = HybridState::builder(&r);
        for &(path, pol, a) in amps {
            b = b.term(a, &[(PhotonId::A, path, pol)]).unwrap();
        }
        b.build().unwrap()
    }

    fn assert_same(a: &HybridState, b: &HybridState) {
        // exact amplitude comparison, not just up to phase
        let diff: f64 = a
            .terms()
            .map(|(k, x)| (x - b.amplitude(k)).norm())
            .chain(b.terms().map(|(k, y)| (y - a.amplitude(k)).norm()))
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "states differ by {diff}");
    }

    #[test]
    fn bbs_sends_path_zero_to_even_superposition() {
        let s = single(&[(0, 0, c(1.0))]);
        let h = FRAC_1_SQRT_2;
        assert_same(&apply_bbs(&s, PhotonId::A).unwrap(), &single(&[(0, 0, c(h)), (1, 0, c(h))]));
        let s1 = single(&[(1, 0, c(1.0))]);
        assert_same(&apply_bbs(&s1, PhotonId::A).unwrap(), &single(&[(0, 0, c(h)), (1, 0, c(-h))]));
    }

    #[test]
    fn hwp_is_path_conditional() {
        let on = single(&[(1, 0, c(1.0))]);
        assert_same(&apply_hwp(&on, PhotonId::A, 1).unwrap(), &single(&[(1, 1, c(1.0))]));
        let off = single(&[(0, 0, c(1.0))]);
        assert_same(&apply_hwp(&off, PhotonId::A, 1).unwrap(), &off);
    }

    #[test]
    fn qwp_rotates_h_and_v() {
        let h = FRAC_1_SQRT_2;
        let hs = single(&[(1, 0, c(1.0))]);
        assert_same(&apply_qwp(&hs, PhotonId::A, 1).unwrap(), &single(&[(1, 0, c(h)), (1, 1, c(h))]));
        let vs = single(&[(0, 1, c(1.0))]);
        assert_same(&apply_qwp(&vs, PhotonId::A, 0).unwrap(), &single(&[(0, 0, c(h)), (0, 1, c(-h))]));
    }

    #[test]
    fn pbs_transmits_h_and_reflects_v() {
        let s = single(&[(1, 0, c(0.6)), (1, 1, c(0.8))]);
        assert_same(&apply_pbs(&s, PhotonId::A, 1).unwrap(), &single(&[(1, 0, c(0.6)), (0, 1, c(0.8))]));
        let h = single(&[(0, 0, c(1.0))]);
        assert_same(&apply_pbs(&h, PhotonId::A, 0).unwrap(), &h);
        let v = single(&[(0, 1, c(1.0))]);
        assert_same(&apply_pbs(&v, PhotonId::A, 0).unwrap(), &single(&[(1, 1, c(1.0))]));
    }

    #[test]
    fn pbs_rejects_two_input_paths() {
        let s = single(&[(0, 0, c(0.6)), (1, 1, c(0.8))]);
        assert!(matches!(apply_pbs(&s, PhotonId::A, 0), Err(Error::PbsInputPaths { .. })));
    }

    #[test]
    fn paulis_flip_bits_and_signs() {
        let s = single(&[(0, 0, c(0.6)), (1, 0, c(0.8))]);
        let x = apply_pauli_spatial(&s, PhotonId::A, PauliPower::new(1, 0)).unwrap();
        assert_same(&x, &single(&[(1, 0, c(0.6)), (0, 0, c(0.8))]));
        let p = single(&[(0, 0, c(0.6)), (0, 1, c(0.8))]);
        let z = apply_pauli_polar(&p, PhotonId::A, PauliPower::new(0, 1)).unwrap();
        assert_same(&z, &single(&[(0, 0, c(0.6)), (0, 1, c(-0.8))]));
    }

    #[test]
    fn pauli_applies_x_before_z() {
        // Z X (a|0> + b|1>) = b|0> - a|1>
        let s = single(&[(0, 0, c(0.6)), (1, 0, c(0.8))]);
        let zx = apply_pauli_spatial(&s, PhotonId::A, PauliPower::new(1, 1)).unwrap();
        assert_same(&zx, &single(&[(0, 0, c(0.8)), (1, 0, c(-0.6))]));
    }

    #[test]
    fn su2_matches_matrix_vector_product() {
        let s = single(&[(0, 0, c(0.6)), (1, 0, c(0.8))]);
        assert_same(&apply_su2_spatial(&s, PhotonId::A, &Su2Operator::identity()).unwrap(), &s);
        let swap = Su2Operator::new(c(0.0), c(1.0)).unwrap();
        assert_same(
            &apply_su2_spatial(&s, PhotonId::A, &swap).unwrap(),
            &single(&[(0, 0, c(0.8)), (1, 0, c(-0.6))]),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = Su2Operator::random(&mut rng);
        let m = u.matrix();
        // independent multiply
        let out0 = m[0][0] * 0.6 + m[0][1] * 0.8;
        let out1 = m[1][0] * 0.6 + m[1][1] * 0.8;
        let expected = single(&[(0, 0, out0), (1, 0, out1)]);
        assert_same(&apply_su2_spatial(&s, PhotonId::A, &u).unwrap(), &expected);
    }

    #[test]
    fn su2_rejects_non_unitary() {
        assert!(matches!(Su2Operator::new(c(1.0), c(0.5)), Err(Error::NonUnitary(_))));
    }

    #[test]
    fn dead_photons_are_rejected() {
        let s = build_initial_state(c(1.0), c(0.0), 1, 0).unwrap().forget(PhotonId::X).unwrap();
        assert_eq!(apply_bbs(&s, PhotonId::X).unwrap_err(), Error::DeadPhoton(PhotonId::X));
        assert_eq!(apply_hwp(&s, PhotonId::X, 0).unwrap_err(), Error::DeadPhoton(PhotonId::X));
        assert_eq!(apply_qwp(&s, PhotonId::X, 0).unwrap_err(), Error::DeadPhoton(PhotonId::X));
    }

    fn arb_state() -> impl Strategy<Value = HybridState> {
        (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(theta, phi)| {
            let alpha = c((theta / 2.0).cos());
            let beta = Complex64::from_polar((theta / 2.0).sin(), phi);
            build_initial_state(alpha, beta, 2, 1).unwrap()
        })
    }

    fn arb_photon() -> impl Strategy<Value = PhotonId> {
        prop_oneof![
            Just(PhotonId::X),
            Just(PhotonId::A),
            Just(PhotonId::Bob(1)),
            Just(PhotonId::Bob(2)),
            Just(PhotonId::Charlie(1)),
        ]
    }

    proptest! {
        #[test]
        fn involutions_restore_the_state(s in arb_state(), p in arb_photon(), path in 0u8..2) {
            let norm_ok = |t: &HybridState| (t.norm() - 1.0).abs() < 1e-12;
            let b = apply_bbs(&s, p).unwrap();
            prop_assert!(norm_ok(&b));
            prop_assert!((apply_bbs(&b, p).unwrap().fidelity(&s).unwrap() - 1.0).abs() < 1e-12);
            let h = apply_hwp(&b, p, path).unwrap();
            prop_assert!(norm_ok(&h));
            prop_assert!((apply_hwp(&h, p, path).unwrap().overlap(&b).unwrap() - c(1.0)).norm() < 1e-12);
            let q = apply_qwp(&b, p, path).unwrap();
            prop_assert!(norm_ok(&q));
            prop_assert!((apply_qwp(&q, p, path).unwrap().overlap(&b).unwrap() - c(1.0)).norm() < 1e-12);
        }

        #[test]
        fn su2_adjoint_undoes_su2(s in arb_state(), p in arb_photon(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Su2Operator::random(&mut rng);
            let t = apply_su2_spatial(&s, p, &u).unwrap();
            prop_assert!((t.norm() - 1.0).abs() < 1e-12);
            let back = apply_su2_spatial(&t, p, &u.adjoint()).unwrap();
            prop_assert!((back.overlap(&s).unwrap() - c(1.0)).norm() < 1e-12);
        }

        #[test]
        fn operations_on_distinct_photons_commute(s in arb_state(), path in 0u8..2, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Su2Operator::random(&mut rng);
            let ab = apply_qwp(&apply_bbs(&s, PhotonId::A).unwrap(), PhotonId::Bob(1), path).unwrap();
            let ba = apply_bbs(&apply_qwp(&s, PhotonId::Bob(1), path).unwrap(), PhotonId::A).unwrap();
            prop_assert!((ab.overlap(&ba).unwrap() - c(1.0)).norm() < 1e-12);
            let uc = apply_su2_spatial(&apply_hwp(&s, PhotonId::Charlie(1), path).unwrap(), PhotonId::Bob(2), &u).unwrap();
            let cu = apply_hwp(&apply_su2_spatial(&s, PhotonId::Bob(2), &u).unwrap(), PhotonId::Charlie(1), path).unwrap();
            prop_assert!((uc.overlap(&cu).unwrap() - c(1.0)).norm() < 1e-12);
        }

        #[test]
        fn pbs_is_undone_by_recombination(theta in 0.0..std::f64::consts::PI, path in 0u8..2) {
            let s = single(&[(path, 0, c(theta.cos())), (path, 1, c(theta.sin()))]);
            let split = apply_pbs(&s, PhotonId::A, path).unwrap();
            prop_assert!((split.norm() - 1.0).abs() < 1e-12);
            // recombine: move V back onto the input path
            let back = split.permute(PhotonId::A, |slot, k| {
                if k.bit(slot, Dof::Polar) == 1 { k.flipped(slot, Dof::Spatial) } else { k }
            }).unwrap();
            prop_assert!((back.overlap(&s).unwrap() - c(1.0)).norm() < 1e-12);
        }
    }
}
