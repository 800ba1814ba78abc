//! Sparse joint state of all photons in both the spatial (path) and the
//! polarization degree of freedom.
//!
//! Every photon contributes one path bit and one polarization bit to a
//! [`Ket`]. A [`HybridState`] maps kets to complex amplitudes and never holds
//! more than a few dozen terms during a protocol run, so all operations are
//! exact sparse rewrites rather than dense linear algebra.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Amplitudes below this magnitude are dropped.
pub const PRUNE_TOLERANCE: f64 = 1e-14;
/// Default tolerance for state comparisons.
pub const COMPARE_TOLERANCE: f64 = 1e-10;
/// Tolerance on the normalization of user-supplied amplitudes.
pub const INPUT_TOLERANCE: f64 = 1e-9;

/// Measurement classes lighter than this are treated as impossible.
const MIN_BRANCH_WEIGHT: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhotonId {
    /// Alice's input photon.
    X,
    /// Alice's share of the channel.
    A,
    /// Joint party `i`, counted from 1.
    Bob(usize),
    /// Controller `j`, counted from 1.
    Charlie(usize),
}

impl PhotonId {
    /// Letter used for the photon's path labels (`x0`, `a1`, `b0`, `c1`).
    fn path_letter(self) -> char {
        match self {
            PhotonId::X => 'x',
            PhotonId::A => 'a',
            PhotonId::Bob(_) => 'b',
            PhotonId::Charlie(_) => 'c',
        }
    }
}

impl Serialize for PhotonId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl fmt::Display for PhotonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhotonId::X => write!(f, "X"),
            PhotonId::A => write!(f, "A"),
            PhotonId::Bob(i) => write!(f, "B{i}"),
            PhotonId::Charlie(j) => write!(f, "C{j}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dof {
    Spatial,
    Polar,
}

impl Dof {
    pub fn other(self) -> Dof {
        match self {
            Dof::Spatial => Dof::Polar,
            Dof::Polar => Dof::Spatial,
        }
    }
}

impl fmt::Display for Dof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dof::Spatial => write!(f, "spatial"),
            Dof::Polar => write!(f, "polarization"),
        }
    }
}

/// One degree of freedom of one photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mode {
    pub photon: PhotonId,
    pub dof: Dof,
}

impl Mode {
    pub fn spatial(photon: PhotonId) -> Self {
        Mode { photon, dof: Dof::Spatial }
    }

    pub fn polar(photon: PhotonId) -> Self {
        Mode { photon, dof: Dof::Polar }
    }
}

/// A classical configuration: path bit and polarization bit (0 = H, 1 = V)
/// for every registry slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ket {
    spatial: u64,
    polar: u64,
}

impl Ket {
    pub fn bit(&self, slot: usize, dof: Dof) -> u8 {
        let word = match dof {
            Dof::Spatial => self.spatial,
            Dof::Polar => self.polar,
        };
        ((word >> slot) & 1) as u8
    }

    pub fn with_bit(mut self, slot: usize, dof: Dof, bit: u8) -> Ket {
        let word = match dof {
            Dof::Spatial => &mut self.spatial,
            Dof::Polar => &mut self.polar,
        };
        if bit & 1 == 1 {
            *word |= 1 << slot;
        } else {
            *word &= !(1 << slot);
        }
        self
    }

    pub fn flipped(self, slot: usize, dof: Dof) -> Ket {
        let bit = self.bit(slot, dof);
        self.with_bit(slot, dof, bit ^ 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhotonSlot {
    pub id: PhotonId,
    pub alive: bool,
    /// `(path, polarization)` at the moment the photon was measured out.
    pub frozen: Option<(u8, u8)>,
}

/// Which photons exist in a state and which of them are still coherent.
///
/// Slots never move: a measured-out photon keeps its slot and is only
/// flagged dead, so transcripts keep stable identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    slots: Vec<PhotonSlot>,
    joint_parties: usize,
    controllers: usize,
}

impl Registry {
    /// Registry for Alice's input photon plus a channel shared by `m` joint
    /// parties and `n` controllers.
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::NoJointParty);
        }
        let count = 2 + m + n;
        if count > 64 {
            return Err(Error::TooManyPhotons(count));
        }
        let ids = [PhotonId::X, PhotonId::A]
            .into_iter()
            .chain((1..=m).map(PhotonId::Bob))
            .chain((1..=n).map(PhotonId::Charlie));
        let slots = ids
            .map(|id| PhotonSlot { id, alive: true, frozen: None })
            .collect();
        Ok(Registry { slots, joint_parties: m, controllers: n })
    }

    pub fn joint_parties(&self) -> usize {
        self.joint_parties
    }

    pub fn controllers(&self) -> usize {
        self.controllers
    }

    pub fn slots(&self) -> &[PhotonSlot] {
        &self.slots
    }

    pub fn slot_of(&self, id: PhotonId) -> Result<usize> {
        self.slots
            .iter()
            .position(|s| s.id == id)
            .ok_or(Error::UnknownPhoton(id))
    }

    /// Slot of a photon that must still be alive.
    pub fn live_slot(&self, id: PhotonId) -> Result<usize> {
        let slot = self.slot_of(id)?;
        if self.slots[slot].alive {
            Ok(slot)
        } else {
            Err(Error::DeadPhoton(id))
        }
    }

    pub fn is_alive(&self, id: PhotonId) -> bool {
        self.slots.iter().any(|s| s.id == id && s.alive)
    }

    pub fn live(&self) -> impl Iterator<Item = PhotonId> + '_ {
        self.slots.iter().filter(|s| s.alive).map(|s| s.id)
    }

    /// Channel photons: everything except Alice's input photon.
    pub fn channel(&self) -> impl Iterator<Item = PhotonId> + '_ {
        self.slots.iter().map(|s| s.id).filter(|id| *id != PhotonId::X)
    }

    /// Same photons with the same liveness; frozen values are not compared.
    pub fn same_layout(&self, other: &Registry) -> bool {
        self.slots.len() == other.slots.len()
            && self
                .slots
                .iter()
                .zip(&other.slots)
                .all(|(a, b)| a.id == b.id && a.alive == b.alive)
    }

    fn kill(&mut self, slot: usize, frozen: (u8, u8)) {
        self.slots[slot].alive = false;
        self.slots[slot].frozen = Some(frozen);
    }
}

/// One outcome of a projective measurement on a single photon.
#[derive(Debug, Clone)]
pub struct MeasurementBranch {
    pub outcome: u8,
    pub probability: f64,
    /// Post-measurement state with the measured photon flagged dead.
    pub state: HybridState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureBasis {
    /// Outcome is the path bit.
    Spatial,
    /// Outcome is the polarization bit (0 = H).
    Polar,
    /// Outcome is `2 * polarization + path`.
    PolarAndSpatial,
}

/// Sparse superposition of basis kets over a fixed photon registry.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    registry: Registry,
    terms: BTreeMap<Ket, Complex64>,
}

impl HybridState {
    pub(crate) fn from_map(registry: Registry, mut terms: BTreeMap<Ket, Complex64>) -> Self {
        terms.retain(|_, a| a.norm() >= PRUNE_TOLERANCE);
        HybridState { registry, terms }
    }

    /// Builds a state from possibly unnormalized terms; duplicate kets add up
    /// and the result is renormalized.
    pub fn from_terms<I>(registry: Registry, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Ket, Complex64)>,
    {
        let mut map: BTreeMap<Ket, Complex64> = BTreeMap::new();
        for (ket, amp) in terms {
            if !amp.re.is_finite() || !amp.im.is_finite() {
                return Err(Error::NonFinite);
            }
            *map.entry(ket).or_default() += amp;
        }
        let state = HybridState::from_map(registry, map);
        let norm = state.norm();
        if norm < PRUNE_TOLERANCE {
            return Err(Error::ZeroNorm);
        }
        Ok(state.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    /// Starts a builder for kets given photon by photon.
    pub fn builder(registry: &Registry) -> StateBuilder {
        StateBuilder { registry: registry.clone(), terms: Vec::new() }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Ket, &Complex64)> {
        self.terms.iter()
    }

    pub fn amplitude(&self, ket: &Ket) -> Complex64 {
        self.terms.get(ket).copied().unwrap_or_default()
    }

    pub fn norm(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn scaled(&self, factor: Complex64) -> Self {
        let terms = self.terms.iter().map(|(k, a)| (*k, a * factor)).collect();
        HybridState::from_map(self.registry.clone(), terms)
    }

    /// The same state multiplied by `exp(i * phase)`.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        self.scaled(Complex64::from_polar(1.0, phase))
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &HybridState) -> Result<Complex64> {
        if !self.registry.same_layout(&other.registry) {
            return Err(Error::RegistryMismatch);
        }
        Ok(self
            .terms
            .iter()
            .filter_map(|(k, a)| other.terms.get(k).map(|b| a.conj() * b))
            .sum())
    }

    /// `|<self|other>|`.
    pub fn fidelity(&self, other: &HybridState) -> Result<f64> {
        self.overlap(other).map(|c| c.norm())
    }

    pub fn equal_up_to_global_phase(&self, other: &HybridState, tol: f64) -> Result<bool> {
        Ok(self.fidelity(other)? >= 1.0 - tol)
    }

    /// The bit shared by every term, if the photon is in a definite basis
    /// state of that degree of freedom.
    pub fn definite_bit(&self, photon: PhotonId, dof: Dof) -> Result<Option<u8>> {
        let slot = self.registry.live_slot(photon)?;
        let mut bits = self.terms.keys().map(|k| k.bit(slot, dof));
        let Some(first) = bits.next() else {
            return Ok(None);
        };
        Ok(bits.all(|b| b == first).then_some(first))
    }

    /// Drops a photon that is in a definite path and polarization.
    pub fn forget(&self, photon: PhotonId) -> Result<Self> {
        let slot = self.registry.live_slot(photon)?;
        let path = self
            .definite_bit(photon, Dof::Spatial)?
            .ok_or(Error::NotSeparable { photon, dof: Dof::Spatial })?;
        let pol = self
            .definite_bit(photon, Dof::Polar)?
            .ok_or(Error::NotSeparable { photon, dof: Dof::Polar })?;
        let mut registry = self.registry.clone();
        registry.kill(slot, (path, pol));
        let terms = self
            .terms
            .iter()
            .map(|(k, a)| (k.with_bit(slot, Dof::Spatial, 0).with_bit(slot, Dof::Polar, 0), *a))
            .collect();
        Ok(HybridState::from_map(registry, terms))
    }

    /// Extracts the qubit carried by one degree of freedom of one photon,
    /// provided it factorizes from the rest of the state.
    pub fn qubit(&self, photon: PhotonId, dof: Dof) -> Result<[Complex64; 2]> {
        let slot = self.registry.live_slot(photon)?;
        let not_separable = Error::NotSeparable { photon, dof };
        let mut rest: BTreeMap<Ket, [Complex64; 2]> = BTreeMap::new();
        for (k, a) in &self.terms {
            let bit = k.bit(slot, dof) as usize;
            rest.entry(k.with_bit(slot, dof, 0)).or_default()[bit] = *a;
        }
        let (_, pivot) = rest
            .iter()
            .max_by(|x, y| pair_weight(x.1).total_cmp(&pair_weight(y.1)))
            .ok_or(Error::ZeroNorm)?;
        let scale = pair_weight(pivot).sqrt();
        let qubit = [pivot[0] / scale, pivot[1] / scale];
        // Every other rest-configuration must be proportional to the pivot.
        for pair in rest.values() {
            let cross = pair[0] * qubit[1] - pair[1] * qubit[0];
            if cross.norm() > 1e-9 {
                return Err(not_separable);
            }
        }
        Ok(qubit)
    }

    /// All outcomes of a projective measurement of one photon, in ascending
    /// outcome order. Impossible outcomes are omitted.
    pub fn measure(&self, photon: PhotonId, basis: MeasureBasis) -> Result<Vec<MeasurementBranch>> {
        let slot = self.registry.live_slot(photon)?;
        let outcome_of = |k: &Ket| match basis {
            MeasureBasis::Spatial => k.bit(slot, Dof::Spatial),
            MeasureBasis::Polar => k.bit(slot, Dof::Polar),
            MeasureBasis::PolarAndSpatial => 2 * k.bit(slot, Dof::Polar) + k.bit(slot, Dof::Spatial),
        };
        let mut classes: BTreeMap<u8, BTreeMap<Ket, Complex64>> = BTreeMap::new();
        for (k, a) in &self.terms {
            classes.entry(outcome_of(k)).or_default().insert(*k, *a);
        }
        let mut branches = Vec::new();
        for (outcome, terms) in classes {
            let weight: f64 = terms.values().map(|a| a.norm_sqr()).sum();
            if weight <= MIN_BRANCH_WEIGHT {
                continue;
            }
            let collapsed = HybridState::from_map(self.registry.clone(), terms)
                .scaled(Complex64::new(1.0 / weight.sqrt(), 0.0));
            branches.push(MeasurementBranch {
                outcome,
                probability: weight,
                state: collapsed.forget(photon)?,
            });
        }
        Ok(branches)
    }

    /// Keeps only the terms selected by `keep`, renormalized, together with
    /// their total weight. `None` when nothing survives.
    pub(crate) fn postselect(&self, keep: impl Fn(&Ket) -> bool) -> Option<(f64, HybridState)> {
        let terms: BTreeMap<Ket, Complex64> =
            self.terms.iter().filter(|(k, _)| keep(k)).map(|(k, a)| (*k, *a)).collect();
        let weight: f64 = terms.values().map(|a| a.norm_sqr()).sum();
        if weight <= MIN_BRANCH_WEIGHT {
            return None;
        }
        let state = HybridState::from_map(self.registry.clone(), terms)
            .scaled(Complex64::new(1.0 / weight.sqrt(), 0.0));
        Some((weight, state))
    }

    /// Applies a 2x2 matrix to one bit of one photon. `matrix[out][in]`.
    /// With `condition = Some((dof, value))` only kets whose other bit of the
    /// same photon equals `value` are transformed.
    pub(crate) fn apply_local(
        &self,
        photon: PhotonId,
        dof: Dof,
        matrix: [[Complex64; 2]; 2],
        condition: Option<(Dof, u8)>,
    ) -> Result<Self> {
        let slot = self.registry.live_slot(photon)?;
        let mut out: BTreeMap<Ket, Complex64> = BTreeMap::new();
        for (k, a) in &self.terms {
            let applies = condition.is_none_or(|(cdof, value)| k.bit(slot, cdof) == value);
            if !applies {
                *out.entry(*k).or_default() += a;
                continue;
            }
            let input = k.bit(slot, dof) as usize;
            for (bit, row) in matrix.iter().enumerate() {
                let coeff = row[input];
                if coeff != Complex64::default() {
                    *out.entry(k.with_bit(slot, dof, bit as u8)).or_default() += a * coeff;
                }
            }
        }
        Ok(HybridState::from_map(self.registry.clone(), out))
    }

    /// Relabels kets one-to-one; amplitudes are untouched.
    pub(crate) fn permute(&self, photon: PhotonId, f: impl Fn(usize, Ket) -> Ket) -> Result<Self> {
        let slot = self.registry.live_slot(photon)?;
        let mut out: BTreeMap<Ket, Complex64> = BTreeMap::new();
        for (k, a) in &self.terms {
            *out.entry(f(slot, *k)).or_default() += a;
        }
        Ok(HybridState::from_map(self.registry.clone(), out))
    }

    /// `Tr(rho^2)` of the reduced state on `keep`; everything else, including
    /// the other degree of freedom of kept photons, is traced out.
    pub fn reduced_purity(&self, keep: &[Mode]) -> Result<f64> {
        if keep.is_empty() {
            return Err(Error::EmptyKeepSet);
        }
        let mut kept: BTreeSet<(usize, Dof)> = BTreeSet::new();
        for mode in keep {
            kept.insert((self.registry.live_slot(mode.photon)?, mode.dof));
        }
        let split = |k: &Ket| {
            let mut inner = Ket::default();
            let mut outer = *k;
            for &(slot, dof) in &kept {
                inner = inner.with_bit(slot, dof, k.bit(slot, dof));
                outer = outer.with_bit(slot, dof, 0);
            }
            (inner, outer)
        };
        // psi[outer][inner]
        let mut blocks: BTreeMap<Ket, BTreeMap<Ket, Complex64>> = BTreeMap::new();
        for (k, a) in &self.terms {
            let (inner, outer) = split(k);
            blocks.entry(outer).or_default().insert(inner, *a);
        }
        let mut rho: BTreeMap<(Ket, Ket), Complex64> = BTreeMap::new();
        for block in blocks.values() {
            for (i, a) in block {
                for (j, b) in block {
                    *rho.entry((*i, *j)).or_default() += a * b.conj();
                }
            }
        }
        let norm_sq = self.norm().powi(2);
        Ok(rho.values().map(|c| c.norm_sqr()).sum::<f64>() / (norm_sq * norm_sq))
    }

    /// Purity of the path qubits of `keep`.
    pub fn reduced_spatial_purity(&self, keep: &[PhotonId]) -> Result<f64> {
        let modes: Vec<Mode> = keep.iter().map(|p| Mode::spatial(*p)).collect();
        self.reduced_purity(&modes)
    }

    /// Human-readable label of a ket over the live photons, e.g.
    /// `A:a1,H B1:b0,V`.
    pub fn ket_label(&self, ket: &Ket) -> String {
        self.registry
            .slots()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.alive)
            .map(|(slot, s)| {
                let pol = if ket.bit(slot, Dof::Polar) == 0 { 'H' } else { 'V' };
                format!(
                    "{}:{}{},{}",
                    s.id,
                    s.id.path_letter(),
                    ket.bit(slot, Dof::Spatial),
                    pol
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// `(label, amplitude)` for every term, in ket order.
    pub fn describe(&self) -> Vec<(String, Complex64)> {
        self.terms.iter().map(|(k, a)| (self.ket_label(k), *a)).collect()
    }
}

fn pair_weight(pair: &[Complex64; 2]) -> f64 {
    pair[0].norm_sqr() + pair[1].norm_sqr()
}

/// Assembles kets photon by photon. Unmentioned photons sit at path 0, H.
#[derive(Debug, Clone)]
pub struct StateBuilder {
    registry: Registry,
    terms: Vec<(Ket, Complex64)>,
}

impl StateBuilder {
    /// Adds `amp * |bits>` where `bits` lists `(photon, path, polarization)`.
    pub fn term(mut self, amp: Complex64, bits: &[(PhotonId, u8, u8)]) -> Result<Self> {
        let mut ket = Ket::default();
        for &(photon, path, pol) in bits {
            let slot = self.registry.live_slot(photon)?;
            ket = ket.with_bit(slot, Dof::Spatial, path).with_bit(slot, Dof::Polar, pol);
        }
        self.terms.push((ket, amp));
        Ok(self)
    }

    /// Normalized state.
    pub fn build(self) -> Result<HybridState> {
        HybridState::from_terms(self.registry, self.terms)
    }
}

/// `(alpha|x0> + beta|x1>)|V>_X` tensored with the channel
/// `(|0...0> + |1...1>)_paths (|H...H> + |V...V>)_pol` shared by `A`, the
/// `m` joint parties and the `n` controllers.
pub fn build_initial_state(alpha: Complex64, beta: Complex64, m: usize, n: usize) -> Result<HybridState> {
    let norm_sq = alpha.norm_sqr() + beta.norm_sqr();
    if !norm_sq.is_finite() {
        return Err(Error::NonFinite);
    }
    if (norm_sq - 1.0).abs() > INPUT_TOLERANCE {
        return Err(Error::NotNormalized(norm_sq));
    }
    let registry = Registry::new(m, n)?;
    let x = registry.slot_of(PhotonId::X)?;
    let channel: Vec<usize> = registry
        .channel()
        .map(|id| registry.slot_of(id))
        .collect::<Result<_>>()?;
    let mut terms = Vec::with_capacity(8);
    for (x_path, amp) in [(0u8, alpha), (1u8, beta)] {
        for path in 0..2u8 {
            for pol in 0..2u8 {
                let mut ket = Ket::default()
                    .with_bit(x, Dof::Spatial, x_path)
                    .with_bit(x, Dof::Polar, 1);
                for &slot in &channel {
                    ket = ket.with_bit(slot, Dof::Spatial, path).with_bit(slot, Dof::Polar, pol);
                }
                terms.push((ket, amp * 0.5));
            }
        }
    }
    HybridState::from_terms(registry, terms)
}
