//! Ideal cross-Kerr coupling to a coherent probe and X-quadrature readout.
//!
//! The probe is modelled by an integer phase multiplier per basis ket: a
//! Kerr interaction of strength `mult * theta` on a path adds `mult` to every
//! ket in which the photon occupies that path. Homodyne detection resolves
//! `|mult|` but not its sign, so kets tagged `+n` and `-n` collapse together.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{Dof, HybridState, Ket, PhotonId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KerrInteraction {
    pub photon: PhotonId,
    pub path: u8,
    pub multiplier: i32,
}

/// Phase-class readout of a probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HomodyneOutcome {
    /// Absolute value of the accrued phase multiplier.
    pub phase_class: u32,
    /// Bits the protocol derives from the class.
    pub label_bits: Vec<u8>,
}

impl HomodyneOutcome {
    /// Binary digits of the class, most significant first.
    pub fn with_bits(phase_class: u32, width: usize) -> Self {
        let label_bits = (0..width).rev().map(|i| ((phase_class >> i) & 1) as u8).collect();
        HomodyneOutcome { phase_class, label_bits }
    }
}

/// One readout possibility with its probability and collapsed state.
#[derive(Debug, Clone)]
pub struct HomodyneBranch {
    pub phase_class: u32,
    pub probability: f64,
    pub state: HybridState,
}

#[derive(Debug, Clone, Default)]
pub struct CoherentProbe {
    tags: BTreeMap<Ket, i32>,
    interactions: Vec<KerrInteraction>,
    consumed: bool,
}

impl CoherentProbe {
    pub fn new() -> Self {
        CoherentProbe::default()
    }

    pub fn interactions(&self) -> &[KerrInteraction] {
        &self.interactions
    }

    /// Multiplier currently attached to `ket`.
    pub fn multiplier(&self, ket: &Ket) -> i32 {
        self.tags.get(ket).copied().unwrap_or(0)
    }

    /// Couples the probe to `path` of `photon`. The state is unchanged; the
    /// caller must not transform it before reading the probe out.
    pub fn kerr(&mut self, state: &HybridState, photon: PhotonId, path: u8, multiplier: i32) -> Result<()> {
        if self.consumed {
            return Err(Error::ProbeConsumed);
        }
        if !matches!(multiplier, -1 | 1 | 2) {
            return Err(Error::InvalidMultiplier(multiplier));
        }
        let slot = state.registry().live_slot(photon)?;
        for (ket, _) in state.terms() {
            if ket.bit(slot, Dof::Spatial) == path & 1 {
                *self.tags.entry(*ket).or_insert(0) += multiplier;
            }
        }
        self.interactions.push(KerrInteraction { photon, path: path & 1, multiplier });
        Ok(())
    }

    fn classes(&self, state: &HybridState) -> BTreeMap<u32, f64> {
        let mut classes = BTreeMap::new();
        for (ket, amp) in state.terms() {
            *classes.entry(self.multiplier(ket).unsigned_abs()).or_insert(0.0) += amp.norm_sqr();
        }
        classes
    }

    /// Probability of every phase class, without collapsing anything.
    pub fn outcome_distribution(&self, state: &HybridState) -> Result<Vec<(u32, f64)>> {
        if self.consumed {
            return Err(Error::ProbeConsumed);
        }
        let total = state.norm().powi(2);
        Ok(self.classes(state).into_iter().map(|(c, w)| (c, w / total)).collect())
    }

    /// Every readout with its collapsed state, ordered by phase class.
    /// Consumes the probe.
    pub fn branches(&mut self, state: &HybridState) -> Result<Vec<HomodyneBranch>> {
        if self.consumed {
            return Err(Error::ProbeConsumed);
        }
        self.consumed = true;
        let mut out = Vec::new();
        for (class, _) in self.classes(state) {
            let tags = &self.tags;
            let selected = state.postselect(|k| tags.get(k).copied().unwrap_or(0).unsigned_abs() == class);
            if let Some((probability, collapsed)) = selected {
                out.push(HomodyneBranch { phase_class: class, probability, state: collapsed });
            }
        }
        Ok(out)
    }

    /// Samples one readout. Consumes the probe.
    pub fn homodyne<R: Rng + ?Sized>(
        &mut self,
        state: &HybridState,
        rng: &mut R,
    ) -> Result<(HomodyneOutcome, HybridState)> {
        let branches = self.branches(state)?;
        let probabilities: Vec<f64> = branches.iter().map(|b| b.probability).collect();
        let chosen = sample_index(&probabilities, rng);
        let branch = branches.into_iter().nth(chosen).ok_or(Error::ZeroNorm)?;
        Ok((HomodyneOutcome { phase_class: branch.phase_class, label_bits: Vec::new() }, branch.state))
    }
}

/// Index drawn from an (approximately normalized) discrete distribution.
pub fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let total: f64 = probabilities.iter().sum();
    let mut draw = rng.random::<f64>() * total;
    for (i, p) in probabilities.iter().enumerate() {
        if draw < *p {
            return i;
        }
        draw -= p;
    }
    probabilities.len().saturating_sub(1)
}

/// Squared norm of the terms of `state` with a given probe class; handy for
/// checking distributions by hand.
pub fn class_weight(probe: &CoherentProbe, state: &HybridState, class: u32) -> f64 {
    state
        .terms()
        .filter(|(k, _)| probe.multiplier(k).unsigned_abs() == class)
        .map(|(_, a): (_, &Complex64)| a.norm_sqr())
        .sum()
}
