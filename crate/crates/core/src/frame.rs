//! Symbolic Pauli-frame tracking.
//!
//! The encoded qubit is always of the form
//! `alpha |e> + (-1)^sign beta |e ^ 1>` where `e` assigns a bit to each
//! *carrier* photon in one degree of freedom. Every bit is an affine
//! function over GF(2) of the measurement outcomes seen so far
//! ([`BitExpr`]). Each protocol move updates those functions; a correction
//! on the sole remaining carrier is then `Z^sign X^e`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::BitXor;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hilbert::{Dof, Mode, PhotonId, Registry};
use crate::optics::PauliPower;

/// `constant ^ x_i ^ x_j ^ ...` over outcome variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitExpr {
    constant: u8,
    vars: BTreeSet<usize>,
}

impl BitExpr {
    pub fn zero() -> Self {
        BitExpr::default()
    }

    pub fn one() -> Self {
        BitExpr::constant(1)
    }

    pub fn constant(bit: u8) -> Self {
        BitExpr { constant: bit & 1, vars: BTreeSet::new() }
    }

    pub fn var(index: usize) -> Self {
        BitExpr { constant: 0, vars: BTreeSet::from([index]) }
    }

    pub fn constant_part(&self) -> u8 {
        self.constant
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.vars.iter().copied()
    }

    /// `Some(bit)` when no variable is involved.
    pub fn as_constant(&self) -> Option<u8> {
        self.vars.is_empty().then_some(self.constant)
    }

    pub fn eval(&self, values: &[u8]) -> u8 {
        self.vars.iter().fold(self.constant, |acc, &i| acc ^ (values[i] & 1))
    }

    /// `k ⊕ l ⊕ 1` style rendering with the given variable names.
    pub fn render(&self, labels: &[String]) -> String {
        let mut parts: Vec<String> = self.vars.iter().map(|&i| labels[i].clone()).collect();
        if self.constant == 1 || parts.is_empty() {
            parts.push(self.constant.to_string());
        }
        parts.join(" ⊕ ")
    }
}

impl BitXor for &BitExpr {
    type Output = BitExpr;

    fn bitxor(self, rhs: &BitExpr) -> BitExpr {
        BitExpr {
            constant: self.constant ^ rhs.constant,
            vars: self.vars.symmetric_difference(&rhs.vars).copied().collect(),
        }
    }
}

impl BitXor for BitExpr {
    type Output = BitExpr;

    fn bitxor(self, rhs: BitExpr) -> BitExpr {
        &self ^ &rhs
    }
}

impl BitXor<u8> for BitExpr {
    type Output = BitExpr;

    fn bitxor(mut self, rhs: u8) -> BitExpr {
        self.constant ^= rhs & 1;
        self
    }
}

impl fmt::Display for BitExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = (0..=self.vars.last().copied().unwrap_or(0)).map(|i| format!("x{i}")).collect();
        write!(f, "{}", self.render(&labels))
    }
}

/// The degree of freedom and photons currently holding the encoded qubit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub dof: Dof,
    /// Bit each carrier shows in the alpha branch.
    pub carriers: BTreeMap<PhotonId, BitExpr>,
    /// Relative sign exponent of the beta branch.
    pub sign: BitExpr,
}

/// A correction for the sole carrier, still symbolic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectionExpr {
    pub photon: PhotonId,
    pub dof: Dof,
    pub x: BitExpr,
    pub z: BitExpr,
}

impl CorrectionExpr {
    pub fn eval(&self, values: &[u8]) -> PauliPower {
        PauliPower::new(self.x.eval(values), self.z.eval(values))
    }
}

#[derive(Debug, Clone)]
pub struct PauliFrame {
    labels: Vec<String>,
    encoding: Encoding,
    fixed: BTreeMap<Mode, BitExpr>,
    spatial_resource: BTreeSet<PhotonId>,
    polar_resource: BTreeSet<PhotonId>,
}

fn rule(msg: impl Into<String>) -> Error {
    Error::FrameRule(msg.into())
}

impl PauliFrame {
    /// Frame for the initial state: the qubit sits on X's path with no
    /// sign, X is V-polarized, and the channel photons form one GHZ
    /// resource in each degree of freedom.
    pub fn new(registry: &Registry) -> Self {
        let channel: BTreeSet<PhotonId> = registry.channel().collect();
        PauliFrame {
            labels: Vec::new(),
            encoding: Encoding {
                dof: Dof::Spatial,
                carriers: BTreeMap::from([(PhotonId::X, BitExpr::zero())]),
                sign: BitExpr::zero(),
            },
            fixed: BTreeMap::from([(Mode::polar(PhotonId::X), BitExpr::one())]),
            spatial_resource: channel.clone(),
            polar_resource: channel,
        }
    }

    /// Registers a new outcome variable and returns its index.
    pub fn add_variable(&mut self, label: impl Into<String>) -> usize {
        self.labels.push(label.into());
        self.labels.len() - 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn encoding(&self) -> &Encoding {
        &self.encoding
    }

    pub fn render(&self, expr: &BitExpr) -> String {
        expr.render(&self.labels)
    }

    /// Definite bit of a photon outside the encoding, if known.
    pub fn fixed(&self, mode: Mode) -> Option<&BitExpr> {
        self.fixed.get(&mode)
    }

    pub fn fixed_path(&self, photon: PhotonId) -> Result<BitExpr> {
        self.fixed
            .get(&Mode::spatial(photon))
            .cloned()
            .ok_or_else(|| rule(format!("{photon} has no definite path")))
    }

    fn carrier(&self, photon: PhotonId, dof: Dof) -> Result<BitExpr> {
        if self.encoding.dof != dof {
            return Err(rule(format!("qubit is not encoded in the {dof} degree of freedom")));
        }
        self.encoding
            .carriers
            .get(&photon)
            .cloned()
            .ok_or_else(|| rule(format!("{photon} does not carry the qubit")))
    }

    fn sole_carrier(&self, photon: PhotonId, dof: Dof) -> Result<BitExpr> {
        let expr = self.carrier(photon, dof)?;
        if self.encoding.carriers.len() != 1 {
            return Err(rule(format!("{photon} is not the only carrier")));
        }
        Ok(expr)
    }

    /// Parity readout between a carrier (`holder`) and a member of the
    /// spatial GHZ resource (`joiner`) with Kerr couplings of opposite sign
    /// on `holder_path` and `joiner_path`. The whole resource joins the
    /// encoding.
    pub fn fuse_spatial_resource(
        &mut self,
        holder: PhotonId,
        holder_path: &BitExpr,
        joiner: PhotonId,
        joiner_path: &BitExpr,
        outcome: usize,
    ) -> Result<()> {
        let c = self.carrier(holder, Dof::Spatial)?;
        if !self.spatial_resource.contains(&joiner) {
            return Err(rule(format!("{joiner} is not in the spatial resource")));
        }
        let member = &(&(&c ^ holder_path) ^ joiner_path) ^ &BitExpr::var(outcome);
        for photon in std::mem::take(&mut self.spatial_resource) {
            self.encoding.carriers.insert(photon, member.clone());
        }
        Ok(())
    }

    /// Parity readout between a carrier and a photon with a definite path
    /// that has just passed a beam splitter. The joiner becomes a carrier.
    pub fn join_by_parity(
        &mut self,
        holder: PhotonId,
        holder_path: &BitExpr,
        joiner: PhotonId,
        joiner_path: &BitExpr,
        outcome: usize,
    ) -> Result<()> {
        let c = self.carrier(holder, Dof::Spatial)?;
        let e = self
            .fixed
            .remove(&Mode::spatial(joiner))
            .ok_or_else(|| rule(format!("{joiner} has no definite path")))?;
        let member = &(&(&c ^ holder_path) ^ joiner_path) ^ &BitExpr::var(outcome);
        self.encoding.carriers.insert(joiner, member);
        self.encoding.sign = &self.encoding.sign ^ &e;
        Ok(())
    }

    /// A carrier passes a beam splitter and a Kerr probe on `probe_path`
    /// reports whether it fired. The carrier leaves the encoding with a
    /// definite path.
    pub fn which_path(&mut self, photon: PhotonId, probe_path: &BitExpr, outcome: usize) -> Result<()> {
        self.carrier(photon, Dof::Spatial)?;
        let y = (probe_path ^ &BitExpr::var(outcome)) ^ 1;
        self.drop_carrier(photon, Dof::Spatial, y)
    }

    /// A polarization carrier is rotated by a wave plate and measured in the
    /// H/V basis.
    pub fn polar_measured(&mut self, photon: PhotonId, outcome: usize) -> Result<()> {
        self.carrier(photon, Dof::Polar)?;
        self.drop_carrier(photon, Dof::Polar, BitExpr::var(outcome))
    }

    fn drop_carrier(&mut self, photon: PhotonId, dof: Dof, y: BitExpr) -> Result<()> {
        if self.encoding.carriers.len() == 1 {
            return Err(rule(format!("measuring {photon} would destroy the qubit")));
        }
        self.encoding.carriers.remove(&photon);
        self.encoding.sign = &self.encoding.sign ^ &y;
        self.fixed.insert(Mode { photon, dof }, y);
        Ok(())
    }

    /// The Pauli that returns the sole carrier to `alpha|0> + beta|1>`;
    /// the frame is reset accordingly.
    pub fn correction(&mut self, photon: PhotonId) -> Result<CorrectionExpr> {
        let dof = self.encoding.dof;
        let x = self.sole_carrier(photon, dof)?;
        let z = std::mem::take(&mut self.encoding.sign);
        self.encoding.carriers.insert(photon, BitExpr::zero());
        Ok(CorrectionExpr { photon, dof, x, z })
    }

    /// The sole spatial carrier goes through a half-wave plate on
    /// `hwp_path` and a beam splitter, then is measured in polarization
    /// (`pol_outcome`) and path (`path_outcome`). The qubit moves into the
    /// polarization GHZ resource.
    pub fn transfer_to_polar(
        &mut self,
        photon: PhotonId,
        hwp_path: u8,
        pol_outcome: usize,
        path_outcome: usize,
    ) -> Result<()> {
        let c = self.sole_carrier(photon, Dof::Spatial)?;
        if !self.polar_resource.remove(&photon) {
            return Err(rule(format!("{photon} is not in the polarization resource")));
        }
        if self.polar_resource.is_empty() {
            return Err(rule("no photon left to receive the qubit"));
        }
        let member = (&BitExpr::var(pol_outcome) ^ &c) ^ (hwp_path ^ 1);
        let carriers = std::mem::take(&mut self.polar_resource)
            .into_iter()
            .map(|p| (p, member.clone()))
            .collect();
        let sign = &self.encoding.sign ^ &BitExpr::var(path_outcome);
        self.encoding = Encoding { dof: Dof::Polar, carriers, sign };
        Ok(())
    }

    /// The sole polarization carrier, sitting on `in_path`, passes a
    /// polarizing beam splitter and a half-wave plate on `in_path`: the qubit
    /// moves to its path and the polarization ends up V.
    pub fn polar_to_spatial(&mut self, photon: PhotonId, in_path: &BitExpr) -> Result<()> {
        let c = self.sole_carrier(photon, Dof::Polar)?;
        self.fixed.remove(&Mode::spatial(photon));
        self.fixed.insert(Mode::polar(photon), BitExpr::one());
        let sign = std::mem::take(&mut self.encoding.sign);
        self.encoding = Encoding {
            dof: Dof::Spatial,
            carriers: BTreeMap::from([(photon, in_path ^ &c)]),
            sign,
        };
        Ok(())
    }
}

impl Serialize for BitExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}
