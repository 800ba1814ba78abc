//! Closed-form intermediate states of the two-Bob, one-controller protocol
//! and the comparison that turns disagreements into erratum records.
//!
//! Forms are written exactly as published, with normalization restored,
//! so that any slip in the published expressions shows up as an erratum
//! rather than being silently fixed here.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HybridState, PhotonId, Registry};
use crate::oracle;
use crate::protocol::ProtocolConfig;

/// Fidelity below `1 - CHECKPOINT_TOLERANCE` is an erratum.
pub const CHECKPOINT_TOLERANCE: f64 = 1e-12;

/// Named points in a run where the state is compared with a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Checkpoint {
    /// After the X/A parity readout.
    Entangled,
    /// After the beam splitters on X and A, before their readout.
    MixedXA,
    /// After the X/A readout; X is gone.
    Disentangled,
    /// After the controller's beam splitter.
    ControllerMixed,
    /// After the controllers' readouts.
    ControllerReleased,
    /// After the other Bobs' readouts, before Bob^M corrects.
    FirstBobMeasured,
    /// After Bob^M's correction and operator.
    FirstOperatorApplied,
    /// After the parity readout of a hop.
    ParityJoined,
    /// After the giver's readout of a hop.
    ChainMeasured,
    /// After the taker's correction.
    ChainCorrected,
    /// After the taker's operator.
    ChainComplete,
    /// After the wave plate and beam splitter on Bob^1.
    HwpBbs,
    /// After the other Bobs' quarter-wave plates.
    AfterQwp,
    /// After all Bobs measured.
    BobsMeasured,
    /// After all controllers measured.
    ControllersMeasured,
    /// After Alice's polarization correction.
    AliceCorrected,
}

impl Checkpoint {
    pub const ALL: [Checkpoint; 16] = [
        Checkpoint::Entangled,
        Checkpoint::MixedXA,
        Checkpoint::Disentangled,
        Checkpoint::ControllerMixed,
        Checkpoint::ControllerReleased,
        Checkpoint::FirstBobMeasured,
        Checkpoint::FirstOperatorApplied,
        Checkpoint::ParityJoined,
        Checkpoint::ChainMeasured,
        Checkpoint::ChainCorrected,
        Checkpoint::ChainComplete,
        Checkpoint::HwpBbs,
        Checkpoint::AfterQwp,
        Checkpoint::BobsMeasured,
        Checkpoint::ControllersMeasured,
        Checkpoint::AliceCorrected,
    ];
}

/// State of a run at a checkpoint, with the outcome bits seen so far.
#[derive(Debug, Clone)]
pub struct CheckpointRecord {
    pub checkpoint: Checkpoint,
    pub bits: Vec<(String, u8)>,
    pub state: HybridState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub ket: String,
    pub amplitude: [f64; 2],
}

fn terms_of(state: &HybridState) -> Vec<Term> {
    state
        .describe()
        .into_iter()
        .map(|(ket, a)| Term { ket, amplitude: [a.re, a.im] })
        .collect()
}

/// A checkpoint where simulator and closed form disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Erratum {
    pub checkpoint: Checkpoint,
    pub branch: Vec<(String, u8)>,
    pub fidelity: f64,
    pub simulator: Vec<Term>,
    pub reference: Vec<Term>,
    /// Whether the repository's errata file lists this disagreement.
    pub documented: bool,
}

/// An entry of the errata file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownErratum {
    pub checkpoint: Checkpoint,
    /// Outcome values under which the disagreement appears.
    pub when: BTreeMap<String, u8>,
    pub note: String,
}

impl KnownErratum {
    pub fn covers(&self, checkpoint: Checkpoint, branch: &[(String, u8)]) -> bool {
        self.checkpoint == checkpoint
            && self
                .when
                .iter()
                .all(|(label, value)| branch.iter().any(|(l, v)| l == label && v == value))
    }
}

/// Contents of `known_errata.json`.
pub fn known_errata() -> &'static [KnownErratum] {
    static ERRATA: OnceLock<Vec<KnownErratum>> = OnceLock::new();
    ERRATA.get_or_init(|| {
        serde_json::from_str(include_str!("../known_errata.json")).expect("known_errata.json is valid")
    })
}

pub fn is_documented(checkpoint: Checkpoint, branch: &[(String, u8)]) -> bool {
    known_errata().iter().any(|e| e.covers(checkpoint, branch))
}

struct Bits<'a>(&'a [(String, u8)]);

impl Bits<'_> {
    fn get(&self, label: &str) -> Result<u8> {
        self.0
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::FrameRule(format!("outcome {label} not yet available")))
    }
}

fn sign(bit: u8) -> f64 {
    if bit & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

const B1: PhotonId = PhotonId::Bob(1);
const B2: PhotonId = PhotonId::Bob(2);
const C1: PhotonId = PhotonId::Charlie(1);

/// Path-only form: each term lists paths of every live photon, and the
/// polarization GHZ of the channel (plus X's V) is tensored on.
fn with_polar_ghz(registry: &Registry, terms: &[(Complex64, Vec<(PhotonId, u8)>)]) -> Result<HybridState> {
    let mut b = HybridState::builder(registry);
    for (amp, paths) in terms {
        for pol in 0..2u8 {
            let bits: Vec<(PhotonId, u8, u8)> = paths
                .iter()
                .map(|&(p, path)| (p, path, if p == PhotonId::X { 1 } else { pol }))
                .collect();
            b = b.term(*amp, &bits)?;
        }
    }
    b.build()
}

type KetSpec = (Complex64, Vec<(PhotonId, u8, u8)>);

fn explicit(registry: &Registry, terms: &[KetSpec]) -> Result<HybridState> {
    let mut b = HybridState::builder(registry);
    for (amp, bits) in terms {
        b = b.term(*amp, bits)?;
    }
    b.build()
}

/// The published form of the state at `record`, for the configuration with
/// two Bobs and one controller. `None` for other configurations.
pub fn reference_state(record: &CheckpointRecord, config: &ProtocolConfig) -> Result<Option<HybridState>> {
    if config.m != 2 || config.n != 1 {
        return Ok(None);
    }
    let (alpha, beta) = (config.alpha, config.beta);
    let after_u2 = oracle::direct_apply(&config.unitaries[1..], alpha, beta)?;
    let (a2, b2) = (after_u2.a0, after_u2.a1);
    let full = oracle::direct_apply(&config.unitaries, alpha, beta)?;
    let (a12, b12) = (full.a0, full.a1);

    let bits = Bits(&record.bits);
    let reg = record.state.registry();
    let k = bits.get("k")?;
    let k1 = k ^ 1;
    let all = |j: u8| vec![(B1, j), (B2, j), (C1, j)];
    let join = |a: Vec<(PhotonId, u8)>, b: Vec<(PhotonId, u8)>| a.into_iter().chain(b).collect::<Vec<_>>();

    let state = match record.checkpoint {
        Checkpoint::Entangled => with_polar_ghz(
            reg,
            &[
                (alpha, join(vec![(PhotonId::X, 0), (PhotonId::A, k)], all(k))),
                (beta, join(vec![(PhotonId::X, 1), (PhotonId::A, k1)], all(k1))),
            ],
        )?,
        Checkpoint::MixedXA => {
            // (x0 a_k + (-1)^k x1 a_k') (alpha R_k + (-1)^k beta R_k')
            // + (x0 a_k' + (-1)^k x1 a_k) (alpha R_k - (-1)^k beta R_k')
            let sk = sign(k);
            let groups = [
                ([(0u8, k, 1.0), (1, k1, sk)], sk),
                ([(0u8, k1, 1.0), (1, k, sk)], -sk),
            ];
            let mut terms = Vec::new();
            for (xa, beta_sign) in groups {
                for (x, a, s) in xa {
                    let head = vec![(PhotonId::X, x), (PhotonId::A, a)];
                    terms.push((alpha * s, join(head.clone(), all(k))));
                    terms.push((beta * s * beta_sign, join(head, all(k1))));
                }
            }
            with_polar_ghz(reg, &terms)?
        }
        Checkpoint::Disentangled => {
            let (m, n) = (bits.get("m")?, bits.get("n")?);
            let a = vec![(PhotonId::A, k ^ m ^ 1)];
            with_polar_ghz(
                reg,
                &[(alpha, join(a.clone(), all(k))), (beta * sign(k ^ m ^ n), join(a, all(k1)))],
            )?
        }
        Checkpoint::ControllerMixed => {
            let (m, n) = (bits.get("m")?, bits.get("n")?);
            let a = (PhotonId::A, k ^ m ^ 1);
            let smn = sign(m ^ n);
            let sk = sign(k);
            let t = |amp: Complex64, b: u8, cpath: u8| (amp, vec![a, (B1, b), (B2, b), (C1, cpath)]);
            with_polar_ghz(
                reg,
                &[
                    t(alpha, k, k),
                    t(beta * smn, k1, k),
                    t(alpha * sk, k, k1),
                    t(-beta * smn * sk, k1, k1),
                ],
            )?
        }
        Checkpoint::ControllerReleased => {
            let (m, n, s) = (bits.get("m")?, bits.get("n")?, bits.get("s")?);
            let rest = vec![(PhotonId::A, k ^ m ^ 1), (C1, k ^ s ^ 1)];
            with_polar_ghz(
                reg,
                &[
                    (alpha, join(rest.clone(), vec![(B1, k), (B2, k)])),
                    (-beta * sign(m ^ n ^ s), join(rest, vec![(B1, k1), (B2, k1)])),
                ],
            )?
        }
        Checkpoint::FirstBobMeasured => {
            let (m, n, s, l) = (bits.get("m")?, bits.get("n")?, bits.get("s")?, bits.get("l")?);
            let rest = vec![(PhotonId::A, k ^ m ^ 1), (C1, k ^ s ^ 1), (B1, k ^ l ^ 1)];
            with_polar_ghz(
                reg,
                &[
                    (alpha, join(rest.clone(), vec![(B2, k)])),
                    (beta * sign(k ^ m ^ n ^ s ^ l), join(rest, vec![(B2, k1)])),
                ],
            )?
        }
        Checkpoint::FirstOperatorApplied => {
            let (m, s, l) = (bits.get("m")?, bits.get("s")?, bits.get("l")?);
            let rest = vec![(PhotonId::A, k ^ m ^ 1), (C1, k ^ s ^ 1), (B1, k ^ l ^ 1)];
            with_polar_ghz(reg, &[(a2, join(rest.clone(), vec![(B2, 0)])), (b2, join(rest, vec![(B2, 1)]))])?
        }
        Checkpoint::ParityJoined => {
            let (m, s, l, r) = (bits.get("m")?, bits.get("s")?, bits.get("l")?, bits.get("r")?);
            let rest = vec![(PhotonId::A, k ^ m ^ 1), (C1, k ^ s ^ 1)];
            with_polar_ghz(
                reg,
                &[
                    (a2, join(rest.clone(), vec![(B1, k ^ l ^ r ^ 1), (B2, 0)])),
                    (b2 * sign(k ^ l ^ 1), join(rest, vec![(B1, k ^ l ^ r), (B2, 1)])),
                ],
            )?
        }
        Checkpoint::ChainMeasured => {
            let (m, s, l, r, g) =
                (bits.get("m")?, bits.get("s")?, bits.get("l")?, bits.get("r")?, bits.get("g")?);
            let rest = vec![(PhotonId::A, k ^ m ^ 1), (C1, k ^ s ^ 1), (B2, g)];
            with_polar_ghz(
                reg,
                &[
                    (a2, join(rest.clone(), vec![(B1, k ^ l ^ r ^ 1)])),
                    (b2 * sign(k ^ l ^ g ^ 1), join(rest, vec![(B1, k ^ l ^ r)])),
                ],
            )?
        }
        Checkpoint::ChainCorrected | Checkpoint::ChainComplete => {
            let (m, s, g) = (bits.get("m")?, bits.get("s")?, bits.get("g")?);
            let (x0, x1) = if record.checkpoint == Checkpoint::ChainCorrected { (a2, b2) } else { (a12, b12) };
            let rest = vec![(PhotonId::A, k ^ m ^ 1), (C1, k ^ s ^ 1), (B2, g)];
            with_polar_ghz(reg, &[(x0, join(rest.clone(), vec![(B1, 0)])), (x1, join(rest, vec![(B1, 1)]))])?
        }
        Checkpoint::HwpBbs => {
            let (m, s, g) = (bits.get("m")?, bits.get("s")?, bits.get("g")?);
            let (fa, fc) = (k ^ m ^ 1, k ^ s ^ 1);
            // (A pol, B1 pol, B1 path, B2 pol, C pol)
            let rows: [(Complex64, [u8; 5]); 8] = [
                (a12, [0, 0, 0, 0, 0]),
                (a12, [0, 0, 1, 0, 0]),
                (a12, [1, 1, 0, 1, 1]),
                (a12, [1, 1, 1, 1, 1]),
                (b12, [0, 1, 0, 0, 0]),
                (-b12, [0, 1, 1, 0, 0]),
                (b12, [1, 0, 0, 1, 1]),
                (-b12, [1, 0, 1, 1, 1]),
            ];
            let terms: Vec<_> = rows
                .iter()
                .map(|(amp, [ap, bp, bpath, b2p, cp])| {
                    (*amp, vec![(PhotonId::A, fa, *ap), (B1, *bpath, *bp), (B2, g, *b2p), (C1, fc, *cp)])
                })
                .collect();
            explicit(reg, &terms)?
        }
        Checkpoint::AfterQwp => {
            let (m, s, g) = (bits.get("m")?, bits.get("s")?, bits.get("g")?);
            let (fa, fc) = (k ^ m ^ 1, k ^ s ^ 1);
            // (B1 pol, B1 path, B2 pol) -> overall sign, A/C polarization of
            // the alpha part, relative sign of the beta part.
            let cells: [([u8; 3], f64, u8, f64); 8] = [
                ([0, 0, 0], 1.0, 0, 1.0),
                ([0, 0, 1], 1.0, 0, -1.0),
                ([0, 1, 0], 1.0, 0, -1.0),
                ([0, 1, 1], 1.0, 0, 1.0),
                ([1, 0, 0], 1.0, 1, 1.0),
                ([1, 0, 1], -1.0, 1, -1.0),
                ([1, 1, 0], 1.0, 1, -1.0),
                ([1, 1, 1], -1.0, 1, 1.0),
            ];
            let mut terms = Vec::new();
            for ([bp, bpath, b2p], overall, pa, bs) in cells {
                let bobs = [(B1, bpath, bp), (B2, g, b2p)];
                for (amp, pol) in [(a12 * overall, pa), (b12 * overall * bs, pa ^ 1)] {
                    let mut t = vec![(PhotonId::A, fa, pol), (C1, fc, pol)];
                    t.extend(bobs);
                    terms.push((amp, t));
                }
            }
            explicit(reg, &terms)?
        }
        Checkpoint::BobsMeasured => {
            let (m, s) = (bits.get("m")?, bits.get("s")?);
            let key = [bits.get("p")?, bits.get("q")?, bits.get("w")?];
            let table: [(&[[u8; 3]], u8, f64); 4] = [
                (&[[0, 0, 0], [0, 1, 1]], 0, 1.0),
                (&[[0, 1, 0], [0, 0, 1]], 0, -1.0),
                (&[[1, 0, 0], [1, 1, 1]], 1, 1.0),
                (&[[1, 1, 0], [1, 0, 1]], 1, -1.0),
            ];
            let (_, pa, bs) = table.iter().find(|(keys, _, _)| keys.contains(&key)).expect("complete table");
            let (fa, fc) = (k ^ m ^ 1, k ^ s ^ 1);
            explicit(
                reg,
                &[
                    (a12, vec![(PhotonId::A, fa, *pa), (C1, fc, *pa)]),
                    (b12 * *bs, vec![(PhotonId::A, fa, pa ^ 1), (C1, fc, pa ^ 1)]),
                ],
            )?
        }
        Checkpoint::ControllersMeasured => {
            let m = bits.get("m")?;
            let key = [bits.get("p")?, bits.get("q")?, bits.get("w")?, bits.get("v")?];
            let table: [(&[[u8; 4]], u8, f64); 4] = [
                (&[[0, 0, 0, 0], [0, 1, 0, 1], [0, 0, 1, 1], [0, 1, 1, 0]], 0, 1.0),
                (&[[0, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 0], [0, 1, 1, 1]], 0, -1.0),
                (&[[1, 0, 0, 0], [1, 1, 0, 1], [1, 0, 1, 1], [1, 1, 1, 0]], 1, 1.0),
                (&[[1, 0, 0, 1], [1, 1, 0, 0], [1, 0, 1, 0], [1, 1, 1, 1]], 1, -1.0),
            ];
            let (_, pa, bs) = table.iter().find(|(keys, _, _)| keys.contains(&key)).expect("complete table");
            let fa = k ^ m ^ 1;
            explicit(
                reg,
                &[(a12, vec![(PhotonId::A, fa, *pa)]), (b12 * *bs, vec![(PhotonId::A, fa, pa ^ 1)])],
            )?
        }
        Checkpoint::AliceCorrected => {
            let fa = k ^ bits.get("m")? ^ 1;
            explicit(reg, &[(a12, vec![(PhotonId::A, fa, 0)]), (b12, vec![(PhotonId::A, fa, 1)])])?
        }
    };
    Ok(Some(state))
}

/// Compares a recorded checkpoint with its closed form. `Ok(None)` when
/// they agree or no closed form exists.
pub fn check_checkpoint(record: &CheckpointRecord, config: &ProtocolConfig) -> Result<Option<Erratum>> {
    let Some(reference) = reference_state(record, config)? else {
        return Ok(None);
    };
    let fidelity = reference.fidelity(&record.state)?;
    if fidelity >= 1.0 - CHECKPOINT_TOLERANCE {
        return Ok(None);
    }
    Ok(Some(Erratum {
        checkpoint: record.checkpoint,
        branch: record.bits.clone(),
        fidelity,
        simulator: terms_of(&record.state),
        reference: terms_of(&reference),
        documented: is_documented(record.checkpoint, &record.bits),
    }))
}
