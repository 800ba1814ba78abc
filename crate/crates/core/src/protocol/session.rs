use std::collections::BTreeSet;

use num_complex::Complex64;

use super::{
    Blocked, Broadcast, CorrectionFormula, CorrectionRecord, MeasurementKind, MeasurementRecord, OperatorRecord,
    OutcomeBit, OutcomeChooser, Party, ProtocolConfig, RunOutcome, RunResult, SessionOptions, Transcript,
};
use crate::error::{Error, Result};
use crate::frame::{BitExpr, PauliFrame};
use crate::hilbert::{build_initial_state, Dof, HybridState, MeasureBasis, PhotonId};
use crate::kerr::CoherentProbe;
use crate::optics;
use crate::oracle;
use crate::reference::{Checkpoint, CheckpointRecord};

/// One run of the protocol, advanced step by step.
pub struct Session<C> {
    config: ProtocolConfig,
    options: SessionOptions,
    chooser: C,
    state: HybridState,
    frame: PauliFrame,
    /// Outcome values indexed like the frame variables.
    values: Vec<u8>,
    owners: Vec<Party>,
    users: Vec<BTreeSet<Party>>,
    transcript: Transcript,
    probability: f64,
    /// Coefficients the encoded qubit should carry once corrected.
    logical: [Complex64; 2],
    checkpoints: Vec<CheckpointRecord>,
    formulas: Vec<CorrectionFormula>,
    choices: Vec<usize>,
    option_counts: Vec<usize>,
    k: Option<usize>,
    blocked: Option<Blocked>,
}

fn index_if_many(index: usize, count: usize) -> Option<usize> {
    (count > 1).then_some(index)
}

impl<C: OutcomeChooser> Session<C> {
    pub fn new(config: &ProtocolConfig, options: SessionOptions, chooser: C) -> Result<Self> {
        config.validate()?;
        let state = build_initial_state(config.alpha, config.beta, config.m, config.n)?;
        let frame = PauliFrame::new(state.registry());
        Ok(Session {
            config: config.clone(),
            options,
            chooser,
            state,
            frame,
            values: Vec::new(),
            owners: Vec::new(),
            users: Vec::new(),
            transcript: Transcript::new(),
            probability: 1.0,
            logical: [config.alpha, config.beta],
            checkpoints: Vec::new(),
            formulas: Vec::new(),
            choices: Vec::new(),
            option_counts: Vec::new(),
            k: None,
            blocked: None,
        })
    }

    pub fn state(&self) -> &HybridState {
        &self.state
    }

    pub fn frame(&self) -> &PauliFrame {
        &self.frame
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn blocked(&self) -> Option<Blocked> {
        self.blocked
    }

    fn mark_step(&mut self, step: u8) {
        if !self.transcript.steps.contains(&step) {
            self.transcript.steps.push(step);
        }
    }

    fn branch_label(&self) -> String {
        self.transcript
            .outcomes
            .iter()
            .map(|o| format!("{}={}", o.label, o.value))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn checkpoint(&mut self, checkpoint: Checkpoint) {
        if self.options.record_checkpoints {
            let bits = self.transcript.outcomes.iter().map(|o| (o.label.clone(), o.value)).collect();
            self.checkpoints.push(CheckpointRecord { checkpoint, bits, state: self.state.clone() });
        }
    }

    fn new_bit(&mut self, step: u8, party: Party, symbol: &str, index: Option<usize>, value: u8) -> usize {
        let label = match index {
            Some(i) => format!("{symbol}{i}"),
            None => symbol.to_string(),
        };
        let var = self.frame.add_variable(label.clone());
        self.values.push(value);
        self.owners.push(party);
        self.users.push(BTreeSet::new());
        self.transcript.outcomes.push(OutcomeBit { label, step, party, value });
        var
    }

    /// Evaluates an expression on behalf of `user`, noting which bits that
    /// party needed.
    fn eval(&mut self, expr: &BitExpr, user: Party) -> u8 {
        for v in expr.vars() {
            self.users[v].insert(user);
        }
        expr.eval(&self.values)
    }

    fn k_expr(&self) -> BitExpr {
        BitExpr::var(self.k.expect("k is measured first"))
    }

    /// The definite path of `photon` as its owner computes it from the
    /// frame, cross-checked against the state when validating.
    fn known_path(&mut self, photon: PhotonId) -> Result<(BitExpr, u8)> {
        let expr = self.frame.fixed_path(photon)?;
        let value = self.eval(&expr, Party::of(photon));
        if self.options.validate_frame {
            let actual = self.state.definite_bit(photon, Dof::Spatial)?;
            if actual != Some(value) {
                return Err(Error::FrameInconsistency {
                    step: format!("path of {photon}"),
                    branch: self.branch_label(),
                    predicted: value.to_string(),
                    found: format!("{actual:?}"),
                });
            }
        }
        Ok((expr, value))
    }

    fn pick<T>(&mut self, probabilities: &[f64], options: Vec<T>) -> Result<T> {
        let chosen = self.chooser.choose(probabilities);
        self.choices.push(chosen);
        self.option_counts.push(options.len());
        self.probability *= probabilities[chosen];
        options.into_iter().nth(chosen).ok_or(Error::ZeroNorm)
    }

    fn kerr_readout(&mut self, step: u8, party: Party, couplings: &[(PhotonId, u8, i32)]) -> Result<u32> {
        let mut probe = CoherentProbe::new();
        for &(photon, path, multiplier) in couplings {
            probe.kerr(&self.state, photon, path, multiplier)?;
        }
        let branches = probe.branches(&self.state)?;
        let probabilities: Vec<f64> = branches.iter().map(|b| b.probability).collect();
        let branch = self.pick(&probabilities, branches)?;
        self.state = branch.state;
        self.transcript.measurements.push(MeasurementRecord {
            step,
            party,
            kind: MeasurementKind::Homodyne,
            photons: couplings.iter().map(|c| c.0).collect(),
            outcome: branch.phase_class,
            probability: branch.probability,
        });
        Ok(branch.phase_class)
    }

    fn project(&mut self, step: u8, photon: PhotonId, basis: MeasureBasis) -> Result<u8> {
        let branches = self.state.measure(photon, basis)?;
        let probabilities: Vec<f64> = branches.iter().map(|b| b.probability).collect();
        let branch = self.pick(&probabilities, branches)?;
        self.state = branch.state;
        self.transcript.measurements.push(MeasurementRecord {
            step,
            party: Party::of(photon),
            kind: MeasurementKind::Projective,
            photons: vec![photon],
            outcome: branch.outcome as u32,
            probability: branch.probability,
        });
        Ok(branch.outcome)
    }

    /// Applies the frame's correction to the sole carrier `photon`.
    fn correct(&mut self, step: u8, photon: PhotonId) -> Result<()> {
        let party = Party::of(photon);
        let expr = self.frame.correction(photon)?;
        let x = self.eval(&expr.x, party);
        let z = self.eval(&expr.z, party);
        let power = crate::optics::PauliPower::new(x, z);
        if self.options.validate_frame {
            oracle::check_prediction(&self.state, photon, expr.dof, self.logical, power).map_err(|e| match e {
                Error::FrameInconsistency { predicted, found, .. } => Error::FrameInconsistency {
                    step: format!("step {step} correction of {photon}"),
                    branch: self.branch_label(),
                    predicted,
                    found,
                },
                other => other,
            })?;
        }
        self.state = optics::apply_pauli(&self.state, photon, expr.dof, power)?;
        self.transcript.corrections.push(CorrectionRecord {
            step,
            party,
            photon,
            dof: expr.dof,
            x_exponent: self.frame.render(&expr.x),
            z_exponent: self.frame.render(&expr.z),
            power,
        });
        self.formulas.push(CorrectionFormula { step, party, expr, labels: Vec::new() });
        Ok(())
    }

    fn apply_operator(&mut self, step: u8, bob: usize) -> Result<()> {
        let op = self.config.unitaries[bob - 1];
        let photon = PhotonId::Bob(bob);
        self.state = optics::apply_su2_spatial(&self.state, photon, &op)?;
        self.logical = op.apply(self.logical);
        self.transcript.operators.push(OperatorRecord { step, party: Party::Bob(bob), photon });
        Ok(())
    }

    fn block(&mut self, step: u8, controller: usize) {
        self.blocked = Some(Blocked { step, controller });
        self.transcript.blocked = self.blocked;
    }

    /// Kerr parity check between X and A: the channel's spatial GHZ becomes
    /// correlated with X's path. Returns `k`.
    pub fn step1_entangle(&mut self) -> Result<u8> {
        self.mark_step(1);
        let class = self.kerr_readout(1, Party::Alice, &[(PhotonId::X, 0, 1), (PhotonId::A, 0, -1)])?;
        let k = class as u8;
        let var = self.new_bit(1, Party::Alice, "k", None, k);
        self.k = Some(var);
        let zero = BitExpr::zero();
        self.frame.fuse_spatial_resource(PhotonId::X, &zero, PhotonId::A, &zero, var)?;
        self.checkpoint(Checkpoint::Entangled);
        Ok(k)
    }

    /// Beam splitters on X and A and a two-strength Kerr readout; X leaves
    /// the state. Returns `(m, n)`.
    pub fn step2_disentangle(&mut self) -> Result<(u8, u8)> {
        self.mark_step(2);
        self.state = optics::apply_bbs(&self.state, PhotonId::X)?;
        self.state = optics::apply_bbs(&self.state, PhotonId::A)?;
        self.checkpoint(Checkpoint::MixedXA);
        let k_expr = self.k_expr();
        let k = self.eval(&k_expr, Party::Alice);
        let class = self.kerr_readout(2, Party::Alice, &[(PhotonId::X, 0, 1), (PhotonId::A, k, 2)])?;
        let (m, n) = (((class >> 1) & 1) as u8, (class & 1) as u8);
        let mv = self.new_bit(2, Party::Alice, "m", None, m);
        let nv = self.new_bit(2, Party::Alice, "n", None, n);
        self.frame.which_path(PhotonId::X, &BitExpr::zero(), nv)?;
        self.frame.which_path(PhotonId::A, &k_expr, mv)?;
        self.known_path(PhotonId::X)?;
        self.state = self.state.forget(PhotonId::X)?;
        self.checkpoint(Checkpoint::Disentangled);
        Ok((m, n))
    }

    /// Each consenting controller takes its photon out of the spatial
    /// channel. Returns `false` when a controller refuses.
    pub fn step3_controllers(&mut self) -> Result<bool> {
        let n = self.config.n;
        for j in 1..=n {
            if !self.config.consent[j - 1].entangle {
                self.block(3, j);
                return Ok(false);
            }
            self.mark_step(3);
            let photon = PhotonId::Charlie(j);
            self.state = optics::apply_bbs(&self.state, photon)?;
            self.checkpoint(Checkpoint::ControllerMixed);
            let k_expr = self.k_expr();
            let k = self.eval(&k_expr, Party::Charlie(j));
            let class = self.kerr_readout(3, Party::Charlie(j), &[(photon, k, 1)])?;
            let var = self.new_bit(3, Party::Charlie(j), "s", index_if_many(j, n), class as u8);
            self.frame.which_path(photon, &k_expr, var)?;
        }
        if n > 0 {
            self.checkpoint(Checkpoint::ControllerReleased);
        }
        Ok(true)
    }

    /// Bobs 1..M-1 measure out; Bob^M corrects and applies his operator.
    pub fn step4_first_operator(&mut self) -> Result<()> {
        self.mark_step(4);
        let m = self.config.m;
        for i in 1..m {
            let photon = PhotonId::Bob(i);
            self.state = optics::apply_bbs(&self.state, photon)?;
            let k_expr = self.k_expr();
            let k = self.eval(&k_expr, Party::Bob(i));
            let class = self.kerr_readout(4, Party::Bob(i), &[(photon, k, 1)])?;
            let var = self.new_bit(4, Party::Bob(i), "l", index_if_many(i, m - 1), class as u8);
            self.frame.which_path(photon, &k_expr, var)?;
        }
        self.checkpoint(Checkpoint::FirstBobMeasured);
        self.correct(4, PhotonId::Bob(m))?;
        self.apply_operator(4, m)?;
        self.checkpoint(Checkpoint::FirstOperatorApplied);
        Ok(())
    }

    /// Moves the qubit from Bob^{i+1} to Bob^i and lets Bob^i apply his
    /// operator.
    pub fn step5_6_hop(&mut self, i: usize) -> Result<()> {
        let hops = self.config.m - 1;
        let (giver, taker) = (PhotonId::Bob(i + 1), PhotonId::Bob(i));
        self.mark_step(5);
        let (e_expr, e) = self.known_path(taker)?;
        self.state = optics::apply_bbs(&self.state, taker)?;
        let class = self.kerr_readout(5, Party::Bob(i + 1), &[(taker, e, 1), (giver, 0, -1)])?;
        let rv = self.new_bit(5, Party::Bob(i + 1), "r", index_if_many(i + 1, hops), class as u8);
        self.frame.join_by_parity(giver, &BitExpr::zero(), taker, &e_expr, rv)?;
        self.checkpoint(Checkpoint::ParityJoined);

        self.mark_step(6);
        self.state = optics::apply_bbs(&self.state, giver)?;
        let class = self.kerr_readout(6, Party::Bob(i + 1), &[(giver, 1, 1)])?;
        let gv = self.new_bit(6, Party::Bob(i + 1), "g", index_if_many(i + 1, hops), class as u8);
        self.frame.which_path(giver, &BitExpr::one(), gv)?;
        self.checkpoint(Checkpoint::ChainMeasured);
        self.correct(6, taker)?;
        self.checkpoint(Checkpoint::ChainCorrected);
        self.apply_operator(6, i)?;
        self.checkpoint(Checkpoint::ChainComplete);
        Ok(())
    }

    /// All hops from Bob^M down to Bob^1.
    pub fn step5_6_shift_chain(&mut self) -> Result<()> {
        for i in (1..self.config.m).rev() {
            self.step5_6_hop(i)?;
        }
        Ok(())
    }

    /// Bob^1 moves the qubit into the polarization GHZ and every Bob
    /// measures out. Returns `(p, q)`.
    pub fn step7_joint_measure(&mut self) -> Result<(u8, u8)> {
        self.mark_step(7);
        let m = self.config.m;
        let first = PhotonId::Bob(1);
        self.state = optics::apply_hwp(&self.state, first, 1)?;
        self.state = optics::apply_bbs(&self.state, first)?;
        self.checkpoint(Checkpoint::HwpBbs);
        for i in 2..=m {
            let (_, path) = self.known_path(PhotonId::Bob(i))?;
            self.state = optics::apply_qwp(&self.state, PhotonId::Bob(i), path)?;
        }
        self.checkpoint(Checkpoint::AfterQwp);
        let outcome = self.project(7, first, MeasureBasis::PolarAndSpatial)?;
        let (p, q) = (outcome >> 1, outcome & 1);
        let pv = self.new_bit(7, Party::Bob(1), "p", None, p);
        let qv = self.new_bit(7, Party::Bob(1), "q", None, q);
        self.frame.transfer_to_polar(first, 1, pv, qv)?;
        for i in 2..=m {
            let w = self.project(7, PhotonId::Bob(i), MeasureBasis::Polar)?;
            let wv = self.new_bit(7, Party::Bob(i), "w", index_if_many(i, m - 1), w);
            self.frame.polar_measured(PhotonId::Bob(i), wv)?;
        }
        self.checkpoint(Checkpoint::BobsMeasured);
        Ok((p, q))
    }

    /// Each consenting controller measures its polarization. Returns
    /// `false` when a controller refuses.
    pub fn step8_controllers_measure(&mut self) -> Result<bool> {
        let n = self.config.n;
        for j in 1..=n {
            if !self.config.consent[j - 1].release {
                self.block(8, j);
                return Ok(false);
            }
            self.mark_step(8);
            let photon = PhotonId::Charlie(j);
            let (_, path) = self.known_path(photon)?;
            self.state = optics::apply_qwp(&self.state, photon, path)?;
            self.state = optics::apply_pbs(&self.state, photon, path)?;
            let v = self.project(8, photon, MeasureBasis::Polar)?;
            let vv = self.new_bit(8, Party::Charlie(j), "v", index_if_many(j, n), v);
            self.frame.polar_measured(photon, vv)?;
        }
        if n > 0 {
            self.checkpoint(Checkpoint::ControllersMeasured);
        }
        Ok(true)
    }

    /// Alice's polarization correction.
    pub fn step8_alice_fix(&mut self) -> Result<()> {
        let step = if self.config.n > 0 { 8 } else { 7 };
        self.correct(step, PhotonId::A)?;
        self.checkpoint(Checkpoint::AliceCorrected);
        Ok(())
    }

    /// Moves the qubit from A's polarization to A's path.
    pub fn step9_pdof_to_sdof(&mut self) -> Result<()> {
        self.mark_step(9);
        let (path_expr, path) = self.known_path(PhotonId::A)?;
        self.state = optics::apply_pbs(&self.state, PhotonId::A, path)?;
        self.state = optics::apply_hwp(&self.state, PhotonId::A, path)?;
        self.frame.polar_to_spatial(PhotonId::A, &path_expr)?;
        self.correct(9, PhotonId::A)
    }

    /// Runs every step in order.
    pub fn run(mut self) -> Result<RunResult> {
        self.step1_entangle()?;
        self.step2_disentangle()?;
        if !self.step3_controllers()? {
            return Ok(self.finish());
        }
        self.step4_first_operator()?;
        self.step5_6_shift_chain()?;
        self.step7_joint_measure()?;
        if !self.step8_controllers_measure()? {
            return Ok(self.finish());
        }
        if self.options.stop_before_alice_fix {
            return Ok(self.finish());
        }
        self.step8_alice_fix()?;
        self.step9_pdof_to_sdof()?;
        Ok(self.finish())
    }

    /// Closes the ledger and packages the run.
    pub fn finish(mut self) -> RunResult {
        let labels = self.frame.labels().to_vec();
        for (var, users) in self.users.iter().enumerate() {
            let to: Vec<Party> = users.iter().copied().filter(|p| *p != self.owners[var]).collect();
            if !to.is_empty() {
                self.transcript.broadcasts.push(Broadcast { bit: labels[var].clone(), from: self.owners[var], to });
            }
        }
        self.transcript.classical_bits = self.transcript.broadcasts.len();
        let outcome = match self.blocked {
            Some(blocked) => RunOutcome::Blocked { blocked, state: self.state },
            None if self.state.registry().live().count() == 1 => RunOutcome::Completed { final_state: self.state },
            None => RunOutcome::Stopped { state: self.state },
        };
        let formulas = self
            .formulas
            .into_iter()
            .map(|f| CorrectionFormula { labels: labels.clone(), ..f })
            .collect();
        RunResult {
            outcome,
            transcript: self.transcript,
            probability: self.probability,
            checkpoints: self.checkpoints,
            choices: self.choices,
            option_counts: self.option_counts,
            formulas,
        }
    }
}
