//! End-to-end protocol: preparation, interaction with dephasing, tomography,
//! reconstruction and entanglement metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom::{eigensystem, free_hamiltonian, AtomError, AtomParams, EigenSystem};
use crate::frames::{frame_operator, interaction_unitary, FrameError};
use crate::gme::em_analog_state;
use crate::metrics::{entanglement_report, fidelity, EntanglementReport, MetricsError};
use crate::noise::{apply_dephasing_reported, NoiseError, NoiseModel};
use crate::pulses::{
    compile, control_hamiltonian, pulse_unitary, solve_prep, AngleConvention, CompileOptions, ControlParams,
    Observable, PrepSolution, PulseError, PulseEvent, PulseProgram, StepKind, Wait,
};
use crate::qmath::{expm_hermitian, LinalgError, Mat4, Vec4};
use crate::state::{BasisTag, DensityMatrix, StateError};
use crate::tomo::{measure, reconstruct, Reconstruction, Setting, Shots, TomoError, TomographyRecord};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("program has no wait, so there is no interaction stage")]
    NoInteraction,
    #[error("interaction time must be non-negative and finite (got {0} s)")]
    BadTime(f64),
    #[error("interaction phase must be finite (got {0})")]
    BadPhase(f64),
}

/// Default interaction window of the reference sequence (s).
pub const DEFAULT_TAU: f64 = 2e-6;

/// The atom, its eigensystem and the solved preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub atom: AtomParams,
    pub eigen: EigenSystem,
    pub prep: PrepSolution,
    pub options: CompileOptions,
}

/// Outcome of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    /// Interaction phase Δτ.
    pub phi: f64,
    /// Interaction time used for dephasing (s).
    pub tau: f64,
    /// State handed to tomography (number basis).
    pub state: DensityMatrix,
    /// Smallest eigenvalue if dephasing needed the positivity guard.
    pub projected: Option<f64>,
    pub records: Vec<TomographyRecord>,
    pub reconstruction: Reconstruction,
    /// Ideal final state (zz basis).
    pub theory: DensityMatrix,
    pub fidelity: f64,
    pub entanglement: EntanglementReport,
}

impl Protocol {
    pub fn new(atom: AtomParams, options: CompileOptions) -> Result<Self, ProtocolError> {
        atom.validate()?;
        let eigen = eigensystem(&atom)?;
        let prep = solve_prep(eigen.theta, options.convention)?;
        Ok(Protocol { atom, eigen, prep, options })
    }

    pub fn convention(&self) -> AngleConvention {
        self.options.convention
    }

    /// Preparation output from |3⟩ (number basis).
    pub fn prepared_state(&self) -> Result<DensityMatrix, ProtocolError> {
        Ok(DensityMatrix::from_ket(&self.prep.prepared(), BasisTag::Number)?)
    }

    /// Applies the pulses among `events` to |3⟩; waits and readouts are skipped.
    pub fn prepare(&self, events: &[PulseEvent]) -> Result<DensityMatrix, ProtocolError> {
        let mut psi = Vec4::basis(2);
        for event in events {
            if let PulseEvent::Pulse(p) = event {
                p.validate()?;
                psi = pulse_unitary(p, self.convention()).apply(&psi);
            }
        }
        Ok(DensityMatrix::from_ket(&psi, BasisTag::Number)?)
    }

    /// Ideal final state (e^{−iφ}, 1, 1, e^{−iφ})/2 in the zz basis.
    pub fn theory_state(phi: f64) -> Result<DensityMatrix, ProtocolError> {
        Ok(DensityMatrix::from_ket(&em_analog_state(phi), BasisTag::Zz)?)
    }

    /// Applies the interaction phase φ over a window τ, with dephasing.
    pub fn interact(
        &self,
        rho: &DensityMatrix,
        phi: f64,
        tau: f64,
        noise: &NoiseModel,
    ) -> Result<(DensityMatrix, Option<f64>), ProtocolError> {
        if !phi.is_finite() {
            return Err(ProtocolError::BadPhase(phi));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(ProtocolError::BadTime(tau));
        }
        let evolved = rho.evolve(&interaction_unitary(phi, 1.0)?);
        let (out, proj) = apply_dephasing_reported(&evolved, tau, noise)?;
        Ok((out, proj.map(|p| p.min_eigenvalue)))
    }

    /// State after preparation and interaction (number basis).
    pub fn final_state(
        &self,
        phi: f64,
        tau: f64,
        noise: &NoiseModel,
    ) -> Result<(DensityMatrix, Option<f64>), ProtocolError> {
        self.interact(&self.prepared_state()?, phi, tau, noise)
    }

    /// Runs a program: pulses act as ideal unitaries and each wait applies
    /// U(Δ, τ) followed by dephasing for τ. Pulses after the last wait form
    /// the readout fragment and are left to tomography. Returns the state,
    /// the accumulated phase Σ Δτ, the total wait time and the worst
    /// positivity-guard eigenvalue.
    pub fn execute(
        &self,
        program: &PulseProgram,
        noise: &NoiseModel,
    ) -> Result<(DensityMatrix, f64, f64, Option<f64>), ProtocolError> {
        let last_wait = program
            .events
            .iter()
            .rposition(|e| matches!(e, PulseEvent::Wait(_)))
            .ok_or(ProtocolError::NoInteraction)?;
        let mut rho = DensityMatrix::from_ket(&Vec4::basis(2), BasisTag::Number)?;
        let (mut phi, mut tau, mut projected) = (0.0, 0.0, None::<f64>);
        for event in &program.events[..=last_wait] {
            match event {
                PulseEvent::Pulse(p) => {
                    p.validate()?;
                    rho = rho.evolve(&pulse_unitary(p, self.convention()));
                }
                PulseEvent::Wait(Wait { duration, detuning }) => {
                    let (next, proj) = self.interact(&rho, detuning * duration, *duration, noise)?;
                    rho = next;
                    phi += detuning * duration;
                    tau += duration;
                    if let Some(m) = proj {
                        projected = Some(projected.map_or(m, |p: f64| p.min(m)));
                    }
                }
                PulseEvent::Readout { .. } => {}
            }
        }
        Ok((rho, phi, tau, projected))
    }

    /// Tomography, reconstruction and metrics on a number-basis state.
    pub fn analyse(
        &self,
        state: DensityMatrix,
        phi: f64,
        tau: f64,
        projected: Option<f64>,
        shots: Shots,
        seed: u64,
    ) -> Result<ProtocolRun, ProtocolError> {
        let records = measure(&state, shots, seed, self.convention())?;
        let reconstruction = reconstruct(&records, &self.eigen.r, self.convention())?;
        let theory = Self::theory_state(phi)?;
        let fidelity = fidelity(&reconstruction.zz, &theory)?;
        let entanglement = entanglement_report(&reconstruction.zz)?;
        Ok(ProtocolRun { phi, tau, state, projected, records, reconstruction, theory, fidelity, entanglement })
    }

    /// Full protocol at interaction phase φ and window τ.
    pub fn run(
        &self,
        phi: f64,
        tau: f64,
        noise: &NoiseModel,
        shots: Shots,
        seed: u64,
    ) -> Result<ProtocolRun, ProtocolError> {
        let (state, projected) = self.final_state(phi, tau, noise)?;
        self.analyse(state, phi, tau, projected, shots, seed)
    }

    /// Full protocol driven by a pulse program.
    pub fn run_program(
        &self,
        program: &PulseProgram,
        noise: &NoiseModel,
        shots: Shots,
        seed: u64,
    ) -> Result<ProtocolRun, ProtocolError> {
        let (state, phi, tau, projected) = self.execute(program, noise)?;
        self.analyse(state, phi, tau, projected, shots, seed)
    }

    /// Preparation, one wait of length τ at detuning Δ, then the Re(ρ₁₄)
    /// readout fragment.
    pub fn reference_program(&self, tau: f64, detuning: f64) -> PulseProgram {
        let mut events = self.prep.events();
        events.push(PulseEvent::Wait(Wait { duration: tau, detuning }));
        let readout = Observable::Re(1, 4);
        events.extend(Setting::for_element(readout).fragment.into_iter().map(PulseEvent::Pulse));
        events.push(PulseEvent::Readout { element: readout });
        PulseProgram { name: Some("fig1c".into()), seed: None, events }
    }

    /// Noise-free lab-frame evolution of `program` from |3⟩ under the full
    /// Hamiltonian H_f plus resonant drives, in the zz basis. Each pulse is
    /// driven with its compiled physical phase; waits are free evolution.
    /// Returns ψ(T) and the compiled program.
    pub fn lab_frame(&self, program: &PulseProgram) -> Result<(Vec4, crate::pulses::CompiledProgram), ProtocolError> {
        let compiled = compile(program, self.eigen.energies, &self.options)?;
        let hf = free_hamiltonian(&self.atom);
        let r = self.eigen.r;
        let mut psi = r.apply(&Vec4::basis(2));
        for step in &compiled.steps {
            let (t0, t1) = (step.start, step.start + step.duration);
            psi = match step.kind {
                StepKind::Pulse { transition, physical_phase, .. } => {
                    let c = ControlParams::for_pulse(transition, physical_phase, self.options.rabi);
                    let v = r * control_hamiltonian(&c) * r.transpose();
                    let back = expm_hermitian(&hf, -t0)?;
                    let drive = expm_hermitian(&v, step.duration)?;
                    let forward = expm_hermitian(&hf, t1)?;
                    (forward * drive * back).apply(&psi)
                }
                StepKind::Wait(_) => expm_hermitian(&hf, step.duration)?.apply(&psi),
            };
        }
        Ok((psi, compiled))
    }

    /// Lab-frame state carried into the rotating frame, O(T)Rᵀ|ψ⟩⟨ψ|R O(T)†,
    /// next to the compiled rotating-frame result (both number basis).
    pub fn frame_comparison(&self, program: &PulseProgram) -> Result<(Mat4, Mat4), ProtocolError> {
        let (psi, compiled) = self.lab_frame(program)?;
        let o = frame_operator(&compiled.schedule, compiled.duration())?;
        let lab = o * self.eigen.r.transpose();
        let lab_rho = lab * Mat4::outer(&psi, &psi) * lab.adjoint();
        let frame_psi = compiled.total_unitary().apply(&Vec4::basis(2));
        Ok((lab_rho, Mat4::outer(&frame_psi, &frame_psi)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::concurrence;
    use std::f64::consts::PI;

    fn protocol() -> Protocol {
        Protocol::new(AtomParams::default(), CompileOptions::default()).unwrap()
    }

    #[test]
    fn prepared_state_is_plus_plus() {
        let p = protocol();
        let zz = p.eigen.r * *p.prepared_state().unwrap().matrix() * p.eigen.r.transpose();
        assert!(zz.max_abs_diff(&Mat4::from_real([[0.25; 4]; 4])) < 1e-9);
    }

    #[test]
    fn ideal_theory_values() {
        let p = protocol();
        let nm = NoiseModel::noiseless();
        let tangle = |phi: f64| p.run(phi, DEFAULT_TAU, &nm, Shots::Infinite, 0).unwrap().entanglement.tangle;
        assert!((tangle(PI / 2.0) - 1.0).abs() < 1e-6);
        assert!((tangle(PI / 4.0) - 0.5).abs() < 1e-6);
        assert!(tangle(PI) < 1e-6);
        assert_eq!(tangle(0.0), 0.0);
        let run = p.run(PI / 2.0, DEFAULT_TAU, &nm, Shots::Infinite, 0).unwrap();
        assert!(run.fidelity > 0.9999);
    }

    #[test]
    fn program_route_matches_direct_route() {
        let p = protocol();
        let nm = NoiseModel::ytterbium();
        let prog = p.reference_program(DEFAULT_TAU, PI / 4.0 / DEFAULT_TAU);
        let a = p.run_program(&prog, &nm, Shots::Infinite, 0).unwrap();
        let b = p.run(PI / 4.0, DEFAULT_TAU, &nm, Shots::Infinite, 0).unwrap();
        assert!((a.phi - PI / 4.0).abs() < 1e-15);
        assert!(a.state.matrix().max_abs_diff(b.state.matrix()) < 1e-12);
    }

    #[test]
    fn ideal_output_equals_analog_state() {
        let p = protocol();
        for phi in [0.0, 0.3, PI / 2.0, 2.0, PI] {
            let (rho, _) = p.final_state(phi, 0.0, &NoiseModel::noiseless()).unwrap();
            let zz = DensityMatrix::new(p.eigen.r * *rho.matrix() * p.eigen.r.transpose(), BasisTag::Zz).unwrap();
            assert!(fidelity(&zz, &Protocol::theory_state(phi).unwrap()).unwrap() >= 1.0 - 1e-9);
            assert!((concurrence(&zz).unwrap() - phi.sin().abs()).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_shots_are_seeded() {
        let p = protocol();
        let nm = NoiseModel::ytterbium();
        let a = p.run(PI / 2.0, DEFAULT_TAU, &nm, Shots::Finite(500), 7).unwrap();
        let b = p.run(PI / 2.0, DEFAULT_TAU, &nm, Shots::Finite(500), 7).unwrap();
        assert_eq!(a, b);
        let c = p.run(PI / 2.0, DEFAULT_TAU, &nm, Shots::Finite(500), 8).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn program_without_wait_is_rejected() {
        let p = protocol();
        let prog = PulseProgram::new(p.prep.events());
        assert!(matches!(p.execute(&prog, &NoiseModel::noiseless()), Err(ProtocolError::NoInteraction)));
    }

    #[test]
    fn lab_and_rotating_frames_agree() {
        let p = protocol();
        for phi in [0.0, PI / 4.0, PI / 2.0, PI] {
            let prog = p.reference_program(DEFAULT_TAU, phi / DEFAULT_TAU);
            let (lab, frame) = p.frame_comparison(&prog).unwrap();
            assert!(lab.max_abs_diff(&frame) < 1e-8, "Δτ = {phi}: {}", lab.max_abs_diff(&frame));
        }
    }
}
