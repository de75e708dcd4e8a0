//! Microwave pulse programs: events, unitaries, the RWA control Hamiltonian,
//! and compilation with frame-phase tracking.
//!
//! Angles are Bloch rotation angles by default: a pulse of angle θ with phase
//! φ on transition (n, m) is exp[−i G(φ) θ/2], where
//! G(φ) = G_y cos φ + G_x sin φ, G_y = −i|n⟩⟨m| + i|m⟩⟨n| and
//! G_x = |n⟩⟨m| + |m⟩⟨n|.

mod dsl;
mod prep;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{interaction_unitary, FrameError, FrameSchedule, SegmentKind};
use crate::qmath::{Mat4, C64};

pub use dsl::{parse, print};
pub use prep::{prep_target, reference_alpha23, solve_prep, PrepSolution};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PulseError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("transition {0}-{1} is not driven (allowed: 1-3, 2-3, 3-4)")]
    UndrivenTransition(usize, usize),
    #[error("pulse angle {0} rad is outside [0, 2π)")]
    AngleOutOfRange(f64),
    #[error("wait duration must be finite and non-negative (got {0} s)")]
    BadDuration(f64),
    #[error("detuning must be finite (got {0} rad/s)")]
    BadDetuning(f64),
    #[error("Rabi frequency for {0} must be positive and finite")]
    BadRabi(Transition),
    #[error("drive amplitude |c{0}| = {1} rad/s exceeds the configured Rabi limit")]
    DriveTooStrong(Transition, f64),
    #[error("mixing angle {0} is outside (−π, 0)")]
    BadMixingAngle(f64),
    #[error("preparation solver did not converge (residual {residual:e})")]
    PrepNoConvergence { residual: f64 },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// One of the three microwave-driven transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "1-3")]
    T13,
    #[serde(rename = "2-3")]
    T23,
    #[serde(rename = "3-4")]
    T34,
}

impl Transition {
    pub const ALL: [Transition; 3] = [Transition::T13, Transition::T23, Transition::T34];

    pub fn from_levels(n: usize, m: usize) -> Result<Self, PulseError> {
        match (n.min(m), n.max(m)) {
            (1, 3) => Ok(Transition::T13),
            (2, 3) => Ok(Transition::T23),
            (3, 4) => Ok(Transition::T34),
            _ => Err(PulseError::UndrivenTransition(n, m)),
        }
    }

    /// 1-based level labels (n, m) with n < m.
    pub fn levels(self) -> (usize, usize) {
        match self {
            Transition::T13 => (1, 3),
            Transition::T23 => (2, 3),
            Transition::T34 => (3, 4),
        }
    }

    fn indices(self) -> (usize, usize) {
        let (n, m) = self.levels();
        (n - 1, m - 1)
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, m) = self.levels();
        write!(f, "{n}-{m}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "+y")]
    PlusY,
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "-y")]
    MinusY,
    #[serde(rename = "-x")]
    MinusX,
}

impl Axis {
    /// Phase offset of the rotation axis relative to +y.
    pub fn phase(self) -> f64 {
        match self {
            Axis::PlusY => 0.0,
            Axis::PlusX => FRAC_PI_2,
            Axis::MinusY => PI,
            Axis::MinusX => 3.0 * FRAC_PI_2,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::PlusY => "+y",
            Axis::PlusX => "+x",
            Axis::MinusY => "-y",
            Axis::MinusX => "-x",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+y" | "y" => Ok(Axis::PlusY),
            "+x" | "x" => Ok(Axis::PlusX),
            "-y" => Ok(Axis::MinusY),
            "-x" => Ok(Axis::MinusX),
            _ => Err(format!("unknown axis `{s}` (expected +x, -x, +y or -y)")),
        }
    }
}

/// How a programmed angle maps onto the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleConvention {
    /// exp(−iGθ/2): θ is the Bloch-sphere rotation angle.
    #[default]
    Bloch,
    /// exp(−iGθ).
    Literal,
}

impl AngleConvention {
    /// Bloch rotation angle produced by a programmed angle.
    pub fn rotation(self, angle: f64) -> f64 {
        match self {
            AngleConvention::Bloch => angle,
            AngleConvention::Literal => 2.0 * angle,
        }
    }

    fn angle_for(self, rotation: f64) -> f64 {
        match self {
            AngleConvention::Bloch => rotation,
            AngleConvention::Literal => rotation / 2.0,
        }
    }
}

/// Which density-matrix element a readout determines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Observable {
    /// Population P_k, 1-based.
    Pop(usize),
    Re(usize, usize),
    Im(usize, usize),
}

impl Observable {
    /// All 16 real parameters of a 4×4 density matrix.
    pub fn all() -> Vec<Observable> {
        let mut out: Vec<Observable> = (1..=4).map(Observable::Pop).collect();
        for u in 1..=4 {
            for v in u + 1..=4 {
                out.push(Observable::Re(u, v));
                out.push(Observable::Im(u, v));
            }
        }
        out
    }

    /// Value of this parameter for a matrix in the number basis.
    pub fn evaluate(self, rho: &Mat4) -> f64 {
        match self {
            Observable::Pop(k) => rho.0[k - 1][k - 1].re,
            Observable::Re(u, v) => rho.0[u - 1][v - 1].re,
            Observable::Im(u, v) => rho.0[u - 1][v - 1].im,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Pop(k) => write!(f, "P{k}"),
            Observable::Re(u, v) => write!(f, "Re{u}{v}"),
            Observable::Im(u, v) => write!(f, "Im{u}{v}"),
        }
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown readout element `{s}` (expected P1..P4, ReUV or ImUV)");
        let digit = |c: char| c.to_digit(10).map(|d| d as usize).filter(|d| (1..=4).contains(d));
        let (head, tail) = s.split_at(s.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?);
        let digits: Vec<usize> = tail.chars().map(digit).collect::<Option<_>>().ok_or_else(bad)?;
        match (head, digits.as_slice()) {
            ("P", [k]) => Ok(Observable::Pop(*k)),
            ("Re", [u, v]) if u < v => Ok(Observable::Re(*u, *v)),
            ("Im", [u, v]) if u < v => Ok(Observable::Im(*u, *v)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Observable {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Observable> for String {
    fn from(o: Observable) -> String {
        o.to_string()
    }
}

/// A square resonant pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub transition: Transition,
    pub axis: Axis,
    /// Programmed angle in [0, 2π).
    pub angle: f64,
    /// Extra phase added to the axis phase (rad).
    pub phase: f64,
}

impl Pulse {
    pub fn new(transition: Transition, axis: Axis, angle: f64) -> Self {
        Pulse { transition, axis, angle, phase: 0.0 }
    }

    /// Picks a named axis when `phase` sits on a multiple of π/2, otherwise
    /// +y with an explicit phase.
    pub fn with_total_phase(transition: Transition, angle: f64, phase: f64) -> Self {
        let wrapped = phase.rem_euclid(TWO_PI);
        let quarter = wrapped / FRAC_PI_2;
        let nearest = quarter.round();
        if (quarter - nearest).abs() < 1e-12 {
            let axis = match nearest as i64 % 4 {
                0 => Axis::PlusY,
                1 => Axis::PlusX,
                2 => Axis::MinusY,
                _ => Axis::MinusX,
            };
            Pulse::new(transition, axis, angle)
        } else {
            Pulse { transition, axis: Axis::PlusY, angle, phase: wrapped }
        }
    }

    /// Axis phase plus the extra phase.
    pub fn total_phase(&self) -> f64 {
        self.axis.phase() + self.phase
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        if !(self.angle.is_finite() && (0.0..TWO_PI).contains(&self.angle)) {
            return Err(PulseError::AngleOutOfRange(self.angle));
        }
        Ok(())
    }

    pub fn duration(&self, rabi: &RabiFrequencies, convention: AngleConvention) -> f64 {
        convention.rotation(self.angle) / rabi.get(self.transition)
    }
}

/// Free evolution in the interaction frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wait {
    /// τ (s).
    pub duration: f64,
    /// Δ (rad/s).
    pub detuning: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PulseEvent {
    Pulse(Pulse),
    Wait(Wait),
    Readout { element: Observable },
}

/// Parsed, structurally valid program.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseProgram {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub events: Vec<PulseEvent>,
}

impl PulseProgram {
    pub fn new(events: Vec<PulseEvent>) -> Self {
        PulseProgram { name: None, seed: None, events }
    }

    /// Readout markers in program order.
    pub fn readouts(&self) -> Vec<Observable> {
        self.events
            .iter()
            .filter_map(|e| match e {
                PulseEvent::Readout { element } => Some(*element),
                _ => None,
            })
            .collect()
    }

    /// Events before the first wait.
    pub fn preparation(&self) -> &[PulseEvent] {
        let end = self.events.iter().position(|e| matches!(e, PulseEvent::Wait(_))).unwrap_or(self.events.len());
        &self.events[..end]
    }
}

impl fmt::Display for PulseProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}

/// Rabi frequencies |Ω| per transition (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiFrequencies {
    pub r13: f64,
    pub r23: f64,
    pub r34: f64,
}

impl Default for RabiFrequencies {
    fn default() -> Self {
        RabiFrequencies { r13: TWO_PI * 49.6e3, r23: TWO_PI * 107.8e3, r34: TWO_PI * 55.2e3 }
    }
}

impl RabiFrequencies {
    pub fn get(&self, t: Transition) -> f64 {
        match t {
            Transition::T13 => self.r13,
            Transition::T23 => self.r23,
            Transition::T34 => self.r34,
        }
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        for t in Transition::ALL {
            let r = self.get(t);
            if !(r.is_finite() && r > 0.0) {
                return Err(PulseError::BadRabi(t));
            }
        }
        Ok(())
    }
}

/// Complex RWA drive amplitudes with their limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub c13: C64,
    pub c23: C64,
    pub c34: C64,
    pub max_rabi: RabiFrequencies,
}

impl ControlParams {
    pub fn off(max_rabi: RabiFrequencies) -> Self {
        ControlParams { c13: C64::new(0.0, 0.0), c23: C64::new(0.0, 0.0), c34: C64::new(0.0, 0.0), max_rabi }
    }

    /// Drive on a single transition at full Rabi frequency with rotation
    /// axis phase `phase`: c = −i e^{iφ} Ω/2.
    pub fn for_pulse(transition: Transition, phase: f64, max_rabi: RabiFrequencies) -> Self {
        let c = C64::new(0.0, -1.0) * C64::from_polar(max_rabi.get(transition) / 2.0, phase);
        let mut p = Self::off(max_rabi);
        *p.amplitude_mut(transition) = c;
        p
    }

    pub fn amplitude(&self, t: Transition) -> C64 {
        match t {
            Transition::T13 => self.c13,
            Transition::T23 => self.c23,
            Transition::T34 => self.c34,
        }
    }

    fn amplitude_mut(&mut self, t: Transition) -> &mut C64 {
        match t {
            Transition::T13 => &mut self.c13,
            Transition::T23 => &mut self.c23,
            Transition::T34 => &mut self.c34,
        }
    }

    /// |c| may not exceed Ω/2, the amplitude that drives Rabi frequency Ω.
    pub fn validate(&self) -> Result<(), PulseError> {
        self.max_rabi.validate()?;
        for t in Transition::ALL {
            let c = self.amplitude(t).norm();
            if !c.is_finite() || 2.0 * c > self.max_rabi.get(t) * (1.0 + 1e-12) {
                return Err(PulseError::DriveTooStrong(t, c));
            }
        }
        Ok(())
    }
}

/// H_c = c₁₃|1⟩⟨3| + c₂₃|2⟩⟨3| + c₃₄|3⟩⟨4| + h.c. in the number basis.
pub fn control_hamiltonian(c: &ControlParams) -> Mat4 {
    let mut h = Mat4::zeros();
    for t in Transition::ALL {
        let (n, m) = t.indices();
        let a = c.amplitude(t);
        h.0[n][m] += a;
        h.0[m][n] += a.conj();
    }
    h
}

/// Block unitary of a pulse in the number basis.
pub fn pulse_unitary(p: &Pulse, convention: AngleConvention) -> Mat4 {
    rotation_unitary(p.transition, convention.rotation(p.angle), p.total_phase())
}

/// exp[−i G(φ) θ/2] on the (n, m) block for Bloch angle `rotation`.
pub(crate) fn rotation_unitary(t: Transition, rotation: f64, phase: f64) -> Mat4 {
    let (n, m) = t.indices();
    let (s, c) = (rotation / 2.0).sin_cos();
    let mut u = Mat4::identity();
    u.0[n][n] = C64::new(c, 0.0);
    u.0[m][m] = C64::new(c, 0.0);
    u.0[n][m] = -C64::from_polar(s, phase);
    u.0[m][n] = C64::from_polar(s, -phase);
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub convention: AngleConvention,
    pub rabi: RabiFrequencies,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { convention: AngleConvention::Bloch, rabi: RabiFrequencies::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepKind {
    Pulse {
        transition: Transition,
        /// Rotation angle on the Bloch sphere.
        rotation: f64,
        /// Phase in the rotating frame, as programmed.
        frame_phase: f64,
        /// Phase of the physical drive: the frame phase plus the accumulated
        /// level-phase difference L_n − L_m.
        physical_phase: f64,
    },
    Wait(Wait),
}

/// A compiled event: its rotating-frame unitary and where it sits in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompiledStep {
    pub kind: StepKind,
    pub unitary: Mat4,
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledProgram {
    pub steps: Vec<CompiledStep>,
    pub schedule: FrameSchedule,
    pub readouts: Vec<Observable>,
    /// Accumulated E_k − δ_k phase per level at the end of the program.
    pub level_lag: [f64; 4],
}

impl CompiledProgram {
    pub fn unitaries(&self) -> Vec<Mat4> {
        self.steps.iter().map(|s| s.unitary).collect()
    }

    /// Product of all step unitaries, last step leftmost.
    pub fn total_unitary(&self) -> Mat4 {
        self.steps.iter().fold(Mat4::identity(), |acc, s| s.unitary * acc)
    }

    pub fn duration(&self) -> f64 {
        self.schedule.end()
    }
}

/// Turns a program into rotating-frame unitaries.
///
/// The frame follows the free evolution (δ_k = E_k) during pulses and
/// δ₁,₄ = E₁,₄ − Δ during waits, so levels 1 and 4 lag by Δτ after each wait.
/// Pulses keep their programmed form in the frame; the lag shows up only in
/// the physical drive phase.
pub fn compile(
    program: &PulseProgram,
    energies: [f64; 4],
    opts: &CompileOptions,
) -> Result<CompiledProgram, PulseError> {
    opts.rabi.validate()?;
    let mut steps = Vec::new();
    let mut schedule = FrameSchedule::new();
    let mut lag = [0.0; 4];
    let mut seen_wait = false;
    for event in &program.events {
        let start = schedule.end();
        match event {
            PulseEvent::Pulse(p) => {
                p.validate()?;
                let duration = p.duration(&opts.rabi, opts.convention);
                let kind = if seen_wait { SegmentKind::Readout } else { SegmentKind::Prep };
                schedule.push_free(kind, duration, energies)?;
                let (n, m) = p.transition.indices();
                steps.push(CompiledStep {
                    kind: StepKind::Pulse {
                        transition: p.transition,
                        rotation: opts.convention.rotation(p.angle),
                        frame_phase: p.total_phase(),
                        physical_phase: p.total_phase() + lag[n] - lag[m],
                    },
                    unitary: pulse_unitary(p, opts.convention),
                    start,
                    duration,
                });
            }
            PulseEvent::Wait(w) => {
                if !(w.duration.is_finite() && w.duration >= 0.0) {
                    return Err(PulseError::BadDuration(w.duration));
                }
                if !w.detuning.is_finite() {
                    return Err(PulseError::BadDetuning(w.detuning));
                }
                seen_wait = true;
                schedule.push_interact(w.duration, energies, w.detuning)?;
                lag[0] += w.detuning * w.duration;
                lag[3] += w.detuning * w.duration;
                steps.push(CompiledStep {
                    kind: StepKind::Wait(*w),
                    unitary: interaction_unitary(w.detuning, w.duration)?,
                    start,
                    duration: w.duration,
                });
            }
            PulseEvent::Readout { .. } => {}
        }
    }
    Ok(CompiledProgram { steps, schedule, readouts: program.readouts(), level_lag: lag })
}
