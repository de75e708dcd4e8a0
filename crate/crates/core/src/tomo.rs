//! Fluorescence readout and state tomography.
//!
//! Only |3⟩ is dark, so every setting applies a short pulse fragment and then
//! records P₃′, the probability of finding the ion dark. Sixteen settings fix
//! all real parameters of ρ; reconstruction is linear inversion followed by
//! projection onto valid states.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pulses::{self, AngleConvention, Axis, Pulse, PulseEvent, PulseProgram, Transition};
use crate::qmath::{Mat4, C64};
use crate::state::{BasisTag, DensityMatrix, StateError};

pub use crate::pulses::Observable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomoError {
    #[error("shot count must be at least 1")]
    NoShots,
    #[error("record set does not determine the state (pivot {pivot:e} at parameter {parameter})")]
    RankDeficient { parameter: Observable, pivot: f64 },
    #[error("no record for {0}")]
    MissingRecord(Observable),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Shots per tomography setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shots {
    Finite(u64),
    /// Exact probabilities.
    Infinite,
}

impl Default for Shots {
    fn default() -> Self {
        Shots::Finite(500)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadoutResult {
    pub shots: u64,
    pub bright: u64,
}

impl ReadoutResult {
    pub fn p_bright(&self) -> f64 {
        self.bright as f64 / self.shots as f64
    }
}

/// Probability that the ion scatters photons: 1 − ρ₃₃.
pub fn bright_probability(rho: &DensityMatrix) -> f64 {
    (1.0 - rho.populations()[2]).clamp(0.0, 1.0)
}

/// Binomial bright counts drawn from `rng`.
pub fn simulate_readout_with<R: Rng>(rho: &DensityMatrix, shots: u64, rng: &mut R) -> Result<ReadoutResult, TomoError> {
    if shots == 0 {
        return Err(TomoError::NoShots);
    }
    let p = bright_probability(rho);
    let dist = Binomial::new(shots, p).expect("probability clamped to [0, 1]");
    Ok(ReadoutResult { shots, bright: rng.sample(dist) })
}

/// Binomial bright counts from a generator seeded with `seed`.
pub fn simulate_readout(rho: &DensityMatrix, shots: u64, seed: u64) -> Result<ReadoutResult, TomoError> {
    simulate_readout_with(rho, shots, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One tomography setting: the fragment played before readout, and the
/// element it is designed to expose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub element: Observable,
    pub fragment: Vec<Pulse>,
}

fn pi_pulse(t: Transition) -> Pulse {
    Pulse::new(t, Axis::PlusY, PI)
}

fn half_pi_pulse(t: Transition, phase: f64) -> Pulse {
    Pulse::with_total_phase(t, FRAC_PI_2, phase)
}

/// The transition that moves level `k` into |3⟩ with a π pulse.
fn mapping_transition(k: usize) -> Option<Transition> {
    match k {
        1 => Some(Transition::T13),
        2 => Some(Transition::T23),
        4 => Some(Transition::T34),
        _ => None,
    }
}

impl Setting {
    pub fn for_element(element: Observable) -> Self {
        let phase = |im: bool| if im { FRAC_PI_2 } else { 0.0 };
        let fragment = match element {
            Observable::Pop(k) => mapping_transition(k).map(pi_pulse).into_iter().collect(),
            Observable::Re(u, v) | Observable::Im(u, v) => {
                let im = matches!(element, Observable::Im(..));
                match (u, v) {
                    (1, 3) | (2, 3) | (3, 4) => {
                        vec![half_pi_pulse(Transition::from_levels(u, v).expect("driven pair"), phase(im))]
                    }
                    (1, 4) => vec![pi_pulse(Transition::T13), half_pi_pulse(Transition::T34, phase(im))],
                    (1, 2) => vec![pi_pulse(Transition::T23), half_pi_pulse(Transition::T13, phase(im))],
                    (2, 4) => vec![pi_pulse(Transition::T23), half_pi_pulse(Transition::T34, phase(im))],
                    _ => unreachable!("observables have u < v ≤ 4"),
                }
            }
        };
        Setting { element, fragment }
    }

    /// Fragment followed by its readout marker.
    pub fn program(&self) -> PulseProgram {
        let mut events: Vec<PulseEvent> = self.fragment.iter().copied().map(PulseEvent::Pulse).collect();
        events.push(PulseEvent::Readout { element: self.element });
        PulseProgram::new(events)
    }

    pub fn unitary(&self, convention: AngleConvention) -> Mat4 {
        self.fragment.iter().fold(Mat4::identity(), |acc, p| pulses::pulse_unitary(p, convention) * acc)
    }

    /// U†|3⟩⟨3|U: the operator whose expectation is the dark probability.
    pub fn dark_operator(&self, convention: AngleConvention) -> Mat4 {
        let u = self.unitary(convention);
        u.adjoint() * Mat4::unit(2, 2) * u
    }
}

/// The sixteen settings, in [`Observable::all`] order.
pub fn measurement_set() -> Vec<Setting> {
    Observable::all().into_iter().map(Setting::for_element).collect()
}

/// One measured setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecord {
    pub element: Observable,
    /// Fragment in the pulse DSL, one statement per `;`.
    pub sequence: String,
    /// Measured dark fraction P₃′.
    pub value: f64,
    /// `None` for exact probabilities.
    pub shots: Option<u64>,
    pub seed: Option<u64>,
}

/// Runs every setting on `rho` (number basis). Finite shots draw from a
/// single generator seeded once with `seed`, in setting order.
pub fn measure(
    rho: &DensityMatrix,
    shots: Shots,
    seed: u64,
    convention: AngleConvention,
) -> Result<Vec<TomographyRecord>, TomoError> {
    if rho.basis() != BasisTag::Number {
        return Err(StateError::WrongBasis { expected: BasisTag::Number, found: rho.basis() }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    measurement_set()
        .into_iter()
        .map(|s| {
            let after = rho.evolve(&s.unitary(convention));
            let dark = after.populations()[2];
            let (value, n, sd) = match shots {
                Shots::Infinite => (dark, None, None),
                Shots::Finite(n) => {
                    let r = simulate_readout_with(&after, n, &mut rng)?;
                    (1.0 - r.p_bright(), Some(n), Some(seed))
                }
            };
            let sequence =
                pulses::print(&PulseProgram::new(s.fragment.iter().copied().map(PulseEvent::Pulse).collect()));
            Ok(TomographyRecord {
                element: s.element,
                sequence: sequence.trim_end().replace('\n', "; "),
                value,
                shots: n,
                seed: sd,
            })
        })
        .collect()
}

/// Basis matrix B_k with ρ = Σ x_k B_k for the parameters of [`Observable::all`].
fn parameter_matrix(o: Observable) -> Mat4 {
    match o {
        Observable::Pop(k) => Mat4::unit(k - 1, k - 1),
        Observable::Re(u, v) => Mat4::unit(u - 1, v - 1) + Mat4::unit(v - 1, u - 1),
        Observable::Im(u, v) => (Mat4::unit(u - 1, v - 1) - Mat4::unit(v - 1, u - 1)).scale(C64::new(0.0, 1.0)),
    }
}

fn matrix_from_parameters(x: &[f64]) -> Mat4 {
    Observable::all().into_iter().zip(x).fold(Mat4::zeros(), |acc, (o, &v)| acc + parameter_matrix(o).scale_real(v))
}

/// Row of the linear measurement map for one setting: Tr(M B_k).
pub fn measurement_row(setting: &Setting, convention: AngleConvention) -> [f64; 16] {
    let m = setting.dark_operator(convention);
    let params = Observable::all();
    std::array::from_fn(|k| (m * parameter_matrix(params[k])).trace().re)
}

/// Solves the normal equations AᵀA x = Aᵀb by Gaussian elimination with
/// partial pivoting.
fn least_squares(rows: &[[f64; 16]], rhs: &[f64]) -> Result<[f64; 16], TomoError> {
    let mut a = [[0.0; 17]; 16];
    for (row, &b) in rows.iter().zip(rhs) {
        for i in 0..16 {
            for j in 0..16 {
                a[i][j] += row[i] * row[j];
            }
            a[i][16] += row[i] * b;
        }
    }
    let scale = (0..16).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let params = Observable::all();
    for col in 0..16 {
        let pivot = (col..16).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).expect("non-empty range");
        if a[pivot][col].abs() < 1e-12 * scale {
            return Err(TomoError::RankDeficient { parameter: params[col], pivot: a[pivot][col] });
        }
        a.swap(col, pivot);
        for r in 0..16 {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    let pivot = a[col];
                    for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                        *x -= f * p;
                    }
                }
            }
        }
    }
    Ok(std::array::from_fn(|i| a[i][16] / a[i][i]))
}

/// Reconstructed state in both bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub number: DensityMatrix,
    pub zz: DensityMatrix,
    /// Linear-inversion estimate before projection.
    pub raw: Mat4,
    /// Smallest eigenvalue of `raw`; negative values were clipped.
    pub min_eigenvalue: f64,
}

/// Linear inversion of `records` followed by projection to a valid state.
/// `r` maps the number basis to the zz basis.
pub fn reconstruct(
    records: &[TomographyRecord],
    r: &Mat4,
    convention: AngleConvention,
) -> Result<Reconstruction, TomoError> {
    let rows: Vec<[f64; 16]> =
        records.iter().map(|rec| measurement_row(&Setting::for_element(rec.element), convention)).collect();
    let rhs: Vec<f64> = records.iter().map(|rec| rec.value).collect();
    let x = least_squares(&rows, &rhs)?;
    let raw = matrix_from_parameters(&x);
    let (number, min_eigenvalue) = DensityMatrix::project_physical(&raw, BasisTag::Number)?;
    let zz = DensityMatrix::from_parts(*r * *number.matrix() * r.transpose(), BasisTag::Zz);
    Ok(Reconstruction { number, zz, raw, min_eigenvalue })
}

/// Element-by-element extraction with closed formulas, Bloch convention:
///
/// * P_k from the π-mapped readout (P₃ directly);
/// * (n,3), n = 1, 2: value = P₃′ − (P_n + P₃)/2;
/// * (3,4), (1,4), (2,4): value = (P_u + P_v)/2 − P₃′;
/// * (1,2): value = P₃′ − (P₁ + P₂)/2.
pub fn explicit_elements(records: &[TomographyRecord]) -> Result<Mat4, TomoError> {
    let get =
        |o: Observable| records.iter().find(|r| r.element == o).map(|r| r.value).ok_or(TomoError::MissingRecord(o));
    let p: Vec<f64> = (1..=4).map(|k| get(Observable::Pop(k))).collect::<Result<_, _>>()?;
    let mut m = Mat4::diag_real([p[0], p[1], p[2], p[3]]);
    for u in 1..=4 {
        for v in u + 1..=4 {
            let mean = 0.5 * (p[u - 1] + p[v - 1]);
            let sign = if v == 4 { -1.0 } else { 1.0 };
            let re = sign * (get(Observable::Re(u, v))? - mean);
            let im = sign * (get(Observable::Im(u, v))? - mean);
            m.0[u - 1][v - 1] = C64::new(re, im);
            m.0[v - 1][u - 1] = C64::new(re, -im);
        }
    }
    Ok(m)
}

/// Records as CSV with columns element, sequence, value, shots, seed.
pub fn records_to_csv(records: &[TomographyRecord]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}
