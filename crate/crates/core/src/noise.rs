//! Pure dephasing: each coherence ⟨u|ρ|v⟩ decays as e^{−τ/β_uv} during waits,
//! plus a Ramsey simulator and fitter for the decay times.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{eig_hermitian, tol, LinalgError, Mat4, C64};
use crate::state::{BasisTag, DensityMatrix, StateError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("dephasing time must be non-negative (got {0} s)")]
    NegativeTime(f64),
    #[error("coherence time for pair ({0},{1}) must be positive (got {2} s)")]
    BadBeta(usize, usize, f64),
    #[error("({0},{1}) is not a pair of distinct levels in 1..=4")]
    BadPair(usize, usize),
    #[error("need at least three Ramsey points with matching lengths")]
    TooFewPoints,
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Coherence time per unordered level pair; absent pairs never decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PairBeta>", into = "Vec<PairBeta>")]
pub struct NoiseModel {
    beta: BTreeMap<(usize, usize), f64>,
}

/// Serialized table row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairBeta {
    pub pair: (usize, usize),
    /// Seconds; `null` or absent means no decay.
    pub beta: Option<f64>,
}

impl NoiseModel {
    /// No decay at all.
    pub fn noiseless() -> Self {
        NoiseModel { beta: BTreeMap::new() }
    }

    /// Measured ¹⁷¹Yb⁺ values; (2,3) is effectively infinite.
    pub fn ytterbium() -> Self {
        let mut m = Self::noiseless();
        for (u, v, seconds) in
            [(1, 3, 404.3e-6), (3, 4, 403.9e-6), (1, 2, 410.9e-6), (2, 4, 440.7e-6), (1, 4, 138.5e-6)]
        {
            m.beta.insert((u, v), seconds);
        }
        m
    }

    fn key(u: usize, v: usize) -> Result<(usize, usize), NoiseError> {
        let (a, b) = (u.min(v), u.max(v));
        if a == b || a < 1 || b > 4 {
            return Err(NoiseError::BadPair(u, v));
        }
        Ok((a, b))
    }

    /// Sets β for a pair; `f64::INFINITY` removes the entry.
    pub fn set(&mut self, u: usize, v: usize, beta: f64) -> Result<(), NoiseError> {
        let key = Self::key(u, v)?;
        if beta.is_nan() || beta <= 0.0 {
            return Err(NoiseError::BadBeta(key.0, key.1, beta));
        }
        if beta.is_infinite() {
            self.beta.remove(&key);
        } else {
            self.beta.insert(key, beta);
        }
        Ok(())
    }

    pub fn with(mut self, u: usize, v: usize, beta: f64) -> Result<Self, NoiseError> {
        self.set(u, v, beta)?;
        Ok(self)
    }

    /// β_uv in seconds, infinite when absent.
    pub fn beta(&self, u: usize, v: usize) -> f64 {
        Self::key(u, v).ok().and_then(|k| self.beta.get(&k).copied()).unwrap_or(f64::INFINITY)
    }

    /// Multiplier e^{−τ/β} for each matrix entry.
    pub fn decay_factors(&self, tau: f64) -> [[f64; 4]; 4] {
        std::array::from_fn(|u| {
            std::array::from_fn(|v| if u == v { 1.0 } else { (-tau / self.beta(u + 1, v + 1)).exp() })
        })
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::ytterbium()
    }
}

impl TryFrom<Vec<PairBeta>> for NoiseModel {
    type Error = NoiseError;

    fn try_from(rows: Vec<PairBeta>) -> Result<Self, Self::Error> {
        let mut m = Self::noiseless();
        for r in rows {
            m.set(r.pair.0, r.pair.1, r.beta.unwrap_or(f64::INFINITY))?;
        }
        Ok(m)
    }
}

impl From<NoiseModel> for Vec<PairBeta> {
    fn from(m: NoiseModel) -> Self {
        m.beta.into_iter().map(|(pair, b)| PairBeta { pair, beta: Some(b) }).collect()
    }
}

/// Elementwise decay of a raw matrix, without any positivity check.
pub fn dephase_matrix(m: &Mat4, tau: f64, nm: &NoiseModel) -> Mat4 {
    let f = nm.decay_factors(tau);
    crate::qmath::CMat(std::array::from_fn(|u| std::array::from_fn(|v| m.0[u][v] * f[u][v])))
}

/// Result of a dephasing step that needed the positivity guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub min_eigenvalue: f64,
}

/// Dephases and reports whether a positivity projection was applied.
pub fn apply_dephasing_reported(
    rho: &DensityMatrix,
    tau: f64,
    nm: &NoiseModel,
) -> Result<(DensityMatrix, Option<Projection>), NoiseError> {
    if tau.is_nan() || tau < 0.0 {
        return Err(NoiseError::NegativeTime(tau));
    }
    if rho.basis() != BasisTag::Number {
        return Err(StateError::WrongBasis { expected: BasisTag::Number, found: rho.basis() }.into());
    }
    let m = dephase_matrix(rho.matrix(), tau, nm);
    let low = eig_hermitian(&m)?.values[0];
    if low < tol::PSD_FLOOR {
        if low < -1e-6 {
            log::warn!("dephased state has eigenvalue {low:e}; projecting onto valid states");
        } else {
            log::debug!("dephased state has eigenvalue {low:e}; projecting onto valid states");
        }
        let (state, _) = DensityMatrix::project_physical(&m, BasisTag::Number)?;
        return Ok((state, Some(Projection { min_eigenvalue: low })));
    }
    Ok((DensityMatrix::from_parts(m, BasisTag::Number), None))
}

/// ⟨u|ρ|v⟩ ← ⟨u|ρ|v⟩ e^{−τ/β_uv} for u ≠ v, on a number-basis state.
pub fn apply_dephasing(rho: &DensityMatrix, tau: f64, nm: &NoiseModel) -> Result<DensityMatrix, NoiseError> {
    apply_dephasing_reported(rho, tau, nm).map(|(s, _)| s)
}

/// Real rotation by π/2 about y on the (u, v) block.
fn half_pi(u: usize, v: usize) -> Mat4 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut r = Mat4::identity();
    r.0[u][u] = C64::new(s, 0.0);
    r.0[v][v] = C64::new(s, 0.0);
    r.0[u][v] = C64::new(-s, 0.0);
    r.0[v][u] = C64::new(s, 0.0);
    r
}

/// Ramsey sequence on levels (u, v): π/2, free evolution for each delay with
/// detuning δ (rad/s) and dephasing, π/2, then the population of `u`.
/// Ideal signal: ½[1 + e^{−τ/β} cos(δτ)].
pub fn ramsey_fringe(
    pair: (usize, usize),
    delays: &[f64],
    detuning: f64,
    nm: &NoiseModel,
) -> Result<Vec<f64>, NoiseError> {
    let (u, v) = NoiseModel::key(pair.0, pair.1)?;
    let (u, v) = (u - 1, v - 1);
    let pulse = half_pi(u, v);
    let start = DensityMatrix::pure(&crate::state::Ket::basis_state(u, BasisTag::Number));
    delays
        .iter()
        .map(|&tau| {
            let rho = start.evolve(&pulse);
            let mut phase = Mat4::identity();
            phase.0[v][v] = C64::from_polar(1.0, -detuning * tau);
            let rho = apply_dephasing(&rho.evolve(&phase), tau, nm)?;
            Ok(rho.evolve(&pulse.adjoint()).populations()[u])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyFit {
    /// Fitted coherence time (s).
    pub beta: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

/// Least-squares fit of y = c + a e^{−τ/β} cos(δτ) with δ known.
/// β is found by golden-section search in log β; a and c are linear.
pub fn fit_ramsey(delays: &[f64], values: &[f64], detuning: f64) -> Result<RamseyFit, NoiseError> {
    if delays.len() < 3 || delays.len() != values.len() {
        return Err(NoiseError::TooFewPoints);
    }
    let linear = |beta: f64| -> (f64, f64, f64) {
        let g: Vec<f64> = delays.iter().map(|&t| (-t / beta).exp() * (detuning * t).cos()).collect();
        let n = g.len() as f64;
        let (sg, sy): (f64, f64) = (g.iter().sum(), values.iter().sum());
        let sgg: f64 = g.iter().map(|x| x * x).sum();
        let sgy: f64 = g.iter().zip(values).map(|(x, y)| x * y).sum();
        let det = n * sgg - sg * sg;
        let (a, c) =
            if det.abs() < 1e-300 { (0.0, sy / n) } else { ((n * sgy - sg * sy) / det, (sgg * sy - sg * sgy) / det) };
        let sse = g.iter().zip(values).map(|(x, y)| (c + a * x - y).powi(2)).sum();
        (a, c, sse)
    };
    let span = delays.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = ((span * 1e-3).ln(), (span * 1e4).ln());
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let sse = |x: f64| linear(x.exp()).2;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (sse(x1), sse(x2));
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = sse(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = sse(x2);
        }
    }
    let beta = (0.5 * (lo + hi)).exp();
    let (amplitude, offset, sse) = linear(beta);
    Ok(RamseyFit { beta, amplitude, offset, rms: (sse / delays.len() as f64).sqrt() })
}
