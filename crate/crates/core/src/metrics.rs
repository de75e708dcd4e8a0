//! State overlap and two-qubit entanglement measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{eig_hermitian, spin, sqrtm_psd, tensor, tol, LinalgError, Mat4};
use crate::state::{BasisTag, DensityMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("states are in different bases ({0} vs {1})")]
    BasisMismatch(BasisTag, BasisTag),
    #[error("concurrence needs a zz-basis state, got {0}")]
    WrongBasis(BasisTag),
    #[error("state has eigenvalue {0:e} below zero")]
    NotPositive(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Default threshold on C for calling a state entangled.
pub const ENTANGLED_THRESHOLD: f64 = 1e-9;

const EIGEN_FLOOR: f64 = 1e-13;

/// |Tr(ρ₁ρ₂)| / √(Tr ρ₁² Tr ρ₂²).
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64, MetricsError> {
    if a.basis() != b.basis() {
        return Err(MetricsError::BasisMismatch(a.basis(), b.basis()));
    }
    let overlap = (*a.matrix() * *b.matrix()).trace().norm();
    Ok((overlap / (a.purity() * b.purity()).sqrt()).min(1.0))
}

fn sigma_yy() -> Mat4 {
    let sy = spin::iy().scale_real(2.0);
    tensor(&sy, &sy)
}

/// ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y).
pub fn spin_flip(rho: &Mat4) -> Mat4 {
    let yy = sigma_yy();
    yy * rho.conj() * yy
}

/// Square roots of the eigenvalues of ρρ̃ in decreasing order, computed from
/// the Hermitian form √ρ ρ̃ √ρ. Eigenvalues below `EIGEN_FLOOR` are rounding
/// noise and count as zero, which keeps product states at exactly C = 0.
pub fn wootters_lambdas(rho: &DensityMatrix) -> Result<[f64; 4], MetricsError> {
    if rho.basis() != BasisTag::Zz {
        return Err(MetricsError::WrongBasis(rho.basis()));
    }
    let m = rho.matrix();
    let low = eig_hermitian(m)?.values[0];
    if low < tol::PSD_FLOOR {
        return Err(MetricsError::NotPositive(low));
    }
    let s = sqrtm_psd(m)?;
    let r = s * spin_flip(m) * s;
    let r = (r + r.adjoint()).scale_real(0.5);
    let mut l = eig_hermitian(&r)?.values.map(|e| if e < EIGEN_FLOOR { 0.0 } else { e.sqrt() });
    l.reverse();
    Ok(l)
}

/// Wootters concurrence max(0, λ₁ − λ₂ − λ₃ − λ₄).
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, MetricsError> {
    let [l1, l2, l3, l4] = wootters_lambdas(rho)?;
    Ok((l1 - l2 - l3 - l4).clamp(0.0, 1.0))
}

/// h(x) = −x log₂ x − (1 − x) log₂(1 − x).
pub fn binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    term(x) + term(1.0 - x)
}

/// h((1 + √(1 − C²))/2).
pub fn eof_from_concurrence(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    binary_entropy(0.5 * (1.0 + (1.0 - c * c).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub concurrence: f64,
    /// C², the quantity compared with the published W values.
    pub tangle: f64,
    /// Entanglement of formation.
    pub eof: f64,
    pub entangled: bool,
}

impl EntanglementReport {
    pub fn from_concurrence(c: f64, threshold: f64) -> Self {
        EntanglementReport { concurrence: c, tangle: c * c, eof: eof_from_concurrence(c), entangled: c > threshold }
    }
}

pub fn entanglement_report(rho: &DensityMatrix) -> Result<EntanglementReport, MetricsError> {
    entanglement_report_with_threshold(rho, ENTANGLED_THRESHOLD)
}

pub fn entanglement_report_with_threshold(
    rho: &DensityMatrix,
    threshold: f64,
) -> Result<EntanglementReport, MetricsError> {
    Ok(EntanglementReport::from_concurrence(concurrence(rho)?, threshold))
}
