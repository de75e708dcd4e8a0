//! Basis-tagged kets and density matrices of the four-level system.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{eig_hermitian, tol, LinalgError, Mat4, Vec4, C64};

/// Representation a 4-component object is written in.
///
/// `Number` indexes the energy eigenstates |1⟩..|4⟩, `Zz` the product spin
/// states ↑↑, ↑↓, ↓↑, ↓↓ (nucleus first, electron second).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisTag {
    Number,
    Zz,
}

impl fmt::Display for BasisTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisTag::Number => f.write_str("number"),
            BasisTag::Zz => f.write_str("zz"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("expected a {expected}-basis object, found {found}")]
    WrongBasis { expected: BasisTag, found: BasisTag },
    #[error("basis mismatch: {0} vs {1}")]
    BasisMismatch(BasisTag, BasisTag),
    #[error("state vector norm² is {0}, expected 1")]
    NotNormalized(f64),
    #[error("density matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("density matrix has eigenvalue {0:e} below zero")]
    NotPositive(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Pure state with its basis tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ket {
    amps: Vec4,
    basis: BasisTag,
}

impl Ket {
    pub fn new(amps: Vec4, basis: BasisTag) -> Result<Self, StateError> {
        let n = amps.norm_sqr();
        if (n - 1.0).abs() > tol::NORM {
            return Err(StateError::NotNormalized(n));
        }
        Ok(Ket { amps, basis })
    }

    pub fn basis_state(k: usize, basis: BasisTag) -> Self {
        Ket { amps: Vec4::basis(k), basis }
    }

    pub fn amplitudes(&self) -> &Vec4 {
        &self.amps
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub(crate) fn with_amplitudes(amps: Vec4, basis: BasisTag) -> Self {
        Ket { amps, basis }
    }
}

/// Hermitian, unit-trace, positive semidefinite 4×4 state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    matrix: Mat4,
    basis: BasisTag,
}

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity.
    pub fn new(matrix: Mat4, basis: BasisTag) -> Result<Self, StateError> {
        if !matrix.is_hermitian(tol::HERMITIAN) {
            return Err(StateError::NotHermitian(matrix.hermitian_deviation()));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol::TRACE || tr.im.abs() > tol::TRACE {
            return Err(StateError::BadTrace(tr.re));
        }
        let low = eig_hermitian(&matrix)?.values[0];
        if low < tol::PSD_FLOOR {
            return Err(StateError::NotPositive(low));
        }
        Ok(DensityMatrix { matrix, basis })
    }

    pub fn from_ket(amps: &Vec4, basis: BasisTag) -> Result<Self, StateError> {
        let ket = Ket::new(*amps, basis)?;
        Ok(Self::pure(&ket))
    }

    pub fn pure(ket: &Ket) -> Self {
        DensityMatrix { matrix: Mat4::outer(&ket.amps, &ket.amps), basis: ket.basis }
    }

    pub fn maximally_mixed(basis: BasisTag) -> Self {
        DensityMatrix { matrix: Mat4::identity().scale_real(0.25), basis }
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn from_parts(matrix: Mat4, basis: BasisTag) -> Self {
        DensityMatrix { matrix, basis }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.matrix
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn element(&self, u: usize, v: usize) -> C64 {
        self.matrix.0[u][v]
    }

    /// Diagonal entries (populations).
    pub fn populations(&self) -> [f64; 4] {
        self.matrix.diagonal().map(|z| z.re)
    }

    /// U ρ U†.
    pub fn evolve(&self, u: &Mat4) -> Self {
        DensityMatrix { matrix: *u * self.matrix * u.adjoint(), basis: self.basis }
    }

    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    /// Nearest valid state by eigenvalue truncation and renormalization.
    /// Returns the projected state and the smallest eigenvalue seen before
    /// projection.
    pub fn project_physical(matrix: &Mat4, basis: BasisTag) -> Result<(Self, f64), StateError> {
        let herm = (*matrix + matrix.adjoint()).scale_real(0.5);
        let eig = eig_hermitian(&herm)?;
        let low = eig.values[0];
        let clipped = eig.values.map(|e| e.max(0.0));
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            return Err(StateError::BadTrace(total));
        }
        let m = eig.map(|e| C64::new(e.max(0.0) / total, 0.0));
        Ok((DensityMatrix { matrix: m, basis }, low))
    }
}
