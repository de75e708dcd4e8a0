//! Hyperfine + Zeeman model of the ²S₁/₂ manifold: free Hamiltonian,
//! Breit–Rabi eigensystem, and the orthogonal map R between the number basis
//! (|1⟩..|4⟩) and the zz basis (↑↑, ↑↓, ↓↑, ↓↓).
//!
//! All frequencies are angular (rad/s) with ħ = 1. Gyromagnetic ratios are
//! signed: the Zeeman term is −B₀(γ_a I_{a,z} + γ_b I_{b,z}), so a negative
//! electron γ puts |1⟩ = ↑↑ at the top of the F = 1 triplet.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{spin, tensor, Mat2, Mat4};
pub use crate::state::BasisTag;
use crate::state::{DensityMatrix, Ket};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomError {
    #[error("hyperfine constant A must be positive and finite (got {0})")]
    BadHyperfine(f64),
    #[error("magnetic field B0 must be non-negative and finite (got {0})")]
    BadField(f64),
    #[error("gyromagnetic ratios must be finite")]
    BadGamma,
    #[error("mixing parameter is undefined for A = 0")]
    DegenerateHyperfine,
    #[error("object is already in the {0} basis")]
    SameBasis(BasisTag),
}

/// Parameters of the four-level model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    /// Hyperfine constant A (rad/s).
    pub hyperfine_a: f64,
    /// Quantization field (gauss).
    pub b0_gauss: f64,
    /// Nuclear gyromagnetic ratio (rad/s per gauss).
    pub gamma_a: f64,
    /// Electron gyromagnetic ratio (rad/s per gauss).
    pub gamma_b: f64,
    /// Microwave reference frequency ω₀ (rad/s).
    pub omega0: f64,
}

impl AtomParams {
    /// ¹⁷¹Yb⁺ ground-state splitting.
    pub const YB171_HYPERFINE_HZ: f64 = 12.642_812_118_466e9;
    /// Electron, rad/s/G divided by 2π.
    pub const ELECTRON_GAMMA_HZ_PER_GAUSS: f64 = -2.802_495e6;
    /// ¹⁷¹Yb nucleus, rad/s/G divided by 2π.
    pub const YB171_NUCLEAR_GAMMA_HZ_PER_GAUSS: f64 = 0.752e3;
    pub const OMEGA0_HZ: f64 = 12.611_571_73e9;
    pub const B0_GAUSS: f64 = 5.615;

    pub fn validate(&self) -> Result<(), AtomError> {
        if !(self.hyperfine_a.is_finite() && self.hyperfine_a > 0.0) {
            return Err(AtomError::BadHyperfine(self.hyperfine_a));
        }
        if !(self.b0_gauss.is_finite() && self.b0_gauss >= 0.0) {
            return Err(AtomError::BadField(self.b0_gauss));
        }
        if !(self.gamma_a.is_finite() && self.gamma_b.is_finite()) {
            return Err(AtomError::BadGamma);
        }
        let zeeman = self.b0_gauss * self.gamma_a.abs().max(self.gamma_b.abs());
        if zeeman > 0.0 && self.hyperfine_a / zeeman < 10.0 {
            log::warn!("hyperfine/Zeeman ratio {:.3} < 10: outside the weak-field regime", self.hyperfine_a / zeeman);
        }
        Ok(())
    }
}

impl Default for AtomParams {
    fn default() -> Self {
        AtomParams {
            hyperfine_a: TWO_PI * Self::YB171_HYPERFINE_HZ,
            b0_gauss: Self::B0_GAUSS,
            gamma_a: TWO_PI * Self::YB171_NUCLEAR_GAMMA_HZ_PER_GAUSS,
            gamma_b: TWO_PI * Self::ELECTRON_GAMMA_HZ_PER_GAUSS,
            omega0: TWO_PI * Self::OMEGA0_HZ,
        }
    }
}

/// H_f = A I_a·I_b − B₀(γ_a I_{a,z}⊗I + γ_b I⊗I_{b,z}) in the zz basis.
pub fn free_hamiltonian(p: &AtomParams) -> Mat4 {
    let id = Mat2::identity();
    let [x, y, z] = spin::vector();
    let hyperfine = tensor(&x, &x) + tensor(&y, &y) + tensor(&z, &z);
    let zeeman = tensor(&z, &id).scale_real(p.gamma_a) + tensor(&id, &z).scale_real(p.gamma_b);
    hyperfine.scale_real(p.hyperfine_a) - zeeman.scale_real(p.b0_gauss)
}

/// Energies and the number↔zz mapping for one set of atom parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    /// E₁..E₄ (rad/s), indexed like the number basis.
    pub energies: [f64; 4],
    /// Mixing angle θ = 2 tan⁻¹ λ.
    pub theta: f64,
    pub lambda: f64,
    /// R with R|k⟩_n = |k⟩_zz.
    pub r: Mat4,
}

/// The analytic mapping operator for mixing angle `theta`.
pub fn mapping_operator(theta: f64) -> Mat4 {
    let (s, c) = (theta / 2.0).sin_cos();
    Mat4::from_real([[1.0, 0.0, 0.0, 0.0], [0.0, c, s, 0.0], [0.0, -s, c, 0.0], [0.0, 0.0, 0.0, 1.0]])
}

pub fn eigensystem(p: &AtomParams) -> Result<EigenSystem, AtomError> {
    if p.hyperfine_a == 0.0 {
        return Err(AtomError::DegenerateHyperfine);
    }
    p.validate()?;
    let (a, b0) = (p.hyperfine_a, p.b0_gauss);
    let (ga, gb) = (p.gamma_a, p.gamma_b);
    let root = (a * a + b0 * b0 * ga * ga + b0 * b0 * gb * gb - 2.0 * b0 * b0 * ga * gb).sqrt();
    let lambda = (-b0 * ga + b0 * gb - root) / a;
    let theta = 2.0 * lambda.atan();
    let r = mapping_operator(theta);
    // Energies are read off Rᵀ H R so that the labels follow the analytic
    // columns of R, including at the degenerate B₀ = 0 point.
    let h_number = r.transpose() * free_hamiltonian(p) * r;
    let energies = h_number.diagonal().map(|z| z.re);
    Ok(EigenSystem { energies, theta, lambda, r })
}

impl EigenSystem {
    /// |E_u − E_v| for 1-based level labels.
    pub fn transition_frequency(&self, u: usize, v: usize) -> f64 {
        (self.energies[u - 1] - self.energies[v - 1]).abs()
    }

    /// H_f written in the number basis.
    pub fn number_hamiltonian(&self) -> Mat4 {
        Mat4::diag_real(self.energies)
    }
}

/// Conversion between number- and zz-basis representations:
/// kets map as |ψ⟩_zz = R|ψ⟩_n and operators as M_zz = R M_n Rᵀ.
pub trait ChangeBasis: Sized {
    fn basis_tag(&self) -> BasisTag;

    #[doc(hidden)]
    fn map(&self, m: &Mat4, to: BasisTag) -> Self;

    /// Fails if the object already carries the target tag.
    fn change_basis(&self, to: BasisTag, r: &Mat4) -> Result<Self, AtomError> {
        let from = self.basis_tag();
        if from == to {
            return Err(AtomError::SameBasis(to));
        }
        let m = match to {
            BasisTag::Zz => *r,
            BasisTag::Number => r.transpose(),
        };
        Ok(self.map(&m, to))
    }

    /// Like `change_basis`, but a no-op when already in `to`.
    fn in_basis(&self, to: BasisTag, r: &Mat4) -> Self
    where
        Self: Clone,
    {
        self.change_basis(to, r).unwrap_or_else(|_| self.clone())
    }
}

impl ChangeBasis for Ket {
    fn basis_tag(&self) -> BasisTag {
        self.basis()
    }

    fn map(&self, m: &Mat4, to: BasisTag) -> Self {
        Ket::with_amplitudes(m.apply(self.amplitudes()), to)
    }
}

impl ChangeBasis for DensityMatrix {
    fn basis_tag(&self) -> BasisTag {
        self.basis()
    }

    fn map(&self, m: &Mat4, to: BasisTag) -> Self {
        DensityMatrix::from_parts(*m * *self.matrix() * m.transpose(), to)
    }
}
