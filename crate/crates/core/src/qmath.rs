//! Small dense complex linear algebra for the 2×2 single-spin and 4×4
//! two-spin spaces.
//!
//! Matrices are fixed-size and stack allocated. Hermitian problems are solved
//! with a cyclic complex Jacobi sweep, which is exact to rounding at these
//! sizes, and matrix exponentials of Hermitian generators are built from the
//! resulting eigensystem.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{BasisTag, DensityMatrix, StateError};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances shared by the whole crate.
///
/// Hermiticity and reconstruction checks are relative to `max(1, max|entry|)`
/// so that Hamiltonians in rad/s (entries ~1e10) are judged on the same
/// footing as dimensionless density matrices.
pub mod tol {
    /// Hermiticity of generators and states.
    pub const HERMITIAN: f64 = 1e-10;
    /// ‖U†U − I‖_max for unitaries.
    pub const UNITARITY: f64 = 1e-10;
    /// ‖h − VEV†‖_max for eigendecompositions.
    pub const RECONSTRUCTION: f64 = 1e-9;
    /// |Tr ρ − 1| for density matrices.
    pub const TRACE: f64 = 1e-10;
    /// Smallest eigenvalue accepted as PSD without projection.
    pub const PSD_FLOOR: f64 = -1e-10;
    /// |‖ψ‖² − 1| for state vectors.
    pub const NORM: f64 = 1e-10;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max |h - h†| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("Jacobi iteration did not converge (off-diagonal norm {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Square complex matrix of fixed dimension, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMat<const N: usize>(#[serde(with = "serde_mat")] pub [[C64; N]; N]);

pub type Mat2 = CMat<2>;
pub type Mat4 = CMat<4>;

/// Complex column vector of fixed dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CVec<const N: usize>(pub [C64; N]);

pub type Vec2 = CVec<2>;
pub type Vec4 = CVec<4>;

impl<const N: usize> CMat<N> {
    pub fn zeros() -> Self {
        CMat([[ZERO; N]; N])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for k in 0..N {
            m.0[k][k] = ONE;
        }
        m
    }

    pub fn from_real(rows: [[f64; N]; N]) -> Self {
        let mut m = Self::zeros();
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                m.0[i][j] = C64::new(x, 0.0);
            }
        }
        m
    }

    pub fn diag_real(d: [f64; N]) -> Self {
        let mut m = Self::zeros();
        for (k, &x) in d.iter().enumerate() {
            m.0[k][k] = C64::new(x, 0.0);
        }
        m
    }

    pub fn diag(d: [C64; N]) -> Self {
        let mut m = Self::zeros();
        for (k, z) in d.into_iter().enumerate() {
            m.0[k][k] = z;
        }
        m
    }

    /// |u⟩⟨v| for basis indices `u`, `v`.
    pub fn unit(u: usize, v: usize) -> Self {
        let mut m = Self::zeros();
        m.0[u][v] = ONE;
        m
    }

    pub fn outer(a: &CVec<N>, b: &CVec<N>) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = a.0[i] * b.0[j].conj();
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = self.0[j][i];
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|z| *z = z.conj());
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|z| *z *= s);
        m
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..N).map(|k| self.0[k][k]).sum()
    }

    pub fn diagonal(&self) -> [C64; N] {
        std::array::from_fn(|k| self.0[k][k])
    }

    pub fn apply(&self, v: &CVec<N>) -> CVec<N> {
        CVec(std::array::from_fn(|i| (0..N).map(|j| self.0[i][j] * v.0[j]).sum()))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// max |h − h†|.
    pub fn hermitian_deviation(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol * self.max_abs().max(1.0)
    }

    /// ‖U†U − I‖_max.
    pub fn unitarity_deviation(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Self::identity())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale_real(0.5)
    }

    fn check_hermitian(&self) -> Result<(), LinalgError> {
        if !self.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        if !self.is_hermitian(tol::HERMITIAN) {
            return Err(LinalgError::NotHermitian { deviation: self.hermitian_deviation() });
        }
        Ok(())
    }
}

impl<const N: usize> Index<(usize, usize)> for CMat<N> {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for CMat<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl<const N: usize> Mul for CMat<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    m.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        m
    }
}

impl<const N: usize> Add for CMat<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] += rhs.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for CMat<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] -= rhs.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Neg for CMat<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale_real(-1.0)
    }
}

impl<const N: usize> CVec<N> {
    pub fn zeros() -> Self {
        CVec([ZERO; N])
    }

    pub fn basis(k: usize) -> Self {
        let mut v = Self::zeros();
        v.0[k] = ONE;
        v
    }

    pub fn from_real(x: [f64; N]) -> Self {
        CVec(x.map(|r| C64::new(r, 0.0)))
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        CVec(self.0.map(|z| z / n))
    }

    pub fn scale(&self, s: C64) -> Self {
        CVec(self.0.map(|z| z * s))
    }

    /// |⟨self|other⟩|², insensitive to global phase.
    pub fn overlap(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }
}

impl<const N: usize> Index<usize> for CVec<N> {
    type Output = C64;
    fn index(&self, k: usize) -> &C64 {
        &self.0[k]
    }
}

/// Kronecker product a ⊗ b in ↑↑, ↑↓, ↓↑, ↓↓ ordering.
pub fn tensor(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m.0[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                }
            }
        }
    }
    m
}

pub fn tensor_vec(a: &Vec2, b: &Vec2) -> Vec4 {
    CVec(std::array::from_fn(|k| a.0[k / 2] * b.0[k % 2]))
}

/// Spin-1/2 angular momentum operators with ħ = 1, and the I_z eigenkets.
pub mod spin {
    use super::*;

    pub fn ix() -> Mat2 {
        Mat2::from_real([[0.0, 0.5], [0.5, 0.0]])
    }

    pub fn iy() -> Mat2 {
        CMat([[ZERO, C64::new(0.0, -0.5)], [C64::new(0.0, 0.5), ZERO]])
    }

    pub fn iz() -> Mat2 {
        Mat2::diag_real([0.5, -0.5])
    }

    pub fn up() -> Vec2 {
        Vec2::basis(0)
    }

    pub fn down() -> Vec2 {
        Vec2::basis(1)
    }

    /// Components (I_x, I_y, I_z).
    pub fn vector() -> [Mat2; 3] {
        [ix(), iy(), iz()]
    }
}

/// Which spin of the pair is traced out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

/// Reduced state of one spin after tracing out `traced`.
pub fn partial_trace(rho: &DensityMatrix, traced: Subsystem) -> Result<Mat2, StateError> {
    if rho.basis() != BasisTag::Zz {
        return Err(StateError::WrongBasis { expected: BasisTag::Zz, found: rho.basis() });
    }
    let m = rho.matrix();
    let mut out = Mat2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            out.0[i][j] = (0..2)
                .map(|k| match traced {
                    Subsystem::B => m.0[2 * i + k][2 * j + k],
                    Subsystem::A => m.0[2 * k + i][2 * k + j],
                })
                .sum();
        }
    }
    Ok(out)
}

/// Hermitian eigensystem: ascending real eigenvalues and the matching
/// orthonormal eigenvectors stored as matrix columns.
#[derive(Clone, Copy, Debug)]
pub struct Eigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: CMat<N>,
}

impl<const N: usize> Eigen<N> {
    pub fn vector(&self, k: usize) -> CVec<N> {
        CVec(std::array::from_fn(|i| self.vectors.0[i][k]))
    }

    /// V f(E) V†.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> CMat<N> {
        let d = CMat::diag(self.values.map(f));
        self.vectors * d * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMat<N> {
        self.map(|e| C64::new(e, 0.0))
    }
}

const MAX_SWEEPS: usize = 64;

/// Rotates `v` so that its largest-magnitude component is real and positive.
/// Ties within 1e-12 resolve to the lowest index.
pub fn fix_phase<const N: usize>(v: &mut CVec<N>) {
    let max = v.0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let k = v.0.iter().position(|z| z.norm() >= max - 1e-12 * max).unwrap_or(0);
    let phase = v.0[k].conj() / v.0[k].norm();
    for z in v.0.iter_mut() {
        *z *= phase;
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
pub fn eig_hermitian<const N: usize>(h: &CMat<N>) -> Result<Eigen<N>, LinalgError> {
    h.check_hermitian()?;
    let mut a = h.hermitian_part();
    let mut v = CMat::<N>::identity();
    let scale = a.frobenius().max(f64::MIN_POSITIVE);

    let off = |a: &CMat<N>| -> f64 {
        let mut s = 0.0;
        for p in 0..N {
            for q in p + 1..N {
                s += a.0[p][q].norm_sqr();
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off(&a) <= f64::EPSILON * 1e-2 * scale {
            converged = true;
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                let apq = a.0[p][q];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE * 1e4 {
                    continue;
                }
                let phase = apq / mag;
                let zeta = (a.0[q][q].re - a.0[p][p].re) / (2.0 * mag);
                let t = if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let mut w = CMat::<N>::identity();
                w.0[p][p] = C64::new(c, 0.0);
                w.0[q][q] = C64::new(c, 0.0);
                w.0[p][q] = phase * s;
                w.0[q][p] = -phase.conj() * s;
                a = w.adjoint() * a * w;
                a.0[p][q] = ZERO;
                a.0[q][p] = ZERO;
                v = v * w;
            }
        }
    }
    if !converged {
        let residual = off(&a);
        // A final sweep may land below threshold without another check.
        if residual > 1e3 * f64::EPSILON * scale {
            return Err(LinalgError::NoConvergence { residual });
        }
    }

    let mut order: [usize; N] = std::array::from_fn(|k| k);
    order.sort_by(|&x, &y| a.0[x][x].re.total_cmp(&a.0[y][y].re));
    let values = order.map(|k| a.0[k][k].re);
    let mut vectors = CMat::<N>::zeros();
    for (col, &k) in order.iter().enumerate() {
        let mut vec: CVec<N> = CVec(std::array::from_fn(|i| v.0[i][k]));
        fix_phase(&mut vec);
        for i in 0..N {
            vectors.0[i][col] = vec.0[i];
        }
    }
    Ok(Eigen { values, vectors })
}

/// exp(−i h t) for Hermitian h.
pub fn expm_hermitian<const N: usize>(h: &CMat<N>, t: f64) -> Result<CMat<N>, LinalgError> {
    let eig = eig_hermitian(h)?;
    Ok(eig.map(|e| C64::from_polar(1.0, -e * t)))
}

/// Principal square root of a positive semidefinite Hermitian matrix;
/// negative eigenvalues from rounding are clipped to zero.
pub fn sqrtm_psd<const N: usize>(h: &CMat<N>) -> Result<CMat<N>, LinalgError> {
    let eig = eig_hermitian(h)?;
    Ok(eig.map(|e| C64::new(e.max(0.0).sqrt(), 0.0)))
}

mod serde_mat {
    use super::C64;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    // Each entry as [re, im].
    pub fn serialize<S: Serializer, const N: usize>(m: &[[C64; N]; N], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = m.iter().map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[[C64; N]; N], D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        if rows.len() != N || rows.iter().any(|r| r.len() != N) {
            return Err(D::Error::custom(format!("expected a {N}x{N} matrix")));
        }
        let mut m = [[C64::new(0.0, 0.0); N]; N];
        for (i, row) in rows.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                m[i][j] = C64::new(z[0], z[1]);
            }
        }
        Ok(m)
    }
}
