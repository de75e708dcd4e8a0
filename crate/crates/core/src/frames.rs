//! Rotating frames with piecewise-constant per-level detunings.
//!
//! A frame is described by a [`FrameSchedule`]: contiguous time segments,
//! each carrying four level frequencies δ₁..δ₄. The frame operator is
//! O(t) = exp[i Σ_k Φ_k(t) |k⟩⟨k|] with Φ_k(t) = ∫₀ᵗ δ_k.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{Mat4, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("time {t} s is outside the schedule domain [{start}, {end}] s")]
    OutsideSchedule { t: f64, start: f64, end: f64 },
    #[error("segment duration must be finite and non-negative (got {0})")]
    BadDuration(f64),
    #[error("interaction time must be non-negative (got {0})")]
    NegativeTime(f64),
    #[error("schedule has no segments")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Prep,
    Interact,
    Readout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: f64,
    pub end: f64,
    /// δ₁..δ₄ in rad/s.
    pub delta: [f64; 4],
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Contiguous, non-overlapping piecewise-constant detunings starting at t = 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameSchedule {
    segments: Vec<Segment>,
}

impl FrameSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// One segment of length `duration` with fixed δ.
    pub fn constant(delta: [f64; 4], duration: f64) -> Result<Self, FrameError> {
        let mut s = Self::new();
        s.push(SegmentKind::Prep, duration, delta)?;
        Ok(s)
    }

    /// Appends a segment starting where the previous one ended.
    pub fn push(&mut self, kind: SegmentKind, duration: f64, delta: [f64; 4]) -> Result<(), FrameError> {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(FrameError::BadDuration(duration));
        }
        let start = self.end();
        self.segments.push(Segment { kind, start, end: start + duration, delta });
        Ok(())
    }

    /// Prep/readout segment: the frame follows the free evolution, δ_k = E_k.
    pub fn push_free(&mut self, kind: SegmentKind, duration: f64, energies: [f64; 4]) -> Result<(), FrameError> {
        self.push(kind, duration, energies)
    }

    /// Interact segment: δ₁,₄ = E₁,₄ − Δ and δ₂,₃ = E₂,₃.
    pub fn push_interact(&mut self, duration: f64, energies: [f64; 4], detuning: f64) -> Result<(), FrameError> {
        let [e1, e2, e3, e4] = energies;
        self.push(SegmentKind::Interact, duration, [e1 - detuning, e2, e3, e4 - detuning])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    fn check_time(&self, t: f64) -> Result<(), FrameError> {
        if self.segments.is_empty() {
            return Err(FrameError::Empty);
        }
        let end = self.end();
        if !(0.0..=end).contains(&t) {
            return Err(FrameError::OutsideSchedule { t, start: 0.0, end });
        }
        Ok(())
    }

    /// δ_k at time t; at a boundary the later segment wins.
    pub fn delta_at(&self, t: f64) -> Result<[f64; 4], FrameError> {
        self.check_time(t)?;
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.start <= t && s.duration() > 0.0)
            .or(self.segments.last())
            .ok_or(FrameError::Empty)?;
        Ok(seg.delta)
    }

    /// Φ_k(t) = ∫₀ᵗ δ_k.
    pub fn phases(&self, t: f64) -> Result<[f64; 4], FrameError> {
        self.check_time(t)?;
        let mut phi = [0.0; 4];
        for seg in &self.segments {
            if seg.start >= t {
                break;
            }
            let dt = seg.end.min(t) - seg.start;
            for (p, d) in phi.iter_mut().zip(seg.delta) {
                *p += d * dt;
            }
        }
        Ok(phi)
    }
}

pub fn frame_operator(s: &FrameSchedule, t: f64) -> Result<Mat4, FrameError> {
    let phi = s.phases(t)?;
    Ok(Mat4::diag(phi.map(|p| C64::from_polar(1.0, p))))
}

/// O h O† + iȮO†, which for a diagonal O is O h O† − Σ δ_k |k⟩⟨k|.
pub fn transform_hamiltonian(h: &Mat4, s: &FrameSchedule, t: f64) -> Result<Mat4, FrameError> {
    let phi = s.phases(t)?;
    let delta = s.delta_at(t)?;
    let mut out = *h;
    for j in 0..4 {
        for k in 0..4 {
            if j != k {
                out.0[j][k] *= C64::from_polar(1.0, phi[j] - phi[k]);
            }
        }
        out.0[j][j] -= delta[j];
    }
    Ok(out)
}

/// exp[−i(Δ|1⟩⟨1| + Δ|4⟩⟨4|)τ] in the number basis.
pub fn interaction_unitary(delta: f64, tau: f64) -> Result<Mat4, FrameError> {
    if tau < 0.0 || tau.is_nan() {
        return Err(FrameError::NegativeTime(tau));
    }
    let p = C64::from_polar(1.0, -delta * tau);
    Ok(Mat4::diag([p, C64::new(1.0, 0.0), C64::new(1.0, 0.0), p]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{eigensystem, free_hamiltonian, AtomParams};
    use crate::qmath::{expm_hermitian, spin, tensor};
    use std::f64::consts::PI;

    fn three_segment() -> FrameSchedule {
        let mut s = FrameSchedule::new();
        s.push(SegmentKind::Prep, 1.5e-6, [1.0e6, -2.0e6, 0.5e6, 3.0e6]).unwrap();
        s.push_interact(2.0e-6, [1.0e6, -2.0e6, 0.5e6, 3.0e6], 0.785e6).unwrap();
        s.push(SegmentKind::Readout, 0.7e-6, [4.0e6, 0.0, -1.0e6, 2.0e6]).unwrap();
        s
    }

    #[test]
    fn zero_detuning_gives_identity() {
        let s = FrameSchedule::constant([0.0; 4], 1.0).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(frame_operator(&s, t).unwrap(), Mat4::identity());
        }
    }

    #[test]
    fn constant_detuning_is_diagonal_phase() {
        let d = [1.0, -2.0, 3.5, 0.25];
        let s = FrameSchedule::constant(d, 2.0).unwrap();
        let o = frame_operator(&s, 1.3).unwrap();
        for (k, dk) in d.into_iter().enumerate() {
            assert!((o.0[k][k] - C64::from_polar(1.0, dk * 1.3)).norm() < 1e-15);
        }
    }

    #[test]
    fn piecewise_phases_match_numeric_integral() {
        let s = three_segment();
        let t = 3.9e-6;
        // Midpoint rule on a grid fine enough that segment boundaries land on
        // cell edges except at t itself.
        let n = 39_000;
        let h = t / n as f64;
        let mut oracle = [0.0; 4];
        for i in 0..n {
            let d = s.delta_at((i as f64 + 0.5) * h).unwrap();
            for k in 0..4 {
                oracle[k] += d[k] * h;
            }
        }
        let phi = s.phases(t).unwrap();
        for k in 0..4 {
            assert!((phi[k] - oracle[k]).abs() < 1e-9, "level {k}: {} vs {}", phi[k], oracle[k]);
        }
        let o = frame_operator(&s, t).unwrap();
        assert!(o.is_unitary(1e-14));
    }

    #[test]
    fn outside_domain_is_an_error() {
        let s = three_segment();
        assert!(matches!(frame_operator(&s, 5e-6), Err(FrameError::OutsideSchedule { .. })));
        assert!(matches!(frame_operator(&s, -1e-9), Err(FrameError::OutsideSchedule { .. })));
        assert_eq!(FrameSchedule::new().phases(0.0), Err(FrameError::Empty));
        assert!(FrameSchedule::new().push(SegmentKind::Prep, -1.0, [0.0; 4]).is_err());
    }

    #[test]
    fn free_frame_cancels_free_hamiltonian() {
        let es = eigensystem(&AtomParams::default()).unwrap();
        let mut s = FrameSchedule::new();
        s.push_free(SegmentKind::Prep, 1e-6, es.energies).unwrap();
        let h = es.number_hamiltonian();
        assert_eq!(transform_hamiltonian(&h, &s, 0.4e-6).unwrap(), Mat4::zeros());
    }

    #[test]
    fn interact_frame_leaves_detuning_on_outer_levels() {
        let es = eigensystem(&AtomParams::default()).unwrap();
        let delta = 0.785e6;
        let mut s = FrameSchedule::new();
        s.push_interact(2e-6, es.energies, delta).unwrap();
        let h = transform_hamiltonian(&es.number_hamiltonian(), &s, 1e-6).unwrap();
        let expected = Mat4::diag_real([delta, 0.0, 0.0, delta]);
        // Residual is rounding of E_k − (E_k − Δ) at |E| ~ 1e10 rad/s.
        assert!(h.max_abs_diff(&expected) < 1e-5);
        assert!(h.is_hermitian(1e-12));
    }

    #[test]
    fn transform_without_detuning_is_identity_map() {
        let h = free_hamiltonian(&AtomParams::default());
        let s = FrameSchedule::constant([0.0; 4], 1.0).unwrap();
        assert_eq!(transform_hamiltonian(&h, &s, 0.5).unwrap(), h);
    }

    #[test]
    fn interaction_unitary_examples() {
        assert_eq!(interaction_unitary(3.0, 0.0).unwrap(), Mat4::identity());
        let u = interaction_unitary(PI / 2.0, 1.0).unwrap();
        let expected = Mat4::diag([C64::new(0.0, -1.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, -1.0)]);
        assert!(u.max_abs_diff(&expected) < 1e-15);
        assert!(matches!(interaction_unitary(1.0, -1e-9), Err(FrameError::NegativeTime(_))));
    }

    fn zz_coupling_form(delta: f64, tau: f64) -> Mat4 {
        let zz = tensor(&spin::iz(), &spin::iz());
        expm_hermitian(&zz, 2.0 * delta * tau).unwrap().scale(C64::from_polar(1.0, -delta * tau / 2.0))
    }

    #[test]
    fn interaction_unitary_grid_invariants() {
        let es = eigensystem(&AtomParams::default()).unwrap();
        for i in 0..20 {
            let delta = 2.0 * PI * 1e6 * i as f64 / 19.0;
            for j in 0..20 {
                let tau = 1e-4 * j as f64 / 19.0;
                let u = interaction_unitary(delta, tau).unwrap();
                assert!(u.is_unitary(1e-14));
                for r in 0..4 {
                    for c in 0..4 {
                        if r != c {
                            assert_eq!(u.0[r][c], C64::new(0.0, 0.0));
                        }
                    }
                }
                let u_zz = es.r * u * es.r.transpose();
                let diff = u_zz.max_abs_diff(&zz_coupling_form(delta, tau));
                assert!(diff < 1e-11, "Δ={delta} τ={tau}: {diff}");
            }
        }
    }
}
