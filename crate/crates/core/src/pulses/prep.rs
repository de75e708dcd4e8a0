//! Three-pulse preparation |3⟩ → R(θ)ᵀ (½, ½, ½, ½).
//!
//! The sequence drives 3↔4, then 1↔3, then 2↔3. Each angle is found by
//! bisection on amplitudes produced by [`pulse_unitary`], and each phase is
//! chosen so the transferred amplitude lands on the target's phase.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{pulse_unitary, AngleConvention, Pulse, PulseError, PulseEvent, Transition};
use crate::atom::mapping_operator;
use crate::qmath::Vec4;

const BISECTION_STEPS: usize = 200;
const MIN_OVERLAP: f64 = 1.0 - 1e-9;

/// Number-basis amplitudes of the product state |+⟩|+⟩ for mixing angle θ.
pub fn prep_target(theta: f64) -> Vec4 {
    mapping_operator(theta).transpose().apply(&Vec4::from_real([0.5; 4]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepSolution {
    pub theta: f64,
    pub convention: AngleConvention,
    /// Pulses on 3-4, 1-3 and 2-3, in order.
    pub pulses: [Pulse; 3],
    /// 1 − |⟨target|prepared⟩|².
    pub infidelity: f64,
}

impl PrepSolution {
    pub fn alpha34(&self) -> f64 {
        self.pulses[0].angle
    }

    pub fn alpha13(&self) -> f64 {
        self.pulses[1].angle
    }

    pub fn alpha23(&self) -> f64 {
        self.pulses[2].angle
    }

    pub fn events(&self) -> Vec<PulseEvent> {
        self.pulses.iter().copied().map(PulseEvent::Pulse).collect()
    }

    /// The prepared state, starting from |3⟩.
    pub fn prepared(&self) -> Vec4 {
        self.pulses.iter().fold(Vec4::basis(2), |psi, p| pulse_unitary(p, self.convention).apply(&psi))
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let increasing = f(hi) > f(lo);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn apply(p: &Pulse, conv: AngleConvention, psi: &Vec4) -> Vec4 {
    pulse_unitary(p, conv).apply(psi)
}

/// Solves for the preparation pulses. Deterministic in θ.
pub fn solve_prep(theta: f64, convention: AngleConvention) -> Result<PrepSolution, PulseError> {
    if !(theta > -PI && theta < 0.0) {
        return Err(PulseError::BadMixingAngle(theta));
    }
    let target = prep_target(theta);
    let [t1, t2, t3, t4] = target.0;
    let half = convention.angle_for(PI);
    let full = convention.angle_for(2.0 * PI);
    let pulse = |t, angle, phase| Pulse::with_total_phase(t, angle, phase);

    // 3↔4: set |a₄|, then rotate its phase onto the target.
    let psi = Vec4::basis(2);
    let trial =
        |t: Transition, angle: f64, psi: &Vec4| apply(&Pulse::new(t, super::Axis::PlusY, angle), convention, psi);
    let a34 = bisect(|a| trial(Transition::T34, a, &psi).0[3].norm() - t4.norm(), 0.0, half);
    let p34 = pulse(Transition::T34, a34, psi.0[2].arg() - t4.arg());
    let psi = apply(&p34, convention, &psi);

    // 1↔3: set |a₁|; the pulse writes −e^{iφ} sin(α/2) a₃ into level 1.
    let a13 = bisect(|a| trial(Transition::T13, a, &psi).0[0].norm() - t1.norm(), 0.0, half);
    let p13 = pulse(Transition::T13, a13, t1.arg() - psi.0[2].arg() - PI);
    let psi = apply(&p13, convention, &psi);

    // 2↔3: the remaining |3⟩ amplitude must drop to a₃ = t₃, which may be
    // negative, so the search runs over the full turn.
    let a3 = psi.0[2];
    let unit = a3 / a3.norm();
    let remaining = |a: f64| (trial(Transition::T23, a, &psi).0[2] * unit.conj()).re - t3.re;
    let a23 = bisect(remaining, 0.0, full * (1.0 - f64::EPSILON));
    let p23 = pulse(Transition::T23, a23, t2.arg() - PI - a3.arg());
    let psi = apply(&p23, convention, &psi);

    let overlap = psi.inner(&target).norm_sqr();
    let infidelity = 1.0 - overlap;
    if overlap < MIN_OVERLAP || !overlap.is_finite() {
        return Err(PulseError::PrepNoConvergence { residual: infidelity });
    }
    log::debug!(
        "prep solved at θ={theta}: α34={a34}, α13={a13}, α23={a23}; closed-form α23 = {}",
        reference_alpha23(theta)
    );
    Ok(PrepSolution { theta, convention, pulses: [p34, p13, p23], infidelity })
}

/// A published closed form for the 2↔3 angle,
/// 2 cos⁻¹{−(√2/2)[1 − tan⁻¹(θ/2)] / [cos(θ/2) tan⁻¹(θ/2) + sin(θ/2)]}.
/// It evaluates to 0 at θ = −π/2 where a π pulse is required, so it is only
/// reported alongside the numeric solution.
pub fn reference_alpha23(theta: f64) -> f64 {
    let at = (theta / 2.0).atan();
    let ratio = -(2f64.sqrt() / 2.0) * (1.0 - at) / ((theta / 2.0).cos() * at + (theta / 2.0).sin());
    2.0 * ratio.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::super::Axis;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_pi_mixing_gives_textbook_angles() {
        let s = solve_prep(-PI / 2.0, AngleConvention::Bloch).unwrap();
        assert!((s.alpha34() - PI / 3.0).abs() < 1e-12);
        assert!((s.alpha13() - 2.0 * (1.0 / 3f64.sqrt()).asin()).abs() < 1e-12);
        assert!((s.alpha23() - PI).abs() < 1e-12);
        assert_eq!(s.pulses.map(|p| p.axis), [Axis::PlusY, Axis::MinusY, Axis::MinusY]);
        // Amplitude bookkeeping: (1/2, √2/2, 0, 1/2).
        let expected = Vec4::from_real([0.5, 2f64.sqrt() / 2.0, 0.0, 0.5]);
        let psi = s.prepared();
        for k in 0..4 {
            assert!((psi.0[k] - expected.0[k]).norm() < 1e-12, "level {}", k + 1);
        }
    }

    #[test]
    fn literal_convention_halves_angles() {
        let b = solve_prep(-1.2, AngleConvention::Bloch).unwrap();
        let l = solve_prep(-1.2, AngleConvention::Literal).unwrap();
        for k in 0..3 {
            assert!((2.0 * l.pulses[k].angle - b.pulses[k].angle).abs() < 1e-12);
        }
        assert!(l.infidelity < 1e-9);
    }

    #[test]
    fn closed_form_alpha23_vanishes_at_half_pi() {
        assert!(reference_alpha23(-PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range_theta() {
        assert!(solve_prep(0.0, AngleConvention::Bloch).is_err());
        assert!(solve_prep(-PI, AngleConvention::Bloch).is_err());
        assert!(solve_prep(f64::NAN, AngleConvention::Bloch).is_err());
    }

    #[test]
    fn solution_is_deterministic() {
        let a = solve_prep(-1.5695, AngleConvention::Bloch).unwrap();
        let b = solve_prep(-1.5695, AngleConvention::Bloch).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn any_mixing_angle_reaches_target(theta in -3.1f64..-0.01) {
            let s = solve_prep(theta, AngleConvention::Bloch).unwrap();
            let psi = s.prepared();
            let overlap = psi.inner(&prep_target(theta)).norm_sqr();
            prop_assert!(overlap >= 1.0 - 1e-9);
            for p in s.pulses {
                prop_assert!(p.validate().is_ok());
            }
        }
    }
}
