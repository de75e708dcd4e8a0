//! Two magnetic dipoles coupled through the free-space electromagnetic field.
//!
//! Provides the spectral density J(ω), the principal-value kernel K(Ω), the
//! symmetrized couplings G^(P) and G^(D), the time-local interaction H′_F on
//! the two-spin space, its near-field dipolar limit, and the memory kernel
//! D(s) = −i∫₀^∞ (dω/2π) J(ω) e^{−iωs} e^{−ω/ω_cut}.
//!
//! SI units throughout; Hamiltonians are returned in rad/s (divided by ħ).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gme::constants;
use crate::qmath::{spin, tensor, Mat2, Mat4, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("separation r must be positive and finite (got {0} m)")]
    BadSeparation(f64),
    #[error("r̂ must be a unit vector (|r̂| = {0})")]
    BadDirection(f64),
    #[error("cutoff frequency must be positive (got {0} rad/s)")]
    BadCutoff(f64),
    #[error("time lag s must be non-negative (got {0} s)")]
    NegativeLag(f64),
    #[error("quadrature did not converge: estimate {estimate}, error {error:e}")]
    NoConvergence { estimate: C64, error: f64 },
}

pub type Vec3 = [f64; 3];
type CVec3 = [C64; 3];

fn dot(a: &CVec3, b: &CVec3) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn real3(v: &Vec3) -> CVec3 {
    v.map(|x| C64::new(x, 0.0))
}

/// Geometry and constants shared by all kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Separation (m).
    pub r: f64,
    /// Unit vector from dipole 1 to dipole 2.
    pub rhat: Vec3,
    pub mu0: f64,
    pub c: f64,
}

impl Geometry {
    pub fn new(r: f64, rhat: Vec3) -> Self {
        Geometry { r, rhat, mu0: constants::MU0, c: constants::C }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(FieldError::BadSeparation(self.r));
        }
        let n = self.rhat.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(FieldError::BadDirection(n));
        }
        Ok(())
    }

    /// η = ωr/c.
    pub fn eta(&self, omega: f64) -> f64 {
        omega * self.r / self.c
    }

    fn prefactor(&self) -> f64 {
        self.mu0 / (4.0 * PI * self.r.powi(3))
    }

    /// (m₁·m₂, (m₁·r̂)(m₂·r̂)) for possibly complex moments.
    fn contractions(&self, m1: &CVec3, m2: &CVec3) -> (C64, C64) {
        let rhat = real3(&self.rhat);
        (dot(m1, m2), dot(m1, &rhat) * dot(m2, &rhat))
    }
}

/// Real dipole moments (A·m²) plus geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldKernelConfig {
    pub m1: Vec3,
    pub m2: Vec3,
    pub geometry: Geometry,
}

impl FieldKernelConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        self.geometry.validate()
    }

    fn contractions(&self) -> (C64, C64) {
        self.geometry.contractions(&real3(&self.m1), &real3(&self.m2))
    }
}

const SERIES_LIMIT: f64 = 0.5;

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// The two brackets of J: η² sin η + η cos η − sin η and
/// ⅓η² sin η + η cos η − sin η. Both start at O(η³) or higher, so small η
/// uses their Taylor series instead of the cancelling closed form.
pub fn j_brackets(eta: f64) -> (f64, f64) {
    if eta.abs() > SERIES_LIMIT {
        let (s, c) = eta.sin_cos();
        let common = eta * c - s;
        return (eta * eta * s + common, eta * eta * s / 3.0 + common);
    }
    let (mut a, mut b) = (0.0, 0.0);
    for k in 1..12u32 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let p = eta.powi(2 * k as i32 + 1);
        let tail = 1.0 / factorial(2 * k) - 1.0 / factorial(2 * k + 1);
        a += sign * p * (tail - 1.0 / factorial(2 * k - 1));
        b += sign * p * (tail - 1.0 / (3.0 * factorial(2 * k - 1)));
    }
    (a, b)
}

/// The two brackets of K: −η²cos η + η sin η + cos η and the ⅓ variant.
pub fn k_brackets(eta: f64) -> (f64, f64) {
    let (s, c) = eta.sin_cos();
    let common = eta * s + c;
    (-eta * eta * c + common, -eta * eta * c / 3.0 + common)
}

fn j_complex(omega: f64, g: &Geometry, m1: &CVec3, m2: &CVec3) -> C64 {
    let (par, proj) = g.contractions(m1, m2);
    let (a, b) = j_brackets(g.eta(omega));
    (par * a - proj * 3.0 * b) * (2.0 * g.prefactor())
}

fn k_complex(omega: f64, g: &Geometry, m1: &CVec3, m2: &CVec3) -> C64 {
    let (par, proj) = g.contractions(m1, m2);
    let (a, b) = k_brackets(g.eta(omega));
    (par * a - proj * 3.0 * b) * g.prefactor()
}

/// J(ω) = (μ₀/2πr³){m₁·m₂[…] − 3(m₁·r̂)(m₂·r̂)[…]}. The brackets are odd in
/// η, so negative ω gives −J(|ω|).
pub fn spectral_density_j(omega: f64, cfg: &FieldKernelConfig) -> Result<f64, FieldError> {
    cfg.validate()?;
    let (par, proj) = cfg.contractions();
    let (a, b) = j_brackets(cfg.geometry.eta(omega));
    Ok(2.0 * cfg.geometry.prefactor() * (par.re * a - 3.0 * proj.re * b))
}

/// K(Ω) = (μ₀/4πr³){m₁·m₂[…] − 3(m₁·r̂)(m₂·r̂)[…]}, even in Ω.
pub fn principal_kernel_k(omega: f64, cfg: &FieldKernelConfig) -> Result<f64, FieldError> {
    cfg.validate()?;
    let (par, proj) = cfg.contractions();
    let (a, b) = k_brackets(cfg.geometry.eta(omega));
    Ok(cfg.geometry.prefactor() * (par.re * a - 3.0 * proj.re * b))
}

/// Two spin-½ magnetic dipoles m̂_i = γ_i ħ I_i with level splittings ω_i,
/// E_↑ − E_↓ = ω_i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipolePair {
    /// Gyromagnetic ratios (rad/s/T).
    pub gamma: [f64; 2],
    /// Level splittings (rad/s).
    pub omega: [f64; 2],
    pub geometry: Geometry,
    pub hbar: f64,
}

impl DipolePair {
    pub fn new(gamma: [f64; 2], omega: [f64; 2], geometry: Geometry) -> Self {
        DipolePair { gamma, omega, geometry, hbar: constants::HBAR }
    }

    /// m^{xy} = γħ⟨x|I|y⟩, indexed [x][y] with ↑ = 0.
    pub fn moments(&self, i: usize) -> [[CVec3; 2]; 2] {
        let ops = spin::vector();
        let g = self.gamma[i] * self.hbar;
        std::array::from_fn(|x| std::array::from_fn(|y| ops.each_ref().map(|o| o.0[x][y] * g)))
    }

    /// Ω^{yx} = E_y − E_x.
    fn level_gap(&self, i: usize, y: usize, x: usize) -> f64 {
        let e = |k: usize| if k == 0 { self.omega[i] / 2.0 } else { -self.omega[i] / 2.0 };
        e(y) - e(x)
    }
}

/// Coupling tables indexed by (2y + x, 2u + v), in joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub principal: [[C64; 4]; 4],
    pub dissipative: [[C64; 4]; 4],
}

/// G^(P)_{yx,uv} = ½[K_{1→2}(Ω₁^{yx}) + K_{2→1}(Ω₂^{uv})] and
/// G^(D)_{yx,uv} = (1/4i)[J_{1→2}(Ω₁^{yx}) + J_{2→1}(Ω₂^{uv})], with the
/// bilinear products m₁^{yx}·m₂^{uv}.
pub fn couplings(pair: &DipolePair) -> Result<Couplings, FieldError> {
    pair.geometry.validate()?;
    let (m1, m2) = (pair.moments(0), pair.moments(1));
    let g = &pair.geometry;
    let mut out = Couplings { principal: [[C64::new(0.0, 0.0); 4]; 4], dissipative: [[C64::new(0.0, 0.0); 4]; 4] };
    let quarter_over_i = C64::new(0.0, -0.25);
    for (y, x, u, v) in (0..16).map(|k| (k >> 3 & 1, k >> 2 & 1, k >> 1 & 1, k & 1)) {
        let (a, b) = (&m1[y][x], &m2[u][v]);
        let (w1, w2) = (pair.level_gap(0, y, x), pair.level_gap(1, u, v));
        out.principal[2 * y + x][2 * u + v] = (k_complex(w1, g, a, b) + k_complex(w2, g, b, a)) * 0.5;
        out.dissipative[2 * y + x][2 * u + v] = (j_complex(w1, g, a, b) + j_complex(w2, g, b, a)) * quarter_over_i;
    }
    Ok(out)
}

/// H′_F = Σ (G^(P) + G^(D)) τ₁^{yx} τ₂^{uv} in rad/s on the zz basis
/// (spin 1 first). `dissipative` toggles the G^(D) part.
pub fn assemble_hf(pair: &DipolePair, dissipative: bool) -> Result<Mat4, FieldError> {
    let g = couplings(pair)?;
    let mut h = Mat4::zeros();
    for (y, x, u, v) in (0..16).map(|k| (k >> 3 & 1, k >> 2 & 1, k >> 1 & 1, k & 1)) {
        let mut coef = g.principal[2 * y + x][2 * u + v];
        if dissipative {
            coef += g.dissipative[2 * y + x][2 * u + v];
        }
        let op = tensor(&Mat2::unit(y, x), &Mat2::unit(u, v));
        h = h + op.scale(coef / pair.hbar);
    }
    Ok(h)
}

/// λ = −μ₀γ₁γ₂ħ/(4πr³), so that H_dd = λ[3(I₁·r̂)(I₂·r̂) − I₁·I₂] in rad/s.
pub fn dipolar_coefficient(pair: &DipolePair) -> f64 {
    -pair.geometry.prefactor() * pair.gamma[0] * pair.gamma[1] * pair.hbar
}

/// Near-field dipolar Hamiltonian (rad/s).
pub fn dipolar_hamiltonian(pair: &DipolePair) -> Mat4 {
    let ops = spin::vector();
    let n = pair.geometry.rhat;
    let along = (0..3).fold(Mat2::zeros(), |acc, k| acc + ops[k].scale_real(n[k]));
    let i1i2 = (0..3).fold(Mat4::zeros(), |acc, k| acc + tensor(&ops[k], &ops[k]));
    let proj = tensor(&along, &along);
    (proj.scale_real(3.0) - i1i2).scale_real(dipolar_coefficient(pair))
}

/// Coefficient of I_zI_z in h: Tr(h I_zI_z)/Tr((I_zI_z)²).
pub fn secular_coefficient(h: &Mat4) -> f64 {
    let zz = tensor(&spin::iz(), &spin::iz());
    (*h * zz).trace().re / 0.25
}

/// Default high-frequency regulator, 100 c/r.
pub fn default_cutoff(g: &Geometry) -> f64 {
    100.0 * g.c / g.r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub value: C64,
    pub error: f64,
    pub evaluations: usize,
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GAUSS_WEIGHTS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One G7K15 panel: (Kronrod estimate, |Kronrod − Gauss|).
fn gk15(f: &impl Fn(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(mid);
    let mut kron = fc * GK_WEIGHTS[7];
    let mut gauss = fc * GAUSS_WEIGHTS[3];
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let pair = f(mid - dx) + f(mid + dx);
        kron += pair * GK_WEIGHTS[i];
        if i % 2 == 1 {
            gauss += pair * GAUSS_WEIGHTS[i / 2];
        }
    }
    (kron * half, ((kron - gauss) * half).norm())
}

fn adaptive(f: &impl Fn(f64) -> C64, a: f64, b: f64, tol: f64, depth: u32, evals: &mut usize) -> (C64, f64) {
    let (v, e) = gk15(f, a, b);
    *evals += 15;
    if e <= tol || e <= 4.0 * f64::EPSILON * v.norm() || depth == 0 {
        return (v, e);
    }
    let m = 0.5 * (a + b);
    let (v1, e1) = adaptive(f, a, m, tol / 2.0, depth - 1, evals);
    let (v2, e2) = adaptive(f, m, b, tol / 2.0, depth - 1, evals);
    (v1 + v2, e1 + e2)
}

/// Taylor series of the J brackets at complex η, for |η| ≤ 0.5.
fn j_brackets_complex(eta: C64) -> (C64, C64) {
    let (mut a, mut b) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for k in 1..12u32 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let p = eta.powu(2 * k + 1);
        let tail = 1.0 / factorial(2 * k) - 1.0 / factorial(2 * k + 1);
        a += p * sign * (tail - 1.0 / factorial(2 * k - 1));
        b += p * sign * (tail - 1.0 / (3.0 * factorial(2 * k - 1)));
    }
    (a, b)
}

/// D(s) for real dipole moments with regulator e^{−ω/ω_cut}, returned in J/s.
///
/// In η = ωr/c the integrand is [bracket polynomial in η, sin η, cos η]·e^{−pη}
/// with p = c/(rω_cut) + ics/r. It is entire, and its two exponential parts
/// e^{−(p∓i)η} both decay along the ray η = t·e^{iψ} with
/// ψ = −(arg(p−i) + arg(p+i))/2, so the integral is taken along that ray,
/// split into panels one local period wide, with adaptive Gauss–Kronrod
/// (G7K15) refinement on each panel.
pub fn memory_kernel_d(s: f64, cfg: &FieldKernelConfig, cutoff: f64, rel_tol: f64) -> Result<Quadrature, FieldError> {
    cfg.validate()?;
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(FieldError::BadCutoff(cutoff));
    }
    if s.is_nan() || s < 0.0 {
        return Err(FieldError::NegativeLag(s));
    }
    let g = &cfg.geometry;
    let (par, proj) = cfg.contractions();
    if par.norm() == 0.0 && proj.norm() == 0.0 {
        return Ok(Quadrature { value: C64::new(0.0, 0.0), error: 0.0, evaluations: 0 });
    }
    let p = C64::new(g.c / (g.r * cutoff), g.c * s / g.r);
    let i = C64::new(0.0, 1.0);
    let (qm, qp) = (p - i, p + i);
    let psi = -(qm.arg() + qp.arg()) / 2.0;
    let dir = C64::from_polar(1.0, psi);
    let (rm, rp) = (qm * dir, qp * dir);
    let decay = rm.re.min(rp.re);
    let freq = rm.im.abs().max(rp.im.abs());
    // Off the real axis sin η and e^{−pη} separately overflow, so large |η|
    // uses sin η·e^{−pη} = (e^{−(p−i)η} − e^{−(p+i)η})/2i and likewise for cos.
    let f = |t: f64| {
        let eta = dir * t;
        let (a, b) = if t > SERIES_LIMIT {
            let (em, ep) = ((-qm * eta).exp(), (-qp * eta).exp());
            let (sin, cos) = ((em - ep) / (2.0 * i), (em + ep) / 2.0);
            let common = eta * cos - sin;
            (eta * eta * sin + common, eta * eta * sin / 3.0 + common)
        } else {
            let (a, b) = j_brackets_complex(eta);
            let e = (-p * eta).exp();
            (a * e, b * e)
        };
        par * a - proj * 3.0 * b
    };
    // Truncate where t³e^{−κt} has fallen far below its peak.
    let peak = (3.0 / decay).powi(3) * (-3.0f64).exp();
    let mut end = 3.0 / decay;
    while end.powi(3) * (-decay * end).exp() > 1e-20 * peak {
        end *= 1.25;
    }
    let width = (PI / (freq + decay)).min(end / 16.0);
    let panels = (end / width).ceil() as usize;
    let mut values = Vec::with_capacity(panels);
    let mut evals = 0;
    for k in 0..panels {
        let (a, b) = (k as f64 * width, ((k + 1) as f64 * width).min(end));
        values.push(gk15(&f, a, b));
        evals += 15;
    }
    let scale = values.iter().map(|(v, _)| v.norm()).sum::<f64>().max(f64::MIN_POSITIVE);
    let tol = rel_tol * scale / panels as f64;
    let mut total = C64::new(0.0, 0.0);
    let mut error = 0.0;
    for (k, (v, e)) in values.into_iter().enumerate() {
        let (v, e) = if e <= tol {
            (v, e)
        } else {
            let (a, b) = (k as f64 * width, ((k + 1) as f64 * width).min(end));
            adaptive(&f, a, b, tol, 12, &mut evals)
        };
        total += v;
        error += e;
    }
    // −i ∫ dω/2π J e^{…} = −i (c/r)/(2π) · 2μ₀/(4πr³) · e^{iψ}∫ dt […].
    let factor = -i * dir * (g.c / g.r / (2.0 * PI)) * 2.0 * g.prefactor();
    let value = total * factor;
    let error = error * factor.norm();
    if error.is_nan()
        || error > 10.0 * rel_tol * scale * factor.norm()
        || !value.re.is_finite()
        || !value.im.is_finite()
    {
        return Err(FieldError::NoConvergence { estimate: value, error });
    }
    Ok(Quadrature { value, error, evaluations: evals })
}
