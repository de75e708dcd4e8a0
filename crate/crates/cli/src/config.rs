//! Experiment configuration read from a TOML file. Every frequency-like key
//! carries its unit in the name.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use gmesim::atom::AtomParams;
use gmesim::fieldqed::{DipolePair, FieldKernelConfig, Geometry};
use gmesim::noise::NoiseModel;
use gmesim::pulses::{AngleConvention, CompileOptions, RabiFrequencies};
use gmesim::tomo::Shots;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub atom: AtomSection,
    pub noise: NoiseSection,
    pub pulses: PulseSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub fieldtheory: FieldSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomSection {
    pub hyperfine_hz: f64,
    pub b0_gauss: f64,
    pub gamma_nucleus_hz_per_gauss: f64,
    pub gamma_electron_hz_per_gauss: f64,
    pub omega0_hz: f64,
}

impl Default for AtomSection {
    fn default() -> Self {
        AtomSection {
            hyperfine_hz: AtomParams::YB171_HYPERFINE_HZ,
            b0_gauss: AtomParams::B0_GAUSS,
            gamma_nucleus_hz_per_gauss: AtomParams::YB171_NUCLEAR_GAMMA_HZ_PER_GAUSS,
            gamma_electron_hz_per_gauss: AtomParams::ELECTRON_GAMMA_HZ_PER_GAUSS,
            omega0_hz: AtomParams::OMEGA0_HZ,
        }
    }
}

impl AtomSection {
    pub fn params(&self) -> AtomParams {
        AtomParams {
            hyperfine_a: TWO_PI * self.hyperfine_hz,
            b0_gauss: self.b0_gauss,
            gamma_a: TWO_PI * self.gamma_nucleus_hz_per_gauss,
            gamma_b: TWO_PI * self.gamma_electron_hz_per_gauss,
            omega0: TWO_PI * self.omega0_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    #[default]
    Ytterbium,
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub model: NoisePreset,
    /// Per-pair overrides keyed "u-v", in microseconds; "inf" disables decay.
    pub beta_us: BTreeMap<String, f64>,
}

impl NoiseSection {
    pub fn model(&self) -> Result<NoiseModel, CliError> {
        let mut m = match self.model {
            NoisePreset::Ytterbium => NoiseModel::ytterbium(),
            NoisePreset::None => NoiseModel::noiseless(),
        };
        for (key, &us) in &self.beta_us {
            let pair = key
                .split_once('-')
                .and_then(|(u, v)| Some((u.trim().parse::<usize>().ok()?, v.trim().parse::<usize>().ok()?)));
            let (u, v) = pair
                .ok_or_else(|| CliError::config(format!("noise.beta_us: key \"{key}\" is not of the form \"u-v\"")))?;
            m.set(u, v, us * 1e-6).map_err(|e| CliError::config(format!("noise.beta_us.\"{key}\": {e}")))?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub convention: AngleConvention,
    pub rabi_13_khz: f64,
    pub rabi_23_khz: f64,
    pub rabi_34_khz: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        let r = RabiFrequencies::default();
        PulseSection {
            convention: AngleConvention::Bloch,
            rabi_13_khz: r.r13 / TWO_PI / 1e3,
            rabi_23_khz: r.r23 / TWO_PI / 1e3,
            rabi_34_khz: r.r34 / TWO_PI / 1e3,
        }
    }
}

impl PulseSection {
    pub fn options(&self) -> CompileOptions {
        CompileOptions {
            convention: self.convention,
            rabi: RabiFrequencies {
                r13: TWO_PI * 1e3 * self.rabi_13_khz,
                r23: TWO_PI * 1e3 * self.rabi_23_khz,
                r34: TWO_PI * 1e3 * self.rabi_34_khz,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// "fig1c" or a path to a pulse program.
    pub program: String,
    pub phi_rad: Option<Vec<f64>>,
    pub delta_rad_per_s: Option<Vec<f64>>,
    pub tau_us: Option<Vec<f64>>,
    pub shots: u64,
    pub infinite_shots: bool,
    pub seed: Option<u64>,
    pub format: Format,
    /// Extra seeded repetitions per point used for the spread estimate.
    pub repeats: u32,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            program: "fig1c".into(),
            phi_rad: None,
            delta_rad_per_s: None,
            tau_us: None,
            shots: 500,
            infinite_shots: false,
            seed: None,
            format: Format::Json,
            repeats: 0,
        }
    }
}

/// One interaction setting: phase φ = Δτ over a window τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub phi_rad: f64,
    pub delta_rad_per_s: f64,
    pub tau_s: f64,
}

impl Point {
    /// φ over the window τ; a zero window applies φ instantaneously.
    pub fn from_phase(phi: f64, tau: f64) -> Self {
        let delta = if tau > 0.0 { phi / tau } else { 0.0 };
        Point { phi_rad: phi, delta_rad_per_s: delta, tau_s: tau }
    }
}

impl RunSection {
    pub fn shots(&self) -> Result<Shots, CliError> {
        if self.infinite_shots {
            return Ok(Shots::Infinite);
        }
        if self.shots == 0 {
            return Err(CliError::config("run.shots must be at least 1 (or set run.infinite_shots = true)"));
        }
        Ok(Shots::Finite(self.shots))
    }

    /// Seed, required only for finite shots.
    pub fn seed(&self) -> Result<u64, CliError> {
        match (self.seed, self.infinite_shots) {
            (Some(s), _) => Ok(s),
            (None, true) => Ok(0),
            (None, false) => Err(CliError::config("run.seed is required when shots are finite (or pass --seed)")),
        }
    }

    /// Interaction points, given either as φ or as matching (Δ, τ) lists.
    /// With neither, the single point φ = π/2 at the default window.
    pub fn points(&self, default_tau: f64) -> Result<Vec<Point>, CliError> {
        match (&self.phi_rad, &self.delta_rad_per_s) {
            (Some(_), Some(_)) => {
                Err(CliError::config("give either run.phi_rad or run.delta_rad_per_s with run.tau_us, not both"))
            }
            (None, None) if self.tau_us.is_none() => {
                Ok(vec![Point::from_phase(std::f64::consts::FRAC_PI_2, default_tau)])
            }
            (None, None) => Err(CliError::config("run.tau_us needs run.phi_rad or run.delta_rad_per_s")),
            (Some(phis), None) => {
                let tau = match &self.tau_us {
                    None => default_tau,
                    Some(t) if t.len() == 1 => t[0] * 1e-6,
                    Some(_) => {
                        return Err(CliError::config("with run.phi_rad, run.tau_us may hold at most one window"))
                    }
                };
                check_time("run.tau_us", tau)?;
                phis.iter()
                    .map(|&p| {
                        if !p.is_finite() {
                            return Err(CliError::config(format!("run.phi_rad contains non-finite value {p}")));
                        }
                        Ok(Point::from_phase(p, tau))
                    })
                    .collect()
            }
            (None, Some(deltas)) => {
                let taus =
                    self.tau_us.as_ref().ok_or_else(|| CliError::config("run.delta_rad_per_s needs run.tau_us"))?;
                if taus.len() != deltas.len() {
                    return Err(CliError::config(format!(
                        "run.delta_rad_per_s has {} entries but run.tau_us has {}",
                        deltas.len(),
                        taus.len()
                    )));
                }
                deltas
                    .iter()
                    .zip(taus)
                    .map(|(&d, &t)| {
                        let tau = t * 1e-6;
                        check_time("run.tau_us", tau)?;
                        if !d.is_finite() {
                            return Err(CliError::config(format!("run.delta_rad_per_s contains non-finite value {d}")));
                        }
                        Ok(Point { phi_rad: d * tau, delta_rad_per_s: d, tau_s: tau })
                    })
                    .collect()
            }
        }
    }
}

fn check_time(key: &str, t: f64) -> Result<(), CliError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(CliError::config(format!("{key}: interaction time must be non-negative and finite (got {t} s)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub tau_us: Vec<f64>,
    /// Fixed Δτ; each point uses Δ = phase/τ.
    pub phase_rad: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { tau_us: (0..=20).map(|k| 20.0 * k as f64).collect(), phase_rad: FRAC_PI_2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub r_m: f64,
    pub rhat: [f64; 3],
    /// Dipole moments for the J, K and D tables (A·m²).
    pub m1_a_m2: [f64; 3],
    pub m2_a_m2: [f64; 3],
    /// Spin dipoles for the near-field residual (rad/s/T).
    pub gamma1_rad_per_s_per_tesla: f64,
    pub gamma2_rad_per_s_per_tesla: f64,
    /// Grid of η = ωr/c for J and K.
    pub eta: Vec<f64>,
    /// Grid of lags s in units of r/c for D.
    pub lag_r_over_c: Vec<f64>,
    /// Regulator ω_cut in units of c/r.
    pub cutoff_c_over_r: f64,
    /// Grid of η′ = Ωr/c for the near-field residual.
    pub residual_eta: Vec<f64>,
    pub quadrature_rel_tol: f64,
}

const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
const ELECTRON_GYRO: f64 = -1.760_859_630_23e11;

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection {
            r_m: 1e-6,
            rhat: [1.0, 0.0, 0.0],
            m1_a_m2: [0.0, 0.0, BOHR_MAGNETON],
            m2_a_m2: [0.0, 0.0, BOHR_MAGNETON],
            gamma1_rad_per_s_per_tesla: ELECTRON_GYRO,
            gamma2_rad_per_s_per_tesla: ELECTRON_GYRO,
            eta: vec![0.0, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
            lag_r_over_c: vec![0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            cutoff_c_over_r: 100.0,
            residual_eta: vec![1e-6, 1e-4, 1e-2],
            quadrature_rel_tol: 1e-10,
        }
    }
}

impl FieldSection {
    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.r_m, self.rhat)
    }

    pub fn kernel(&self) -> FieldKernelConfig {
        FieldKernelConfig { m1: self.m1_a_m2, m2: self.m2_a_m2, geometry: self.geometry() }
    }

    /// Spin pair with both splittings set so that Ωr/c = η′.
    pub fn pair(&self, eta_prime: f64) -> DipolePair {
        let g = self.geometry();
        let omega = eta_prime * g.c / g.r;
        DipolePair::new([self.gamma1_rad_per_s_per_tesla, self.gamma2_rad_per_s_per_tesla], [omega, omega], g)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.atom.params(), AtomParams::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml("[atom]\nb0 = 5.0\n").unwrap_err();
        assert!(err.to_string().contains("b0"), "{err}");
    }

    #[test]
    fn exactly_one_interaction_spec() {
        let mut run =
            RunSection { phi_rad: Some(vec![1.0]), delta_rad_per_s: Some(vec![1.0]), ..RunSection::default() };
        assert!(run.points(2e-6).is_err());
        run.phi_rad = None;
        assert!(run.points(2e-6).is_err());
        run.tau_us = Some(vec![2.0]);
        let p = run.points(2e-6).unwrap();
        assert!((p[0].phi_rad - 2e-6).abs() < 1e-20);
        run.delta_rad_per_s = None;
        assert!(run.points(2e-6).is_err());
        run.tau_us = None;
        let p = run.points(2e-6).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].phi_rad, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn seed_required_for_finite_shots() {
        let run = RunSection::default();
        assert!(run.seed().is_err());
        assert_eq!(RunSection { infinite_shots: true, ..run.clone() }.seed().unwrap(), 0);
        assert!(RunSection { shots: 0, ..run }.shots().is_err());
    }

    #[test]
    fn noise_overrides() {
        let cfg = ExperimentConfig::from_toml("[noise]\nmodel = \"none\"\n[noise.beta_us]\n\"1-4\" = 100.0\n").unwrap();
        let m = cfg.noise.model().unwrap();
        assert!((m.beta(1, 4) - 1e-4).abs() < 1e-18);
        assert!(m.beta(1, 3).is_infinite());
        let bad = ExperimentConfig::from_toml("[noise.beta_us]\n\"1-5\" = 1.0\n").unwrap();
        assert!(bad.noise.model().is_err());
    }
}
