//! Subcommand implementations. Each returns the full output text so that the
//! binary only decides where to write it.

use std::path::Path;
use std::time::Instant;

use gmesim::fieldqed::{
    assemble_hf, couplings, dipolar_hamiltonian, memory_kernel_d, principal_kernel_k, spectral_density_j, FieldError,
};
use gmesim::gme::{phase_report, GmeParams, PhaseReport};
use gmesim::metrics::EntanglementReport;
use gmesim::noise::NoiseModel;
use gmesim::protocol::{Protocol, DEFAULT_TAU};
use gmesim::pulses::{self, Observable, PulseEvent, PulseProgram};
use gmesim::qmath::Mat4;
use gmesim::state::DensityMatrix;
use gmesim::tomo::{explicit_elements, Shots, TomographyRecord};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Format, Point};
use crate::error::CliError;

/// Name of the built-in reference program.
pub const BUILTIN: &str = "fig1c";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixOut {
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
}

impl From<&Mat4> for MatrixOut {
    fn from(m: &Mat4) -> Self {
        MatrixOut { re: m.0.map(|row| row.map(|z| z.re)), im: m.0.map(|row| row.map(|z| z.im)) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementValue {
    pub element: Observable,
    pub value: f64,
}

/// Sample spread over extra seeded repetitions of one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spread {
    pub repeats: u32,
    pub tangle_std: f64,
    pub fidelity_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub point: Point,
    pub rho_zz: MatrixOut,
    pub rho_number: MatrixOut,
    pub fidelity: f64,
    pub entanglement: EntanglementReport,
    /// Smallest eigenvalue when dephasing needed the positivity guard.
    pub dephasing_projection: Option<f64>,
    /// Smallest eigenvalue of the linear-inversion estimate.
    pub reconstruction_min_eigenvalue: f64,
    /// Values of the program's readout elements from the closed formulas.
    pub readouts: Vec<ElementValue>,
    pub tomography: Vec<TomographyRecord>,
    pub spread: Option<Spread>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateOutput {
    pub inputs: ExperimentConfig,
    pub preparation: String,
    pub runs: Vec<RunRecord>,
}

/// A program split into its preparation stage and readout elements.
pub struct Stages {
    pub preparation: Vec<PulseEvent>,
    pub readouts: Vec<Observable>,
}

pub fn load_program(source: &str, protocol: &Protocol) -> Result<PulseProgram, CliError> {
    if source == BUILTIN {
        return Ok(protocol.reference_program(DEFAULT_TAU, std::f64::consts::FRAC_PI_2 / DEFAULT_TAU));
    }
    let text =
        std::fs::read_to_string(source).map_err(|e| CliError::config(format!("cannot read program {source}: {e}")))?;
    pulses::parse(&text).map_err(|e| CliError::config(format!("{source}: {e}")))
}

pub fn stages(program: &PulseProgram) -> Stages {
    Stages { preparation: program.preparation().to_vec(), readouts: program.readouts() }
}

fn protocol(cfg: &ExperimentConfig) -> Result<Protocol, CliError> {
    let atom = cfg.atom.params();
    atom.validate().map_err(|e| CliError::config(format!("atom: {e}")))?;
    let opts = cfg.pulses.options();
    opts.rabi.validate().map_err(|e| CliError::config(format!("pulses: {e}")))?;
    Protocol::new(atom, opts).map_err(CliError::numerical)
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

struct Context<'a> {
    protocol: &'a Protocol,
    prepared: DensityMatrix,
    noise: NoiseModel,
    shots: Shots,
    repeats: u32,
}

impl Context<'_> {
    fn run_point(&self, index: usize, point: Point, seed: u64, readouts: &[Observable]) -> Result<RunRecord, CliError> {
        let (state, projected) = self
            .protocol
            .interact(&self.prepared, point.phi_rad, point.tau_s, &self.noise)
            .map_err(CliError::numerical)?;
        let run = self
            .protocol
            .analyse(state, point.phi_rad, point.tau_s, projected, self.shots, seed)
            .map_err(CliError::numerical)?;
        let explicit = explicit_elements(&run.records).map_err(CliError::numerical)?;
        let spread = match self.shots {
            Shots::Finite(_) if self.repeats >= 2 => {
                let mut tangles = Vec::new();
                let mut fids = Vec::new();
                for j in 1..=u64::from(self.repeats) {
                    let r = self
                        .protocol
                        .analyse(state, point.phi_rad, point.tau_s, projected, self.shots, seed.wrapping_add(j << 32))
                        .map_err(CliError::numerical)?;
                    tangles.push(r.entanglement.tangle);
                    fids.push(r.fidelity);
                }
                Some(Spread { repeats: self.repeats, tangle_std: std_dev(&tangles), fidelity_std: std_dev(&fids) })
            }
            _ => None,
        };
        let finite = matches!(self.shots, Shots::Finite(_));
        Ok(RunRecord {
            index,
            seed: finite.then_some(seed),
            shots: match self.shots {
                Shots::Finite(n) => Some(n),
                Shots::Infinite => None,
            },
            point,
            rho_zz: run.reconstruction.zz.matrix().into(),
            rho_number: run.reconstruction.number.matrix().into(),
            fidelity: run.fidelity,
            entanglement: run.entanglement,
            dephasing_projection: run.projected,
            reconstruction_min_eigenvalue: run.reconstruction.min_eigenvalue,
            readouts: readouts.iter().map(|&e| ElementValue { element: e, value: e.evaluate(&explicit) }).collect(),
            tomography: run.records,
            spread,
        })
    }
}

/// Runs every point in parallel; point i uses seed + i and results stay in
/// index order.
fn run_points(
    ctx: &Context<'_>,
    points: &[Point],
    seed: u64,
    readouts: &[Observable],
) -> Result<Vec<RunRecord>, CliError> {
    points.par_iter().enumerate().map(|(i, &p)| ctx.run_point(i, p, seed.wrapping_add(i as u64), readouts)).collect()
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulateOutput, CliError> {
    let start = Instant::now();
    let protocol = protocol(cfg)?;
    let shots = cfg.run.shots()?;
    let seed = cfg.run.seed()?;
    let points = cfg.run.points(DEFAULT_TAU)?;
    let noise = cfg.noise.model()?;
    let program = load_program(&cfg.run.program, &protocol)?;
    let st = stages(&program);
    let prepared = protocol.prepare(&st.preparation).map_err(CliError::numerical)?;
    let ctx = Context { protocol: &protocol, prepared, noise, shots, repeats: cfg.run.repeats };
    let runs = run_points(&ctx, &points, seed, &st.readouts)?;
    log::info!("simulate: {} points in {:?}", runs.len(), start.elapsed());
    Ok(SimulateOutput { inputs: cfg.clone(), preparation: pulses::print(&PulseProgram::new(st.preparation)), runs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub tau_us: f64,
    pub delta_rad_per_s: f64,
    pub phi_rad: f64,
    pub seed: Option<u64>,
    pub concurrence: f64,
    pub tangle: f64,
    pub eof: f64,
    pub fidelity: f64,
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    let start = Instant::now();
    if cfg.sweep.tau_us.is_empty() {
        return Err(CliError::config("sweep.tau_us must not be empty"));
    }
    let protocol = protocol(cfg)?;
    let shots = cfg.run.shots()?;
    let seed = cfg.run.seed()?;
    let noise = cfg.noise.model()?;
    let phase = cfg.sweep.phase_rad;
    if !phase.is_finite() {
        return Err(CliError::config("sweep.phase_rad must be finite"));
    }
    let points = cfg
        .sweep
        .tau_us
        .iter()
        .map(|&t| {
            if !(t.is_finite() && t >= 0.0) {
                return Err(CliError::config(format!("sweep.tau_us: invalid window {t}")));
            }
            Ok(Point::from_phase(phase, t * 1e-6))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let program = load_program(&cfg.run.program, &protocol)?;
    let prepared = protocol.prepare(program.preparation()).map_err(CliError::numerical)?;
    let ctx = Context { protocol: &protocol, prepared, noise, shots, repeats: 0 };
    let rows = run_points(&ctx, &points, seed, &[])?
        .into_iter()
        .zip(&cfg.sweep.tau_us)
        .map(|(r, &tau_us)| SweepRow {
            index: r.index,
            tau_us,
            delta_rad_per_s: r.point.delta_rad_per_s,
            phi_rad: r.point.phi_rad,
            seed: r.seed,
            concurrence: r.entanglement.concurrence,
            tangle: r.entanglement.tangle,
            eof: r.entanglement.eof,
            fidelity: r.fidelity,
        })
        .collect::<Vec<_>>();
    log::info!("sweep: {} points in {:?}", rows.len(), start.elapsed());
    Ok(rows)
}

/// One row of the field-theory tables. `x` is η for J and K, s in units of
/// r/c for D, and η′ for the near-field rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldRow {
    pub table: &'static str,
    pub x: f64,
    pub re: f64,
    pub im: f64,
    pub abs_error: f64,
    pub status: String,
}

impl FieldRow {
    fn ok(table: &'static str, x: f64, re: f64, im: f64, abs_error: f64) -> Self {
        FieldRow { table, x, re, im, abs_error, status: "ok".into() }
    }

    fn failed(table: &'static str, x: f64, err: &FieldError) -> Self {
        FieldRow { table, x, re: f64::NAN, im: f64::NAN, abs_error: f64::NAN, status: err.to_string() }
    }
}

/// Tables: `J` and `K` on the η grid (joules), `D` on the lag
/// grid (J/s, status names the frequency regulator), `residual` = ‖H′_F − H_dd‖/‖H_dd‖ and `dissipative` = largest
/// |G^(D)|/ħ (rad/s) on the η′ grid.
pub fn fieldtheory(cfg: &ExperimentConfig) -> Result<Vec<FieldRow>, CliError> {
    let f = &cfg.fieldtheory;
    let kernel = f.kernel();
    kernel.validate().map_err(|e| CliError::config(format!("fieldtheory: {e}")))?;
    if !(f.cutoff_c_over_r.is_finite() && f.cutoff_c_over_r > 0.0) {
        return Err(CliError::config("fieldtheory.cutoff_c_over_r must be positive"));
    }
    let g = kernel.geometry;
    let mut rows = Vec::new();
    for &eta in &f.eta {
        let omega = eta * g.c / g.r;
        rows.push(match spectral_density_j(omega, &kernel) {
            Ok(v) => FieldRow::ok("J", eta, v, 0.0, 0.0),
            Err(e) => FieldRow::failed("J", eta, &e),
        });
    }
    for &eta in &f.eta {
        let omega = eta * g.c / g.r;
        rows.push(match principal_kernel_k(omega, &kernel) {
            Ok(v) => FieldRow::ok("K", eta, v, 0.0, 0.0),
            Err(e) => FieldRow::failed("K", eta, &e),
        });
    }
    let cutoff = f.cutoff_c_over_r * g.c / g.r;
    let regulated = format!("ok; regulator exp(-omega/omega_cut), omega_cut = {} c/r", f.cutoff_c_over_r);
    let d_rows: Vec<FieldRow> = f
        .lag_r_over_c
        .par_iter()
        .map(|&k| match memory_kernel_d(k * g.r / g.c, &kernel, cutoff, f.quadrature_rel_tol) {
            Ok(q) => FieldRow { status: regulated.clone(), ..FieldRow::ok("D", k, q.value.re, q.value.im, q.error) },
            Err(e) => FieldRow::failed("D", k, &e),
        })
        .collect();
    rows.extend(d_rows);
    for &eta in &f.residual_eta {
        let pair = f.pair(eta);
        let hbar = pair.hbar;
        let residual = assemble_hf(&pair, false).map(|h| {
            let dd = dipolar_hamiltonian(&pair);
            (h - dd).frobenius() / dd.frobenius()
        });
        rows.push(match residual {
            Ok(r) => FieldRow::ok("residual", eta, r, 0.0, 0.0),
            Err(e) => FieldRow::failed("residual", eta, &e),
        });
        rows.push(match couplings(&pair) {
            Ok(c) => {
                let max = c.dissipative.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max) / hbar;
                FieldRow::ok("dissipative", eta, max, 0.0, 0.0)
            }
            Err(e) => FieldRow::failed("dissipative", eta, &e),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmeOutput {
    pub inputs: GmeParams,
    #[serde(flatten)]
    pub report: PhaseReport,
}

pub fn gme_phase(p: &GmeParams) -> Result<GmeOutput, CliError> {
    let report = phase_report(p).map_err(|e| CliError::config(format!("gme-phase: {e}")))?;
    for flag in &report.flags {
        log::warn!("{flag}");
    }
    Ok(GmeOutput { inputs: *p, report })
}

/// Canonical printout of a program file or the built-in program, checked to
/// re-parse to the same program.
pub fn parse_program(source: &str, cfg: &ExperimentConfig) -> Result<String, CliError> {
    let program = if source == BUILTIN {
        load_program(source, &protocol(cfg)?)?
    } else {
        let path = Path::new(source);
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {source}: {e}")))?;
        pulses::parse(&text).map_err(|e| CliError::config(format!("{source}: {e}")))?
    };
    let text = pulses::print(&program);
    let again =
        pulses::parse(&text).map_err(|e| CliError::numerical(format!("canonical form does not re-parse: {e}")))?;
    if again.events != program.events {
        return Err(CliError::numerical("canonical form re-parses to a different program"));
    }
    Ok(text)
}

/// Renders a serializable value in the requested format.
pub fn render_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| CliError::Output(e.to_string()))
}

fn csv_text(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
}

pub fn render_rows<T: Serialize>(rows: &[T], header: &[&str], format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => render_json(&rows),
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(header).map_err(|e| CliError::Output(e.to_string()))?;
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
            }
            csv_text(w)
        }
    }
}

pub const SWEEP_HEADER: [&str; 9] =
    ["index", "tau_us", "delta_rad_per_s", "phi_rad", "seed", "concurrence", "tangle", "eof", "fidelity"];
pub const FIELD_HEADER: [&str; 6] = ["table", "x", "re", "im", "abs_error", "status"];

/// Flat CSV of simulate runs: scalars followed by the zz-basis matrix.
pub fn render_simulate(out: &SimulateOutput, format: Format) -> Result<String, CliError> {
    if format == Format::Json {
        return render_json(out);
    }
    let mut header: Vec<String> = [
        "index",
        "seed",
        "shots",
        "phi_rad",
        "delta_rad_per_s",
        "tau_s",
        "fidelity",
        "concurrence",
        "tangle",
        "eof",
        "entangled",
    ]
    .map(String::from)
    .to_vec();
    for part in ["re", "im"] {
        for i in 1..=4 {
            for j in 1..=4 {
                header.push(format!("rho_zz_{part}_{i}{j}"));
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| CliError::Output(e.to_string()))?;
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &out.runs {
        let mut rec = vec![
            r.index.to_string(),
            opt(r.seed),
            opt(r.shots),
            r.point.phi_rad.to_string(),
            r.point.delta_rad_per_s.to_string(),
            r.point.tau_s.to_string(),
            r.fidelity.to_string(),
            r.entanglement.concurrence.to_string(),
            r.entanglement.tangle.to_string(),
            r.entanglement.eof.to_string(),
            r.entanglement.entangled.to_string(),
        ];
        for m in [&r.rho_zz.re, &r.rho_zz.im] {
            rec.extend(m.iter().flatten().map(|x| x.to_string()));
        }
        w.write_record(&rec).map_err(|e| CliError::Output(e.to_string()))?;
    }
    csv_text(w)
}
