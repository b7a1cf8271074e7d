use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;
use std::path::{Path, PathBuf};

use msgate_motion::msgate::geometric_phase;
use msgate_motion::noise::{
    averaged_gate_error_checked, drift_sweep, error_surface, optimize_phase, phase_scan, NoiseModel, PhaseObjective,
};
use msgate_motion::sideband::{fit_mle, predict_gate_error, ContourGrid, FitResult, SearchBox};
use msgate_motion::{ErrorReport, FrequencyOffset, GateParams};
use serde::{Deserialize, Serialize};

use crate::config::{gate_params, or_single, RunConfig};
use crate::io::{read_rabi_file, write_json, Table};
use crate::Failure;

pub const SWEEP_HEADER: [&str; 6] = ["delta_nu_hz", "alpha_sq", "phi_rad", "nbar", "infidelity", "diamond_distance"];
pub const PHASE_HEADER: [&str; 6] = ["sigma_hz", "alpha_sq", "phi_rad", "nbar", "infidelity", "diamond_distance"];
pub const SURFACE_HEADER: [&str; 7] =
    ["sigma_hz", "alpha_sq", "phi_rad", "nbar", "infidelity", "diamond_distance", "half_diamond_distance"];
pub const AVERAGE_HEADER: [&str; 9] = [
    "sigma_hz",
    "quadrature_order",
    "nodes",
    "alpha_sq",
    "phi_rad",
    "nbar",
    "infidelity",
    "diamond_distance",
    "quadrature_shift",
];
pub const CONTOUR_HEADER: [&str; 3] = ["alpha_sq", "nbar", "log_likelihood"];

const DEFAULT_PHASES: usize = 33;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub loops: u32,
    pub tau_us: f64,
    pub nu0_mhz: f64,
    /// `δ₀/2π` in Hz.
    pub delta0_hz: f64,
    /// `ηΩ/2π` in Hz.
    pub eta_omega_hz: f64,
    /// `B(τ)` at zero trap-frequency error.
    pub geometric_phase: f64,
    pub params: GateParams,
}

pub fn calibrate(loops: u32, tau_us: f64, nu0_mhz: f64) -> Result<Calibration, Failure> {
    let params = gate_params(loops, tau_us, nu0_mhz)?;
    Ok(Calibration {
        loops,
        tau_us,
        nu0_mhz,
        delta0_hz: params.delta0 / TAU,
        eta_omega_hz: params.eta_omega / TAU,
        geometric_phase: geometric_phase(&params, FrequencyOffset::ZERO, params.tau),
        params,
    })
}

/// Writes to `path`, or stdout when there is none.
pub fn emit(table: &Table, path: Option<&Path>) -> Result<(), Failure> {
    match path {
        Some(p) => table.write(p),
        None => table.write_to(std::io::stdout().lock()),
    }
}

pub fn sweep_table(cfg: &RunConfig) -> Result<Table, Failure> {
    let params = cfg.gate_params()?;
    let offsets: Vec<FrequencyOffset> = cfg.sweep.delta_nu_hz.iter().map(|&hz| FrequencyOffset::from_hz(hz)).collect();
    let mut table = Table::new(&SWEEP_HEADER);
    if offsets.is_empty() {
        return Ok(table);
    }
    let nbar = cfg.motion.nbar;
    for a in or_single(&cfg.sweep.alpha_sq, cfg.motion.alpha_sq) {
        for phi in or_single(&cfg.sweep.phi_rad, cfg.motion.phi_rad) {
            let reports = drift_sweep(&params, &cfg.spec(a, phi, nbar)?, &offsets)?;
            for (o, r) in offsets.iter().zip(&reports) {
                table.push(&[o.hz(), a, phi, nbar, r.infidelity, r.diamond_distance]);
            }
        }
    }
    Ok(table)
}

/// `count` phases from 0 to π inclusive.
pub fn phase_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|k| PI * k as f64 / (count - 1) as f64).collect(),
    }
}

pub fn phase_table(cfg: &RunConfig) -> Result<Table, Failure> {
    let params = cfg.gate_params()?;
    let model = cfg.noise_model()?;
    let phis = if cfg.phase_scan.phi_rad.is_empty() { phase_grid(DEFAULT_PHASES) } else { cfg.phase_scan.phi_rad.clone() };
    let nbar = cfg.motion.nbar;
    let mut table = Table::new(&PHASE_HEADER);
    for a in or_single(&cfg.phase_scan.alpha_sq, cfg.motion.alpha_sq) {
        let reports = phase_scan(&params, &cfg.spec(a, 0.0, nbar)?, &model, &phis)?;
        for (phi, r) in phis.iter().zip(&reports) {
            table.push(&[cfg.noise.sigma_hz, a, *phi, nbar, r.infidelity, r.diamond_distance]);
        }
    }
    Ok(table)
}

fn default_axis() -> Vec<f64> {
    (0..=8).map(|k| 0.25 * k as f64).collect()
}

pub fn surface_table(cfg: &RunConfig) -> Result<Table, Failure> {
    let params = cfg.gate_params()?;
    let model = cfg.noise_model()?;
    let a_axis = if cfg.grid.alpha_sq.is_empty() { default_axis() } else { cfg.grid.alpha_sq.clone() };
    let n_axis = if cfg.grid.nbar.is_empty() { default_axis() } else { cfg.grid.nbar.clone() };
    let mut table = Table::new(&SURFACE_HEADER);
    for phi in or_single(&cfg.grid.phi_rad, cfg.motion.phi_rad) {
        let s = error_surface(&params, &model, &a_axis, &n_axis, phi)?;
        for (i, a) in s.alpha_sq.iter().enumerate() {
            for (j, n) in s.nbar.iter().enumerate() {
                let r = &s.cells[i][j];
                table.push(&[cfg.noise.sigma_hz, *a, phi, *n, r.infidelity, r.diamond_distance, 0.5 * r.diamond_distance]);
            }
        }
    }
    Ok(table)
}

pub fn average_table(cfg: &RunConfig) -> Result<Table, Failure> {
    let params = cfg.gate_params()?;
    let model = cfg.noise_model()?;
    let spec = cfg.spec(cfg.motion.alpha_sq, cfg.motion.phi_rad, cfg.motion.nbar)?;
    let (r, check) = averaged_gate_error_checked(&params, &spec, &model)?;
    let mut table = Table::new(&AVERAGE_HEADER);
    table.push(&[
        cfg.noise.sigma_hz,
        cfg.noise.quadrature_order as f64,
        r.metadata.quadrature_nodes.unwrap_or(1) as f64,
        cfg.motion.alpha_sq,
        cfg.motion.phi_rad,
        cfg.motion.nbar,
        r.infidelity,
        r.diamond_distance,
        check.relative_shift,
    ]);
    Ok(table)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseChoice {
    pub objective: PhaseObjective,
    pub phi_rad: f64,
    pub flat: bool,
    pub report: ErrorReport,
}

pub fn optimize(cfg: &RunConfig, objective: PhaseObjective) -> Result<PhaseChoice, Failure> {
    let params = cfg.gate_params()?;
    let model = cfg.noise_model()?;
    let spec = cfg.spec(cfg.motion.alpha_sq, 0.0, cfg.motion.nbar)?;
    let opt = optimize_phase(&params, &spec, &model, objective)?;
    Ok(PhaseChoice { objective, phi_rad: opt.phi, flat: opt.flat, report: opt.report })
}

/// `fit.json`: the fit plus the shared parameters in ordinary units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOutput {
    pub omega_sb_hz: f64,
    pub decay_time_us: f64,
    pub fit: FitResult,
}

pub fn contour_table(grid: &ContourGrid) -> Table {
    let mut t = Table::new(&CONTOUR_HEADER);
    for (i, a) in grid.alpha_sq.iter().enumerate() {
        for (j, n) in grid.nbar.iter().enumerate() {
            t.push(&[*a, *n, grid.values[i][j]]);
        }
    }
    t
}

pub fn fit(files: &[PathBuf], out_dir: &Path) -> Result<FitOutput, Failure> {
    if files.is_empty() {
        return Err(Failure::Usage("at least one dataset file is required".into()));
    }
    let data = files.iter().map(|f| read_rabi_file(f)).collect::<Result<Vec<_>, _>>()?;
    let result = fit_mle(&data, &SearchBox::default())?;
    for (k, est) in result.datasets.iter().enumerate() {
        contour_table(&est.contour).write(&out_dir.join(format!("contour_{k}_{}.csv", est.label)))?;
    }
    let out = FitOutput { omega_sb_hz: result.omega_sb / TAU, decay_time_us: 1e6 / result.gamma0, fit: result };
    write_json(&out_dir.join("fit.json"), &out)?;
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub alpha_sq: f64,
    pub nbar: f64,
    pub phi_rad: f64,
    pub report: ErrorReport,
    /// The same dataset at `φ = π/2`.
    pub quarter_turn: ErrorReport,
}

pub fn predict(fit_path: &Path, params: &GateParams, model: &NoiseModel, phi: f64) -> Result<Vec<Prediction>, Failure> {
    let text = std::fs::read_to_string(fit_path).map_err(|e| Failure::Data(format!("{}: {e}", fit_path.display())))?;
    let out: FitOutput =
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", fit_path.display())))?;
    let at = predict_gate_error(&out.fit, params, model, phi)?;
    let quarter = predict_gate_error(&out.fit, params, model, FRAC_PI_2)?;
    Ok(out
        .fit
        .datasets
        .iter()
        .zip(at.into_iter().zip(quarter))
        .map(|(d, (report, quarter_turn))| Prediction {
            label: d.label.clone(),
            alpha_sq: d.alpha_sq,
            nbar: d.nbar,
            phi_rad: phi,
            report,
            quarter_turn,
        })
        .collect())
}

pub fn print_json(value: &impl Serialize) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::Data(e.to_string()))?;
    writeln!(out).map_err(|e| Failure::Data(e.to_string()))
}
