//! Published parameter sets and their reference values.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use clap::ValueEnum;
use msgate_motion::noise::{drift_sweep, phase_scan, NoiseModel};
use msgate_motion::{ErrorReport, FrequencyOffset, GateParams, MotionalSpec};
use serde::Serialize;

use crate::commands::{phase_grid, phase_table, surface_table, sweep_table};
use crate::config::{gate_params, RunConfig};
use crate::io::{write_json, Table};
use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Fig1,
    Fig2,
    Fig3,
    Sec4Checkpoints,
    Sec5Predictions,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Fig1 => "fig1",
            Target::Fig2 => "fig2",
            Target::Fig3 => "fig3",
            Target::Sec4Checkpoints => "sec4-checkpoints",
            Target::Sec5Predictions => "sec5-predictions",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    /// Relative tolerance, or percentage points for `kind = "points"`.
    pub tolerance: f64,
    pub kind: &'static str,
    pub pass: bool,
}

impl Check {
    fn relative(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        let pass = ((value - target) / target).abs() <= tolerance;
        Self { name: name.into(), value, target, tolerance, kind: "relative", pass }
    }

    fn points(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        let pass = (value - target).abs() <= tolerance;
        Self { name: name.into(), value, target, tolerance, kind: "points", pass }
    }

    /// `value ≤ bound`.
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, target: bound, tolerance: 0.0, kind: "at_most", pass: value <= bound }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub id: &'static str,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn quarter_steps() -> Vec<f64> {
    (0..=5).map(|k| 0.4 * k as f64).collect()
}

fn write_output(t: &Table, dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<(), Failure> {
    t.write(&dir.join(name))?;
    outputs.push(name.to_string());
    Ok(())
}

/// Largest decrease along consecutive values.
fn worst_drop(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

fn column(t_rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    t_rows.iter().map(|r| r[k]).collect()
}

fn fig1(params: &GateParams, dir: &Path, outputs: &mut Vec<String>) -> Result<Vec<Check>, Failure> {
    let mut cfg = RunConfig::default();
    cfg.sweep.delta_nu_hz = (-50..=50).map(|k| 100.0 * k as f64).collect();
    cfg.sweep.alpha_sq = quarter_steps();
    cfg.sweep.phi_rad = vec![0.0, FRAC_PI_2];
    let table = sweep_table(&cfg)?;
    write_output(&table, dir, "fig1.csv", outputs)?;

    let offsets = [FrequencyOffset::from_hz(-3000.0), FrequencyOffset::from_hz(3000.0)];
    let still = MotionalSpec::new(0.0, 0.0, 0.0, 1)?;
    let a = drift_sweep(params, &still, &offsets)?;
    let b = drift_sweep(params, &still.with_phi(FRAC_PI_2), &offsets)?;
    let diff = a.iter().zip(&b).map(|(x, y)| (x.infidelity - y.infidelity).abs()).fold(0.0, f64::max);
    Ok(vec![Check::at_most("|α|²=0 rows independent of φ", diff, 1e-12)])
}

fn fig2(params: &GateParams, dir: &Path, outputs: &mut Vec<String>) -> Result<Vec<Check>, Failure> {
    let mut cfg = RunConfig::default();
    cfg.phase_scan.alpha_sq = quarter_steps();
    cfg.phase_scan.phi_rad = phase_grid(37);
    write_output(&phase_table(&cfg)?, dir, "fig2.csv", outputs)?;

    let model = NoiseModel::from_hz(600.0, 31)?;
    let phis = phase_grid(37);
    let r = phase_scan(params, &MotionalSpec::from_alpha_sq(2.0, 0.0, 0.0, 1)?, &model, &phis)?;
    let best = r
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.infidelity.total_cmp(&y.1.infidelity))
        .map(|(k, _)| phis[k])
        .unwrap_or(0.0);
    Ok(vec![Check::at_most("|α|²=2 infidelity minimum distance from π/2", (best - FRAC_PI_2).abs(), 0.02)])
}

fn fig3(dir: &Path, outputs: &mut Vec<String>) -> Result<Vec<Check>, Failure> {
    let mut cfg = RunConfig::default();
    cfg.grid.phi_rad = vec![0.0, FRAC_PI_2];
    let table = surface_table(&cfg)?;
    write_output(&table, dir, "fig3.csv", outputs)?;

    // rows are ordered (φ, |α|², n̄) with a 9 × 9 grid per phase
    let rows = table.values();
    let mut checks = Vec::new();
    for (p, phi) in ["0", "π/2"].iter().enumerate() {
        let block = &rows[p * 81..(p + 1) * 81];
        let mut drop: f64 = 0.0;
        for k in 0..9 {
            let along_n: Vec<_> = block[k * 9..(k + 1) * 9].to_vec();
            let along_a: Vec<_> = (0..9).map(|i| block[i * 9 + k].clone()).collect();
            for col in [4, 5] {
                drop = drop.max(worst_drop(&column(&along_n, col))).max(worst_drop(&column(&along_a, col)));
            }
        }
        checks.push(Check::at_most(&format!("φ={phi}: largest decrease along a grid axis"), drop, 1e-6));
    }
    Ok(checks)
}

fn pair(params: &GateParams, sigma_hz: f64, alpha_sq: f64, nbar: f64) -> Result<(ErrorReport, ErrorReport), Failure> {
    let model = NoiseModel::from_hz(sigma_hz, 31)?;
    let spec = MotionalSpec::from_alpha_sq(alpha_sq, 0.0, nbar, 1)?;
    let mut r = phase_scan(params, &spec, &model, &[0.0, FRAC_PI_2])?;
    let b = r.pop().expect("two phases");
    let a = r.pop().expect("two phases");
    Ok((a, b))
}

fn reduction(a: f64, b: f64) -> f64 {
    100.0 * (1.0 - b / a)
}

fn change(base: f64, x: f64) -> f64 {
    100.0 * (x / base - 1.0)
}

fn sec4(params: &GateParams, dir: &Path, outputs: &mut Vec<String>) -> Result<Vec<Check>, Failure> {
    let off = [FrequencyOffset::from_hz(-600.0)];
    let s0 = drift_sweep(params, &MotionalSpec::from_alpha_sq(2.0, 0.0, 0.0, 48)?, &off)?.remove(0);
    let s1 = drift_sweep(params, &MotionalSpec::from_alpha_sq(2.0, FRAC_PI_2, 0.0, 48)?, &off)?.remove(0);
    let (a0, a1) = pair(params, 600.0, 2.0, 0.0)?;
    let (b0, b1) = pair(params, 200.0, 2.0, 0.0)?;

    let mut t = Table::new(&["sigma_hz", "delta_nu_hz", "phi_rad", "infidelity", "diamond_distance"]);
    t.push(&[0.0, -600.0, 0.0, s0.infidelity, s0.diamond_distance]);
    t.push(&[0.0, -600.0, FRAC_PI_2, s1.infidelity, s1.diamond_distance]);
    for (sigma, x, y) in [(600.0, &a0, &a1), (200.0, &b0, &b1)] {
        t.push(&[sigma, 0.0, 0.0, x.infidelity, x.diamond_distance]);
        t.push(&[sigma, 0.0, FRAC_PI_2, y.infidelity, y.diamond_distance]);
    }
    write_output(&t, dir, "sec4.csv", outputs)?;

    Ok(vec![
        Check::relative("I(δν=−600 Hz, φ=0)", s0.infidelity, 0.030, 0.03),
        Check::relative("I(δν=−600 Hz, φ=π/2)", s1.infidelity, 0.0045, 0.03),
        Check::relative("ε(δν=−600 Hz, φ=0)", s0.diamond_distance, 0.45, 0.05),
        Check::relative("ε(δν=−600 Hz, φ=π/2)", s1.diamond_distance, 0.084, 0.05),
        Check::relative("I(σ=600 Hz, φ=0)", a0.infidelity, 0.027, 0.05),
        Check::relative("I(σ=600 Hz, φ=π/2)", a1.infidelity, 0.0048, 0.05),
        Check::relative("ε(σ=600 Hz, φ=0)", a0.diamond_distance, 0.098, 0.05),
        Check::relative("ε(σ=600 Hz, φ=π/2)", a1.diamond_distance, 0.050, 0.05),
        Check::points("I reduction, σ=600 Hz (%)", reduction(a0.infidelity, a1.infidelity), 82.0, 3.0),
        Check::points("ε reduction, σ=600 Hz (%)", reduction(a0.diamond_distance, a1.diamond_distance), 49.0, 3.0),
        Check::points("I reduction, σ=200 Hz (%)", reduction(b0.infidelity, b1.infidelity), 86.0, 3.0),
        Check::points("ε reduction, σ=200 Hz (%)", reduction(b0.diamond_distance, b1.diamond_distance), 52.0, 3.0),
    ])
}

fn sec5(params: &GateParams, dir: &Path, outputs: &mut Vec<String>) -> Result<Vec<Check>, Failure> {
    let (h0, h1) = pair(params, 600.0, 0.0, 0.49)?;
    let (d0, d1) = pair(params, 600.0, 0.47, 0.12)?;
    let mut t = Table::new(&["alpha_sq", "nbar", "phi_rad", "infidelity", "diamond_distance"]);
    for (a, n, x, y) in [(0.0, 0.49, &h0, &h1), (0.47, 0.12, &d0, &d1)] {
        t.push(&[a, n, 0.0, x.infidelity, x.diamond_distance]);
        t.push(&[a, n, FRAC_PI_2, y.infidelity, y.diamond_distance]);
    }
    write_output(&t, dir, "sec5.csv", outputs)?;
    let flat = (h0.infidelity - h1.infidelity).abs().max((h0.diamond_distance - h1.diamond_distance).abs());
    Ok(vec![
        Check::at_most("|α|²=0 dependence on φ", flat, 1e-6),
        Check::relative("I(0, 0.49)", h0.infidelity, 0.0070, 0.05),
        Check::relative("ε(0, 0.49)", h0.diamond_distance, 0.012, 0.05),
        Check::relative("I(0.47, 0.12, φ=0)", d0.infidelity, 0.010, 0.05),
        Check::relative("I(0.47, 0.12, φ=π/2)", d1.infidelity, 0.0049, 0.05),
        Check::relative("ε(0.47, 0.12, φ=0)", d0.diamond_distance, 0.030, 0.05),
        Check::relative("ε(0.47, 0.12, φ=π/2)", d1.diamond_distance, 0.026, 0.05),
        Check::points("I change, φ=0 (%)", change(h0.infidelity, d0.infidelity), 49.0, 5.0),
        Check::points("ε change, φ=0 (%)", change(h0.diamond_distance, d0.diamond_distance), 150.0, 5.0),
        Check::points("I change, φ=π/2 (%)", change(h1.infidelity, d1.infidelity), -29.0, 5.0),
        Check::points("ε change, φ=π/2 (%)", change(h1.diamond_distance, d1.diamond_distance), 110.0, 5.0),
    ])
}

pub fn run(target: Target, dir: &Path) -> Result<Summary, Failure> {
    let params = gate_params(2, 60.0, 3.0)?;
    let mut outputs = Vec::new();
    let checks = match target {
        Target::Fig1 => fig1(&params, dir, &mut outputs)?,
        Target::Fig2 => fig2(&params, dir, &mut outputs)?,
        Target::Fig3 => fig3(dir, &mut outputs)?,
        Target::Sec4Checkpoints => sec4(&params, dir, &mut outputs)?,
        Target::Sec5Predictions => sec5(&params, dir, &mut outputs)?,
    };
    let summary = Summary { id: target.name(), passed: checks.iter().all(|c| c.pass), outputs, checks };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
