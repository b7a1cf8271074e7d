//! Trap-frequency noise: drift sweeps, Gaussian shot-to-shot averaging and
//! displacement-phase optimization.

use std::f64::consts::PI;

use gauss_quad::GaussHermite;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{gate_channel, gate_truncation, ideal_gate_choi, mix_channels, ChoiMatrix, ErrorReport, ReportMetadata};
use crate::error::{Error, Result};
use crate::fock::MotionalSpec;
use crate::metrics::{error_report, process_infidelity, diamond_distance};
use crate::msgate::{FrequencyOffset, GateParams};

pub const DEFAULT_QUADRATURE_ORDER: usize = 31;
/// Nodes farther than this many standard deviations from the center are dropped.
pub const NODE_CUTOFF_SIGMAS: f64 = 6.0;
/// Relative change in infidelity under order doubling above which a warning is raised.
pub const QUADRATURE_TOLERANCE: f64 = 0.01;
/// Below this `|α|²` the phase landscape is treated as flat.
pub const FLAT_ALPHA_SQ: f64 = 1e-6;

const COARSE_PHASES: usize = 64;
const PHASE_TOLERANCE: f64 = 1e-3;

/// Gaussian distribution of the trap-frequency error `δν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of `δν`, rad/s.
    pub sigma: f64,
    /// Mean of `δν`, rad/s.
    pub center: f64,
    pub quadrature_order: usize,
}

impl NoiseModel {
    pub fn new(sigma: f64, center: f64, quadrature_order: usize) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
        }
        if !center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        if quadrature_order == 0 {
            return Err(Error::invalid("quadrature_order", "must be >= 1"));
        }
        Ok(Self { sigma, center, quadrature_order })
    }

    /// Zero-mean noise with width `sigma_hz` given as an ordinary frequency.
    pub fn from_hz(sigma_hz: f64, quadrature_order: usize) -> Result<Self> {
        Self::new(FrequencyOffset::from_hz(sigma_hz).angular(), 0.0, quadrature_order)
    }

    /// A fixed offset with no spread.
    pub fn fixed(offset: FrequencyOffset) -> Self {
        Self { sigma: 0.0, center: offset.angular(), quadrature_order: 1 }
    }

    pub fn with_order(self, quadrature_order: usize) -> Result<Self> {
        Self::new(self.sigma, self.center, quadrature_order)
    }

    /// Quadrature nodes and normalized weights, sorted by offset.
    pub fn nodes(&self) -> Result<Vec<(FrequencyOffset, f64)>> {
        if self.sigma == 0.0 || self.quadrature_order == 1 {
            return Ok(vec![(FrequencyOffset(self.center), 1.0)]);
        }
        let rule = GaussHermite::new(self.quadrature_order)
            .map_err(|e| Error::invalid("quadrature_order", e.to_string()))?;
        let mut pairs: Vec<(f64, f64)> = rule
            .into_node_weight_pairs()
            .into_iter()
            .map(|(x, w)| (std::f64::consts::SQRT_2 * self.sigma * x, w / PI.sqrt()))
            .filter(|(d, _)| d.abs() <= NODE_CUTOFF_SIGMAS * self.sigma)
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(pairs
            .into_iter()
            .map(|(d, w)| (FrequencyOffset(self.center + d), w / total))
            .collect())
    }
}

/// Which metric [`optimize_phase`] minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseObjective {
    Infidelity,
    Diamond,
}

/// Result of comparing a quadrature against the next odd order `2q + 1`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadratureCheck {
    pub order: usize,
    pub reference_order: usize,
    pub relative_shift: f64,
    pub converged: bool,
}

fn spec_for_nodes(params: &GateParams, spec: &MotionalSpec, offsets: &[FrequencyOffset]) -> Result<MotionalSpec> {
    let needed = gate_truncation(params, spec.alpha_mag, spec.nbar_th, offsets)?;
    if needed > spec.truncation {
        spec.with_truncation(needed)
    } else {
        Ok(*spec)
    }
}

/// Channel averaged over the noise distribution, as a Choi-matrix mixture.
///
/// The Fock truncation is raised to what the widest node requires if
/// `spec.truncation` is smaller.
pub fn averaged_channel(params: &GateParams, spec: &MotionalSpec, model: &NoiseModel) -> Result<(ChoiMatrix, MotionalSpec)> {
    let nodes = model.nodes()?;
    for (o, _) in &nodes {
        params.check_offset(*o)?;
    }
    let offsets: Vec<FrequencyOffset> = nodes.iter().map(|n| n.0).collect();
    let spec = spec_for_nodes(params, spec, &offsets)?;
    let channels: Vec<ChoiMatrix> = nodes
        .par_iter()
        .map(|(o, _)| gate_channel(params, *o, &spec))
        .collect::<Result<_>>()?;
    let weighted: Vec<(f64, &ChoiMatrix)> = nodes.iter().map(|n| n.1).zip(channels.iter()).collect();
    Ok((mix_channels(&weighted)?, spec))
}

fn metadata(spec: &MotionalSpec, model: &NoiseModel, nodes: usize) -> ReportMetadata {
    let mut meta = ReportMetadata::for_spec(spec);
    meta.sigma_hz = Some(FrequencyOffset(model.sigma).hz());
    meta.delta_nu_hz = Some(FrequencyOffset(model.center).hz());
    meta.quadrature_nodes = Some(nodes);
    meta
}

/// Infidelity of the averaged channel, and the quadrature convergence check.
pub fn quadrature_check(params: &GateParams, spec: &MotionalSpec, model: &NoiseModel) -> Result<QuadratureCheck> {
    let ideal = ideal_gate_choi();
    let (base, _) = averaged_channel(params, spec, model)?;
    let reference = model.with_order(2 * model.quadrature_order + 1)?;
    let (fine, _) = averaged_channel(params, spec, &reference)?;
    let a = process_infidelity(&base, &ideal)?;
    let b = process_infidelity(&fine, &ideal)?;
    let shift = if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
    Ok(QuadratureCheck {
        order: model.quadrature_order,
        reference_order: reference.quadrature_order,
        relative_shift: shift,
        converged: model.sigma == 0.0 || shift <= QUADRATURE_TOLERANCE,
    })
}

/// Gate error of the noise-averaged channel.
pub fn averaged_gate_error(params: &GateParams, spec: &MotionalSpec, model: &NoiseModel) -> Result<ErrorReport> {
    let (choi, used) = averaged_channel(params, spec, model)?;
    let nodes = model.nodes()?.len();
    error_report(&choi, &ideal_gate_choi(), metadata(&used, model, nodes))
}

/// [`averaged_gate_error`] plus a comparison against order `2q + 1`; logs a
/// warning when the infidelity moves by more than [`QUADRATURE_TOLERANCE`].
pub fn averaged_gate_error_checked(
    params: &GateParams,
    spec: &MotionalSpec,
    model: &NoiseModel,
) -> Result<(ErrorReport, QuadratureCheck)> {
    let report = averaged_gate_error(params, spec, model)?;
    let check = quadrature_check(params, spec, model)?;
    if !check.converged {
        warn!(
            "quadrature order {} not converged: infidelity shifts by {:.2}% at order {}",
            check.order,
            100.0 * check.relative_shift,
            check.reference_order
        );
    }
    Ok((report, check))
}

/// Gate error at each fixed trap-frequency offset.
pub fn drift_sweep(params: &GateParams, spec: &MotionalSpec, offsets: &[FrequencyOffset]) -> Result<Vec<ErrorReport>> {
    for o in offsets {
        params.check_offset(*o)?;
    }
    let spec = spec_for_nodes(params, spec, offsets)?;
    let ideal = ideal_gate_choi();
    offsets
        .par_iter()
        .map(|&o| {
            let choi = gate_channel(params, o, &spec)?;
            let mut meta = ReportMetadata::for_spec(&spec);
            meta.delta_nu_hz = Some(o.hz());
            error_report(&choi, &ideal, meta)
        })
        .collect()
}

/// Averaged gate error at each displacement phase.
pub fn phase_scan(params: &GateParams, spec: &MotionalSpec, model: &NoiseModel, phis: &[f64]) -> Result<Vec<ErrorReport>> {
    phis.par_iter()
        .map(|&phi| averaged_gate_error(params, &spec.with_phi(phi), model))
        .collect()
}

fn objective_value(params: &GateParams, spec: &MotionalSpec, model: &NoiseModel, objective: PhaseObjective) -> Result<f64> {
    let (choi, _) = averaged_channel(params, spec, model)?;
    let ideal = ideal_gate_choi();
    match objective {
        PhaseObjective::Infidelity => process_infidelity(&choi, &ideal),
        PhaseObjective::Diamond => Ok(diamond_distance(&choi, &ideal)?.value),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseOptimum {
    pub phi: f64,
    pub report: ErrorReport,
    /// Coarse scan as `(φ, objective)` over `[0, π)`.
    pub scan: Vec<(f64, f64)>,
    /// Set when `|α|²` is too small for the phase to matter.
    pub flat: bool,
}

/// Phase in `[0, π)` minimizing `objective`: a coarse scan followed by
/// golden-section refinement around the best scan point.
pub fn optimize_phase(
    params: &GateParams,
    spec: &MotionalSpec,
    model: &NoiseModel,
    objective: PhaseObjective,
) -> Result<PhaseOptimum> {
    let flat = spec.alpha_sq() < FLAT_ALPHA_SQ;
    if flat {
        warn!("|α|² = {:.1e}: phase landscape is flat, returning φ = 0", spec.alpha_sq());
        let report = averaged_gate_error(params, &spec.with_phi(0.0), model)?;
        return Ok(PhaseOptimum { phi: 0.0, report, scan: Vec::new(), flat });
    }
    let step = PI / COARSE_PHASES as f64;
    let eval = |phi: f64| objective_value(params, &spec.with_phi(phi), model, objective);
    let scan: Vec<(f64, f64)> = (0..COARSE_PHASES)
        .into_par_iter()
        .map(|k| {
            let phi = k as f64 * step;
            eval(phi).map(|v| (phi, v))
        })
        .collect::<Result<_>>()?;
    let best = scan
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(k, _)| k)
        .expect("nonempty scan");

    // golden section on [φ_best − step, φ_best + step]; the landscape is π-periodic
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (scan[best].0 - step, scan[best].0 + step);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > PHASE_TOLERANCE {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
    }
    let mut phi = 0.5 * (a + b);
    if eval(phi)? > scan[best].1 {
        phi = scan[best].0;
    }
    let phi = phi.rem_euclid(PI);
    let report = averaged_gate_error(params, &spec.with_phi(phi), model)?;
    Ok(PhaseOptimum { phi, report, scan, flat })
}

/// Averaged gate error over a grid of `(|α|², n̄_th)` at fixed phase.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorSurface {
    pub alpha_sq: Vec<f64>,
    pub nbar: Vec<f64>,
    pub phi: f64,
    /// `cells[i][j]` is at `(alpha_sq[i], nbar[j])`.
    pub cells: Vec<Vec<ErrorReport>>,
}

pub fn error_surface(
    params: &GateParams,
    model: &NoiseModel,
    alpha_sq: &[f64],
    nbar: &[f64],
    phi: f64,
) -> Result<ErrorSurface> {
    let flat: Vec<ErrorReport> = (0..alpha_sq.len() * nbar.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / nbar.len(), k % nbar.len());
            let spec = MotionalSpec::from_alpha_sq(alpha_sq[i], phi, nbar[j], 1)?;
            averaged_gate_error(params, &spec, model)
        })
        .collect::<Result<_>>()?;
    let cells = flat.chunks(nbar.len().max(1)).map(<[ErrorReport]>::to_vec).collect();
    Ok(ErrorSurface { alpha_sq: alpha_sq.to_vec(), nbar: nbar.to_vec(), phi, cells })
}
