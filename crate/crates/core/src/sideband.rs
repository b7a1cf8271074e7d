//! Blue-sideband Rabi flopping: model, binomial likelihood, shared-parameter
//! maximum-likelihood fits and likelihood-contour uncertainties.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use log::warn;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::channel::ErrorReport;
use crate::error::{Error, Result};
use crate::fock::{choose_truncation, photon_distribution, populations, MotionalSpec, DEFAULT_LEAKAGE};
use crate::msgate::GateParams;
use crate::noise::{averaged_gate_error, NoiseModel};

/// Excited-state probabilities are clamped to `[P_CLAMP, 1 − P_CLAMP]` in the likelihood.
pub const P_CLAMP: f64 = 1e-9;

const NM_MAX_ITERS: u64 = 4000;
const NM_SD_TOLERANCE: f64 = 1e-10;
const FIT_STARTS: usize = 8;
const MAX_POLISH_RESTARTS: usize = 5;
const POLISH_TOLERANCE: f64 = 1e-7;
const CONTOUR_POINTS: usize = 41;
const CONTOUR_MIN_CELLS: usize = 4;
const CONTOUR_ADAPTATIONS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiPoint {
    /// Seconds.
    pub time: f64,
    pub excited: u64,
    pub shots: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiDataset {
    pub label: String,
    points: Vec<RabiPoint>,
}

impl RabiDataset {
    pub fn new(label: impl Into<String>, points: Vec<RabiPoint>) -> Result<Self> {
        let label = label.into();
        let bad = |reason: String| Error::InvalidDataset { label: label.clone(), reason };
        for (i, p) in points.iter().enumerate() {
            if !(p.time >= 0.0) || !p.time.is_finite() {
                return Err(bad(format!("point {i}: time {} must be finite and >= 0", p.time)));
            }
            if p.shots == 0 {
                return Err(bad(format!("point {i}: shots must be positive")));
            }
            if p.excited > p.shots {
                return Err(bad(format!("point {i}: excited count {} exceeds shots {}", p.excited, p.shots)));
            }
            if i > 0 && p.time <= points[i - 1].time {
                return Err(bad(format!("point {i}: times must be strictly increasing")));
            }
        }
        Ok(Self { label, points })
    }

    pub fn points(&self) -> &[RabiPoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Shared sideband rate and decoherence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiModel {
    /// `ηΩ` in `Ω_{n,n+1} = ηΩ√(n+1)`, rad/s.
    pub omega_sb: f64,
    /// `γ₀` in `γ_n = γ₀(n+1)`, 1/s.
    pub gamma0: f64,
}

impl RabiModel {
    pub fn new(omega_sb: f64, gamma0: f64) -> Result<Self> {
        if !(omega_sb > 0.0) || !omega_sb.is_finite() {
            return Err(Error::invalid("omega_sb", format!("must be positive, got {omega_sb}")));
        }
        if !(gamma0 >= 0.0) || !gamma0.is_finite() {
            return Err(Error::invalid("gamma0", format!("must be >= 0, got {gamma0}")));
        }
        Ok(Self { omega_sb, gamma0 })
    }
}

/// Per-dataset motional parameters; the displacement phase does not enter `P_e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidebandState {
    pub alpha_sq: f64,
    pub nbar: f64,
}

impl SidebandState {
    pub fn new(alpha_sq: f64, nbar: f64) -> Result<Self> {
        if !(alpha_sq >= 0.0) || !(nbar >= 0.0) || !alpha_sq.is_finite() || !nbar.is_finite() {
            return Err(Error::invalid("state", format!("|α|² = {alpha_sq}, n̄ = {nbar} must be finite and >= 0")));
        }
        Ok(Self { alpha_sq, nbar })
    }

    /// Fock populations truncated per [`choose_truncation`] and renormalized.
    pub fn populations(&self) -> Result<Vec<f64>> {
        let dim = choose_truncation(self.alpha_sq.sqrt(), self.nbar, DEFAULT_LEAKAGE)?;
        let mut p = photon_distribution(self.alpha_sq, self.nbar, dim);
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        Ok(p)
    }
}

/// `P_n = ⟨n|ρ|n⟩` at the truncation carried by `spec`.
pub fn population_distribution(spec: &MotionalSpec) -> Vec<f64> {
    populations(spec.alpha_mag, spec.nbar_th, spec.truncation)
}

/// `P_e(t) = ½ Σ P_n [1 − cos(2Ω_{n,n+1}t) e^{−γ_n t}]` with the populations
/// normalized to unit sum.
pub fn excited_probability_from_populations(model: &RabiModel, pops: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    let mut total = 0.0;
    for (n, &p) in pops.iter().enumerate() {
        let k = (n + 1) as f64;
        let rate = model.omega_sb * k.sqrt();
        acc += p * (1.0 - (2.0 * rate * t).cos() * (-model.gamma0 * k * t).exp());
        total += p;
    }
    if total > 0.0 {
        (0.5 * acc / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn excited_probability(model: &RabiModel, spec: &MotionalSpec, t: f64) -> f64 {
    excited_probability_from_populations(model, &population_distribution(spec), t)
}

fn point_log_likelihood(p: &RabiPoint, pe: f64) -> f64 {
    let q = pe.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let k = p.excited as f64;
    let m = p.shots as f64;
    ln_binomial(p.shots, p.excited) + k * q.ln() + (m - k) * (1.0 - q).ln()
}

fn dataset_log_likelihood(model: &RabiModel, state: &SidebandState, data: &RabiDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pops = state.populations()?;
    Ok(data
        .points
        .iter()
        .map(|p| point_log_likelihood(p, excited_probability_from_populations(model, &pops, p.time)))
        .sum())
}

/// Binomial log-likelihood summed over datasets, with `model` shared and one
/// state per dataset.
pub fn log_likelihood(model: &RabiModel, states: &[SidebandState], data: &[RabiDataset]) -> Result<f64> {
    if states.len() != data.len() {
        return Err(Error::invalid("states", format!("{} states for {} datasets", states.len(), data.len())));
    }
    let mut total = 0.0;
    for (s, d) in states.iter().zip(data) {
        total += dataset_log_likelihood(model, s, d)?;
    }
    Ok(total)
}

/// Bounds of the fit parameters. Angular rates in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub omega_sb: (f64, f64),
    pub gamma0: (f64, f64),
    pub alpha_sq: (f64, f64),
    pub nbar: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        let tau = std::f64::consts::TAU;
        Self { omega_sb: (tau * 2e3, tau * 50e3), gamma0: (10.0, 1e5), alpha_sq: (0.0, 3.0), nbar: (0.0, 3.0) }
    }
}

impl SearchBox {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64), positive: bool| lo.is_finite() && hi.is_finite() && lo < hi && (lo > 0.0 || !positive && lo >= 0.0);
        if !ok(self.omega_sb, true) || !ok(self.gamma0, true) || !ok(self.alpha_sq, false) || !ok(self.nbar, false) {
            return Err(Error::invalid("search_box", format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEstimate {
    pub label: String,
    pub alpha_sq: f64,
    pub nbar: f64,
    pub alpha_sq_uncertainty: f64,
    pub nbar_uncertainty: f64,
    /// The e^{−1} region reaches `|α|² = 0` or `n̄ = 0`; uncertainties are full ranges.
    pub boundary_pinned: bool,
    pub contour: ContourGrid,
}

impl DatasetEstimate {
    pub fn state(&self) -> SidebandState {
        SidebandState { alpha_sq: self.alpha_sq, nbar: self.nbar }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub omega_sb: f64,
    pub gamma0: f64,
    pub datasets: Vec<DatasetEstimate>,
    pub max_log_likelihood: f64,
}

impl FitResult {
    pub fn model(&self) -> RabiModel {
        RabiModel { omega_sb: self.omega_sb, gamma0: self.gamma0 }
    }
}

/// Log-likelihood over a `(|α|², n̄)` grid with the shared parameters fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub alpha_sq: Vec<f64>,
    pub nbar: Vec<f64>,
    /// `values[i][j]` at `(alpha_sq[i], nbar[j])`.
    pub values: Vec<Vec<f64>>,
    pub max: f64,
    /// `max − 1`, the e^{−1} likelihood-ratio level.
    pub threshold: f64,
    /// The region above the threshold does not touch a grid edge other than a zero bound.
    pub closed: bool,
    /// The region spans fewer than four cells along some axis.
    pub coarse: bool,
}

/// Uncertainties read off a [`ContourGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourUncertainty {
    pub alpha_sq_range: (f64, f64),
    pub nbar_range: (f64, f64),
    pub alpha_sq: f64,
    pub nbar: f64,
    pub boundary_pinned: bool,
}

/// How the per-dataset entries `[u, v]` of the parameter vector map to `(|α|², n̄)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Coordinates {
    /// `|α|² = u²`, `n̄ = v²`: smooth everywhere, flat at zero.
    Squared,
    /// `|α|² = |u|`, `n̄ = |v|`: reaches a zero bound with nonzero slope.
    Reflected,
}

struct Objective<'a> {
    data: &'a [RabiDataset],
    bounds: SearchBox,
    coords: Coordinates,
}

/// Parameter vector: `[ln Ω, ln γ₀, u₁, v₁, u₂, v₂, …]`.
fn decode(x: &[f64], coords: Coordinates) -> (RabiModel, Vec<SidebandState>) {
    let model = RabiModel { omega_sb: x[0].exp(), gamma0: x[1].exp() };
    let f = |u: f64| match coords {
        Coordinates::Squared => u * u,
        Coordinates::Reflected => u.abs(),
    };
    let states = x[2..].chunks(2).map(|c| SidebandState { alpha_sq: f(c[0]), nbar: f(c[1]) }).collect();
    (model, states)
}

fn encode(model: &RabiModel, states: &[SidebandState], coords: Coordinates) -> Vec<f64> {
    let f = |v: f64| match coords {
        Coordinates::Squared => v.sqrt(),
        Coordinates::Reflected => v,
    };
    let mut x = vec![model.omega_sb.ln(), model.gamma0.ln()];
    for s in states {
        x.push(f(s.alpha_sq));
        x.push(f(s.nbar));
    }
    x
}

impl Objective<'_> {
    fn inside(&self, model: &RabiModel, states: &[SidebandState]) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(model.omega_sb, self.bounds.omega_sb)
            && within(model.gamma0, self.bounds.gamma0)
            && states.iter().all(|s| within(s.alpha_sq, self.bounds.alpha_sq) && within(s.nbar, self.bounds.nbar))
    }

    fn negative_ll(&self, x: &[f64]) -> f64 {
        let (model, states) = decode(x, self.coords);
        if !self.inside(&model, &states) {
            return f64::INFINITY;
        }
        match log_likelihood(&model, &states, self.data) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        }
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.negative_ll(x))
    }
}

fn lattice(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let f = (k as f64 + 0.5) / n as f64;
            if log {
                (lo.ln() + f * (hi.ln() - lo.ln())).exp()
            } else {
                lo + f * (hi - lo)
            }
        })
        .collect()
}

/// Starting points from a coarse lattice. For fixed shared parameters the
/// likelihood separates by dataset, so each dataset's state is chosen
/// independently from its own sub-lattice.
fn lattice_starts(objective: &Objective<'_>) -> Vec<(f64, Vec<f64>)> {
    let b = objective.bounds;
    let omegas = lattice(b.omega_sb.0, b.omega_sb.1, 48, true);
    let gammas = lattice(b.gamma0.0, b.gamma0.1, 5, true);
    let alphas = lattice(b.alpha_sq.0, b.alpha_sq.1.min(2.0), 5, false);
    let nbars = lattice(b.nbar.0, b.nbar.1.min(2.0), 5, false);
    let shared: Vec<(f64, f64)> = omegas.iter().flat_map(|&o| gammas.iter().map(move |&g| (o, g))).collect();
    let mut scored: Vec<(f64, Vec<f64>)> = shared
        .par_iter()
        .map(|&(o, g)| {
            let model = RabiModel { omega_sb: o, gamma0: g };
            let mut total = 0.0;
            let mut states = Vec::with_capacity(objective.data.len());
            for d in objective.data {
                let mut best = (f64::NEG_INFINITY, SidebandState { alpha_sq: alphas[0], nbar: nbars[0] });
                for &a in &alphas {
                    for &n in &nbars {
                        let s = SidebandState { alpha_sq: a, nbar: n };
                        let v = dataset_log_likelihood(&model, &s, d).unwrap_or(f64::NEG_INFINITY);
                        if v > best.0 {
                            best = (v, s);
                        }
                    }
                }
                total += best.0;
                states.push(best.1);
            }
            (-total, encode(&model, &states, objective.coords))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.truncate(FIT_STARTS);
    scored
}

fn simplex(x0: &[f64]) -> Vec<Vec<f64>> {
    let mut pts = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut p = x0.to_vec();
        p[i] += match i {
            0 => 0.02,
            1 => 0.3,
            _ => 0.1,
        };
        pts.push(p);
    }
    pts
}

fn nelder_mead(objective: &Objective<'_>, x0: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
    let solver = NelderMead::new(simplex(x0))
        .with_sd_tolerance(NM_SD_TOLERANCE)
        .map_err(|e| Error::invalid("optimizer", e.to_string()))?;
    let run = Executor::new(Objective { data: objective.data, bounds: objective.bounds, coords: objective.coords }, solver)
        .configure(|s| s.max_iters(NM_MAX_ITERS))
        .run()
        .map_err(|e| Error::invalid("optimizer", e.to_string()))?;
    let state = run.state();
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let best = state.get_best_param().cloned().unwrap_or_else(|| x0.to_vec());
    Ok((best, state.get_best_cost(), converged))
}

/// Maximum-likelihood fit with `(Ω_sb, γ₀)` shared across datasets and
/// `(|α|², n̄)` per dataset, followed by contour uncertainties.
pub fn fit_mle(data: &[RabiDataset], bounds: &SearchBox) -> Result<FitResult> {
    if data.is_empty() {
        return Err(Error::invalid("data", "at least one dataset is required"));
    }
    bounds.validate()?;
    let objective = Objective { data, bounds: *bounds, coords: Coordinates::Squared };
    let starts = lattice_starts(&objective);
    let runs: Vec<(Vec<f64>, f64, bool)> = starts
        .par_iter()
        .map(|(_, x0)| nelder_mead(&objective, x0))
        .collect::<Result<_>>()?;
    let (x, mut cost, _) = runs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");

    // restart from the best point until a fresh simplex no longer improves it;
    // reflected coordinates let the polish settle exactly on a zero bound
    let polish = Objective { data, bounds: *bounds, coords: Coordinates::Reflected };
    let (model, states) = decode(&x, Coordinates::Squared);
    let mut x = encode(&model, &states, Coordinates::Reflected);
    let mut settled = false;
    for _ in 0..MAX_POLISH_RESTARTS {
        let (nx, ncost, converged) = nelder_mead(&polish, &x)?;
        let improvement = cost - ncost;
        if ncost < cost {
            x = nx;
            cost = ncost;
        }
        if converged && improvement.abs() < POLISH_TOLERANCE {
            settled = true;
            break;
        }
    }
    if !settled || !cost.is_finite() {
        return Err(Error::FitNonConvergence { restarts: MAX_POLISH_RESTARTS, best: -cost });
    }

    let (model, states) = decode(&x, Coordinates::Reflected);
    let datasets = data
        .par_iter()
        .zip(states.par_iter())
        .map(|(d, s)| {
            let contour = adaptive_contour(&model, s, d, bounds)?;
            let unc = contour_uncertainty(&contour);
            Ok(DatasetEstimate {
                label: d.label.clone(),
                alpha_sq: s.alpha_sq,
                nbar: s.nbar,
                alpha_sq_uncertainty: unc.alpha_sq,
                nbar_uncertainty: unc.nbar,
                boundary_pinned: unc.boundary_pinned,
                contour,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FitResult { omega_sb: model.omega_sb, gamma0: model.gamma0, datasets, max_log_likelihood: -cost })
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn grid_values(model: &RabiModel, data: &RabiDataset, alpha_sq: &[f64], nbar: &[f64]) -> Result<Vec<Vec<f64>>> {
    alpha_sq
        .par_iter()
        .map(|&a| {
            nbar.iter()
                .map(|&n| dataset_log_likelihood(model, &SidebandState { alpha_sq: a, nbar: n }, data))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

fn build_contour(alpha_sq: Vec<f64>, nbar: Vec<f64>, values: Vec<Vec<f64>>, reference_max: f64) -> ContourGrid {
    let grid_max = values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let max = grid_max.max(reference_max);
    let threshold = max - 1.0;
    let (na, nn) = (alpha_sq.len(), nbar.len());
    let inside = |i: usize, j: usize| values[i][j] >= threshold;
    let mut closed = true;
    let (mut imin, mut imax, mut jmin, mut jmax) = (usize::MAX, 0, usize::MAX, 0);
    for i in 0..na {
        for j in 0..nn {
            if inside(i, j) {
                imin = imin.min(i);
                imax = imax.max(i);
                jmin = jmin.min(j);
                jmax = jmax.max(j);
                let open_low_a = i == 0 && alpha_sq[0] > 0.0;
                let open_low_n = j == 0 && nbar[0] > 0.0;
                if open_low_a || open_low_n || i == na - 1 || j == nn - 1 {
                    closed = false;
                }
            }
        }
    }
    let coarse = imin == usize::MAX || imax - imin + 1 < CONTOUR_MIN_CELLS || jmax - jmin + 1 < CONTOUR_MIN_CELLS;
    ContourGrid { alpha_sq, nbar, values, max, threshold, closed, coarse }
}

/// Log-likelihood of one dataset over a `(|α|², n̄)` grid with the fitted
/// shared parameters held fixed.
pub fn likelihood_contour(
    fit: &FitResult,
    data: &[RabiDataset],
    dataset_index: usize,
    alpha_sq: &[f64],
    nbar: &[f64],
) -> Result<ContourGrid> {
    let d = data
        .get(dataset_index)
        .ok_or_else(|| Error::invalid("dataset_index", format!("{dataset_index} out of range")))?;
    let est = fit
        .datasets
        .get(dataset_index)
        .ok_or_else(|| Error::invalid("dataset_index", format!("{dataset_index} out of range")))?;
    if alpha_sq.len() < 2 || nbar.len() < 2 {
        return Err(Error::invalid("grid", "need at least two points per axis"));
    }
    let model = fit.model();
    let values = grid_values(&model, d, alpha_sq, nbar)?;
    let reference = dataset_log_likelihood(&model, &est.state(), d)?;
    let grid = build_contour(alpha_sq.to_vec(), nbar.to_vec(), values, reference);
    if grid.coarse {
        warn!("contour for `{}` spans fewer than {CONTOUR_MIN_CELLS} cells; refine the grid", d.label);
    }
    Ok(grid)
}

/// Grid around the estimate, widened while the e^{−1} region is cut by the
/// window and narrowed while it covers too few cells.
fn adaptive_contour(model: &RabiModel, state: &SidebandState, data: &RabiDataset, bounds: &SearchBox) -> Result<ContourGrid> {
    let reference = dataset_log_likelihood(model, state, data)?;
    let (mut wa, mut wn) = (0.1, 0.1);
    let mut grid = None;
    for _ in 0..CONTOUR_ADAPTATIONS {
        let a_lo = (state.alpha_sq - wa).max(bounds.alpha_sq.0);
        let a_hi = (state.alpha_sq + wa).min(bounds.alpha_sq.1);
        let n_lo = (state.nbar - wn).max(bounds.nbar.0);
        let n_hi = (state.nbar + wn).min(bounds.nbar.1);
        let alpha_sq = axis(a_lo, a_hi, CONTOUR_POINTS);
        let nbar = axis(n_lo, n_hi, CONTOUR_POINTS);
        let values = grid_values(model, data, &alpha_sq, &nbar)?;
        let g = build_contour(alpha_sq, nbar, values, reference);
        let unc = contour_uncertainty(&g);
        let step_a = (a_hi - a_lo) / (CONTOUR_POINTS - 1) as f64;
        let step_n = (n_hi - n_lo) / (CONTOUR_POINTS - 1) as f64;
        let span_a = (unc.alpha_sq_range.1 - unc.alpha_sq_range.0) / step_a;
        let span_n = (unc.nbar_range.1 - unc.nbar_range.0) / step_n;
        let at_cap = a_hi >= bounds.alpha_sq.1 && n_hi >= bounds.nbar.1;
        let mut changed = false;
        if !g.closed && !at_cap {
            wa *= 2.0;
            wn *= 2.0;
            changed = true;
        } else {
            if span_a < (CONTOUR_POINTS / 4) as f64 {
                wa /= 3.0;
                changed = true;
            }
            if span_n < (CONTOUR_POINTS / 4) as f64 {
                wn /= 3.0;
                changed = true;
            }
        }
        grid = Some(g);
        if !changed {
            break;
        }
    }
    let g = grid.expect("at least one adaptation");
    if g.coarse {
        warn!("contour for `{}` spans fewer than {CONTOUR_MIN_CELLS} cells", data.label);
    }
    Ok(g)
}

fn crossing(x0: f64, x1: f64, v0: f64, v1: f64, level: f64) -> f64 {
    if v1 == v0 {
        0.5 * (x0 + x1)
    } else {
        x0 + (level - v0) / (v1 - v0) * (x1 - x0)
    }
}

/// Extent of the region above `max − 1`, with linear interpolation at its
/// edges. Uncertainty is half the extent, or the full extent for both
/// parameters when the region reaches a zero bound.
pub fn contour_uncertainty(grid: &ContourGrid) -> ContourUncertainty {
    let (a, n, v, thr) = (&grid.alpha_sq, &grid.nbar, &grid.values, grid.threshold);
    let mut a_rng = (f64::INFINITY, f64::NEG_INFINITY);
    let mut n_rng = (f64::INFINITY, f64::NEG_INFINITY);
    let mut pinned = false;
    let widen = |r: &mut (f64, f64), x: f64| {
        r.0 = r.0.min(x);
        r.1 = r.1.max(x);
    };
    for i in 0..a.len() {
        for j in 0..n.len() {
            if v[i][j] < thr {
                continue;
            }
            widen(&mut a_rng, a[i]);
            widen(&mut n_rng, n[j]);
            if (i == 0 && a[0] == 0.0) || (j == 0 && n[0] == 0.0) {
                pinned = true;
            }
            if i > 0 && v[i - 1][j] < thr {
                widen(&mut a_rng, crossing(a[i - 1], a[i], v[i - 1][j], v[i][j], thr));
            }
            if i + 1 < a.len() && v[i + 1][j] < thr {
                widen(&mut a_rng, crossing(a[i], a[i + 1], v[i][j], v[i + 1][j], thr));
            }
            if j > 0 && v[i][j - 1] < thr {
                widen(&mut n_rng, crossing(n[j - 1], n[j], v[i][j - 1], v[i][j], thr));
            }
            if j + 1 < n.len() && v[i][j + 1] < thr {
                widen(&mut n_rng, crossing(n[j], n[j + 1], v[i][j], v[i][j + 1], thr));
            }
        }
    }
    if a_rng.0 > a_rng.1 {
        return ContourUncertainty { alpha_sq_range: (0.0, 0.0), nbar_range: (0.0, 0.0), alpha_sq: 0.0, nbar: 0.0, boundary_pinned: false };
    }
    let factor = if pinned { 1.0 } else { 0.5 };
    ContourUncertainty {
        alpha_sq_range: a_rng,
        nbar_range: n_rng,
        alpha_sq: factor * (a_rng.1 - a_rng.0),
        nbar: factor * (n_rng.1 - n_rng.0),
        boundary_pinned: pinned,
    }
}

/// Averaged gate error for each fitted dataset at displacement phase `phi`.
pub fn predict_gate_error(fit: &FitResult, params: &GateParams, model: &NoiseModel, phi: f64) -> Result<Vec<ErrorReport>> {
    fit.datasets
        .iter()
        .map(|d| {
            let spec = MotionalSpec::from_alpha_sq(d.alpha_sq, phi, d.nbar, 1)?;
            averaged_gate_error(params, &spec, model)
        })
        .collect()
}

/// Binomially sampled dataset from the model at the given times (seconds).
pub fn synthetic_dataset(
    label: impl Into<String>,
    model: &RabiModel,
    state: &SidebandState,
    times: &[f64],
    shots: u64,
    rng: &mut impl Rng,
) -> Result<RabiDataset> {
    let pops = state.populations()?;
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        let pe = excited_probability_from_populations(model, &pops, t);
        let dist = Binomial::new(shots, pe).map_err(|e| Error::invalid("shots", e.to_string()))?;
        points.push(RabiPoint { time: t, excited: dist.sample(rng), shots });
    }
    RabiDataset::new(label, points)
}

/// `count` evenly spaced times from `first` to `last` inclusive.
pub fn time_grid(first: f64, last: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![first],
        _ => axis(first, last, count),
    }
}
