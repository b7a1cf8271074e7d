//! Two-qubit channels induced by the gate after tracing out the motional mode.
//!
//! Channels are stored as unnormalized Choi matrices
//! `J = Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)` on `input ⊗ output`, so `Tr J = 4` and
//! trace preservation reads `Tr_out J = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{choose_gate_truncation, motional_density_matrix, MotionalSpec, DEFAULT_LEAKAGE};
use crate::linalg::{hermitize, kron, max_abs, max_abs_diff, min_eigenvalue, partial_trace_second, trace, CMatrix};
use crate::msgate::{ideal_spin_unitary, propagator, FrequencyOffset, GateParams, GatePropagator};
use nalgebra::SymmetricEigen;
use num_complex::Complex64;

pub const SPIN_DIM: usize = 4;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;
pub const TRACE_PRESERVATION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    matrix: CMatrix,
}

/// Deviations measured by [`ChoiMatrix::cptp_report`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CptpReport {
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub trace_preservation_defect: f64,
}

impl CptpReport {
    pub fn passes(&self) -> bool {
        self.hermiticity_defect <= HERMITIAN_TOL
            && self.min_eigenvalue >= -PSD_TOL
            && self.trace_preservation_defect <= TRACE_PRESERVATION_TOL
    }
}

impl ChoiMatrix {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let d2 = SPIN_DIM * SPIN_DIM;
        if matrix.shape() != (d2, d2) {
            return Err(Error::invalid("choi", format!("expected {d2}x{d2}, got {:?}", matrix.shape())));
        }
        Ok(Self { matrix })
    }

    /// Build from the images `E(|i⟩⟨j|)` of the matrix units.
    pub fn from_images(mut image: impl FnMut(usize, usize) -> CMatrix) -> Self {
        let d = SPIN_DIM;
        let mut matrix = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                matrix.view_mut((i * d, j * d), (d, d)).copy_from(&image(i, j));
            }
        }
        Self { matrix }
    }

    pub fn from_unitary(u: &CMatrix) -> Self {
        Self::from_images(|i, j| u.column(i) * u.column(j).adjoint())
    }

    pub fn identity() -> Self {
        Self::from_unitary(&CMatrix::identity(SPIN_DIM, SPIN_DIM))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `E(|i⟩⟨j|)`.
    pub fn image(&self, i: usize, j: usize) -> CMatrix {
        let d = SPIN_DIM;
        self.matrix.view((i * d, j * d), (d, d)).into_owned()
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = SPIN_DIM;
        let mut out = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                out += self.image(i, j) * rho[(i, j)];
            }
        }
        out
    }

    /// `V ∘ E` for a unitary `V` applied after the channel.
    pub fn then_unitary(&self, v: &CMatrix) -> ChoiMatrix {
        let lift = kron(&CMatrix::identity(SPIN_DIM, SPIN_DIM), v);
        ChoiMatrix { matrix: &lift * &self.matrix * lift.adjoint() }
    }

    /// `E ∘ V` for a unitary `V` applied before the channel.
    pub fn after_unitary(&self, v: &CMatrix) -> ChoiMatrix {
        // (V^T ⊗ 1) J (V^T ⊗ 1)†
        let lift = kron(&v.transpose(), &CMatrix::identity(SPIN_DIM, SPIN_DIM));
        ChoiMatrix { matrix: &lift * &self.matrix * lift.adjoint() }
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    pub fn cptp_report(&self) -> CptpReport {
        let herm = max_abs_diff(&self.matrix, &self.matrix.adjoint());
        let min_eig = min_eigenvalue(&self.matrix);
        let reduced = partial_trace_second(&self.matrix, SPIN_DIM, SPIN_DIM);
        let tp = max_abs_diff(&reduced, &CMatrix::identity(SPIN_DIM, SPIN_DIM));
        CptpReport { hermiticity_defect: herm, min_eigenvalue: min_eig, trace_preservation_defect: tp }
    }

    pub fn check_cptp(&self) -> Result<CptpReport> {
        let report = self.cptp_report();
        if report.passes() {
            Ok(report)
        } else {
            Err(Error::NotCptp(format!(
                "hermiticity {:.2e}, min eigenvalue {:.2e}, trace preservation {:.2e}",
                report.hermiticity_defect, report.min_eigenvalue, report.trace_preservation_defect
            )))
        }
    }

    /// `⟨Φ⁺| J/4 |Φ⁺⟩` with `|Φ⁺⟩ = Σ|ii⟩/2`.
    pub fn entanglement_fidelity_with_identity(&self) -> f64 {
        let d = SPIN_DIM;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += self.matrix[(i * d + i, j * d + j)];
            }
        }
        acc.re / (d * d) as f64
    }

    /// Recover `U` from a rank-one Choi matrix, up to a global phase.
    pub fn as_unitary(&self) -> Result<CMatrix> {
        let eig = SymmetricEigen::new(hermitize(&self.matrix));
        let (k, lambda) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty spectrum");
        let defect = (self.trace() - lambda).abs();
        if defect > PSD_TOL {
            return Err(Error::NonUnitaryIdeal { defect });
        }
        let v = eig.eigenvectors.column(k) * Complex64::new(lambda.sqrt(), 0.0);
        let d = SPIN_DIM;
        let u = CMatrix::from_fn(d, d, |o, i| v[i * d + o]);
        let unitarity = max_abs_diff(&(u.adjoint() * &u), &CMatrix::identity(d, d));
        if unitarity > PSD_TOL {
            return Err(Error::NonUnitaryIdeal { defect: unitarity });
        }
        Ok(u)
    }
}

/// `Tr_motion[U (ρ_spin ⊗ ρ_motion) U†]` by direct propagation.
pub fn evolve_spin_state(u: &GatePropagator, rho_motion: &CMatrix, rho_spin: &CMatrix) -> CMatrix {
    let full = kron(rho_spin, rho_motion);
    let evolved = u.matrix() * full * u.matrix().adjoint();
    partial_trace_second(&evolved, SPIN_DIM, u.dim_motion())
}

/// Channel of a spin-motion propagator acting on a fixed motional state.
///
/// Each matrix unit `|i⟩⟨j| ⊗ ρ_motion` is propagated and the motion traced
/// out: `E(|i⟩⟨j|)_{ss'} = Tr(U_{si} ρ U_{s'j}†)`.
pub fn channel_from_propagator(u: &GatePropagator, rho_motion: &CMatrix) -> Result<ChoiMatrix> {
    let d = SPIN_DIM;
    let products: Vec<CMatrix> = (0..d * d)
        .into_par_iter()
        .map(|k| u.block(k / d, k % d) * rho_motion)
        .collect();
    let images: Vec<CMatrix> = (0..d * d)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / d, k % d);
            CMatrix::from_fn(d, d, |s, sp| {
                let g = &products[s * d + i];
                let blk = u.block(sp, j);
                g.iter().zip(blk.iter()).map(|(x, y)| x * y.conj()).sum()
            })
        })
        .collect();
    let choi = ChoiMatrix::from_images(|i, j| images[i * d + j].clone());
    let reduced = partial_trace_second(choi.matrix(), d, d);
    let retained = (0..d).map(|i| reduced[(i, i)].re).fold(f64::INFINITY, f64::min);
    if retained < 1.0 - DEFAULT_LEAKAGE {
        return Err(Error::TruncationInsufficient { dim: u.dim_motion(), retained, budget: DEFAULT_LEAKAGE });
    }
    Ok(choi)
}

/// Normalized truncated motional state for channel construction.
pub(crate) fn normalized_motion(spec: &MotionalSpec) -> Result<CMatrix> {
    let rho = motional_density_matrix(spec)?;
    let tr = rho.trace();
    Ok(rho.into_matrix().unscale(tr))
}

/// Fock truncation for running the gate at each of `offsets` on a state
/// with displacement `alpha_mag` and thermal occupation `nbar_th`.
pub fn gate_truncation(params: &GateParams, alpha_mag: f64, nbar_th: f64, offsets: &[FrequencyOffset]) -> Result<usize> {
    let excursion = offsets
        .iter()
        .map(|&o| params.max_excursion(o))
        .fold(params.max_excursion(FrequencyOffset::ZERO), f64::max);
    choose_gate_truncation(alpha_mag, nbar_th, DEFAULT_LEAKAGE, excursion)
}

/// Two-qubit channel of the gate with trap-frequency error `offset` on the
/// initial motional state `spec` (truncated at `spec.truncation`).
pub fn gate_channel(params: &GateParams, offset: FrequencyOffset, spec: &MotionalSpec) -> Result<ChoiMatrix> {
    let u = propagator(params, offset, spec.truncation)?;
    let rho = normalized_motion(spec)?;
    channel_from_propagator(&u, &rho)
}

/// Choi matrix of `exp(i(π/2)J_y²)`.
pub fn ideal_gate_choi() -> ChoiMatrix {
    ChoiMatrix::from_unitary(&ideal_spin_unitary())
}

/// `U_ideal† ∘ E`: the deviation of `actual` from a unitary reference.
pub fn error_channel(actual: &ChoiMatrix, ideal: &ChoiMatrix) -> Result<ChoiMatrix> {
    let u = ideal.as_unitary()?;
    Ok(actual.then_unitary(&u.adjoint()))
}

/// Convex combination of channels, summed in the given order.
pub fn mix_channels(weighted: &[(f64, &ChoiMatrix)]) -> Result<ChoiMatrix> {
    let sum: f64 = weighted.iter().map(|(w, _)| w).sum();
    if weighted.is_empty() || weighted.iter().any(|(w, _)| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::WeightSum { sum });
    }
    let d2 = SPIN_DIM * SPIN_DIM;
    let mut acc = CMatrix::zeros(d2, d2);
    for (w, choi) in weighted {
        acc += choi.matrix().scale(*w);
    }
    Ok(ChoiMatrix { matrix: acc })
}

/// Error metrics of one channel against the ideal gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Entanglement (process) infidelity.
    pub infidelity: f64,
    /// Reported diamond distance, `‖E − U‖_◇` scaled by the metric convention.
    pub diamond_distance: f64,
    /// Average-gate infidelity `d/(d+1)·I`, recorded alongside.
    pub average_gate_infidelity: f64,
    /// Unscaled `‖E − U‖_◇` from the SDP.
    pub diamond_norm_raw: f64,
    pub sdp_gap: f64,
    pub metadata: ReportMetadata,
}

/// Parameter echo attached to every [`ErrorReport`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub delta_nu_hz: Option<f64>,
    pub sigma_hz: Option<f64>,
    pub alpha_sq: f64,
    pub phi: f64,
    pub nbar: f64,
    pub truncation: usize,
    pub quadrature_nodes: Option<usize>,
    pub diamond_scale: f64,
}

impl ReportMetadata {
    pub fn for_spec(spec: &MotionalSpec) -> Self {
        Self {
            alpha_sq: spec.alpha_sq(),
            phi: spec.phi,
            nbar: spec.nbar_th,
            truncation: spec.truncation,
            diamond_scale: crate::metrics::DIAMOND_SCALE,
            ..Self::default()
        }
    }
}

/// Quick check used by tests and assertions: largest entry of `a − b`.
pub fn choi_distance_max(a: &ChoiMatrix, b: &ChoiMatrix) -> f64 {
    max_abs(&(a.matrix() - b.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, hermitian_eigenvalues};
    use crate::msgate::{brute_force_propagator, calibrate_gate, jy_projectors, trajectory};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn calibrated() -> GateParams {
        calibrate_gate(2, 60e-6, TAU * 3e6).unwrap()
    }

    fn spec_for(p: &GateParams, alpha_sq: f64, phi: f64, nbar: f64) -> MotionalSpec {
        let a = alpha_sq.sqrt();
        let n = gate_truncation(p, a, nbar, &[FrequencyOffset::from_hz(-3000.0)]).unwrap();
        MotionalSpec::new(a, phi, nbar, n).unwrap()
    }

    fn random_hermitian(rng: &mut impl Rng) -> CMatrix {
        let m = CMatrix::from_fn(4, 4, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        hermitize(&m)
    }

    /// Characteristic-function form of the channel: in the J_y eigenbasis,
    /// `|j⟩⟨k| → e^{−iB(j²−k²)} χ((j−k)α(τ)) |j⟩⟨k|` with
    /// `χ(β) = exp(βα₀* − β*α₀ − |β|²(n̄ + 1/2))` for a displaced thermal state.
    fn characteristic_channel(p: &GateParams, off: FrequencyOffset, spec: &MotionalSpec) -> ChoiMatrix {
        let alpha = trajectory(p, off, p.tau);
        let b = crate::msgate::geometric_phase(p, off, p.tau);
        let a0 = spec.alpha();
        let chi = |beta: Complex64| {
            (beta * a0.conj() - beta.conj() * a0 - beta.norm_sqr() * (spec.nbar_th + 0.5)).exp()
        };
        let projs = jy_projectors();
        ChoiMatrix::from_images(|i, j| {
            let mut unit = CMatrix::zeros(4, 4);
            unit[(i, j)] = c(1.0, 0.0);
            let mut out = CMatrix::zeros(4, 4);
            for (jv, pj) in &projs {
                for (kv, pk) in &projs {
                    let factor = Complex64::from_polar(1.0, -b * (jv * jv - kv * kv)) * chi(alpha * (jv - kv));
                    out += pj * &unit * pk * factor;
                }
            }
            out
        })
    }

    #[test]
    fn perfect_gate_is_ideal_unitary() {
        let p = calibrated();
        let spec = MotionalSpec::new(0.0, 0.0, 0.0, 20).unwrap();
        let ch = gate_channel(&p, FrequencyOffset::ZERO, &spec).unwrap();
        assert!(choi_distance_max(&ch, &ideal_gate_choi()) < 1e-12);
        let ev = hermitian_eigenvalues(ch.matrix());
        assert!(ev[..15].iter().all(|e| e.abs() < 1e-8));
        let err = error_channel(&ch, &ideal_gate_choi()).unwrap();
        assert!(choi_distance_max(&err, &ChoiMatrix::identity()) < 1e-8);
    }

    #[test]
    fn ideal_choi_properties() {
        let ideal = ideal_gate_choi();
        assert!((ideal.trace() - 4.0).abs() < 1e-14);
        let ev = hermitian_eigenvalues(ideal.matrix());
        assert!((ev[15] - 4.0).abs() < 1e-12 && ev[14].abs() < 1e-12);
        let mut ket00 = CMatrix::zeros(4, 4);
        ket00[(0, 0)] = c(1.0, 0.0);
        let out = ideal.apply(&ket00);
        let purity = trace(&(&out * &out)).re;
        assert!((purity - 1.0).abs() < 1e-12);
        // only |00⟩ and |11⟩ populated, equally
        assert!((out[(0, 0)].re - 0.5).abs() < 1e-12 && (out[(3, 3)].re - 0.5).abs() < 1e-12);
        assert!(out[(1, 1)].norm() < 1e-12 && out[(2, 2)].norm() < 1e-12);
        assert!((out[(0, 3)].norm() - 0.5).abs() < 1e-12);
        let id = error_channel(&ideal, &ideal).unwrap();
        assert!(choi_distance_max(&id, &ChoiMatrix::identity()) < 1e-12);
    }

    #[test]
    fn error_channel_rejects_mixed_reference() {
        let a = ideal_gate_choi();
        let b = ChoiMatrix::identity();
        let mixed = mix_channels(&[(0.5, &a), (0.5, &b)]).unwrap();
        assert!(matches!(error_channel(&a, &mixed), Err(Error::NonUnitaryIdeal { .. })));
    }

    #[test]
    fn displaced_channel_is_cptp_and_matches_characteristic_form() {
        let p = calibrated();
        let off = FrequencyOffset::from_hz(-600.0);
        for &(a2, phi, nbar) in &[(2.0, 0.0, 0.0), (2.0, 1.3, 0.0), (0.47, 0.4, 0.12), (0.0, 0.0, 0.49)] {
            let spec = spec_for(&p, a2, phi, nbar);
            let ch = gate_channel(&p, off, &spec).unwrap();
            ch.check_cptp().unwrap();
            let oracle = characteristic_channel(&p, off, &spec);
            let diff = choi_distance_max(&ch, &oracle);
            assert!(diff < 1e-9, "({a2}, {phi}, {nbar}): {diff}");
        }
    }

    #[test]
    fn linearity_and_direct_propagation() {
        let p = calibrated();
        let off = FrequencyOffset::from_hz(1200.0);
        let spec = spec_for(&p, 1.0, 0.7, 0.3);
        let u = propagator(&p, off, spec.truncation).unwrap();
        let rho_m = normalized_motion(&spec).unwrap();
        let ch = channel_from_propagator(&u, &rho_m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let r1 = random_hermitian(&mut rng);
            let r2 = random_hermitian(&mut rng);
            let lhs = ch.apply(&(&r1 + &r2));
            let rhs = ch.apply(&r1) + ch.apply(&r2);
            assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
            let direct = evolve_spin_state(&u, &rho_m, &r1);
            assert!(max_abs_diff(&direct, &ch.apply(&r1)) < 1e-10);
        }
    }

    #[test]
    fn matches_brute_force_channel() {
        let p = calibrated();
        let n = 32;
        let spec = MotionalSpec::from_alpha_sq(0.5, 0.3, 0.05, n).unwrap();
        let rho = normalized_motion(&spec).unwrap();
        for &hz in &[0.0, -600.0] {
            let off = FrequencyOffset::from_hz(hz);
            let exact = channel_from_propagator(&propagator(&p, off, n).unwrap(), &rho).unwrap();
            let brute = channel_from_propagator(&brute_force_propagator(&p, off, n, 4096).unwrap(), &rho).unwrap();
            let diff = choi_distance_max(&exact, &brute);
            assert!(diff < 1e-6, "{hz} Hz: {diff}");
        }
    }

    #[test]
    fn mixing() {
        let p = calibrated();
        let spec = spec_for(&p, 2.0, 0.0, 0.0);
        let a = gate_channel(&p, FrequencyOffset::from_hz(-600.0), &spec).unwrap();
        let b = gate_channel(&p, FrequencyOffset::from_hz(900.0), &spec).unwrap();
        assert_eq!(mix_channels(&[(1.0, &a)]).unwrap(), a);
        let self_mix = mix_channels(&[(0.3, &a), (0.7, &a)]).unwrap();
        assert!(choi_distance_max(&self_mix, &a) < 1e-15);

        let mixed = mix_channels(&[(0.25, &a), (0.75, &b)]).unwrap();
        mixed.check_cptp().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut unit = CMatrix::zeros(4, 4);
                unit[(i, j)] = c(1.0, 0.0);
                let direct = a.apply(&unit).scale(0.25) + b.apply(&unit).scale(0.75);
                assert!(max_abs_diff(&mixed.apply(&unit), &direct) < 1e-14);
            }
        }
        assert!(matches!(mix_channels(&[(0.5, &a), (0.6, &b)]), Err(Error::WeightSum { .. })));
        assert!(matches!(mix_channels(&[]), Err(Error::WeightSum { .. })));
    }

    #[test]
    fn undersized_truncation_is_reported() {
        let p = calibrated();
        let spec = MotionalSpec::from_alpha_sq(2.0, 0.0, 0.0, 10).unwrap();
        assert!(matches!(
            gate_channel(&p, FrequencyOffset::from_hz(-600.0), &spec),
            Err(Error::TruncationInsufficient { .. })
        ));
    }
}
