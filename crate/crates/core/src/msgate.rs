//! Mølmer–Sørensen gate dynamics in the Lamb–Dicke, resolved-sideband limit.
//!
//! Spin basis ordering is `|00⟩, |01⟩, |10⟩, |11⟩` with the first ion as the
//! most significant index, and `⟨0|σ_y|1⟩ = −i`. Composite spin-motion
//! operators are `spin ⊗ motion`, i.e. row `s * N + m`.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{displacement_matrix_raw, low_block, DEFAULT_LEAKAGE};
use crate::linalg::{c, hermitize, kron, CMatrix, I};

/// Calibrated drive parameters. All frequencies are angular (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub eta_omega: f64,
    /// Nominal detuning; negative for counter-clockwise loops.
    pub delta0: f64,
    pub tau: f64,
    pub loops: u32,
    pub nu0: f64,
}

/// Trap-frequency error `δν` in rad/s. The gate detuning becomes `δ₀ − δν`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FrequencyOffset(pub f64);

impl FrequencyOffset {
    pub const ZERO: FrequencyOffset = FrequencyOffset(0.0);

    pub fn from_hz(hz: f64) -> Self {
        FrequencyOffset(TAU * hz)
    }

    pub fn angular(self) -> f64 {
        self.0
    }

    pub fn hz(self) -> f64 {
        self.0 / TAU
    }
}

/// Choose `δ₀ = −2πK/τ` and `ηΩ = 2π√K/(2τ)` so that `K` counter-clockwise
/// loops close at `τ` with `B(τ) = −π/2`.
pub fn calibrate_gate(loops: u32, tau: f64, nu0: f64) -> Result<GateParams> {
    if loops == 0 {
        return Err(Error::invalid("loops", "must be >= 1"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
    }
    if !(nu0 >= 0.0 && nu0.is_finite()) {
        return Err(Error::invalid("nu0", format!("must be >= 0, got {nu0}")));
    }
    let k = f64::from(loops);
    Ok(GateParams { eta_omega: TAU * k.sqrt() / (2.0 * tau), delta0: -TAU * k / tau, tau, loops, nu0 })
}

impl GateParams {
    pub fn detuning(&self, offset: FrequencyOffset) -> f64 {
        self.delta0 - offset.0
    }

    /// Offsets beyond `5|δ₀|` leave the single-sideband regime.
    pub fn check_offset(&self, offset: FrequencyOffset) -> Result<()> {
        if !offset.0.is_finite() || offset.0.abs() >= 5.0 * self.delta0.abs() {
            return Err(Error::invalid(
                "delta_nu",
                format!("|δν|/2π = {:.1} Hz exceeds 5|δ₀|/2π", offset.hz().abs()),
            ));
        }
        Ok(())
    }

    /// Bound on the spin-conditioned excursion `|α(t)|` during the gate:
    /// `min(2ηΩ/|δ|, ηΩτ)`.
    pub fn max_excursion(&self, offset: FrequencyOffset) -> f64 {
        let linear = self.eta_omega * self.tau;
        let delta = self.detuning(offset).abs();
        if delta == 0.0 {
            linear
        } else {
            (2.0 * self.eta_omega / delta).min(linear)
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Phase-space trajectory `α(t) = ηΩ/δ (1 − e^{−iδt})`.
///
/// Written as `iηΩt·sinc(δt/2)·e^{−iδt/2}`, which is exact and has the
/// `iηΩt` limit built in as `δ → 0`.
pub fn trajectory(params: &GateParams, offset: FrequencyOffset, t: f64) -> Complex64 {
    let delta = params.detuning(offset);
    let half = 0.5 * delta * t;
    I * params.eta_omega * t * sinc(half) * Complex64::from_polar(1.0, -half)
}

/// Geometric phase `B(t) = (ηΩ/δ)² (δt − sin δt)`.
pub fn geometric_phase(params: &GateParams, offset: FrequencyOffset, t: f64) -> f64 {
    let delta = params.detuning(offset);
    let x = delta * t;
    let eo_t = params.eta_omega * t;
    // (x − sin x)/x², series for small |x| avoids cancellation
    let shape = if x.abs() < 0.1 {
        let x2 = x * x;
        x * (1.0 / 6.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 5040.0 - x2 / 362_880.0)))
    } else {
        (x - x.sin()) / (x * x)
    };
    eo_t * eo_t * shape
}

/// `J_y = (σ_y ⊗ 1 + 1 ⊗ σ_y)/2`.
pub fn jy_matrix() -> CMatrix {
    let sy = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
    let id = CMatrix::identity(2, 2);
    (kron(&sy, &id) + kron(&id, &sy)).scale(0.5)
}

/// Spectral projectors of `J_y` as `(eigenvalue, projector)` for `j = −1, 0, +1`.
pub fn jy_projectors() -> [(f64, CMatrix); 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = [c(s, 0.0), c(0.0, s)];
    let minus = [c(s, 0.0), c(0.0, -s)];
    let product = |a: &[Complex64; 2], b: &[Complex64; 2]| {
        nalgebra::DVector::from_iterator(4, (0..4).map(|k| a[k / 2] * b[k % 2]))
    };
    let pp = product(&plus, &plus);
    let mm = product(&minus, &minus);
    let p_plus = &pp * pp.adjoint();
    let p_minus = &mm * mm.adjoint();
    let p_zero = CMatrix::identity(4, 4) - &p_plus - &p_minus;
    [(-1.0, p_minus), (0.0, p_zero), (1.0, p_plus)]
}

/// `exp(iθ J_y²)` on the spin space.
pub fn spin_phase_gate(theta: f64) -> CMatrix {
    jy_projectors()
        .iter()
        .fold(CMatrix::zeros(4, 4), |acc, (j, p)| acc + p * Complex64::from_polar(1.0, theta * j * j))
}

/// The target entangling gate `exp(i(π/2)J_y²)`.
pub fn ideal_spin_unitary() -> CMatrix {
    spin_phase_gate(FRAC_PI_2)
}

/// Spin-motion propagator on `4 × N` levels.
#[derive(Clone, Debug)]
pub struct GatePropagator {
    matrix: CMatrix,
    dim_motion: usize,
}

impl GatePropagator {
    pub fn from_matrix(matrix: CMatrix, dim_motion: usize) -> Result<Self> {
        if matrix.nrows() != 4 * dim_motion || matrix.ncols() != 4 * dim_motion {
            return Err(Error::invalid("matrix", "propagator must be 4N x 4N"));
        }
        Ok(Self { matrix, dim_motion })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim_motion(&self) -> usize {
        self.dim_motion
    }

    /// Motional block `⟨s| U |s'⟩`.
    pub fn block(&self, s: usize, s_prime: usize) -> nalgebra::DMatrixView<'_, Complex64> {
        let n = self.dim_motion;
        self.matrix.view((s * n, s_prime * n), (n, n))
    }
}

fn low_block_defect(d: &CMatrix) -> f64 {
    let low = low_block(d.nrows());
    let cols = d.columns(0, low);
    let gram = cols.adjoint() * cols;
    let mut worst: f64 = 0.0;
    for i in 0..low {
        for j in 0..low {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).norm());
        }
    }
    worst
}

/// `U(τ) = exp(−iB(τ)J_y²) D(J_y α(τ))`, assembled block-diagonally in the
/// `J_y` eigenbasis and rotated back to the computational spin basis.
pub fn propagator(params: &GateParams, offset: FrequencyOffset, dim: usize) -> Result<GatePropagator> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be >= 1"));
    }
    params.check_offset(offset)?;
    let alpha = trajectory(params, offset, params.tau);
    let phase = geometric_phase(params, offset, params.tau);
    let mut u = CMatrix::zeros(4 * dim, 4 * dim);
    for (j, proj) in jy_projectors() {
        let motion = if j == 0.0 {
            CMatrix::identity(dim, dim)
        } else {
            let d = displacement_matrix_raw(alpha * j, dim);
            let defect = low_block_defect(&d);
            if defect > DEFAULT_LEAKAGE {
                return Err(Error::TruncationInsufficient { dim, retained: 1.0 - defect, budget: DEFAULT_LEAKAGE });
            }
            d * Complex64::from_polar(1.0, -phase * j * j)
        };
        u += kron(&proj, &motion);
    }
    GatePropagator::from_matrix(u, dim)
}

/// Time-ordered product of midpoint exponentials of
/// `H(t) = −ηΩ J_y (a e^{iδt} + a† e^{−iδt})` on a truncated Fock space.
///
/// `J_y` is diagonalised numerically and each motional factor
/// `exp(−i j h(t) dt)` is exponentiated afresh every step.
pub fn brute_force_propagator(
    params: &GateParams,
    offset: FrequencyOffset,
    dim: usize,
    steps: usize,
) -> Result<GatePropagator> {
    if dim == 0 || steps == 0 {
        return Err(Error::invalid("steps", "dim and steps must be >= 1"));
    }
    params.check_offset(offset)?;
    let delta = params.detuning(offset);
    let dt = params.tau / steps as f64;

    let spin = SymmetricEigen::new(jy_matrix());
    let mut eigenvalues: Vec<f64> = Vec::with_capacity(4);
    let mut motional: Vec<CMatrix> = Vec::with_capacity(4);
    for k in 0..4 {
        let j = spin.eigenvalues[k];
        eigenvalues.push(j);
        motional.push(CMatrix::identity(dim, dim));
    }

    let mut h = CMatrix::zeros(dim, dim);
    for step in 0..steps {
        let t = (step as f64 + 0.5) * dt;
        let rot = Complex64::from_polar(1.0, delta * t);
        for n in 0..dim.saturating_sub(1) {
            let s = ((n + 1) as f64).sqrt();
            // a[n, n+1] = sqrt(n+1)
            h[(n, n + 1)] = -params.eta_omega * s * rot;
            h[(n + 1, n)] = -params.eta_omega * s * rot.conj();
        }
        let eig = SymmetricEigen::new(hermitize(&h));
        let v = &eig.eigenvectors;
        for (j, acc) in eigenvalues.iter().zip(motional.iter_mut()) {
            if j.abs() < 1e-12 {
                continue;
            }
            let mut scaled = v.clone();
            for (col, mut column) in scaled.column_iter_mut().enumerate() {
                column *= Complex64::from_polar(1.0, -j * eig.eigenvalues[col] * dt);
            }
            let step_u = scaled * v.adjoint();
            *acc = step_u * &*acc;
        }
    }

    let mut u = CMatrix::zeros(4 * dim, 4 * dim);
    for k in 0..4 {
        let w = spin.eigenvectors.column(k);
        let proj = &w * w.adjoint();
        u += kron(&proj, &motional[k]);
    }
    GatePropagator::from_matrix(u, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, max_abs_diff};
    use approx::assert_relative_eq;

    fn calibrated() -> GateParams {
        calibrate_gate(2, 60e-6, TAU * 3e6).unwrap()
    }

    /// Cumulative trapezoid of the spin-conditioned velocity `dα/dt = iηΩ e^{−iδt}`
    /// together with the signed loop area `∫ (Im α dRe α − Re α dIm α)`.
    fn integrate_loop(params: &GateParams, offset: FrequencyOffset, t_end: f64, n: usize) -> (Complex64, f64) {
        let delta = params.detuning(offset);
        let h = t_end / n as f64;
        let vel = |t: f64| I * params.eta_omega * Complex64::from_polar(1.0, -delta * t);
        let mut alpha = Complex64::new(0.0, 0.0);
        let mut area = 0.0;
        let area_rate = |a: Complex64, v: Complex64| a.im * v.re - a.re * v.im;
        for k in 0..n {
            let t0 = k as f64 * h;
            let (v0, v1) = (vel(t0), vel(t0 + h));
            let next = alpha + (v0 + v1) * (0.5 * h);
            area += 0.5 * h * (area_rate(alpha, v0) + area_rate(next, v1));
            alpha = next;
        }
        (alpha, area)
    }

    #[test]
    fn calibration_values() {
        let p = calibrated();
        assert_relative_eq!(p.delta0 / TAU, -2.0 / 60e-6, max_relative = 1e-14);
        assert_relative_eq!(p.delta0 / TAU, -33_333.333_333, max_relative = 1e-9);
        assert_relative_eq!(p.eta_omega / TAU, 11_785.113_019_775_8, max_relative = 1e-9);

        let q = calibrate_gate(1, 100e-6, 0.0).unwrap();
        assert_relative_eq!(q.delta0 / TAU, -10_000.0, max_relative = 1e-14);
        assert_relative_eq!(q.eta_omega / TAU, 5_000.0, max_relative = 1e-14);

        assert!(calibrate_gate(0, 60e-6, 0.0).is_err());
        assert!(calibrate_gate(2, 0.0, 0.0).is_err());
    }

    #[test]
    fn loops_close_and_phase_is_quarter_turn() {
        for k in 1..=3 {
            for &tau in &[20e-6, 60e-6, 150e-6] {
                let p = calibrate_gate(k, tau, 0.0).unwrap();
                assert!(trajectory(&p, FrequencyOffset::ZERO, tau).norm() < 1e-12);
                assert_relative_eq!(geometric_phase(&p, FrequencyOffset::ZERO, tau), -FRAC_PI_2, max_relative = 1e-12);
            }
        }
        let p = calibrated();
        assert_eq!(trajectory(&p, FrequencyOffset::from_hz(-600.0), 0.0), Complex64::new(0.0, 0.0));
        assert_eq!(geometric_phase(&p, FrequencyOffset::from_hz(-600.0), 0.0), 0.0);
    }

    #[test]
    fn closed_forms_match_loop_quadrature() {
        let p = calibrated();
        for &hz in &[-600.0, 0.0, 1500.0, 3000.0] {
            let off = FrequencyOffset::from_hz(hz);
            let (alpha, area) = integrate_loop(&p, off, p.tau, 200_000);
            let closed = trajectory(&p, off, p.tau);
            assert!((alpha - closed).norm() < 1e-9, "alpha at {hz} Hz: {alpha} vs {closed}");
            let b = geometric_phase(&p, off, p.tau);
            assert_relative_eq!(area, b, max_relative = 1e-9);
        }
        let off = FrequencyOffset::from_hz(-600.0);
        assert!(trajectory(&p, off, p.tau).norm() > 1e-3);
    }

    #[test]
    fn small_detuning_limit() {
        // δ = δ₀ − δν = 0 exactly
        let p = calibrated();
        let off = FrequencyOffset(p.delta0);
        let t = 10e-6;
        let a = trajectory(&p, off, t);
        assert!((a - I * p.eta_omega * t).norm() < 1e-15);
        assert_eq!(geometric_phase(&p, off, t), 0.0);
        // near-zero δ: series agrees with direct formula in double-double sense
        let off = FrequencyOffset(p.delta0 - 50.0);
        let b = geometric_phase(&p, off, t);
        let x: f64 = 50.0 * t;
        assert_relative_eq!(b, (p.eta_omega * t).powi(2) * x / 6.0, max_relative = 1e-6);
    }

    #[test]
    fn projectors_resolve_jy() {
        let jy = jy_matrix();
        let sum = jy_projectors().iter().fold(CMatrix::zeros(4, 4), |acc, (j, p)| acc + p.scale(*j));
        assert!(max_abs_diff(&sum, &jy) < 1e-15);
        let total = jy_projectors().iter().fold(CMatrix::zeros(4, 4), |acc, (_, p)| acc + p);
        assert!(max_abs_diff(&total, &CMatrix::identity(4, 4)) < 1e-15);
        // ⟨0|σ_y|1⟩ = −i on the first ion, i.e. ⟨00|J_y|10⟩ = −i/2
        assert!((jy[(0, 2)] - c(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn perfect_gate_disentangles() {
        let p = calibrated();
        let n = 16;
        let u = propagator(&p, FrequencyOffset::ZERO, n).unwrap();
        let expect = kron(&ideal_spin_unitary(), &CMatrix::identity(n, n));
        assert!(max_abs_diff(u.matrix(), &expect) < 1e-12);
    }

    #[test]
    fn propagator_unitary_and_commutes_with_jy() {
        let p = calibrated();
        let n = 32;
        for &hz in &[-600.0, 3000.0] {
            let u = propagator(&p, FrequencyOffset::from_hz(hz), n).unwrap();
            let m = u.matrix();
            let gram = m.adjoint() * m;
            let low = low_block(n);
            for s in 0..4 {
                for t in 0..4 {
                    let blk = gram.view((s * n, t * n), (low, low)).into_owned();
                    let target = if s == t { CMatrix::identity(low, low) } else { CMatrix::zeros(low, low) };
                    assert!(max_abs_diff(&blk, &target) < 1e-8);
                }
            }
            let jy = kron(&jy_matrix(), &CMatrix::identity(n, n));
            let comm = m * &jy - &jy * m;
            assert!(max_abs(&comm) < 1e-10);
        }
    }

    #[test]
    fn brute_force_step_unitary_and_convergent() {
        let p = calibrated();
        let n = 24;
        let off = FrequencyOffset::from_hz(-600.0);
        let exact = propagator(&p, off, n).unwrap();
        let low = low_block(n);
        let err = |steps: usize| {
            let b = brute_force_propagator(&p, off, n, steps).unwrap();
            let gram = b.matrix().adjoint() * b.matrix();
            assert!(max_abs_diff(&gram, &CMatrix::identity(4 * n, 4 * n)) < 1e-10);
            let mut worst: f64 = 0.0;
            for s in 0..4 {
                for t in 0..4 {
                    let d = b.block(s, t).view((0, 0), (low, low)).into_owned()
                        - exact.block(s, t).view((0, 0), (low, low)).into_owned();
                    worst = worst.max(max_abs(&d));
                }
            }
            worst
        };
        let e1 = err(128);
        let e2 = err(256);
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "midpoint order ratio {ratio} ({e1:e} -> {e2:e})");
    }

    #[test]
    fn offset_sanity_bound() {
        let p = calibrated();
        assert!(propagator(&p, FrequencyOffset(6.0 * p.delta0.abs()), 8).is_err());
        assert!(propagator(&p, FrequencyOffset(f64::NAN), 8).is_err());
    }
}
