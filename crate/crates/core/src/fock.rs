//! Truncated harmonic-oscillator numerics.
//!
//! States live on Fock levels `0..N`. Displaced Fock states are expanded with
//! the closed-form Laguerre coefficients rather than by exponentiating a
//! truncated generator, so every retained matrix element is exact and the
//! only error is population leaking past level `N - 1`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

/// Default leakage budget for Fock truncation.
pub const DEFAULT_LEAKAGE: f64 = 1e-8;
/// Smallest truncation `choose_truncation` will return.
pub const TRUNCATION_FLOOR: usize = 8;
/// Largest truncation `choose_truncation` will try.
pub const TRUNCATION_CAP: usize = 512;

const HBAR: f64 = 1.054_571_817e-34;
const K_B: f64 = 1.380_649e-23;

/// Initial motional state: a thermal mixture of displaced Fock states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionalSpec {
    pub alpha_mag: f64,
    /// Displacement phase, stored in `[0, 2π)`.
    pub phi: f64,
    pub nbar_th: f64,
    pub truncation: usize,
}

impl MotionalSpec {
    pub fn new(alpha_mag: f64, phi: f64, nbar_th: f64, truncation: usize) -> Result<Self> {
        if !(alpha_mag >= 0.0 && alpha_mag.is_finite()) {
            return Err(Error::invalid("alpha_mag", format!("must be finite and >= 0, got {alpha_mag}")));
        }
        if !(nbar_th >= 0.0 && nbar_th.is_finite()) {
            return Err(Error::invalid("nbar_th", format!("must be finite and >= 0, got {nbar_th}")));
        }
        if !phi.is_finite() {
            return Err(Error::invalid("phi", "must be finite"));
        }
        if truncation == 0 {
            return Err(Error::invalid("truncation", "must be >= 1"));
        }
        Ok(Self { alpha_mag, phi: phi.rem_euclid(TAU), nbar_th, truncation })
    }

    pub fn from_alpha_sq(alpha_sq: f64, phi: f64, nbar_th: f64, truncation: usize) -> Result<Self> {
        if !(alpha_sq >= 0.0) {
            return Err(Error::invalid("alpha_sq", format!("must be >= 0, got {alpha_sq}")));
        }
        Self::new(alpha_sq.sqrt(), phi, nbar_th, truncation)
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::from_polar(self.alpha_mag, self.phi)
    }

    pub fn alpha_sq(&self) -> f64 {
        self.alpha_mag * self.alpha_mag
    }

    /// `⟨n̂⟩ = |α|² + n̄_th`.
    pub fn mean_occupation(&self) -> f64 {
        self.alpha_sq() + self.nbar_th
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi.rem_euclid(TAU);
        self
    }

    pub fn with_truncation(mut self, truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::invalid("truncation", "must be >= 1"));
        }
        self.truncation = truncation;
        Ok(self)
    }
}

/// Generalized Laguerre polynomial `L_n^{(k)}(x)` by the upward three-term recurrence.
pub fn laguerre(n: usize, k: i32, x: f64) -> f64 {
    let k = f64::from(k);
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for i in 1..n {
        let i = i as f64;
        let next = ((2.0 * i + 1.0 + k - x) * cur - (i + k) * prev) / (i + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln k!` for `k = 0..len`.
pub(crate) fn ln_factorials(len: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(len.max(1));
    table.push(0.0);
    for k in 1..len {
        table.push(table[k - 1] + (k as f64).ln());
    }
    table
}

/// Single coefficient `⟨m|D(α)|n⟩`, with `ln_fact` covering `max(m, n)`.
fn displaced_coefficient(alpha: Complex64, m: usize, n: usize, ln_fact: &[f64]) -> Complex64 {
    let x = alpha.norm_sqr();
    let mag = alpha.norm();
    let arg = alpha.arg();
    let (lo, hi) = if m >= n { (n, m) } else { (m, n) };
    let power = hi - lo;
    let lag = laguerre(lo, power as i32, x);
    if power == 0 {
        return Complex64::new((-x / 2.0).exp() * lag, 0.0);
    }
    if mag == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    // |α|^{hi-lo} sqrt(lo!/hi!) e^{-|α|²/2}, evaluated in log space
    let log_scale = power as f64 * mag.ln() + 0.5 * (ln_fact[lo] - ln_fact[hi]) - x / 2.0;
    let scale = log_scale.exp() * lag;
    if m >= n {
        Complex64::from_polar(scale, power as f64 * arg)
    } else {
        // (-α*)^{n-m}
        let sign = if power % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::from_polar(sign * scale, -(power as f64) * arg)
    }
}

fn coefficient_column(alpha: Complex64, n: usize, dim: usize, ln_fact: &[f64]) -> CVector {
    CVector::from_iterator(dim, (0..dim).map(|m| displaced_coefficient(alpha, m, n, ln_fact)))
}

/// Fock amplitudes `C_m^{(α,n)}` of `D(α)|n⟩` for `m = 0..dim`.
pub fn displaced_fock_coefficients(alpha: Complex64, n: usize, dim: usize) -> Result<CVector> {
    displaced_fock_coefficients_with_budget(alpha, n, dim, DEFAULT_LEAKAGE)
}

pub fn displaced_fock_coefficients_with_budget(
    alpha: Complex64,
    n: usize,
    dim: usize,
    budget: f64,
) -> Result<CVector> {
    if n >= dim {
        return Err(Error::invalid("n", format!("Fock index {n} outside truncation {dim}")));
    }
    let ln_fact = ln_factorials(dim.max(n + 1));
    let col = coefficient_column(alpha, n, dim, &ln_fact);
    let retained = col.norm_squared();
    if retained < 1.0 - budget {
        return Err(Error::TruncationInsufficient { dim, retained, budget });
    }
    Ok(col)
}

/// Displacement matrix with exact entries `⟨m|D(α)|n⟩`, unchecked.
pub(crate) fn displacement_matrix_raw(alpha: Complex64, dim: usize) -> CMatrix {
    let ln_fact = ln_factorials(dim);
    CMatrix::from_fn(dim, dim, |m, n| displaced_coefficient(alpha, m, n, &ln_fact))
}

/// Number of low Fock levels on which truncated operators are required to be accurate.
pub fn low_block(dim: usize) -> usize {
    (dim / 2).max(1)
}

/// Truncated `D(α)`. Fails if `D†D` deviates from the identity on the lower
/// half of the Fock space by more than the default leakage budget.
pub fn displacement_matrix(alpha: Complex64, dim: usize) -> Result<CMatrix> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be >= 1"));
    }
    let d = displacement_matrix_raw(alpha, dim);
    let low = low_block(dim);
    let block = d.columns(0, low);
    let gram = block.adjoint() * block;
    let defect = (0..low)
        .flat_map(|i| (0..low).map(move |j| (i, j)))
        .map(|(i, j)| {
            let target = if i == j { 1.0 } else { 0.0 };
            (gram[(i, j)] - target).norm()
        })
        .fold(0.0, f64::max);
    if defect > DEFAULT_LEAKAGE {
        return Err(Error::TruncationInsufficient { dim, retained: 1.0 - defect, budget: DEFAULT_LEAKAGE });
    }
    Ok(d)
}

/// Geometric thermal weights `(1/(1+n̄)) (n̄/(1+n̄))^n`, `n = 0..dim`.
pub fn thermal_weights(nbar_th: f64, dim: usize) -> Vec<f64> {
    let ratio = nbar_th / (1.0 + nbar_th);
    let norm = 1.0 / (1.0 + nbar_th);
    let mut w = Vec::with_capacity(dim);
    let mut p = norm;
    for _ in 0..dim {
        w.push(p);
        p *= ratio;
    }
    w
}

/// Mean thermal occupation for temperature `T` (kelvin) and angular frequency `nu` (rad/s).
pub fn thermal_occupation(temperature: f64, nu: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature", format!("must be > 0, got {temperature}")));
    }
    if !(nu > 0.0) {
        return Err(Error::invalid("nu", format!("must be > 0, got {nu}")));
    }
    let x = HBAR * nu / (K_B * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Truncated motional density matrix.
#[derive(Clone, Debug)]
pub struct MotionalDensityMatrix {
    matrix: CMatrix,
}

impl MotionalDensityMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn mean_occupation(&self) -> f64 {
        self.populations().iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

pub fn motional_density_matrix(spec: &MotionalSpec) -> Result<MotionalDensityMatrix> {
    motional_density_matrix_with_budget(spec, DEFAULT_LEAKAGE)
}

/// `ρ = Σ_n w_n D(α)|n⟩⟨n|D(α)†` on the first `spec.truncation` levels.
pub fn motional_density_matrix_with_budget(spec: &MotionalSpec, budget: f64) -> Result<MotionalDensityMatrix> {
    let dim = spec.truncation;
    let weights = thermal_weights(spec.nbar_th, dim);
    let ln_fact = ln_factorials(dim);
    let alpha = spec.alpha();
    // columns scaled by sqrt(w_n); ρ = B B†
    let active = weights.iter().take_while(|&&w| w > 0.0).count().max(1);
    let mut b = CMatrix::zeros(dim, active);
    for n in 0..active {
        let col = coefficient_column(alpha, n, dim, &ln_fact) * Complex64::new(weights[n].sqrt(), 0.0);
        b.set_column(n, &col);
    }
    let matrix = &b * b.adjoint();
    let rho = MotionalDensityMatrix { matrix };
    let retained = rho.trace();
    if retained < 1.0 - budget {
        return Err(Error::TruncationInsufficient { dim, retained, budget });
    }
    Ok(rho)
}

/// Diagonal of the motional density matrix, `P_m = Σ_n w_n |C_m^{(α,n)}|²`.
pub fn populations(alpha_mag: f64, nbar_th: f64, dim: usize) -> Vec<f64> {
    let weights = thermal_weights(nbar_th, dim);
    let ln_fact = ln_factorials(dim);
    let alpha = Complex64::new(alpha_mag, 0.0);
    let mut pops = vec![0.0; dim];
    for (n, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            break;
        }
        for (m, p) in pops.iter_mut().enumerate() {
            *p += w * displaced_coefficient(alpha, m, n, &ln_fact).norm_sqr();
        }
    }
    pops
}

fn truncation_ok(pops: &[f64], nbar_th: f64, budget: f64) -> bool {
    let total: f64 = pops.iter().sum();
    let top = pops.len().div_ceil(10);
    let tail: f64 = pops[pops.len() - top..].iter().sum();
    let thermal_tail = if nbar_th > 0.0 { (nbar_th / (1.0 + nbar_th)).powi(pops.len() as i32) } else { 0.0 };
    total >= 1.0 - budget && tail < budget && thermal_tail < budget
}

/// Photon-number distribution of a displaced thermal state,
///
/// `P_m = n̄^m/(1+n̄)^{m+1} e^{−|α|²/(1+n̄)} L_m(−|α|²/(n̄(1+n̄)))`,
///
/// expanded as a sum of positive terms so that `n̄ → 0` reduces smoothly to
/// the Poisson distribution. Unlike [`populations`], no thermal cutoff enters.
pub fn photon_distribution(alpha_sq: f64, nbar_th: f64, len: usize) -> Vec<f64> {
    let ln_fact = ln_factorials(len.max(1));
    (0..len).map(|m| photon_probability(alpha_sq, nbar_th, m, &ln_fact)).collect()
}

fn photon_probability(alpha_sq: f64, nbar_th: f64, m: usize, ln_fact: &[f64]) -> f64 {
    let ln1p = nbar_th.ln_1p();
    let (ln_nbar, ln_a) = (nbar_th.ln(), alpha_sq.ln());
    let mut acc = 0.0;
    for k in 0..=m {
        let (nb_pow, a_pow) = (m - k, k);
        if (nb_pow > 0 && nbar_th == 0.0) || (a_pow > 0 && alpha_sq == 0.0) {
            continue;
        }
        let mut ln_term = ln_fact[m] - ln_fact[k] - ln_fact[m - k] - ln_fact[k] - (m + 1 + k) as f64 * ln1p;
        if nb_pow > 0 {
            ln_term += nb_pow as f64 * ln_nbar;
        }
        if a_pow > 0 {
            ln_term += a_pow as f64 * ln_a;
        }
        acc += ln_term.exp();
    }
    (-alpha_sq / (1.0 + nbar_th)).exp() * acc
}

/// Smallest truncation (searched upward from [`TRUNCATION_FLOOR`]) for which the
/// retained trace is within `budget` of one and the top tenth of the levels
/// carries less than `budget` of the population.
pub fn choose_truncation(alpha_mag: f64, nbar_th: f64, budget: f64) -> Result<usize> {
    if !(budget > 0.0 && budget < 1.0) {
        return Err(Error::invalid("leakage_budget", format!("must lie in (0, 1), got {budget}")));
    }
    if !(alpha_mag >= 0.0) || !(nbar_th >= 0.0) {
        return Err(Error::invalid("spec", "alpha_mag and nbar_th must be >= 0"));
    }
    let ln_fact = ln_factorials(TRUNCATION_CAP);
    let alpha_sq = alpha_mag * alpha_mag;
    let mut pops = Vec::with_capacity(TRUNCATION_CAP);
    let mut dim = TRUNCATION_FLOOR;
    loop {
        while pops.len() < dim {
            pops.push(photon_probability(alpha_sq, nbar_th, pops.len(), &ln_fact));
        }
        if truncation_ok(&pops, nbar_th, budget) {
            return Ok(dim);
        }
        if dim >= TRUNCATION_CAP {
            return Err(Error::TruncationCapExceeded { cap: TRUNCATION_CAP, budget });
        }
        dim = (dim + (dim / 4).max(4)).min(TRUNCATION_CAP);
    }
}

/// Extra levels needed when the state is fed through the gate propagator,
/// which displaces it by at most `excursion`.
pub fn gate_padding(alpha_mag: f64, excursion: f64) -> usize {
    let reach = alpha_mag + excursion;
    (4.0 * reach * reach + 10.0).ceil() as usize
}

/// [`choose_truncation`] plus [`gate_padding`], capped at [`TRUNCATION_CAP`].
pub fn choose_gate_truncation(alpha_mag: f64, nbar_th: f64, budget: f64, excursion: f64) -> Result<usize> {
    if !(excursion >= 0.0) || !excursion.is_finite() {
        return Err(Error::invalid("excursion", format!("must be finite and >= 0, got {excursion}")));
    }
    let base = choose_truncation(alpha_mag, nbar_th, budget)?;
    let mut padded = base + gate_padding(alpha_mag, excursion);
    // the propagator's displacement must also be unitary on the lower half
    while padded <= TRUNCATION_CAP && displacement_matrix(Complex64::new(excursion, 0.0), padded).is_err() {
        padded += 4;
    }
    if padded > TRUNCATION_CAP {
        return Err(Error::TruncationCapExceeded { cap: TRUNCATION_CAP, budget });
    }
    Ok(padded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_hermitian, max_abs_diff, min_eigenvalue, I};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// `exp(α a† − α* a)` on `dim` levels via the spectral decomposition of `i·G`.
    fn generator_exponential(alpha: Complex64, dim: usize) -> CMatrix {
        let mut g = CMatrix::zeros(dim, dim);
        for n in 0..dim - 1 {
            let s = ((n + 1) as f64).sqrt();
            g[(n + 1, n)] = alpha * s;
            g[(n, n + 1)] = -alpha.conj() * s;
        }
        expm_hermitian(&(g * I), 1.0)
    }

    #[test]
    fn laguerre_low_orders() {
        assert_eq!(laguerre(0, 3, 1.7), 1.0);
        assert_abs_diff_eq!(laguerre(1, 2, 0.5), 2.5, epsilon = 1e-15);
        // (x² − 4x + 2)/2 at x = 2
        assert_abs_diff_eq!(laguerre(2, 0, 2.0), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn laguerre_matches_explicit_sum() {
        // L_n^{(k)}(x) = Σ_i (-1)^i C(n+k, n-i) x^i / i!
        fn binom(a: f64, b: usize) -> f64 {
            (0..b).fold(1.0, |acc, i| acc * (a - i as f64) / (i + 1) as f64)
        }
        for n in 0..12 {
            for k in 0..6 {
                for &x in &[0.0_f64, 0.3, 1.7, 4.2] {
                    let direct: f64 = (0..=n)
                        .map(|i| {
                            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                            let fact: f64 = (1..=i).map(|j| j as f64).product();
                            sign * binom((n + k) as f64, n - i) * x.powi(i as i32) / fact
                        })
                        .sum();
                    assert_abs_diff_eq!(laguerre(n, k as i32, x), direct, epsilon = 1e-9 * direct.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn zero_displacement_is_basis_vector() {
        let c = displaced_fock_coefficients(Complex64::new(0.0, 0.0), 3, 8).unwrap();
        for m in 0..8 {
            let expect = if m == 3 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(c[m].re, expect, epsilon = 1e-15);
            assert_abs_diff_eq!(c[m].im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn coherent_state_amplitudes() {
        let alpha = Complex64::new(0.8, -0.5);
        let c = displaced_fock_coefficients(alpha, 0, 30).unwrap();
        let mut fact = 1.0;
        for m in 0..30 {
            if m > 0 {
                fact *= m as f64;
            }
            let expect = (-alpha.norm_sqr() / 2.0).exp() * alpha.powu(m as u32) / fact.sqrt();
            assert!((c[m] - expect).norm() < 1e-14, "m = {m}");
        }
    }

    #[test]
    fn displaced_fock_column_matches_generator_exponential() {
        let alpha = Complex64::new(1.0, 0.0);
        let c = displaced_fock_coefficients(alpha, 1, 20).unwrap();
        let big = generator_exponential(alpha, 40);
        for m in 0..20 {
            assert!((c[m] - big[(m, 1)]).norm() < 1e-9, "m = {m}");
        }
    }

    #[test]
    fn coefficients_report_insufficient_truncation() {
        let err = displaced_fock_coefficients(Complex64::new(3.0, 0.0), 0, 6).unwrap_err();
        assert!(matches!(err, Error::TruncationInsufficient { .. }));
    }

    #[test]
    fn displacement_identity_and_exponential_oracle() {
        let d0 = displacement_matrix(Complex64::new(0.0, 0.0), 4).unwrap();
        assert!(max_abs_diff(&d0, &CMatrix::identity(4, 4)) < 1e-15);

        let alpha = Complex64::new(0.7, 0.2);
        let d = displacement_matrix(alpha, 30).unwrap();
        let big = generator_exponential(alpha, 60);
        let diff = max_abs_diff(&d.view((0, 0), (15, 15)).into_owned(), &big.view((0, 0), (15, 15)).into_owned());
        assert!(diff < 1e-9, "diff {diff}");
    }

    #[test]
    fn displacement_inverse_on_low_block() {
        for &alpha in &[Complex64::new(0.5, 0.3), Complex64::new(-1.0, 0.4)] {
            let dim = 48;
            let prod = displacement_matrix_raw(alpha, dim) * displacement_matrix_raw(-alpha, dim);
            // couplings spread over ~2|α|√n levels, so only the lower half is free of cutoff loss
            let keep = low_block(dim);
            let block = prod.view((0, 0), (keep, keep)).into_owned();
            let defect = max_abs_diff(&block, &CMatrix::identity(keep, keep));
            assert!(defect < 1e-10, "alpha {alpha}: defect {defect}");
        }
    }

    #[test]
    fn displacement_matrix_rejects_tiny_space() {
        assert!(matches!(
            displacement_matrix(Complex64::new(4.0, 0.0), 8),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn thermal_weight_examples() {
        assert_eq!(thermal_weights(0.0, 5), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let w = thermal_weights(1.0, 3);
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(w[1], 0.25, epsilon = 1e-16);
        assert_abs_diff_eq!(w[2], 0.125, epsilon = 1e-16);
        let w = thermal_weights(0.49, 64);
        let r: f64 = 0.49 / 1.49;
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0 - r.powi(64), epsilon = 1e-14);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn thermal_occupation_limits() {
        let nu = TAU * 3e6;
        assert!(thermal_occupation(1e-9, nu).unwrap() < 1e-12);
        let t_ln2 = HBAR * nu / (K_B * 2f64.ln());
        assert_abs_diff_eq!(thermal_occupation(t_ln2, nu).unwrap(), 1.0, epsilon = 1e-12);
        let x: f64 = HBAR * nu / (K_B * 1e-3);
        assert_abs_diff_eq!(thermal_occupation(1e-3, nu).unwrap(), 1.0 / (x.exp() - 1.0), epsilon = 1e-9);
        assert!(thermal_occupation(2e-3, nu).unwrap() > thermal_occupation(1e-3, nu).unwrap());
        assert!(thermal_occupation(0.0, nu).is_err());
        assert!(thermal_occupation(-1.0, nu).is_err());
    }

    #[test]
    fn density_matrix_examples() {
        let rho = motional_density_matrix(&MotionalSpec::new(0.0, 0.0, 0.0, 6).unwrap()).unwrap();
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-15);

        let a = motional_density_matrix(&MotionalSpec::new(0.0, 0.3, 1.0, 40).unwrap()).unwrap();
        let b = motional_density_matrix(&MotionalSpec::new(0.0, 2.0, 1.0, 40).unwrap()).unwrap();
        let w = thermal_weights(1.0, 40);
        for i in 0..40 {
            for j in 0..40 {
                let expect = if i == j { w[i] } else { 0.0 };
                assert!((a.matrix()[(i, j)] - expect).norm() < 1e-15);
            }
        }
        assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-15);

        let spec = MotionalSpec::from_alpha_sq(0.47, 0.0, 0.12, 40).unwrap();
        let rho = motional_density_matrix(&spec).unwrap();
        assert_abs_diff_eq!(rho.mean_occupation(), 0.59, epsilon = 1e-6);
    }

    #[test]
    fn density_matrix_rejects_short_truncation() {
        let spec = MotionalSpec::from_alpha_sq(4.0, 0.0, 1.0, 6).unwrap();
        assert!(matches!(motional_density_matrix(&spec), Err(Error::TruncationInsufficient { .. })));
    }

    #[test]
    fn choose_truncation_examples() {
        assert_eq!(choose_truncation(0.0, 0.0, 1e-8).unwrap(), TRUNCATION_FLOOR);

        // tail oracle for a coherent state: Poisson tail beyond N computed at N = 512
        let n = choose_truncation(2f64.sqrt(), 0.0, 1e-8).unwrap();
        let pops = populations(2f64.sqrt(), 0.0, 512);
        let tail: f64 = pops[n..].iter().sum();
        assert!(tail < 1e-8, "tail {tail} at N = {n}");

        let alpha = 0.47f64.sqrt();
        let n = choose_truncation(alpha, 0.12, 1e-8).unwrap();
        let spec = MotionalSpec::new(alpha, 0.0, 0.12, n).unwrap();
        let doubled = spec.with_truncation(2 * n).unwrap();
        let t1 = motional_density_matrix(&spec).unwrap().trace();
        let t2 = motional_density_matrix(&doubled).unwrap().trace();
        assert!((t2 - t1).abs() < 1e-8);
    }

    #[test]
    fn photon_distribution_matches_density_matrix_diagonal() {
        for &(a2, nbar) in &[(0.0, 0.0), (2.0, 0.0), (0.0, 0.49), (0.47, 0.12), (1.3, 1.7)] {
            let dim = 120;
            let spec = MotionalSpec::from_alpha_sq(a2, 0.3, nbar, dim).unwrap();
            let diag = motional_density_matrix(&spec).unwrap().populations();
            let closed = photon_distribution(a2, nbar, 40);
            for m in 0..40 {
                assert!((diag[m] - closed[m]).abs() < 1e-13, "({a2}, {nbar}) m={m}: {} vs {}", diag[m], closed[m]);
            }
        }
    }

    #[test]
    fn choose_truncation_gives_up_at_cap() {
        assert!(matches!(
            choose_truncation(30.0, 0.0, 1e-8),
            Err(Error::TruncationCapExceeded { cap: TRUNCATION_CAP, .. })
        ));
        assert!(choose_truncation(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn phase_covariance() {
        let base = MotionalSpec::from_alpha_sq(1.3, 0.0, 0.4, 40).unwrap();
        let phi = 0.9;
        let r0 = motional_density_matrix(&base).unwrap();
        let r1 = motional_density_matrix(&base.with_phi(phi)).unwrap();
        for m in 0..40 {
            for n in 0..40 {
                let rotated = r0.matrix()[(m, n)] * Complex64::from_polar(1.0, (m as f64 - n as f64) * phi);
                assert!((rotated - r1.matrix()[(m, n)]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn displaced_fock_states_are_orthonormal() {
        let alpha = Complex64::new(0.9, -0.6);
        let dim = 60;
        let d = displacement_matrix_raw(alpha, dim);
        let block = d.columns(0, 12);
        let gram = block.adjoint() * block;
        assert!(max_abs_diff(&gram, &CMatrix::identity(12, 12)) < DEFAULT_LEAKAGE);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn density_matrix_invariants(alpha_sq in 0.0f64..4.0, nbar in 0.0f64..2.0, phi in 0.0f64..TAU) {
            let alpha = alpha_sq.sqrt();
            let n = choose_truncation(alpha, nbar, DEFAULT_LEAKAGE).unwrap();
            let spec = MotionalSpec::new(alpha, phi, nbar, n).unwrap();
            let rho = motional_density_matrix(&spec).unwrap();
            let tr = rho.trace();
            prop_assert!(tr <= 1.0 + 1e-12 && tr >= 1.0 - DEFAULT_LEAKAGE);
            prop_assert!(min_eigenvalue(rho.matrix()) > -1e-10);
            let herm = max_abs_diff(rho.matrix(), &rho.matrix().adjoint());
            prop_assert!(herm < 1e-12);
            let err = (rho.mean_occupation() - spec.mean_occupation()).abs();
            prop_assert!(err < 10.0 * DEFAULT_LEAKAGE * n as f64, "mean occupation error {}", err);
        }
    }
}
