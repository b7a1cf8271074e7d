//! Gate-error metrics: entanglement infidelity and the diamond distance.

pub mod sdp;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{error_channel, ChoiMatrix, ErrorReport, ReportMetadata, SPIN_DIM};
use crate::error::Result;
use crate::linalg::{hermitize, CMatrix};
use sdp::{solve, SdpProblem, SdpSettings, SparseHermitian};

/// Factor applied to `‖E − U‖_◇` when reporting a diamond distance.
///
/// `1.0` reports the full norm, which ranges over `[0, 2]`.
pub const DIAMOND_SCALE: f64 = 1.0;

/// Entanglement infidelity `1 − ⟨Φ⁺|(U†∘E ⊗ 1)(Φ⁺)|Φ⁺⟩` of `actual`
/// relative to the unitary channel `ideal`.
pub fn process_infidelity(actual: &ChoiMatrix, ideal: &ChoiMatrix) -> Result<f64> {
    let err = error_channel(actual, ideal)?;
    Ok((1.0 - err.entanglement_fidelity_with_identity()).clamp(0.0, 1.0))
}

/// `d/(d+1)` times the entanglement infidelity.
pub fn average_gate_infidelity(process_infidelity: f64) -> f64 {
    let d = SPIN_DIM as f64;
    d / (d + 1.0) * process_infidelity
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DiamondNorm {
    /// Midpoint of the primal and dual estimates.
    pub value: f64,
    pub primal_estimate: f64,
    pub dual_estimate: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Choi matrix of `E_a − E_b`.
pub fn choi_difference(a: &ChoiMatrix, b: &ChoiMatrix) -> CMatrix {
    a.matrix() - b.matrix()
}

/// `‖Φ‖_◇` of a Hermiticity-preserving map with Choi matrix `j` on
/// `d_in ⊗ d_out`.
///
/// Uses `‖Φ‖_◇ = 2 max{Tr(J W) : 0 ⪯ W ⪯ ρ ⊗ 1, Tr ρ = 1}`, valid when
/// `Φ` is a difference of trace-preserving maps.
pub fn diamond_norm_of_choi(j: &CMatrix, d_in: usize, d_out: usize) -> Result<DiamondNorm> {
    let problem = diamond_problem(j, d_in, d_out);
    let sol = solve(&problem, &SdpSettings::default())?;
    let primal = -2.0 * sol.primal_objective;
    let dual = -2.0 * sol.dual_objective;
    Ok(DiamondNorm {
        value: 0.5 * (primal + dual),
        primal_estimate: primal,
        dual_estimate: dual,
        gap: (primal - dual).abs(),
        iterations: sol.iterations,
    })
}

/// Blocks `(W, Z, ρ)` with `W + Z = ρ ⊗ 1`, `Tr ρ = 1`, minimizing `−Tr(J W)`.
fn diamond_problem(j: &CMatrix, d_in: usize, d_out: usize) -> SdpProblem {
    let d = d_in * d_out;
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut constraints = Vec::with_capacity(d * d + 1);
    for p in 0..d {
        for q in p..d {
            let (ip, op) = (p / d_out, p % d_out);
            let (iq, oq) = (q / d_out, q % d_out);
            let units: &[Complex64] = if p == q { &[one] } else { &[one, i] };
            for &u in units {
                let mut a = SparseHermitian::new();
                a.push(0, p, q, u).push(1, p, q, u);
                if op == oq {
                    a.push(2, ip, iq, -u);
                }
                constraints.push(a);
            }
        }
    }
    let mut tr = SparseHermitian::new();
    for k in 0..d_in {
        tr.push(2, k, k, one);
    }
    constraints.push(tr);
    let mut rhs = vec![0.0; constraints.len()];
    *rhs.last_mut().expect("trace constraint") = 1.0;
    SdpProblem {
        block_dims: vec![d, d, d_in],
        cost: vec![-hermitize(j), CMatrix::zeros(d, d), CMatrix::zeros(d_in, d_in)],
        constraints,
        rhs,
    }
}

/// Reported diamond distance between two two-qubit channels.
pub fn diamond_distance(a: &ChoiMatrix, b: &ChoiMatrix) -> Result<DiamondNorm> {
    let mut norm = diamond_norm_of_choi(&choi_difference(a, b), SPIN_DIM, SPIN_DIM)?;
    norm.value *= DIAMOND_SCALE;
    norm.primal_estimate *= DIAMOND_SCALE;
    norm.dual_estimate *= DIAMOND_SCALE;
    norm.gap *= DIAMOND_SCALE;
    Ok(norm)
}

/// Infidelity and diamond distance of `actual` against `ideal`.
pub fn error_report(actual: &ChoiMatrix, ideal: &ChoiMatrix, metadata: ReportMetadata) -> Result<ErrorReport> {
    let infidelity = process_infidelity(actual, ideal)?;
    let dn = diamond_distance(actual, ideal)?;
    Ok(ErrorReport {
        infidelity,
        diamond_distance: dn.value,
        average_gate_infidelity: average_gate_infidelity(infidelity),
        diamond_norm_raw: dn.value / DIAMOND_SCALE,
        sdp_gap: dn.gap,
        metadata,
    })
}
