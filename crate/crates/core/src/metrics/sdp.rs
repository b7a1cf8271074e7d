//! Primal-dual interior-point solver for complex Hermitian block SDPs.
//!
//! Solves
//!
//! ```text
//! min ⟨C, X⟩  s.t.  ⟨A_k, X⟩ = b_k,  X ⪰ 0
//! max bᵀy     s.t.  C − Σ y_k A_k = S ⪰ 0
//! ```
//!
//! with `⟨A, X⟩ = Re Tr(A X)` summed over blocks. Search directions use
//! Nesterov-Todd scaling with a Mehrotra-type predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{hermitize, CMatrix};

#[derive(Debug, Error)]
pub enum SdpError {
    #[error(
        "SDP did not converge in {iterations} iterations \
         (gap {gap:.3e}, primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})"
    )]
    MaxIterations { iterations: usize, gap: f64, primal_residual: f64, dual_residual: f64 },

    #[error("SDP is {kind} infeasible (certificate ratio {ratio:.3e})")]
    Infeasible { kind: InfeasibilityKind, ratio: f64 },

    #[error("malformed SDP: {0}")]
    Malformed(String),

    #[error("numerical breakdown in SDP solver: {0}")]
    Numerical(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfeasibilityKind {
    Primal,
    Dual,
}

impl std::fmt::Display for InfeasibilityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InfeasibilityKind::Primal => "primal",
            InfeasibilityKind::Dual => "dual",
        })
    }
}

/// Sparse Hermitian block matrix. Only upper-triangular entries are
/// stored; an entry at `(i, j)` with `i < j` implies its conjugate at
/// `(j, i)`, and diagonal entries are real.
#[derive(Clone, Debug, Default)]
pub struct SparseHermitian {
    entries: Vec<(usize, usize, usize, Complex64)>,
}

impl SparseHermitian {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, block: usize, row: usize, col: usize, value: Complex64) -> &mut Self {
        let (r, c, v) = if row <= col { (row, col, value) } else { (col, row, value.conj()) };
        let v = if r == c { Complex64::new(v.re, 0.0) } else { v };
        self.entries.push((block, r, c, v));
        self
    }

    pub fn with(mut self, block: usize, row: usize, col: usize, value: Complex64) -> Self {
        self.push(block, row, col, value);
        self
    }

    /// All nonzero entries including the implied lower triangle.
    fn expanded(&self) -> Vec<(usize, usize, usize, Complex64)> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(b, r, c, v) in &self.entries {
            out.push((b, r, c, v));
            if r != c {
                out.push((b, c, r, v.conj()));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub cost: Vec<CMatrix>,
    pub constraints: Vec<SparseHermitian>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SdpSettings {
    pub max_iterations: usize,
    /// Relative duality gap and complementarity at termination.
    pub tolerance: f64,
    /// Relative primal and dual residuals at termination.
    pub feasibility_tolerance: f64,
    /// Ratio `bᵀy / ‖𝒜*y + S‖` (or its dual analogue) taken as a certificate.
    pub infeasibility_ratio: f64,
    /// On stagnation, the best iterate is returned if its termination measure is below this.
    pub stall_acceptance: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-9,
            feasibility_tolerance: 1e-9,
            infeasibility_ratio: 1e8,
            stall_acceptance: 1e-7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: Vec<CMatrix>,
    pub y: Vec<f64>,
    pub s: Vec<CMatrix>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `⟨C,X⟩ − bᵀy`.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Set when the solver stalled short of the requested tolerances and
    /// returned its best iterate instead.
    pub reduced_accuracy: bool,
}

type Blocks = Vec<CMatrix>;

const REFINEMENT_STEPS: usize = 1;
/// Iterations without improvement of the termination measure before stopping.
const STALL_ITERATIONS: usize = 8;

fn inner(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p * q.conj()).re).sum::<f64>())
        .sum()
}

fn frob(a: &[CMatrix]) -> f64 {
    inner(a, a).sqrt()
}

fn axpy(a: &[CMatrix], alpha: f64, b: &[CMatrix]) -> Blocks {
    a.iter().zip(b).map(|(x, y)| x + y.scale(alpha)).collect()
}

struct Operator {
    dims: Vec<usize>,
    rows: Vec<Vec<(usize, usize, usize, Complex64)>>,
}

impl Operator {
    /// `𝒜(X)_k = Re Tr(A_k X)`.
    fn apply(&self, x: &[CMatrix]) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| row.iter().map(|&(b, r, c, v)| (v * x[b][(c, r)]).re).sum::<f64>()),
        )
    }

    /// `𝒜*(y) = Σ y_k A_k`.
    fn adjoint(&self, y: &DVector<f64>) -> Blocks {
        let mut out: Blocks = self.dims.iter().map(|&n| CMatrix::zeros(n, n)).collect();
        for (row, &yk) in self.rows.iter().zip(y.iter()) {
            for &(b, r, c, v) in row {
                out[b][(r, c)] += v * yk;
            }
        }
        out
    }

    /// Schur complement `M_kl = ⟨A_k, W A_l W⟩`.
    fn schur(&self, w: &[CMatrix]) -> DMatrix<f64> {
        let m = self.rows.len();
        let mut out = DMatrix::zeros(m, m);
        for k in 0..m {
            for l in k..m {
                let mut acc = 0.0;
                for &(b1, a, bb, v) in &self.rows[k] {
                    for &(b2, cc, d, u) in &self.rows[l] {
                        if b1 == b2 {
                            acc += (v * w[b1][(bb, cc)] * u * w[b1][(d, a)]).re;
                        }
                    }
                }
                out[(k, l)] = acc;
                out[(l, k)] = acc;
            }
        }
        out
    }
}

fn cholesky(m: &CMatrix, what: &str) -> Result<Cholesky<Complex64, nalgebra::Dyn>, SdpError> {
    Cholesky::new(hermitize(m)).ok_or_else(|| SdpError::Numerical(format!("{what} lost positive definiteness")))
}

/// Nesterov-Todd scaling point `W` with `W S W = X`.
fn nt_scaling(x: &CMatrix, s: &CMatrix) -> Result<CMatrix, SdpError> {
    let lx = cholesky(x, "X")?.l();
    let ls = cholesky(s, "S")?.l();
    let m = ls.adjoint() * &lx;
    let svd = m.svd(false, true);
    let v = svd.v_t.ok_or_else(|| SdpError::Numerical("SVD failed".into()))?.adjoint();
    let mut g = &lx * v;
    for (j, mut col) in g.column_iter_mut().enumerate() {
        let sv = svd.singular_values[j];
        if !(sv > 0.0) {
            return Err(SdpError::Numerical("degenerate scaling".into()));
        }
        col /= Complex64::new(sv.sqrt(), 0.0);
    }
    Ok(hermitize(&(&g * g.adjoint())))
}

/// Largest `α` keeping `X + α ΔX ⪰ 0`, or `∞` if every step is admissible.
fn max_step(x: &CMatrix, dx: &CMatrix) -> Result<f64, SdpError> {
    let l = cholesky(x, "X")?.l();
    let left = l
        .solve_lower_triangular(dx)
        .ok_or_else(|| SdpError::Numerical("triangular solve".into()))?;
    let t = l
        .solve_lower_triangular(&left.adjoint())
        .ok_or_else(|| SdpError::Numerical("triangular solve".into()))?;
    let lmin = SymmetricEigen::new(hermitize(&t)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn max_step_blocks(x: &[CMatrix], dx: &[CMatrix]) -> Result<f64, SdpError> {
    let mut a = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        a = a.min(max_step(xb, db)?);
    }
    Ok(a)
}

struct Direction {
    dx: Blocks,
    dy: DVector<f64>,
    ds: Blocks,
}

pub fn solve(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution, SdpError> {
    let dims = &problem.block_dims;
    if problem.cost.len() != dims.len() || problem.cost.iter().zip(dims).any(|(c, &n)| c.shape() != (n, n)) {
        return Err(SdpError::Malformed("cost blocks do not match block dimensions".into()));
    }
    if problem.constraints.len() != problem.rhs.len() {
        return Err(SdpError::Malformed("constraint and right-hand-side counts differ".into()));
    }
    for a in &problem.constraints {
        for &(b, r, c, _) in &a.entries {
            if b >= dims.len() || r >= dims[b] || c >= dims[b] {
                return Err(SdpError::Malformed(format!("entry ({b}, {r}, {c}) out of range")));
            }
        }
    }

    let op = Operator { dims: dims.clone(), rows: problem.constraints.iter().map(SparseHermitian::expanded).collect() };
    let c: Blocks = problem.cost.iter().map(hermitize).collect();
    let b = DVector::from_column_slice(&problem.rhs);
    let n_total: usize = dims.iter().sum();
    let nf = n_total as f64;

    let norm_b = b.norm();
    let norm_c = frob(&c);
    let a_norms: Vec<f64> = op.rows.iter().map(|r| r.iter().map(|e| e.3.norm_sqr()).sum::<f64>().sqrt()).collect();
    let mut xi_p = nf.sqrt().max(10.0);
    let mut xi_d = nf.sqrt().max(10.0).max(norm_c);
    for (k, an) in a_norms.iter().enumerate() {
        xi_p = xi_p.max(nf.sqrt() * (1.0 + b[k].abs()) / (1.0 + an));
        xi_d = xi_d.max(*an);
    }

    let mut x: Blocks = dims.iter().map(|&n| CMatrix::identity(n, n).scale(xi_p)).collect();
    let mut s: Blocks = dims.iter().map(|&n| CMatrix::identity(n, n).scale(xi_d)).collect();
    let mut y = DVector::<f64>::zeros(op.rows.len());

    let mut last = (f64::NAN, f64::NAN, f64::NAN);
    let mut best: Option<(f64, SdpSolution)> = None;
    let mut since_best = 0;
    for iter in 0..settings.max_iterations {
        let rp = &b - op.apply(&x);
        let aty = op.adjoint(&y);
        let rd: Blocks = c.iter().zip(&s).zip(&aty).map(|((ci, si), ai)| ci - si - ai).collect();
        let pobj = inner(&c, &x);
        let dobj = b.dot(&y);
        let comp = inner(&x, &s);
        let scale = 1.0 + pobj.abs() + dobj.abs();
        let pres = rp.norm() / (1.0 + norm_b);
        let dres = frob(&rd) / (1.0 + norm_c);
        last = (pobj - dobj, pres, dres);

        let snapshot = |reduced_accuracy: bool| SdpSolution {
            x: x.clone(),
            y: y.iter().copied().collect(),
            s: s.clone(),
            primal_objective: pobj,
            dual_objective: dobj,
            gap: pobj - dobj,
            primal_residual: pres,
            dual_residual: dres,
            iterations: iter,
            reduced_accuracy,
        };
        let rel_gap = comp.max((pobj - dobj).abs()) / scale;
        if rel_gap < settings.tolerance
            && pres < settings.feasibility_tolerance
            && dres < settings.feasibility_tolerance
        {
            return Ok(snapshot(false));
        }
        let measure = rel_gap.max(pres).max(dres);
        if best.as_ref().map_or(true, |(m, _)| measure < 0.5 * m) {
            best = Some((measure, snapshot(true)));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_ITERATIONS {
                break;
            }
        }

        if dobj > 0.0 {
            let ray: Blocks = aty.iter().zip(&s).map(|(a, si)| a + si).collect();
            let ratio = dobj / frob(&ray).max(f64::MIN_POSITIVE);
            if ratio > settings.infeasibility_ratio {
                return Err(SdpError::Infeasible { kind: InfeasibilityKind::Primal, ratio });
            }
        }
        if pobj < 0.0 {
            let ratio = -pobj / op.apply(&x).norm().max(f64::MIN_POSITIVE);
            if ratio > settings.infeasibility_ratio {
                return Err(SdpError::Infeasible { kind: InfeasibilityKind::Dual, ratio });
            }
        }

        let mu = comp / nf;
        log::trace!("{iter:3} pobj {pobj:+.12e} dobj {dobj:+.12e} comp {comp:.2e} pres {pres:.2e} dres {dres:.2e}");
        let w: Blocks = x.iter().zip(&s).map(|(xb, sb)| nt_scaling(xb, sb)).collect::<Result<_, _>>()?;
        let m = op.schur(&w);
        let chol = Cholesky::new(m.clone());
        let lu = if chol.is_none() { Some(m.clone().lu()) } else { None };
        let solve_once = |rhs: &DVector<f64>| -> Result<DVector<f64>, SdpError> {
            match (&chol, &lu) {
                (Some(ch), _) => Ok(ch.solve(rhs)),
                (None, Some(lu)) => lu.solve(rhs).ok_or_else(|| SdpError::Numerical("singular Schur complement".into())),
                _ => unreachable!(),
            }
        };
        // M grows ill-conditioned near rank-deficient optima; refinement keeps 𝒜ΔX = rp accurate.
        let solve_m = |rhs: &DVector<f64>| -> Result<DVector<f64>, SdpError> {
            let mut sol = solve_once(rhs)?;
            for _ in 0..REFINEMENT_STEPS {
                let r = rhs - &m * &sol;
                sol += solve_once(&r)?;
            }
            Ok(sol)
        };
        let s_inv: Blocks = s.iter().map(|sb| cholesky(sb, "S").map(|ch| ch.inverse())).collect::<Result<_, _>>()?;

        // ΔX + W ΔS W = Rc, 𝒜ΔX = rp, 𝒜*Δy + ΔS = Rd.
        let direction = |rc: &Blocks| -> Result<Direction, SdpError> {
            let t: Blocks = rc
                .iter()
                .zip(&w)
                .zip(&rd)
                .map(|((r, wb), d)| r - wb * d * wb)
                .collect();
            let rhs = &rp - op.apply(&t);
            let dy = solve_m(&rhs)?;
            let ady = op.adjoint(&dy);
            let ds: Blocks = rd.iter().zip(&ady).map(|(d, a)| hermitize(&(d - a))).collect();
            let dx: Blocks = rc.iter().zip(&w).zip(&ds).map(|((r, wb), d)| hermitize(&(r - wb * d * wb))).collect();
            Ok(Direction { dx, dy, ds })
        };

        let rc_aff: Blocks = x.iter().map(|xb| -xb).collect();
        let aff = direction(&rc_aff)?;
        let ap = max_step_blocks(&x, &aff.dx)?.min(1.0);
        let ad = max_step_blocks(&s, &aff.ds)?.min(1.0);
        let mu_aff = inner(&axpy(&x, ap, &aff.dx), &axpy(&s, ad, &aff.ds)) / nf;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc: Blocks = s_inv.iter().zip(&x).map(|(si, xb)| si.scale(sigma * mu) - xb).collect();
        let dir = direction(&rc)?;
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * max_step_blocks(&x, &dir.dx)?).min(1.0);
        let ad = (gamma * max_step_blocks(&s, &dir.ds)?).min(1.0);

        x = axpy(&x, ap, &dir.dx).iter().map(hermitize).collect();
        s = axpy(&s, ad, &dir.ds).iter().map(hermitize).collect();
        y += dir.dy.scale(ad);
        log::trace!("    sigma {sigma:.2e} ap {ap:.3} ad {ad:.3}");
    }
    if let Some((measure, sol)) = best {
        if measure < settings.stall_acceptance {
            return Ok(sol);
        }
    }
    Err(SdpError::MaxIterations {
        iterations: settings.max_iterations,
        gap: last.0,
        primal_residual: last.1,
        dual_residual: last.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn one() -> Complex64 {
        c(1.0, 0.0)
    }

    #[test]
    fn trace_constraint_gives_minimum_eigenvalue() {
        // min Tr(C X), Tr X = 1 → λ_min(C)
        let cm = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let a = SparseHermitian::new().with(0, 0, 0, one()).with(0, 1, 1, one());
        let p = SdpProblem { block_dims: vec![2], cost: vec![cm], constraints: vec![a], rhs: vec![1.0] };
        let sol = solve(&p, &SdpSettings::default()).unwrap();
        assert!((sol.primal_objective - 1.0).abs() < 1e-8, "{}", sol.primal_objective);
        assert!(sol.gap.abs() < 1e-7);
    }

    #[test]
    fn identity_feasibility_converges_quickly() {
        let n = 3;
        let mut a = SparseHermitian::new();
        for i in 0..n {
            a.push(0, i, i, one());
        }
        let p = SdpProblem {
            block_dims: vec![n],
            cost: vec![CMatrix::identity(n, n)],
            constraints: vec![a],
            rhs: vec![1.0],
        };
        let sol = solve(&p, &SdpSettings::default()).unwrap();
        assert!(sol.iterations < 10, "{} iterations", sol.iterations);
        assert!((sol.primal_objective - 1.0).abs() < 1e-8);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // X ⪰ 0 with Tr X = −1 has no solution.
        let a = SparseHermitian::new().with(0, 0, 0, one()).with(0, 1, 1, one());
        let p = SdpProblem {
            block_dims: vec![2],
            cost: vec![CMatrix::identity(2, 2)],
            constraints: vec![a],
            rhs: vec![-1.0],
        };
        match solve(&p, &SdpSettings::default()) {
            Err(SdpError::Infeasible { kind: InfeasibilityKind::Primal, .. }) => {}
            other => panic!("expected primal infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn detects_dual_infeasibility() {
        // min −X₀₀ subject to X₁₁ = 1 is unbounded.
        let a = SparseHermitian::new().with(0, 1, 1, one());
        let mut cost = CMatrix::zeros(2, 2);
        cost[(0, 0)] = c(-1.0, 0.0);
        let p = SdpProblem { block_dims: vec![2], cost: vec![cost], constraints: vec![a], rhs: vec![1.0] };
        match solve(&p, &SdpSettings::default()) {
            Err(SdpError::Infeasible { kind: InfeasibilityKind::Dual, .. }) => {}
            other => panic!("expected dual infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn off_diagonal_constraints_are_hermitian() {
        // X 2×2, X₀₀ = X₁₁ = 1, max Re(X₀₁ e^{-iθ}) = 1
        let theta = 0.7_f64;
        let mut cost = CMatrix::zeros(2, 2);
        cost[(0, 1)] = Complex64::from_polar(-0.5, theta);
        cost[(1, 0)] = cost[(0, 1)].conj();
        let cons = vec![
            SparseHermitian::new().with(0, 0, 0, one()),
            SparseHermitian::new().with(0, 1, 1, one()),
        ];
        let p = SdpProblem { block_dims: vec![2], cost: vec![cost], constraints: cons, rhs: vec![1.0, 1.0] };
        let sol = solve(&p, &SdpSettings::default()).unwrap();
        assert!((sol.primal_objective + 1.0).abs() < 1e-8);
        let x01 = sol.x[0][(0, 1)];
        assert!((x01 - Complex64::from_polar(1.0, theta)).norm() < 1e-4);
    }

    #[test]
    fn malformed_problems_are_rejected() {
        let a = SparseHermitian::new().with(0, 3, 3, one());
        let p = SdpProblem { block_dims: vec![2], cost: vec![CMatrix::zeros(2, 2)], constraints: vec![a], rhs: vec![1.0] };
        assert!(matches!(solve(&p, &SdpSettings::default()), Err(SdpError::Malformed(_))));
    }
}
