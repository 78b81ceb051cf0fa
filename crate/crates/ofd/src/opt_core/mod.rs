//! In-house numerical solvers: dense LP (revised simplex), MILP
//! (branch-and-bound over binaries), and PSD-cone projection.
//!
//! All solvers are single-threaded, hold no global state, and are
//! deterministic for fixed inputs (fixed pivot and branching rules).

mod milp;
mod simplex;

pub use milp::{solve_milp, MilpOptions};
pub use simplex::solve_lp;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// A dense linear program: minimize `objective . v` subject to
/// `rows v {<=,=,>=} rhs` and `bounds.0 <= v <= bounds.1` per variable.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub rows: DMatrix<f64>,
    pub senses: Vec<Sense>,
    pub rhs: DVector<f64>,
    /// Per-variable `[lo, hi]`; `f64::NEG_INFINITY` / `f64::INFINITY` allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Feasibility tolerance used by the solver for this problem.
    pub fn tol_feas(&self) -> f64 {
        1e-8 * (1.0 + self.rhs.amax())
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let n = self.num_vars();
        let m = self.num_rows();
        if self.rows.nrows() != m || self.rows.ncols() != n {
            return Err(OptError::MalformedProblem(format!(
                "constraint matrix is {}x{}, expected {}x{}",
                self.rows.nrows(),
                self.rows.ncols(),
                m,
                n
            )));
        }
        if self.senses.len() != m {
            return Err(OptError::MalformedProblem(format!(
                "{} senses for {} rows",
                self.senses.len(),
                m
            )));
        }
        if self.bounds.len() != n {
            return Err(OptError::MalformedProblem(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        for &(lo, hi) in &self.bounds {
            if lo > hi {
                return Err(OptError::MalformedProblem(format!(
                    "bound lo {lo} > hi {hi}"
                )));
            }
            if lo.is_nan() || hi.is_nan() {
                return Err(OptError::MalformedProblem("NaN bound".into()));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite())
            || self.rows.iter().any(|v| !v.is_finite())
            || self.rhs.iter().any(|v| !v.is_finite())
        {
            return Err(OptError::MalformedProblem(
                "non-finite entry in objective, rows, or rhs".into(),
            ));
        }
        Ok(())
    }
}

/// A linear program with a subset of variables constrained to {0, 1}.
#[derive(Debug, Clone)]
pub struct MilpProgram {
    pub base: LinearProgram,
    pub binary_indices: Vec<usize>,
}

impl MilpProgram {
    pub fn validate(&self) -> Result<(), OptError> {
        self.base.validate()?;
        for &j in &self.binary_indices {
            if j >= self.base.num_vars() {
                return Err(OptError::MalformedProblem(format!(
                    "binary index {j} out of range"
                )));
            }
            let (lo, hi) = self.base.bounds[j];
            if lo < -1e-12 || hi > 1.0 + 1e-12 {
                return Err(OptError::MalformedProblem(format!(
                    "binary variable {j} has bounds [{lo}, {hi}] outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
}

/// Outcome of an LP or MILP solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    /// Primal solution. Present when `Optimal`, and on `NodeLimit` when the
    /// branch-and-bound carries a best incumbent.
    pub solution: Option<DVector<f64>>,
    /// Row duals `y` at optimality (LP only). Sign convention for a
    /// minimization: `y_i <= 0` for `<=` rows, `y_i >= 0` for `>=` rows.
    pub dual: Option<DVector<f64>>,
    /// Dual objective value matching `objective` at optimality (weak duality
    /// certificate).
    pub dual_objective: f64,
    pub iterations: usize,
    pub nodes: usize,
}

#[derive(Debug, Error)]
pub enum OptError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("anti-cycling budget exhausted (internal solver failure)")]
    CycleLimit,
    #[error("non-finite entries in matrix")]
    NonFiniteEntries,
}

/// Brute-force MILP objective: enumerate all binary patterns and solve the
/// LP for each. Exponential in the number of binaries; meant as an oracle
/// for small instances, independent of the branch-and-bound path. Returns
/// `None` when every pattern is infeasible.
pub fn enumerate_milp_objective(m: &MilpProgram) -> Result<Option<f64>, OptError> {
    m.validate()?;
    let k = m.binary_indices.len();
    let mut best: Option<f64> = None;
    for mask in 0..(1usize << k) {
        let mut lp = m.base.clone();
        let mut conflict = false;
        for (bit, &j) in m.binary_indices.iter().enumerate() {
            let v = if mask >> bit & 1 == 1 { 1.0 } else { 0.0 };
            let (lo, hi) = lp.bounds[j];
            if v < lo - 1e-9 || v > hi + 1e-9 {
                conflict = true;
                break;
            }
            lp.bounds[j] = (v, v);
        }
        if conflict {
            continue;
        }
        let r = solve_lp(&lp)?;
        if r.status == SolveStatus::Optimal {
            best = Some(best.map_or(r.objective, |b: f64| b.min(r.objective)));
        }
    }
    Ok(best)
}

/// Projects a symmetric matrix onto the PSD cone (nearest in Frobenius norm):
/// eigendecompose and clamp negative eigenvalues to zero. The input is
/// symmetrized first.
pub fn project_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>, OptError> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(OptError::NonFiniteEntries);
    }
    if s.nrows() != s.ncols() {
        return Err(OptError::MalformedProblem(format!(
            "PSD projection of a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    // eigenvector round-off can leave a tiny asymmetry
    out = (&out + out.transpose()) * 0.5;
    Ok(out)
}
