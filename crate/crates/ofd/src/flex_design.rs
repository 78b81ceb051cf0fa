//! Final design step: fit the largest shifted/scaled replica of the
//! prototype market polytope inside the polytopic inner approximation of the
//! feasible set, via an exact row-by-row decomposition of the containment
//! linear program.

use crate::dataset_gen::LabeledDataset;
use crate::market_model::HPolytope;
use crate::opt_core::{solve_lp, LinearProgram, OptError, Sense, SolveStatus};
use crate::poly_geom::{self, PolyError, SupportOutcome};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Smallest scale factor accepted before the design is declared degenerate.
pub const BETA_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FlexError {
    #[error("dataset contains no feasible points")]
    NoFeasiblePoints,
    #[error("facet direction of row {row} is not representable as f G with f >= 0, and the row is not redundant")]
    RowInfeasible { row: usize },
    #[error("optimal scale beta = {0} is at the degeneracy floor")]
    DegenerateBeta(f64),
    #[error("scale beta = {0} must be positive")]
    NonpositiveBeta(f64),
    #[error("shift/scale stage is infeasible: the target polytope cannot host any replica")]
    Stage2Infeasible,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Solver(#[from] OptError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignDiagnostics {
    pub num_target_rows: usize,
    pub dropped_redundant_rows: Vec<usize>,
    pub stage1_ms: u128,
    pub stage2_ms: u128,
}

/// Market submission artifact: `P(x_star)` is the designed polytope.
#[derive(Debug, Clone, Serialize)]
pub struct DesignResult {
    pub x_star: Vec<f64>,
    pub beta: f64,
    pub z: Vec<f64>,
    #[serde(skip)]
    pub h: Vec<f64>,
    #[serde(skip)]
    pub diagnostics: DesignDiagnostics,
}

/// Minimum-norm market vector whose polytope contains every feasible point
/// of the dataset. The constraints `G p_n <= x` decouple per component, so
/// minimizing `|x|^2` reduces to the componentwise closed form
/// `x_i = max(max_n (G p_n)_i, 0)`.
pub fn compute_prototype(data: &LabeledDataset, g: &DMatrix<f64>) -> Result<DVector<f64>, FlexError> {
    let mut any = false;
    let mut x = DVector::from_element(g.nrows(), 0.0f64);
    for pt in data.points.iter().filter(|pt| pt.y == -1) {
        if pt.p.len() != g.ncols() {
            return Err(FlexError::DimensionMismatch(format!(
                "point has dimension {}, G has {} columns",
                pt.p.len(),
                g.ncols()
            )));
        }
        any = true;
        let gp = g * DVector::from_column_slice(&pt.p);
        for i in 0..x.len() {
            x[i] = x[i].max(gp[i]);
        }
    }
    if !any {
        return Err(FlexError::NoFeasiblePoints);
    }
    Ok(x)
}

/// Support of the prototype polytope `{p : G p <= x_bar}` in direction `e`,
/// computed through the dual `min f.x_bar` s.t. `f G = e, f >= 0`. `None`
/// means the direction is outside the cone `{f G : f >= 0}` (the support is
/// unbounded).
fn stage1_row(
    g: &DMatrix<f64>,
    x_bar: &DVector<f64>,
    e: &DVector<f64>,
) -> Result<Option<f64>, OptError> {
    let lp = LinearProgram {
        objective: x_bar.clone(),
        rows: g.transpose(),
        senses: vec![Sense::Eq; g.ncols()],
        rhs: e.clone(),
        bounds: vec![(0.0, f64::INFINITY); g.nrows()],
    };
    let res = solve_lp(&lp)?;
    Ok(match res.status {
        SolveStatus::Optimal => Some(res.objective),
        SolveStatus::Infeasible => None,
        // f >= 0 and x_bar >= 0 bound the objective below by 0
        SolveStatus::Unbounded | SolveStatus::NodeLimit => {
            unreachable!("stage-1 dual is bounded below by construction")
        }
    })
}

/// `true` iff dropping row `i` of the polytope leaves its feasible set
/// unchanged.
fn row_redundant(p: &HPolytope, i: usize) -> Result<bool, PolyError> {
    let m = p.num_rows();
    let keep: Vec<usize> = (0..m).filter(|&k| k != i).collect();
    let a = DMatrix::from_fn(m - 1, p.dim(), |r, c| p.a[(keep[r], c)]);
    let b = DVector::from_fn(m - 1, |r, _| p.b[keep[r]]);
    let obj = p.a.row(i).transpose();
    Ok(match poly_geom::support_over_rows(&a, &b, &obj)? {
        SupportOutcome::Value(v, _) => v <= p.b[i] + 1e-9,
        SupportOutcome::NoCertificate => false,
        SupportOutcome::PrimalEmpty => true,
    })
}

/// Largest replica of the prototype `{p : G p <= x_bar}` inside the target
/// `P_D = {p : E p <= d}` over shift `z` and scale `1/beta`:
///
/// Stage 1 replaces each containment row by the prototype's support value
/// `h_i = max { E_i . p : G p <= x_bar }` (solved in dual form); Stage 2 is
/// the small LP `min beta` s.t. `h_i <= E_i.z + beta d_i`, `beta >= floor`.
/// Substituting the Stage-1 minimizers into the monolithic containment LP
/// preserves feasibility and cannot increase `beta`, so the decomposition is
/// exact. Returns `x_star = (x_bar - G z) / beta`.
pub fn farkas_design(
    x_bar: &DVector<f64>,
    g: &DMatrix<f64>,
    p_d: &HPolytope,
) -> Result<DesignResult, FlexError> {
    let t = g.ncols();
    if x_bar.len() != g.nrows() {
        return Err(FlexError::DimensionMismatch(format!(
            "x has {} entries, G has {} rows",
            x_bar.len(),
            g.nrows()
        )));
    }
    if p_d.dim() != t {
        return Err(FlexError::DimensionMismatch(format!(
            "target polytope dimension {} vs schedule dimension {t}",
            p_d.dim()
        )));
    }

    let t0 = std::time::Instant::now();
    let supports: Vec<Result<Option<f64>, OptError>> = (0..p_d.num_rows())
        .into_par_iter()
        .map(|i| stage1_row(g, x_bar, &p_d.a.row(i).transpose()))
        .collect();
    let stage1_ms = t0.elapsed().as_millis();

    let mut rows_kept = Vec::new();
    let mut h = Vec::new();
    let mut dropped = Vec::new();
    for (i, s) in supports.into_iter().enumerate() {
        match s? {
            Some(v) => {
                rows_kept.push(i);
                h.push(v);
            }
            None => {
                if row_redundant(p_d, i)? {
                    dropped.push(i);
                } else {
                    return Err(FlexError::RowInfeasible { row: i });
                }
            }
        }
    }

    // Stage 2 in support form: max -beta over (z, beta) with
    // -E_i z - d_i beta <= -h_i and -beta <= -floor.
    let t1 = std::time::Instant::now();
    let m = rows_kept.len();
    let mut a = DMatrix::zeros(m + 1, t + 1);
    let mut b = DVector::zeros(m + 1);
    for (r, &i) in rows_kept.iter().enumerate() {
        for c in 0..t {
            a[(r, c)] = -p_d.a[(i, c)];
        }
        a[(r, t)] = -p_d.b[i];
        b[r] = -h[r];
    }
    a[(m, t)] = -1.0;
    b[m] = -BETA_FLOOR;
    let mut obj = DVector::zeros(t + 1);
    obj[t] = -1.0;
    let (beta, z) = match poly_geom::support_over_rows(&a, &b, &obj)? {
        SupportOutcome::Value(v, w) => (-v, w.rows(0, t).into_owned()),
        SupportOutcome::PrimalEmpty => return Err(FlexError::Stage2Infeasible),
        SupportOutcome::NoCertificate => {
            unreachable!("beta is bounded below by the floor, so the stage-2 LP is bounded")
        }
    };
    let stage2_ms = t1.elapsed().as_millis();

    if beta <= 2.0 * BETA_FLOOR {
        return Err(FlexError::DegenerateBeta(beta));
    }
    let x_star = (x_bar - g * &z) / beta;
    Ok(DesignResult {
        x_star: x_star.iter().copied().collect(),
        beta,
        z: z.iter().copied().collect(),
        h,
        diagnostics: DesignDiagnostics {
            num_target_rows: p_d.num_rows(),
            dropped_redundant_rows: dropped,
            stage1_ms,
            stage2_ms,
        },
    })
}

/// Volume of the scaled replica: `v_prototype / beta^t`.
pub fn volume_scale(v_prototype: f64, beta: f64, t: usize) -> Result<f64, FlexError> {
    if beta <= 0.0 {
        return Err(FlexError::NonpositiveBeta(beta));
    }
    Ok(v_prototype / beta.powi(t as i32))
}
