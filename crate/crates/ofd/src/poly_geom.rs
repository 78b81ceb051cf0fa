//! Polyhedral geometry: a lifted polyhedral sandwich of the Euclidean ball
//! (tower-of-variables construction), affine mapping into schedule space,
//! Fourier-Motzkin elimination of the auxiliaries with redundancy pruning,
//! and support/containment certificates.

use crate::market_model::HPolytope;
use crate::opt_core::{solve_lp, LinearProgram, OptError, Sense, SolveStatus};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("invalid approximation parameters: {0}")]
    InvalidDelta(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row count {rows} exceeded the cap {cap} during elimination")]
    RowExplosion { rows: usize, cap: usize },
    #[error("polytope is unbounded in the requested direction")]
    Unbounded,
    #[error("polytope is empty")]
    Empty,
    #[error(transparent)]
    Solver(#[from] OptError),
}

/// `{y : E1 y + E2 q <= d for some q}` — a shadow of a higher-dimensional
/// polytope.
#[derive(Debug, Clone)]
pub struct LiftedPolytope {
    pub e1: DMatrix<f64>,
    pub e2: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl LiftedPolytope {
    pub fn dim(&self) -> usize {
        self.e1.ncols()
    }

    pub fn num_aux(&self) -> usize {
        self.e2.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.d.len()
    }
}

/// Per-stage accuracy of the two-dimensional rotation scheme with `nu`
/// stages: the polyhedral cell at angle resolution `pi / 2^(nu+1)`.
pub fn delta2(nu: usize) -> f64 {
    1.0 / (std::f64::consts::PI / 2f64.powi(nu as i32 + 1)).cos() - 1.0
}

/// Number of pairwise-combination levels of a balanced tree over `t` leaves.
fn tree_depth(t: usize) -> usize {
    (t as f64).log2().ceil() as usize
}

/// Smallest per-node stage count so the compounded error over the tree stays
/// within `delta`, plus the compounded total actually achieved.
pub fn stages_for(t: usize, delta: f64) -> Result<(usize, f64), PolyError> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(PolyError::InvalidDelta(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    let depth = tree_depth(t);
    if depth == 0 {
        return Ok((0, 0.0));
    }
    for nu in 1..60 {
        let total = (1.0 + delta2(nu)).powi(depth as i32) - 1.0;
        if total <= delta {
            return Ok((nu, total));
        }
    }
    Err(PolyError::InvalidDelta(format!(
        "no stage count reaches delta {delta}"
    )))
}

/// Sparse affine expression over the (y, aux) variable space.
type Expr = Vec<(usize, f64)>;

fn combine(a: &Expr, ca: f64, b: &Expr, cb: f64) -> Expr {
    let mut out: Expr = a.iter().map(|&(j, v)| (j, ca * v)).collect();
    for &(j, v) in b {
        match out.iter_mut().find(|(k, _)| *k == j) {
            Some((_, o)) => *o += cb * v,
            None => out.push((j, cb * v)),
        }
    }
    out
}

/// Polyhedral sandwich of the `r`-ball in `R^t`: every point of the lifted
/// shadow lies inside the `r`-ball, and the shadow contains the ball of
/// radius `r/(1+delta)`.
///
/// Construction: one auxiliary per coordinate carries `|y_i|`; a balanced
/// binary tree combines pairs with the rotation scheme
/// `xi_j = cos(th_j) xi_{j-1} + sin(th_j) eta_{j-1}`,
/// `eta_j >= |-sin(th_j) xi_{j-1} + cos(th_j) eta_{j-1}|`, `th_j = pi/2^(j+1)`,
/// closed by `eta_nu <= tan(th_nu) xi_nu`; the `xi` chain is substituted
/// away so only the `eta` variables are auxiliaries. The root output is
/// bounded by `r` deflated by the compounded per-node accuracy, which makes
/// the outer inclusion exact.
pub fn ball_approximation(t: usize, r: f64, delta: f64) -> Result<LiftedPolytope, PolyError> {
    if t == 0 || r <= 0.0 {
        return Err(PolyError::InvalidDelta(format!(
            "need t >= 1 and r > 0, got t={t}, r={r}"
        )));
    }
    let (nu, delta_total) = stages_for(t, delta)?;
    if t == 1 {
        // exact: |y| <= r
        return Ok(LiftedPolytope {
            e1: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            e2: DMatrix::zeros(2, 0),
            d: DVector::from_element(2, r),
        });
    }

    let mut num_aux = 0usize;
    let mut new_aux = |rows: &mut Vec<(Expr, f64)>| -> usize {
        let v = t + num_aux;
        num_aux += 1;
        let _ = rows;
        v
    };
    let mut rows: Vec<(Expr, f64)> = Vec::new();

    // leaves: aux_i >= |y_i|
    let mut level: Vec<Expr> = Vec::with_capacity(t);
    for i in 0..t {
        let a = new_aux(&mut rows);
        rows.push((vec![(i, 1.0), (a, -1.0)], 0.0));
        rows.push((vec![(i, -1.0), (a, -1.0)], 0.0));
        level.push(vec![(a, 1.0)]);
    }

    // combine pairs until one value remains
    while level.len() > 1 {
        let mut next = Vec::with_capacity((level.len() + 1) / 2);
        let mut iter = level.chunks(2);
        for chunk in &mut iter {
            match chunk {
                [a, b] => {
                    let mut xi = a.clone();
                    let mut eta = b.clone();
                    for j in 1..=nu {
                        let th = std::f64::consts::PI / 2f64.powi(j as i32 + 1);
                        let new_xi = combine(&xi, th.cos(), &eta, th.sin());
                        let rot = combine(&xi, -th.sin(), &eta, th.cos());
                        let hvar = new_aux(&mut rows);
                        rows.push((combine(&rot, 1.0, &vec![(hvar, 1.0)], -1.0), 0.0));
                        rows.push((combine(&rot, -1.0, &vec![(hvar, 1.0)], -1.0), 0.0));
                        xi = new_xi;
                        eta = vec![(hvar, 1.0)];
                    }
                    let th_last = std::f64::consts::PI / 2f64.powi(nu as i32 + 1);
                    rows.push((combine(&eta, 1.0, &xi, -th_last.tan()), 0.0));
                    next.push(xi);
                }
                [a] => next.push(a.clone()),
                _ => unreachable!(),
            }
        }
        level = next;
    }
    // root bound, deflated so that any feasible point obeys |y| <= r exactly
    rows.push((level.pop().unwrap(), r / (1.0 + delta_total)));

    let m = rows.len();
    let mut e1 = DMatrix::zeros(m, t);
    let mut e2 = DMatrix::zeros(m, num_aux);
    let mut d = DVector::zeros(m);
    for (i, (expr, rhs)) in rows.into_iter().enumerate() {
        for (j, v) in expr {
            if j < t {
                e1[(i, j)] += v;
            } else {
                e2[(i, j - t)] += v;
            }
        }
        d[i] = rhs;
    }
    Ok(LiftedPolytope { e1, e2, d })
}

/// Substitutes `y = M p + m`: the shadow over `p` of the same lifted set.
pub fn map_to_p(
    l: &LiftedPolytope,
    m_mat: &DMatrix<f64>,
    m_vec: &DVector<f64>,
) -> Result<LiftedPolytope, PolyError> {
    let t = l.dim();
    if m_mat.nrows() != t || m_mat.ncols() != t || m_vec.len() != t {
        return Err(PolyError::DimensionMismatch(format!(
            "map is {}x{} with offset {}, lifted set has dimension {t}",
            m_mat.nrows(),
            m_mat.ncols(),
            m_vec.len()
        )));
    }
    Ok(LiftedPolytope {
        e1: &l.e1 * m_mat,
        e2: l.e2.clone(),
        d: &l.d - &l.e1 * m_vec,
    })
}

/// `max obj . x` over `{x : rows x <= rhs}` with free `x`, solved through the
/// explicit dual `min rhs . lam` s.t. `rows' lam = obj, lam >= 0` (few basis
/// columns when rows outnumber variables). Returns the optimum and a primal
/// maximizer recovered from the dual row multipliers.
pub enum SupportOutcome {
    Value(f64, DVector<f64>),
    /// Dual infeasible: the primal is unbounded in this direction (or empty).
    NoCertificate,
    /// Dual unbounded: the primal is empty.
    PrimalEmpty,
}

pub fn support_over_rows(
    rows: &DMatrix<f64>,
    rhs: &DVector<f64>,
    obj: &DVector<f64>,
) -> Result<SupportOutcome, OptError> {
    let m = rows.nrows();
    let n = rows.ncols();
    let dual = LinearProgram {
        objective: rhs.clone(),
        rows: rows.transpose(),
        senses: vec![Sense::Eq; n],
        rhs: obj.clone(),
        bounds: vec![(0.0, f64::INFINITY); m],
    };
    let res = solve_lp(&dual)?;
    Ok(match res.status {
        SolveStatus::Optimal => {
            let x = res
                .dual
                .expect("optimal dual LP must carry row multipliers");
            SupportOutcome::Value(res.objective, x)
        }
        SolveStatus::Infeasible => SupportOutcome::NoCertificate,
        SolveStatus::Unbounded => SupportOutcome::PrimalEmpty,
        SolveStatus::NodeLimit => unreachable!("plain LP never reports a node limit"),
    })
}

/// `true` iff `{x : A x <= b}` has no points (Farkas certificate search).
pub fn is_empty(p: &HPolytope) -> Result<bool, PolyError> {
    match support_over_rows(&p.a, &p.b, &DVector::zeros(p.dim()))? {
        SupportOutcome::Value(_, _) => Ok(false),
        SupportOutcome::PrimalEmpty => Ok(true),
        SupportOutcome::NoCertificate => unreachable!("zero objective is always representable"),
    }
}

/// Support function `max u . p` over the polytope.
pub fn support(p: &HPolytope, u: &DVector<f64>) -> Result<f64, PolyError> {
    if u.len() != p.dim() {
        return Err(PolyError::DimensionMismatch(format!(
            "direction has dimension {}, polytope has {}",
            u.len(),
            p.dim()
        )));
    }
    match support_over_rows(&p.a, &p.b, u)? {
        SupportOutcome::Value(v, _) => Ok(v),
        SupportOutcome::PrimalEmpty => Err(PolyError::Empty),
        SupportOutcome::NoCertificate => {
            if is_empty(p)? {
                Err(PolyError::Empty)
            } else {
                Err(PolyError::Unbounded)
            }
        }
    }
}

/// Support function of the lifted shadow: `max u . y` s.t.
/// `E1 y + E2 q <= d` (over both y and q, with q coordinates unpriced).
pub fn lifted_support(l: &LiftedPolytope, u: &DVector<f64>) -> Result<f64, PolyError> {
    let t = l.dim();
    if u.len() != t {
        return Err(PolyError::DimensionMismatch(format!(
            "direction has dimension {}, lifted set has {t}",
            u.len()
        )));
    }
    let rows = DMatrix::from_fn(l.num_rows(), t + l.num_aux(), |i, j| {
        if j < t {
            l.e1[(i, j)]
        } else {
            l.e2[(i, j - t)]
        }
    });
    let mut obj = DVector::zeros(t + l.num_aux());
    obj.rows_mut(0, t).copy_from(u);
    match support_over_rows(&rows, &l.d, &obj)? {
        SupportOutcome::Value(v, _) => Ok(v),
        SupportOutcome::PrimalEmpty => Err(PolyError::Empty),
        SupportOutcome::NoCertificate => Err(PolyError::Unbounded),
    }
}

/// `inner subset-of outer`? Certified row by row: for every outer row
/// `(a_i, b_i)`, `support(inner, a_i) <= b_i + 1e-6`. Also returns the worst
/// slack `min_i (b_i - support_i)`.
pub fn certify_containment(inner: &HPolytope, outer: &HPolytope) -> Result<(bool, f64), PolyError> {
    if inner.dim() != outer.dim() {
        return Err(PolyError::DimensionMismatch(format!(
            "inner dimension {} vs outer {}",
            inner.dim(),
            outer.dim()
        )));
    }
    if is_empty(inner)? {
        return Err(PolyError::Empty);
    }
    let slacks: Result<Vec<f64>, PolyError> = (0..outer.num_rows())
        .into_par_iter()
        .map(|i| {
            let u = outer.a.row(i).transpose();
            Ok(outer.b[i] - support(inner, &u)?)
        })
        .collect();
    let worst = slacks?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok((worst >= -1e-6, worst))
}

#[derive(Debug, Clone)]
pub struct FmOptions {
    /// LP redundancy tests allowed per elimination round.
    pub prune_budget: usize,
    /// Hard cap on intermediate row count.
    pub row_cap: usize,
}

impl Default for FmOptions {
    fn default() -> Self {
        FmOptions {
            prune_budget: 20_000,
            row_cap: 1_000_000,
        }
    }
}

/// Eliminates all auxiliaries by Fourier-Motzkin, producing an equivalent
/// description `{p : A p <= b}` of the shadow. After each elimination the
/// row set is pruned: trivial and duplicate/dominated rows always, then
/// budgeted exact LP redundancy tests. Every pruning step preserves the
/// feasible set, so the output is the exact projection.
pub fn fourier_motzkin(l: &LiftedPolytope, opts: &FmOptions) -> Result<HPolytope, PolyError> {
    let t = l.dim();
    let q = l.num_aux();
    let n = t + q;
    let mut rows: Vec<(Vec<f64>, f64)> = (0..l.num_rows())
        .map(|i| {
            let mut r = vec![0.0; n];
            for j in 0..t {
                r[j] = l.e1[(i, j)];
            }
            for j in 0..q {
                r[t + j] = l.e2[(i, j)];
            }
            (r, l.d[i])
        })
        .collect();
    let mut remaining: Vec<usize> = (t..n).collect();

    prune_rows(&mut rows, t, &remaining, opts)?;
    while !remaining.is_empty() {
        // greedy: eliminate the auxiliary with the smallest pos*neg product
        let coef_tol = 1e-11;
        let (pick, _) = remaining
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let pos = rows.iter().filter(|(r, _)| r[v] > coef_tol).count();
                let neg = rows.iter().filter(|(r, _)| r[v] < -coef_tol).count();
                (idx, pos * neg + pos + neg)
            })
            .min_by_key(|&(_, cost)| cost)
            .unwrap();
        let v = remaining.remove(pick);

        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut zero = Vec::new();
        for (r, b) in rows.drain(..) {
            if r[v] > coef_tol {
                pos.push((r, b));
            } else if r[v] < -coef_tol {
                neg.push((r, b));
            } else {
                zero.push((r, b));
            }
        }
        let mut out = zero;
        if out.len() + pos.len() * neg.len() > opts.row_cap {
            return Err(PolyError::RowExplosion {
                rows: out.len() + pos.len() * neg.len(),
                cap: opts.row_cap,
            });
        }
        for (rp, bp) in &pos {
            let sp = 1.0 / rp[v];
            for (rn, bn) in &neg {
                let sn = 1.0 / -rn[v];
                let mut r: Vec<f64> = (0..n).map(|j| sp * rp[j] + sn * rn[j]).collect();
                r[v] = 0.0;
                out.push((r, sp * bp + sn * bn));
            }
        }
        rows = out;
        prune_rows(&mut rows, t, &remaining, opts)?;
    }

    let m = rows.len();
    let mut a = DMatrix::zeros(m, t);
    let mut b = DVector::zeros(m);
    let mut tags = Vec::with_capacity(m);
    for (i, (r, rhs)) in rows.into_iter().enumerate() {
        for j in 0..t {
            a[(i, j)] = r[j];
        }
        b[i] = rhs;
        tags.push(format!("fm[{i}]"));
    }
    Ok(HPolytope::new(a, b, tags))
}

/// Drops rows that cannot tighten the set: all-zero normals with
/// nonnegative rhs, scaled duplicates keeping the tightest rhs, and (up to
/// the budget) rows whose maximum over the remaining rows already satisfies
/// them.
fn prune_rows(
    rows: &mut Vec<(Vec<f64>, f64)>,
    t: usize,
    remaining: &[usize],
    opts: &FmOptions,
) -> Result<(), PolyError> {
    let n_active = t + remaining.len();
    // normalize by the largest coefficient magnitude for comparability
    let mut normed: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
    'row: for (r, b) in rows.drain(..) {
        let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale < 1e-12 {
            if b >= -1e-9 {
                continue; // 0 <= b: vacuous
            }
            // 0 <= b < 0: empty set; keep the contradiction as-is
            normed.push((r, b));
            continue;
        }
        let inv = 1.0 / scale;
        let rn: Vec<f64> = r.iter().map(|v| v * inv).collect();
        let bn = b * inv;
        for (other, ob) in normed.iter_mut() {
            if rn
                .iter()
                .zip(other.iter())
                .all(|(x, y)| (x - y).abs() <= 1e-10)
            {
                *ob = ob.min(bn);
                continue 'row;
            }
        }
        normed.push((rn, bn));
    }
    *rows = normed;

    // budgeted exact redundancy elimination over the active columns
    if rows.len() < 2 {
        return Ok(());
    }
    let cols: Vec<usize> = (0..t).chain(remaining.iter().copied()).collect();
    let mut budget = opts.prune_budget;
    let mut i = 0;
    while i < rows.len() {
        if budget == 0 {
            break;
        }
        budget -= 1;
        let m = rows.len() - 1;
        let mut a = DMatrix::zeros(m, n_active);
        let mut b = DVector::zeros(m);
        let mut obj = DVector::zeros(n_active);
        for (cj, &j) in cols.iter().enumerate() {
            obj[cj] = rows[i].0[j];
        }
        let mut k = 0;
        for (ri, (r, rb)) in rows.iter().enumerate() {
            if ri == i {
                continue;
            }
            for (cj, &j) in cols.iter().enumerate() {
                a[(k, cj)] = r[j];
            }
            b[k] = *rb;
            k += 1;
        }
        let redundant = match support_over_rows(&a, &b, &obj)? {
            SupportOutcome::Value(v, _) => v <= rows[i].1 + 1e-9,
            // unbounded in this direction: certainly not redundant
            SupportOutcome::NoCertificate => false,
            // remaining system already empty: this row changes nothing
            SupportOutcome::PrimalEmpty => true,
        };
        if redundant {
            rows.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(())
}
