//! Bounded-variable revised simplex with an explicitly maintained basis
//! inverse.
//!
//! Rows are brought to `A x + s = b` with one slack per row (slack bounds
//! encode the sense). The initial basis is the slack basis; rows whose slack
//! value violates its bounds get a phase-1 artificial. Dantzig pricing with a
//! switch to Bland's rule after a degeneracy streak guarantees termination.

use super::{LinearProgram, OptError, Sense, SolveResult, SolveStatus};
use nalgebra::{DMatrix, DVector};

const TOL_PIV: f64 = 1e-9;
const DEGEN_STREAK_FOR_BLAND: usize = 50;
const REFRESH_INTERVAL: usize = 400;
const CONFIRM_REFRESH_DRIFT: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VStat {
    Basic,
    AtLo,
    AtHi,
    Free,
}

pub fn solve_lp(lp: &LinearProgram) -> Result<SolveResult, OptError> {
    lp.validate()?;
    if lp.num_rows() == 0 {
        return Ok(solve_unconstrained(lp));
    }
    let mut sx = Simplex::new(lp);
    sx.solve()
}

/// A simplex instance that stays alive across solves so the basis carries
/// over (warm start). Callers may change variable bounds between solves; a
/// re-solve after a few bound flips typically needs a handful of pivots
/// instead of a cold start. Used by branch-and-bound, where consecutive node
/// LPs differ only in binary bounds.
pub struct WarmSimplex {
    inner: WarmInner,
}

enum WarmInner {
    Rows(Box<Simplex>),
    /// No rows: re-solved directly from the (mutated) bounds.
    Unconstrained(LinearProgram),
}

impl WarmSimplex {
    pub fn new(lp: &LinearProgram) -> Result<Self, OptError> {
        lp.validate()?;
        let inner = if lp.num_rows() == 0 {
            WarmInner::Unconstrained(lp.clone())
        } else {
            WarmInner::Rows(Box::new(Simplex::new(lp)))
        };
        Ok(WarmSimplex { inner })
    }

    /// Changes the bounds of structural variable `j`. A nonbasic variable is
    /// re-parked on its nearest (new) bound; a basic variable that ends up
    /// outside its bounds is repaired by the next `solve`.
    pub fn set_bound(&mut self, j: usize, lo: f64, hi: f64) {
        match &mut self.inner {
            WarmInner::Unconstrained(lp) => lp.bounds[j] = (lo, hi),
            WarmInner::Rows(sx) => sx.set_bound(j, lo, hi),
        }
    }

    pub fn solve(&mut self) -> Result<SolveResult, OptError> {
        match &mut self.inner {
            WarmInner::Unconstrained(lp) => Ok(solve_unconstrained(lp)),
            WarmInner::Rows(sx) => sx.solve(),
        }
    }
}

/// No rows: each variable independently sits at the bound its cost prefers.
fn solve_unconstrained(lp: &LinearProgram) -> SolveResult {
    let n = lp.num_vars();
    let mut x = DVector::zeros(n);
    for j in 0..n {
        let c = lp.objective[j];
        let (lo, hi) = lp.bounds[j];
        let v = if c > 0.0 { lo } else if c < 0.0 { hi } else if lo.is_finite() { lo } else if hi.is_finite() { hi } else { 0.0 };
        if !v.is_finite() {
            return SolveResult {
                status: SolveStatus::Unbounded,
                objective: f64::NEG_INFINITY,
                solution: None,
                dual: None,
                dual_objective: f64::NEG_INFINITY,
                iterations: 0,
                nodes: 0,
            };
        }
        x[j] = v;
    }
    let obj = lp.objective.dot(&x);
    SolveResult {
        status: SolveStatus::Optimal,
        objective: obj,
        solution: Some(x),
        dual: Some(DVector::zeros(0)),
        dual_objective: obj,
        iterations: 0,
        nodes: 0,
    }
}

struct Simplex {
    n: usize,
    m: usize,
    /// sparse column per variable (structurals; slacks/artificials are
    /// implicit unit columns, see `col_nz`)
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    obj: Vec<f64>,
    /// current-phase cost (phase 1: 1 on artificials)
    cost: Vec<f64>,
    stat: Vec<VStat>,
    /// value of each nonbasic variable (basic values live in `xb`)
    xval: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    /// column k holds row k of the basis inverse
    rinv: DMatrix<f64>,
    xb: DVector<f64>,
    d: Vec<f64>,
    n_art: usize,
    iterations: usize,
    degen_streak: usize,
    bland: bool,
    /// pivots applied to `rinv` since the last full refresh
    drift: usize,
    /// basis is still the untouched initial slack basis
    pristine: bool,
    tol_feas: f64,
    tol_opt: f64,
    rhs: DVector<f64>,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Simplex {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n + m);
        for j in 0..n {
            let mut col = Vec::new();
            for i in 0..m {
                let v = lp.rows[(i, j)];
                if v != 0.0 {
                    col.push((i, v));
                }
            }
            cols.push(col);
        }
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        let mut obj = Vec::with_capacity(n + m);
        for j in 0..n {
            lo.push(lp.bounds[j].0);
            hi.push(lp.bounds[j].1);
            obj.push(lp.objective[j]);
        }
        for i in 0..m {
            cols.push(vec![(i, 1.0)]);
            let (l, h) = match lp.senses[i] {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
            obj.push(0.0);
        }
        let mut stat = Vec::with_capacity(n + m);
        let mut xval = Vec::with_capacity(n + m);
        for j in 0..n {
            let (l, h) = (lo[j], hi[j]);
            if l.is_finite() {
                stat.push(VStat::AtLo);
                xval.push(l);
            } else if h.is_finite() {
                stat.push(VStat::AtHi);
                xval.push(h);
            } else {
                stat.push(VStat::Free);
                xval.push(0.0);
            }
        }
        for _ in 0..m {
            stat.push(VStat::Basic);
            xval.push(0.0);
        }
        let basis: Vec<usize> = (n..n + m).collect();
        let mut row_of = vec![usize::MAX; n + m];
        for r in 0..m {
            row_of[n + r] = r;
        }
        let mut sx = Simplex {
            n,
            m,
            cols,
            lo,
            hi,
            obj: obj.clone(),
            cost: obj,
            stat,
            xval,
            basis,
            row_of,
            rinv: DMatrix::identity(m, m),
            xb: DVector::zeros(m),
            d: vec![0.0; n + m],
            n_art: 0,
            iterations: 0,
            degen_streak: 0,
            bland: false,
            drift: 0,
            pristine: true,
            tol_feas: lp.tol_feas(),
            tol_opt: 1e-9 * (1.0 + lp.objective.amax()),
            rhs: lp.rhs.clone(),
        };
        sx.recompute_xb();
        sx
    }

    fn nvars(&self) -> usize {
        self.cols.len()
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n + self.m
    }

    fn recompute_xb(&mut self) {
        // xb = B^-1 (b - N x_N)
        let mut r = self.rhs.clone();
        for j in 0..self.nvars() {
            if self.stat[j] != VStat::Basic && self.xval[j] != 0.0 {
                for &(i, v) in &self.cols[j] {
                    r[i] -= v * self.xval[j];
                }
            }
        }
        for k in 0..self.m {
            self.xb[k] = self.rinv.column(k).dot(&r);
        }
    }

    /// Changes the bounds of structural variable `j`; a nonbasic variable is
    /// re-parked on its nearest new bound (basic variables are repaired by
    /// `install_artificials` on the next solve).
    fn set_bound(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.stat[j] == VStat::Basic {
            return;
        }
        if !lo.is_finite() && !hi.is_finite() {
            self.stat[j] = VStat::Free;
            self.xval[j] = 0.0;
            return;
        }
        let v = self.xval[j].clamp(lo, hi);
        if lo.is_finite() && (!hi.is_finite() || (v - lo).abs() <= (hi - v).abs()) {
            self.stat[j] = VStat::AtLo;
            self.xval[j] = lo;
        } else {
            self.stat[j] = VStat::AtHi;
            self.xval[j] = hi;
        }
    }

    /// Rows whose basic value violates its variable's bounds get the basic
    /// pushed to the nearest bound and a fresh artificial installed.
    ///
    /// `pristine` marks that the basis is still the untouched slack basis
    /// (inverse = I), where the column swap reduces to a sign flip; otherwise
    /// each install is a rank-1 inverse update (full rebuild only when the
    /// pivot would be degenerate).
    fn install_artificials(&mut self, pristine: bool) -> usize {
        let mut added = 0;
        let mut needs_refresh = false;
        for r in 0..self.m {
            let j = self.basis[r];
            let (l, h) = (self.lo[j], self.hi[j]);
            let v = self.xb[r];
            if v >= l - self.tol_feas && v <= h + self.tol_feas {
                continue;
            }
            let target = if v < l { l } else { h };
            let resid = v - target;
            // leaving variable parks at the violated bound
            self.stat[j] = if target == l { VStat::AtLo } else { VStat::AtHi };
            self.xval[j] = target;
            self.row_of[j] = usize::MAX;
            // artificial column sign*e_r so the artificial value is >= 0
            let sign = if resid > 0.0 { 1.0 } else { -1.0 };
            let a = self.nvars();
            self.cols.push(vec![(r, sign)]);
            self.lo.push(0.0);
            self.hi.push(f64::INFINITY);
            self.obj.push(0.0);
            self.cost.push(0.0);
            self.stat.push(VStat::Basic);
            self.xval.push(0.0);
            self.d.push(0.0);
            self.n_art += 1;
            self.basis[r] = a;
            self.row_of.push(r);
            added += 1;
            if pristine {
                self.xb[r] = resid.abs();
                if sign < 0.0 {
                    let mut c = self.rinv.column_mut(r);
                    c *= -1.0;
                }
            } else if !needs_refresh {
                // basis column r became sign*e_r: alpha = B^-1 (sign e_r)
                let alpha =
                    DVector::from_fn(self.m, |k, _| sign * self.rinv[(r, k)]);
                if alpha[r].abs() <= TOL_PIV {
                    needs_refresh = true;
                } else {
                    self.pivot_inverse(r, &alpha);
                }
            }
        }
        if added > 0 && !pristine {
            if needs_refresh {
                self.refresh_inverse();
            } else {
                self.recompute_xb();
            }
        }
        added
    }

    fn refresh_inverse(&mut self) {
        let mut b = DMatrix::zeros(self.m, self.m);
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                b[(i, r)] = v;
            }
        }
        match b.try_inverse() {
            Some(inv) => {
                self.rinv = inv.transpose();
            }
            None => {
                // singular basis from drift: fall back to identity-repair by
                // resetting to the slack basis; phase 1 will recover
                self.reset_to_slack_basis();
            }
        }
        self.drift = 0;
        self.recompute_xb();
    }

    /// Re-installs the all-slack basis (parking every current basic on a
    /// bound), making the inverse the identity again.
    fn reset_to_slack_basis(&mut self) {
        // park every current basic first, then seat the slacks, so a slack
        // that was basic in some other row is not clobbered mid-loop
        for r in 0..self.m {
            let j = self.basis[r];
            self.stat[j] = match (self.lo[j].is_finite(), self.hi[j].is_finite()) {
                (true, _) => VStat::AtLo,
                (false, true) => VStat::AtHi,
                _ => VStat::Free,
            };
            self.xval[j] = match self.stat[j] {
                VStat::AtLo => self.lo[j],
                VStat::AtHi => self.hi[j],
                _ => 0.0,
            };
            self.row_of[j] = usize::MAX;
        }
        for r in 0..self.m {
            let s = self.n + r;
            self.basis[r] = s;
            self.stat[s] = VStat::Basic;
            self.row_of[s] = r;
        }
        self.rinv = DMatrix::identity(self.m, self.m);
        self.drift = 0;
        self.pristine = true;
        self.recompute_xb();
    }

    fn recompute_duals(&mut self) -> DVector<f64> {
        let cb = DVector::from_fn(self.m, |k, _| self.cost[self.basis[k]]);
        // y_i = sum_k cb[k] * Binv[k, i] = (rinv * cb)_i
        let y = &self.rinv * cb;
        for j in 0..self.nvars() {
            if self.stat[j] == VStat::Basic {
                self.d[j] = 0.0;
            } else {
                let mut dj = self.cost[j];
                for &(i, v) in &self.cols[j] {
                    dj -= y[i] * v;
                }
                self.d[j] = dj;
            }
        }
        y
    }

    fn set_phase1_cost(&mut self) {
        for j in 0..self.nvars() {
            self.cost[j] = if self.is_artificial(j) { 1.0 } else { 0.0 };
        }
    }

    fn set_phase2_cost(&mut self) {
        for j in 0..self.nvars() {
            self.cost[j] = if self.is_artificial(j) { 0.0 } else { self.obj[j] };
        }
        // artificials are pinned at zero and never re-enter
        for j in 0..self.nvars() {
            if self.is_artificial(j) {
                self.hi[j] = 0.0;
            }
        }
    }

    /// Entering variable, or None at (phase-)optimality.
    fn price(&self, allow_art: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.nvars() {
            if self.stat[j] == VStat::Basic || (!allow_art && self.is_artificial(j)) {
                continue;
            }
            let dj = self.d[j];
            let eligible = match self.stat[j] {
                VStat::AtLo => dj < -self.tol_opt && self.hi[j] > self.lo[j],
                VStat::AtHi => dj > self.tol_opt && self.hi[j] > self.lo[j],
                VStat::Free => dj.abs() > self.tol_opt,
                VStat::Basic => false,
            };
            if !eligible {
                continue;
            }
            if self.bland {
                return Some((j, dj));
            }
            match best {
                Some((_, bd)) if dj.abs() <= bd.abs() => {}
                _ => best = Some((j, dj)),
            }
        }
        best
    }

    fn run_phase(&mut self, allow_art: bool, iter_limit: usize) -> Result<PhaseEnd, OptError> {
        loop {
            if self.iterations > iter_limit {
                return Err(OptError::CycleLimit);
            }
            if self.drift >= REFRESH_INTERVAL {
                self.refresh_inverse();
                self.recompute_duals();
            }
            let Some((q, dq)) = self.price(allow_art) else {
                // confirm with freshly computed values before declaring
                // done; a full inverse rebuild only after long pivot runs
                if self.drift >= CONFIRM_REFRESH_DRIFT {
                    self.refresh_inverse();
                } else {
                    self.recompute_xb();
                }
                self.recompute_duals();
                match self.price(allow_art) {
                    None => return Ok(PhaseEnd::Optimal),
                    Some(_) => continue,
                }
            };
            self.iterations += 1;

            let dir: f64 = match self.stat[q] {
                VStat::AtLo => 1.0,
                VStat::AtHi => -1.0,
                VStat::Free => {
                    if dq < 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                VStat::Basic => unreachable!(),
            };

            // alpha = B^-1 a_q
            let mut alpha = DVector::zeros(self.m);
            let col = &self.cols[q];
            for k in 0..self.m {
                let mut s = 0.0;
                let rc = self.rinv.column(k);
                for &(i, v) in col {
                    s += v * rc[i];
                }
                alpha[k] = s;
            }

            // ratio test; a bound flip of the entering variable competes at
            // t = its own range and wins ties (cheaper, no basis change)
            let range = self.hi[q] - self.lo[q]; // may be inf
            let tie = 1e-12;
            let mut t_best = if range.is_finite() { range } else { f64::INFINITY };
            let mut leave: Option<usize> = None; // row index
            for i in 0..self.m {
                let a = alpha[i];
                if a.abs() <= TOL_PIV {
                    continue;
                }
                let k = self.basis[i];
                let delta = -dir * a; // rate of change of xb[i]
                let ti = if delta < 0.0 {
                    if self.lo[k].is_finite() {
                        (self.xb[i] - self.lo[k]) / (-delta)
                    } else {
                        f64::INFINITY
                    }
                } else if self.hi[k].is_finite() {
                    (self.hi[k] - self.xb[i]) / delta
                } else {
                    f64::INFINITY
                };
                let ti = ti.max(0.0);
                if ti < t_best - tie {
                    t_best = ti;
                    leave = Some(i);
                } else if ti <= t_best + tie {
                    if let Some(l) = leave {
                        let swap = if self.bland {
                            self.basis[i] < self.basis[l]
                        } else {
                            a.abs() > alpha[l].abs()
                        };
                        if swap {
                            t_best = t_best.min(ti);
                            leave = Some(i);
                        }
                    }
                }
            }

            if !t_best.is_finite() {
                return Ok(PhaseEnd::Unbounded);
            }

            let improvement = dq.abs() * t_best;
            if improvement <= 1e-12 * (1.0 + dq.abs()) {
                self.degen_streak += 1;
                if self.degen_streak >= DEGEN_STREAK_FOR_BLAND {
                    self.bland = true;
                }
            } else {
                self.degen_streak = 0;
                self.bland = false;
            }

            match leave {
                None => {
                    // bound flip: entering moves across its own range
                    for i in 0..self.m {
                        self.xb[i] += -dir * alpha[i] * t_best;
                    }
                    self.stat[q] = if dir > 0.0 { VStat::AtHi } else { VStat::AtLo };
                    self.xval[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some(r) => {
                    let entering_val = self.xval[q] + dir * t_best;
                    let leaving = self.basis[r];
                    let delta_r = -dir * alpha[r];
                    let leaving_val = if delta_r < 0.0 { self.lo[leaving] } else { self.hi[leaving] };
                    for i in 0..self.m {
                        self.xb[i] += -dir * alpha[i] * t_best;
                    }
                    self.stat[leaving] = if delta_r < 0.0 { VStat::AtLo } else { VStat::AtHi };
                    self.xval[leaving] = leaving_val;
                    self.row_of[leaving] = usize::MAX;
                    self.stat[q] = VStat::Basic;
                    self.basis[r] = q;
                    self.row_of[q] = r;
                    self.xb[r] = entering_val;
                    self.update_inverse_and_duals(r, q, leaving, &alpha, dq);
                }
            }
        }
    }

    /// Rank-1 basis-inverse update for a pivot at row `r` with entering
    /// column ratios `alpha = B^-1 a_q`:
    /// row r /= alpha_r; row i -= alpha_i * row r.
    fn pivot_inverse(&mut self, r: usize, alpha: &DVector<f64>) {
        let stride = self.m;
        let data = self.rinv.as_mut_slice();
        let (head, rest) = data.split_at_mut(r * stride);
        let (rcol, tail) = rest.split_at_mut(stride);
        let inv_ar = 1.0 / alpha[r];
        for v in rcol.iter_mut() {
            *v *= inv_ar;
        }
        let apply = |cols: &mut [f64], base: usize| {
            for (ci, chunk) in cols.chunks_exact_mut(stride).enumerate() {
                let a = alpha[base + ci];
                if a != 0.0 {
                    for (x, &p) in chunk.iter_mut().zip(rcol.iter()) {
                        *x -= a * p;
                    }
                }
            }
        };
        apply(head, 0);
        apply(tail, r + 1);
        self.drift += 1;
        self.pristine = false;
    }

    fn update_inverse_and_duals(
        &mut self,
        r: usize,
        q: usize,
        leaving: usize,
        alpha: &DVector<f64>,
        dq: f64,
    ) {
        let ar = alpha[r];
        // pivot row of the OLD inverse, needed for the dual update
        let vrow: Vec<f64> = self.rinv.column(r).iter().copied().collect();
        self.pivot_inverse(r, alpha);

        // reduced-cost update: d_j -= (dq/ar) * (vrow . a_j)
        let ratio = dq / ar;
        for j in 0..self.nvars() {
            if self.stat[j] == VStat::Basic {
                self.d[j] = 0.0;
                continue;
            }
            let mut w = 0.0;
            for &(i, v) in &self.cols[j] {
                w += v * vrow[i];
            }
            if w != 0.0 {
                self.d[j] -= ratio * w;
            }
        }
        self.d[leaving] = -ratio;
        self.d[q] = 0.0;
    }

    fn phase1_objective(&self) -> f64 {
        let mut s = 0.0;
        for r in 0..self.m {
            let j = self.basis[r];
            if self.is_artificial(j) {
                s += self.xb[r];
            }
        }
        s
    }

    fn solve(&mut self) -> Result<SolveResult, OptError> {
        let iter_limit = 1000 * (self.m + self.n) + 100_000;
        self.iterations = 0;
        if !self.pristine {
            // bounds may have changed since the last solve
            self.recompute_xb();
        }
        for _round in 0..4 {
            // repairing one row can push another row's basic value out of
            // bounds (parked columns hit other rows), so iterate to a
            // violation-free basis before phase 1
            let mut added = 0;
            let mut passes = 0usize;
            loop {
                let a = self.install_artificials(self.pristine);
                self.pristine = false;
                added += a;
                if a == 0 {
                    break;
                }
                passes += 1;
                if passes > self.m + 16 {
                    // repair cascade is ping-ponging between rows: give up
                    // on the warm basis and restart from the slack basis
                    // (one pristine install pass always suffices there)
                    self.reset_to_slack_basis();
                    added += self.install_artificials(true);
                    self.pristine = false;
                    break;
                }
            }
            if added > 0 || self.phase1_objective() > self.tol_feas {
                self.set_phase1_cost();
                self.recompute_duals();
                self.degen_streak = 0;
                self.bland = false;
                match self.run_phase(true, iter_limit)? {
                    PhaseEnd::Optimal => {}
                    PhaseEnd::Unbounded => {
                        // phase-1 objective is bounded below by zero; an
                        // unbounded ray here is numerical drift
                        return Err(OptError::CycleLimit);
                    }
                }
                if self.phase1_objective() > self.tol_feas {
                    return Ok(self.finish(SolveStatus::Infeasible));
                }
            }
            self.set_phase2_cost();
            self.recompute_duals();
            self.degen_streak = 0;
            self.bland = false;
            match self.run_phase(false, iter_limit)? {
                PhaseEnd::Unbounded => {
                    return Ok(self.finish(SolveStatus::Unbounded));
                }
                PhaseEnd::Optimal => {
                    // the phase-end confirmation just recomputed xb; repair
                    // and repeat when a basic value drifted out of bounds
                    let viol = (0..self.m).any(|r| {
                        let j = self.basis[r];
                        self.xb[r] < self.lo[j] - self.tol_feas
                            || self.xb[r] > self.hi[j] + self.tol_feas
                    });
                    if !viol {
                        return Ok(self.finish(SolveStatus::Optimal));
                    }
                }
            }
        }
        Err(OptError::CycleLimit)
    }

    fn finish(&mut self, status: SolveStatus) -> SolveResult {
        match status {
            SolveStatus::Optimal => {
                let y = self.recompute_duals();
                let mut x = DVector::zeros(self.n);
                for j in 0..self.n {
                    x[j] = if self.stat[j] == VStat::Basic {
                        self.xb[self.row_of[j]]
                    } else {
                        self.xval[j]
                    };
                }
                let mut obj = 0.0;
                for j in 0..self.n {
                    obj += self.obj[j] * x[j];
                }
                let mut dual_obj = y.dot(&self.rhs);
                for j in 0..self.n {
                    if self.stat[j] != VStat::Basic {
                        dual_obj += self.d[j] * self.xval[j];
                    }
                }
                SolveResult {
                    status,
                    objective: obj,
                    solution: Some(x),
                    dual: Some(y),
                    dual_objective: dual_obj,
                    iterations: self.iterations,
                    nodes: 0,
                }
            }
            _ => SolveResult {
                status,
                objective: if status == SolveStatus::Unbounded {
                    f64::NEG_INFINITY
                } else {
                    f64::NAN
                },
                solution: None,
                dual: None,
                dual_objective: f64::NAN,
                iterations: self.iterations,
                nodes: 0,
            },
        }
    }
}
