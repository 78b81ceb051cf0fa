//! Evaluation utilities: axis-aligned bounding boxes, Monte-Carlo volume
//! estimation with standard errors, convexity diagnostics over the labeled
//! dataset (M1/M2), and 2-D plot-data extraction.

use crate::classifier::Ellipsoid;
use crate::dataset_gen::LabeledDataset;
use crate::disagg::{self, AggregateModel, DisaggError, DisaggOptions};
use crate::market_model::{membership, HPolytope};
use crate::opt_core::{solve_lp, LinearProgram, OptError, Sense, SolveStatus};
use crate::poly_geom::{self, PolyError, SupportOutcome};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("polytope is empty")]
    Empty,
    #[error("dataset does not contain both classes")]
    SingleClass,
    #[error("sample count must be positive")]
    InvalidCount,
    #[error("need at least one feasible point to span a hull")]
    DegenerateHull,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Label(#[from] DisaggError),
    #[error(transparent)]
    Solver(#[from] OptError),
}

impl From<PolyError> for EvalError {
    fn from(e: PolyError) -> Self {
        match e {
            PolyError::Unbounded => EvalError::Unbounded,
            PolyError::Empty => EvalError::Empty,
            PolyError::Solver(o) => EvalError::Solver(o),
            other => EvalError::DimensionMismatch(other.to_string()),
        }
    }
}

/// Tightest axis-aligned box containing the polytope, from 2T support LPs.
pub fn bounding_box(p: &HPolytope) -> Result<(DVector<f64>, DVector<f64>), EvalError> {
    let t = p.dim();
    let sides: Result<Vec<(f64, f64)>, EvalError> = (0..t)
        .into_par_iter()
        .map(|i| {
            let mut u = DVector::zeros(t);
            u[i] = 1.0;
            let hi = poly_geom::support(p, &u)?;
            u[i] = -1.0;
            let lo = -poly_geom::support(p, &u)?;
            Ok((lo, hi))
        })
        .collect();
    let sides = sides?;
    Ok((
        DVector::from_fn(t, |i, _| sides[i].0),
        DVector::from_fn(t, |i, _| sides[i].1),
    ))
}

pub fn box_volume(lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    lo.iter().zip(hi.iter()).map(|(l, h)| h - l).product()
}

/// Monte-Carlo volume: hit ratio over the bounding box times the box volume,
/// with the binomial standard error. Deterministic for a fixed seed
/// regardless of thread count (fixed-size shards with per-shard seeds).
pub fn mc_volume(p: &HPolytope, samples: usize, seed: u64) -> Result<(f64, f64), EvalError> {
    if samples == 0 {
        return Err(EvalError::InvalidCount);
    }
    let (lo, hi) = bounding_box(p)?;
    let vol = box_volume(&lo, &hi);
    if vol <= 0.0 {
        // flat box: the polytope is lower-dimensional
        return Ok((0.0, 0.0));
    }
    let t = p.dim();
    const SHARD: usize = 1 << 14;
    let shards: Vec<(usize, usize)> = (0..samples.div_ceil(SHARD))
        .map(|s| (s, SHARD.min(samples - s * SHARD)))
        .collect();
    let hits: usize = shards
        .into_par_iter()
        .map(|(s, n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut point = DVector::zeros(t);
            let mut hits = 0usize;
            for _ in 0..n {
                for i in 0..t {
                    point[i] = rng.gen_range(lo[i]..=hi[i]);
                }
                if membership(p, &point, 1e-12).unwrap_or(false) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let ratio = hits as f64 / samples as f64;
    let se = (ratio * (1.0 - ratio) / samples as f64).sqrt() * vol;
    Ok((ratio * vol, se))
}

/// `true` iff `p` lies in the convex hull of the columns of `verts`
/// (feasibility LP over barycentric weights).
pub fn hull_membership(verts: &DMatrix<f64>, p: &DVector<f64>) -> Result<bool, EvalError> {
    let t = verts.nrows();
    if p.len() != t {
        return Err(EvalError::DimensionMismatch(format!(
            "point dimension {} vs hull dimension {t}",
            p.len()
        )));
    }
    let n = verts.ncols();
    let mut rows = DMatrix::zeros(t + 1, n);
    rows.view_mut((0, 0), (t, n)).copy_from(verts);
    for j in 0..n {
        rows[(t, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(t + 1);
    rhs.rows_mut(0, t).copy_from(p);
    rhs[t] = 1.0;
    let lp = LinearProgram {
        objective: DVector::zeros(n),
        rows,
        senses: vec![Sense::Eq; t + 1],
        rhs,
        bounds: vec![(0.0, f64::INFINITY); n],
    };
    let res = solve_lp(&lp)?;
    Ok(res.status == SolveStatus::Optimal)
}

fn feasible_matrix(data: &LabeledDataset) -> Result<DMatrix<f64>, EvalError> {
    let feas: Vec<&Vec<f64>> = data
        .points
        .iter()
        .filter(|pt| pt.y == -1)
        .map(|pt| &pt.p)
        .collect();
    if feas.is_empty() {
        return Err(EvalError::DegenerateHull);
    }
    let t = feas[0].len();
    Ok(DMatrix::from_fn(t, feas.len(), |i, j| feas[j][i]))
}

/// M1: fraction of infeasible dataset points lying inside the convex hull of
/// the feasible points (one feasibility LP per infeasible point).
pub fn metric_m1(data: &LabeledDataset) -> Result<f64, EvalError> {
    let verts = feasible_matrix(data)?;
    let infeasible: Vec<&Vec<f64>> = data
        .points
        .iter()
        .filter(|pt| pt.y == 1)
        .map(|pt| &pt.p)
        .collect();
    if infeasible.is_empty() {
        return Err(EvalError::SingleClass);
    }
    let inside: Result<Vec<bool>, EvalError> = infeasible
        .par_iter()
        .map(|p| hull_membership(&verts, &DVector::from_column_slice(p)))
        .collect();
    let inside = inside?;
    Ok(inside.iter().filter(|&&b| b).count() as f64 / inside.len() as f64)
}

/// Extent of the chord `{x + s u}` inside the hull: the max (or min) of `s`
/// over barycentric representations, by LP.
fn chord_extent(
    verts: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    maximize: bool,
) -> Result<f64, EvalError> {
    let t = verts.nrows();
    let n = verts.ncols();
    let mut rows = DMatrix::zeros(t + 1, n + 1);
    rows.view_mut((0, 0), (t, n)).copy_from(verts);
    for j in 0..n {
        rows[(t, j)] = 1.0;
    }
    for i in 0..t {
        rows[(i, n)] = -u[i];
    }
    let mut rhs = DVector::zeros(t + 1);
    rhs.rows_mut(0, t).copy_from(x);
    rhs[t] = 1.0;
    let mut objective = DVector::zeros(n + 1);
    objective[n] = if maximize { -1.0 } else { 1.0 };
    let mut bounds = vec![(0.0, f64::INFINITY); n];
    bounds.push((f64::NEG_INFINITY, f64::INFINITY));
    let lp = LinearProgram {
        objective,
        rows,
        senses: vec![Sense::Eq; t + 1],
        rhs,
        bounds,
    };
    let res = solve_lp(&lp)?;
    if res.status != SolveStatus::Optimal {
        return Err(EvalError::DegenerateHull);
    }
    let sol = res.solution.ok_or(EvalError::DegenerateHull)?;
    Ok(sol[n])
}

/// Approximately uniform samples from the convex hull of the feasible points:
/// hit-and-run with exact chord extents by LP, `5 T^2` burn-in steps per
/// retained sample, started at the vertex centroid.
pub fn hull_samples(
    data: &LabeledDataset,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>, EvalError> {
    if count == 0 {
        return Err(EvalError::InvalidCount);
    }
    let verts = feasible_matrix(data)?;
    let t = verts.nrows();
    let n = verts.ncols();
    let centroid = DVector::from_fn(t, |i, _| verts.row(i).sum() / n as f64);
    // degenerate hull (single distinct point): every sample is that point
    let spread = (0..n)
        .map(|j| (verts.column(j) - &centroid).amax())
        .fold(0.0f64, f64::max);
    if spread < 1e-12 {
        return Ok(vec![centroid; count]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn_in = 5 * t * t;
    let mut x = centroid;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        for _ in 0..burn_in {
            let u = loop {
                let v = DVector::from_fn(t, |_, _| rng.gen_range(-1.0f64..1.0));
                let norm = v.norm();
                if norm > 1e-6 {
                    break v / norm;
                }
            };
            let s_max = chord_extent(&verts, &x, &u, true)?;
            let s_min = chord_extent(&verts, &x, &u, false)?;
            if s_max - s_min > 1e-12 {
                let s = rng.gen_range(s_min..=s_max);
                x += u * s;
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// M2: fraction of hull samples that fail the chance-labeling at `epsilon`.
#[allow(clippy::too_many_arguments)]
pub fn metric_m2(
    data: &LabeledDataset,
    model: &AggregateModel,
    k: usize,
    epsilon: f64,
    count: usize,
    seed: u64,
    opts: &DisaggOptions,
) -> Result<f64, EvalError> {
    let samples = hull_samples(data, count, seed)?;
    let labels: Result<Vec<i8>, DisaggError> = samples
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            disagg::label(p, model, k, epsilon, seed.wrapping_add(1 + i as u64), opts)
                .map(|o| o.y)
        })
        .collect();
    let labels = labels?;
    Ok(labels.iter().filter(|&&y| y == 1).count() as f64 / labels.len() as f64)
}

/// Outline of a 2-D polytope for plotting: support maximizers over a fan of
/// directions, de-duplicated, in angular order.
pub fn polytope_outline_2d(p: &HPolytope, directions: usize) -> Result<Vec<(f64, f64)>, EvalError> {
    if p.dim() != 2 {
        return Err(EvalError::DimensionMismatch(format!(
            "outline needs dimension 2, got {}",
            p.dim()
        )));
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for k in 0..directions {
        let th = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
        let u = DVector::from_column_slice(&[th.cos(), th.sin()]);
        match poly_geom::support_over_rows(&p.a, &p.b, &u)? {
            SupportOutcome::Value(_, x) => {
                let cand = (x[0], x[1]);
                if pts
                    .iter()
                    .all(|q| (q.0 - cand.0).abs() + (q.1 - cand.1).abs() > 1e-9)
                {
                    pts.push(cand);
                }
            }
            SupportOutcome::PrimalEmpty => return Err(EvalError::Empty),
            SupportOutcome::NoCertificate => return Err(EvalError::Unbounded),
        }
    }
    let cx = pts.iter().map(|q| q.0).sum::<f64>() / pts.len().max(1) as f64;
    let cy = pts.iter().map(|q| q.1).sum::<f64>() / pts.len().max(1) as f64;
    pts.sort_by(|a, b| {
        let ta = (a.1 - cy).atan2(a.0 - cx);
        let tb = (b.1 - cy).atan2(b.0 - cx);
        ta.total_cmp(&tb)
    });
    Ok(pts)
}

/// Zero-level curve of a 2-D quadratic classifier, for plotting.
pub fn ellipsoid_outline_2d(e: &Ellipsoid, points: usize) -> Result<Vec<(f64, f64)>, EvalError> {
    if e.dim() != 2 {
        return Err(EvalError::DimensionMismatch(format!(
            "outline needs dimension 2, got {}",
            e.dim()
        )));
    }
    let w2 = e.w2.clone();
    let center = -w2
        .clone()
        .lu()
        .solve(&e.w1)
        .ok_or_else(|| EvalError::DimensionMismatch("singular quadratic term".into()))?
        / 2.0;
    let inside = e.margin(&center);
    if inside >= 0.0 {
        return Err(EvalError::Empty);
    }
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let th = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
        let u = DVector::from_column_slice(&[th.cos(), th.sin()]);
        let quad = (u.transpose() * &w2 * &u)[(0, 0)];
        let t = (-inside / quad).sqrt();
        let p = &center + &u * t;
        out.push((p[0], p[1]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_gen::{LabeledPoint, Origin};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn simplex(t: usize) -> HPolytope {
        // p >= 0, sum p <= 1
        let mut a = DMatrix::zeros(t + 1, t);
        let mut b = DVector::zeros(t + 1);
        for i in 0..t {
            a[(i, i)] = -1.0;
        }
        for j in 0..t {
            a[(t, j)] = 1.0;
        }
        b[t] = 1.0;
        HPolytope::new(a, b, vec![String::new(); t + 1])
    }

    fn cube(t: usize, lo: f64, hi: f64) -> HPolytope {
        let mut a = DMatrix::zeros(2 * t, t);
        let mut b = DVector::zeros(2 * t);
        for i in 0..t {
            a[(i, i)] = 1.0;
            b[i] = hi;
            a[(t + i, i)] = -1.0;
            b[t + i] = -lo;
        }
        HPolytope::new(a, b, vec![String::new(); 2 * t])
    }

    fn dataset(feasible: &[Vec<f64>], infeasible: &[Vec<f64>]) -> LabeledDataset {
        let mut points = Vec::new();
        for p in feasible {
            points.push(LabeledPoint::new(p.clone(), -1, 1.0, Origin::Uniform));
        }
        for p in infeasible {
            points.push(LabeledPoint::new(p.clone(), 1, 0.0, Origin::Uniform));
        }
        LabeledDataset {
            points,
            epsilon: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn bounding_box_examples() {
        let (lo, hi) = bounding_box(&cube(2, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(lo, dvector![0.0, 0.0], epsilon = 1e-9);
        assert_abs_diff_eq!(hi, dvector![1.0, 1.0], epsilon = 1e-9);
        let (lo, hi) = bounding_box(&simplex(3)).unwrap();
        assert_abs_diff_eq!(lo, dvector![0.0, 0.0, 0.0], epsilon = 1e-9);
        assert_abs_diff_eq!(hi, dvector![1.0, 1.0, 1.0], epsilon = 1e-9);
        // box faces are attained (support optimum is tight)
        for i in 0..3 {
            let mut u = DVector::zeros(3);
            u[i] = 1.0;
            let s = poly_geom::support(&simplex(3), &u).unwrap();
            assert_abs_diff_eq!(s, hi[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn bounding_box_error_paths() {
        let half = HPolytope::new(dmatrix![-1.0], dvector![0.0], vec![String::new()]);
        assert!(matches!(bounding_box(&half), Err(EvalError::Unbounded)));
        let empty = HPolytope::new(
            dmatrix![1.0; -1.0],
            dvector![-1.0, 0.0],
            vec![String::new(); 2],
        );
        assert!(matches!(bounding_box(&empty), Err(EvalError::Empty)));
    }

    #[test]
    fn mc_volume_unit_cube_exact() {
        let (v, se) = mc_volume(&cube(3, 0.0, 1.0), 10_000, 1).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(se, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mc_volume_simplex_calibrated() {
        for t in 2..=3usize {
            let truth = 1.0 / (1..=t).product::<usize>() as f64;
            let (v, se) = mc_volume(&simplex(t), 200_000, 7).unwrap();
            assert!(
                (v - truth).abs() <= 3.0 * se,
                "t={t}: estimate {v} vs {truth} (se {se})"
            );
        }
    }

    #[test]
    fn mc_volume_sliced_cube_unbiased() {
        for thr in [0.25, 0.5, 0.75] {
            let p = HPolytope::new(
                dmatrix![1.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0; 1.0, 0.0],
                dvector![1.0, 0.0, 1.0, 0.0, thr],
                vec![String::new(); 5],
            );
            let (v, se) = mc_volume(&p, 100_000, 11).unwrap();
            assert!((v - thr).abs() <= 3.0 * se, "thr={thr}: {v} +- {se}");
        }
    }

    #[test]
    fn mc_volume_deterministic_per_seed() {
        let (a, _) = mc_volume(&simplex(2), 50_000, 42).unwrap();
        let (b, _) = mc_volume(&simplex(2), 50_000, 42).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let (c, _) = mc_volume(&simplex(2), 50_000, 43).unwrap();
        assert_ne!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn m1_examples() {
        let feas = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = dataset(&feas, &[vec![0.3, 0.3]]);
        assert_abs_diff_eq!(metric_m1(&d).unwrap(), 1.0, epsilon = 1e-12);
        let d = dataset(&feas, &[vec![1.0, 1.0]]);
        assert_abs_diff_eq!(metric_m1(&d).unwrap(), 0.0, epsilon = 1e-12);
        // duplicated feasible points leave the hull unchanged
        let mut feas2 = feas.clone();
        feas2.extend(feas.clone());
        let d = dataset(&feas2, &[vec![0.3, 0.3], vec![1.0, 1.0]]);
        assert_abs_diff_eq!(metric_m1(&d).unwrap(), 0.5, epsilon = 1e-12);
        // infeasible copies of feasible points sit inside by definition
        let d = dataset(&feas, &feas);
        assert_abs_diff_eq!(metric_m1(&d).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn m1_error_paths() {
        let d = dataset(&[vec![0.0, 0.0]], &[]);
        assert!(matches!(metric_m1(&d), Err(EvalError::SingleClass)));
        let d = dataset(&[], &[vec![0.0, 0.0]]);
        assert!(matches!(metric_m1(&d), Err(EvalError::DegenerateHull)));
    }

    #[test]
    fn hull_samples_stay_inside_and_spread() {
        let feas = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = dataset(&feas, &[vec![1.0, 1.0]]);
        let verts = feasible_matrix(&d).unwrap();
        let samples = hull_samples(&d, 50, 3).unwrap();
        assert_eq!(samples.len(), 50);
        let mut mean = DVector::zeros(2);
        for s in &samples {
            assert!(hull_membership(&verts, s).unwrap());
            mean += s;
        }
        mean /= 50.0;
        // roughly centered near the simplex centroid (1/3, 1/3)
        assert!((mean[0] - 1.0 / 3.0).abs() < 0.12, "mean {mean:?}");
        assert!((mean[1] - 1.0 / 3.0).abs() < 0.12, "mean {mean:?}");
    }

    #[test]
    fn hull_samples_degenerate_single_point() {
        let d = dataset(&[vec![0.25, 0.75]], &[vec![0.0, 0.0]]);
        let samples = hull_samples(&d, 5, 1).unwrap();
        for s in samples {
            assert_abs_diff_eq!(s, dvector![0.25, 0.75], epsilon = 1e-12);
        }
    }

    #[test]
    fn m2_over_known_polytope() {
        // hull of points inside the unit box vs the box itself as the model:
        // every hull sample is inside -> M2 = 0
        let model = AggregateModel::Polytope(cube(2, 0.0, 1.0));
        let feas = vec![vec![0.1, 0.1], vec![0.9, 0.1], vec![0.5, 0.9]];
        let d = dataset(&feas, &[vec![2.0, 2.0]]);
        let m2 = metric_m2(&d, &model, 5, 0.0, 20, 9, &DisaggOptions::default()).unwrap();
        assert_abs_diff_eq!(m2, 0.0, epsilon = 1e-12);
        // shrink the model so most of the hull is outside -> M2 > 0
        let tiny = AggregateModel::Polytope(cube(2, 0.0, 0.05));
        let m2 = metric_m2(&d, &tiny, 5, 0.0, 20, 9, &DisaggOptions::default()).unwrap();
        assert!(m2 > 0.5, "m2 = {m2}");
        assert!(matches!(
            metric_m2(&d, &model, 5, 0.0, 0, 9, &DisaggOptions::default()),
            Err(EvalError::InvalidCount)
        ));
    }

    #[test]
    fn outline_of_square_recovers_corners() {
        let pts = polytope_outline_2d(&cube(2, -1.0, 1.0), 64).unwrap();
        assert!(pts.len() >= 4);
        for (x, y) in &pts {
            assert!(x.abs() <= 1.0 + 1e-9 && y.abs() <= 1.0 + 1e-9);
        }
        // all four corners appear
        for corner in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            assert!(
                pts.iter()
                    .any(|q| (q.0 - corner.0).abs() < 1e-6 && (q.1 - corner.1).abs() < 1e-6),
                "missing corner {corner:?}"
            );
        }
    }

    #[test]
    fn ellipse_outline_lies_on_zero_level() {
        let e = Ellipsoid {
            w2: dmatrix![2.0, 0.3; 0.3, 1.0],
            w1: dvector![0.4, -0.2],
            w0: -1.0,
            standardization: crate::classifier::Standardization {
                shift: vec![0.0, 0.0],
                scale: vec![1.0, 1.0],
            },
        };
        let pts = ellipsoid_outline_2d(&e, 32).unwrap();
        assert_eq!(pts.len(), 32);
        for (x, y) in pts {
            let m = e.margin(&dvector![x, y]);
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-9);
        }
    }
}
