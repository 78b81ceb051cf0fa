//! Labeled-dataset generation: bounding box of candidate schedules, the
//! triplet sampling procedure (uniform point, its projection, and an
//! interpolate near the boundary), and interior feasible points from convex
//! combinations.

use crate::disagg::{self, AggregateModel, DisaggError, DisaggOptions, ScenarioPool};
use crate::market_model::{HPolytope, HorizonConfig};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("labeling budget of {0} exhausted before reaching the target size")]
    BudgetExhausted(usize),
    #[error(transparent)]
    Label(#[from] DisaggError),
    #[error("dataset I/O failed: {0}")]
    Io(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Uniform,
    Projection,
    Interpolated,
    ConvexCombo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub p: Vec<f64>,
    pub y: i8,
    pub c: f64,
    pub origin: Origin,
    /// Seed of the scenario draw used to label this point (audit only).
    #[serde(skip)]
    pub draw_seed: u64,
    /// For Interpolated points: the two endpoints combined at kappa.
    #[serde(skip)]
    pub parents: Option<(Vec<f64>, Vec<f64>)>,
    /// For ConvexCombo points: the simplex weights over the feasible parents.
    #[serde(skip)]
    pub combo_weights: Option<Vec<f64>>,
}

impl LabeledPoint {
    pub fn new(p: Vec<f64>, y: i8, c: f64, origin: Origin) -> Self {
        LabeledPoint {
            p,
            y,
            c,
            origin,
            draw_seed: 0,
            parents: None,
            combo_weights: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub points: Vec<LabeledPoint>,
    pub epsilon: f64,
    pub seed: u64,
}

impl LabeledDataset {
    pub fn feasible_fraction(&self) -> f64 {
        let f = self.points.iter().filter(|p| p.y == -1).count();
        f as f64 / self.points.len() as f64
    }

    /// JSON Lines, one point per line, floats at 17 significant digits.
    pub fn save(&self, path: &std::path::Path) -> Result<(), GenError> {
        use std::io::Write;
        let f = std::fs::File::create(path).map_err(|e| GenError::Io(e.to_string()))?;
        let mut w = std::io::BufWriter::new(f);
        for pt in &self.points {
            let coords: Vec<String> = pt.p.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(
                w,
                "{{\"p\":[{}],\"y\":{},\"c\":{:.16e},\"origin\":{}}}",
                coords.join(","),
                pt.y,
                pt.c,
                serde_json::to_string(&pt.origin).unwrap()
            )
            .map_err(|e| GenError::Io(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path, epsilon: f64) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path).map_err(|e| GenError::Io(e.to_string()))?;
        let mut points = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let pt: LabeledPoint =
                serde_json::from_str(line).map_err(|e| GenError::Io(e.to_string()))?;
            points.push(pt);
        }
        Ok(LabeledDataset {
            points,
            epsilon,
            seed: 0,
        })
    }
}

/// Axis-aligned box `[lo, hi]` guaranteed to contain every schedule any pool
/// scenario can disaggregate: per hour, the sum over devices of each
/// device's extreme achievable power across the pool.
pub fn box_bounds(pool: &ScenarioPool) -> (Vec<f64>, Vec<f64>) {
    let t = pool.h.t;
    let nd = pool.fleet.len();
    let mut lo = vec![0.0; t];
    let mut hi = vec![0.0; t];
    for d in 0..nd {
        for k in 0..t {
            let dev_lo = pool
                .device_bounds
                .iter()
                .map(|b| b[d].0[k])
                .fold(f64::INFINITY, f64::min);
            let dev_hi = pool
                .device_bounds
                .iter()
                .map(|b| b[d].1[k])
                .fold(f64::NEG_INFINITY, f64::max);
            lo[k] += dev_lo;
            hi[k] += dev_hi;
        }
    }
    (lo, hi)
}

/// The box as an H-polytope `[I; -I] p <= [hi; -lo]`.
pub fn estimate_h(pool: &ScenarioPool) -> HPolytope {
    let (lo, hi) = box_bounds(pool);
    box_polytope(&lo, &hi)
}

pub fn box_polytope(lo: &[f64], hi: &[f64]) -> HPolytope {
    let t = lo.len();
    let mut a = DMatrix::zeros(2 * t, t);
    let mut b = DVector::zeros(2 * t);
    let mut tags = Vec::with_capacity(2 * t);
    for k in 0..t {
        a[(k, k)] = 1.0;
        b[k] = hi[k];
        tags.push(format!("box_hi[{k}]"));
    }
    for k in 0..t {
        a[(t + k, k)] = -1.0;
        b[t + k] = -lo[k];
        tags.push(format!("box_lo[{k}]"));
    }
    HPolytope::new(a, b, tags)
}

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub n_target: usize,
    pub kappa: f64,
    pub epsilon: f64,
    /// Scenarios drawn per labeling.
    pub k: usize,
    /// Cap on projection-replacement and interpolation repeats.
    pub max_proj_iters: usize,
    /// Cap on total labeling calls.
    pub label_budget: usize,
    /// Interior points are added until this feasible fraction is reached.
    pub balance_target: f64,
    pub seed: u64,
    pub disagg: DisaggOptions,
}

impl GenOptions {
    pub fn new(n_target: usize, epsilon: f64, seed: u64) -> Self {
        GenOptions {
            n_target,
            kappa: 0.2,
            epsilon,
            k: 25,
            max_proj_iters: 5,
            label_budget: 40 * n_target.max(1),
            balance_target: 0.4,
            seed,
            disagg: DisaggOptions::default(),
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        if !(0.0 < self.kappa && self.kappa < 1.0) {
            return Err(GenError::InvalidOptions("kappa must be in (0, 1)".into()));
        }
        if self.n_target < 10 {
            return Err(GenError::InvalidOptions("n_target must be >= 10".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(GenError::InvalidOptions("epsilon must be in [0, 1)".into()));
        }
        Ok(())
    }
}

pub fn interpolate(kappa: f64, p1: &[f64], p2: &[f64]) -> Vec<f64> {
    p1.iter()
        .zip(p2)
        .map(|(a, b)| kappa * a + (1.0 - kappa) * b)
        .collect()
}

/// Generates a roughly balanced labeled dataset inside the box `[lo, hi]`:
/// repeat (uniform sample -> projection -> boundary interpolates) until the
/// target size, then add interior convex combinations of feasible points
/// until the balance target.
pub fn generate(
    model: &AggregateModel,
    (lo, hi): (&[f64], &[f64]),
    h: &HorizonConfig,
    opts: &GenOptions,
) -> Result<LabeledDataset, GenError> {
    opts.validate()?;
    let t = h.t;
    assert_eq!(lo.len(), t);
    assert_eq!(hi.len(), t);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut points: Vec<LabeledPoint> = Vec::new();
    let mut labels_used = 0usize;

    let run_label = |p: &DVector<f64>,
                         rng: &mut ChaCha8Rng,
                         labels_used: &mut usize|
     -> Result<(disagg::LabelOutcome, u64), GenError> {
        if *labels_used >= opts.label_budget {
            return Err(GenError::BudgetExhausted(opts.label_budget));
        }
        *labels_used += 1;
        let draw_seed = rng.gen::<u64>();
        let out = disagg::label(p, model, opts.k, opts.epsilon, draw_seed, &opts.disagg)?;
        Ok((out, draw_seed))
    };

    while points.len() < opts.n_target {
        // D1: uniform point in the box
        let p1 = DVector::from_fn(t, |k, _| rng.gen_range(lo[k]..=hi[k]));
        let (l1, s1) = run_label(&p1, &mut rng, &mut labels_used)?;
        points.push(LabeledPoint {
            p: p1.as_slice().to_vec(),
            y: l1.y,
            c: l1.c,
            origin: Origin::Uniform,
            draw_seed: s1,
            parents: None,
            combo_weights: None,
        });
        if l1.y == -1 {
            continue;
        }

        // D2: take the furthest projection; if it labels infeasible, chase
        // its own projection a bounded number of times, else drop the triplet
        let Some(mut p2) = l1.best_projection else {
            continue;
        };
        let mut p2_label = None;
        for _ in 0..opts.max_proj_iters {
            let (l2, s2) = run_label(&p2, &mut rng, &mut labels_used)?;
            if l2.y == -1 {
                p2_label = Some((l2, s2));
                break;
            }
            match l2.best_projection {
                Some(next) => p2 = next,
                None => break,
            }
        }
        let Some((l2, s2)) = p2_label else {
            continue;
        };
        points.push(LabeledPoint {
            p: p2.as_slice().to_vec(),
            y: l2.y,
            c: l2.c,
            origin: Origin::Projection,
            draw_seed: s2,
            parents: None,
            combo_weights: None,
        });

        // D3: points on the segment toward the feasible endpoint; while they
        // come out feasible, pull further toward p1
        let mut inner = p2.as_slice().to_vec();
        for _ in 0..opts.max_proj_iters {
            let p3 = interpolate(opts.kappa, p1.as_slice(), &inner);
            let p3v = DVector::from_vec(p3.clone());
            let (l3, s3) = run_label(&p3v, &mut rng, &mut labels_used)?;
            let y3 = l3.y;
            points.push(LabeledPoint {
                p: p3.clone(),
                y: y3,
                c: l3.c,
                origin: Origin::Interpolated,
                draw_seed: s3,
                parents: Some((p1.as_slice().to_vec(), inner.clone())),
                combo_weights: None,
            });
            if y3 == 1 {
                break;
            }
            inner = p3;
        }
    }

    // interior fill: convex combos of 2-4 feasible parents
    loop {
        let feasible: Vec<usize> = (0..points.len()).filter(|&i| points[i].y == -1).collect();
        if feasible.len() as f64 >= opts.balance_target * points.len() as f64 {
            break;
        }
        if feasible.len() < 2 {
            return Err(GenError::InvalidOptions(
                "too few feasible points for interior sampling".into(),
            ));
        }
        let m = rng.gen_range(2..=4usize.min(feasible.len()));
        let mut parents = feasible.clone();
        parents.shuffle(&mut rng);
        parents.truncate(m);
        // Dirichlet(1,..,1): normalized iid Exp(1) draws
        let raw: Vec<f64> = (0..m).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mut p = DVector::zeros(t);
        for (&idx, &w) in parents.iter().zip(&weights) {
            p += w * DVector::from_column_slice(&points[idx].p);
        }
        let (l, s) = run_label(&p, &mut rng, &mut labels_used)?;
        points.push(LabeledPoint {
            p: p.as_slice().to_vec(),
            y: l.y,
            c: l.c,
            origin: Origin::ConvexCombo,
            draw_seed: s,
            parents: None,
            combo_weights: Some(weights),
        });
    }

    Ok(LabeledDataset {
        points,
        epsilon: opts.epsilon,
        seed: opts.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{DeviceScenario, DeviceSpec, ProfileSet};
    use crate::market_model::{aggregator_polytope, build_x, membership, synthetic_t2_vars};
    use approx::assert_abs_diff_eq;

    fn synthetic_model() -> (AggregateModel, HPolytope, HorizonConfig) {
        let h = HorizonConfig::new(2);
        let x = build_x(&synthetic_t2_vars(), &h).unwrap();
        let poly = aggregator_polytope(&x, &h);
        (AggregateModel::Polytope(poly.clone()), poly, h)
    }

    #[test]
    fn h_single_pv_is_capacity_box() {
        let h = HorizonConfig::new(2);
        let fleet = vec![DeviceSpec::Pv { p_cap: 4.0 }];
        let mut pool =
            ScenarioPool::build(&fleet, &h, 2, 0, &ProfileSet::synthetic(&h)).unwrap();
        for (scen, db) in pool.scenarios.iter_mut().zip(&mut pool.device_bounds) {
            scen.devices[0] = DeviceScenario::Pv {
                irradiance: vec![1.0; h.quarters()],
            };
            db[0] = (vec![-4.0; 2], vec![0.0; 2]);
        }
        let (lo, hi) = box_bounds(&pool);
        assert_eq!(lo, vec![-4.0, -4.0]);
        assert_eq!(hi, vec![0.0, 0.0]);
        let hbox = estimate_h(&pool);
        assert_eq!(hbox.num_rows(), 4);
        assert!(membership(&hbox, &nalgebra::dvector![-2.0, 0.0], 1e-9).unwrap());
        assert!(!membership(&hbox, &nalgebra::dvector![0.5, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn h_pv_plus_unconstrained_battery_sums_intervals() {
        let h = HorizonConfig::new(1);
        let fleet = vec![
            DeviceSpec::Pv { p_cap: 4.0 },
            DeviceSpec::Battery {
                p_cap: 2.0,
                s_cap: 1000.0,
            },
        ];
        let mut pool =
            ScenarioPool::build(&fleet, &h, 1, 0, &ProfileSet::synthetic(&h)).unwrap();
        pool.scenarios[0].devices[0] = DeviceScenario::Pv {
            irradiance: vec![1.0; 4],
        };
        pool.scenarios[0].devices[1] = DeviceScenario::Battery { s0: 500.0 };
        pool.device_bounds[0][0] =
            crate::devices::hourly_bounds(&fleet[0], &pool.scenarios[0].devices[0], &h).unwrap();
        pool.device_bounds[0][1] =
            crate::devices::hourly_bounds(&fleet[1], &pool.scenarios[0].devices[1], &h).unwrap();
        let (lo, hi) = box_bounds(&pool);
        assert_abs_diff_eq!(lo[0], -6.0, epsilon = 1e-7);
        assert_abs_diff_eq!(hi[0], 2.0, epsilon = 1e-7);
    }

    #[test]
    fn kappa_interpolation_formula() {
        assert_eq!(interpolate(0.2, &[1.0, 1.0], &[0.0, 0.0]), vec![0.2, 0.2]);
    }

    #[test]
    fn generated_dataset_properties() {
        let (model, poly, h) = synthetic_model();
        let lo = vec![-1.5, -1.5];
        let hi = vec![1.5, 1.5];
        let opts = GenOptions::new(80, 0.0, 5);
        let ds = generate(&model, (&lo, &hi), &h, &opts).unwrap();
        assert!(ds.points.len() >= 80);

        // balance in the audited band
        let frac = ds.feasible_fraction();
        assert!(
            (0.35..=0.65).contains(&frac),
            "feasible fraction {frac} out of band"
        );

        let hbox = box_polytope(&lo, &hi);
        for pt in &ds.points {
            let v = DVector::from_column_slice(&pt.p);
            // every point stays inside the sampling box
            assert!(membership(&hbox, &v, 1e-7).unwrap(), "{:?} outside box", pt.p);
            // label/statistic consistency at epsilon
            assert_eq!(pt.y, disagg::threshold_label(pt.c, ds.epsilon));
            // feasible labels agree with the known polytope
            assert_eq!(
                pt.y == -1,
                membership(&poly, &v, 1e-6).unwrap(),
                "label disagrees with ground truth at {:?}",
                pt.p
            );
            // interpolated points sit exactly at kappa on their segment
            if let Some((a, b)) = &pt.parents {
                let expect = interpolate(opts.kappa, a, b);
                assert_eq!(pt.p, expect);
            }
            if let Some(w) = &pt.combo_weights {
                assert!(w.iter().all(|&v| v >= 0.0));
                assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
        assert!(ds.points.iter().any(|p| p.origin == Origin::Projection));
        assert!(ds.points.iter().any(|p| p.origin == Origin::Interpolated));
    }

    #[test]
    fn relabeling_with_stored_seed_reproduces_labels() {
        let (model, _, h) = synthetic_model();
        let lo = vec![-1.5, -1.5];
        let hi = vec![1.5, 1.5];
        let opts = GenOptions::new(20, 0.0, 9);
        let ds = generate(&model, (&lo, &hi), &h, &opts).unwrap();
        for pt in ds.points.iter().take(10) {
            let v = DVector::from_column_slice(&pt.p);
            let out =
                disagg::label(&v, &model, opts.k, opts.epsilon, pt.draw_seed, &opts.disagg)
                    .unwrap();
            assert_eq!(out.y, pt.y);
            assert_eq!(out.c, pt.c);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (model, _, h) = synthetic_model();
        let lo = vec![-1.5, -1.5];
        let hi = vec![1.5, 1.5];
        let opts = GenOptions::new(20, 0.0, 31);
        let a = generate(&model, (&lo, &hi), &h, &opts).unwrap();
        let b = generate(&model, (&lo, &hi), &h, &opts).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!(x.p, y.p);
            assert_eq!(x.y, y.y);
        }
    }

    #[test]
    fn budget_exhaustion_reported() {
        let (model, _, h) = synthetic_model();
        let lo = vec![-1.5, -1.5];
        let hi = vec![1.5, 1.5];
        let mut opts = GenOptions::new(1000, 0.0, 1);
        opts.label_budget = 15;
        assert!(matches!(
            generate(&model, (&lo, &hi), &h, &opts),
            Err(GenError::BudgetExhausted(15))
        ));
    }

    #[test]
    fn jsonl_roundtrip_preserves_floats() {
        let (model, _, h) = synthetic_model();
        let lo = vec![-1.5, -1.5];
        let hi = vec![1.5, 1.5];
        let opts = GenOptions::new(15, 0.0, 2);
        let ds = generate(&model, (&lo, &hi), &h, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        ds.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("{\"p\":[") && first.contains("\"origin\":"));
        let back = LabeledDataset::load(&path, ds.epsilon).unwrap();
        assert_eq!(back.points.len(), ds.points.len());
        for (a, b) in ds.points.iter().zip(&back.points) {
            for (x, y) in a.p.iter().zip(&b.p) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a.y, b.y);
            assert_eq!(a.c.to_bits(), b.c.to_bits());
            assert_eq!(a.origin, b.origin);
        }
    }

    #[test]
    fn fleet_dataset_points_stay_in_h() {
        let h = HorizonConfig::new(1);
        let fleet = vec![
            DeviceSpec::Pv { p_cap: 3.0 },
            DeviceSpec::Battery {
                p_cap: 11.0,
                s_cap: 42.0,
            },
        ];
        let pool = ScenarioPool::build(&fleet, &h, 6, 3, &ProfileSet::synthetic(&h)).unwrap();
        let (lo, hi) = box_bounds(&pool);
        let model = AggregateModel::Fleet(pool);
        let mut opts = GenOptions::new(12, 0.0, 4);
        opts.k = 3;
        let ds = generate(&model, (&lo, &hi), &h, &opts).unwrap();
        let hbox = box_polytope(&lo, &hi);
        for pt in &ds.points {
            let v = DVector::from_column_slice(&pt.p);
            assert!(membership(&hbox, &v, 1e-6).unwrap());
        }
        assert!(ds.feasible_fraction() >= 0.35);
    }
}
