//! End-to-end acceptance gate: one test per criterion, each printing a
//! single `ACCEPTANCE n: PASS` line (run with `--nocapture` to see them).
//!
//! Criteria 1, 2, and the replica-scaling part of 8 share one synthetic
//! pipeline execution; criteria 9 and 10 share the fleet-study executions.
//! The remaining criteria call the library directly against independent
//! oracles.

use nalgebra::{DMatrix, DVector};
use ofd::devices::{self, ProfileSet};
use ofd::disagg::{self, AggregateModel, DisaggOptions, ScenarioPool};
use ofd::eval;
use ofd::flex_design::{self, BETA_FLOOR};
use ofd::market_model::{self, HorizonConfig, HPolytope};
use ofd::opt_core::{
    enumerate_milp_objective, solve_lp, solve_milp, LinearProgram, MilpOptions, Sense,
    SolveStatus,
};
use ofd::poly_geom::{self, FmOptions, LiftedPolytope, SupportOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_ofd");

// ------------------------------------------------------------- pipeline --

struct RunOut {
    dir: PathBuf,
    report: serde_json::Value,
    elapsed: Duration,
}

fn run_pipeline(dir: &Path, config: &serde_json::Value) -> RunOut {
    std::fs::create_dir_all(dir).unwrap();
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let t0 = Instant::now();
    let status = Command::new(BIN)
        .args(["--config", cfg_path.to_str().unwrap()])
        .args(["--out-dir", dir.to_str().unwrap()])
        .arg("run")
        .status()
        .expect("pipeline binary runs");
    let elapsed = t0.elapsed();
    assert!(status.success(), "pipeline failed in {}", dir.display());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap())
            .unwrap();
    RunOut {
        dir: dir.to_path_buf(),
        report,
        elapsed,
    }
}

fn load_x(dir: &Path, file: &str, key: &str) -> DVector<f64> {
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap();
    DVector::from_vec(serde_json::from_value::<Vec<f64>>(v[key].clone()).unwrap())
}

fn vol(report: &serde_json::Value, which: &str) -> (f64, f64) {
    let v = &report["volumes"][which];
    (
        v["estimate"].as_f64().unwrap(),
        v["std_error"].as_f64().unwrap(),
    )
}

// --------------------------------------------------- shared study outputs --

struct SyntheticStudy {
    full: RunOut,
    reduced: RunOut,
}

fn synthetic_config(g_format: &str) -> serde_json::Value {
    serde_json::json!({
        "horizon": {"t": 2},
        "model": {"kind": "synthetic_t2", "box_inflation": 6.0},
        "dataset": {"n_target": 500, "k": 25, "epsilon": 0.0, "kappa": 0.2,
                     "balance_target": 0.5},
        "classifier": {"lambda": 1e-5, "epochs": 4000},
        "approx": {"delta": 0.1},
        "design": {"g_format": g_format},
        "eval": {"mc_samples": 1000000, "m2_count": 20},
        "seed": 20260823u64,
        "workers": 8,
    })
}

fn synthetic_study() -> &'static SyntheticStudy {
    static STUDY: OnceLock<SyntheticStudy> = OnceLock::new();
    STUDY.get_or_init(|| {
        let base = std::env::temp_dir().join("ofd_acceptance_synthetic");
        SyntheticStudy {
            full: run_pipeline(&base.join("full"), &synthetic_config("full")),
            reduced: run_pipeline(&base.join("reduced"), &synthetic_config("reduced")),
        }
    })
}

struct FleetStudy {
    eps0: RunOut,
    eps8: RunOut,
    mean: RunOut,
}

fn fleet_config(epsilon: f64, mean_externality: bool) -> serde_json::Value {
    serde_json::json!({
        "horizon": {"t": 4},
        "model": {"kind": "fleet",
                   "fleet": {"pv": 5, "battery": 5, "ev": 5, "tcl": 5},
                   "pool_size": 500,
                   "mean_externality": mean_externality},
        "dataset": {"n_target": 600, "k": 25, "epsilon": epsilon, "kappa": 0.2,
                     "balance_target": 0.5, "node_limit": 4000},
        "classifier": {"lambda": 1e-6, "epochs": 4000},
        "approx": {"delta": 0.1},
        "eval": {"mc_samples": 1000000, "m2_count": 50},
        "seed": 904u64,
        "workers": 8,
    })
}

fn fleet_study() -> &'static FleetStudy {
    static STUDY: OnceLock<FleetStudy> = OnceLock::new();
    STUDY.get_or_init(|| {
        let base = std::env::temp_dir().join("ofd_acceptance_fleet");
        FleetStudy {
            eps0: run_pipeline(&base.join("eps0"), &fleet_config(0.0, false)),
            eps8: run_pipeline(&base.join("eps8"), &fleet_config(0.08, false)),
            mean: run_pipeline(&base.join("mean"), &fleet_config(0.0, true)),
        }
    })
}

// -------------------------------------------------------------- criteria --

#[test]
fn criterion_01_synthetic_reproduction() {
    let s = synthetic_study();
    let r = &s.full.report;
    assert!(
        s.full.elapsed <= Duration::from_secs(600),
        "synthetic run took {:?} (> 10 min)",
        s.full.elapsed
    );
    let train_acc = r["train_accuracy"].as_f64().unwrap();
    assert!(train_acc >= 0.97, "train accuracy {train_acc} < 0.97");

    // designed polytope sits inside the target within 1e-6
    let h = HorizonConfig::new(2);
    let x_star = load_x(&s.full.dir, "design.json", "x_star");
    let p_star = market_model::aggregator_polytope(&x_star, &h);
    let p_d: HPolytope = serde_json::from_str(
        &std::fs::read_to_string(s.full.dir.join("pd.json")).unwrap(),
    )
    .unwrap();
    let (contained, slack) = poly_geom::certify_containment(&p_star, &p_d).unwrap();
    assert!(
        contained && slack >= -1e-6,
        "containment violated, worst slack {slack}"
    );

    let ratio = r["ratio_to_truth"].as_f64().unwrap();
    assert!(ratio >= 0.6, "volume ratio to ground truth {ratio} < 0.6");
    println!(
        "ACCEPTANCE 1: PASS — train acc {:.4}, containment slack {:.2e}, \
         volume ratio {:.4}, {:?}",
        train_acc, slack, ratio, s.full.elapsed
    );
}

#[test]
fn criterion_02_reduced_matrix_degrades_volume() {
    let s = synthetic_study();
    let (v_full, sd_full) = vol(&s.full.report, "p_star");
    let (v_red, sd_red) = vol(&s.reduced.report, "p_star");
    assert!(
        v_red + 3.0 * sd_red < v_full - 3.0 * sd_full,
        "reduced-format volume {v_red}±{sd_red} not significantly below \
         full-format {v_full}±{sd_full}"
    );
    println!(
        "ACCEPTANCE 2: PASS — V(reduced) {:.4}±{:.4} < V(full) {:.4}±{:.4} \
         with non-overlapping 3-sigma intervals",
        v_red, sd_red, v_full, sd_full
    );
}

#[test]
fn criterion_03_ball_approximation_sandwich() {
    let t0 = Instant::now();
    let r = 1.0;
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = f64::NEG_INFINITY;
    for &t in &[2usize, 4, 8] {
        for &delta in &[0.05f64, 0.1] {
            let l = poly_geom::ball_approximation(t, r, delta).unwrap();
            let lo = r / (1.0 + delta) - 1e-7;
            let hi = r + 1e-7;
            let extremes: Vec<(f64, f64)> = (0..100u64)
                .into_par_iter()
                .map(|shard| {
                    let mut rng = ChaCha8Rng::seed_from_u64(3_000 + 17 * shard);
                    let mut s_min = f64::INFINITY;
                    let mut s_max = f64::NEG_INFINITY;
                    for _ in 0..100 {
                        let u = random_unit(&mut rng, t);
                        let s = poly_geom::lifted_support(&l, &u).unwrap();
                        assert!(
                            s >= lo && s <= hi,
                            "support {s} outside [{lo}, {hi}] at t={t}, delta={delta}"
                        );
                        s_min = s_min.min(s);
                        s_max = s_max.max(s);
                    }
                    (s_min, s_max)
                })
                .collect();
            for (s_min, s_max) in extremes {
                worst_lo = worst_lo.min(s_min);
                worst_hi = worst_hi.max(s_max);
            }
        }
    }
    let elapsed = t0.elapsed();
    assert!(
        elapsed <= Duration::from_secs(120),
        "sandwich check took {elapsed:?} (> 2 min)"
    );
    println!(
        "ACCEPTANCE 3: PASS — 10^4 directions per (T, delta) combination, \
         supports within [{:.6}, {:.6}], {:?}",
        worst_lo, worst_hi, elapsed
    );
}

/// Existence of q with `E2 q <= d - E1 y`, decided by LP.
fn lifted_member(l: &LiftedPolytope, y: &DVector<f64>) -> bool {
    let slack = &l.d - &l.e1 * y;
    if l.num_aux() == 0 {
        return slack.iter().all(|&v| v >= -1e-7);
    }
    match poly_geom::support_over_rows(&l.e2, &slack, &DVector::zeros(l.num_aux())).unwrap() {
        SupportOutcome::Value(_, _) => true,
        SupportOutcome::PrimalEmpty => false,
        SupportOutcome::NoCertificate => unreachable!(),
    }
}

#[test]
fn criterion_04_projection_exactness() {
    let disagreements: usize = (0..200u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(4_000 + trial);
            let t = rng.gen_range(1..=3);
            let q = rng.gen_range(1..=3);
            let m = rng.gen_range(2..9);
            let l = LiftedPolytope {
                e1: DMatrix::from_fn(m, t, |_, _| rng.gen_range(-1.0..1.0)),
                e2: DMatrix::from_fn(m, q, |_, _| rng.gen_range(-1.0..1.0)),
                d: DVector::from_fn(m, |_, _| rng.gen_range(-0.2..1.0)),
            };
            let p = poly_geom::fourier_motzkin(&l, &FmOptions::default()).unwrap();
            let mut bad = 0usize;
            for _ in 0..1000 {
                let y = DVector::from_fn(t, |_, _| rng.gen_range(-2.0..2.0));
                let direct = market_model::membership(&p, &y, 1e-7).unwrap();
                if direct != lifted_member(&l, &y) {
                    bad += 1;
                }
            }
            bad
        })
        .sum();
    assert_eq!(disagreements, 0, "{disagreements} membership disagreements");
    println!(
        "ACCEPTANCE 4: PASS — 200 random lifted systems x 1000 probes, \
         projection membership matched the existential LP oracle everywhere"
    );
}

/// Monolithic containment LP: variables F (m_e x m_g), z, beta, minimizing
/// beta subject to F G = E and F x_bar - E z - beta d <= 0.
fn monolithic_beta(x_bar: &DVector<f64>, g: &DMatrix<f64>, p_d: &HPolytope) -> f64 {
    let (me, mg, t) = (p_d.num_rows(), g.nrows(), g.ncols());
    let nf = me * mg;
    let n = nf + t + 1;
    let m = me * t + me;
    let mut rows = DMatrix::zeros(m, n);
    let mut rhs = DVector::zeros(m);
    let mut senses = vec![Sense::Eq; me * t];
    senses.extend(vec![Sense::Le; me]);
    for i in 0..me {
        for c in 0..t {
            let r = i * t + c;
            for k in 0..mg {
                rows[(r, i * mg + k)] = g[(k, c)];
            }
            rhs[r] = p_d.a[(i, c)];
        }
        let r = me * t + i;
        for k in 0..mg {
            rows[(r, i * mg + k)] = x_bar[k];
        }
        for c in 0..t {
            rows[(r, nf + c)] = -p_d.a[(i, c)];
        }
        rows[(r, nf + t)] = -p_d.b[i];
    }
    let mut objective = DVector::zeros(n);
    objective[nf + t] = 1.0;
    let mut bounds = vec![(0.0, f64::INFINITY); nf];
    bounds.extend(vec![(f64::NEG_INFINITY, f64::INFINITY); t]);
    bounds.push((BETA_FLOOR, f64::INFINITY));
    let lp = LinearProgram {
        objective,
        rows,
        senses,
        rhs,
        bounds,
    };
    let res = solve_lp(&lp).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    res.objective
}

/// A box plus random cutting rows, guaranteed nonempty around a center.
fn random_bounded_polytope(rng: &mut impl Rng, t: usize, extra: usize) -> HPolytope {
    let center = DVector::from_fn(t, |_, _| rng.gen_range(-0.2..0.2f64));
    let m = 2 * t + extra;
    let mut a = DMatrix::zeros(m, t);
    let mut b = DVector::zeros(m);
    for i in 0..t {
        a[(i, i)] = 1.0;
        b[i] = center[i] + rng.gen_range(0.3..1.5);
        a[(t + i, i)] = -1.0;
        b[t + i] = -center[i] + rng.gen_range(0.3..1.5);
    }
    for r in 0..extra {
        let u = DVector::from_fn(t, |_, _| rng.gen_range(-1.0..1.0f64));
        for c in 0..t {
            a[(2 * t + r, c)] = u[c];
        }
        b[2 * t + r] = u.dot(&center) + rng.gen_range(0.2..1.0);
    }
    HPolytope::new(a, b, vec![String::new(); m])
}

#[test]
fn criterion_05_containment_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5_000);
    let h = HorizonConfig::new(2);
    let g = market_model::build_g(&h);
    let mut max_gap = 0.0f64;
    for _ in 0..50 {
        let x_bar = DVector::from_fn(g.nrows(), |_, _| rng.gen_range(0.1..1.0f64));
        let extra = rng.gen_range(0..8);
        let p_d = random_bounded_polytope(&mut rng, 2, extra);
        let res = flex_design::farkas_design(&x_bar, &g, &p_d).unwrap();
        let mono = monolithic_beta(&x_bar, &g, &p_d);
        let gap = (res.beta - mono).abs();
        assert!(gap <= 1e-6, "beta {} vs monolithic {}", res.beta, mono);
        max_gap = max_gap.max(gap);
    }

    // hand-verifiable single-hour interval: prototype [-1, 1], target
    // {|p| <= 0.5} -> beta = 2, x* = (0.5, 0.5)
    let g1 = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
    let x_bar = DVector::from_element(2, 1.0);
    let p_d = HPolytope::new(
        DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
        DVector::from_element(2, 0.5),
        vec!["hi".into(), "lo".into()],
    );
    let res = flex_design::farkas_design(&x_bar, &g1, &p_d).unwrap();
    assert!((res.beta - 2.0).abs() <= 1e-9, "toy beta = {}", res.beta);
    assert!(
        (res.x_star[0] - 0.5).abs() <= 1e-9 && (res.x_star[1] - 0.5).abs() <= 1e-9,
        "toy x* = {:?}",
        res.x_star
    );
    println!(
        "ACCEPTANCE 5: PASS — 50 random instances matched the monolithic LP \
         (max |beta gap| {:.2e}); toy instance gave beta = 2, x* = (0.5, 0.5)",
        max_gap
    );
}

/// Generic oracle: projected gradient on min |x|^2 over
/// {x : x >= G p_n for all feasible n, x >= 0}.
fn prototype_pg_oracle(feasible: &[Vec<f64>], g: &DMatrix<f64>) -> DVector<f64> {
    let mut lower = DVector::from_element(g.nrows(), 0.0f64);
    for p in feasible {
        let gp = g * DVector::from_column_slice(p);
        lower.zip_apply(&gp, |l, v| *l = l.max(v));
    }
    let mut x = DVector::from_element(g.nrows(), 10.0f64);
    for _ in 0..2000 {
        let step = 0.05;
        x = (&x - &x * (2.0 * step)).zip_map(&lower, f64::max);
    }
    x
}

#[test]
fn criterion_06_prototype_closed_form() {
    use ofd::dataset_gen::{LabeledDataset, LabeledPoint, Origin};
    let mut rng = ChaCha8Rng::seed_from_u64(6_000);
    let h = HorizonConfig::new(2);
    let g = market_model::build_g(&h);
    let mut max_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..6);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let data = LabeledDataset {
            points: pts
                .iter()
                .map(|p| LabeledPoint::new(p.clone(), -1, 1.0, Origin::Uniform))
                .collect(),
            epsilon: 0.0,
            seed: 0,
        };
        let x = flex_design::compute_prototype(&data, &g).unwrap();
        let oracle = prototype_pg_oracle(&pts, &g);
        let err = (&x - &oracle).amax();
        assert!(err <= 1e-8, "prototype differs from oracle by {err}");
        max_err = max_err.max(err);
    }
    println!(
        "ACCEPTANCE 6: PASS — 100 random datasets, closed-form prototype \
         within {:.2e} of the projected-gradient oracle",
        max_err
    );
}

#[test]
fn criterion_07_milp_against_enumeration() {
    let h = HorizonConfig::new(2);
    let profiles = ProfileSet::synthetic(&h);
    let checked: usize = (0..100u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + trial);
            // one non-PV device (8 binaries at T=2), optionally plus a PV
            // (no binaries), so every instance has <= 12 binaries
            let mut fleet = Vec::new();
            if rng.gen_bool(0.5) {
                fleet.push(devices::sample_fleet(1, 0, 0, 0, &mut rng).remove(0));
            }
            let kind = rng.gen_range(0..3);
            let (b, e, t) = match kind {
                0 => (1, 0, 0),
                1 => (0, 1, 0),
                _ => (0, 0, 1),
            };
            fleet.push(devices::sample_fleet(0, b, e, t, &mut rng).remove(0));
            let scen =
                devices::sample_scenario_with_profiles(&fleet, &h, 7_100 + trial, &profiles)
                    .unwrap();
            let p = DVector::from_fn(2, |_, _| rng.gen_range(-4.0..6.0));
            let prog = disagg::disaggregation_program(&p, &scen, &fleet, &h).unwrap();
            assert!(
                prog.binary_indices.len() <= 12,
                "instance has {} binaries",
                prog.binary_indices.len()
            );
            let res =
                solve_milp(&prog, &MilpOptions::with_node_limit(200_000)).unwrap();
            assert_eq!(res.status, SolveStatus::Optimal);
            let best = enumerate_milp_objective(&prog)
                .unwrap()
                .expect("instance is feasible");
            assert!(
                (res.objective - best).abs() <= 1e-6,
                "branch-and-bound {} vs enumeration {}",
                res.objective,
                best
            );
            1
        })
        .sum();
    println!(
        "ACCEPTANCE 7: PASS — {checked} random disaggregation instances \
         (<= 12 binaries each) matched exhaustive enumeration within 1e-6"
    );
}

fn simplex_polytope(t: usize) -> HPolytope {
    let mut a = DMatrix::zeros(t + 1, t);
    let mut b = DVector::zeros(t + 1);
    for i in 0..t {
        a[(i, i)] = -1.0;
    }
    for c in 0..t {
        a[(t, c)] = 1.0;
    }
    b[t] = 1.0;
    HPolytope::new(a, b, vec![String::new(); t + 1])
}

#[test]
fn criterion_08_volume_estimator_calibration() {
    // unit cube: the bounding box is the body, so the estimate is exact
    let cube = HPolytope::new(
        DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
        DVector::from_column_slice(&[1.0, 1.0, 0.0, 0.0]),
        vec![String::new(); 4],
    );
    let (v_cube, sd_cube) = eval::mc_volume(&cube, 1_000_000, 8_001).unwrap();
    assert!(
        (v_cube - 1.0).abs() <= 1e-12 && sd_cube <= 1e-12,
        "cube volume {v_cube} ± {sd_cube}"
    );

    // simplex: within 3 sigma of 1/t!
    let mut simplex_note = String::new();
    for t in 2..=4usize {
        let truth = 1.0 / (1..=t).product::<usize>() as f64;
        let (v, sd) = eval::mc_volume(&simplex_polytope(t), 1_000_000, 8_100 + t as u64)
            .unwrap();
        assert!(
            (v - truth).abs() <= 3.0 * sd,
            "T={t} simplex volume {v} ± {sd} vs {truth}"
        );
        simplex_note.push_str(&format!(" T={t}: {:.5}±{:.5} vs {:.5};", v, sd, truth));
    }

    // replica scaling on the synthetic study: V(x*) = V(x_bar) / beta^T
    let s = synthetic_study();
    let r = &s.full.report;
    let beta = r["beta"].as_f64().unwrap();
    let t = 2usize;
    let scale = beta.powi(t as i32);
    let (v_star, sd_star) = vol(r, "p_star");
    let (v_proto, sd_proto) = vol(r, "prototype");
    let predicted = v_proto / scale;
    let sd_pred = sd_proto / scale;
    let tol = 3.0 * (sd_star * sd_star + sd_pred * sd_pred).sqrt();
    assert!(
        (v_star - predicted).abs() <= tol,
        "V(x*) {v_star} vs V(x_bar)/beta^T {predicted}, combined 3-sigma {tol}"
    );
    println!(
        "ACCEPTANCE 8: PASS — cube exact;{simplex_note} replica scaling \
         |{:.4} - {:.4}| <= {:.4}",
        v_star, predicted, tol
    );
}

#[test]
fn criterion_09_fleet_study() {
    let s = fleet_study();
    for (name, run) in [("eps=0", &s.eps0), ("eps=0.08", &s.eps8)] {
        assert!(
            run.elapsed <= Duration::from_secs(1800),
            "{name} run took {:?} (> 30 min)",
            run.elapsed
        );
        let m2 = run.report["m2"].as_f64().unwrap();
        assert!(m2 <= 0.02, "{name}: M2 = {m2} > 2%");
        let va = run.report["validation_accuracy"].as_f64().unwrap();
        assert!(va >= 0.85, "{name}: validation accuracy {va} < 85%");
    }
    let (v0, sd0) = vol(&s.eps0.report, "p_star");
    let (v8, sd8) = vol(&s.eps8.report, "p_star");
    let slack = 3.0 * (sd0 * sd0 + sd8 * sd8).sqrt();
    assert!(
        v8 >= v0 - slack,
        "volume at eps=0.08 ({v8}) below eps=0 ({v0}) by more than 3 sigma ({slack})"
    );
    println!(
        "ACCEPTANCE 9: PASS — runtimes {:?} / {:?}, M2 {:.3} / {:.3}, val acc \
         {:.3} / {:.3}, V 0.08 = {:.3} >= V 0 = {:.3} - {:.3}",
        s.eps0.elapsed,
        s.eps8.elapsed,
        s.eps0.report["m2"].as_f64().unwrap(),
        s.eps8.report["m2"].as_f64().unwrap(),
        s.eps0.report["validation_accuracy"].as_f64().unwrap(),
        s.eps8.report["validation_accuracy"].as_f64().unwrap(),
        v8,
        v0,
        slack
    );
}

#[test]
fn criterion_10_mean_externality_caution() {
    let s = fleet_study();
    let (v_mean, _) = vol(&s.mean.report, "p_star");
    let (v0, _) = vol(&s.eps0.report, "p_star");
    assert!(
        v_mean >= v0,
        "mean-externality volume {v_mean} below stochastic eps=0 volume {v0}"
    );

    // uniform samples from the mean-externality design must often fail the
    // stochastic chance test at eps = 0
    let h = HorizonConfig::new(4);
    let x_m = load_x(&s.mean.dir, "design.json", "x_star");
    let p_m = market_model::aggregator_polytope(&x_m, &h);
    let (lo, hi) = eval::bounding_box(&p_m).unwrap();

    // rebuild the stochastic scenario pool exactly as the eps=0 study did
    let mut rng = ChaCha8Rng::seed_from_u64(904);
    let fleet = devices::sample_fleet(5, 5, 5, 5, &mut rng);
    let profiles = ProfileSet::synthetic(&h);
    let pool = ScenarioPool::build(&fleet, &h, 500, 905, &profiles).unwrap();
    let model = AggregateModel::Fleet(pool);
    let opts = DisaggOptions { node_limit: 4000 };

    let mut sampler = ChaCha8Rng::seed_from_u64(10_000);
    let mut samples = Vec::with_capacity(100);
    while samples.len() < 100 {
        let p = DVector::from_fn(4, |k, _| sampler.gen_range(lo[k]..=hi[k]));
        if market_model::membership(&p_m, &p, 1e-9).unwrap() {
            samples.push(p);
        }
    }
    let infeasible: usize = samples
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let out = disagg::label(p, &model, 25, 0.0, 10_500 + i as u64, &opts).unwrap();
            usize::from(out.y == 1)
        })
        .sum();
    let frac = infeasible as f64 / samples.len() as f64;
    assert!(
        frac >= 0.05,
        "only {frac:.2} of samples from the mean-externality design fail the \
         stochastic chance test"
    );
    println!(
        "ACCEPTANCE 10: PASS — V(mean) {:.3} >= V(eps=0) {:.3}; {:.0}% of \
         uniform samples from the mean-externality design fail chance-labeling \
         at eps = 0",
        v_mean,
        v0,
        100.0 * frac
    );
}

fn random_unit(rng: &mut ChaCha8Rng, t: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(t, |_, _| rng.gen_range(-1.0f64..1.0));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}
