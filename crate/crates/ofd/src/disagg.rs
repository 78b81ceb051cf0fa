//! Disaggregation of a candidate hourly schedule across the fleet: the joint
//! l1-mismatch MILP, the sampled chance statistic, and labeling.

use crate::devices::{
    self, check_schedule, device_constraints, extract_schedule, DeviceError, DeviceSchedule,
    DeviceSpec, ProfileSet, Scenario,
};
use crate::market_model::{HorizonConfig, HPolytope};
use crate::opt_core::{
    solve_lp, solve_milp, LinearProgram, MilpOptions, MilpProgram, OptError, Sense, SolveStatus,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DisaggError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Solver(#[from] OptError),
    #[error("schedule has dimension {got}, horizon has {want} hours")]
    DimensionMismatch { got: usize, want: usize },
    #[error("scenario has {got} device entries, fleet has {want}")]
    ScenarioMismatch { got: usize, want: usize },
    #[error("device constraints are infeasible for this scenario")]
    InfeasibleScenario,
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

/// Numeric threshold below which a mismatch counts as zero.
pub fn g_tol(p: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + p.iter().map(|v| v.abs()).sum::<f64>())
}

#[derive(Debug, Clone)]
pub struct DisaggOptions {
    pub node_limit: usize,
}

impl Default for DisaggOptions {
    fn default() -> Self {
        DisaggOptions { node_limit: 50_000 }
    }
}

/// Pre-sampled externality scenarios plus cached per-device hourly power
/// bounds (from the LP relaxation), used both for the bounding box of the
/// sampling region and for cheap infeasibility prescreens.
#[derive(Debug, Clone)]
pub struct ScenarioPool {
    pub fleet: Vec<DeviceSpec>,
    pub h: HorizonConfig,
    pub scenarios: Vec<Scenario>,
    /// `device_bounds[i][d]` = per-hour (lo, hi) of device `d`'s aggregate
    /// power under scenario `i`.
    pub device_bounds: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl ScenarioPool {
    pub fn build(
        fleet: &[DeviceSpec],
        h: &HorizonConfig,
        size: usize,
        seed: u64,
        profiles: &ProfileSet,
    ) -> Result<Self, DisaggError> {
        if fleet.is_empty() {
            return Err(DeviceError::EmptyFleet.into());
        }
        let built: Result<Vec<_>, DisaggError> = (0..size as u64)
            .into_par_iter()
            .map(|i| {
                let scen = devices::sample_scenario_with_profiles(
                    fleet,
                    h,
                    seed.wrapping_add(i),
                    profiles,
                )?;
                let bounds: Result<Vec<_>, DeviceError> = fleet
                    .iter()
                    .zip(&scen.devices)
                    .map(|(spec, ds)| devices::hourly_bounds(spec, ds, h))
                    .collect();
                Ok((scen, bounds?))
            })
            .collect();
        let (scenarios, device_bounds) = built?.into_iter().unzip();
        Ok(ScenarioPool {
            fleet: fleet.to_vec(),
            h: *h,
            scenarios,
            device_bounds,
        })
    }

    /// Pool over explicitly supplied scenarios (e.g. a single deterministic
    /// mean-externality scenario).
    pub fn from_scenarios(
        fleet: &[DeviceSpec],
        h: &HorizonConfig,
        scenarios: Vec<Scenario>,
    ) -> Result<Self, DisaggError> {
        if fleet.is_empty() {
            return Err(DeviceError::EmptyFleet.into());
        }
        if scenarios.is_empty() {
            return Err(DisaggError::Internal("scenario pool cannot be empty".into()));
        }
        let device_bounds: Result<Vec<_>, DeviceError> = scenarios
            .par_iter()
            .map(|scen| {
                fleet
                    .iter()
                    .zip(&scen.devices)
                    .map(|(spec, ds)| devices::hourly_bounds(spec, ds, h))
                    .collect::<Result<Vec<_>, DeviceError>>()
            })
            .collect();
        Ok(ScenarioPool {
            fleet: fleet.to_vec(),
            h: *h,
            scenarios,
            device_bounds: device_bounds?,
        })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Fleet-level hourly bounds for scenario `i` (sum over devices).
    pub fn aggregate_bounds(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let t = self.h.t;
        let mut lo = vec![0.0; t];
        let mut hi = vec![0.0; t];
        for (dlo, dhi) in &self.device_bounds[i] {
            for k in 0..t {
                lo[k] += dlo[k];
                hi[k] += dhi[k];
            }
        }
        (lo, hi)
    }
}

/// Draws `k` distinct scenario indices from a pool of `pool_len` via a
/// seeded shuffle; deterministic given `seed`.
pub fn draw_indices(pool_len: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pool_len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(k.min(pool_len));
    idx
}

/// What disaggregation is checked against: either the actual device fleet
/// (scenario-dependent, non-convex) or a known polytope of aggregate
/// schedules (deterministic; used by the synthetic study).
#[derive(Debug, Clone)]
pub enum AggregateModel {
    Fleet(ScenarioPool),
    Polytope(HPolytope),
}

#[derive(Debug, Clone)]
pub struct DisaggResult {
    /// l1 mismatch between `p` and the best fleet aggregate.
    pub g_value: f64,
    pub device_schedules: Vec<DeviceSchedule>,
    /// Sum of per-device hourly aggregates (the projection when g > 0).
    pub p_hat: DVector<f64>,
    /// Whether `g_value` is a certified optimum (false on node-limit stops,
    /// where it is only an upper bound).
    pub proven: bool,
}

struct Assembled {
    prog: MilpProgram,
    /// Variable offset of each device's local block.
    offsets: Vec<usize>,
}

/// Joint MILP: per-device fragments plus split residuals `e+, e-` and the
/// T coupling rows `sum_d p^d_t + e+_t - e-_t = p_t`, objective
/// `sum_t (e+_t + e-_t)`.
fn assemble(
    p: &DVector<f64>,
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
) -> Result<Assembled, DisaggError> {
    let t = h.t;
    if p.len() != t {
        return Err(DisaggError::DimensionMismatch { got: p.len(), want: t });
    }
    if scen.devices.len() != fleet.len() {
        return Err(DisaggError::ScenarioMismatch {
            got: scen.devices.len(),
            want: fleet.len(),
        });
    }
    let frags: Result<Vec<_>, DeviceError> = fleet
        .iter()
        .zip(&scen.devices)
        .map(|(spec, ds)| device_constraints(spec, ds, h))
        .collect();
    let frags = frags?;
    let mut offsets = Vec::with_capacity(frags.len());
    let mut n = 0usize;
    let mut m = t; // coupling rows
    for f in &frags {
        offsets.push(n);
        n += f.num_vars;
        m += f.rows.len();
    }
    let e_plus = n;
    let e_minus = n + t;
    n += 2 * t;

    let mut rows = DMatrix::zeros(m, n);
    let mut senses = Vec::with_capacity(m);
    let mut rhs = DVector::zeros(m);
    let mut bounds = Vec::with_capacity(n);
    let mut binaries = Vec::new();
    let mut r = 0usize;
    for (f, &off) in frags.iter().zip(&offsets) {
        bounds.extend_from_slice(&f.bounds);
        binaries.extend(f.binaries.iter().map(|&j| off + j));
        for (coeffs, sense, b) in &f.rows {
            for &(j, v) in coeffs {
                rows[(r, off + j)] += v;
            }
            senses.push(*sense);
            rhs[r] = *b;
            r += 1;
        }
    }
    bounds.extend(std::iter::repeat((0.0, f64::INFINITY)).take(2 * t));
    for k in 0..t {
        for (f, &off) in frags.iter().zip(&offsets) {
            for &(j, v) in &f.hourly[k] {
                rows[(r, off + j)] += v;
            }
        }
        rows[(r, e_plus + k)] = 1.0;
        rows[(r, e_minus + k)] = -1.0;
        senses.push(Sense::Eq);
        rhs[r] = p[k];
        r += 1;
    }
    let mut objective = DVector::zeros(n);
    for k in 0..2 * t {
        objective[e_plus + k] = 1.0;
    }
    Ok(Assembled {
        prog: MilpProgram {
            base: LinearProgram {
                objective,
                rows,
                senses,
                rhs,
                bounds,
            },
            binary_indices: binaries,
        },
        offsets,
    })
}

/// The joint mismatch MILP as a standalone program, for external
/// cross-checks (e.g. exhaustive enumeration over the binaries).
pub fn disaggregation_program(
    p: &DVector<f64>,
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
) -> Result<MilpProgram, DisaggError> {
    Ok(assemble(p, scen, fleet, h)?.prog)
}

pub fn solve_disaggregation(
    p: &DVector<f64>,
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
) -> Result<DisaggResult, DisaggError> {
    solve_disaggregation_opts(p, scen, fleet, h, &DisaggOptions::default())
}

pub fn solve_disaggregation_opts(
    p: &DVector<f64>,
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
    opts: &DisaggOptions,
) -> Result<DisaggResult, DisaggError> {
    let gt = g_tol(p);
    let asm = assemble(p, scen, fleet, h)?;
    let res = solve_milp(
        &asm.prog,
        &MilpOptions {
            node_limit: opts.node_limit,
            cutoff: Some(gt),
            prune_above: None,
        },
    )?;
    match res.status {
        SolveStatus::Infeasible => return Err(DisaggError::InfeasibleScenario),
        SolveStatus::Unbounded => {
            return Err(DisaggError::Internal("mismatch objective unbounded".into()))
        }
        SolveStatus::Optimal | SolveStatus::NodeLimit => {}
    }
    let x = res
        .solution
        .as_ref()
        .ok_or(DisaggError::InfeasibleScenario)?;
    let mut schedules = Vec::with_capacity(fleet.len());
    let mut p_hat = DVector::zeros(h.t);
    for ((spec, ds), &off) in fleet.iter().zip(&scen.devices).zip(&asm.offsets) {
        let local: Vec<f64> = x.as_slice()[off..].iter().take(frag_len(spec, h)).copied().collect();
        let sched = extract_schedule(spec, h, &local);
        check_schedule(spec, ds, h, &sched, 1e-6).map_err(DisaggError::Internal)?;
        for t in 0..h.t {
            p_hat[t] += sched.hourly[t];
        }
        schedules.push(sched);
    }
    let g_value = res.objective.max(0.0);
    let l1 = (p - &p_hat).iter().map(|v| v.abs()).sum::<f64>();
    if (l1 - g_value).abs() > 1e-6 * (1.0 + l1) {
        return Err(DisaggError::Internal(format!(
            "objective {g_value} disagrees with recomputed mismatch {l1}"
        )));
    }
    Ok(DisaggResult {
        g_value,
        device_schedules: schedules,
        p_hat,
        proven: res.status == SolveStatus::Optimal,
    })
}

fn frag_len(spec: &DeviceSpec, h: &HorizonConfig) -> usize {
    let q = h.quarters();
    match spec {
        DeviceSpec::Pv { .. } => q,
        DeviceSpec::Battery { .. } | DeviceSpec::Ev { .. } => 3 * q,
        DeviceSpec::Tcl { .. } => 2 * q,
    }
}

/// Re-optimizes the given device subset jointly against `target` (a small
/// mismatch MILP); returns the subset's new schedules, or `None` on a
/// node-limit stop without an incumbent.
fn subset_resolve(
    target: &DVector<f64>,
    subset: &[usize],
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
    node_limit: usize,
) -> Result<Option<Vec<DeviceSchedule>>, DisaggError> {
    let sub_fleet: Vec<DeviceSpec> = subset.iter().map(|&d| fleet[d].clone()).collect();
    let sub_scen = Scenario {
        devices: subset.iter().map(|&d| scen.devices[d].clone()).collect(),
        seed: scen.seed,
    };
    let asm = assemble(target, &sub_scen, &sub_fleet, h)?;
    let res = solve_milp(
        &asm.prog,
        &MilpOptions {
            node_limit,
            cutoff: Some(1e-9),
            prune_above: None,
        },
    )?;
    match res.status {
        SolveStatus::Infeasible => return Err(DisaggError::InfeasibleScenario),
        SolveStatus::Unbounded => {
            return Err(DisaggError::Internal("mismatch objective unbounded".into()))
        }
        SolveStatus::Optimal | SolveStatus::NodeLimit => {}
    }
    let Some(x) = res.solution.as_ref() else {
        return Ok(None);
    };
    let mut schedules = Vec::with_capacity(subset.len());
    for ((spec, ds), &off) in sub_fleet.iter().zip(&sub_scen.devices).zip(&asm.offsets) {
        let local: Vec<f64> = x.as_slice()[off..]
            .iter()
            .take(frag_len(spec, h))
            .copied()
            .collect();
        let sched = extract_schedule(spec, h, &local);
        check_schedule(spec, ds, h, &sched, 1e-6).map_err(DisaggError::Internal)?;
        schedules.push(sched);
    }
    Ok(Some(schedules))
}

/// Flexibility-ordered device indices: rigid devices first, batteries last,
/// so the flexible devices absorb whatever residual the rigid ones leave.
fn device_order(fleet: &[DeviceSpec]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by_key(|&d| match fleet[d] {
        DeviceSpec::Pv { .. } => 0usize,
        DeviceSpec::Ev { .. } => 1,
        DeviceSpec::Tcl { .. } => 2,
        DeviceSpec::Battery { .. } => 3,
    });
    order
}

/// Local-search repair of a complete schedule assignment: one coordinate
/// pass (re-solve each device against residual plus its own contribution),
/// then joint re-optimization of device pairs, most flexible pairs first.
/// Every accepted move shrinks the residual, since the current schedules
/// stay feasible for each subproblem.
fn repair_schedules(
    schedules: &mut [DeviceSchedule],
    residual: &mut DVector<f64>,
    order: &[usize],
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
    node_limit: usize,
) -> Result<(), DisaggError> {
    let t = h.t;
    let mut l1 = residual.iter().map(|v| v.abs()).sum::<f64>();
    if l1 <= 1e-12 {
        return Ok(());
    }
    for &d in order {
        let mut target = residual.clone();
        for k in 0..t {
            target[k] += schedules[d].hourly[k];
        }
        let Some(mut scheds) = subset_resolve(&target, &[d], scen, fleet, h, node_limit)? else {
            continue;
        };
        let sched = scheds.pop().expect("one schedule per subset device");
        for k in 0..t {
            residual[k] = target[k] - sched.hourly[k];
        }
        schedules[d] = sched;
        l1 = residual.iter().map(|v| v.abs()).sum::<f64>();
        if l1 <= 1e-12 {
            return Ok(());
        }
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for ai in 0..order.len() {
        for bi in (ai + 1)..order.len() {
            pairs.push((order[ai], order[bi]));
        }
    }
    // order[] has batteries last, so reversed pair order tries
    // battery-battery first, then battery-other
    pairs.reverse();
    for &(a, b) in pairs.iter().take(40) {
        let mut target = residual.clone();
        for &d in &[a, b] {
            for k in 0..t {
                target[k] += schedules[d].hourly[k];
            }
        }
        let Some(scheds) = subset_resolve(&target, &[a, b], scen, fleet, h, node_limit)? else {
            continue;
        };
        let mut new_resid = target;
        for s in &scheds {
            for k in 0..t {
                new_resid[k] -= s.hourly[k];
            }
        }
        let new_l1 = new_resid.iter().map(|v| v.abs()).sum::<f64>();
        if new_l1 < l1 - 1e-12 {
            let mut it = scheds.into_iter();
            schedules[a] = it.next().unwrap();
            schedules[b] = it.next().unwrap();
            *residual = new_resid;
            l1 = new_l1;
        }
        if l1 <= 1e-12 {
            break;
        }
    }
    Ok(())
}

fn result_from_schedules(
    p: &DVector<f64>,
    schedules: Vec<DeviceSchedule>,
    t: usize,
) -> DisaggResult {
    let mut p_hat = DVector::zeros(t);
    for s in &schedules {
        for k in 0..t {
            p_hat[k] += s.hourly[k];
        }
    }
    let g_value = (p - &p_hat).iter().map(|v| v.abs()).sum::<f64>();
    DisaggResult {
        g_value,
        device_schedules: schedules,
        p_hat,
        proven: false,
    }
}

/// Fills every device against its own independent hourly target (small
/// per-device MILPs); returns the schedules plus the residual `p - sum`,
/// or `None` when a subproblem hits its node limit without an incumbent.
fn fill_from_targets(
    p: &DVector<f64>,
    targets: &[DVector<f64>],
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
    node_limit: usize,
) -> Result<Option<(Vec<DeviceSchedule>, DVector<f64>)>, DisaggError> {
    let t = h.t;
    let mut schedules = Vec::with_capacity(fleet.len());
    let mut residual = p.clone();
    for d in 0..fleet.len() {
        let Some(mut scheds) = subset_resolve(&targets[d], &[d], scen, fleet, h, node_limit)?
        else {
            return Ok(None);
        };
        let sched = scheds.pop().expect("one schedule per subset device");
        for k in 0..t {
            residual[k] -= sched.hourly[k];
        }
        schedules.push(sched);
    }
    Ok(Some((schedules, residual)))
}

struct HeuristicOutcome {
    /// best disaggregation found (upper bound on g); None only when the
    /// per-device subproblems hit their node limits without incumbents
    result: Option<DisaggResult>,
    /// joint LP relaxation optimum (a lower bound on g), computed only when
    /// the cheap sequential stage did not already certify feasibility
    lp_bound: Option<f64>,
}

/// Two-stage upper-bound heuristic plus a relaxation lower bound.
///
/// Stage 1: each device in turn solves its own small mismatch MILP against
/// the running residual (rigid devices first), then local-search repair.
/// Stage 2 (only if stage 1 leaves a residual): solve the joint LP
/// relaxation; its optimum is a valid lower bound on g, and its per-device
/// hourly profiles serve as allocation targets each device matches with its
/// own MILP, followed by the same repair.
fn heuristic_disaggregation(
    p: &DVector<f64>,
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
    opts: &DisaggOptions,
    device_bounds: Option<&[(Vec<f64>, Vec<f64>)]>,
) -> Result<HeuristicOutcome, DisaggError> {
    let t = h.t;
    if p.len() != t {
        return Err(DisaggError::DimensionMismatch { got: p.len(), want: t });
    }
    if scen.devices.len() != fleet.len() {
        return Err(DisaggError::ScenarioMismatch {
            got: scen.devices.len(),
            want: fleet.len(),
        });
    }
    let gt = g_tol(p);
    let order = device_order(fleet);
    let node_limit = opts.node_limit.min(2_000);

    let mut best: Option<DisaggResult> = None;

    // stage 0: proportional allocation — each device targets its share of
    // p according to its per-hour (relaxed) power range
    if let Some(bounds) = device_bounds {
        let mut lo_tot = vec![0.0; t];
        let mut hi_tot = vec![0.0; t];
        for (dlo, dhi) in bounds {
            for k in 0..t {
                lo_tot[k] += dlo[k];
                hi_tot[k] += dhi[k];
            }
        }
        let frac: Vec<f64> = (0..t)
            .map(|k| {
                let range = hi_tot[k] - lo_tot[k];
                if range > 1e-9 {
                    ((p[k] - lo_tot[k]) / range).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect();
        let targets: Vec<DVector<f64>> = bounds
            .iter()
            .map(|(dlo, dhi)| {
                DVector::from_fn(t, |k, _| dlo[k] + frac[k] * (dhi[k] - dlo[k]))
            })
            .collect();
        if let Some((mut schedules, mut residual)) =
            fill_from_targets(p, &targets, scen, fleet, h, node_limit)?
        {
            repair_schedules(&mut schedules, &mut residual, &order, scen, fleet, h, node_limit)?;
            let cand = result_from_schedules(p, schedules, t);
            if cand.g_value <= gt {
                return Ok(HeuristicOutcome {
                    result: Some(cand),
                    lp_bound: None,
                });
            }
            best = Some(cand);
        }
    }

    // stage 1: sequential fill against the running residual
    let mut filled: Vec<Option<DeviceSchedule>> = vec![None; fleet.len()];
    let mut residual = p.clone();
    let mut abandoned = false;
    for &d in &order {
        let Some(mut scheds) = subset_resolve(&residual, &[d], scen, fleet, h, node_limit)?
        else {
            abandoned = true;
            break;
        };
        let sched = scheds.pop().expect("one schedule per subset device");
        for k in 0..t {
            residual[k] -= sched.hourly[k];
        }
        filled[d] = Some(sched);
    }
    if !abandoned {
        let mut schedules: Vec<DeviceSchedule> = filled
            .into_iter()
            .map(|s| s.expect("every device was scheduled"))
            .collect();
        repair_schedules(&mut schedules, &mut residual, &order, scen, fleet, h, node_limit)?;
        let cand = result_from_schedules(p, schedules, t);
        if cand.g_value <= gt {
            return Ok(HeuristicOutcome {
                result: Some(cand),
                lp_bound: None,
            });
        }
        if best.as_ref().map_or(true, |b| cand.g_value < b.g_value) {
            best = Some(cand);
        }
    }
    let Some(mut best) = best else {
        return Ok(HeuristicOutcome {
            result: None,
            lp_bound: None,
        });
    };

    // stage 2: LP-guided allocation
    let asm = assemble(p, scen, fleet, h)?;
    let relax = solve_lp(&asm.prog.base)?;
    match relax.status {
        SolveStatus::Infeasible => return Err(DisaggError::InfeasibleScenario),
        SolveStatus::Unbounded => {
            return Err(DisaggError::Internal("mismatch objective unbounded".into()))
        }
        SolveStatus::Optimal => {}
        SolveStatus::NodeLimit => unreachable!(),
    }
    let lp_bound = relax.objective.max(0.0);
    if lp_bound > gt {
        // provably infeasible: no point refining the upper bound
        return Ok(HeuristicOutcome {
            result: Some(best),
            lp_bound: Some(lp_bound),
        });
    }
    let x = relax.solution.as_ref().expect("optimal LP has a solution");
    let mut targets = Vec::with_capacity(fleet.len());
    for ((spec, ds), &off) in fleet.iter().zip(&scen.devices).zip(&asm.offsets) {
        let frag = device_constraints(spec, ds, h)?;
        targets.push(DVector::from_fn(t, |k, _| {
            frag.hourly[k].iter().map(|&(j, v)| v * x[off + j]).sum()
        }));
    }
    if let Some((mut schedules, mut residual)) =
        fill_from_targets(p, &targets, scen, fleet, h, node_limit)?
    {
        repair_schedules(&mut schedules, &mut residual, &order, scen, fleet, h, node_limit)?;
        let cand = result_from_schedules(p, schedules, t);
        if cand.g_value < best.g_value {
            best = cand;
        }
    }
    Ok(HeuristicOutcome {
        result: Some(best),
        lp_bound: Some(lp_bound),
    })
}

/// Best-effort disaggregation without solving the joint MILP to optimality;
/// see `heuristic_disaggregation`. The result is a genuine disaggregation of
/// its `p_hat`, so `g_value` is an upper bound on the true minimum mismatch
/// — a feasibility certificate whenever it is below tolerance, never an
/// infeasibility proof. Returns `None` when the per-device subproblems hit
/// their node limits without incumbents.
pub fn greedy_disaggregation(
    p: &DVector<f64>,
    scen: &Scenario,
    fleet: &[DeviceSpec],
    h: &HorizonConfig,
    opts: &DisaggOptions,
    device_bounds: Option<&[(Vec<f64>, Vec<f64>)]>,
) -> Result<Option<DisaggResult>, DisaggError> {
    Ok(heuristic_disaggregation(p, scen, fleet, h, opts, device_bounds)?.result)
}

/// Decides whether `g(p; scenario i) <= gt` without always solving the joint
/// MILP to optimality: an hourly-bounds prescreen, then the greedy heuristic
/// (feasibility certificate), then the joint LP relaxation root bound
/// (infeasibility certificate), and only in the remaining ambiguous band
/// branch-and-bound with a zero cutoff and pruning above the threshold.
/// Returns the decision and a heuristic magnitude for the mismatch (0 when
/// zero). A node-limit stop conservatively counts as "not zero".
fn decide_zero(
    p: &DVector<f64>,
    pool: &ScenarioPool,
    i: usize,
    gt: f64,
    opts: &DisaggOptions,
) -> Result<(bool, f64), DisaggError> {
    let (lo, hi) = pool.aggregate_bounds(i);
    let mut gap = 0.0;
    for t in 0..pool.h.t {
        gap += (lo[t] - p[t]).max(0.0) + (p[t] - hi[t]).max(0.0);
    }
    if gap > gt {
        return Ok((false, gap));
    }
    let heur = heuristic_disaggregation(
        p,
        &pool.scenarios[i],
        &pool.fleet,
        &pool.h,
        opts,
        Some(&pool.device_bounds[i]),
    )?;
    if let Some(res) = &heur.result {
        if res.g_value <= gt {
            return Ok((true, 0.0));
        }
    }
    if let Some(bound) = heur.lp_bound {
        if bound > gt {
            return Ok((false, bound));
        }
    }
    let asm = assemble(p, &pool.scenarios[i], &pool.fleet, &pool.h)?;
    let res = solve_milp(
        &asm.prog,
        &MilpOptions {
            node_limit: opts.node_limit,
            cutoff: Some(gt),
            prune_above: Some(gt),
        },
    )?;
    match res.status {
        SolveStatus::Infeasible => Err(DisaggError::InfeasibleScenario),
        SolveStatus::Unbounded => Err(DisaggError::Internal("unbounded mismatch".into())),
        SolveStatus::Optimal => {
            let g = res.objective.max(0.0);
            Ok((g <= gt, if g <= gt { 0.0 } else { g }))
        }
        // exhausted under prune_above, or out of nodes: not proven zero
        SolveStatus::NodeLimit => {
            let magnitude = if res.objective.is_finite() {
                res.objective.max(gt)
            } else {
                gt
            };
            Ok((false, magnitude))
        }
    }
}

/// Fraction of the selected scenarios whose mismatch is (certified) zero.
pub fn chance_statistic(
    p: &DVector<f64>,
    pool: &ScenarioPool,
    indices: &[usize],
    gt: f64,
    opts: &DisaggOptions,
) -> Result<f64, DisaggError> {
    assert!(!indices.is_empty());
    let decisions: Result<Vec<_>, DisaggError> = indices
        .par_iter()
        .map(|&i| decide_zero(p, pool, i, gt, opts))
        .collect();
    let decisions = decisions?;
    let zeros = decisions.iter().filter(|(z, _)| *z).count();
    Ok(zeros as f64 / indices.len() as f64)
}

#[derive(Debug, Clone)]
pub struct LabelOutcome {
    /// -1 = disaggregatable ("feasible"), +1 = not.
    pub y: i8,
    pub c: f64,
    /// For infeasible points: the projection from the scenario with the
    /// largest mismatch.
    pub best_projection: Option<DVector<f64>>,
}

pub fn threshold_label(c: f64, epsilon: f64) -> i8 {
    if c >= 1.0 - epsilon - 1e-12 {
        -1
    } else {
        1
    }
}

/// Labels `p` against the model: with a fleet, draws `k` scenarios from the
/// pool (seeded shuffle) and applies the chance threshold; with a known
/// polytope the answer is deterministic and `c` is 0 or 1.
pub fn label(
    p: &DVector<f64>,
    model: &AggregateModel,
    k: usize,
    epsilon: f64,
    draw_seed: u64,
    opts: &DisaggOptions,
) -> Result<LabelOutcome, DisaggError> {
    let gt = g_tol(p);
    match model {
        AggregateModel::Polytope(poly) => {
            let (g, p_hat) = project_to_polytope(p, poly)?;
            let zero = g <= gt;
            Ok(LabelOutcome {
                y: threshold_label(if zero { 1.0 } else { 0.0 }, epsilon),
                c: if zero { 1.0 } else { 0.0 },
                best_projection: if zero { None } else { Some(p_hat) },
            })
        }
        AggregateModel::Fleet(pool) => {
            let indices = draw_indices(pool.len(), k, draw_seed);
            let decisions: Result<Vec<_>, DisaggError> = indices
                .par_iter()
                .map(|&i| decide_zero(p, pool, i, gt, opts))
                .collect();
            let decisions = decisions?;
            let zeros = decisions.iter().filter(|(z, _)| *z).count();
            let c = zeros as f64 / indices.len() as f64;
            let y = threshold_label(c, epsilon);
            let mut best_projection = None;
            if y == 1 {
                // scenario with the largest mismatch estimate
                let (&worst, _) = indices
                    .iter()
                    .zip(&decisions)
                    .max_by(|(_, (_, a)), (_, (_, b))| a.total_cmp(b))
                    .unwrap();
                // The greedy heuristic already yields an explicit
                // disaggregation, i.e. a feasible aggregate near `p`; only
                // fall back to the exact joint solve when it bails out.
                let p_hat = match greedy_disaggregation(
                    p,
                    &pool.scenarios[worst],
                    &pool.fleet,
                    &pool.h,
                    opts,
                    Some(&pool.device_bounds[worst]),
                )? {
                    Some(res) => res.p_hat,
                    None => {
                        solve_disaggregation_opts(
                            p,
                            &pool.scenarios[worst],
                            &pool.fleet,
                            &pool.h,
                            opts,
                        )?
                        .p_hat
                    }
                };
                best_projection = Some(p_hat);
            }
            Ok(LabelOutcome {
                y,
                c,
                best_projection,
            })
        }
    }
}

/// l1 projection of `p` onto `{z : A z <= b}`; returns the distance and the
/// projection.
pub fn project_to_polytope(
    p: &DVector<f64>,
    poly: &HPolytope,
) -> Result<(f64, DVector<f64>), DisaggError> {
    let t = poly.dim();
    if p.len() != t {
        return Err(DisaggError::DimensionMismatch { got: p.len(), want: t });
    }
    let m = poly.num_rows();
    // vars: z (free), e+ (>=0), e- (>=0); rows: A z <= b; z + e+ - e- = p
    let n = 3 * t;
    let mut rows = DMatrix::zeros(m + t, n);
    rows.view_mut((0, 0), (m, t)).copy_from(&poly.a);
    let mut senses = vec![Sense::Le; m];
    let mut rhs = DVector::zeros(m + t);
    rhs.rows_mut(0, m).copy_from(&poly.b);
    for k in 0..t {
        rows[(m + k, k)] = 1.0;
        rows[(m + k, t + k)] = 1.0;
        rows[(m + k, 2 * t + k)] = -1.0;
        senses.push(Sense::Eq);
        rhs[m + k] = p[k];
    }
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); t];
    bounds.extend(std::iter::repeat((0.0, f64::INFINITY)).take(2 * t));
    let mut objective = DVector::zeros(n);
    for k in t..n {
        objective[k] = 1.0;
    }
    let lp = LinearProgram {
        objective,
        rows,
        senses,
        rhs,
        bounds,
    };
    let res = solve_lp(&lp)?;
    match res.status {
        SolveStatus::Optimal => {
            let x = res.solution.unwrap();
            Ok((res.objective.max(0.0), x.rows(0, t).into_owned()))
        }
        SolveStatus::Infeasible => Err(DisaggError::InfeasibleScenario),
        other => Err(DisaggError::Internal(format!(
            "projection LP ended with {other:?}"
        ))),
    }
}
