//! Branch-and-bound over binary variables.
//!
//! Depth-first with most-fractional branching and a best-bound restart every
//! 1000 nodes. A root rounding dive (fix binaries to their rounded relaxation
//! values) provides an early incumbent, which matters for callers that only
//! need to know whether the optimum reaches a cutoff.

use super::{simplex::WarmSimplex, MilpProgram, OptError, SolveResult, SolveStatus};

const TOL_INT: f64 = 1e-6;
const TOL_PRUNE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub node_limit: usize,
    /// Stop as soon as an incumbent with objective <= cutoff is found. The
    /// returned objective is then that incumbent, not necessarily the true
    /// optimum.
    pub cutoff: Option<f64>,
    /// Prune nodes whose relaxation bound exceeds this value. Useful when the
    /// caller only needs to decide whether the optimum is <= some threshold;
    /// the returned objective is the best incumbent found, if any.
    pub prune_above: Option<f64>,
}

impl MilpOptions {
    pub fn with_node_limit(node_limit: usize) -> Self {
        MilpOptions {
            node_limit,
            cutoff: None,
            prune_above: None,
        }
    }
}

struct Node {
    /// accumulated binary fixings along the path: (variable, value)
    fixings: Vec<(usize, f64)>,
    bound: f64,
}

pub fn solve_milp(prog: &MilpProgram, opts: &MilpOptions) -> Result<SolveResult, OptError> {
    prog.validate()?;
    if opts.node_limit == 0 {
        return Err(OptError::MalformedProblem("node_limit must be >= 1".into()));
    }

    let mut incumbent: Option<(f64, nalgebra::DVector<f64>)> = None;
    let mut nodes_processed = 0usize;
    let mut lp_iterations = 0usize;
    // One simplex instance for all node LPs: nodes differ only in binary
    // bounds, so each node re-solve warm-starts from the previous basis.
    let mut warm = WarmSimplex::new(&prog.base)?;
    let nb = prog.binary_indices.len();
    let mut pos_of = vec![usize::MAX; prog.base.num_vars()];
    for (i, &j) in prog.binary_indices.iter().enumerate() {
        pos_of[j] = i;
    }
    // bounds currently applied to `warm` per binary (None = the base bounds)
    let mut applied: Vec<Option<f64>> = vec![None; nb];
    let apply_fixings = |warm: &mut WarmSimplex,
                             applied: &mut Vec<Option<f64>>,
                             desired: &[Option<f64>]| {
        for (i, (&d, a)) in desired.iter().zip(applied.iter_mut()).enumerate() {
            if d != *a {
                let j = prog.binary_indices[i];
                match d {
                    Some(v) => warm.set_bound(j, v, v),
                    None => {
                        let (lo, hi) = prog.base.bounds[j];
                        warm.set_bound(j, lo, hi);
                    }
                }
                *a = d;
            }
        }
    };
    let mut open: Vec<Node> = vec![Node {
        fixings: Vec::new(),
        bound: f64::NEG_INFINITY,
    }];
    let mut root = true;
    let mut exhausted = true;
    // when prune_above discards subtrees, an exhausted tree no longer
    // certifies optimality, only "optimum > prune_above or = incumbent"
    let mut pruned_above = false;

    'search: while let Some(node) = pop_node(&mut open, nodes_processed) {
        if nodes_processed >= opts.node_limit {
            exhausted = false;
            break;
        }
        nodes_processed += 1;

        if let Some((inc_obj, _)) = &incumbent {
            if node.bound >= inc_obj - TOL_PRUNE {
                continue;
            }
        }
        if let Some(pa) = opts.prune_above {
            if node.bound > pa {
                pruned_above = true;
                continue;
            }
        }

        let mut desired: Vec<Option<f64>> = vec![None; nb];
        for &(j, v) in &node.fixings {
            desired[pos_of[j]] = Some(v);
        }
        apply_fixings(&mut warm, &mut applied, &desired);
        let relax = warm.solve()?;
        lp_iterations += relax.iterations;
        match relax.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => {
                if root {
                    // binaries are bounded, so an unbounded relaxation stays
                    // unbounded under any fixing
                    return Ok(SolveResult {
                        status: SolveStatus::Unbounded,
                        objective: f64::NEG_INFINITY,
                        solution: None,
                        dual: None,
                        dual_objective: f64::NEG_INFINITY,
                        iterations: lp_iterations,
                        nodes: nodes_processed,
                    });
                }
                continue;
            }
            SolveStatus::Optimal => {}
            SolveStatus::NodeLimit => unreachable!(),
        }
        let x = relax.solution.as_ref().unwrap();
        let bound = relax.objective;

        if let Some((inc_obj, _)) = &incumbent {
            if bound >= inc_obj - TOL_PRUNE {
                continue;
            }
        }
        if let Some(pa) = opts.prune_above {
            if bound > pa {
                pruned_above = true;
                continue;
            }
        }

        // most fractional binary
        let mut branch: Option<(usize, f64)> = None;
        for &j in &prog.binary_indices {
            let frac = (x[j] - x[j].round()).abs();
            if frac > TOL_INT {
                match branch {
                    Some((_, bf)) if bf >= frac => {}
                    _ => branch = Some((j, frac)),
                }
            }
        }

        match branch {
            None => {
                // integral: candidate incumbent
                let better = incumbent
                    .as_ref()
                    .map_or(true, |(obj, _)| bound < obj - TOL_PRUNE);
                if better {
                    incumbent = Some((bound, x.clone()));
                    if let Some(co) = opts.cutoff {
                        if bound <= co {
                            exhausted = false;
                            break 'search;
                        }
                    }
                }
            }
            Some((j, _)) => {
                if root {
                    // rounding dive for an early incumbent
                    let dive: Vec<Option<f64>> = prog
                        .binary_indices
                        .iter()
                        .map(|&b| Some(x[b].round().clamp(0.0, 1.0)))
                        .collect();
                    apply_fixings(&mut warm, &mut applied, &dive);
                    let dived = warm.solve()?;
                    lp_iterations += dived.iterations;
                    if dived.status == SolveStatus::Optimal {
                        let better = incumbent
                            .as_ref()
                            .map_or(true, |(obj, _)| dived.objective < obj - TOL_PRUNE);
                        if better {
                            incumbent =
                                Some((dived.objective, dived.solution.unwrap()));
                            if let Some(co) = opts.cutoff {
                                if dived.objective <= co {
                                    exhausted = false;
                                    break 'search;
                                }
                            }
                        }
                    }
                }
                let near = x[j].round().clamp(0.0, 1.0);
                let far = 1.0 - near;
                let mut f_far = node.fixings.clone();
                f_far.push((j, far));
                let mut f_near = node.fixings;
                f_near.push((j, near));
                open.push(Node { fixings: f_far, bound });
                // pushed last: depth-first dives toward the relaxation value
                open.push(Node { fixings: f_near, bound });
            }
        }
        root = false;
    }

    if !open.is_empty() {
        exhausted = false;
    }

    let (status, objective, solution) = match incumbent {
        Some((obj, x)) => {
            let proven = (exhausted && (!pruned_above || obj <= opts.prune_above.unwrap()))
                || opts.cutoff.map_or(false, |co| obj <= co);
            if proven {
                (SolveStatus::Optimal, obj, Some(x))
            } else {
                (SolveStatus::NodeLimit, obj, Some(x))
            }
        }
        None => {
            if exhausted && !pruned_above {
                (SolveStatus::Infeasible, f64::NAN, None)
            } else {
                (SolveStatus::NodeLimit, f64::NAN, None)
            }
        }
    };
    if std::env::var_os("OFD_MILP_DEBUG").is_some() {
        eprintln!(
            "MILPDBG nodes={} iters={} status={:?} obj={}",
            nodes_processed, lp_iterations, status, objective
        );
    }
    Ok(SolveResult {
        status,
        objective,
        solution,
        dual: None,
        dual_objective: f64::NAN,
        iterations: lp_iterations,
        nodes: nodes_processed,
    })
}

/// Depth-first pop, switching to the best-bound node every 1000 nodes to
/// refresh the global bound and escape unproductive subtrees.
fn pop_node(open: &mut Vec<Node>, processed: usize) -> Option<Node> {
    if open.is_empty() {
        return None;
    }
    if processed > 0 && processed % 1000 == 0 {
        let mut best = 0;
        for (i, n) in open.iter().enumerate() {
            if n.bound < open[best].bound {
                best = i;
            }
        }
        return Some(open.swap_remove(best));
    }
    open.pop()
}
