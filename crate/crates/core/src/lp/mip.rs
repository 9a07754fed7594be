use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{solve_lp_with, LpError, LpProblem, LpStatus, Sense, SimplexOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MipOptions {
    pub lp: SimplexOptions,
    pub integrality_tol: f64,
    /// Nodes whose bound is within this relative distance of the incumbent
    /// are pruned.
    pub relative_gap: f64,
    pub max_nodes: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            lp: SimplexOptions::default(),
            integrality_tol: 1e-6,
            relative_gap: 1e-9,
            max_nodes: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Objective of the root LP relaxation (in the problem's sense).
    pub root_bound: f64,
    /// LP relaxations solved, root included.
    pub nodes: usize,
}

struct Node {
    /// Bound in minimization form.
    bound: f64,
    id: usize,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub fn solve_mip(problem: &LpProblem, binaries: &[usize]) -> Result<MipSolution, LpError> {
    solve_mip_with(problem, binaries, &MipOptions::default())
}

/// Best-bound branch and bound over 0/1 variables. Branches on the most
/// fractional binary, ties broken by lowest index.
pub fn solve_mip_with(
    problem: &LpProblem,
    binaries: &[usize],
    opts: &MipOptions,
) -> Result<MipSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars();
    for &b in binaries {
        if b >= n {
            return Err(LpError::Dimension(format!("binary index {b} of {n}")));
        }
    }
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut work = problem.clone();
    for &b in binaries {
        work.lower[b] = work.lower[b].max(0.0).ceil();
        work.upper[b] = work.upper[b].min(1.0).floor();
        if work.lower[b] > work.upper[b] {
            return Ok(MipSolution {
                status: MipStatus::Infeasible,
                x: vec![0.0; n],
                objective: f64::NAN,
                root_bound: f64::NAN,
                nodes: 0,
            });
        }
    }
    let base_lower = work.lower.clone();
    let base_upper = work.upper.clone();

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        fixings: Vec::new(),
    });
    let mut next_id = 1;
    let mut nodes = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut root_bound = f64::NAN;

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= best - opts.relative_gap * best.abs().max(1.0) {
                continue;
            }
        }
        if nodes >= opts.max_nodes {
            return Err(LpError::NodeLimit(opts.max_nodes));
        }
        work.lower.copy_from_slice(&base_lower);
        work.upper.copy_from_slice(&base_upper);
        for &(j, v) in &node.fixings {
            work.lower[j] = v;
            work.upper[j] = v;
        }
        let lp = solve_lp_with(&work, &opts.lp)?;
        nodes += 1;
        match lp.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if nodes == 1 {
                    return Ok(MipSolution {
                        status: MipStatus::Unbounded,
                        x: vec![0.0; n],
                        objective: sign * f64::NEG_INFINITY,
                        root_bound: sign * f64::NEG_INFINITY,
                        nodes,
                    });
                }
                continue;
            }
            LpStatus::Optimal => {}
        }
        let bound = sign * lp.objective;
        if nodes == 1 {
            root_bound = lp.objective;
        }
        if let Some((best, _)) = &incumbent {
            if bound >= best - opts.relative_gap * best.abs().max(1.0) {
                continue;
            }
        }
        let mut branch: Option<(usize, f64)> = None;
        for &b in binaries {
            let v = lp.x[b];
            let frac = (v - v.round()).abs();
            if frac > opts.integrality_tol {
                let score = 0.5 - (v - 0.5).abs();
                if branch.is_none_or(|(_, s)| score > s + 1e-12) {
                    branch = Some((b, score));
                }
            }
        }
        match branch {
            None => {
                let mut x = lp.x;
                for &b in binaries {
                    x[b] = x[b].round();
                }
                incumbent = Some((bound, x));
            }
            Some((j, _)) => {
                for v in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, v));
                    heap.push(Node {
                        bound,
                        id: next_id,
                        fixings,
                    });
                    next_id += 1;
                }
            }
        }
    }

    Ok(match incumbent {
        Some((best, x)) => MipSolution {
            status: MipStatus::Optimal,
            x,
            objective: sign * best,
            root_bound,
            nodes,
        },
        None => MipSolution {
            status: MipStatus::Infeasible,
            x: vec![0.0; n],
            objective: f64::NAN,
            root_bound,
            nodes,
        },
    })
}
