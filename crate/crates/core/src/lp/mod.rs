//! Dense two-phase primal simplex and a best-bound branch-and-bound for
//! binary variables.
//!
//! Problems are stated with sparse rows and per-variable bounds. Internally
//! every variable is shifted or split onto `x >= 0`, finite upper bounds
//! become extra rows, and each row is normalized to a non-negative right-hand
//! side before slack and artificial columns are added.

mod mip;
mod simplex;

pub use mip::{solve_mip, solve_mip_with, MipOptions, MipSolution, MipStatus};
pub use simplex::{solve_lp, solve_lp_with};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("branch-and-bound node limit ({0}) reached")]
    NodeLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Signed violation: positive when the row is not satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => lhs - self.rhs,
            Relation::Ge => self.rhs - lhs,
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A linear program `opt c'x s.t. rows, lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// `n` variables, all with bounds `[0, +inf)` and zero cost.
    pub fn new(sense: Sense, n: usize) -> Self {
        Self {
            sense,
            objective: vec![0.0; n],
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0_f64, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi))
            .fold(0.0_f64, f64::max);
        rows.max(bounds)
    }

    pub(crate) fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension(format!(
                "{} objective coefficients but {} lower / {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::NonFinite(format!("objective coefficient {j}")));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::NonFinite(format!("bounds of variable {j}")));
            }
            if lo > hi {
                return Err(LpError::Dimension(format!(
                    "variable {j} has lower bound {lo} above upper bound {hi}"
                )));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("right-hand side of row {i}")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Dimension(format!(
                        "row {i} references variable {j} of {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("row {i}, variable {j}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    /// Smallest-index entering and leaving choice throughout.
    Bland,
    /// Most negative reduced cost, switching to Bland's rule during runs of
    /// degenerate pivots until the objective moves again.
    DantzigBlandFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
    pub pivot_rule: PivotRule,
    /// Consecutive degenerate pivots tolerated before Bland's rule takes over.
    pub degenerate_streak: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-7,
            pivot_tol: 1e-9,
            max_iterations: 200_000,
            pivot_rule: PivotRule::DantzigBlandFallback,
            degenerate_streak: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values (meaningful when optimal).
    pub x: Vec<f64>,
    /// Shadow prices `d objective / d rhs`, one per constraint row.
    pub duals: Vec<f64>,
    /// `c_j - duals' A_j` in the problem's own sense.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    /// Improving direction of unboundedness, present iff unbounded.
    pub ray: Option<Vec<f64>>,
    /// Row multipliers proving infeasibility, present iff infeasible.
    pub farkas: Option<Vec<f64>>,
    pub iterations: usize,
}

impl LpSolution {
    /// Objective of the dual built from `duals` and `reduced_costs`. Equals
    /// `objective` at an optimum (strong duality).
    pub fn dual_objective(&self, problem: &LpProblem) -> f64 {
        let rows: f64 = problem
            .constraints
            .iter()
            .zip(&self.duals)
            .map(|(c, y)| c.rhs * y)
            .sum();
        let sign = match problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let bounds: f64 = self
            .reduced_costs
            .iter()
            .enumerate()
            .map(|(j, &r)| {
                let r_min = sign * r;
                let bound = if r_min > 0.0 {
                    problem.lower[j]
                } else if r_min < 0.0 {
                    problem.upper[j]
                } else {
                    return 0.0;
                };
                if bound.is_finite() {
                    r * bound
                } else {
                    // Only reachable through round-off on a free column.
                    0.0
                }
            })
            .sum();
        rows + bounds
    }
}

/// Checks that `y` proves `problem` infeasible: sign-consistent row
/// multipliers for which `y'Ax` cannot reach `y'b` anywhere in the variable
/// box. Returns the certified margin `y'b - max_box y'Ax` (positive when
/// the certificate is valid) or `None` when `y` has a wrong sign or the box
/// maximum is unbounded.
pub fn farkas_margin(problem: &LpProblem, y: &[f64], tol: f64) -> Option<f64> {
    if y.len() != problem.constraints.len() {
        return None;
    }
    let mut col = vec![0.0; problem.num_vars()];
    let mut yb = 0.0;
    for (row, &yi) in problem.constraints.iter().zip(y) {
        let ok = match row.relation {
            Relation::Ge => yi >= -tol,
            Relation::Le => yi <= tol,
            Relation::Eq => true,
        };
        if !ok {
            return None;
        }
        yb += yi * row.rhs;
        for &(j, a) in &row.coeffs {
            col[j] += yi * a;
        }
    }
    let mut max_box = 0.0;
    for (j, &g) in col.iter().enumerate() {
        if g > tol {
            if !problem.upper[j].is_finite() {
                return None;
            }
            max_box += g * problem.upper[j];
        } else if g < -tol {
            if !problem.lower[j].is_finite() {
                return None;
            }
            max_box += g * problem.lower[j];
        }
    }
    Some(yb - max_box)
}
