//! Exhaustive vertex / extreme-ray enumeration for tiny LPs.
//!
//! The feasible set is written as `G x <= h`, always including `x >= lower`
//! with finite lower bounds, so it is pointed. The LP is infeasible iff it has
//! no vertex, unbounded iff some extreme ray of the recession cone improves
//! the objective, and otherwise optimal at the best vertex.

use gridplan::lp::{farkas_margin, LpProblem, LpSolution, LpStatus, Relation, Sense};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleResult {
    Infeasible,
    Unbounded,
    Optimal(f64),
}

const TOL: f64 = 1e-9;

fn halfspaces(p: &LpProblem) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = p.num_vars();
    let mut g = Vec::new();
    let mut h = Vec::new();
    let mut push = |row: Vec<f64>, rhs: f64| {
        g.push(row);
        h.push(rhs);
    };
    for c in &p.constraints {
        let mut row = vec![0.0; n];
        for &(j, a) in &c.coeffs {
            row[j] += a;
        }
        match c.relation {
            Relation::Le => push(row, c.rhs),
            Relation::Ge => push(row.iter().map(|v| -v).collect(), -c.rhs),
            Relation::Eq => {
                push(row.clone(), c.rhs);
                push(row.iter().map(|v| -v).collect(), -c.rhs);
            }
        }
    }
    for j in 0..n {
        assert!(p.lower[j].is_finite(), "oracle needs finite lower bounds");
        let mut row = vec![0.0; n];
        row[j] = -1.0;
        push(row, -p.lower[j]);
        if p.upper[j].is_finite() {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            push(row, p.upper[j]);
        }
    }
    (g, h)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, rest) = a.split_at_mut(r);
                for (x, p) in rest[0][col..n].iter_mut().zip(&top[col][col..n]) {
                    *x -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn combinations(m: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, f);
            cur.pop();
        }
    }
    rec(0, m, k, &mut Vec::with_capacity(k), f);
}

/// Null direction of the `(n-1) x n` matrix `rows`, if it has rank `n-1`.
fn null_direction(rows: &[&Vec<f64>], n: usize) -> Option<Vec<f64>> {
    // Try each coordinate as the free one, fixed to 1.
    for free in 0..n {
        let a: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| (0..n).filter(|&c| c != free).map(|c| r[c]).collect())
            .collect();
        let b: Vec<f64> = rows.iter().map(|r| -r[free]).collect();
        if let Some(rest) = solve_square(a, b) {
            let mut d = Vec::with_capacity(n);
            let mut it = rest.into_iter();
            for c in 0..n {
                d.push(if c == free { 1.0 } else { it.next().unwrap() });
            }
            return Some(d);
        }
    }
    None
}

pub fn solve(p: &LpProblem) -> OracleResult {
    let n = p.num_vars();
    let (g, h) = halfspaces(p);
    let cmin: Vec<f64> = match p.sense {
        Sense::Minimize => p.objective.clone(),
        Sense::Maximize => p.objective.iter().map(|c| -c).collect(),
    };
    let feasible = |x: &[f64]| {
        g.iter().zip(&h).all(|(row, &rhs)| {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            lhs <= rhs + TOL * (1.0 + rhs.abs())
        })
    };

    let mut best: Option<f64> = None;
    combinations(g.len(), n, &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| g[i].clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| h[i]).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v: f64 = cmin.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    });
    let Some(best) = best else {
        return OracleResult::Infeasible;
    };

    let mut unbounded = false;
    if n == 1 {
        for d in [[1.0], [-1.0]] {
            let ok = g.iter().all(|row| row[0] * d[0] <= TOL);
            if ok && cmin[0] * d[0] < -TOL {
                unbounded = true;
            }
        }
    } else {
        combinations(g.len(), n - 1, &mut |idx| {
            if unbounded {
                return;
            }
            let rows: Vec<&Vec<f64>> = idx.iter().map(|&i| &g[i]).collect();
            if let Some(d) = null_direction(&rows, n) {
                for sgn in [1.0, -1.0] {
                    let d: Vec<f64> = d.iter().map(|v| v * sgn).collect();
                    let norm = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                    let in_cone = g.iter().all(|row| {
                        row.iter().zip(&d).map(|(a, v)| a * v).sum::<f64>() <= TOL * norm
                    });
                    let improving =
                        cmin.iter().zip(&d).map(|(c, v)| c * v).sum::<f64>() < -1e-7 * norm;
                    if in_cone && improving {
                        unbounded = true;
                    }
                }
            }
        });
    }
    if unbounded {
        return OracleResult::Unbounded;
    }
    OracleResult::Optimal(match p.sense {
        Sense::Minimize => best,
        Sense::Maximize => -best,
    })
}

/// Random LP with at most six variables and six rows, small integer data,
/// mixed relations and a mix of finite and infinite upper bounds.
pub fn random_lp(rng: &mut impl Rng) -> LpProblem {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=6);
    let sense = if rng.random_bool(0.5) {
        Sense::Minimize
    } else {
        Sense::Maximize
    };
    let mut p = LpProblem::new(sense, n);
    for j in 0..n {
        p.objective[j] = rng.random_range(-5..=5) as f64;
        if rng.random_bool(0.3) {
            p.lower[j] = rng.random_range(-3..=1) as f64;
        }
        if rng.random_bool(0.4) {
            p.upper[j] = p.lower[j] + rng.random_range(0..=6) as f64;
        }
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.7) {
                coeffs.push((j, rng.random_range(-4..=4) as f64));
            }
        }
        let relation = match rng.random_range(0..6) {
            0..=2 => Relation::Le,
            3 | 4 => Relation::Ge,
            _ => Relation::Eq,
        };
        let rhs = rng.random_range(-6..=10) as f64;
        p.add_constraint(coeffs, relation, rhs);
    }
    p
}

/// Compares a solver result with the oracle, including certificates,
/// strong duality and complementary slackness.
pub fn check(p: &LpProblem, s: &LpSolution) -> Result<(), String> {
    let expect = solve(p);
    match (expect, s.status) {
        (OracleResult::Infeasible, LpStatus::Infeasible) => {
            let y = s.farkas.as_ref().ok_or("missing certificate")?;
            let margin = farkas_margin(p, y, 1e-9).ok_or("certificate has a wrong sign")?;
            if margin <= 1e-9 {
                return Err(format!("certificate margin {margin}"));
            }
        }
        (OracleResult::Unbounded, LpStatus::Unbounded) => {
            let ray = s.ray.as_ref().ok_or("missing ray")?;
            let gain: f64 = p.objective.iter().zip(ray).map(|(c, d)| c * d).sum();
            let improving = match p.sense {
                Sense::Minimize => gain < -1e-9,
                Sense::Maximize => gain > 1e-9,
            };
            if !improving {
                return Err(format!("ray does not improve: {gain}"));
            }
            for row in &p.constraints {
                let a = row.activity(ray);
                let ok = match row.relation {
                    Relation::Le => a <= 1e-9,
                    Relation::Ge => a >= -1e-9,
                    Relation::Eq => a.abs() <= 1e-9,
                };
                if !ok {
                    return Err("ray leaves the feasible cone".into());
                }
            }
            for (j, d) in ray.iter().enumerate() {
                if (*d > 1e-9 && p.upper[j].is_finite()) || (*d < -1e-9 && p.lower[j].is_finite()) {
                    return Err("ray crosses a finite bound".into());
                }
            }
        }
        (OracleResult::Optimal(v), LpStatus::Optimal) => {
            if (v - s.objective).abs() > 1e-6 * (1.0 + v.abs()) {
                return Err(format!("objective {} vs oracle {v}", s.objective));
            }
            if p.max_violation(&s.x) > 1e-7 {
                return Err(format!("primal violation {}", p.max_violation(&s.x)));
            }
            let dual = s.dual_objective(p);
            if (dual - s.objective).abs() > 1e-6 * (1.0 + v.abs()) {
                return Err(format!("duality gap: primal {} dual {dual}", s.objective));
            }
            for (row, y) in p.constraints.iter().zip(&s.duals) {
                let slack = row.rhs - row.activity(&s.x);
                if (y * slack).abs() > 1e-6 {
                    return Err(format!("complementary slackness {y} * {slack}"));
                }
            }
        }
        (e, got) => return Err(format!("status {got:?}, oracle {e:?}")),
    }
    Ok(())
}
