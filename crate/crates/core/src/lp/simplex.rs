use super::{LpError, LpProblem, LpSolution, LpStatus, PivotRule, Relation, Sense, SimplexOptions};

/// Internal structural column: original variable `var` moves by `sign`
/// per unit of the column.
#[derive(Debug, Clone, Copy)]
struct ColMap {
    var: usize,
    sign: f64,
}

/// The problem rewritten over non-negative columns.
struct StandardForm {
    cols: Vec<ColMap>,
    offset: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    relations: Vec<Relation>,
    rhs: Vec<f64>,
    /// Minimization costs per structural column.
    cost: Vec<f64>,
    /// Number of leading rows that mirror the caller's constraints; the rest
    /// are upper-bound rows.
    original_rows: usize,
}

impl StandardForm {
    fn build(p: &LpProblem) -> Self {
        let n = p.num_vars();
        let obj_sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cols = Vec::with_capacity(n);
        let mut offset = vec![0.0; n];
        // First internal column of each variable (or none when fixed).
        let mut first_col: Vec<Option<usize>> = vec![None; n];
        let mut bound_rows = Vec::new();
        for j in 0..n {
            let (lo, hi) = (p.lower[j], p.upper[j]);
            if lo == hi {
                offset[j] = lo;
                continue;
            }
            first_col[j] = Some(cols.len());
            if lo.is_finite() {
                offset[j] = lo;
                cols.push(ColMap { var: j, sign: 1.0 });
                if hi.is_finite() {
                    bound_rows.push((cols.len() - 1, hi - lo));
                }
            } else if hi.is_finite() {
                offset[j] = hi;
                cols.push(ColMap { var: j, sign: -1.0 });
            } else {
                cols.push(ColMap { var: j, sign: 1.0 });
                cols.push(ColMap { var: j, sign: -1.0 });
            }
        }
        let expand = |j: usize, a: f64, out: &mut Vec<(usize, f64)>| {
            if let Some(k) = first_col[j] {
                out.push((k, a * cols[k].sign));
                if k + 1 < cols.len() && cols[k + 1].var == j {
                    out.push((k + 1, a * cols[k + 1].sign));
                }
            }
        };
        let mut rows = Vec::with_capacity(p.constraints.len() + bound_rows.len());
        let mut relations = Vec::with_capacity(rows.capacity());
        let mut rhs = Vec::with_capacity(rows.capacity());
        for c in &p.constraints {
            let mut row = Vec::with_capacity(c.coeffs.len() + 2);
            let mut b = c.rhs;
            for &(j, a) in &c.coeffs {
                if a == 0.0 {
                    continue;
                }
                b -= a * offset[j];
                expand(j, a, &mut row);
            }
            rows.push(merge_duplicates(row));
            relations.push(c.relation);
            rhs.push(b);
        }
        let original_rows = rows.len();
        for (k, ub) in bound_rows {
            rows.push(vec![(k, 1.0)]);
            relations.push(Relation::Le);
            rhs.push(ub);
        }
        let cost = cols
            .iter()
            .map(|c| obj_sign * p.objective[c.var] * c.sign)
            .collect();
        StandardForm {
            cols,
            offset,
            rows,
            relations,
            rhs,
            cost,
            original_rows,
        }
    }
}

fn merge_duplicates(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (k, a) in row {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += a,
            _ => out.push((k, a)),
        }
    }
    out
}

enum Outcome {
    Optimal,
    Unbounded(usize),
}

/// Dense tableau with two trailing objective rows (phase 2, phase 1).
/// Objective rows hold reduced costs and `-z` in the right-hand column.
struct Tableau {
    data: Vec<f64>,
    width: usize,
    m: usize,
    ncols: usize,
    basis: Vec<usize>,
    is_artificial: Vec<bool>,
    /// Column that formed the initial identity for each row.
    initial_col: Vec<usize>,
    /// +1 or -1: sign applied to the row to make its rhs non-negative.
    flip: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    fn new(sf: &StandardForm) -> Self {
        let m = sf.rows.len();
        let n = sf.cols.len();
        let mut flip = vec![1.0; m];
        let mut rel = sf.relations.clone();
        for i in 0..m {
            if sf.rhs[i] < 0.0 {
                flip[i] = -1.0;
                rel[i] = match rel[i] {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }
        let n_slack = rel.iter().filter(|r| **r != Relation::Eq).count();
        let n_art = rel.iter().filter(|r| **r != Relation::Le).count();
        let ncols = n + n_slack + n_art;
        let width = ncols + 1;
        let mut data = vec![0.0; (m + 2) * width];
        let mut basis = vec![0; m];
        let mut initial_col = vec![0; m];
        let mut is_artificial = vec![false; ncols];
        let mut next_slack = n;
        let mut next_art = n + n_slack;
        for i in 0..m {
            let row = &mut data[i * width..(i + 1) * width];
            for &(k, a) in &sf.rows[i] {
                row[k] = flip[i] * a;
            }
            row[ncols] = flip[i] * sf.rhs[i];
            match rel[i] {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    is_artificial[next_art] = true;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    is_artificial[next_art] = true;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
            initial_col[i] = basis[i];
        }
        // Phase 2 row: costs of structural columns; basis columns cost 0.
        {
            let obj = &mut data[m * width..(m + 1) * width];
            obj[..n].copy_from_slice(&sf.cost);
        }
        // Phase 1 row: unit cost on artificials, priced out against the basis.
        {
            let (rows, tail) = data.split_at_mut(m * width);
            let p1 = &mut tail[width..2 * width];
            for (j, art) in is_artificial.iter().enumerate() {
                if *art {
                    p1[j] = 1.0;
                }
            }
            for i in 0..m {
                if is_artificial[basis[i]] {
                    let row = &rows[i * width..(i + 1) * width];
                    for (d, a) in p1.iter_mut().zip(row) {
                        *d -= a;
                    }
                }
            }
        }
        Tableau {
            data,
            width,
            m,
            ncols,
            basis,
            is_artificial,
            initial_col,
            flip,
            iterations: 0,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.ncols)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.at(r, q);
        let mut nz: Vec<(usize, f64)> = Vec::with_capacity(64);
        {
            let row = &mut self.data[r * w..(r + 1) * w];
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v /= p;
                    if v.abs() < 1e-13 {
                        *v = 0.0;
                    } else {
                        nz.push((j, *v));
                    }
                }
            }
            row[q] = 1.0;
        }
        let total_rows = self.m + 2;
        for i in 0..total_rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[i * w..(i + 1) * w];
            for &(j, v) in &nz {
                row[j] -= f * v;
            }
            row[q] = 0.0;
        }
        self.basis[r] = q;
    }

    fn run(&mut self, obj_row: usize, phase1: bool, opts: &SimplexOptions) -> Result<Outcome, LpError> {
        let mut bland = opts.pivot_rule == PivotRule::Bland;
        let mut streak = 0usize;
        let w = self.width;
        loop {
            if self.iterations >= opts.max_iterations {
                return Err(LpError::IterationLimit(opts.max_iterations));
            }
            let obj = &self.data[obj_row * w..obj_row * w + self.ncols];
            let allowed = |j: usize| phase1 || !self.is_artificial[j];
            let mut entering = None;
            if bland {
                for (j, &d) in obj.iter().enumerate() {
                    if d < -opts.optimality_tol && allowed(j) {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -opts.optimality_tol;
                for (j, &d) in obj.iter().enumerate() {
                    if d < best && allowed(j) {
                        best = d;
                        entering = Some(j);
                    }
                }
            }
            let Some(q) = entering else {
                return Ok(Outcome::Optimal);
            };

            let leave = if bland {
                self.bland_ratio(q, opts)
            } else {
                self.harris_ratio(q, opts)
            };
            let Some((r, ratio, _)) = leave else {
                return Ok(Outcome::Unbounded(q));
            };
            // Round-off can leave a basic value slightly negative.
            let rc = r * w + self.ncols;
            if self.data[rc] < 0.0 {
                self.data[rc] = 0.0;
            }
            self.pivot(r, q);
            self.iterations += 1;

            if opts.pivot_rule == PivotRule::DantzigBlandFallback {
                if ratio <= 1e-12 {
                    streak += 1;
                    if streak >= opts.degenerate_streak {
                        bland = true;
                    }
                } else {
                    streak = 0;
                    bland = false;
                }
            }
        }
    }

    /// Minimum-ratio row, ties to the smallest basic index.
    fn bland_ratio(&self, q: usize, opts: &SimplexOptions) -> Option<(usize, f64, f64)> {
        let mut leave: Option<(usize, f64, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, q);
            if a <= opts.pivot_tol {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            let better = match leave {
                None => true,
                Some((li, lr, _)) => {
                    if (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs()) {
                        self.basis[i] < self.basis[li]
                    } else {
                        ratio < lr
                    }
                }
            };
            if better {
                leave = Some((i, ratio, a));
            }
        }
        leave
    }

    /// Two-pass ratio test: the largest pivot among rows whose ratio lies
    /// within a small feasibility window of the minimum.
    fn harris_ratio(&self, q: usize, opts: &SimplexOptions) -> Option<(usize, f64, f64)> {
        const WINDOW: f64 = 1e-9;
        let mut bound = f64::INFINITY;
        for i in 0..self.m {
            let a = self.at(i, q);
            if a > opts.pivot_tol {
                bound = bound.min((self.rhs(i).max(0.0) + WINDOW) / a);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut leave: Option<(usize, f64, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, q);
            if a <= opts.pivot_tol {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            if ratio <= bound && leave.is_none_or(|(_, _, la)| a > la) {
                leave = Some((i, ratio, a));
            }
        }
        leave
    }

    /// Pivots zero-level artificials out of the basis where possible.
    fn expel_artificials(&mut self, opts: &SimplexOptions) {
        for i in 0..self.m {
            if !self.is_artificial[self.basis[i]] {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.ncols {
                if self.is_artificial[j] {
                    continue;
                }
                let a = self.at(i, j).abs();
                if a > opts.pivot_tol && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                self.pivot(i, j);
            }
        }
    }

    /// Row multipliers read from the reduced costs of the initial identity
    /// columns of `obj_row`, whose costs are `col_cost`.
    fn row_multipliers(&self, obj_row: usize, col_cost: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let c = self.initial_col[i];
                self.flip[i] * (col_cost(c) - self.at(obj_row, c))
            })
            .collect()
    }
}

/// Solves `problem` with default options.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    solve_lp_with(problem, &SimplexOptions::default())
}

pub fn solve_lp_with(problem: &LpProblem, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let sol = solve_once(problem, opts)?;
    if sol.status == LpStatus::Optimal && opts.pivot_rule != PivotRule::Bland {
        let scale = problem
            .constraints
            .iter()
            .fold(1.0_f64, |acc, c| acc.max(c.rhs.abs()));
        if problem.max_violation(&sol.x) > 1e-6 * scale {
            log::debug!("simplex lost feasibility; re-solving with Bland's rule");
            let bland = SimplexOptions {
                pivot_rule: PivotRule::Bland,
                ..*opts
            };
            return solve_once(problem, &bland);
        }
    }
    Ok(sol)
}

fn solve_once(problem: &LpProblem, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    let sf = StandardForm::build(problem);
    let mut t = Tableau::new(&sf);
    let n = problem.num_vars();
    let n_rows = problem.constraints.len();
    let m = t.m;

    // Phase 1.
    let has_artificial = t.basis.iter().any(|&b| t.is_artificial[b]);
    if has_artificial {
        t.run(m + 1, true, opts)?;
        let infeasibility = -t.rhs(m + 1);
        let scale = sf.rhs.iter().fold(1.0_f64, |acc, b| acc.max(b.abs()));
        if infeasibility > opts.feasibility_tol * scale {
            let is_art = t.is_artificial.clone();
            let y = t.row_multipliers(m + 1, |c| if is_art[c] { 1.0 } else { 0.0 });
            let farkas = y[..sf.original_rows].to_vec();
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                duals: vec![0.0; n_rows],
                reduced_costs: vec![0.0; n],
                objective: f64::NAN,
                ray: None,
                farkas: Some(farkas),
                iterations: t.iterations,
            });
        }
        t.expel_artificials(opts);
    }

    // Phase 2.
    let outcome = t.run(m, false, opts)?;
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    if let Outcome::Unbounded(q) = outcome {
        let mut dir = vec![0.0; sf.cols.len()];
        if q < sf.cols.len() {
            dir[q] = 1.0;
        }
        for i in 0..m {
            let b = t.basis[i];
            if b < sf.cols.len() {
                dir[b] -= t.at(i, q);
            }
        }
        let mut ray = vec![0.0; n];
        for (k, c) in sf.cols.iter().enumerate() {
            ray[c.var] += c.sign * dir[k];
        }
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            duals: vec![0.0; n_rows],
            reduced_costs: vec![0.0; n],
            objective: -sign * f64::INFINITY,
            ray: Some(ray),
            farkas: None,
            iterations: t.iterations,
        });
    }

    let mut internal = vec![0.0; t.ncols];
    for i in 0..m {
        internal[t.basis[i]] = t.rhs(i);
    }
    let mut x = sf.offset.clone();
    for (k, c) in sf.cols.iter().enumerate() {
        x[c.var] += c.sign * internal[k];
    }
    let y_internal = t.row_multipliers(m, |_| 0.0);
    let duals: Vec<f64> = y_internal[..sf.original_rows]
        .iter()
        .map(|y| sign * y)
        .collect();
    let mut reduced_costs = problem.objective.clone();
    for (row, &y) in problem.constraints.iter().zip(&duals) {
        for &(j, a) in &row.coeffs {
            reduced_costs[j] -= y * a;
        }
    }
    let objective = problem.objective_value(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        duals,
        reduced_costs,
        objective,
        ray: None,
        farkas: None,
        iterations: t.iterations,
    })
}
