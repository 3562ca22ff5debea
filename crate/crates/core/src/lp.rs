//! Dense linear programs and a two-phase primal simplex solver.
//!
//! Programs are always maximized. Variables carry `[lower, upper]` bounds that
//! may be infinite; the solver shifts, flips or splits variables into standard
//! form and turns finite upper bounds into extra rows.

use std::fmt::Write as _;

use log::debug;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective·x` subject to constraint rows and variable bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    bounds: Vec<(f64, f64)>,
    var_names: Option<Vec<String>>,
}

impl LinearProgram {
    /// All variables default to `[0, +inf)` with zero objective weight.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); num_vars],
            var_names: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) {
        assert_eq!(objective.len(), self.num_vars, "objective length");
        self.objective = objective;
    }

    pub fn set_objective_coeff(&mut self, var: usize, value: f64) {
        self.objective[var] = value;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars, "constraint length");
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Adds a row given as `(variable, coefficient)` pairs; repeated
    /// variables accumulate.
    pub fn add_sparse_constraint(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) {
        let mut coeffs = vec![0.0; self.num_vars];
        for &(j, c) in terms {
            coeffs[j] += c;
        }
        self.add_constraint(coeffs, relation, rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    pub fn set_var_names(&mut self, names: Vec<String>) {
        assert_eq!(names.len(), self.num_vars, "name count");
        self.var_names = Some(names);
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| {
            let lhs = dot(&c.coeffs, x);
            match c.relation {
                Relation::Le => (lhs - c.rhs).max(0.0),
                Relation::Ge => (c.rhs - lhs).max(0.0),
                Relation::Eq => (lhs - c.rhs).abs(),
            }
        });
        let bounds = self.bounds.iter().zip(x).map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::PreconditionViolation(format!("linear program: {what}")));
        if self.objective.iter().any(|c| !c.is_finite()) {
            return bad("non-finite objective coefficient");
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != self.num_vars {
                return bad(&format!("row {i} has wrong length"));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|x| !x.is_finite()) {
                return bad(&format!("row {i} has non-finite data"));
            }
        }
        if self.bounds.iter().any(|(lo, hi)| lo.is_nan() || hi.is_nan() || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY) {
            return bad("invalid variable bound");
        }
        Ok(())
    }

    fn name(&self, j: usize) -> String {
        match &self.var_names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }

    /// Renders the program in CPLEX LP text format.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::from("\\ pcal linear program\nMaximize\n obj:");
        write_terms(&mut out, &self.objective, |j| self.name(j));
        out.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{}:", i + 1);
            write_terms(&mut out, &c.coeffs, |j| self.name(j));
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            let name = self.name(j);
            let _ = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => writeln!(out, " {lo} <= {name} <= {hi}"),
                (true, false) if lo == 0.0 => continue,
                (true, false) => writeln!(out, " {name} >= {lo}"),
                (false, true) => writeln!(out, " -inf <= {name} <= {hi}"),
                (false, false) => writeln!(out, " {name} free"),
            };
        }
        out.push_str("End\n");
        out
    }
}

fn write_terms(out: &mut String, coeffs: &[f64], name: impl Fn(usize) -> String) {
    let mut any = false;
    for (j, &c) in coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0) {
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", c.abs(), name(j));
        any = true;
    }
    if !any {
        out.push_str(" 0");
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Meaningful only when `status` is `Optimal`.
    pub objective_value: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotRule {
    /// Lowest-index improving column; never cycles.
    Bland,
    /// Most negative reduced cost, switching to Bland after a run of
    /// non-improving pivots.
    Dantzig,
}

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub pivot_rule: PivotRule,
    /// Defaults to `10·(vars + constraints)²`.
    pub max_iterations: Option<usize>,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            pivot_rule: PivotRule::Bland,
            max_iterations: None,
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
        }
    }
}

/// Seam for plugging in another LP backend.
pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution>;
}

#[derive(Clone, Debug, Default)]
pub struct DenseSimplex {
    pub options: SimplexOptions,
}

impl DenseSimplex {
    pub fn with_rule(rule: PivotRule) -> Self {
        DenseSimplex { options: SimplexOptions { pivot_rule: rule, ..Default::default() } }
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution> {
        simplex(lp, &self.options)
    }
}

/// Solves with default options (Bland's rule).
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    simplex(lp, &SimplexOptions::default())
}

#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `x = lo + y`
    Shift { col: usize, lo: f64 },
    /// `x = hi − y`
    Flip { col: usize, hi: f64 },
    /// `x = y⁺ − y⁻`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    width: usize,
    a: Vec<f64>,
    z: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width + j]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let (before, rest) = self.a.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let inv = 1.0 / prow[c];
        prow.iter_mut().for_each(|x| *x *= inv);
        prow[c] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(prow.iter()).for_each(|(x, p)| *x -= f * p);
                row[c] = 0.0;
            }
        };
        before.chunks_exact_mut(w).for_each(eliminate);
        after.chunks_exact_mut(w).for_each(eliminate);
        eliminate(&mut self.z);
        self.basis[r] = c;
    }

    /// Reduced costs `z_j = c_B·B⁻¹A_j − c_j` for a fresh cost vector.
    fn price(&mut self, cost: &[f64]) {
        let w = self.width;
        self.z = vec![0.0; w];
        for j in 0..cost.len().min(w - 1) {
            self.z[j] = -cost[j];
        }
        for i in 0..self.rows {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                let row = &self.a[i * w..(i + 1) * w];
                self.z.iter_mut().zip(row).for_each(|(z, x)| *z += cb * x);
            }
        }
    }

    /// Keeps only the listed rows and the first `cols` columns plus rhs.
    fn restrict(&mut self, keep_rows: &[usize], cols: usize) {
        let w = self.width;
        let nw = cols + 1;
        let mut a = Vec::with_capacity(keep_rows.len() * nw);
        for &i in keep_rows {
            a.extend_from_slice(&self.a[i * w..i * w + cols]);
            a.push(self.a[i * w + w - 1]);
        }
        self.basis = keep_rows.iter().map(|&i| self.basis[i]).collect();
        self.a = a;
        self.rows = keep_rows.len();
        self.width = nw;
        self.z = vec![0.0; nw];
    }
}

enum Phase {
    Optimal,
    Unbounded,
}

struct Runner<'a> {
    opts: &'a SimplexOptions,
    cap: usize,
    iterations: usize,
}

impl Runner<'_> {
    fn run(&mut self, t: &mut Tableau, eligible: usize, opt_tol: f64) -> Result<Phase> {
        let mut rule = self.opts.pivot_rule;
        let mut best = t.z[t.rhs_col()];
        let mut stalled = 0usize;
        loop {
            let enter = match rule {
                PivotRule::Bland => (0..eligible).find(|&j| t.z[j] < -opt_tol),
                PivotRule::Dantzig => {
                    let mut pick = None;
                    let mut most = -opt_tol;
                    for j in 0..eligible {
                        if t.z[j] < most {
                            most = t.z[j];
                            pick = Some(j);
                        }
                    }
                    pick
                }
            };
            let Some(c) = enter else { return Ok(Phase::Optimal) };
            let Some(r) = self.ratio_test(t, c) else { return Ok(Phase::Unbounded) };
            if self.iterations >= self.cap {
                return Err(Error::NumericalFailure(format!(
                    "simplex exceeded {} iterations",
                    self.cap
                )));
            }
            t.pivot(r, c);
            self.iterations += 1;
            let rhs = t.rhs_col();
            for i in 0..t.rows {
                let x = &mut t.a[i * t.width + rhs];
                if *x < 0.0 && *x > -self.opts.feasibility_tol {
                    *x = 0.0;
                }
            }
            let value = t.z[rhs];
            if value > best + 1e-12 * (1.0 + best.abs()) {
                best = value;
                stalled = 0;
            } else {
                stalled += 1;
                if rule == PivotRule::Dantzig && stalled > 50 {
                    debug!("simplex: degenerate stall, switching to Bland's rule");
                    rule = PivotRule::Bland;
                }
            }
        }
    }

    /// Minimum-ratio row; ties go to the lowest basic variable index.
    fn ratio_test(&self, t: &Tableau, c: usize) -> Option<usize> {
        let rhs = t.rhs_col();
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..t.rows {
            let aic = t.at(i, c);
            if aic <= self.opts.pivot_tol {
                continue;
            }
            let ratio = t.at(i, rhs).max(0.0) / aic;
            pick = match pick {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                    if ratio < best && !tie || tie && t.basis[i] < t.basis[r] {
                        Some((i, ratio))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        pick.map(|(i, _)| i)
    }
}

fn simplex(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution> {
    lp.check()?;
    let n = lp.num_vars;

    // Standard form: every structural column is >= 0.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut ub_rows: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &lp.bounds {
        if lo > hi {
            return Ok(infeasible(n, 0));
        }
        let map = match (lo.is_finite(), hi.is_finite()) {
            (true, _) => {
                if hi.is_finite() {
                    ub_rows.push((ncols, hi - lo));
                }
                VarMap::Shift { col: ncols, lo }
            }
            (false, true) => VarMap::Flip { col: ncols, hi },
            (false, false) => {
                ncols += 1;
                VarMap::Split { pos: ncols - 1, neg: ncols }
            }
        };
        ncols += 1;
        maps.push(map);
    }

    let mut cost = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        let c = lp.objective[j];
        match *map {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Flip { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(lp.constraints.len() + ub_rows.len());
    for con in &lp.constraints {
        let mut coeffs = vec![0.0; ncols];
        let mut rhs = con.rhs;
        for (j, map) in maps.iter().enumerate() {
            let a = con.coeffs[j];
            if a == 0.0 {
                continue;
            }
            match *map {
                VarMap::Shift { col, lo } => {
                    coeffs[col] += a;
                    rhs -= a * lo;
                }
                VarMap::Flip { col, hi } => {
                    coeffs[col] -= a;
                    rhs -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push((coeffs, con.relation, rhs));
    }
    for &(col, ub) in &ub_rows {
        let mut coeffs = vec![0.0; ncols];
        coeffs[col] = 1.0;
        rows.push((coeffs, Relation::Le, ub));
    }
    for (coeffs, rel, rhs) in rows.iter_mut() {
        if *rhs < 0.0 {
            coeffs.iter_mut().for_each(|x| *x = -*x);
            *rhs = -*rhs;
            *rel = match *rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let art_start = ncols + n_slack;
    let width = art_start + n_art + 1;
    let mut t = Tableau {
        rows: m,
        width,
        a: vec![0.0; m * width],
        z: vec![0.0; width],
        basis: vec![0; m],
    };
    let (mut s, mut art) = (ncols, art_start);
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let row = &mut t.a[i * width..(i + 1) * width];
        row[..ncols].copy_from_slice(coeffs);
        row[width - 1] = *rhs;
        match rel {
            Relation::Le => {
                row[s] = 1.0;
                t.basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                s += 1;
                row[art] = 1.0;
                t.basis[i] = art;
                art += 1;
            }
            Relation::Eq => {
                row[art] = 1.0;
                t.basis[i] = art;
                art += 1;
            }
        }
    }
    drop(rows);

    let cap = opts
        .max_iterations
        .unwrap_or_else(|| 10usize.saturating_mul((n + lp.constraints.len()).pow(2)).max(1000));
    let mut runner = Runner { opts, cap, iterations: 0 };
    let scale = 1.0 + t.a.chunks_exact(width).map(|r| r[width - 1].abs()).fold(0.0, f64::max);

    if n_art > 0 {
        let mut phase1 = vec![0.0; width - 1];
        phase1[art_start..].iter_mut().for_each(|c| *c = -1.0);
        t.price(&phase1);
        runner.run(&mut t, width - 1, opts.optimality_tol)?;
        let infeasibility = -t.z[t.rhs_col()];
        if infeasibility > opts.feasibility_tol * scale {
            debug!("simplex: infeasible, phase-one residual {infeasibility:e}");
            return Ok(infeasible(n, runner.iterations));
        }
        // Drive artificial variables out of the basis or drop redundant rows.
        let mut keep = Vec::with_capacity(t.rows);
        for i in 0..t.rows {
            if t.basis[i] < art_start {
                keep.push(i);
                continue;
            }
            let col = (0..art_start)
                .filter(|&j| t.at(i, j).abs() > opts.pivot_tol)
                .max_by(|&x, &y| t.at(i, x).abs().total_cmp(&t.at(i, y).abs()));
            if let Some(j) = col {
                t.pivot(i, j);
                keep.push(i);
            }
        }
        t.restrict(&keep, art_start);
    }

    let mut full_cost = cost.clone();
    full_cost.resize(t.width - 1, 0.0);
    t.price(&full_cost);
    let cmax = cost.iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
    let eligible = t.width - 1;
    let phase = runner.run(&mut t, eligible, opts.optimality_tol * cmax)?;
    if let Phase::Unbounded = phase {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective_value: f64::INFINITY,
            values: vec![0.0; n],
            iterations: runner.iterations,
        });
    }

    let mut y = vec![0.0; ncols];
    for i in 0..t.rows {
        if t.basis[i] < ncols {
            y[t.basis[i]] = t.at(i, t.rhs_col()).max(0.0);
        }
    }
    let values: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, lo } => lo + y[col],
            VarMap::Flip { col, hi } => hi - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let violation = lp.max_violation(&values);
    if violation > opts.feasibility_tol * scale {
        return Err(Error::NumericalFailure(format!(
            "solution violates constraints by {violation:e}"
        )));
    }
    let objective_value = lp.evaluate(&values);
    debug!(
        "simplex: optimal {objective_value} after {} pivots ({} vars, {} rows)",
        runner.iterations,
        n,
        lp.constraints.len()
    );
    Ok(LpSolution { status: LpStatus::Optimal, objective_value, values, iterations: runner.iterations })
}

fn infeasible(n: usize, iterations: usize) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        objective_value: f64::NEG_INFINITY,
        values: vec![0.0; n],
        iterations,
    }
}
