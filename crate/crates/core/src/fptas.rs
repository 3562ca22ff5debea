//! Approximation scheme for any `ℓ_t` ECE with `t ≥ 1`.
//!
//! A bi-event plan `χ_{i,j}(q,p)` takes mass pooled from events `i ≤ j` with
//! true expected outcome `q ∈ [θ_i, θ_j]` and shows prediction `p`. Event `i`
//! contributes the fraction `r_{i,j}(q) = (θ_j − q)/(θ_j − θ_i)` of that mass
//! and event `j` the rest. Restricting `q` and `p` to a two-layer grid turns
//! the search for a plan into a finite LP.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{DenseSimplex, LinearProgram, LpSolver, LpStatus, PivotRule, Relation};
use crate::model::{payoff, Instance, Norm, Predictor, MERGE_TOL};

/// Absolute tolerance on per-event supply.
pub const SUPPLY_TOL: f64 = 1e-7;
/// Plan entries below this mass are dropped when reading LP solutions.
const MIN_ENTRY: f64 = 1e-13;

/// One atom `χ_{i,j}(q,p)` of a bi-event plan. Event indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub q: f64,
    pub p: f64,
    pub mass: f64,
}

/// Finitely supported bi-event post-processing plan.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BiEventPlan {
    entries: Vec<PlanEntry>,
}

/// `r_{i,j}(q)`, the share of a `q`-atom attributed to the lower event.
pub fn contribution_ratio(theta_i: f64, theta_j: f64, q: f64) -> f64 {
    if theta_j - theta_i <= MERGE_TOL {
        1.0
    } else {
        ((theta_j - q) / (theta_j - theta_i)).clamp(0.0, 1.0)
    }
}

impl BiEventPlan {
    /// Builds a plan after checking `i ≤ j`, finite non-negative masses and
    /// points in `[0,1]`. Entries sharing a key are merged.
    pub fn new(entries: Vec<PlanEntry>) -> Result<BiEventPlan> {
        for e in &entries {
            if e.i > e.j {
                return Err(Error::BadInstance(format!("plan key ({}, {}) has i > j", e.i, e.j)));
            }
            if !e.mass.is_finite() || e.mass < 0.0 {
                return Err(Error::BadInstance(format!("plan mass {} is not admissible", e.mass)));
            }
            if !(0.0..=1.0).contains(&e.q) || !(0.0..=1.0).contains(&e.p) {
                return Err(Error::BadInstance(format!(
                    "plan point (q={}, p={}) outside [0,1]",
                    e.q, e.p
                )));
            }
        }
        let mut plan = BiEventPlan { entries };
        plan.compact();
        Ok(plan)
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks event indices and `θ_i ≤ q ≤ θ_j` against an instance.
    pub fn check(&self, inst: &Instance) -> Result<()> {
        let theta = inst.theta();
        for e in &self.entries {
            if e.j >= inst.n() {
                return Err(Error::BadInstance(format!("plan refers to event {}", e.j)));
            }
            if e.mass > 0.0 && (e.q < theta[e.i] - 1e-9 || e.q > theta[e.j] + 1e-9) {
                return Err(Error::BadInstance(format!(
                    "q = {} outside [θ_{}, θ_{}] = [{}, {}]",
                    e.q, e.i, e.j, theta[e.i], theta[e.j]
                )));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// `Σ χ |q − p|^t`
    pub fn ece_power(&self, t: f64) -> f64 {
        self.entries.iter().map(|e| e.mass * gap_power(e.q, e.p, t)).sum()
    }

    /// `Σ χ_{i,j}(q,p) (r U_i(p) + (1 − r) U_j(p))`
    pub fn objective(&self, inst: &Instance) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let r = contribution_ratio(inst.theta()[e.i], inst.theta()[e.j], e.q);
                let mut u = r * inst.indirect_utility(e.i, e.p);
                if r < 1.0 {
                    u += (1.0 - r) * inst.indirect_utility(e.j, e.p);
                }
                e.mass * u
            })
            .sum()
    }

    /// Mass each event supplies to the plan.
    pub fn supply(&self, inst: &Instance) -> Vec<f64> {
        let mut out = vec![0.0; inst.n()];
        for e in &self.entries {
            let r = contribution_ratio(inst.theta()[e.i], inst.theta()[e.j], e.q);
            out[e.i] += e.mass * r;
            out[e.j] += e.mass * (1.0 - r);
        }
        out
    }

    /// Distinct predictions with positive mass, sorted.
    pub fn predictions(&self) -> Vec<f64> {
        let mut ps: Vec<f64> =
            self.entries.iter().filter(|e| e.mass > 0.0).map(|e| e.p).collect();
        ps.sort_by(f64::total_cmp);
        ps.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
        ps
    }

    fn compact(&mut self) {
        self.entries.sort_by(|a, b| {
            (a.i, a.j).cmp(&(b.i, b.j)).then(a.q.total_cmp(&b.q)).then(a.p.total_cmp(&b.p))
        });
        let mut out: Vec<PlanEntry> = Vec::with_capacity(self.entries.len());
        for e in self.entries.drain(..) {
            match out.last_mut() {
                Some(last)
                    if (last.i, last.j) == (e.i, e.j)
                        && (last.q - e.q).abs() <= MERGE_TOL
                        && (last.p - e.p).abs() <= MERGE_TOL =>
                {
                    last.mass += e.mass
                }
                _ => out.push(e),
            }
        }
        self.entries = out;
    }
}

fn gap_power(q: f64, p: f64, t: f64) -> f64 {
    let d = (q - p).abs();
    if d <= MERGE_TOL {
        0.0
    } else if t == 1.0 {
        d
    } else {
        d.powf(t)
    }
}

/// Two-layer discretization of `[0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    /// Sorted, deduplicated points.
    pub points: Vec<f64>,
    pub delta: f64,
    /// `ε^t δ`
    pub delta0: f64,
    /// Number of local levels `S`.
    pub levels: usize,
    pub discontinuities: Vec<f64>,
    /// Norm exponent the local layer was built for.
    pub exponent: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.index_of(x).is_some()
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = self.points.partition_point(|&y| y < x - MERGE_TOL);
        (k < self.points.len() && (self.points[k] - x).abs() <= MERGE_TOL).then_some(k)
    }

    /// `(δ₀ (1+δ)^s)^{1/t}`
    pub fn radius(&self, s: usize) -> f64 {
        (self.delta0 * (1.0 + self.delta).powi(s as i32)).powf(1.0 / self.exponent)
    }

    /// Grid points in `[lo, hi]`.
    pub fn range(&self, lo: f64, hi: f64) -> &[f64] {
        let a = self.points.partition_point(|&y| y < lo - MERGE_TOL);
        let b = self.points.partition_point(|&y| y <= hi + MERGE_TOL);
        &self.points[a..b.max(a)]
    }
}

/// Every prediction where the agent's argmax set changes.
pub fn discontinuities(inst: &Instance) -> Vec<f64> {
    inst.discontinuities()
}

/// `S = ⌈2 ln(1/δ) / ln(1+δ)⌉`
pub fn grid_levels(delta: f64) -> usize {
    (2.0 * (1.0 / delta).ln() / delta.ln_1p()).ceil() as usize
}

fn exponent_of(inst: &Instance) -> Result<f64> {
    match inst.norm() {
        Norm::L(t) => Ok(t),
        Norm::Inf => Err(Error::UnsupportedNorm(
            "the grid scheme needs a finite exponent; use the exact solver for inf".into(),
        )),
    }
}

/// Builds the two-layer grid with precision `delta ∈ (0, 1/3)`.
///
/// With a zero budget the local layer collapses onto its centers, so only
/// the global layer is emitted.
pub fn build_grid(inst: &Instance, delta: f64) -> Result<Grid> {
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(Error::BadDelta(delta));
    }
    let t = exponent_of(inst)?;
    let z = inst.discontinuities();
    let delta0 = inst.epsilon().powf(t) * delta;
    let levels = grid_levels(delta);

    let steps = (1.0 / delta + 1e-9).floor() as usize;
    let mut points: Vec<f64> = (0..=steps).map(|k| (k as f64 * delta).min(1.0)).collect();
    points.extend_from_slice(inst.theta());
    points.extend_from_slice(&z);
    let mut grid = Grid { points: Vec::new(), delta, delta0, levels, discontinuities: z, exponent: t };
    if delta0 > 0.0 {
        let centers: Vec<f64> =
            grid.discontinuities.iter().chain(inst.theta()).copied().collect();
        for s in 0..=levels {
            let rad = grid.radius(s);
            for &c in &centers {
                points.extend([c - rad, c + rad].into_iter().filter(|x| (0.0..=1.0).contains(x)));
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
    grid.points = points;
    Ok(grid)
}

/// Which grid points may serve as predictions in the discretized LP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PredictionSet {
    /// `𝒵 ∪ Θ`, the innermost local points `c ± δ₀^{1/t}` around them, and
    /// the grid points closest to either end of every open interval between
    /// consecutive discontinuities.
    #[default]
    Anchored,
    /// Every grid point. Quadratic in the grid size.
    Full,
}

/// Predictions the LP may use under `set`.
pub fn prediction_points(inst: &Instance, grid: &Grid, set: PredictionSet) -> Vec<f64> {
    if set == PredictionSet::Full {
        return grid.points.clone();
    }
    let mut ps: Vec<f64> = grid.discontinuities.iter().chain(inst.theta()).copied().collect();
    if grid.delta0 > 0.0 {
        let rad = grid.radius(0);
        let centers = ps.clone();
        for c in centers {
            ps.extend([c - rad, c + rad].into_iter().filter(|x| (0.0..=1.0).contains(x)));
        }
    }
    let mut cuts = vec![0.0, 1.0];
    cuts.extend_from_slice(&grid.discontinuities);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
    for w in cuts.windows(2) {
        let inside = grid.range(w[0], w[1]);
        let inner: Vec<f64> = inside
            .iter()
            .copied()
            .filter(|&x| x > w[0] + MERGE_TOL && x < w[1] - MERGE_TOL)
            .collect();
        ps.extend(inner.first().into_iter().chain(inner.last()).copied());
    }
    ps.sort_by(f64::total_cmp);
    ps.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
    ps.into_iter().filter(|&x| grid.contains(x)).collect()
}

/// Discretized LP together with the plan key of every column.
#[derive(Clone, Debug)]
pub struct DiscLp {
    pub lp: LinearProgram,
    /// `(i, j, q, p)` per variable.
    pub keys: Vec<(usize, usize, f64, f64)>,
}

impl DiscLp {
    /// Reads a plan off an LP solution vector.
    pub fn plan_from_values(&self, values: &[f64]) -> BiEventPlan {
        let entries = self
            .keys
            .iter()
            .zip(values)
            .filter(|(_, &x)| x > MIN_ENTRY)
            .map(|(&(i, j, q, p), &mass)| PlanEntry { i, j, q, p, mass })
            .collect();
        let mut plan = BiEventPlan { entries };
        plan.compact();
        plan
    }
}

/// Discretized LP over the default prediction set.
pub fn build_disc_lp(inst: &Instance, grid: &Grid) -> Result<DiscLp> {
    build_disc_lp_with(inst, grid, PredictionSet::default())
}

/// Variables `χ_{i,j}(q,p)` for `i ≤ j`, grid `q ∈ [θ_i, θ_j]` and `p` in
/// the chosen prediction set. Pairs `i < j` with `θ_i = θ_j` are left out.
/// Row 0 is the budget `Σ χ |q−p|^t ≤ ε^t`, rows `1..=n` the supplies.
pub fn build_disc_lp_with(inst: &Instance, grid: &Grid, set: PredictionSet) -> Result<DiscLp> {
    let t = exponent_of(inst)?;
    let theta = inst.theta();
    let n = inst.n();
    let ps = prediction_points(inst, grid, set);
    let utils: Vec<Vec<f64>> =
        (0..n).map(|i| ps.iter().map(|&p| inst.indirect_utility(i, p)).collect()).collect();

    let mut keys = Vec::new();
    let mut objective = Vec::new();
    let mut cost = Vec::new();
    let mut supply: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in i..n {
            if i < j && theta[j] - theta[i] <= MERGE_TOL {
                continue;
            }
            let qs: Vec<f64> = if i == j { vec![theta[i]] } else { grid.range(theta[i], theta[j]).to_vec() };
            for &q in &qs {
                let r = contribution_ratio(theta[i], theta[j], q);
                for (k, &p) in ps.iter().enumerate() {
                    keys.push((i, j, q, p));
                    objective.push(r * utils[i][k] + (1.0 - r) * utils[j][k]);
                    cost.push(gap_power(q, p, t));
                    supply.push((i, j, r));
                }
            }
        }
    }

    let nv = keys.len();
    let mut prog = LinearProgram::new(nv);
    prog.set_objective(objective);
    prog.add_constraint(cost, Relation::Le, inst.epsilon().powf(t));
    let mut rows = vec![vec![0.0; nv]; n];
    for (v, &(i, j, r)) in supply.iter().enumerate() {
        rows[i][v] += r;
        if j != i {
            rows[j][v] += 1.0 - r;
        }
    }
    for (i, row) in rows.into_iter().enumerate() {
        prog.add_constraint(row, Relation::Eq, inst.lambda()[i]);
    }
    debug!("disc lp: {} grid points, {} predictions, {} variables", grid.len(), ps.len(), nv);
    Ok(DiscLp { lp: prog, keys })
}

/// Predictor generated by a plan: event `i` shows `p` with probability
/// `(1/λ_i) Σ_q` of its contributions to atoms at `p`.
pub fn plan_to_predictor(plan: &BiEventPlan, inst: &Instance) -> Result<Predictor> {
    plan.check(inst)?;
    let supply = plan.supply(inst);
    for (i, (&found, &expected)) in supply.iter().zip(inst.lambda()).enumerate() {
        if (found - expected).abs() > SUPPLY_TOL {
            return Err(Error::SupplyViolation { event: i, expected, found });
        }
    }
    let theta = inst.theta();
    let mut rows: Vec<Vec<(f64, f64)>> = vec![Vec::new(); inst.n()];
    for e in &plan.entries {
        let r = contribution_ratio(theta[e.i], theta[e.j], e.q);
        rows[e.i].push((e.p, e.mass * r));
        if e.j != e.i {
            rows[e.j].push((e.p, e.mass * (1.0 - r)));
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row.retain(|(_, w)| *w > 0.0);
        let total: f64 = row.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            // only reachable for events without prior mass
            *row = vec![(theta[i], 1.0)];
        } else {
            row.iter_mut().for_each(|(_, w)| *w /= total);
        }
    }
    Predictor::from_events(&rows)
}

#[derive(Clone, Debug)]
pub struct FptasSolution {
    pub predictor: Predictor,
    pub plan: BiEventPlan,
    /// Optimal value of the discretized LP.
    pub objective: f64,
    /// Principal's payoff under the returned predictor.
    pub payoff: f64,
    pub grid: Grid,
}

/// Near-optimal `(ε, ℓ_t)`-calibrated predictor, within a `1 − δ` factor of
/// the optimum, for `δ ∈ (0, 1)`.
pub fn fptas_solve(inst: &Instance, delta: f64) -> Result<FptasSolution> {
    fptas_solve_with(inst, delta, PredictionSet::default())
}

pub fn fptas_solve_with(inst: &Instance, delta: f64, set: PredictionSet) -> Result<FptasSolution> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::BadDelta(delta));
    }
    let grid = build_grid(inst, delta / 3.0)?;
    let prog = build_disc_lp_with(inst, &grid, set)?;
    let sol = DenseSimplex::with_rule(PivotRule::Dantzig).solve(&prog.lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::NumericalFailure("discretized LP reported infeasible".into()))
        }
        LpStatus::Unbounded => {
            return Err(Error::NumericalFailure("discretized LP reported unbounded".into()))
        }
    }
    let plan = prog.plan_from_values(&sol.values);
    let predictor = plan_to_predictor(&plan, inst)?;
    let value = payoff(&predictor, inst);
    debug!(
        "fptas: objective {} payoff {} after {} pivots, {} plan atoms",
        sol.objective_value,
        value,
        sol.iterations,
        plan.len()
    );
    Ok(FptasSolution { predictor, plan, objective: sol.objective_value, payoff: value, grid })
}

/// Moves a plan whose predictions lie in `𝒵 ∪ Θ` onto the grid.
///
/// A `δ†` share of every atom goes to the diagonal `(θ, θ)`. The rest keeps
/// its prediction `p` and is split between two grid points bracketing `q`
/// when `|q − p|` is small, or sent to the diagonal when the gap is beyond
/// the local layer.
pub fn round_plan(plan: &BiEventPlan, inst: &Instance, grid: &Grid) -> Result<BiEventPlan> {
    plan.check(inst)?;
    let theta = inst.theta();
    let t = grid.exponent;
    let delta = grid.delta;
    let dagger = 1.0 - 1.0 / (1.0 + 2.0 * delta);
    let rho0 = grid.radius(0);
    let rho_max = if grid.levels == 0 { rho0 } else { grid.radius(grid.levels - 1) };
    let grow = (1.0 + delta).powf(1.0 / t);
    let anchors: Vec<f64> = grid.discontinuities.iter().chain(theta).copied().collect();

    let mut out = Vec::new();
    let diag = |out: &mut Vec<PlanEntry>, i: usize, mass: f64| {
        if mass > 0.0 {
            out.push(PlanEntry { i, j: i, q: theta[i], p: theta[i], mass });
        }
    };
    for e in &plan.entries {
        if e.mass <= 0.0 {
            continue;
        }
        if !anchors.iter().any(|&a| (a - e.p).abs() <= 1e-9) {
            return Err(Error::PreconditionViolation(format!(
                "prediction {} is neither a discontinuity nor an event mean",
                e.p
            )));
        }
        let (i, j) = if theta[e.j] - theta[e.i] <= MERGE_TOL { (e.i, e.i) } else { (e.i, e.j) };
        let (ti, tj) = (theta[i], theta[j]);
        let (q, p) = (e.q.clamp(ti, tj), e.p);
        let r = contribution_ratio(ti, tj, q);
        diag(&mut out, i, dagger * e.mass * r);
        diag(&mut out, j, dagger * e.mass * (1.0 - r));
        let rest = (1.0 - dagger) * e.mass;

        let d = (q - p).abs();
        if d <= MERGE_TOL {
            out.push(PlanEntry { i, j, q, p, mass: rest });
            continue;
        }
        let up = q > p;
        let (near, far) = if d < rho0 {
            // Case I
            let far = if up { (p + rho0).min(tj) } else { (p - rho0).max(ti) };
            (if up { p.max(ti) } else { p.min(tj) }, far)
        } else if d <= rho_max * (1.0 + 1e-12) {
            // Case II
            let reach = d * grow;
            let far = if (up && p + reach >= tj) || (!up && p - reach <= ti) {
                if up {
                    tj
                } else {
                    ti
                }
            } else {
                let off = local_step(grid, d, reach).ok_or_else(|| {
                    Error::NumericalFailure(format!("no local point between {} and {}", d, reach))
                })?;
                if up {
                    p + off
                } else {
                    p - off
                }
            };
            (if up { p.max(ti) } else { p.min(tj) }, far)
        } else {
            // Case III
            diag(&mut out, i, rest * r);
            diag(&mut out, j, rest * (1.0 - r));
            continue;
        };
        let (ql, qr) = if up { (near, far) } else { (far, near) };
        let w_left = if qr - ql <= MERGE_TOL { 1.0 } else { (qr - q) / (qr - ql) };
        out.push(PlanEntry { i, j, q: ql, p, mass: rest * w_left });
        out.push(PlanEntry { i, j, q: qr, p, mass: rest * (1.0 - w_left) });
    }
    out.retain(|e| e.mass > 0.0);
    BiEventPlan::new(out)
}

/// Smallest local radius in `[lo, hi]`.
fn local_step(grid: &Grid, lo: f64, hi: f64) -> Option<f64> {
    let t = grid.exponent;
    let guess = ((lo.powf(t) / grid.delta0).ln() / grid.delta.ln_1p()).floor();
    let start = (guess.max(0.0) as usize).saturating_sub(1);
    (start..=grid.levels)
        .map(|s| grid.radius(s))
        .find(|&x| x >= lo * (1.0 - 1e-12))
        .filter(|&x| x <= hi * (1.0 + 1e-12))
}
