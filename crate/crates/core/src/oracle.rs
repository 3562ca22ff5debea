//! Brute-force cross-checks for the solvers.
//!
//! [`sample_feasible`] draws random predictors and keeps those within the
//! ECE budget. [`exhaustive_best`] enumerates small supports on a coarse grid
//! and optimizes the masses on each support with an LP.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{ece, payoff, Instance, Norm, Predictor, MERGE_TOL};

/// Acceptance slack on the ECE budget.
const BUDGET_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Spacing of candidate predictions.
    pub grid_step: f64,
    /// Number of candidates drawn.
    pub samples: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(grid_step: f64, samples: usize, seed: u64) -> Result<SamplerConfig> {
        if !(grid_step > 0.0 && grid_step <= 0.5) {
            return Err(Error::BadInstance(format!("grid step {grid_step} outside (0, 0.5]")));
        }
        if samples == 0 {
            return Err(Error::BadInstance("at least one sample is required".into()));
        }
        Ok(SamplerConfig { grid_step, samples, seed })
    }
}

/// `{0, h, 2h, …} ∩ [0,1]`, plus 1 and the event means.
fn candidates(inst: &Instance, step: f64) -> Vec<f64> {
    let k = (1.0 / step + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=k).map(|j| (j as f64 * step).min(1.0)).collect();
    out.push(1.0);
    out.extend_from_slice(inst.theta());
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
    out
}

fn simplex_point(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1) + 1e-12).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Stream of predictors within the ECE budget; see [`sample_feasible`].
pub struct FeasibleSampler<'a> {
    inst: &'a Instance,
    grid: Vec<f64>,
    rng: ChaCha8Rng,
    remaining: usize,
}

impl FeasibleSampler<'_> {
    /// Each event gets random masses over up to three random grid points.
    fn draw_on_grid(&mut self) -> Predictor {
        let rows: Vec<Vec<(f64, f64)>> = (0..self.inst.n())
            .map(|_| {
                let k = self.rng.random_range(1..=3.min(self.grid.len()));
                let idx = sample(&mut self.rng, self.grid.len(), k);
                let w = simplex_point(&mut self.rng, k);
                idx.iter().zip(w).map(|(j, w)| (self.grid[j], w)).collect()
            })
            .collect();
        Predictor::from_events(&rows).expect("rows are distributions")
    }

    /// Random signals shown at their posterior means, some of them shifted
    /// by up to twice the budget.
    fn draw_pooled(&mut self) -> Predictor {
        let n = self.inst.n();
        let s = self.rng.random_range(1..=3);
        let pi: Vec<Vec<f64>> = (0..n).map(|_| simplex_point(&mut self.rng, s)).collect();
        let eps = self.inst.epsilon();
        let mut points = Vec::with_capacity(s);
        for sig in 0..s {
            let (mut mass, mut mean) = (0.0, 0.0);
            for i in 0..n {
                let w = self.inst.lambda()[i] * pi[i][sig];
                mass += w;
                mean += w * self.inst.theta()[i];
            }
            let mut p = if mass > 0.0 { mean / mass } else { 0.5 };
            if self.rng.random_bool(0.5) {
                p += self.rng.random_range(-2.0..=2.0) * eps.min(1.0);
            }
            points.push(p.clamp(0.0, 1.0));
        }
        let rows: Vec<Vec<(f64, f64)>> = pi
            .iter()
            .map(|row| points.iter().copied().zip(row.iter().copied()).collect())
            .collect();
        Predictor::from_events(&rows).expect("rows are distributions")
    }
}

impl Iterator for FeasibleSampler<'_> {
    type Item = Predictor;

    fn next(&mut self) -> Option<Predictor> {
        while self.remaining > 0 {
            self.remaining -= 1;
            let pred =
                if self.rng.random_bool(0.5) { self.draw_on_grid() } else { self.draw_pooled() };
            if ece(&pred, self.inst, self.inst.norm()) <= self.inst.epsilon() + BUDGET_SLACK {
                return Some(pred);
            }
        }
        None
    }
}

/// Draws `cfg.samples` random predictors and yields those whose ECE is within
/// the budget. Half of the draws put Dirichlet masses on random subsets of
/// the grid and the event means; the other half pool events into random
/// signals shown at (possibly shifted) posterior means. The stream depends
/// only on the seed.
pub fn sample_feasible<'a>(inst: &'a Instance, cfg: &SamplerConfig) -> FeasibleSampler<'a> {
    FeasibleSampler {
        inst,
        grid: candidates(inst, cfg.grid_step),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        remaining: cfg.samples,
    }
}

/// Largest joint support enumerated by [`exhaustive_best`].
pub const MAX_SUPPORT: usize = 3;

/// Best predictor whose predictions are at most [`MAX_SUPPORT`] points of
/// the grid `{0, h, 2h, …} ∪ Θ`. Every support is enumerated and the masses
/// are optimized exactly, with each prediction's action fixed to the
/// bare-prediction best response. Returns the predictor and its payoff.
pub fn exhaustive_best(inst: &Instance, grid_step: f64) -> Result<(Predictor, f64)> {
    if inst.n() > 2 || inst.m() > 3 {
        return Err(Error::TooLarge(format!("n = {}, m = {} (caps 2 and 3)", inst.n(), inst.m())));
    }
    if !(0.05 - 1e-12..=0.5).contains(&grid_step) {
        return Err(Error::TooLarge(format!("grid step {grid_step} outside [0.05, 0.5]")));
    }
    if let Norm::L(t) = inst.norm() {
        if t != 1.0 {
            return Err(Error::UnsupportedNorm(format!("{} (needs t = 1 or inf)", inst.norm())));
        }
    }
    let grid = candidates(inst, grid_step);
    let mut best: Option<(Predictor, f64)> = None;
    let mut support = Vec::with_capacity(MAX_SUPPORT);
    enumerate(&grid, 0, &mut support, &mut |pts| {
        if let Some(pred) = best_on_support(inst, pts) {
            let value = payoff(&pred, inst);
            if best.as_ref().is_none_or(|b| value > b.1 + 1e-12) {
                best = Some((pred, value));
            }
        }
    });
    best.ok_or_else(|| Error::Infeasible("no grid support meets the budget".into()))
}

fn enumerate(grid: &[f64], from: usize, cur: &mut Vec<f64>, visit: &mut dyn FnMut(&[f64])) {
    if !cur.is_empty() {
        visit(cur);
    }
    if cur.len() == MAX_SUPPORT {
        return;
    }
    for k in from..grid.len() {
        cur.push(grid[k]);
        enumerate(grid, k + 1, cur, visit);
        cur.pop();
    }
}

/// Mass LP on a fixed support: `f_i(p)` for every event and point, plus
/// split biases `b⁺_p, b⁻_p`.
fn best_on_support(inst: &Instance, pts: &[f64]) -> Option<Predictor> {
    let (n, k) = (inst.n(), pts.len());
    let f = |i: usize, j: usize| i * k + j;
    let bp = |j: usize| n * k + j;
    let bm = |j: usize| n * k + k + j;
    let mut prog = LinearProgram::new(n * k + 2 * k);
    for (j, &p) in pts.iter().enumerate() {
        let a = inst.best_response(p).action;
        for i in 0..n {
            prog.set_objective_coeff(f(i, j), inst.lambda()[i] * inst.event_utility(i, a));
        }
    }
    for i in 0..n {
        let terms: Vec<(usize, f64)> = (0..k).map(|j| (f(i, j), 1.0)).collect();
        prog.add_sparse_constraint(&terms, Relation::Eq, 1.0);
    }
    for (j, &p) in pts.iter().enumerate() {
        let mut terms: Vec<(usize, f64)> =
            (0..n).map(|i| (f(i, j), inst.lambda()[i] * (p - inst.theta()[i]))).collect();
        terms.push((bp(j), -1.0));
        terms.push((bm(j), 1.0));
        prog.add_sparse_constraint(&terms, Relation::Eq, 0.0);
    }
    let eps = inst.epsilon();
    match inst.norm() {
        Norm::Inf => {
            for j in 0..k {
                let mut terms = vec![(bp(j), 1.0), (bm(j), 1.0)];
                terms.extend((0..n).map(|i| (f(i, j), -eps * inst.lambda()[i])));
                prog.add_sparse_constraint(&terms, Relation::Le, 0.0);
            }
        }
        Norm::L(_) => {
            let terms: Vec<(usize, f64)> =
                (0..k).flat_map(|j| [(bp(j), 1.0), (bm(j), 1.0)]).collect();
            prog.add_sparse_constraint(&terms, Relation::Le, eps);
        }
    }
    let sol = lp::solve(&prog).ok()?;
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let rows: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|i| {
            let row: Vec<(f64, f64)> =
                (0..k).map(|j| (pts[j], sol.values[f(i, j)].max(0.0))).collect();
            let s: f64 = row.iter().map(|x| x.1).sum();
            row.into_iter().map(|(p, w)| (p, w / s)).collect()
        })
        .collect();
    let pred = Predictor::from_events(&rows).ok()?;
    // LP round-off may push the ECE a hair over the budget
    (ece(&pred, inst, inst.norm()) <= eps + 1e-9).then_some(pred)
}
