//! Exact optimal predictors for the ℓ₁ and ℓ∞ ECE.
//!
//! The solver optimizes over direct action recommendations: a scheme
//! `π_i(a)` recommending action `a` under event `i`, plus a bias `b(a)` added
//! to the Bayes mean of each recommendation. The biased mean
//! `p(a) = (Σ_i λ_i π_i(a) θ_i + b(a)) / Σ_i λ_i π_i(a)` becomes the prediction
//! shown for `a`, so the agent must be willing to play `a` at `p(a)`.

use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{Instance, Norm, Predictor};

/// Mass below which a recommendation is treated as unused.
pub const MIN_MASS: f64 = 1e-12;
const SNAP_TOL: f64 = 1e-7;

/// Direct recommendation scheme with per-action bias.
#[derive(Clone, Debug, PartialEq)]
pub struct SenderStrategy {
    /// `pi[i][a]`, rows sum to one.
    pub pi: Vec<Vec<f64>>,
    /// `bias[a]`
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyRepr {
    pub pi: Vec<Vec<f64>>,
    pub bias: BTreeMap<String, f64>,
}

impl SenderStrategy {
    pub fn n_events(&self) -> usize {
        self.pi.len()
    }

    pub fn n_signals(&self) -> usize {
        self.bias.len()
    }

    /// `Σ_i λ_i π_i(a)`
    pub fn marginal(&self, inst: &Instance, a: usize) -> f64 {
        signal_marginal(&self.pi, inst, a)
    }

    /// Biased mean of recommendation `a`, if it has mass.
    pub fn biased_mean(&self, inst: &Instance, a: usize) -> Option<f64> {
        biased_mean(&self.pi, &self.bias, inst, a)
    }

    /// The bias budget actually used, measured under `norm`.
    pub fn aggregated_bias(&self, inst: &Instance, norm: Norm) -> f64 {
        aggregated_bias(&self.pi, &self.bias, inst, norm)
    }

    /// Every used recommendation is a best response at its biased mean.
    pub fn is_incentive_compatible(&self, inst: &Instance) -> bool {
        (0..self.n_signals()).all(|a| match self.biased_mean(inst, a) {
            Some(p) if self.marginal(inst, a) >= MIN_MASS => {
                (-SNAP_TOL..=1.0 + SNAP_TOL).contains(&p)
                    && inst.tied_actions(p.clamp(0.0, 1.0)).contains(&a)
            }
            _ => true,
        })
    }

    pub fn to_repr(&self, inst: &Instance) -> StrategyRepr {
        StrategyRepr {
            pi: self.pi.clone(),
            bias: inst.actions().iter().cloned().zip(self.bias.iter().copied()).collect(),
        }
    }

    pub fn from_repr(repr: StrategyRepr, inst: &Instance) -> Result<SenderStrategy> {
        let bias = inst
            .actions()
            .iter()
            .map(|a| repr.bias.get(a).copied().unwrap_or(0.0))
            .collect();
        if repr.pi.len() != inst.n() || repr.pi.iter().any(|row| row.len() != inst.m()) {
            return Err(Error::BadInstance("strategy shape does not match instance".into()));
        }
        Ok(SenderStrategy { pi: repr.pi, bias })
    }
}

fn signal_marginal(pi: &[Vec<f64>], inst: &Instance, s: usize) -> f64 {
    pi.iter().zip(inst.lambda()).map(|(row, l)| l * row[s]).sum()
}

fn biased_mean(pi: &[Vec<f64>], bias: &[f64], inst: &Instance, s: usize) -> Option<f64> {
    let mass = signal_marginal(pi, inst, s);
    (mass > 0.0).then(|| {
        let bayes: f64 =
            pi.iter().zip(inst.lambda()).zip(inst.theta()).map(|((row, l), t)| l * row[s] * t).sum();
        (bayes + bias[s]) / mass
    })
}

fn aggregated_bias(pi: &[Vec<f64>], bias: &[f64], inst: &Instance, norm: Norm) -> f64 {
    let terms = (0..bias.len()).filter_map(|s| {
        let mass = signal_marginal(pi, inst, s);
        (mass > 0.0).then(|| (mass, (bias[s] / mass).abs()))
    });
    match norm {
        Norm::Inf => terms.map(|(_, d)| d).fold(0.0, f64::max),
        Norm::L(t) if t == 1.0 => terms.map(|(m, d)| m * d).sum(),
        Norm::L(t) => terms.map(|(m, d)| m * d.powf(t)).sum::<f64>().powf(1.0 / t),
    }
}

/// A scheme over abstract signals, each labeled with the action it induces.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalingScheme {
    pub pi: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub labels: Vec<usize>,
}

impl SignalingScheme {
    /// Labels every signal with the agent's response at its biased mean,
    /// breaking ties with the signal's posterior weights.
    pub fn new(pi: Vec<Vec<f64>>, bias: Vec<f64>, inst: &Instance) -> Result<SignalingScheme> {
        if pi.len() != inst.n() || pi.iter().any(|row| row.len() != bias.len()) {
            return Err(Error::BadInstance("signaling scheme shape mismatch".into()));
        }
        let labels = (0..bias.len())
            .map(|s| match biased_mean(&pi, &bias, inst, s) {
                Some(p) => {
                    let w: Vec<f64> =
                        pi.iter().zip(inst.lambda()).map(|(row, l)| l * row[s]).collect();
                    inst.best_response_weighted(p.clamp(0.0, 1.0), &w).action
                }
                None => 0,
            })
            .collect();
        Ok(SignalingScheme { pi, bias, labels })
    }

    pub fn from_strategy(strat: &SenderStrategy) -> SignalingScheme {
        SignalingScheme {
            pi: strat.pi.clone(),
            bias: strat.bias.clone(),
            labels: (0..strat.n_signals()).collect(),
        }
    }

    pub fn aggregated_bias(&self, inst: &Instance, norm: Norm) -> f64 {
        aggregated_bias(&self.pi, &self.bias, inst, norm)
    }

    /// Per-event distribution over induced actions, `n × m`.
    pub fn action_distribution(&self, m: usize) -> Vec<Vec<f64>> {
        self.pi
            .iter()
            .map(|row| {
                let mut out = vec![0.0; m];
                for (s, &x) in row.iter().enumerate() {
                    out[self.labels[s]] += x;
                }
                out
            })
            .collect()
    }
}

/// Merges all signals that induce the same action into one recommendation.
pub fn contract_signals(scheme: &SignalingScheme, inst: &Instance) -> SenderStrategy {
    let m = inst.m();
    let mut bias = vec![0.0; m];
    for (s, &b) in scheme.bias.iter().enumerate() {
        bias[scheme.labels[s]] += b;
    }
    SenderStrategy { pi: scheme.action_distribution(m), bias }
}

/// The action-recommendation LP together with its variable layout.
#[derive(Clone, Debug)]
pub struct ActRecLp {
    pub lp: LinearProgram,
    n: usize,
    m: usize,
}

impl ActRecLp {
    pub fn pi_var(&self, i: usize, a: usize) -> usize {
        i * self.m + a
    }

    pub fn bias_plus_var(&self, a: usize) -> usize {
        self.n * self.m + a
    }

    pub fn bias_minus_var(&self, a: usize) -> usize {
        self.n * self.m + self.m + a
    }
}

/// Builds the action-recommendation LP for `t ∈ {1, ∞}`.
///
/// Incentive constraints are written against each action's best-response
/// interval `[lo_a, hi_a]`: `lo_a·M(a) ≤ Σ_i λ_i π_i(a) θ_i + b(a) ≤ hi_a·M(a)`.
/// This is the pairwise comparison against every other action, folded into
/// two rows, and keeps `-inf` agent utilities out of the coefficients.
pub fn build_actrec_lp(inst: &Instance) -> Result<ActRecLp> {
    let norm = inst.norm();
    if !(norm.is_l1() || norm == Norm::Inf) {
        return Err(Error::UnsupportedNorm(format!("exact solver needs t = 1 or inf, got {norm}")));
    }
    let (n, m) = (inst.n(), inst.m());
    let mut out = ActRecLp { lp: LinearProgram::new(n * m + 2 * m), n, m };
    let (lambda, theta) = (inst.lambda(), inst.theta());

    let mut names = Vec::with_capacity(n * m + 2 * m);
    for i in 0..n {
        for a in 0..m {
            names.push(format!("pi_{}_{}", i + 1, a + 1));
            let u = lambda[i] * inst.event_utility(i, a);
            out.lp.set_objective_coeff(i * m + a, u);
        }
    }
    names.extend((1..=m).map(|a| format!("bp_{a}")));
    names.extend((1..=m).map(|a| format!("bm_{a}")));
    out.lp.set_var_names(names);

    for i in 0..n {
        let row: Vec<(usize, f64)> = (0..m).map(|a| (out.pi_var(i, a), 1.0)).collect();
        out.lp.add_sparse_constraint(&row, Relation::Eq, 1.0);
    }

    for a in 0..m {
        let (bp, bm) = (out.bias_plus_var(a), out.bias_minus_var(a));
        let Some((lo, hi)) = inst.best_response_interval(a) else {
            for i in 0..n {
                let v = out.pi_var(i, a);
                out.lp.set_bounds(v, 0.0, 0.0);
            }
            out.lp.set_bounds(bp, 0.0, 0.0);
            out.lp.set_bounds(bm, 0.0, 0.0);
            continue;
        };
        let mut lower: Vec<(usize, f64)> =
            (0..n).map(|i| (out.pi_var(i, a), lambda[i] * (theta[i] - lo))).collect();
        lower.extend([(bp, 1.0), (bm, -1.0)]);
        out.lp.add_sparse_constraint(&lower, Relation::Ge, 0.0);
        let mut upper: Vec<(usize, f64)> =
            (0..n).map(|i| (out.pi_var(i, a), lambda[i] * (hi - theta[i]))).collect();
        upper.extend([(bp, -1.0), (bm, 1.0)]);
        out.lp.add_sparse_constraint(&upper, Relation::Ge, 0.0);
    }

    let eps = inst.epsilon();
    if norm == Norm::Inf {
        for a in 0..m {
            let mut row: Vec<(usize, f64)> =
                (0..n).map(|i| (out.pi_var(i, a), -eps * lambda[i])).collect();
            row.extend([(out.bias_plus_var(a), 1.0), (out.bias_minus_var(a), 1.0)]);
            out.lp.add_sparse_constraint(&row, Relation::Le, 0.0);
        }
    } else {
        let row: Vec<(usize, f64)> =
            (0..m).flat_map(|a| [(out.bias_plus_var(a), 1.0), (out.bias_minus_var(a), 1.0)]).collect();
        out.lp.add_sparse_constraint(&row, Relation::Le, eps);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub strategy: SenderStrategy,
    pub predictor: Predictor,
    /// Optimal value of the recommendation LP.
    pub objective: f64,
}

/// Optimal `(ε, ℓ_t)`-calibrated predictor for `t ∈ {1, ∞}`.
///
/// The returned objective is the LP optimum. It equals the predictor's payoff
/// whenever the principal's tie-break does not depend on the event; otherwise
/// the LP may split tied actions at one prediction, and the objective is the
/// supremum approached by predictors that perturb those predictions apart.
pub fn solve_exact(inst: &Instance) -> Result<ExactSolution> {
    let prog = build_actrec_lp(inst)?;
    let sol = lp::solve(&prog.lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "recommendation LP infeasible at budget {}",
                inst.epsilon()
            )))
        }
        LpStatus::Unbounded => {
            return Err(Error::NumericalFailure("recommendation LP reported unbounded".into()))
        }
    }
    let (n, m) = (inst.n(), inst.m());
    let pi: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..m).map(|a| sol.values[prog.pi_var(i, a)].max(0.0)).collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let bias = (0..m)
        .map(|a| sol.values[prog.bias_plus_var(a)] - sol.values[prog.bias_minus_var(a)])
        .collect();
    let strategy = SenderStrategy { pi, bias };
    let predictor = strategy_to_predictor(&strategy, inst)?;
    debug!(
        "exact: objective {} at budget {}, {} predictions",
        sol.objective_value,
        inst.epsilon(),
        predictor.len()
    );
    Ok(ExactSolution { strategy, predictor, objective: sol.objective_value })
}

/// Turns each used recommendation into a prediction at its biased mean.
///
/// Means within `1e-7` of the action's best-response interval are snapped
/// onto it, so the recommended action stays a best response.
pub fn strategy_to_predictor(strat: &SenderStrategy, inst: &Instance) -> Result<Predictor> {
    let n = inst.n();
    let mut support = Vec::new();
    let mut columns: Vec<usize> = Vec::new();
    for a in 0..strat.n_signals() {
        if strat.marginal(inst, a) < MIN_MASS {
            continue;
        }
        let mut p = strat.biased_mean(inst, a).unwrap_or(0.0);
        if a < inst.m() {
            if let Some((lo, hi)) = inst.best_response_interval(a) {
                if p < lo && lo - p <= SNAP_TOL {
                    p = lo;
                } else if p > hi && p - hi <= SNAP_TOL {
                    p = hi;
                }
            }
        }
        if !(-SNAP_TOL..=1.0 + SNAP_TOL).contains(&p) {
            return Err(Error::PreconditionViolation(format!(
                "biased mean {p} of recommendation {a} outside [0,1]"
            )));
        }
        support.push(p.clamp(0.0, 1.0));
        columns.push(a);
    }
    if support.is_empty() {
        return Err(Error::PreconditionViolation("strategy has no mass".into()));
    }
    let mut mass: Vec<Vec<f64>> = (0..n)
        .map(|i| columns.iter().map(|&a| strat.pi[i][a].max(0.0)).collect())
        .collect();
    for row in mass.iter_mut() {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
        } else {
            // Only a zero-weight event can lose all its mass to pruning.
            row[0] = 1.0;
        }
    }
    Predictor::new(support, mass)
}

/// Groups predictions by the action they induce.
pub fn predictor_to_strategy(pred: &Predictor, inst: &Instance) -> SenderStrategy {
    let (n, m) = (inst.n(), inst.m());
    let mut pi = vec![vec![0.0; m]; n];
    let mut bias = vec![0.0; m];
    for k in 0..pred.len() {
        let a = pred.response_at(inst, k).action;
        for (i, row) in pi.iter_mut().enumerate() {
            row[a] += pred.mass()[i][k];
        }
        bias[a] += pred.bias_at(inst, k);
    }
    SenderStrategy { pi, bias }
}
