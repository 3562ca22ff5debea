//! Problem instances, predictors and the primitive evaluations on them.
//!
//! An [`Instance`] holds the outcome means `theta`, the event prior `lambda`,
//! the principal's per-event utility table, the agent's utility table, the
//! ECE budget and the norm. A [`Predictor`] is a finite family of per-event
//! distributions over prediction values.
//!
//! Agent utilities may be `-inf`. On ingestion every value at or below the
//! instance sentinel (default `-1e9`) becomes `f64::NEG_INFINITY`, and expected
//! utilities saturate: a zero-probability outcome contributes nothing even if
//! its utility is `-inf`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for comparisons of utilities and probabilities.
pub const TOL: f64 = 1e-9;
/// Prediction values closer than this are the same support point.
pub const MERGE_TOL: f64 = 1e-12;
/// Default threshold below which an agent utility is read as `-inf`.
pub const DEFAULT_SENTINEL: f64 = -1e9;

const PRIOR_TOL: f64 = 1e-12;
const ROW_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Norm {
    /// Finite exponent `t >= 1`.
    L(f64),
    Inf,
}

impl Norm {
    pub const L1: Norm = Norm::L(1.0);

    pub fn exponent(self) -> Option<f64> {
        match self {
            Norm::L(t) => Some(t),
            Norm::Inf => None,
        }
    }

    pub fn is_l1(self) -> bool {
        matches!(self, Norm::L(t) if t == 1.0)
    }

    pub fn validate(self) -> Result<Norm> {
        match self {
            Norm::L(t) if t == f64::INFINITY => Ok(Norm::Inf),
            Norm::L(t) if t.is_nan() || t < 1.0 => {
                Err(Error::BadNorm(format!("exponent must be >= 1, got {t}")))
            }
            n => Ok(n),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::L(t) => write!(f, "{t}"),
            Norm::Inf => write!(f, "inf"),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Norm> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "max") {
            return Ok(Norm::Inf);
        }
        let t: f64 = s
            .parse()
            .map_err(|_| Error::BadNorm(format!("cannot parse norm '{s}'")))?;
        Norm::L(t).validate()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NormRepr {
    Exponent(f64),
    Name(String),
}

impl Serialize for Norm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Norm::L(t) => NormRepr::Exponent(t).serialize(s),
            Norm::Inf => NormRepr::Name("inf".into()).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Norm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Norm, D::Error> {
        let norm = match NormRepr::deserialize(d)? {
            NormRepr::Exponent(t) => Norm::L(t).validate(),
            NormRepr::Name(s) => s.parse(),
        };
        norm.map_err(serde::de::Error::custom)
    }
}

/// A utility entry in JSON: a number, or the string `"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityValue(pub f64);

impl Serialize for UtilityValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for UtilityValue {
    fn deserialize<D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<UtilityValue, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(UtilityValue(x)),
            Repr::Name(s) => match s.trim().to_ascii_lowercase().as_str() {
                "-inf" | "-infinity" => Ok(UtilityValue(f64::NEG_INFINITY)),
                _ => Err(serde::de::Error::custom(format!(
                    "utility must be a number or \"-inf\", got \"{s}\""
                ))),
            },
        }
    }
}

/// Instance as it appears on disk, before validation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawInstance {
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub actions: Vec<String>,
    /// `action -> [v(a,0), v(a,1)]`
    pub agent_utility: BTreeMap<String, [UtilityValue; 2]>,
    /// Per event, `action -> [u(a,0), u(a,1)]`.
    pub principal_utility: Vec<BTreeMap<String, [f64; 2]>>,
    pub epsilon: f64,
    pub norm: Norm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neg_inf_sentinel: Option<f64>,
}

/// A validated problem instance. Events are sorted by outcome mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct Instance {
    theta: Vec<f64>,
    lambda: Vec<f64>,
    actions: Vec<String>,
    agent: Vec<[f64; 2]>,
    principal: Vec<Vec<[f64; 2]>>,
    epsilon: f64,
    norm: Norm,
    sentinel: f64,
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Instance> {
        validate_instance(raw)
    }
}

impl From<Instance> for RawInstance {
    fn from(inst: Instance) -> RawInstance {
        let agent_utility = inst
            .actions
            .iter()
            .zip(&inst.agent)
            .map(|(name, v)| (name.clone(), [UtilityValue(v[0]), UtilityValue(v[1])]))
            .collect();
        let principal_utility = inst
            .principal
            .iter()
            .map(|row| inst.actions.iter().cloned().zip(row.iter().copied()).collect())
            .collect();
        RawInstance {
            theta: inst.theta,
            lambda: inst.lambda,
            actions: inst.actions,
            agent_utility,
            principal_utility,
            epsilon: inst.epsilon,
            norm: inst.norm,
            neg_inf_sentinel: (inst.sentinel != DEFAULT_SENTINEL).then_some(inst.sentinel),
        }
    }
}

/// Validates a raw description, sorts events by outcome mean and maps
/// sentinel agent utilities to `-inf`.
pub fn validate_instance(raw: RawInstance) -> Result<Instance> {
    let m = raw.actions.len();
    let mut agent = Vec::with_capacity(m);
    for name in &raw.actions {
        let v = raw
            .agent_utility
            .get(name)
            .ok_or_else(|| Error::BadInstance(format!("no agent utility for action '{name}'")))?;
        agent.push([v[0].0, v[1].0]);
    }
    if let Some(extra) = raw.agent_utility.keys().find(|k| !raw.actions.contains(k)) {
        return Err(Error::BadInstance(format!("agent utility for unknown action '{extra}'")));
    }
    let mut principal = Vec::with_capacity(raw.principal_utility.len());
    for (i, row) in raw.principal_utility.iter().enumerate() {
        let mut out = Vec::with_capacity(m);
        for name in &raw.actions {
            let u = row.get(name).ok_or_else(|| {
                Error::BadInstance(format!("event {i}: no principal utility for '{name}'"))
            })?;
            out.push(*u);
        }
        if let Some(extra) = row.keys().find(|k| !raw.actions.contains(k)) {
            return Err(Error::BadInstance(format!(
                "event {i}: principal utility for unknown action '{extra}'"
            )));
        }
        principal.push(out);
    }
    build(
        raw.theta,
        raw.lambda,
        raw.actions,
        agent,
        principal,
        raw.epsilon,
        raw.norm,
        raw.neg_inf_sentinel.unwrap_or(DEFAULT_SENTINEL),
    )
}

#[allow(clippy::too_many_arguments)]
fn build(
    theta: Vec<f64>,
    lambda: Vec<f64>,
    actions: Vec<String>,
    mut agent: Vec<[f64; 2]>,
    principal: Vec<Vec<[f64; 2]>>,
    epsilon: f64,
    norm: Norm,
    sentinel: f64,
) -> Result<Instance> {
    let n = theta.len();
    let m = actions.len();
    if n == 0 {
        return Err(Error::BadInstance("at least one event is required".into()));
    }
    if m == 0 {
        return Err(Error::BadInstance("at least one action is required".into()));
    }
    if lambda.len() != n || principal.len() != n {
        return Err(Error::BadInstance(format!(
            "{n} outcome means but {} prior weights and {} utility rows",
            lambda.len(),
            principal.len()
        )));
    }
    if agent.len() != m || principal.iter().any(|row| row.len() != m) {
        return Err(Error::BadInstance("utility tables do not match the action set".into()));
    }
    for (a, name) in actions.iter().enumerate() {
        if actions[..a].contains(name) {
            return Err(Error::BadInstance(format!("duplicate action '{name}'")));
        }
    }
    if let Some(t) = theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::BadMean(format!("{t}")));
    }
    if let Some(l) = lambda.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::BadPrior(format!("negative or non-finite weight {l}")));
    }
    let total: f64 = lambda.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOL {
        return Err(Error::BadPrior(format!("weights sum to {total}")));
    }
    for (i, row) in principal.iter().enumerate() {
        for (a, u) in row.iter().enumerate() {
            if u.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::NegativeUtility(format!(
                    "event {i}, action '{}': {:?}",
                    actions[a], u
                )));
            }
        }
    }
    if !sentinel.is_finite() {
        return Err(Error::BadInstance("sentinel must be finite".into()));
    }
    for (a, v) in agent.iter_mut().enumerate() {
        for x in v.iter_mut() {
            if x.is_nan() || *x == f64::INFINITY {
                return Err(Error::BadInstance(format!(
                    "agent utility of '{}' must be a number or -inf",
                    actions[a]
                )));
            }
            if *x <= sentinel {
                *x = f64::NEG_INFINITY;
            }
        }
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::BadInstance(format!("ECE budget must be >= 0, got {epsilon}")));
    }
    let norm = norm.validate()?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| theta[x].total_cmp(&theta[y]));
    Ok(Instance {
        theta: order.iter().map(|&i| theta[i]).collect(),
        lambda: order.iter().map(|&i| lambda[i]).collect(),
        principal: order.iter().map(|&i| principal[i].clone()).collect(),
        actions,
        agent,
        epsilon,
        norm,
        sentinel,
    })
}

/// The agent's reaction to a single prediction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentResponse {
    pub prediction: f64,
    pub action: usize,
    pub tied_actions: Vec<usize>,
}

impl Instance {
    /// Builds an instance with actions named `a1..am`.
    ///
    /// `agent_utility[a] = [v(a,0), v(a,1)]` and
    /// `principal_utility[i][a] = [u_i(a,0), u_i(a,1)]`.
    pub fn new(
        theta: Vec<f64>,
        lambda: Vec<f64>,
        agent_utility: Vec<[f64; 2]>,
        principal_utility: Vec<Vec<[f64; 2]>>,
        epsilon: f64,
        norm: Norm,
    ) -> Result<Instance> {
        let actions = (1..=agent_utility.len()).map(|a| format!("a{a}")).collect();
        build(
            theta,
            lambda,
            actions,
            agent_utility,
            principal_utility,
            epsilon,
            norm,
            DEFAULT_SENTINEL,
        )
    }

    /// Same tables with a different action-independent principal utility per
    /// action: `u_i(a,y) = utility[a]` for every event and outcome.
    pub fn with_action_utility(
        theta: Vec<f64>,
        lambda: Vec<f64>,
        agent_utility: Vec<[f64; 2]>,
        utility: &[f64],
        epsilon: f64,
        norm: Norm,
    ) -> Result<Instance> {
        let row: Vec<[f64; 2]> = utility.iter().map(|&u| [u, u]).collect();
        let principal = vec![row; theta.len()];
        Instance::new(theta, lambda, agent_utility, principal, epsilon, norm)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Instance> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::BadInstance(format!("ECE budget must be >= 0, got {epsilon}")));
        }
        Ok(Instance { epsilon, ..self.clone() })
    }

    pub fn with_norm(&self, norm: Norm) -> Result<Instance> {
        Ok(Instance { norm: norm.validate()?, ..self.clone() })
    }

    pub fn with_actions(mut self, names: Vec<String>) -> Result<Instance> {
        if names.len() != self.m() {
            return Err(Error::BadInstance("wrong number of action names".into()));
        }
        self.actions = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn m(&self) -> usize {
        self.actions.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn sentinel(&self) -> f64 {
        self.sentinel
    }

    /// `v(a, y)`, possibly `-inf`.
    pub fn agent_utility(&self, a: usize, y: usize) -> f64 {
        self.agent[a][y]
    }

    pub fn principal_utility(&self, i: usize, a: usize, y: usize) -> f64 {
        self.principal[i][a][y]
    }

    /// Mean outcome under the prior.
    pub fn prior_mean(&self) -> f64 {
        self.lambda.iter().zip(&self.theta).map(|(l, t)| l * t).sum()
    }

    /// Agent's expected utility of `a` when the outcome is 1 with probability `p`.
    pub fn agent_value(&self, a: usize, p: f64) -> f64 {
        mix(self.agent[a], p)
    }

    /// `θ_i u_i(a,1) + (1 − θ_i) u_i(a,0)`.
    pub fn event_utility(&self, i: usize, a: usize) -> f64 {
        mix(self.principal[i][a], self.theta[i])
    }

    /// `θ_i v(a,1) + (1 − θ_i) v(a,0)`, saturating.
    pub fn event_agent_utility(&self, i: usize, a: usize) -> f64 {
        mix(self.agent[a], self.theta[i])
    }

    /// Actions maximizing the agent's expected utility at `p`.
    pub fn tied_actions(&self, p: f64) -> Vec<usize> {
        let values: Vec<f64> = (0..self.m()).map(|a| self.agent_value(a, p)).collect();
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best == f64::NEG_INFINITY {
            return (0..self.m()).collect();
        }
        (0..self.m()).filter(|&a| values[a] >= best - TOL).collect()
    }

    /// Best response to a bare prediction. Ties go to the action with the
    /// highest prior-weighted principal utility, then to the lowest index.
    pub fn best_response(&self, p: f64) -> AgentResponse {
        self.best_response_weighted(p, &self.lambda)
    }

    /// Best response with ties broken by `Σ_i weights[i] · Ū_i(a)`; pass the
    /// posterior weights `λ_i f_i(p)` when a predictor is in context.
    pub fn best_response_weighted(&self, p: f64, weights: &[f64]) -> AgentResponse {
        let tied = self.tied_actions(p);
        let weights = if weights.iter().any(|w| *w > 0.0) { weights } else { &self.lambda };
        let mut action = tied[0];
        let mut best = f64::NEG_INFINITY;
        for &a in &tied {
            let score: f64 = weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| w * self.event_utility(i, a))
                .sum();
            if score > best + 1e-12 {
                best = score;
                action = a;
            }
        }
        AgentResponse { prediction: p, action, tied_actions: tied }
    }

    /// `U_i(p)` under the bare-prediction tie-break.
    pub fn indirect_utility(&self, i: usize, p: f64) -> f64 {
        self.event_utility(i, self.best_response(p).action)
    }

    /// Closed hull of the predictions at which `a` is among the agent's best
    /// responses, or `None` if there are none.
    pub fn best_response_interval(&self, a: usize) -> Option<(f64, f64)> {
        let [v0, v1] = self.agent[a];
        let interior_finite = |b: usize| self.agent[b].iter().all(|x| x.is_finite());
        if interior_finite(a) {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for b in (0..self.m()).filter(|&b| b != a && interior_finite(b)) {
                let d0 = v0 - self.agent[b][0];
                let slope = (v1 - self.agent[b][1]) - d0;
                if slope.abs() < 1e-12 {
                    if d0 < -TOL {
                        return None;
                    }
                } else if slope > 0.0 {
                    lo = lo.max(-d0 / slope);
                } else {
                    hi = hi.min(-d0 / slope);
                }
            }
            return (lo <= hi).then_some((lo, hi));
        }
        if (0..self.m()).all(|b| !interior_finite(b)) {
            return Some((0.0, 1.0));
        }
        let at = |p: f64| self.tied_actions(p).contains(&a);
        match (at(0.0), at(1.0)) {
            (true, _) => Some((0.0, 0.0)),
            (false, true) => Some((1.0, 1.0)),
            _ => None,
        }
    }

    /// Points in `[0,1]` where the agent's argmax set changes.
    pub fn discontinuities(&self) -> Vec<f64> {
        let m = self.m();
        let mut candidates = vec![0.0, 1.0];
        for a in 0..m {
            for b in a + 1..m {
                let (va, vb) = (self.agent[a], self.agent[b]);
                if va.iter().chain(vb.iter()).any(|x| !x.is_finite()) {
                    continue;
                }
                let d0 = va[0] - vb[0];
                let slope = (va[1] - vb[1]) - d0;
                if slope.abs() > 1e-15 {
                    let z = -d0 / slope;
                    if (0.0..=1.0).contains(&z) {
                        candidates.push(z);
                    }
                }
            }
        }
        candidates.sort_by(f64::total_cmp);
        candidates.dedup_by(|x, y| (*x - *y).abs() <= MERGE_TOL);
        candidates
            .into_iter()
            .filter(|&z| {
                let here = self.tied_actions(z);
                (z > 0.0 && self.one_sided_argmax(z, false) != here)
                    || (z < 1.0 && self.one_sided_argmax(z, true) != here)
            })
            .collect()
    }

    /// Argmax set on a small open interval to the right (or left) of `z`.
    fn one_sided_argmax(&self, z: f64, right: bool) -> Vec<usize> {
        let live: Vec<usize> = (0..self.m())
            .filter(|&a| self.agent[a].iter().all(|x| x.is_finite()))
            .collect();
        if live.is_empty() {
            return (0..self.m()).collect();
        }
        let key = |a: usize| {
            let slope = self.agent[a][1] - self.agent[a][0];
            (self.agent_value(a, z), if right { slope } else { -slope })
        };
        let best_value = live.iter().map(|&a| key(a).0).fold(f64::NEG_INFINITY, f64::max);
        let top: Vec<usize> =
            live.iter().copied().filter(|&a| key(a).0 >= best_value - TOL).collect();
        let best_slope = top.iter().map(|&a| key(a).1).fold(f64::NEG_INFINITY, f64::max);
        top.into_iter().filter(|&a| key(a).1 >= best_slope - TOL).collect()
    }

    /// The event prior as a distribution over outcome means, sorted, with
    /// events sharing a mean merged.
    pub fn prior_over_means(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (t, l) in self.theta.iter().zip(&self.lambda) {
            match out.last_mut() {
                Some(last) if (last.0 - t).abs() <= MERGE_TOL => last.1 += l,
                _ => out.push((*t, *l)),
            }
        }
        out
    }
}

/// `p·x[1] + (1−p)·x[0]` where zero-probability terms vanish even at `-inf`.
fn mix(x: [f64; 2], p: f64) -> f64 {
    let hi = if p > 0.0 { p * x[1] } else { 0.0 };
    let lo = if p < 1.0 { (1.0 - p) * x[0] } else { 0.0 };
    hi + lo
}

pub fn best_response(inst: &Instance, p: f64) -> AgentResponse {
    inst.best_response(p)
}

pub fn indirect_utility(inst: &Instance, i: usize, p: f64) -> f64 {
    inst.indirect_utility(i, p)
}

/// Per-event distributions over a shared, sorted support of predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredictorRepr", into = "PredictorRepr")]
pub struct Predictor {
    support: Vec<f64>,
    /// `mass[i][k] = f_i(support[k])`
    mass: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictorRepr {
    pub support: Vec<f64>,
    pub mass: Vec<Vec<f64>>,
}

impl TryFrom<PredictorRepr> for Predictor {
    type Error = Error;

    fn try_from(r: PredictorRepr) -> Result<Predictor> {
        Predictor::new(r.support, r.mass)
    }
}

impl From<Predictor> for PredictorRepr {
    fn from(p: Predictor) -> PredictorRepr {
        PredictorRepr { support: p.support, mass: p.mass }
    }
}

impl Predictor {
    /// Validates, sorts and merges support points within `1e-12`; points
    /// carrying no mass for any event are dropped.
    pub fn new(support: Vec<f64>, mass: Vec<Vec<f64>>) -> Result<Predictor> {
        if mass.is_empty() {
            return Err(Error::BadPredictor("no events".into()));
        }
        let k = support.len();
        if let Some(i) = mass.iter().position(|row| row.len() != k) {
            return Err(Error::BadPredictor(format!(
                "event {i} has {} masses for {k} support points",
                mass[i].len()
            )));
        }
        let mut support = support;
        for p in support.iter_mut() {
            if !(p.is_finite() && *p >= -MERGE_TOL && *p <= 1.0 + MERGE_TOL) {
                return Err(Error::BadPredictor(format!("prediction {p} outside [0,1]")));
            }
            *p = p.clamp(0.0, 1.0);
        }
        let mut mass = mass;
        for (i, row) in mass.iter_mut().enumerate() {
            for x in row.iter_mut() {
                if !(x.is_finite() && *x >= -MERGE_TOL) {
                    return Err(Error::BadPredictor(format!("event {i}: bad mass {x}")));
                }
                *x = x.max(0.0);
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOL {
                return Err(Error::BadPredictor(format!("event {i}: masses sum to {total}")));
            }
        }

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| support[x].total_cmp(&support[y]));
        let mut out_support: Vec<f64> = Vec::new();
        let mut out_mass: Vec<Vec<f64>> = vec![Vec::new(); mass.len()];
        for &j in &order {
            let merge = matches!(out_support.last(), Some(last) if support[j] - last <= MERGE_TOL);
            if merge {
                for (row, src) in out_mass.iter_mut().zip(&mass) {
                    *row.last_mut().unwrap() += src[j];
                }
            } else {
                out_support.push(support[j]);
                for (row, src) in out_mass.iter_mut().zip(&mass) {
                    row.push(src[j]);
                }
            }
        }
        let keep: Vec<usize> = (0..out_support.len())
            .filter(|&c| out_mass.iter().any(|row| row[c] > 0.0))
            .collect();
        Ok(Predictor {
            support: keep.iter().map(|&c| out_support[c]).collect(),
            mass: out_mass.iter().map(|row| keep.iter().map(|&c| row[c]).collect()).collect(),
        })
    }

    /// Builds from per-event lists of `(prediction, mass)`.
    pub fn from_events(events: &[Vec<(f64, f64)>]) -> Result<Predictor> {
        let support: Vec<f64> = events.iter().flatten().map(|(p, _)| *p).collect();
        let mut mass = vec![vec![0.0; support.len()]; events.len()];
        let mut col = 0;
        for (i, ev) in events.iter().enumerate() {
            for (_, w) in ev {
                mass[i][col] = *w;
                col += 1;
            }
        }
        Predictor::new(support, mass)
    }

    /// Every event predicts `p` deterministically.
    pub fn constant(n: usize, p: f64) -> Result<Predictor> {
        Predictor::new(vec![p], vec![vec![1.0]; n])
    }

    /// Event `i` predicts `points[i]` deterministically.
    pub fn deterministic(points: &[f64]) -> Result<Predictor> {
        let events: Vec<Vec<(f64, f64)>> = points.iter().map(|&p| vec![(p, 1.0)]).collect();
        Predictor::from_events(&events)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn mass(&self) -> &[Vec<f64>] {
        &self.mass
    }

    pub fn n_events(&self) -> usize {
        self.mass.len()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Index of `p` in the support, matched within `1e-12`.
    pub fn position(&self, p: f64) -> Option<usize> {
        self.support.iter().position(|s| (s - p).abs() <= MERGE_TOL)
    }

    /// Support size of event `i`'s distribution.
    pub fn event_support_size(&self, i: usize) -> usize {
        self.mass[i].iter().filter(|x| **x > 0.0).count()
    }

    pub fn check_compatible(&self, inst: &Instance) -> Result<()> {
        if self.n_events() != inst.n() {
            return Err(Error::BadPredictor(format!(
                "predictor has {} events, instance has {}",
                self.n_events(),
                inst.n()
            )));
        }
        Ok(())
    }

    /// `λ_i f_i(p_k)` for every event.
    pub fn weights_at(&self, inst: &Instance, k: usize) -> Vec<f64> {
        assert_eq!(self.n_events(), inst.n(), "predictor and instance disagree on n");
        inst.lambda().iter().zip(&self.mass).map(|(l, row)| l * row[k]).collect()
    }

    /// Marginal mass `f(p_k) = Σ_i λ_i f_i(p_k)`.
    pub fn marginal_at(&self, inst: &Instance, k: usize) -> f64 {
        self.weights_at(inst, k).iter().sum()
    }

    /// `Σ_i λ_i f_i(p_k) (p_k − θ_i)`, the signed unnormalized miscalibration.
    pub fn bias_at(&self, inst: &Instance, k: usize) -> f64 {
        let p = self.support[k];
        self.weights_at(inst, k).iter().zip(inst.theta()).map(|(w, t)| w * (p - t)).sum()
    }

    /// `κ(p_k)`, or `None` without marginal mass.
    pub fn kappa_at(&self, inst: &Instance, k: usize) -> Option<f64> {
        let w = self.weights_at(inst, k);
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| {
            let k: f64 = w.iter().zip(inst.theta()).map(|(w, t)| w * t).sum::<f64>() / total;
            k.clamp(inst.theta()[0], inst.theta()[inst.n() - 1])
        })
    }

    /// Agent response at support point `k` with the posterior tie-break.
    pub fn response_at(&self, inst: &Instance, k: usize) -> AgentResponse {
        inst.best_response_weighted(self.support[k], &self.weights_at(inst, k))
    }
}

pub fn kappa(pred: &Predictor, inst: &Instance, p: f64) -> Result<f64> {
    pred.position(p).and_then(|k| pred.kappa_at(inst, k)).ok_or(Error::ZeroMass(p))
}

/// `Σ_p f(p) |κ(p) − p|^t`, the ECE raised to the power `t`.
pub fn ece_power(pred: &Predictor, inst: &Instance, t: f64) -> f64 {
    (0..pred.len())
        .filter_map(|k| {
            let f = pred.marginal_at(inst, k);
            (f > 0.0).then(|| {
                let gap = pred.bias_at(inst, k).abs();
                if t == 1.0 {
                    gap
                } else {
                    f * (gap / f).powf(t)
                }
            })
        })
        .sum()
}

/// Expected calibration error under the given norm.
pub fn ece(pred: &Predictor, inst: &Instance, norm: Norm) -> f64 {
    match norm {
        Norm::L(t) if t == 1.0 => ece_power(pred, inst, 1.0),
        Norm::L(t) => ece_power(pred, inst, t).powf(1.0 / t),
        Norm::Inf => (0..pred.len())
            .filter_map(|k| {
                let f = pred.marginal_at(inst, k);
                (f > 0.0).then(|| (pred.bias_at(inst, k) / f).abs())
            })
            .fold(0.0, f64::max),
    }
}

/// Principal's expected utility.
pub fn payoff(pred: &Predictor, inst: &Instance) -> f64 {
    (0..pred.len())
        .map(|k| {
            let a = pred.response_at(inst, k).action;
            pred.weights_at(inst, k)
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| w * inst.event_utility(i, a))
                .sum::<f64>()
        })
        .sum()
}

/// Agent's expected utility; may be `-inf`.
pub fn agent_payoff(pred: &Predictor, inst: &Instance) -> f64 {
    (0..pred.len())
        .map(|k| {
            let a = pred.response_at(inst, k).action;
            pred.weights_at(inst, k)
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| w * inst.event_agent_utility(i, a))
                .sum::<f64>()
        })
        .sum()
}
