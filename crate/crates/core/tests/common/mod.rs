#![allow(dead_code)]

use pcal::fptas::{BiEventPlan, PlanEntry};
use pcal::{Instance, Norm, Predictor};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point on the `k`-simplex.
pub fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn sorted_means(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut theta: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    theta.sort_by(f64::total_cmp);
    theta
}

fn agent_table(rng: &mut ChaCha8Rng, m: usize) -> Vec<[f64; 2]> {
    (0..m).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
}

/// Event-dependent principal utilities in `[0,1]`.
pub fn general_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, eps: f64, norm: Norm) -> Instance {
    let theta = sorted_means(rng, n);
    let lambda = simplex(rng, n);
    let agent = agent_table(rng, m);
    let principal = (0..n)
        .map(|_| (0..m).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect())
        .collect();
    Instance::new(theta, lambda, agent, principal, eps, norm).unwrap()
}

/// Two actions; the agent switches to the second at a random threshold, and
/// only the second is worth anything to the principal.
pub fn binary_instance(rng: &mut ChaCha8Rng, n: usize, eps: f64) -> Instance {
    let theta = sorted_means(rng, n);
    let lambda = simplex(rng, n);
    let threshold: f64 = rng.random_range(0.05..0.95);
    let scale: f64 = rng.random_range(0.5..2.0);
    let value: f64 = rng.random_range(0.1..3.0);
    let agent = vec![[0.0, 0.0], [-threshold * scale, (1.0 - threshold) * scale]];
    Instance::with_action_utility(theta, lambda, agent, &[0.0, value], eps, Norm::L1).unwrap()
}

/// Arbitrary predictor with up to `max_support` predictions, some of them
/// shared between events.
pub fn random_predictor(rng: &mut ChaCha8Rng, n: usize, max_support: usize) -> Predictor {
    let k = rng.random_range(1..=max_support);
    let support: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let mass = (0..n)
        .map(|_| {
            let used = rng.random_range(1..=k);
            let idx = sample(rng, k, used);
            let w = simplex(rng, used);
            let mut row = vec![0.0; k];
            for (s, x) in idx.iter().zip(w) {
                row[s] = x;
            }
            row
        })
        .collect();
    Predictor::new(support, mass).unwrap()
}

/// Random bi-event plan over the given means whose predictions are drawn by
/// `pick`. Every event gets a diagonal atom so that all supplies are positive.
pub fn random_plan(
    rng: &mut ChaCha8Rng,
    theta: &[f64],
    atoms: usize,
    mut pick: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> BiEventPlan {
    let n = theta.len();
    let mut entries = Vec::new();
    for i in 0..n {
        let p = pick(rng);
        entries.push(PlanEntry { i, j: i, q: theta[i], p, mass: rng.random_range(0.05..1.0) });
    }
    for _ in 0..atoms {
        let i = rng.random_range(0..n);
        let j = rng.random_range(i..n);
        let q = if theta[j] - theta[i] <= 1e-12 {
            theta[i]
        } else {
            rng.random_range(theta[i]..=theta[j])
        };
        let p = pick(rng);
        entries.push(PlanEntry { i, j, q, p, mass: rng.random_range(0.0..1.0) });
    }
    let total: f64 = entries.iter().map(|e| e.mass).sum();
    entries.iter_mut().for_each(|e| e.mass /= total);
    BiEventPlan::new(entries).unwrap()
}

/// The instance `base` with its prior replaced by the plan's supply and its
/// budget set to the plan's own miscalibration.
pub fn instance_for_plan(base: &Instance, plan: &BiEventPlan) -> Instance {
    let t = base.norm().exponent().unwrap();
    let lambda = plan.supply(base);
    let s: f64 = lambda.iter().sum();
    let lambda: Vec<f64> = lambda.into_iter().map(|x| x / s).collect();
    let agent = (0..base.m()).map(|a| [base.agent_utility(a, 0), base.agent_utility(a, 1)]).collect();
    let principal = (0..base.n())
        .map(|i| {
            (0..base.m())
                .map(|a| [base.principal_utility(i, a, 0), base.principal_utility(i, a, 1)])
                .collect()
        })
        .collect();
    let eps = plan.ece_power(t).powf(1.0 / t);
    Instance::new(base.theta().to_vec(), lambda, agent, principal, eps, base.norm()).unwrap()
}

/// Principal's payoff computed directly from the definition: pool each
/// prediction, let the agent respond, and break ties in the principal's
/// favour with the posterior weights.
pub fn reference_payoff(pred: &Predictor, inst: &Instance) -> f64 {
    let mut total = 0.0;
    for (k, &p) in pred.support().iter().enumerate() {
        let w: Vec<f64> = (0..inst.n()).map(|i| inst.lambda()[i] * pred.mass()[i][k]).collect();
        if w.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let vals: Vec<f64> = (0..inst.m())
            .map(|a| p * inst.agent_utility(a, 1) + (1.0 - p) * inst.agent_utility(a, 0))
            .collect();
        let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let value = |a: usize| -> f64 {
            (0..inst.n())
                .map(|i| {
                    let th = inst.theta()[i];
                    w[i] * (th * inst.principal_utility(i, a, 1)
                        + (1.0 - th) * inst.principal_utility(i, a, 0))
                })
                .sum()
        };
        total += (0..inst.m())
            .filter(|&a| vals[a] >= best - 1e-9)
            .map(value)
            .fold(f64::NEG_INFINITY, f64::max);
    }
    total
}

/// Principal utility depends on the action alone, so the indirect utility
/// and all tie-breaks are the same for every event.
pub fn event_independent_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, eps: f64, norm: Norm) -> Instance {
    let theta = sorted_means(rng, n);
    let lambda = simplex(rng, n);
    let agent = agent_table(rng, m);
    let values: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    Instance::with_action_utility(theta, lambda, agent, &values, eps, norm).unwrap()
}
