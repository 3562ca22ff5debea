use pcal::exact::{predictor_to_strategy, solve_exact};
use pcal::fixtures::{two_event, win_win, WIN_WIN_HIGH, WIN_WIN_LOW};
use pcal::fptas::{fptas_solve, plan_to_predictor, BiEventPlan, PlanEntry};
use pcal::model::{agent_payoff, ece, indirect_utility, payoff};
use pcal::structure::{binary_action_optimal, count_predictions};
use pcal::{Instance, Norm, Predictor};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn win_win_case1(eps: f64) -> Predictor {
    let theta1 = win_win(0.0).theta()[0];
    Predictor::from_events(&[
        vec![(WIN_WIN_LOW, 40.0 * eps), (theta1, 1.0 - 40.0 * eps)],
        vec![(WIN_WIN_HIGH, 1.0)],
        vec![(WIN_WIN_HIGH, 1.0)],
    ])
    .unwrap()
}

#[test]
fn win_win_indirect_utility() {
    let inst = win_win(0.0);
    for (p, want) in [(0.0, 5.0), (WIN_WIN_LOW, 5.0), (0.5, 0.0), (WIN_WIN_HIGH, 1.0), (0.95, 1.0), (1.0, 2.0)] {
        for i in 0..3 {
            assert_eq!(indirect_utility(&inst, i, p), want, "U_{i}({p})");
        }
    }
}

#[test]
fn win_win_case_one_predictor() {
    let inst = win_win(0.02);
    let f = win_win_case1(0.02);
    assert!(close(ece(&f, &inst, Norm::L1), 0.02, 1e-12));
    assert!(close(payoff(&f, &inst), 1.75, 1e-12));
    assert!(close(agent_payoff(&f, &inst), -9.999 * 0.02, 1e-4));
}

#[test]
fn win_win_case_two_predictor() {
    let eps = 0.04;
    let inst = win_win(eps);
    let f = Predictor::from_events(&[
        vec![(WIN_WIN_LOW, 1.0)],
        vec![(WIN_WIN_HIGH, 1.0)],
        vec![(WIN_WIN_HIGH, 2.0 - 40.0 * eps), (1.0, 40.0 * eps - 1.0)],
    ])
    .unwrap();
    assert!(ece(&f, &inst, Norm::L1) <= eps + 1e-12);
    assert!(close(payoff(&f, &inst), 10.0 * eps + 1.75, 1e-12));
    assert!(close(agent_payoff(&f, &inst), 99.0 * eps - 2.72498, 1e-4));
}

#[test]
fn win_win_case_six_predictor() {
    let inst = win_win(0.8);
    let f = Predictor::constant(3, WIN_WIN_LOW).unwrap();
    assert!(ece(&f, &inst, Norm::L1) <= 0.8);
    assert_eq!(payoff(&f, &inst), 5.0);
    // every event sees the first action, whose utilities are finite
    let want: f64 = inst
        .lambda()
        .iter()
        .zip(inst.theta())
        .map(|(l, t)| l * (t * inst.agent_utility(0, 1) + (1.0 - t) * inst.agent_utility(0, 0)))
        .sum();
    assert!(close(agent_payoff(&f, &inst), want, 1e-12));
    assert!(close(want, -6.999925, 1e-9));
}

#[test]
fn zero_utilities_pay_nothing() {
    let inst = Instance::with_action_utility(
        vec![0.2, 0.7],
        vec![0.4, 0.6],
        vec![[0.0, 0.0], [0.0, 0.0]],
        &[0.0, 0.0],
        0.1,
        Norm::L1,
    )
    .unwrap();
    let f = Predictor::deterministic(&[0.3, 0.6]).unwrap();
    assert_eq!(payoff(&f, &inst), 0.0);
    assert_eq!(agent_payoff(&f, &inst), 0.0);
}

#[test]
fn pooled_prediction_bias() {
    let inst = win_win(0.0);
    let f = Predictor::constant(3, 0.4).unwrap();
    let strat = predictor_to_strategy(&f, &inst);
    let want: f64 = inst.lambda().iter().zip(inst.theta()).map(|(l, t)| l * (0.4 - t)).sum();
    let used: Vec<f64> = strat.bias.iter().copied().filter(|b| *b != 0.0).collect();
    assert_eq!(used.len(), 1);
    assert!(close(used[0], want, 1e-12));
}

#[test]
fn case_one_exhausts_the_budget() {
    let inst = win_win(0.025);
    let sol = solve_exact(&inst).unwrap();
    assert!(close(sol.strategy.aggregated_bias(&inst, Norm::L1), 0.025, 1e-9));
}

#[test]
fn calibrated_strategies_carry_no_bias() {
    let inst = two_event(0.0, Norm::L1);
    let f = Predictor::constant(2, 0.6).unwrap();
    assert!(predictor_to_strategy(&f, &inst).bias.iter().all(|b| b.abs() <= 1e-12));
}

#[test]
fn split_plan_on_equal_means() {
    let inst = Instance::with_action_utility(
        vec![0.5, 0.5],
        vec![0.5, 0.5],
        vec![[0.0, 0.0], [-0.5, 0.5]],
        &[0.0, 1.0],
        0.375,
        Norm::L1,
    )
    .unwrap();
    let plan = BiEventPlan::new(vec![
        PlanEntry { i: 0, j: 0, q: 0.5, p: 0.125, mass: 0.5 },
        PlanEntry { i: 1, j: 1, q: 0.5, p: 0.875, mass: 0.5 },
    ])
    .unwrap();
    let f = plan_to_predictor(&plan, &inst).unwrap();
    assert_eq!(f.mass()[0][f.position(0.125).unwrap()], 1.0);
    assert_eq!(f.mass()[1][f.position(0.875).unwrap()], 1.0);
    assert!(close(ece(&f, &inst, Norm::L1), 0.375, 1e-12));
}

#[test]
fn fptas_on_case_two() {
    let inst = win_win(0.04);
    let sol = fptas_solve(&inst, 0.1).unwrap();
    assert!(sol.payoff >= 0.9 * 2.15);
    assert!(ece(&sol.predictor, &inst, Norm::L1) <= 0.04 + 1e-7);
}

#[test]
fn binary_high_budget_pools_everything() {
    // threshold 0.6, prior mean 0.47
    let inst = Instance::with_action_utility(
        vec![0.1, 0.4, 0.8],
        vec![0.3, 0.3, 0.4],
        vec![[0.0, 0.0], [-0.6, 0.4]],
        &[0.0, 1.0],
        0.2,
        Norm::L1,
    )
    .unwrap();
    let f = binary_action_optimal(&inst).unwrap();
    assert_eq!(f.len(), 1);
    assert!(close(f.support()[0], 0.6, 1e-12));
    assert!(close(ece(&f, &inst, Norm::L1), 0.13, 1e-12));
    assert!(close(payoff(&f, &inst), 1.0, 1e-12));
}

#[test]
fn revealing_counts() {
    let inst = two_event(0.0, Norm::L1);
    let f = Predictor::deterministic(inst.theta()).unwrap();
    let c = count_predictions(&f, &inst);
    assert_eq!((c.total, c.max_per_event, c.max_per_kappa), (2, 1, 1));
}
