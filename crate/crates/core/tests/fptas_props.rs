mod common;

use common::*;
use pcal::exact::solve_exact;
use pcal::fptas::{build_grid, discontinuities, fptas_solve, plan_to_predictor, round_plan};
use pcal::model::{ece, ece_power, payoff};
use pcal::Norm;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn supply_conserves_mass(seed in any::<u64>(), n in 1usize..=5) {
        let mut rng = rng(seed);
        let inst = general_instance(&mut rng, n, 2, 0.0, Norm::L1);
        let plan = random_plan(&mut rng, inst.theta(), 8, |r| r.random::<f64>());
        let supplied: f64 = plan.supply(&inst).iter().sum();
        prop_assert!((supplied - plan.total_mass()).abs() <= 1e-12);
        prop_assert!((supplied - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn predictor_ece_is_bounded_by_the_plan(seed in any::<u64>(), n in 1usize..=4, t in 1.0f64..4.0) {
        let mut rng = rng(seed);
        let base = general_instance(&mut rng, n, 2, 0.0, Norm::L(t));
        let plan = random_plan(&mut rng, base.theta(), 6, |r| r.random::<f64>());
        let inst = instance_for_plan(&base, &plan);
        let f = plan_to_predictor(&plan, &inst).unwrap();
        prop_assert!(ece_power(&f, &inst, t) <= plan.ece_power(t) + 1e-9);
        prop_assert!(ece(&f, &inst, Norm::L(t)) <= inst.epsilon() + 1e-7);
    }

    #[test]
    fn predictor_pays_the_plan_objective(seed in any::<u64>(), n in 1usize..=4, m in 2usize..=3) {
        let mut rng = rng(seed);
        let base = general_instance(&mut rng, n, m, 0.0, Norm::L1);
        let plan = random_plan(&mut rng, base.theta(), 6, |r| r.random::<f64>());
        let inst = instance_for_plan(&base, &plan);
        let f = plan_to_predictor(&plan, &inst).unwrap();
        // random predictions avoid ties almost surely
        prop_assert!((payoff(&f, &inst) - plan.objective(&inst)).abs() <= 1e-9);
    }

    #[test]
    fn rounding_stays_feasible(seed in any::<u64>(), n in 1usize..=3, m in 2usize..=3, delta in 0.02f64..0.3, t in 1.0f64..3.0) {
        let mut rng = rng(seed);
        let base = general_instance(&mut rng, n, m, 0.0, Norm::L(t));
        let mut anchors = discontinuities(&base);
        anchors.extend_from_slice(base.theta());
        let plan = random_plan(&mut rng, base.theta(), 5, |r| anchors[r.random_range(0..anchors.len())]);
        let inst = instance_for_plan(&base, &plan);
        let grid = build_grid(&inst, delta).unwrap();
        let out = round_plan(&plan, &inst, &grid).unwrap();
        prop_assert!(out.check(&inst).is_ok());
        for e in out.entries() {
            prop_assert!(grid.contains(e.q) && grid.contains(e.p));
        }
        for (s, l) in out.supply(&inst).iter().zip(inst.lambda()) {
            prop_assert!((s - l).abs() <= 1e-7);
        }
        prop_assert!(out.ece_power(t) <= inst.epsilon().powf(t) + 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn l1_ratio_against_exact(seed in any::<u64>(), n in 1usize..=4, m in 2usize..=3, eps in 0.0f64..0.3) {
        let delta = 0.1;
        let mut rng = rng(seed);
        let inst = general_instance(&mut rng, n, m, eps, Norm::L1);
        let exact = solve_exact(&inst).unwrap().objective;
        let sol = fptas_solve(&inst, delta).unwrap();
        prop_assert!(sol.objective >= (1.0 - delta) * exact - 1e-9);
        prop_assert!(sol.objective <= exact + 1e-6, "fptas {} above exact {exact}", sol.objective);
        prop_assert!(sol.payoff >= sol.objective - 1e-9);
        prop_assert!(ece(&sol.predictor, &inst, Norm::L1) <= eps + 1e-7);
    }
}
