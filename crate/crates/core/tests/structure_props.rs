mod common;

use common::*;
use pcal::model::{ece, ece_power, payoff};
use pcal::oracle::{sample_feasible, SamplerConfig};
use pcal::structure::{
    analyze_structure, apply_plan, binary_action_certificate, binary_action_optimal, check_mpc,
    recalibrate, verify_optimality, Confidence, EventIndependentPlan,
};
use pcal::Norm;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn recalibration_is_calibrated(seed in any::<u64>(), n in 1usize..=5, m in 2usize..=3) {
        let mut rng = rng(seed);
        let inst = event_independent_instance(&mut rng, n, m, 0.0, Norm::L1);
        let f = random_predictor(&mut rng, n, 5);
        let (g, plan) = recalibrate(&f, &inst).unwrap();
        prop_assert!(ece(&g, &inst, Norm::Inf) <= 1e-9);
        let marginal: Vec<(f64, f64)> = (0..g.len()).map(|k| (g.support()[k], g.marginal_at(&inst, k))).collect();
        let prior: Vec<(f64, f64)> = inst.theta().iter().copied().zip(inst.lambda().iter().copied()).collect();
        prop_assert!(check_mpc(&marginal, &prior));
        let total: f64 = plan.marginal().iter().map(|x| x.1).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!((plan.ece_power(1.0) - ece(&f, &inst, Norm::L1)).abs() <= 1e-9);
    }

    #[test]
    fn applied_plans_respect_their_budget(seed in any::<u64>(), n in 1usize..=4, t in 1.0f64..3.0) {
        let mut rng = rng(seed);
        let inst = event_independent_instance(&mut rng, n, 2, 0.0, Norm::L1);
        let (g, _) = recalibrate(&random_predictor(&mut rng, n, 4), &inst).unwrap();
        let mut mass = Vec::new();
        for k in 0..g.len() {
            let w = g.marginal_at(&inst, k);
            let parts = rng.random_range(1..=3);
            for share in simplex(&mut rng, parts) {
                mass.push((g.support()[k], rng.random::<f64>(), w * share));
            }
        }
        let plan = EventIndependentPlan { mass };
        let f = apply_plan(&g, &plan, &inst).unwrap();
        prop_assert!(ece_power(&f, &inst, t) <= plan.ece_power(t) + 1e-9);
    }

    #[test]
    fn classification_follows_kappa(seed in any::<u64>(), n in 1usize..=4, m in 2usize..=3) {
        let mut rng = rng(seed);
        let inst = event_independent_instance(&mut rng, n, m, 0.0, Norm::L1);
        let f = random_predictor(&mut rng, n, 5);
        let report = analyze_structure(&f, &inst).unwrap();
        // arbitrary predictors may interleave the tails; that is reported
        let ordered = report.p_l <= report.p_h;
        prop_assert_eq!(ordered, !report.violations.iter().any(|v| v.starts_with("under-confident prediction")));
        for pt in &report.points {
            let want = if pt.kappa > pt.p + 1e-7 {
                Confidence::Under
            } else if pt.kappa < pt.p - 1e-7 {
                Confidence::Over
            } else {
                Confidence::Calibrated
            };
            prop_assert_eq!(pt.class, want);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn binary_optimum_has_clean_structure(seed in any::<u64>(), n in 1usize..=6, eps in 0.0f64..0.5) {
        let mut rng = rng(seed);
        let inst = binary_instance(&mut rng, n, eps);
        let f = binary_action_optimal(&inst).unwrap();
        prop_assert!(ece(&f, &inst, Norm::L1) <= eps + 1e-9);
        let report = analyze_structure(&f, &inst).unwrap();
        prop_assert!(report.violations.is_empty(), "{:?}", report.violations);
    }

    #[test]
    fn verified_optimum_beats_samples(seed in any::<u64>(), n in 1usize..=3, eps in 0.0f64..0.3) {
        let mut rng = rng(seed);
        let inst = binary_instance(&mut rng, n, eps);
        let f = binary_action_optimal(&inst).unwrap();
        let cert = binary_action_certificate(&inst).unwrap();
        let verdict = verify_optimality(&f, &inst, &cert).unwrap();
        prop_assert!(verdict.all_pass(), "{:?}", verdict.failures);
        let best = payoff(&f, &inst);
        let cfg = SamplerConfig::new(0.05, 2000, seed).unwrap();
        for g in sample_feasible(&inst, &cfg) {
            prop_assert!(payoff(&g, &inst) <= best + 1e-6);
        }
    }
}
