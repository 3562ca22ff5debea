mod common;

use common::*;
use pcal::model::{ece, kappa, payoff};
use pcal::{Norm, Predictor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ece_is_monotone_in_the_norm(seed in any::<u64>(), n in 1usize..=4, m in 2usize..=3) {
        let mut rng = rng(seed);
        let inst = general_instance(&mut rng, n, m, 0.0, Norm::L1);
        let f = random_predictor(&mut rng, n, 5);
        let mut last = 0.0;
        for norm in [Norm::L1, Norm::L(1.5), Norm::L(2.0), Norm::L(4.0), Norm::Inf] {
            let e = ece(&f, &inst, norm);
            prop_assert!(e >= last - 1e-12, "{norm}: {e} < {last}");
            last = e;
        }
    }

    #[test]
    fn kappa_stays_within_the_means(seed in any::<u64>(), n in 1usize..=5) {
        let mut rng = rng(seed);
        let inst = general_instance(&mut rng, n, 2, 0.0, Norm::L1);
        let f = random_predictor(&mut rng, n, 6);
        let (lo, hi) = (inst.theta()[0], inst.theta()[n - 1]);
        for &p in f.support() {
            if let Ok(k) = kappa(&f, &inst, p) {
                prop_assert!(k >= lo - 1e-12 && k <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn payoff_ignores_duplicated_points(seed in any::<u64>(), n in 1usize..=4, m in 2usize..=3) {
        let mut rng = rng(seed);
        let inst = general_instance(&mut rng, n, m, 0.0, Norm::L1);
        let f = random_predictor(&mut rng, n, 4);
        let rows: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|i| {
                f.support()
                    .iter()
                    .zip(&f.mass()[i])
                    .flat_map(|(&p, &w)| [(p, 0.3 * w), (p, 0.7 * w)])
                    .collect()
            })
            .collect();
        let split = Predictor::from_events(&rows).unwrap();
        prop_assert!((payoff(&f, &inst) - payoff(&split, &inst)).abs() <= 1e-12);
    }

    #[test]
    fn payoff_matches_direct_summation(seed in any::<u64>(), n in 1usize..=4, m in 2usize..=3) {
        let mut rng = rng(seed);
        let inst = general_instance(&mut rng, n, m, 0.0, Norm::L1);
        let f = random_predictor(&mut rng, n, 5);
        prop_assert!((payoff(&f, &inst) - reference_payoff(&f, &inst)).abs() <= 1e-12);
    }

    #[test]
    fn tied_actions_are_the_argmax(seed in any::<u64>(), m in 1usize..=5, p in 0.0f64..=1.0) {
        let mut rng = rng(seed);
        let inst = general_instance(&mut rng, 2, m, 0.0, Norm::L1);
        let vals: Vec<f64> = (0..m)
            .map(|a| p * inst.agent_utility(a, 1) + (1.0 - p) * inst.agent_utility(a, 0))
            .collect();
        let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let want: Vec<usize> = (0..m).filter(|&a| vals[a] >= best - 1e-9).collect();
        let resp = inst.best_response(p);
        prop_assert_eq!(&resp.tied_actions, &want);
        prop_assert!(resp.tied_actions.contains(&resp.action));
    }
}
