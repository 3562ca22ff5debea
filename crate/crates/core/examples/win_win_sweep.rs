//! Prints the exact solution of the win-win instance over a range of budgets.

use pcal::exact::solve_exact;
use pcal::fixtures::win_win;
use pcal::{agent_payoff, ece, payoff, Norm};

fn main() {
    for eps in [0.0, 0.01, 0.02, 0.025, 0.04, 0.05, 0.07, 0.1, 0.2, 0.45, 0.5, 0.7, 0.8] {
        let inst = win_win(eps);
        let sol = solve_exact(&inst).expect("solve");
        let pred = &sol.predictor;
        println!(
            "eps={eps:<6} obj={:.6} payoff={:.6} agent={:.6} ece={:.6} support={:?}",
            sol.objective,
            payoff(pred, &inst),
            agent_payoff(pred, &inst),
            ece(pred, &inst, Norm::L1),
            pred.support()
        );
        for (i, row) in pred.mass().iter().enumerate() {
            println!("    f_{}: {:?}", i + 1, row);
        }
    }
}
