//! Compares the grid solver with the exact solver on the win-win instance.

use std::time::Instant;

use pcal::exact::solve_exact;
use pcal::fixtures::win_win;
use pcal::fptas::fptas_solve;
use pcal::{ece, payoff};

fn main() {
    let delta = 0.1;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8}", "eps", "exact", "fptas", "lp", "ece", "grid", "ms");
    for eps in [0.0, 0.01, 0.02, 0.04, 0.05, 0.1, 0.2, 0.5, 0.8] {
        let inst = win_win(eps);
        let exact = solve_exact(&inst).expect("exact");
        let start = Instant::now();
        let sol = fptas_solve(&inst, delta).expect("fptas");
        let ms = start.elapsed().as_millis();
        println!(
            "{:>6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>8} {:>8}",
            eps,
            payoff(&exact.predictor, &inst),
            sol.payoff,
            sol.objective,
            ece(&sol.predictor, &inst, inst.norm()),
            sol.grid.len(),
            ms
        );
    }
}
