//! Reference instances shared by tests, benchmarks and the CLI.

use crate::model::{Instance, Norm};

/// Four-action instance in which a larger ECE budget can help both players.
///
/// The agent picks the first action only for predictions up to `1e-5`, the
/// safe second action in between, the third from `0.9`, and the fourth only
/// at exactly `1` (its utility under outcome 0 is `-inf`). The principal
/// values the actions at 5, 0, 1 and 2 regardless of the event.
pub fn win_win(epsilon: f64) -> Instance {
    Instance::with_action_utility(
        vec![0.10001, 0.85, 1.0],
        vec![0.25, 0.5, 0.25],
        vec![[0.0001, -9.9999], [0.0, 0.0], [-0.9, 0.1], [f64::NEG_INFINITY, 10.0]],
        &[5.0, 0.0, 1.0, 2.0],
        epsilon,
        Norm::L1,
    )
    .expect("win-win instance is valid")
}

/// Lower threshold of the win-win instance: actions 1 and 2 tie here.
pub const WIN_WIN_LOW: f64 = 0.00001;
/// Upper threshold of the win-win instance: actions 2 and 3 tie here.
pub const WIN_WIN_HIGH: f64 = 0.9;

/// Two events with means 0.3 and 0.9 under a uniform prior, and a binary
/// action whose high choice the principal always prefers.
pub fn two_event(epsilon: f64, norm: Norm) -> Instance {
    Instance::with_action_utility(
        vec![0.3, 0.9],
        vec![0.5, 0.5],
        vec![[0.0, 0.0], [-1.0, 1.0]],
        &[0.0, 1.0],
        epsilon,
        norm,
    )
    .expect("two-event instance is valid")
}
