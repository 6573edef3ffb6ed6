//! Small games with known structure, used in tests, benches and the CLI.

use crate::game::{bimatrix, Game};

/// 3x3 game with a 4-cycle sink over the top-left block and a strict pure
/// equilibrium at (3,3).
#[rustfmt::skip]
pub fn cycle_game() -> Game {
    bimatrix(
        3,
        3,
        &[
            (2.0, 1.0), (1.0, 2.0), (0.0, 0.0),
            (1.0, 2.0), (2.0, 1.0), (0.0, 0.0),
            (0.0, 0.0), (0.0, 0.0), (1.0, 1.0),
        ],
    )
    .expect("static game is valid")
}

/// 3x3 game whose pure equilibrium (3,3) lies outside every sink: its only
/// exit is a tie edge to (3,1), which improves strictly to (1,1).
#[rustfmt::skip]
pub fn tied_exit_game() -> Game {
    bimatrix(
        3,
        3,
        &[
            (4.0, 4.0), (1.0, 1.0), (0.0, 0.0),
            (0.0, 0.0), (3.0, 3.0), (1.0, 1.0),
            (2.0, 2.0), (1.0, 1.0), (2.0, 2.0),
        ],
    )
    .expect("static game is valid")
}
