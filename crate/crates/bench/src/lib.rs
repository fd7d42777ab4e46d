//! Shared inputs for the criterion benches.

use tomloom::types::ProblemInstance;
use tomloom::world::{generate, GeneratedStory, WorldParams};

/// A generated story with `moves` object moves and second-order beliefs.
pub fn story(seed: u64, moves: usize) -> GeneratedStory {
    generate(
        seed,
        WorldParams {
            n_agents: 4,
            n_distractors: 3,
            n_moves: moves,
            k_max: 2,
            exit_counts_as_event: false,
        },
    )
    .expect("bench parameters are feasible")
}

pub fn problem(seed: u64, moves: usize) -> ProblemInstance {
    story(seed, moves).problem
}
