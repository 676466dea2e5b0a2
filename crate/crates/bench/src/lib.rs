//! Shared fixtures for the benchmarks.

use piproute_core::{ConstructionState, Hardness, Instance, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn instance(variant: Variant, n: usize, hardness: Hardness) -> Instance {
    Instance::generate(variant, n, hardness, 17).expect("benchmark instance")
}

/// State after `steps` uniformly random moves.
pub fn midway(instance: &Instance, steps: usize, seed: u64) -> ConstructionState<'_> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ConstructionState::new(instance);
    for _ in 0..steps.min(instance.n()) {
        let open: Vec<usize> = state.unvisited().collect();
        state
            .step(open[rng.random_range(0..open.len())])
            .expect("unvisited node");
    }
    state
}
