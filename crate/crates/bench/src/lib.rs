//! Shared fixtures for the criterion benchmarks.

use mpfc_core::spectral::random_band_limited;
use mpfc_core::{Field, Grid, ModelParams, State};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Perturbed uniform state on a `dim`-dimensional grid of side `n`.
pub fn fixture(dim: usize, n: usize, beta: f64) -> (State, ModelParams) {
    let grid = Grid::new(dim, n).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let max_mode = 8.min(n / 3);
    let phi = random_band_limited(&grid, max_mode, 0.1, &mut rng)
        .and_then(|p| p.add(&Field::constant(&grid, 0.1)))
        .expect("valid perturbation");
    let phi_t = if beta == 0.0 {
        Field::zeros(&grid)
    } else {
        random_band_limited(&grid, max_mode, 0.1, &mut rng).expect("valid perturbation")
    };
    let state = State::new(phi, phi_t, beta, 0.0).expect("consistent state");
    let params = ModelParams::new(beta, 0.5).expect("valid parameters");
    (state, params)
}
