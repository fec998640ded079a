//! Deterministic instance generators shared by the benchmarks: models and
//! signal profiles drawn from the same ranges the verification sweeps use,
//! so timings reflect representative inputs rather than hand-picked ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use auction_core::{LinearValuationModel, SignalProfile};

pub fn model(n: usize, m: usize, seed: u64) -> LinearValuationModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f_slope = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
    let f_intercept = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let c = (0..n).map(|_| rng.random_range(1.1..5.0)).collect();
    let d = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    LinearValuationModel::new(n, m, f_slope, f_intercept, c, d)
        .expect("generated coefficients satisfy the model invariants")
}

pub fn signals(n: usize, m: usize, seed: u64) -> SignalProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5163_91ac);
    SignalProfile(
        (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect(),
    )
}
