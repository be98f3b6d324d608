//! Shared fixtures for the criterion benches.

use codednet::codec::SourcePacket;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_generation(g: usize, symbol_size: usize, seed: u64) -> Vec<SourcePacket> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..g)
        .map(|i| {
            let payload = (0..symbol_size).map(|_| rng.random()).collect();
            SourcePacket::new(0, i, payload)
        })
        .collect()
}
