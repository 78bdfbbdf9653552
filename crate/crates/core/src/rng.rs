//! Seeded randomness shared by every stochastic component.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a named sub-task.
pub fn derive(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th use of a stream, e.g. one per stage.
pub fn subseed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = derive(seed, stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

/// Fisher-Yates from the back: for `i = len-1 .. 1`, swap `i` with a
/// uniform `j` in `0..=i`. Spelled out so reference implementations can
/// reproduce the exact permutation.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
