//! Seeded, single-pass sampling primitives shared by the quality and
//! mixer modules.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Uniform reservoir sample (algorithm R) of `k` items from a stream,
/// without replacement, traversing the stream exactly once. Deterministic
/// given `(seed, stream order)`. Output order is the reservoir order.
pub fn reservoir_sample<T>(stream: impl Iterator<Item = T>, k: usize, seed: u64) -> Vec<T> {
    try_reservoir_sample(stream.map(Ok::<T, std::convert::Infallible>), k, seed)
        .expect("infallible stream")
}

/// [`reservoir_sample`] over a fallible stream; stops at the first error.
pub fn try_reservoir_sample<T, E>(
    stream: impl Iterator<Item = Result<T, E>>,
    k: usize,
    seed: u64,
) -> Result<Vec<T>, E> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir: Vec<T> = Vec::with_capacity(k.min(1024));
    if k == 0 {
        for item in stream {
            item?;
        }
        return Ok(reservoir);
    }
    for (i, item) in stream.enumerate() {
        let item = item?;
        if i < k {
            reservoir.push(item);
        } else {
            let j = rng.random_range(0..=i);
            if j < k {
                reservoir[j] = item;
            }
        }
    }
    Ok(reservoir)
}

/// In-place Fisher–Yates shuffle seeded for reproducibility.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn reservoir_is_deterministic_and_distinct() {
        let a = reservoir_sample(0..10_000u32, 500, 42);
        let b = reservoir_sample(0..10_000u32, 500, 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        let distinct: BTreeSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 500);
    }

    #[test]
    fn reservoir_returns_all_when_stream_is_small() {
        let picked = reservoir_sample(0..300u32, 500, 7);
        assert_eq!(picked, (0..300).collect::<Vec<_>>());
    }

    #[test]
    fn different_seeds_differ() {
        let a = reservoir_sample(0..10_000u32, 500, 1);
        let b = reservoir_sample(0..10_000u32, 500, 2);
        assert_ne!(a, b);
    }

    #[test]
    fn reservoir_is_roughly_uniform() {
        // each of 20 items picked with p=1/2 over 400 seeds; counts should
        // land well inside [120, 280] (mean 200, sigma ~10)
        let mut counts = [0u32; 20];
        for seed in 0..400 {
            for v in reservoir_sample(0..20usize, 10, seed) {
                counts[v] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!((120..=280).contains(&c), "item {i} picked {c} times");
        }
    }

    #[test]
    fn try_reservoir_propagates_errors() {
        let stream = (0..10u32).map(|i| if i == 5 { Err("boom") } else { Ok(i) });
        assert_eq!(try_reservoir_sample(stream, 3, 0), Err("boom"));
    }

    #[test]
    fn shuffle_is_seed_stable() {
        let mut a: Vec<u32> = (0..100).collect();
        let mut b: Vec<u32> = (0..100).collect();
        seeded_shuffle(&mut a, 9);
        seeded_shuffle(&mut b, 9);
        assert_eq!(a, b);
        let mut c: Vec<u32> = (0..100).collect();
        seeded_shuffle(&mut c, 10);
        assert_ne!(a, c);
    }
}
