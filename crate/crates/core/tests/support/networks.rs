//! Random demand structures for property tests.

use rand::Rng;

/// Random demand sets over `k` transmitters: `g` draws of subsets with
/// sizes in `sizes`, each nonempty.
pub fn random_demands<R: Rng>(rng: &mut R, k: usize, g: usize, max_size: usize) -> Vec<Vec<usize>> {
    (0..g)
        .map(|_| {
            let size = rng.random_range(1..=max_size.clamp(1, k));
            let mut pool: Vec<usize> = (0..k).collect();
            let mut set = Vec::with_capacity(size);
            for _ in 0..size {
                let i = rng.random_range(0..pool.len());
                set.push(pool.swap_remove(i));
            }
            set.sort_unstable();
            set
        })
        .collect()
}

/// Antichain of at least three maximal sets, each of size at most `k - 2`,
/// that together request every transmitter.
pub fn theorem_demands<R: Rng>(rng: &mut R, k: usize) -> Vec<Vec<usize>> {
    assert!(k >= 3);
    loop {
        let g = rng.random_range(3..=k + 2);
        let sets = random_demands(rng, k, g, k - 2);
        let primes = super::vertex_oracle::prime_sets(&sets);
        let covered = (0..k).all(|t| primes.iter().any(|s| s.contains(&t)));
        if primes.len() >= 3 && covered {
            return primes;
        }
    }
}
