use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `n choose k`, saturating at `usize::MAX`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Subsets of `candidates` of the given size, each sorted.
///
/// All subsets are listed in lexicographic order when there are at most
/// `max_combos` of them; otherwise `max_combos` distinct subsets are drawn
/// uniformly with the seed and returned in lexicographic order.
pub fn pivot_combinations(
    candidates: &[usize],
    size: usize,
    max_combos: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut pool = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let n = pool.len();
    if size > n || max_combos == 0 {
        return Vec::new();
    }
    if binomial(n, size) <= max_combos {
        let mut out = Vec::new();
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| pool[i]).collect());
            let Some(pos) = (0..size).rev().find(|&i| idx[i] != i + n - size) else {
                break;
            };
            idx[pos] += 1;
            for i in pos + 1..size {
                idx[i] = idx[i - 1] + 1;
            }
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    while chosen.len() < max_combos {
        let mut pick: Vec<usize> = sample(&mut rng, n, size).into_iter().map(|i| pool[i]).collect();
        pick.sort_unstable();
        chosen.insert(pick);
    }
    chosen.into_iter().collect()
}
