//! Synthetic entity-matching data with exactly controlled pair similarity.
//!
//! Every pair is built from distinct pronounceable tokens so the token Jaccard
//! of its two records is exactly `shared / union`. Useful for offline runs
//! against the synthetic backend.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{BinaryLabel, EntityPair, EntityRecord, SamplingPool};

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// A lowercase alphabetic token unique to `index`.
pub fn token(index: usize) -> String {
    let base = ONSETS.len() * VOWELS.len();
    let mut n = index;
    let mut out = String::new();
    loop {
        let syllable = n % base;
        out.push_str(ONSETS[syllable / VOWELS.len()]);
        out.push_str(VOWELS[syllable % VOWELS.len()]);
        n /= base;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    out
}

/// A pair whose two `title` values share `shared` tokens out of `union` in total.
///
/// Panics if `union` is below 2 or `shared > union`.
pub fn pair_with_overlap(id: impl Into<String>, shared: usize, union: usize) -> EntityPair {
    assert!(union >= 2 && shared <= union, "need 2 <= union and shared <= union");
    let rest = union - shared;
    // Both sides stay nonempty even when nothing is shared.
    let left_only = rest.div_ceil(2);
    let tokens: Vec<String> = (0..union).map(token).collect();
    let (common, distinct) = tokens.split_at(shared);
    let (left_extra, right_extra) = distinct.split_at(left_only);
    let title = |extra: &[String]| -> String {
        common.iter().chain(extra).cloned().collect::<Vec<_>>().join(" ")
    };
    let left = EntityRecord::new([("title", title(left_extra))]).expect("nonempty title");
    let right = EntityRecord::new([("title", title(right_extra))]).expect("nonempty title");
    EntityPair::new(id.into(), left, right)
}

/// `n` pairs whose similarities are `i / (n - 1)` for `i = 0..n`, with ids
/// `{prefix}000`, `{prefix}001`, … and gold label `similarity >= threshold`.
pub fn grid_pool(n: usize, prefix: &str, threshold: f64) -> SamplingPool {
    assert!(n >= 3, "grid needs at least three points");
    let union = n - 1;
    let pairs = (0..n)
        .map(|i| {
            let s = i as f64 / union as f64;
            pair_with_overlap(format!("{prefix}{i:03}"), i, union)
                .with_gold(BinaryLabel::from(s >= threshold))
        })
        .collect();
    SamplingPool::new(pairs).expect("unique grid ids")
}

/// Shape of a randomly drawn benchmark split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSpec {
    pub pool_size: usize,
    pub eval_size: usize,
    /// Similarities are multiples of `1 / union`.
    pub union: usize,
    pub threshold: f64,
    /// Gold is `similarity + U(-noise, noise) >= threshold`.
    pub noise: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            pool_size: 200,
            eval_size: 100,
            union: 40,
            threshold: 0.5,
            noise: 0.1,
        }
    }
}

/// A sampling pool and a disjoint labeled evaluation set drawn from `spec`.
pub fn benchmark_split(spec: &BenchmarkSpec, seed: u64) -> (SamplingPool, SamplingPool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |id: String| {
        let shared = rng.gen_range(0..=spec.union);
        let s = shared as f64 / spec.union as f64;
        let jitter = if spec.noise > 0.0 {
            rng.gen_range(-spec.noise..spec.noise)
        } else {
            0.0
        };
        pair_with_overlap(id, shared, spec.union).with_gold(BinaryLabel::from(s + jitter >= spec.threshold))
    };
    let pool = (0..spec.pool_size).map(|i| draw(format!("pool-{i:04}"))).collect();
    let eval = (0..spec.eval_size).map(|i| draw(format!("eval-{i:04}"))).collect();
    (
        SamplingPool::new(pool).expect("unique pool ids"),
        SamplingPool::new(eval).expect("unique eval ids"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::pair_similarity;
    use std::collections::HashSet;

    #[test]
    fn tokens_are_unique_and_alphabetic() {
        let tokens: Vec<String> = (0..5000).map(token).collect();
        assert!(tokens.iter().all(|t| t.chars().all(|c| c.is_ascii_lowercase())));
        assert_eq!(tokens.iter().collect::<HashSet<_>>().len(), tokens.len());
    }

    #[test]
    fn overlap_gives_exact_jaccard() {
        for union in 2..30 {
            for shared in 0..=union {
                let pair = pair_with_overlap("x", shared, union);
                assert_eq!(pair_similarity(&pair), shared as f64 / union as f64);
            }
        }
    }

    #[test]
    fn grid_is_uniform() {
        let pool = grid_pool(50, "g", 0.5);
        for (i, pair) in pool.pairs().iter().enumerate() {
            assert_eq!(pair_similarity(pair), i as f64 / 49.0);
        }
        assert_eq!(pool.pairs()[25].gold, Some(BinaryLabel::Match));
        assert_eq!(pool.pairs()[24].gold, Some(BinaryLabel::NonMatch));
    }

    #[test]
    fn benchmark_split_is_seeded_and_disjoint() {
        let spec = BenchmarkSpec::default();
        let (pool, eval) = benchmark_split(&spec, 3);
        assert_eq!((pool.len(), eval.len()), (200, 100));
        assert!(eval.ids().all(|id| !pool.contains(id)));
        assert_eq!(benchmark_split(&spec, 3), (pool, eval));
    }
}
