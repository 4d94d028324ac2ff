//! Pure numerical kernel: committee vote ratio, binary entropy, the committee
//! temperature schedule and the size of the ordered demonstration search space.

use thiserror::Error;

use crate::domain::BinaryLabel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("empty committee")]
    EmptyCommittee,
    #[error("ratio {0} outside [0, 1]")]
    RatioOutOfDomain(f64),
    #[error("committee too small: need at least 2 members, got {0}")]
    CommitteeTooSmall(usize),
    #[error("cannot select {k} of {n} items")]
    SelectionOutOfDomain { n: u64, k: u64 },
    #[error("ordered selection count for n={n}, k={k} overflows u64")]
    Overflow { n: u64, k: u64 },
}

/// Fraction of `Match` votes, R⁺.
pub fn positive_ratio(votes: &[BinaryLabel]) -> Result<f64, KernelError> {
    if votes.is_empty() {
        return Err(KernelError::EmptyCommittee);
    }
    let positives = votes.iter().filter(|v| v.is_match()).count();
    Ok(positives as f64 / votes.len() as f64)
}

/// Base-2 binary entropy of a ratio, with `0 · log 0 = 0`.
pub fn entropy(ratio: f64) -> Result<f64, KernelError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(KernelError::RatioOutOfDomain(ratio));
    }
    Ok(plogp(ratio) + plogp(1.0 - ratio))
}

fn plogp(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Entropy of a committee's vote distribution. Computed from the minority
/// share so that mirrored vote counts (e.g. 1-of-3 and 2-of-3) score identically.
pub fn vote_entropy(votes: &[BinaryLabel]) -> Result<f64, KernelError> {
    if votes.is_empty() {
        return Err(KernelError::EmptyCommittee);
    }
    let positives = votes.iter().filter(|v| v.is_match()).count();
    let minority = positives.min(votes.len() - positives);
    entropy(minority as f64 / votes.len() as f64)
}

/// `m` evenly spaced temperatures from 0 to 1 inclusive.
pub fn temperature_schedule(m: usize) -> Result<Vec<f64>, KernelError> {
    if m < 2 {
        return Err(KernelError::CommitteeTooSmall(m));
    }
    let last = (m - 1) as f64;
    Ok((0..m).map(|i| i as f64 / last).collect())
}

/// Number of ordered selections of `k` distinct items out of `n`: n·(n−1)·…·(n−k+1).
pub fn ordered_selection_count(n: u64, k: u64) -> Result<u64, KernelError> {
    if k == 0 || k > n {
        return Err(KernelError::SelectionOutOfDomain { n, k });
    }
    (n - k + 1..=n).try_fold(1u64, |acc, factor| {
        acc.checked_mul(factor)
            .ok_or(KernelError::Overflow { n, k })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use BinaryLabel::{Match as Y, NonMatch as N};

    #[test]
    fn ratio_examples() {
        assert_eq!(positive_ratio(&[Y, N, Y]).unwrap(), 2.0 / 3.0);
        assert_eq!(positive_ratio(&[N, N, N]).unwrap(), 0.0);
        assert_eq!(positive_ratio(&[Y, Y, Y, Y]).unwrap(), 1.0);
        assert_eq!(positive_ratio(&[]), Err(KernelError::EmptyCommittee));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(0.5).unwrap(), 1.0);
        assert_eq!(entropy(0.0).unwrap(), 0.0);
        assert_eq!(entropy(1.0).unwrap(), 0.0);
        // log2(3) - 2/3, evaluated with mpmath at 50 digits
        let third = 0.918_295_834_054_489_6;
        assert!((entropy(1.0 / 3.0).unwrap() - third).abs() < 1e-12);
        assert!(matches!(entropy(-0.1), Err(KernelError::RatioOutOfDomain(_))));
        assert!(matches!(entropy(1.0001), Err(KernelError::RatioOutOfDomain(_))));
        assert!(entropy(f64::NAN).is_err());
    }

    #[test]
    fn vote_entropy_mirrors_exactly() {
        assert_eq!(vote_entropy(&[Y, N, N]).unwrap(), vote_entropy(&[Y, Y, N]).unwrap());
        assert_eq!(vote_entropy(&[Y, Y]).unwrap(), 0.0);
        assert_eq!(vote_entropy(&[]), Err(KernelError::EmptyCommittee));
        let r = positive_ratio(&[Y, Y, N]).unwrap();
        assert!((vote_entropy(&[Y, Y, N]).unwrap() - entropy(r).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(temperature_schedule(3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(temperature_schedule(2).unwrap(), vec![0.0, 1.0]);
        assert_eq!(
            temperature_schedule(5).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(temperature_schedule(1), Err(KernelError::CommitteeTooSmall(1)));
        assert_eq!(temperature_schedule(0), Err(KernelError::CommitteeTooSmall(0)));
    }

    fn brute_force_permutations(n: u64, k: u64) -> u64 {
        fn go(used: &mut Vec<bool>, depth: u64, k: u64) -> u64 {
            if depth == k {
                return 1;
            }
            let mut total = 0;
            for i in 0..used.len() {
                if !used[i] {
                    used[i] = true;
                    total += go(used, depth + 1, k);
                    used[i] = false;
                }
            }
            total
        }
        go(&mut vec![false; n as usize], 0, k)
    }

    #[test]
    fn selection_count_examples() {
        assert_eq!(ordered_selection_count(100, 3).unwrap(), 970_200);
        assert_eq!(ordered_selection_count(17, 1).unwrap(), 17);
        assert_eq!(ordered_selection_count(5, 5).unwrap(), brute_force_permutations(5, 5));
        assert_eq!(ordered_selection_count(5, 5).unwrap(), 120);
        assert!(matches!(
            ordered_selection_count(3, 4),
            Err(KernelError::SelectionOutOfDomain { .. })
        ));
        assert!(matches!(
            ordered_selection_count(3, 0),
            Err(KernelError::SelectionOutOfDomain { .. })
        ));
        assert_eq!(
            ordered_selection_count(100, 20),
            Err(KernelError::Overflow { n: 100, k: 20 })
        );
    }

    #[test]
    fn selection_count_matches_enumeration() {
        for n in 1..=8 {
            for k in 1..=n {
                assert_eq!(
                    ordered_selection_count(n, k).unwrap(),
                    brute_force_permutations(n, k),
                    "n={n} k={k}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn entropy_symmetric_and_bounded(r in 0.0f64..=1.0) {
            let h = entropy(r).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
            prop_assert!((h - entropy(1.0 - r).unwrap()).abs() < 1e-12);
            if r != 0.0 && r != 1.0 {
                prop_assert!(h > 0.0);
            }
            if r != 0.5 {
                prop_assert!(h < 1.0);
            }
        }

        #[test]
        fn ratio_times_length_is_integer(votes in proptest::collection::vec(any::<bool>(), 1..64)) {
            let votes: Vec<BinaryLabel> = votes.into_iter().map(BinaryLabel::from).collect();
            let scaled = positive_ratio(&votes).unwrap() * votes.len() as f64;
            prop_assert!((scaled - scaled.round()).abs() < 1e-9);
        }

        #[test]
        fn schedule_evenly_spaced(m in 2usize..200) {
            let s = temperature_schedule(m).unwrap();
            prop_assert_eq!(s.len(), m);
            prop_assert_eq!(s[0], 0.0);
            prop_assert_eq!(s[m - 1], 1.0);
            let step = 1.0 / (m - 1) as f64;
            for w in s.windows(2) {
                prop_assert!(w[1] > w[0]);
                prop_assert!((w[1] - w[0] - step).abs() < 1e-12);
            }
        }
    }
}
