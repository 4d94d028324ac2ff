use std::collections::BTreeSet;

use crate::domain::{EntityPair, EntityRecord};

/// Lower-cased tokens of every attribute value, split on whitespace and punctuation.
pub fn record_tokens(record: &EntityRecord) -> BTreeSet<String> {
    record
        .attributes()
        .flat_map(|(_, value)| value.split(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Token Jaccard similarity of the two records in `[0, 1]`.
pub fn pair_similarity(pair: &EntityPair) -> f64 {
    jaccard(&record_tokens(&pair.left), &record_tokens(&pair.right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(left: &str, right: &str) -> EntityPair {
        EntityPair::new(
            "p",
            EntityRecord::new([("title", left)]).unwrap(),
            EntityRecord::new([("title", right)]).unwrap(),
        )
    }

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(pair_similarity(&pair("Deep Learning", "deep learning")), 1.0);
        assert_eq!(pair_similarity(&pair("alpha beta", "gamma delta")), 0.0);
    }

    #[test]
    fn overlap_example() {
        assert_eq!(pair_similarity(&pair("a b c", "b, c; d")), 0.5);
    }

    #[test]
    fn tokens_span_attributes_and_punctuation() {
        let r = EntityRecord::new([("title", "Query-Optimization, Revisited"), ("year", "1999")])
            .unwrap();
        let t: Vec<_> = record_tokens(&r).into_iter().collect();
        assert_eq!(t, vec!["1999", "optimization", "query", "revisited"]);
    }

    #[test]
    fn no_tokens_gives_zero() {
        assert_eq!(pair_similarity(&pair("", "...")), 0.0);
        assert_eq!(pair_similarity(&pair("", "word")), 0.0);
    }

    proptest! {
        #[test]
        fn bounded_and_symmetric(a in "[a-e ,.]{0,20}", b in "[a-e ,.]{0,20}") {
            let s = pair_similarity(&pair(&a, &b));
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, pair_similarity(&pair(&b, &a)));
        }
    }
}
