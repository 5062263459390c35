use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ContractRecord, CorpusError};

/// Jaccard index `|a ∩ b| / |a ∪ b|`; two empty sets are identical (1.0).
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// One dropped near-duplicate and the retained record it matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub dropped_id: String,
    pub kept_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    /// Retained records, in input order.
    pub kept: Vec<ContractRecord>,
    /// One entry per dropped record, in input order of the dropped record.
    pub removed: Vec<Removal>,
}

/// Filename-grouped near-duplicate removal.
///
/// Within each filename group, records are visited in input order and
/// compared with every record already kept in that group. A record whose
/// similarity to some kept record is strictly greater than `threshold` is
/// dropped; the log names the most similar kept record (earliest on ties).
/// Groups are processed in parallel and merged back into input order.
pub fn dedup(records: &[ContractRecord], threshold: f64) -> Result<DedupOutcome, CorpusError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CorpusError::BadThreshold(threshold));
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.filename.as_str()).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();

    // (dropped index, kept index, similarity)
    let mut drops: Vec<(usize, usize, f64)> = groups
        .par_iter()
        .flat_map_iter(|members| {
            let mut kept: Vec<usize> = Vec::with_capacity(members.len());
            let mut dropped = Vec::new();
            for &i in members {
                let mut best: Option<(usize, f64)> = None;
                for &k in &kept {
                    let s = jaccard(&records[i].token_bag, &records[k].token_bag);
                    if s > threshold && best.is_none_or(|(_, b)| s > b) {
                        best = Some((k, s));
                    }
                }
                match best {
                    Some((k, s)) => dropped.push((i, k, s)),
                    None => kept.push(i),
                }
            }
            dropped
        })
        .collect();
    drops.sort_by_key(|d| d.0);

    let dropped: BTreeSet<usize> = drops.iter().map(|d| d.0).collect();
    let kept = records
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    let removed = drops
        .into_iter()
        .map(|(i, k, s)| Removal {
            dropped_id: records[i].id.clone(),
            kept_id: records[k].id.clone(),
            similarity: s,
        })
        .collect();
    Ok(DedupOutcome { kept, removed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn record(id: &str, file: &str, tokens: &[&str]) -> ContractRecord {
        ContractRecord::contract(id, file, tokens.join(" ")).unwrap()
    }

    /// Record with `shared` common tokens plus `extra` private ones.
    fn record_with(id: &str, file: &str, shared: usize, extra: usize) -> ContractRecord {
        let mut toks: Vec<String> = (0..shared).map(|i| format!("s{i}")).collect();
        toks.extend((0..extra).map(|i| format!("{id}_x{i}")));
        ContractRecord::contract(id, file, toks.join(" ")).unwrap()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&[])), 0.0);
    }

    #[test]
    fn similarity_above_threshold_drops_second() {
        // 23 shared + 1 private each: 23 / 25 = 0.92
        let a = record_with("a", "T.sol", 23, 1);
        let b = record_with("b", "T.sol", 23, 1);
        assert!((jaccard(&a.token_bag, &b.token_bag) - 0.92).abs() < 1e-12);
        let out = dedup(&[a, b], 0.9).unwrap();
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].id, "a");
        assert_eq!(out.removed[0].dropped_id, "b");
        assert_eq!(out.removed[0].kept_id, "a");
    }

    #[test]
    fn similarity_below_threshold_keeps_both() {
        // 17 / 20 = 0.85
        let a = record_with("a", "T.sol", 17, 0);
        let b = record_with("b", "T.sol", 17, 3);
        assert!((jaccard(&a.token_bag, &b.token_bag) - 0.85).abs() < 1e-12);
        let out = dedup(&[a, b], 0.9).unwrap();
        assert_eq!(out.kept.len(), 2);
        assert!(out.removed.is_empty());
    }

    #[test]
    fn boundary_is_kept() {
        // 9 / 10 = 0.9 exactly: not strictly above the threshold
        let a = record_with("a", "T.sol", 9, 0);
        let b = record_with("b", "T.sol", 9, 1);
        assert_eq!(jaccard(&a.token_bag, &b.token_bag), 0.9);
        assert_eq!(dedup(&[a, b], 0.9).unwrap().kept.len(), 2);
    }

    #[test]
    fn different_filenames_never_compared() {
        let a = record("a", "A.sol", &["x", "y"]);
        let b = record("b", "B.sol", &["x", "y"]);
        assert_eq!(dedup(&[a, b], 0.9).unwrap().kept.len(), 2);
    }

    #[test]
    fn ten_records_three_planted() {
        // Seven distinct bases across two filenames, three near-copies of bases.
        let mut recs = Vec::new();
        for i in 0..7 {
            let toks: Vec<String> = (0..30).map(|t| format!("b{i}_{t}")).collect();
            let file = if i % 2 == 0 { "Even.sol" } else { "Odd.sol" };
            let base = ContractRecord::contract(format!("base{i}"), file, toks.join(" ")).unwrap();
            let planted = [0, 3, 4].contains(&i).then(|| {
                let src = format!("{} extra{i}", base.source);
                ContractRecord::contract(format!("dup{i}"), file, src).unwrap()
            });
            recs.push(base);
            recs.extend(planted);
        }
        assert_eq!(recs.len(), 10);

        // brute-force oracle over all pairs
        let mut oracle_dropped = BTreeSet::new();
        for j in 0..recs.len() {
            for i in 0..j {
                if recs[i].filename == recs[j].filename
                    && !oracle_dropped.contains(&i)
                    && jaccard(&recs[i].token_bag, &recs[j].token_bag) > 0.9
                {
                    oracle_dropped.insert(j);
                }
            }
        }
        let out = dedup(&recs, 0.9).unwrap();
        assert_eq!(out.kept.len(), 7);
        let dropped: BTreeSet<usize> = recs
            .iter()
            .enumerate()
            .filter(|(_, r)| out.removed.iter().any(|d| d.dropped_id == r.id))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(dropped, oracle_dropped);
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(matches!(dedup(&[], 1.5), Err(CorpusError::BadThreshold(_))));
        assert!(matches!(dedup(&[], -0.1), Err(CorpusError::BadThreshold(_))));
    }

    fn arb_bag() -> impl Strategy<Value = BTreeSet<u8>> {
        proptest::collection::btree_set(0u8..24, 0..12)
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<ContractRecord>> {
        proptest::collection::vec((0u8..3, proptest::collection::vec(0u8..12, 1..10)), 0..14).prop_map(
            |rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (f, toks))| {
                        let src: Vec<String> = toks.iter().map(|t| format!("t{t}")).collect();
                        ContractRecord::contract(format!("r{i}"), format!("F{f}.sol"), src.join(" "))
                            .unwrap()
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_and_bounded(a in arb_bag(), b in arb_bag()) {
            let s = jaccard(&a, &b);
            prop_assert_eq!(s, jaccard(&b, &a));
            prop_assert!((0.0..=1.0).contains(&s));
            if !a.is_empty() || !b.is_empty() {
                prop_assert_eq!(s == 1.0, a == b);
            }
        }

        #[test]
        fn dedup_idempotent(corpus in arb_corpus(), t in 0.0f64..1.0) {
            let once = dedup(&corpus, t).unwrap();
            let twice = dedup(&once.kept, t).unwrap();
            prop_assert_eq!(&twice.kept, &once.kept);
            prop_assert!(twice.removed.is_empty());
        }

        #[test]
        fn dedup_output_is_order_stable(corpus in arb_corpus(), t in 0.0f64..1.0) {
            let a = dedup(&corpus, t).unwrap();
            let b = dedup(&corpus, t).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
