//! Streaming near-duplicate removal over token n-gram shingles.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::texlex::{shingles, TokenStream};

pub const DEFAULT_SHINGLE_SIZE: usize = 50;
pub const DEFAULT_MAX_SHARED: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupConfig {
    pub shingle_size: usize,
    /// A record is removed when it shares strictly more shingles than this
    /// with the index.
    pub max_shared: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            shingle_size: DEFAULT_SHINGLE_SIZE,
            max_shared: DEFAULT_MAX_SHARED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "kebab-case")]
pub enum DedupDecision {
    Retained { shared: usize },
    Removed { shared: usize },
}

/// Union of the shingles of every retained record.
#[derive(Debug, Clone, Default)]
pub struct DedupIndex {
    cfg: DedupConfig,
    seen: BTreeSet<u64>,
}

impl DedupIndex {
    pub fn new(cfg: DedupConfig) -> Self {
        Self {
            cfg,
            seen: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    /// Decides one record and, if retained, adds its shingles to the index.
    pub fn offer(&mut self, stream: &TokenStream) -> DedupDecision {
        let grams = shingles(stream, self.cfg.shingle_size);
        let shared = grams.iter().filter(|g| self.seen.contains(g)).count();
        if shared > self.cfg.max_shared {
            return DedupDecision::Removed { shared };
        }
        self.seen.extend(grams);
        DedupDecision::Retained { shared }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub id: String,
    pub shared: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupOutcome {
    pub retained: Vec<String>,
    pub removed: Vec<Removal>,
}

/// Runs the index over `(id, stream)` pairs in input order.
pub fn dedup<'a, I>(records: I, cfg: DedupConfig) -> DedupOutcome
where
    I: IntoIterator<Item = (&'a str, &'a TokenStream)>,
{
    let mut index = DedupIndex::new(cfg);
    let mut out = DedupOutcome::default();
    for (id, stream) in records {
        match index.offer(stream) {
            DedupDecision::Retained { .. } => out.retained.push(String::from(id)),
            DedupDecision::Removed { shared } => out.removed.push(Removal {
                id: String::from(id),
                shared,
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::texlex::lex;
    use alloc::format;
    use proptest::prelude::*;

    fn words(prefix: &str, n: usize) -> String {
        (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn exact_duplicate_removed() {
        let a = lex(&words("w", 400));
        let out = dedup([("a", &a), ("b", &a)], DedupConfig::default());
        assert_eq!(out.retained, ["a"]);
        assert_eq!(out.removed, [Removal { id: "b".into(), shared: 351 }]);
    }

    #[test]
    fn shared_boundary_is_strict() {
        // 54 shared tokens give exactly 5 shared 50-grams.
        let base = words("s", 54);
        let a = lex(&format!("{base} {}", words("a", 60)));
        let b5 = lex(&format!("{} {base}", words("b", 60)));
        let b6 = lex(&format!("{} {} {}", words("c", 60), base, "s54"));
        let a6 = lex(&format!("{base} s54 {}", words("a", 60)));
        let out = dedup([("a", &a), ("b", &b5)], DedupConfig::default());
        assert_eq!(out.retained, ["a", "b"]);
        let out = dedup([("a", &a6), ("b", &b6)], DedupConfig::default());
        assert_eq!(out.retained, ["a"]);
        assert_eq!(out.removed[0].shared, 6);
    }

    #[test]
    fn short_snippets_all_retained() {
        let s = lex("\\draw (0,0) -- (1,1);");
        let out = dedup([("a", &s), ("b", &s), ("c", &s)], DedupConfig::default());
        assert_eq!(out.retained.len(), 3);
    }

    #[test]
    fn removed_records_do_not_grow_index() {
        let a = lex(&words("w", 100));
        let mut idx = DedupIndex::new(DedupConfig::default());
        idx.offer(&a);
        let before = idx.len();
        let near = lex(&format!("{} extra tail tokens", words("w", 100)));
        assert!(matches!(idx.offer(&near), DedupDecision::Removed { .. }));
        assert_eq!(idx.len(), before);
    }

    proptest! {
        #[test]
        fn first_occurrence_always_kept(ids in prop::collection::vec(0usize..4, 1..12)) {
            let streams: Vec<TokenStream> = (0..4).map(|k| lex(&words(&format!("t{k}_"), 80))).collect();
            let labels: Vec<String> = (0..ids.len()).map(|i| format!("r{i}")).collect();
            let out = dedup(
                ids.iter().zip(&labels).map(|(k, l)| (l.as_str(), &streams[*k])),
                DedupConfig::default(),
            );
            let mut seen = BTreeSet::new();
            for (i, k) in ids.iter().enumerate() {
                let kept = out.retained.contains(&labels[i]);
                prop_assert_eq!(kept, seen.insert(*k));
            }
        }
    }
}
