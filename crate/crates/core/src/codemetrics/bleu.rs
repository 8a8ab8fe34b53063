//! Frequency-masked BLEU (CrystalBLEU) and the n-gram miner that produces
//! the mask.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CodeMetricError;
use crate::hash::fingerprint;
use crate::texlex::TokenStream;

pub const BLEU_MAX_ORDER: usize = 4;
pub const DEFAULT_TRIVIAL_K: usize = 500;
pub const SIDECAR_VERSION: u32 = 1;

/// The `k` most frequent n-grams (orders `1..=max_order`) of a corpus
/// snapshot, stored as `(order, fingerprint)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrivialNgramSet {
    pub version: u32,
    pub corpus_snapshot_id: String,
    pub k: usize,
    pub max_order: usize,
    #[serde(serialize_with = "ser_entries", deserialize_with = "de_entries")]
    entries: BTreeSet<(u8, u64)>,
}

#[derive(Serialize, Deserialize)]
struct HexEntry {
    order: u8,
    fingerprint: String,
}

fn ser_entries<S: Serializer>(entries: &BTreeSet<(u8, u64)>, s: S) -> Result<S::Ok, S::Error> {
    let v: Vec<HexEntry> = entries
        .iter()
        .map(|&(order, fp)| HexEntry {
            order,
            fingerprint: format!("{fp:016x}"),
        })
        .collect();
    v.serialize(s)
}

fn de_entries<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<(u8, u64)>, D::Error> {
    let v: Vec<HexEntry> = Vec::deserialize(d)?;
    v.into_iter()
        .map(|e| {
            u64::from_str_radix(&e.fingerprint, 16)
                .map(|fp| (e.order, fp))
                .map_err(serde::de::Error::custom)
        })
        .collect()
}

impl TrivialNgramSet {
    /// A mask that hides nothing; CrystalBLEU then reduces to plain BLEU.
    pub fn empty() -> Self {
        Self {
            version: SIDECAR_VERSION,
            corpus_snapshot_id: String::from("none"),
            k: 0,
            max_order: BLEU_MAX_ORDER,
            entries: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, order: usize, fp: u64) -> bool {
        order <= u8::MAX as usize && self.entries.contains(&(order as u8, fp))
    }

    pub fn contains_ngram(&self, ngram: &[&str]) -> bool {
        self.contains(ngram.len(), fingerprint(ngram.iter().copied()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.entries.iter().map(|&(o, fp)| (o as usize, fp))
    }
}

/// Counts every n-gram of order `1..=max_order` across the corpus and keeps
/// the `k` most frequent. Ties go to the smaller fingerprint, then the
/// smaller order.
pub fn mine_trivial_ngrams(
    corpus: &[TokenStream],
    k: usize,
    max_order: usize,
    corpus_snapshot_id: &str,
) -> Result<TrivialNgramSet, CodeMetricError> {
    if corpus.is_empty() {
        return Err(CodeMetricError::EmptyCorpus);
    }
    if k == 0 || max_order == 0 || max_order > u8::MAX as usize {
        return Err(CodeMetricError::InvalidParameter("k and max_order must be positive"));
    }
    let mut counts: BTreeMap<(u8, u64), u64> = BTreeMap::new();
    for stream in corpus {
        let lexemes: Vec<&str> = stream.lexemes().collect();
        for order in 1..=max_order {
            for window in lexemes.windows(order) {
                *counts
                    .entry((order as u8, fingerprint(window.iter().copied())))
                    .or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<((u8, u64), u64)> = counts.into_iter().collect();
    ranked.sort_by(|(ka, ca), (kb, cb)| cb.cmp(ca).then(ka.1.cmp(&kb.1)).then(ka.0.cmp(&kb.0)));
    Ok(TrivialNgramSet {
        version: SIDECAR_VERSION,
        corpus_snapshot_id: String::from(corpus_snapshot_id),
        k,
        max_order,
        entries: ranked.into_iter().take(k).map(|(key, _)| key).collect(),
    })
}

fn ngram_counts<'a>(tokens: &'a [&'a str], order: usize) -> BTreeMap<&'a [&'a str], usize> {
    let mut counts = BTreeMap::new();
    for w in tokens.windows(order) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Masked modified precision for one order: `(clipped matches, total)`,
/// both restricted to n-grams outside the trivial set.
pub fn masked_precision(hyp: &[&str], reference: &[&str], order: usize, trivial: &TrivialNgramSet) -> (usize, usize) {
    let hyp_counts = ngram_counts(hyp, order);
    let ref_counts = ngram_counts(reference, order);
    let mut matched = 0;
    let mut total = 0;
    for (gram, &count) in &hyp_counts {
        if trivial.contains_ngram(gram) {
            continue;
        }
        total += count;
        matched += count.min(ref_counts.get(gram).copied().unwrap_or(0));
    }
    (matched, total)
}

/// CrystalBLEU of a hypothesis token sequence against a reference.
///
/// Orders whose masked denominator is zero drop out of the geometric mean;
/// with no order left the score is 0. The brevity penalty is the usual
/// `exp(1 − r/c)` for `c ≤ r`.
pub fn crystal_bleu_tokens(hyp: &[&str], reference: &[&str], trivial: &TrivialNgramSet) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut used = 0usize;
    for order in 1..=BLEU_MAX_ORDER {
        let (matched, total) = masked_precision(hyp, reference, order, trivial);
        if total == 0 {
            continue;
        }
        if matched == 0 {
            return 0.0;
        }
        log_sum += libm::log(matched as f64 / total as f64);
        used += 1;
    }
    if used == 0 {
        return 0.0;
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { libm::exp(1.0 - r / c) };
    bp * libm::exp(log_sum / used as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::texlex::{lex, normalize};

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn perfect_and_disjoint() {
        let t = TrivialNgramSet::empty();
        let a = toks("a b c d e");
        assert_eq!(crystal_bleu_tokens(&a, &a, &t), 1.0);
        assert_eq!(crystal_bleu_tokens(&a, &toks("v w x y z"), &t), 0.0);
        assert_eq!(crystal_bleu_tokens(&[], &a, &t), 0.0);
    }

    #[test]
    fn partial_overlap_hand_computed() {
        // hyp: a b c d, ref: a b c e.
        // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = 0/1 -> BLEU 0.
        let t = TrivialNgramSet::empty();
        assert_eq!(crystal_bleu_tokens(&toks("a b c d"), &toks("a b c e"), &t), 0.0);
        // hyp: a b c d a b, ref: a b c d x y.
        // p1 = 4/6 (a,b clipped to 1 each), p2 = 3/5, p3 = 2/4, p4 = 1/3, BP = 1.
        let got = crystal_bleu_tokens(&toks("a b c d a b"), &toks("a b c d x y"), &t);
        let want = libm::pow((4.0 / 6.0) * (3.0 / 5.0) * (2.0 / 4.0) * (1.0 / 3.0), 0.25);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_applies_to_short_hypotheses() {
        let t = TrivialNgramSet::empty();
        let got = crystal_bleu_tokens(&toks("a b c d"), &toks("a b c d e f g h"), &t);
        assert!((got - libm::exp(1.0 - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn mining_saturates_and_is_deterministic() {
        let corpus = [lex("\\begin{tikzpicture} a"), lex("\\begin{tikzpicture} b")];
        let all = mine_trivial_ngrams(&corpus, 10_000, 4, "c").unwrap();
        // Five tokens per doc give 5 + 4 + 3 + 2 = 14 n-grams; the 4-token
        // prefix "\begin { tikzpicture }" contributes 10 shared ones.
        assert_eq!(all.len(), 2 * 14 - 10);
        assert_eq!(all, mine_trivial_ngrams(&corpus, 10_000, 4, "c").unwrap());

        let top1 = mine_trivial_ngrams(&corpus, 1, 4, "c").unwrap();
        assert_eq!(top1.len(), 1);
        let (_, fp) = top1.entries().next().unwrap();
        // Every shared n-gram appears twice; the winner has the smallest
        // fingerprint among them.
        let prefix = ["\\begin", "{", "tikzpicture", "}"];
        let best = (1..=4)
            .flat_map(|n| prefix.windows(n).map(|w| fingerprint(w.iter().copied())).collect::<Vec<_>>())
            .min()
            .unwrap();
        assert_eq!(fp, best);
    }

    #[test]
    fn mining_rejects_bad_input() {
        assert_eq!(mine_trivial_ngrams(&[], 5, 4, "x"), Err(CodeMetricError::EmptyCorpus));
        assert!(mine_trivial_ngrams(&[lex("a")], 0, 4, "x").is_err());
    }

    #[test]
    fn masking_removes_shared_boilerplate() {
        let corpus = [lex(&normalize("\\draw (0,0) -- (1,1);")), lex("\\draw (2,2) -- (3,3);")];
        let trivial = mine_trivial_ngrams(&corpus, 3, 1, "c").unwrap();
        // The three most frequent unigrams across both docs are "(", ")" and ","
        // (4 each); "--" / ";" / "\draw" appear twice.
        for g in ["(", ")", ","] {
            assert!(trivial.contains_ngram(&[g]), "{g}");
        }
        let (m, t) = masked_precision(&toks("\\draw ( 0 )"), &toks("\\draw ( 1 )"), 1, &trivial);
        assert_eq!((m, t), (1, 2));
    }

    #[test]
    fn sidecar_round_trip() {
        let trivial = mine_trivial_ngrams(&[lex("\\node at (0,0) {x};")], 5, 4, "snap-1").unwrap();
        let json = serde_json::to_string(&trivial).unwrap();
        assert!(json.contains("\"corpus_snapshot_id\":\"snap-1\""));
        let back: TrivialNgramSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, trivial);
    }
}
