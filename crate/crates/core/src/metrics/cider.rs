//! CIDEr-D: TF-IDF weighted n-gram consensus (n = 1..4) with clipped
//! candidate weights and a Gaussian length penalty, scaled by 10.
//!
//! Ordered maps keep float summation order, and so the scores, identical across runs.

use std::collections::{BTreeMap, BTreeSet};

use super::{tokenize, Corpus, MetricScores};

pub const CIDER_SIGMA: f64 = 6.0;
pub const CIDER_SCALE: f64 = 10.0;
const MAX_N: usize = 4;

type Gram<'a> = &'a [String];

fn counts(tokens: &[String], n: usize) -> BTreeMap<Gram<'_>, f64> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0.0) += 1.0;
        }
    }
    out
}

struct Weighted<'a> {
    per_n: Vec<BTreeMap<Gram<'a>, f64>>,
    norms: Vec<f64>,
    len: usize,
}

fn weigh<'a>(tokens: &'a [String], df: &BTreeMap<Gram<'_>, usize>, log_n: f64) -> Weighted<'a> {
    let mut per_n = Vec::with_capacity(MAX_N);
    let mut norms = Vec::with_capacity(MAX_N);
    for n in 1..=MAX_N {
        let mut v = counts(tokens, n);
        for (gram, tf) in v.iter_mut() {
            let d = df.get(*gram).copied().unwrap_or(0).max(1) as f64;
            *tf *= log_n - d.ln();
        }
        norms.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
        per_n.push(v);
    }
    Weighted {
        per_n,
        norms,
        len: tokens.len(),
    }
}

fn similarity(cand: &Weighted<'_>, reference: &Weighted<'_>) -> f64 {
    let delta = cand.len as f64 - reference.len as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut total = 0.0;
    for n in 0..MAX_N {
        let (c, r) = (&cand.per_n[n], &reference.per_n[n]);
        if cand.norms[n] == 0.0 || reference.norms[n] == 0.0 {
            continue;
        }
        let dot: f64 = c
            .iter()
            .filter_map(|(g, &hv)| r.get(*g).map(|&rv| hv.min(rv) * rv))
            .sum();
        total += dot / (cand.norms[n] * reference.norms[n]) * penalty;
    }
    total / MAX_N as f64
}

/// Per-item CIDEr-D in corpus order. Document frequencies come from the
/// corpus's reference sets.
pub fn cider_d_item_scores(corpus: &Corpus) -> Vec<f64> {
    let tokenized: Vec<(Vec<String>, Vec<Vec<String>>)> = corpus
        .items()
        .iter()
        .map(|it| {
            (
                tokenize(&it.candidate),
                it.references.iter().map(|r| tokenize(r)).collect(),
            )
        })
        .collect();

    let mut df: BTreeMap<Gram<'_>, usize> = BTreeMap::new();
    for (_, refs) in &tokenized {
        let mut seen: BTreeSet<Gram<'_>> = BTreeSet::new();
        for r in refs {
            for n in 1..=MAX_N {
                if r.len() >= n {
                    seen.extend(r.windows(n));
                }
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let log_n = (tokenized.len().max(1) as f64).ln();

    tokenized
        .iter()
        .map(|(cand, refs)| {
            let c = weigh(cand, &df, log_n);
            let mean = refs
                .iter()
                .map(|r| similarity(&c, &weigh(r, &df, log_n)))
                .sum::<f64>()
                / refs.len() as f64;
            mean * CIDER_SCALE
        })
        .collect()
}

pub fn cider_d(corpus: &Corpus) -> MetricScores {
    let scores = cider_d_item_scores(corpus);
    let per_item: BTreeMap<String, f64> = corpus
        .items()
        .iter()
        .zip(scores)
        .map(|(it, s)| (it.item_id.clone(), s))
        .collect();
    MetricScores::from_items(per_item)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::CorpusItem;

    fn item(id: &str, cand: &str, refs: &[&str]) -> CorpusItem {
        CorpusItem {
            item_id: id.into(),
            candidate: cand.into(),
            references: refs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn verbatim_candidate_scores_ten() {
        let c = Corpus::new(vec![
            item("1", "a small dog crosses the road", &["a small dog crosses the road"]),
            item("2", "truck brakes hard ahead", &["white truck brakes hard ahead now"]),
        ])
        .unwrap();
        let s = cider_d_item_scores(&c);
        assert!((s[0] - 10.0).abs() < 1e-9, "{}", s[0]);
    }

    #[test]
    fn no_shared_unigram_scores_zero() {
        let c = Corpus::new(vec![
            item("1", "purple elephants sing", &["a dog crosses the road"]),
            item("2", "x", &["y"]),
        ])
        .unwrap();
        assert_eq!(cider_d_item_scores(&c)[0], 0.0);
    }

    #[test]
    fn single_item_corpus_has_zero_idf() {
        let c = Corpus::new(vec![item("1", "a dog", &["a dog"])]).unwrap();
        assert_eq!(cider_d_item_scores(&c)[0], 0.0);
    }
}
