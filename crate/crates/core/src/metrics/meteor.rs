//! METEOR with exact and stem matching stages.
//!
//! The alignment has the maximum number of exact matches, then the maximum
//! number of stem matches among the remaining tokens. Among all such
//! alignments the one with the fewest chunks is wanted. A left-to-right
//! greedy alignment that prefers extending the current chunk gives the
//! starting point; a bounded branch-and-bound pass then looks for an
//! alignment with fewer chunks. For short sentences the pass always runs to
//! completion, so the chunk count is the true minimum.

use std::collections::{BTreeMap, HashMap};

use rust_stemmers::{Algorithm, Stemmer};

use super::{tokenize, Corpus, MetricScores};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Node limit for the chunk-minimisation search.
    pub search_budget: usize,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
            search_budget: 200_000,
        }
    }
}

/// English suffix-stripping stemmer.
pub struct Stems {
    stemmer: Stemmer,
}

impl Stems {
    pub fn english() -> Self {
        Self {
            stemmer: Stemmer::create(Algorithm::English),
        }
    }

    pub fn stem(&self, token: &str) -> String {
        self.stemmer.stem(token).into_owned()
    }
}

impl Default for Stems {
    fn default() -> Self {
        Self::english()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// Matched (candidate position, reference position), ordered by candidate position.
    pub pairs: Vec<(usize, usize)>,
    pub exact_matches: usize,
    pub chunks: usize,
    /// Whether the chunk search finished within its budget.
    pub exhaustive: bool,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Exact,
    Stem,
}

fn count_chunks(assign: &[Option<usize>]) -> usize {
    let mut chunks = 0;
    for (i, p) in assign.iter().enumerate() {
        if let Some(j) = *p {
            let continues = i > 0 && j > 0 && assign[i - 1] == Some(j - 1);
            if !continues {
                chunks += 1;
            }
        }
    }
    chunks
}

struct Problem<'a> {
    cand: &'a [String],
    reference: &'a [String],
    cstem: Vec<String>,
    rstem: Vec<String>,
    cword: Vec<usize>,
    rword: Vec<usize>,
    vocab: usize,
    target_exact: usize,
    target_total: usize,
}

impl<'a> Problem<'a> {
    fn new(cand: &'a [String], reference: &'a [String], stems: &Stems) -> Self {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut id = |t: &'a String| {
            let next = ids.len();
            *ids.entry(t.as_str()).or_insert(next)
        };
        let cword: Vec<usize> = cand.iter().map(&mut id).collect();
        let rword: Vec<usize> = reference.iter().map(&mut id).collect();
        let vocab = ids.len();
        let cstem: Vec<String> = cand.iter().map(|t| stems.stem(t)).collect();
        let rstem: Vec<String> = reference.iter().map(|t| stems.stem(t)).collect();

        let mut cc = vec![0usize; vocab];
        let mut rc = vec![0usize; vocab];
        cword.iter().for_each(|&w| cc[w] += 1);
        rword.iter().for_each(|&w| rc[w] += 1);
        let target_exact = (0..vocab).map(|w| cc[w].min(rc[w])).sum();

        // Leftover words after the exact stage, grouped by stem.
        let mut stem_of = vec![String::new(); vocab];
        for (i, &w) in cword.iter().enumerate() {
            stem_of[w] = cstem[i].clone();
        }
        for (j, &w) in rword.iter().enumerate() {
            stem_of[w] = rstem[j].clone();
        }
        let mut left_c: HashMap<&str, usize> = HashMap::new();
        let mut left_r: HashMap<&str, usize> = HashMap::new();
        for w in 0..vocab {
            let m = cc[w].min(rc[w]);
            if cc[w] > m {
                *left_c.entry(stem_of[w].as_str()).or_default() += cc[w] - m;
            }
            if rc[w] > m {
                *left_r.entry(stem_of[w].as_str()).or_default() += rc[w] - m;
            }
        }
        let target_stem: usize = left_c
            .iter()
            .map(|(s, &n)| n.min(left_r.get(s).copied().unwrap_or(0)))
            .sum();

        Self {
            cand,
            reference,
            cstem,
            rstem,
            cword,
            rword,
            vocab,
            target_exact,
            target_total: target_exact + target_stem,
        }
    }

    fn kind(&self, i: usize, j: usize) -> Option<Kind> {
        if self.cand[i] == self.reference[j] {
            Some(Kind::Exact)
        } else if self.cstem[i] == self.rstem[j] {
            Some(Kind::Stem)
        } else {
            None
        }
    }

    fn greedy(&self) -> Vec<Option<usize>> {
        let (m, n) = (self.cand.len(), self.reference.len());
        let mut assign = vec![None; m];
        let mut used = vec![false; n];
        for stage in [Kind::Exact, Kind::Stem] {
            for i in 0..m {
                if assign[i].is_some() {
                    continue;
                }
                let ok = |j: usize, used: &[bool]| !used[j] && self.kind(i, j) == Some(stage);
                let next = i
                    .checked_sub(1)
                    .and_then(|p| assign[p])
                    .map(|pj| pj + 1)
                    .filter(|&j| j < n && ok(j, &used));
                if let Some(j) = next.or_else(|| (0..n).find(|&j| ok(j, &used))) {
                    used[j] = true;
                    assign[i] = Some(j);
                }
            }
        }
        assign
    }
}

struct Search<'p, 'a> {
    p: &'p Problem<'a>,
    assign: Vec<Option<usize>>,
    used: Vec<bool>,
    rem_c: Vec<usize>,
    unused_r: Vec<usize>,
    best: Vec<Option<usize>>,
    best_chunks: usize,
    nodes: usize,
    budget: usize,
    exhausted_budget: bool,
}

impl Search<'_, '_> {
    fn exact_possible(&self) -> usize {
        (0..self.p.vocab)
            .map(|w| self.rem_c[w].min(self.unused_r[w]))
            .sum()
    }

    fn run(&mut self, i: usize, exact: usize, total: usize, chunks: usize) {
        if self.best_chunks <= 1 || self.exhausted_budget {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted_budget = true;
            return;
        }
        let m = self.p.cand.len();
        let n = self.p.reference.len();
        let need_total = self.p.target_total - total;
        let need_exact = self.p.target_exact - exact;
        if i == m {
            if need_total == 0 && need_exact == 0 && chunks < self.best_chunks {
                self.best_chunks = chunks;
                self.best = self.assign.clone();
            }
            return;
        }
        if m - i < need_total || self.exact_possible() < need_exact {
            return;
        }
        let prev = i.checked_sub(1).and_then(|p| self.assign[p]);
        let continuation = prev.map(|pj| pj + 1).filter(|&j| j < n && !self.used[j]);
        let bound = chunks + usize::from(need_total > 0 && continuation.is_none());
        if bound >= self.best_chunks {
            return;
        }

        let w = self.p.cword[i];
        self.rem_c[w] -= 1;
        let mut options: Vec<usize> = Vec::new();
        if let Some(j) = continuation.filter(|&j| self.p.kind(i, j).is_some()) {
            options.push(j);
        }
        for kind in [Kind::Exact, Kind::Stem] {
            options.extend((0..n).filter(|&j| {
                !self.used[j] && Some(j) != continuation && self.p.kind(i, j) == Some(kind)
            }));
        }
        for j in options {
            let kind = self.p.kind(i, j).expect("compatible");
            let new_chunk = usize::from(prev.map(|pj| pj + 1) != Some(j));
            if chunks + new_chunk >= self.best_chunks {
                continue;
            }
            let rw = self.p.rword[j];
            self.used[j] = true;
            self.unused_r[rw] -= 1;
            self.assign[i] = Some(j);
            self.run(
                i + 1,
                exact + usize::from(kind == Kind::Exact),
                total + 1,
                chunks + new_chunk,
            );
            self.assign[i] = None;
            self.unused_r[rw] += 1;
            self.used[j] = false;
        }
        self.run(i + 1, exact, total, chunks);
        self.rem_c[w] += 1;
    }
}

/// Aligns candidate tokens to reference tokens (exact stage, then stem stage)
/// with as few chunks as the search budget allows.
pub fn align(cand: &[String], reference: &[String], stems: &Stems, budget: usize) -> Alignment {
    let p = Problem::new(cand, reference, stems);
    let greedy = p.greedy();
    let greedy_chunks = count_chunks(&greedy);
    let mut rem_c = vec![0; p.vocab];
    let mut unused_r = vec![0; p.vocab];
    p.cword.iter().for_each(|&w| rem_c[w] += 1);
    p.rword.iter().for_each(|&w| unused_r[w] += 1);
    let mut search = Search {
        p: &p,
        assign: vec![None; cand.len()],
        used: vec![false; reference.len()],
        rem_c,
        unused_r,
        best: greedy,
        best_chunks: greedy_chunks,
        nodes: 0,
        budget,
        exhausted_budget: false,
    };
    search.run(0, 0, 0, 0);
    let pairs: Vec<(usize, usize)> = search
        .best
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    let exact_matches = pairs
        .iter()
        .filter(|&&(i, j)| cand[i] == reference[j])
        .count();
    Alignment {
        pairs,
        exact_matches,
        chunks: search.best_chunks,
        exhaustive: !search.exhausted_budget,
    }
}

fn score_alignment(a: &Alignment, cand_len: usize, ref_len: usize, params: &MeteorParams) -> f64 {
    let matches = a.matches();
    if matches == 0 || cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let precision = matches as f64 / cand_len as f64;
    let recall = matches as f64 / ref_len as f64;
    let fmean = precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    let penalty = params.gamma * (a.chunks as f64 / matches as f64).powf(params.beta);
    fmean * (1.0 - penalty)
}

/// Sentence-level METEOR against several references: the best of the per-reference scores.
pub fn meteor_tokens(
    cand: &[String],
    references: &[Vec<String>],
    params: &MeteorParams,
    stems: &Stems,
) -> f64 {
    references
        .iter()
        .map(|r| {
            let a = align(cand, r, stems, params.search_budget);
            score_alignment(&a, cand.len(), r.len(), params)
        })
        .fold(0.0, f64::max)
}

pub fn meteor(corpus: &Corpus, params: &MeteorParams) -> MetricScores {
    let stems = Stems::english();
    let per_item: BTreeMap<String, f64> = corpus
        .items()
        .iter()
        .map(|it| {
            let cand = tokenize(&it.candidate);
            let refs: Vec<Vec<String>> = it.references.iter().map(|r| tokenize(r)).collect();
            (
                it.item_id.clone(),
                meteor_tokens(&cand, &refs, params, &stems),
            )
        })
        .collect();
    MetricScores::from_items(per_item)
}
