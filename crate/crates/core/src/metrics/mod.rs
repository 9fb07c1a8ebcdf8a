//! Caption metrics and leaderboard assembly.
//!
//! CIDEr-D and METEOR are computed here; SPICE is only ingested from an
//! external sidecar. The headline number is the mean of the three, rounded
//! half-up to four decimals.

mod cider;
mod meteor;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cider::{cider_d, cider_d_item_scores, CIDER_SCALE, CIDER_SIGMA};
pub use meteor::{align, meteor, meteor_tokens, Alignment, MeteorParams, Stems};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("final score undefined: missing {0}")]
    UndefinedScore(String),
    #[error("duplicate leaderboard entry `{0}`")]
    DuplicateEntry(String),
    #[error("malformed {what} at line {line}: {message}")]
    Malformed {
        what: &'static str,
        line: usize,
        message: String,
    },
}

/// Lowercases, splits on whitespace and makes every punctuation or symbol
/// character its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub item_id: String,
    pub candidate: String,
    pub references: Vec<String>,
}

/// Candidates with their references. Item ids are unique and every item has
/// at least one reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Corpus {
    items: Vec<CorpusItem>,
}

impl Corpus {
    pub fn new(items: Vec<CorpusItem>) -> Result<Self, MetricsError> {
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.item_id.as_str()) {
                return Err(MetricsError::InvalidCorpus(format!(
                    "duplicate item id `{}`",
                    item.item_id
                )));
            }
            if item.references.is_empty() {
                return Err(MetricsError::InvalidCorpus(format!(
                    "item `{}` has no references",
                    item.item_id
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[CorpusItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Parses the JSON-lines corpus format `{item_id, candidate, references[]}`.
    pub fn from_jsonl(text: &str) -> Result<Self, MetricsError> {
        let items = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str::<CorpusItem>(l).map_err(|e| MetricsError::Malformed {
                    what: "corpus line",
                    line: n + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(items)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "SPICE")]
    Spice,
    #[serde(rename = "METEOR")]
    Meteor,
    #[serde(rename = "CIDEr-D")]
    CiderD,
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::Spice => "SPICE",
            MetricName::Meteor => "METEOR",
            MetricName::CiderD => "CIDEr-D",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub per_item: BTreeMap<String, f64>,
    pub corpus: f64,
}

impl MetricScores {
    /// Corpus score is the mean of the per-item scores.
    pub fn from_items(per_item: BTreeMap<String, f64>) -> Self {
        let corpus = if per_item.is_empty() {
            0.0
        } else {
            per_item.values().sum::<f64>() / per_item.len() as f64
        };
        Self { per_item, corpus }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<MetricName, MetricScores>,
    /// Mean of SPICE, METEOR and CIDEr-D; `None` unless all three are present.
    pub final_score: Option<f64>,
}

impl MetricReport {
    pub fn new(metrics: BTreeMap<MetricName, MetricScores>) -> Self {
        let corpus = |m| metrics.get(&m).map(|s: &MetricScores| s.corpus);
        let final_score = final_score(
            corpus(MetricName::Spice),
            corpus(MetricName::Meteor),
            corpus(MetricName::CiderD),
        )
        .ok();
        Self {
            metrics,
            final_score,
        }
    }

    pub fn corpus(&self, metric: MetricName) -> Option<f64> {
        self.metrics.get(&metric).map(|s| s.corpus)
    }
}

/// Computes CIDEr-D and METEOR for a corpus. SPICE, when supplied, is
/// attached as-is.
pub fn score_corpus(corpus: &Corpus, spice: Option<&BTreeMap<String, f64>>) -> MetricReport {
    let mut metrics = BTreeMap::new();
    metrics.insert(MetricName::CiderD, cider_d(corpus));
    metrics.insert(MetricName::Meteor, meteor(corpus, &MeteorParams::default()));
    if let Some(spice) = spice {
        let per_item = corpus
            .items()
            .iter()
            .filter_map(|it| spice.get(&it.item_id).map(|v| (it.item_id.clone(), *v)))
            .collect();
        metrics.insert(MetricName::Spice, MetricScores::from_items(per_item));
    }
    MetricReport::new(metrics)
}

/// Fixed-point scale used for exact decimal arithmetic on metric values.
const DECIMAL_SCALE: u32 = 20;

/// Exact decimal value of the shortest representation of `x`, scaled by
/// 10^20. Digits beyond the 20th decimal are truncated.
fn scaled_decimal(x: f64) -> i128 {
    assert!(x.is_finite(), "metric values must be finite");
    let s = format!("{x}");
    let (neg, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.as_str()),
    };
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let frac: String = frac
        .chars()
        .chain(std::iter::repeat('0'))
        .take(DECIMAL_SCALE as usize)
        .collect();
    let v: i128 = int.parse::<i128>().expect("integer part") * 10i128.pow(DECIMAL_SCALE)
        + frac.parse::<i128>().expect("fraction part");
    if neg {
        -v
    } else {
        v
    }
}

/// Mean of `values`, rounded half-up to `decimals` places using exact
/// decimal arithmetic on the values as written.
pub fn mean_round_half_up(values: &[f64], decimals: u32) -> f64 {
    assert!(!values.is_empty() && decimals <= DECIMAL_SCALE);
    let sum: i128 = values.iter().map(|&v| scaled_decimal(v)).sum();
    let den = values.len() as i128 * 10i128.pow(DECIMAL_SCALE - decimals);
    let q = (2 * sum + den).div_euclid(2 * den);
    q as f64 / 10f64.powi(decimals as i32)
}

/// Leaderboard final score: mean of the three headline metrics, 4 decimals, half-up.
pub fn final_score(
    spice: Option<f64>,
    meteor: Option<f64>,
    cider_d: Option<f64>,
) -> Result<f64, MetricsError> {
    let missing: Vec<&str> = [("SPICE", spice), ("METEOR", meteor), ("CIDEr-D", cider_d)]
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::UndefinedScore(missing.join(", ")));
    }
    Ok(mean_round_half_up(
        &[spice.unwrap(), meteor.unwrap(), cider_d.unwrap()],
        4,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub name: String,
    pub spice: f64,
    pub meteor: f64,
    pub cider_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub name: String,
    pub spice: f64,
    pub meteor: f64,
    pub cider_d: f64,
    pub final_score: f64,
}

/// Orders entries by final score, best first. Entries whose rounded finals
/// are equal share a rank and the next rank is skipped (1, 1, 3).
pub fn build_leaderboard(entries: &[LeaderboardEntry]) -> Result<Vec<LeaderboardRow>, MetricsError> {
    let mut names = HashSet::new();
    for e in entries {
        if !names.insert(e.name.as_str()) {
            return Err(MetricsError::DuplicateEntry(e.name.clone()));
        }
    }
    let mut keyed: Vec<(i128, &LeaderboardEntry)> = entries
        .iter()
        .map(|e| {
            let sum = scaled_decimal(e.spice) + scaled_decimal(e.meteor) + scaled_decimal(e.cider_d);
            (sum, e)
        })
        .collect();
    // Exact unrounded order, so the ranking is invariant to uniform rescaling.
    keyed.sort_by(|a, b| b.0.cmp(&a.0));
    let mut rows: Vec<LeaderboardRow> = Vec::with_capacity(keyed.len());
    for (pos, (_, e)) in keyed.into_iter().enumerate() {
        let final_score = mean_round_half_up(&[e.spice, e.meteor, e.cider_d], 4);
        let rank = match rows.last() {
            Some(prev) if prev.final_score.partial_cmp(&final_score) == Some(Ordering::Equal) => {
                prev.rank
            }
            _ => pos + 1,
        };
        rows.push(LeaderboardRow {
            rank,
            name: e.name.clone(),
            spice: e.spice,
            meteor: e.meteor,
            cider_d: e.cider_d,
            final_score,
        });
    }
    Ok(rows)
}

/// Per-item SPICE values. Accepts either a flat `{item_id: value}` map or
/// `{"metrics": {"SPICE": {...}, "METEOR": {...}, "CIDEr-D": {...}}}` for
/// supplying any metric externally.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalScores {
    pub per_metric: BTreeMap<MetricName, BTreeMap<String, f64>>,
}

impl ExternalScores {
    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        #[derive(Deserialize)]
        struct Nested {
            metrics: BTreeMap<MetricName, BTreeMap<String, f64>>,
        }
        let bad = |e: serde_json::Error| MetricsError::Malformed {
            what: "score sidecar",
            line: e.line(),
            message: e.to_string(),
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
        if value.get("metrics").is_some() {
            let nested: Nested = serde_json::from_value(value).map_err(bad)?;
            return Ok(Self {
                per_metric: nested.metrics,
            });
        }
        let flat: BTreeMap<String, f64> = serde_json::from_value(value).map_err(bad)?;
        Ok(Self {
            per_metric: BTreeMap::from([(MetricName::Spice, flat)]),
        })
    }

    /// Replaces or adds externally supplied metrics in `report`, restricted
    /// to the report's items, and recomputes the final score.
    pub fn apply(&self, report: &MetricReport, item_ids: &[String]) -> MetricReport {
        let mut metrics = report.metrics.clone();
        for (name, values) in &self.per_metric {
            let per_item = item_ids
                .iter()
                .filter_map(|id| values.get(id).map(|v| (id.clone(), *v)))
                .collect();
            metrics.insert(*name, MetricScores::from_items(per_item));
        }
        MetricReport::new(metrics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(
            tokenize("A small dog crosses."),
            vec!["a", "small", "dog", "crosses", "."]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("LEFT-to-right"),
            vec!["left", "-", "to", "-", "right"]
        );
        assert_eq!(tokenize("  two\t\nspaces  "), vec!["two", "spaces"]);
    }

    #[test]
    fn final_score_rows() {
        assert_eq!(final_score(Some(0.1822), Some(0.2605), Some(0.0067)), Ok(0.1498));
        assert_eq!(final_score(Some(0.1717), Some(0.2489), Some(0.0054)), Ok(0.1420));
        assert_eq!(final_score(Some(0.1911), Some(0.2602), Some(0.0040)), Ok(0.1518));
    }

    #[test]
    fn final_score_requires_all_three() {
        let err = final_score(None, Some(0.2), Some(0.1)).unwrap_err();
        assert_eq!(err, MetricsError::UndefinedScore("SPICE".into()));
    }

    #[test]
    fn rounding_is_half_up_on_exact_decimals() {
        // 0.00015 is not representable in binary; the decimal value is what counts.
        assert_eq!(mean_round_half_up(&[0.00015], 4), 0.0002);
        assert_eq!(mean_round_half_up(&[0.00014999], 4), 0.0001);
        assert_eq!(mean_round_half_up(&[-0.00015], 4), -0.0001);
        assert_eq!(mean_round_half_up(&[0.1, 0.2, 0.3], 4), 0.2);
    }

    #[test]
    fn leaderboard_ties_share_rank() {
        let e = |name: &str, s: f64| LeaderboardEntry {
            name: name.into(),
            spice: s,
            meteor: s,
            cider_d: s,
        };
        let rows = build_leaderboard(&[e("a", 0.5), e("b", 0.7), e("c", 0.5)]).unwrap();
        let ranks: Vec<(usize, &str)> = rows.iter().map(|r| (r.rank, r.name.as_str())).collect();
        assert_eq!(ranks, vec![(1, "b"), (2, "a"), (2, "c")]);
        let single = build_leaderboard(&[e("only", 0.1)]).unwrap();
        assert_eq!(single[0].rank, 1);
        assert!(matches!(
            build_leaderboard(&[e("x", 0.1), e("x", 0.2)]),
            Err(MetricsError::DuplicateEntry(_))
        ));
    }

    #[test]
    fn corpus_validation() {
        let item = |id: &str, refs: Vec<&str>| CorpusItem {
            item_id: id.into(),
            candidate: "c".into(),
            references: refs.into_iter().map(String::from).collect(),
        };
        assert!(Corpus::new(vec![item("a", vec!["r"]), item("a", vec!["r"])]).is_err());
        assert!(Corpus::new(vec![item("a", vec![])]).is_err());
        assert!(Corpus::new(vec![item("a", vec!["r"])]).is_ok());
    }

    #[test]
    fn sidecar_shapes() {
        let flat = ExternalScores::parse(r#"{"v1": 0.2, "v2": 0.4}"#).unwrap();
        assert_eq!(flat.per_metric[&MetricName::Spice]["v2"], 0.4);
        let nested =
            ExternalScores::parse(r#"{"metrics": {"METEOR": {"v1": 0.3}, "CIDEr-D": {}}}"#)
                .unwrap();
        assert_eq!(nested.per_metric[&MetricName::Meteor]["v1"], 0.3);
        assert!(ExternalScores::parse("[1,2]").is_err());
    }
}
