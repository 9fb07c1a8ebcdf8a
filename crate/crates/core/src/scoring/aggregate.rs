use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SessionPlan, VoteRecord};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub pair_id: String,
    pub video_id: String,
    /// Votes for the first and second run.
    pub votes: [u32; 2],
    pub ties: u32,
    /// Run id with a strict majority of the pair's votes; `None` is a tie.
    pub winner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStanding {
    pub run_id: String,
    pub label: String,
    pub wins: u32,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResults {
    pub session_id: String,
    pub total_votes: usize,
    pub pairs: Vec<PairOutcome>,
    /// Best first; equal win counts share a rank.
    pub standings: Vec<RunStanding>,
    pub decided_pairs: u32,
    /// Two-sided exact sign test over decided pairs.
    pub sign_test_p: f64,
    /// True when the sign test does not reject equal preference.
    pub no_significant_difference: bool,
}

/// Two-sided exact binomial sign test: probability under p = 1/2 of a split
/// at least as lopsided as `wins` vs `losses`.
pub fn sign_test_p(wins: u32, losses: u32) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    // log C(n, i) - n ln 2, accumulated to stay finite for large n.
    let mut log_pmf = -(n as f64) * std::f64::consts::LN_2;
    let mut tail = log_pmf.exp();
    for i in 1..=k {
        log_pmf += ((n - i + 1) as f64).ln() - (i as f64).ln();
        tail += log_pmf.exp();
    }
    (2.0 * tail).min(1.0)
}

/// Per-pair strict-majority outcomes and a ranking by pairs won.
pub fn aggregate(plan: &SessionPlan, votes: &[VoteRecord]) -> SessionResults {
    let mut tallies: BTreeMap<&str, ([u32; 2], u32)> = BTreeMap::new();
    for v in votes {
        let entry = tallies.entry(v.pair_id.as_str()).or_default();
        match v.preferred_run.as_deref() {
            Some(r) if r == plan.runs[0].run_id => entry.0[0] += 1,
            Some(r) if r == plan.runs[1].run_id => entry.0[1] += 1,
            Some(other) => tracing::warn!(run = other, pair = %v.pair_id, "vote for unknown run ignored"),
            None => entry.1 += 1,
        }
    }

    let mut wins = [0u32; 2];
    let pairs: Vec<PairOutcome> = plan
        .pairs
        .iter()
        .map(|p| {
            let (votes, ties) = tallies.get(p.pair_id.as_str()).copied().unwrap_or_default();
            let total = votes[0] + votes[1] + ties;
            let winner = (0..2).find(|&i| 2 * votes[i] > total);
            if let Some(i) = winner {
                wins[i] += 1;
            }
            PairOutcome {
                pair_id: p.pair_id.clone(),
                video_id: p.video_id.clone(),
                votes,
                ties,
                winner: winner.map(|i| plan.runs[i].run_id.clone()),
            }
        })
        .collect();

    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| wins[b].cmp(&wins[a]));
    let standings = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| RunStanding {
            run_id: plan.runs[i].run_id.clone(),
            label: plan.runs[i].label.clone(),
            wins: wins[i],
            rank: if pos == 1 && wins[order[0]] == wins[i] { 1 } else { pos + 1 },
        })
        .collect();

    let p = sign_test_p(wins[0], wins[1]);
    SessionResults {
        session_id: plan.session_id.clone(),
        total_votes: votes.len(),
        pairs,
        standings,
        decided_pairs: wins[0] + wins[1],
        sign_test_p: p,
        no_significant_difference: p >= SIGNIFICANCE_LEVEL,
    }
}
