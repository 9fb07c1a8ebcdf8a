//! Final scores and ranking for the published challenge entries.
//!
//! ```bash
//! cargo run --example leaderboard
//! ```

use incident_report::metrics::{build_leaderboard, LeaderboardEntry};

fn main() -> anyhow::Result<()> {
    let entries: Vec<LeaderboardEntry> = [
        ("Jane Doe", 0.1635, 0.2614, 0.0036),
        ("Awais", 0.1832, 0.2614, 0.0046),
        ("NotSoDeep", 0.1911, 0.2602, 0.0040),
        ("iAmAbIrD", 0.1596, 0.2508, 0.0028),
        ("Turing Inc.", 0.1822, 0.2605, 0.0067),
    ]
    .into_iter()
    .map(|(name, spice, meteor, cider_d)| LeaderboardEntry {
        name: name.into(),
        spice,
        meteor,
        cider_d,
    })
    .collect();

    println!("{:<4} {:<12} {:>7} {:>7} {:>7} {:>7}", "rank", "team", "SPICE", "METEOR", "CIDEr-D", "final");
    for row in build_leaderboard(&entries)? {
        println!(
            "{:<4} {:<12} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            row.rank, row.name, row.spice, row.meteor, row.cider_d, row.final_score
        );
    }
    Ok(())
}
