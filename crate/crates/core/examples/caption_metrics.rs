//! CIDEr-D and METEOR on the desk corpus, plus the METEOR alignment of one pair.
//!
//! ```bash
//! cargo run --example caption_metrics
//! ```

use std::path::Path;

use incident_report::metrics::{
    align, score_corpus, tokenize, Corpus, MetricName, MeteorParams, Stems,
};

fn main() -> anyhow::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/desk_corpus.jsonl");
    let corpus = Corpus::from_jsonl(&std::fs::read_to_string(path)?)?;
    let report = score_corpus(&corpus, None);

    println!("{:<6} {:>10} {:>10}", "item", "CIDEr-D", "METEOR");
    for item in corpus.items() {
        let id = &item.item_id;
        println!(
            "{:<6} {:>10.6} {:>10.6}",
            id,
            report.metrics[&MetricName::CiderD].per_item[id],
            report.metrics[&MetricName::Meteor].per_item[id]
        );
    }
    println!(
        "corpus {:>10.6} {:>10.6}  final: {}",
        report.corpus(MetricName::CiderD).unwrap(),
        report.corpus(MetricName::Meteor).unwrap(),
        report.final_score.map_or("n/a (no SPICE)".into(), |f| format!("{f:.4}"))
    );

    let stems = Stems::english();
    let cand = tokenize("The cars crossed the junction slowly.");
    let reference = tokenize("Slowly the car crosses the junction.");
    let a = align(&cand, &reference, &stems, MeteorParams::default().search_budget);
    println!(
        "\nalignment: {} match(es), {} exact, {} chunk(s), exhaustive: {}",
        a.matches(),
        a.exact_matches,
        a.chunks,
        a.exhaustive
    );
    for (c, r) in &a.pairs {
        println!("  {:<10} ~ {}", cand[*c], reference[*r]);
    }
    Ok(())
}
