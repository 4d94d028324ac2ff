//! Builds a few-shot prompt from labeled demonstrations and parses answers.

use ape::domain::{BinaryLabel, EntityPair, EntityRecord};
use ape::prompting::{parse_label, Demonstration, PromptTemplates};

fn record(title: &str, venue: &str) -> EntityRecord {
    EntityRecord::new([("title", title), ("venue", venue)]).expect("valid record")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let same = EntityPair::new(
        "d1",
        record("Active learning for entity matching", "SIGMOD"),
        record("Active Learning for Entity Matching.", "SIGMOD Conference"),
    );
    let different = EntityPair::new(
        "d2",
        record("Query optimization in column stores", "VLDB"),
        record("Crowdsourced entity resolution", "ICDE"),
    );
    let demonstrations = vec![
        Demonstration::new(same, BinaryLabel::Match, Some("Same title and venue.".into()), 1)?,
        Demonstration::new(different, BinaryLabel::NonMatch, Some("Unrelated titles.".into()), 1)?,
    ];
    let spec = PromptTemplates::default().prompt_spec(demonstrations)?;

    let target = EntityPair::new(
        "t1",
        record("Deep entity matching", "SIGMOD"),
        record("Deep Entity Matching with pre-trained models", "VLDB"),
    );
    println!("{}", spec.render(&target));

    for answer in ["Yes", "no.", "Reasoning... Answer: yes", "perhaps"] {
        println!("{answer:?} -> {:?}", parse_label(answer));
    }
    Ok(())
}
