//! Vote ratios, committee entropy and the temperature schedule.

use ape::domain::BinaryLabel::{Match, NonMatch};
use ape::kernel::{entropy, ordered_selection_count, positive_ratio, temperature_schedule, vote_entropy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("temperatures for m=3: {:?}", temperature_schedule(3)?);
    println!("temperatures for m=5: {:?}", temperature_schedule(5)?);

    for votes in [
        vec![Match, Match, Match],
        vec![Match, NonMatch, Match],
        vec![NonMatch, NonMatch, Match],
        vec![Match, NonMatch],
    ] {
        println!(
            "{:?}: R+ = {:.3}, H = {:.4}",
            votes,
            positive_ratio(&votes)?,
            vote_entropy(&votes)?
        );
    }

    for r in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0] {
        println!("H({r}) = {:.6}", entropy(r)?);
    }

    // Ordered selections of 3 demonstrations from 100 candidates.
    println!("orderings: {}", ordered_selection_count(100, 3)?);
    Ok(())
}
