//! Scores a small pool with the offline synthetic backend and picks the most
//! uncertain pairs. No network access is needed.

use ape::backend::{pair_similarity, SyntheticBackend, SyntheticBackendConfig};
use ape::datagen::grid_pool;
use ape::prompting::PromptTemplates;
use ape::sampling::{score_pairs, select_top_k, RequestParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool = grid_pool(21, "pair-", 0.5);
    let backend = SyntheticBackend::new(SyntheticBackendConfig::default().with_seed(42))?;
    let spec = PromptTemplates::default().prompt_spec(Vec::new())?;

    let pairs: Vec<_> = pool.pairs().iter().collect();
    let scores = score_pairs(&pairs, &spec, 3, &backend, &RequestParams::default())?;
    for (pair, score) in pool.pairs().iter().zip(&scores) {
        println!(
            "{}  sim={:.2}  votes={:?}  H={:.3}",
            pair.id,
            pair_similarity(pair),
            score.votes.iter().map(|v| v.as_u8()).collect::<Vec<_>>(),
            score.entropy
        );
    }
    println!("top 3 by entropy: {:?}", select_top_k(&scores, 3)?);
    Ok(())
}
