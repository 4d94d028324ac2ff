//! Random sampling against self-consistency sampling on synthetic benchmarks,
//! each driven by the simulated annotator for a few iterations.

use ape::backend::{SyntheticBackend, SyntheticBackendConfig};
use ape::datagen::{benchmark_split, BenchmarkSpec};
use ape::sampling::{SamplingConfig, SamplingMode, Strategy};
use ape::session::{run_simulated, SessionConfig, SessionState};

fn final_f1(strategy: Strategy, seed: u64) -> Result<f64, Box<dyn std::error::Error>> {
    let (pool, eval) = benchmark_split(&BenchmarkSpec::default(), seed);
    let config = SessionConfig::for_sampling(SamplingConfig {
        strategy,
        mode: SamplingMode::Incremental,
        batch_size: 2,
        seed,
        ..SamplingConfig::default()
    });
    let backend = SyntheticBackend::new(SyntheticBackendConfig::default().with_seed(seed))?;
    let mut state = SessionState::new(format!("compare-{seed}"), config, pool, eval)?;
    run_simulated(&mut state, &backend, 3)?;
    Ok(state.evaluation_history().last().map_or(0.0, |r| r.f1))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("seed  random  self-consistency");
    for seed in 0..5 {
        let random = final_f1(Strategy::Random, seed)?;
        let sc = final_f1(Strategy::SelfConsistency, seed)?;
        println!("{seed:>4}  {random:.4}  {sc:.4}");
    }
    Ok(())
}
