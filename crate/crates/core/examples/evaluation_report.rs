//! Zero-shot evaluation of a prompt against a labeled set.

use ape::backend::{SyntheticBackend, SyntheticBackendConfig};
use ape::datagen::{benchmark_split, BenchmarkSpec};
use ape::evaluation::evaluate;
use ape::prompting::PromptTemplates;
use ape::sampling::RequestParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (_, eval) = benchmark_split(&BenchmarkSpec::default(), 11);
    let backend = SyntheticBackend::new(SyntheticBackendConfig::default())?;
    let spec = PromptTemplates::default().prompt_spec(Vec::new())?;
    let report = evaluate(&spec, &eval, &backend, &RequestParams::default(), 0)?;
    println!(
        "tp={} fp={} fn={} tn={} unparseable={}",
        report.true_positives,
        report.false_positives,
        report.false_negatives,
        report.true_negatives,
        report.unparseable_count
    );
    println!(
        "accuracy {:.3}  precision {:.3}  recall {:.3}  f1 {:.3}",
        report.accuracy, report.precision, report.recall, report.f1
    );
    Ok(())
}
