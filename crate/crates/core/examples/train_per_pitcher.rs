//! Train one injury detector per pitcher and print the per-pitcher table.
//!
//! cargo run --release --example train_per_pitcher [pitcher ...]

use pitchflow::config::PipelineConfig;
use pitchflow::dataset::{preprocess_corpus, synth_generate};
use pitchflow::protocols::{run_experiment, Experiment};

fn main() -> pitchflow::Result<()> {
    let mut pitchers: Vec<String> = std::env::args().skip(1).collect();
    if pitchers.is_empty() {
        pitchers = vec!["L01".into(), "R01".into()];
    }
    let cfg = PipelineConfig::compact();
    let corpus = synth_generate(&cfg.synth)?;
    let flows = preprocess_corpus(corpus.manifest(), &corpus, &cfg.preprocess)?;
    let spec = cfg.experiment_spec(Experiment::PerPitcher { pitchers });
    let report = run_experiment(&spec, corpus.manifest(), &flows)?;
    for run in &report.runs {
        println!(
            "{}: {} train / {} test pitches, final loss {:.3}",
            run.name, run.audit.train, run.audit.test, run.final_loss
        );
    }
    println!("\n{}", report.tables[0].table.to_markdown());
    Ok(())
}
