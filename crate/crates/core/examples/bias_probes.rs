//! Game-identity and temporal-order probes on healthy games.
//!
//! cargo run --release --example bias_probes

use pitchflow::config::PipelineConfig;
use pitchflow::dataset::{preprocess_corpus, synth_generate};
use pitchflow::protocols::{run_experiment, Experiment};

fn main() -> pitchflow::Result<()> {
    let mut cfg = PipelineConfig::compact();
    cfg.train.epochs = 30;
    let corpus = synth_generate(&cfg.synth)?;
    let flows = preprocess_corpus(corpus.manifest(), &corpus, &cfg.preprocess)?;
    let pitchers: Vec<String> = vec!["L01".into(), "R01".into()];
    for experiment in [
        Experiment::GameProbe {
            pitchers: pitchers.clone(),
        },
        Experiment::OrderProbe {
            pitchers: pitchers.clone(),
            seeds: vec![1, 2],
        },
    ] {
        let report = run_experiment(&cfg.experiment_spec(experiment), corpus.manifest(), &flows)?;
        for probe in &report.probes {
            println!("{}\n\n{}", probe.title, probe.table.to_markdown());
        }
    }
    Ok(())
}
