//! How the labeling window k affects detection when the motion change
//! begins a fixed number of pitches before the disabled-list placement.
//!
//! cargo run --release --example k_sweep

use pitchflow::config::PipelineConfig;
use pitchflow::dataset::{preprocess_corpus, synth_generate, Cohort, Protocol};
use pitchflow::protocols::{run_experiment, Experiment};

fn main() -> pitchflow::Result<()> {
    let mut cfg = PipelineConfig::compact();
    cfg.synth.left_pitchers = 2;
    cfg.synth.right_pitchers = 0;
    // Enough healthy pitches that large k still labels a minority injured.
    cfg.synth.healthy_per_pitcher = 200;
    let corpus = synth_generate(&cfg.synth)?;
    let flows = preprocess_corpus(corpus.manifest(), &corpus, &cfg.preprocess)?;
    let spec = cfg.experiment_spec(Experiment::KSweep {
        protocol: Protocol::Cohort {
            cohort: Cohort::Left,
        },
        ks: vec![10, 20, 30, 50, 75],
    });
    let report = run_experiment(&spec, corpus.manifest(), &flows)?;
    println!("{}", report.tables[0].table.to_markdown());
    Ok(())
}
