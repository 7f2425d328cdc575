//! Train on left-handed pitchers, evaluate on right-handed ones with and
//! without mirroring their flow.
//!
//! cargo run --release --example flip_cross_arm

use pitchflow::config::PipelineConfig;
use pitchflow::dataset::{build_protocol, preprocess_corpus, synth_generate, Direction, Protocol};
use pitchflow::protocols::{evaluate_plan, labels_for, score, train_on_plan, InputCache};

fn main() -> pitchflow::Result<()> {
    let cfg = PipelineConfig::compact();
    let corpus = synth_generate(&cfg.synth)?;
    let manifest = corpus.manifest();
    let flows = preprocess_corpus(manifest, &corpus, &cfg.preprocess)?;
    let mut inputs = InputCache::new(manifest, &flows);
    let labels = labels_for(manifest, cfg.k)?;

    let protocol = |with_flip| Protocol::FlipCrossArm {
        direction: Direction::LeftToRight,
        with_flip,
        with_healthy: false,
    };
    let flipped = build_protocol(manifest, &protocol(true), cfg.k, cfg.split_seed)?;
    let plain = build_protocol(manifest, &protocol(false), cfg.k, cfg.split_seed)?;
    // Both plans share the training side, so one model serves both evaluations.
    let (net, _) = train_on_plan(&mut inputs, &flipped, &labels, &cfg.model, &cfg.train)?;
    for plan in [&plain, &flipped] {
        let preds = evaluate_plan(&mut inputs, plan, &net, cfg.threshold)?;
        let s = score(&preds, &labels)?.scores;
        println!(
            "{:<24} acc {:.3} prec {:.3} rec {:.3} f1 {:.3}",
            plan.name, s.acc, s.prec, s.rec, s.f1
        );
    }
    Ok(())
}
