//! Generate a synthetic pitch corpus and inspect its composition and labels.
//!
//! cargo run --release --example synth_corpus

use std::collections::BTreeMap;

use pitchflow::dataset::{label_pitches, synth_generate, SynthParams};
use pitchflow::video::to_grayscale;

fn main() -> pitchflow::Result<()> {
    let corpus = synth_generate(&SynthParams::compact())?;
    let manifest = corpus.manifest();
    println!(
        "{} pitches from {} pitchers",
        manifest.len(),
        manifest.pitchers().len()
    );

    for k in [10, 20, 30, 50, 75] {
        let labeled = label_pitches(manifest.records(), k)?;
        let injured = labeled.iter().filter(|l| l.label.is_injured()).count();
        println!("k = {k:>2}: {injured} pitches labeled injured");
    }

    let mut per_game: BTreeMap<&str, usize> = BTreeMap::new();
    for r in manifest.pitcher_records("L01") {
        *per_game.entry(r.game_id.as_str()).or_default() += 1;
    }
    println!("L01 games: {per_game:?}");
    let last = manifest
        .pitcher_records("L01")
        .last()
        .expect("pitcher has pitches");
    println!(
        "last L01 pitch: {} ({:?}, {} before DL)",
        last.pitch_id,
        last.injury_type,
        last.pitches_before_dl.unwrap_or(0)
    );

    // One mid-delivery frame as ASCII art.
    let clip = corpus.render(last)?;
    let frame = to_grayscale(&clip.frames()[clip.len() / 2])?;
    let shades = [' ', '.', ':', '+', '#'];
    for r in (0..frame.height()).step_by(2) {
        let line: String = (0..frame.width())
            .map(|c| {
                let v = 1.0 - frame.get(r, c, 0);
                shades[((v * 5.0) as usize).min(4)]
            })
            .collect();
        println!("{line}");
    }
    Ok(())
}
