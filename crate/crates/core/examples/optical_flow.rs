//! Dense flow on a translated smooth image, then on a rendered pitch.
//!
//! cargo run --release --example optical_flow

use pitchflow::dataset::{preprocess_clip, synth_generate, PreprocessParams, SynthParams};
use pitchflow::flow::{flip_flow, flow_pair, FlowParams};
use pitchflow::video::Frame;

fn blob(r: f64, c: f64) -> f32 {
    let a = ((r - 18.0).powi(2) + (c - 22.0).powi(2)) / 60.0;
    let b = ((r - 30.0).powi(2) + (c - 40.0).powi(2)) / 90.0;
    (0.6 * (-a).exp() + 0.4 * (-b).exp() + 0.1 * (c / 7.0).sin()) as f32
}

fn main() -> pitchflow::Result<()> {
    let params = FlowParams::default();
    let prev = Frame::from_fn(48, 64, |r, c| blob(r as f64, c as f64))?;
    let next = Frame::from_fn(48, 64, |r, c| blob(r as f64, c as f64 - 2.0))?;
    for levels in [1, 3] {
        let pyramid = FlowParams {
            pyramid_levels: levels,
            ..params
        };
        let (u, v) = flow_pair(&prev, &next, &pyramid)?.interior_means(8);
        println!("image shifted by (2, 0) px, {levels} pyramid level(s): mean u = {u:.3}, mean |v| = {v:.3}");
    }

    let corpus = synth_generate(&SynthParams {
        left_pitchers: 1,
        right_pitchers: 1,
        healthy_per_pitcher: 2,
        injured_per_event: 1,
        ..SynthParams::compact()
    })?;
    let pre = PreprocessParams {
        input_height: corpus.params().crop_height,
        input_width: corpus.params().crop_width,
        flow: params,
    };
    for record in corpus.manifest().records().iter().take(3) {
        let clip = corpus.render(record)?;
        let flow = preprocess_clip(&clip, &record.bbox, &pre, &record.clip_ref)?;
        let magnitudes: Vec<String> = flow
            .fields()
            .iter()
            .map(|f| format!("{:.3}", f.mean_magnitude()))
            .collect();
        println!(
            "{} ({}) mean |flow| per frame pair: {}",
            record.pitch_id,
            record.handedness,
            magnitudes.join(" ")
        );
        let twice = flip_flow(&flip_flow(&flow));
        assert_eq!(twice.to_tensor(), flow.to_tensor());
    }
    println!("flip_flow applied twice is the identity");
    Ok(())
}
