//! Acceptance criteria, one test per criterion. Every test prints one
//! `criterion N ...: PASS|FAIL` line before asserting.
//!
//! The training criteria (4 to 7) run on the compact pipeline profile and take
//! tens of minutes on one core in total.

mod common;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use pitchflow::config::PipelineConfig;
use pitchflow::dataset::{
    build_protocol, label_pitches, preprocess_clip, preprocess_corpus, synth_generate, Cohort,
    Direction, FlowStore, Handedness, InjuryType, Manifest, PitchRecord, Protocol, SynthCorpus,
};
use pitchflow::flow::{flow_pair, FlowParams};
use pitchflow::metrics::{compute_metrics, f1_score, ConfusionCounts};
use pitchflow::model::{predict, Head, Tensor};
use pitchflow::protocols::{
    evaluate_plan, labels_for, run_experiment, run_protocol, score, train_on_plan, Experiment,
    InputCache,
};
use pitchflow::seed;
use pitchflow::video::{BoundingBox, Frame};
use proptest::prelude::*;
use rand::Rng;

fn verdict(id: u32, name: &str, ok: bool, detail: &str, started: Instant) {
    let status = if ok { "PASS" } else { "FAIL" };
    let secs = started.elapsed().as_secs_f64();
    // Written past the test harness capture so the line always shows.
    let _ = writeln!(
        std::io::stdout(),
        "criterion {id} {name}: {status} ({detail}; {secs:.1} s)"
    );
    assert!(ok, "criterion {id} {name} failed: {detail}");
}

/// Compact corpus and its flows, built once and shared by the training criteria.
/// The comparative bounds below were pinned on this corpus: generator seed
/// 2017, split seed 1, model and training seeds 0.
fn corpus() -> &'static (PipelineConfig, SynthCorpus, FlowStore) {
    static CORPUS: OnceLock<(PipelineConfig, SynthCorpus, FlowStore)> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let cfg = PipelineConfig::compact();
        let corpus = synth_generate(&cfg.synth).unwrap();
        let flows = preprocess_corpus(corpus.manifest(), &corpus, &cfg.preprocess).unwrap();
        (cfg, corpus, flows)
    })
}

#[test]
fn criterion_1_metric_oracle() {
    let started = Instant::now();
    let close = |printed: f64, value: f64| (value - printed).abs() <= 0.005;
    let kershaw = f1_score(1.0, 0.75);
    let logan = f1_score(0.96, 0.97);
    // Transfer rows with zero precision, recall and F1 at the printed accuracy.
    let zero_rows = [(0.63, 63, 17), (0.23, 23, 57), (0.47, 47, 33)];
    let mut zero_ok = true;
    for (acc, tn, fp) in zero_rows {
        let s = compute_metrics(&ConfusionCounts {
            tp: 0,
            fp,
            fn_: 20,
            tn,
        })
        .unwrap();
        zero_ok &= s.prec == 0.0 && s.rec == 0.0 && s.f1 == 0.0 && (s.acc - acc).abs() < 1e-12;
    }
    // No positive predictions at all: precision has a zero denominator.
    let silent = compute_metrics(&ConfusionCounts {
        tp: 0,
        fp: 0,
        fn_: 20,
        tn: 80,
    })
    .unwrap();
    zero_ok &= silent.prec == 0.0 && silent.f1 == 0.0 && silent.acc == 0.8;
    let detail = format!(
        "Kershaw F1 {kershaw:.6} vs .86, Logan F1 {logan:.6} vs .97 (|diff| {:.6}), zero rows {}",
        (logan - 0.97).abs(),
        if zero_ok { "ok" } else { "wrong" }
    );
    verdict(
        1,
        "metric oracle",
        close(0.86, kershaw) && close(0.97, logan) && zero_ok,
        &detail,
        started,
    );
}

/// Sum of broad Gaussian blobs plus a slow ramp, sampled with a horizontal offset.
fn smooth_image(s: u64) -> impl Fn(f64, f64) -> f32 {
    let mut rng = seed::rng(s, &[seed::tag("smooth-image")]);
    let blobs: Vec<[f64; 4]> = (0..5)
        .map(|_| {
            [
                rng.random_range(8.0..40.0),
                rng.random_range(8.0..56.0),
                rng.random_range(5.0..9.0),
                rng.random_range(0.2..0.6),
            ]
        })
        .collect();
    let tilt = rng.random_range(-0.004..0.004);
    move |r, c| {
        let mut v = 0.2 + tilt * c;
        for [br, bc, sigma, amp] in &blobs {
            v += amp * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * sigma * sigma)).exp();
        }
        v as f32
    }
}

#[test]
fn criterion_2_flow_oracle() {
    let started = Instant::now();
    // A 2 px shift is beyond the single-level linearisation; the pyramid is the knob for it.
    let params = FlowParams {
        pyramid_levels: 3,
        ..FlowParams::default()
    };
    let mut worst_u: (f64, f64) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst_v: f64 = 0.0;
    let mut ok = true;
    for s in 1..=10 {
        let img = smooth_image(s);
        let prev = Frame::from_fn(48, 64, |r, c| img(r as f64, c as f64)).unwrap();
        let next = Frame::from_fn(48, 64, |r, c| img(r as f64, c as f64 - 2.0)).unwrap();
        let (u, v) = flow_pair(&prev, &next, &params).unwrap().interior_means(8);
        worst_u = (worst_u.0.min(u), worst_u.1.max(u));
        worst_v = worst_v.max(v);
        ok &= (1.6..=2.4).contains(&u) && v <= 0.3;
    }
    let detail = format!(
        "{} pyramid levels: mean u in [{:.3}, {:.3}], max mean |v| {worst_v:.3}",
        params.pyramid_levels, worst_u.0, worst_u.1
    );
    verdict(2, "flow oracle", ok, &detail, started);
}

#[test]
fn criterion_3_gradient_check() {
    let started = Instant::now();
    use common::gradcheck::{end_to_end_error, layer_errors};
    let (mut e32, mut e64) = (0.0f64, 0.0f64);
    for s in 1..=5 {
        for (_, e) in layer_errors::<f32>(s) {
            e32 = e32.max(e);
        }
        for (_, e) in layer_errors::<f64>(s) {
            e64 = e64.max(e);
        }
        for head in [Head::SigmoidBinary, Head::Softmax { classes: 3 }] {
            e32 = e32.max(end_to_end_error::<f32>(head, s));
            e64 = e64.max(end_to_end_error::<f64>(head, s));
        }
    }
    let detail = format!("worst relative error f32 {e32:.2e}, f64 {e64:.2e}");
    verdict(
        3,
        "gradient check",
        e32 < 1e-3 && e64 < 1e-6,
        &detail,
        started,
    );
}

#[test]
fn criterion_4_synthetic_detection() {
    let started = Instant::now();
    let (cfg, corpus, flows) = corpus();
    let manifest = corpus.manifest();
    let spec = cfg.experiment_spec(Experiment::PerPitcher { pitchers: vec![] });
    let report = run_experiment(&spec, manifest, flows).unwrap();
    let per_pitcher: Vec<(String, f64)> = report
        .runs
        .iter()
        .map(|r| (r.row.pitcher.clone().unwrap_or_default(), r.row.scores.f1))
        .collect();
    let mut inputs = InputCache::new(manifest, flows);
    let mut f1_of = |protocol: Protocol| {
        let outcome = run_protocol(&spec, &protocol, cfg.k, &mut inputs).unwrap();
        score(&outcome.predictions, &outcome.labels)
            .unwrap()
            .scores
            .f1
    };
    let unseen = f1_of(Protocol::Unseen {
        cohort: Cohort::All,
    });
    let augmented = f1_of(Protocol::HealthyAugmented {
        cohort: Cohort::All,
    });

    let pp_ok = per_pitcher.len() == 8 && per_pitcher.iter().all(|(_, f1)| *f1 >= 0.9);
    let listing: Vec<String> = per_pitcher
        .iter()
        .map(|(p, f1)| format!("{p} {f1:.3}"))
        .collect();
    let _ = writeln!(
        std::io::stdout(),
        "criterion 4a per-pitcher F1 >= 0.9: {} ({})",
        if pp_ok { "PASS" } else { "FAIL" },
        listing.join(", ")
    );
    let _ = writeln!(
        std::io::stdout(),
        "criterion 4b healthy-augmented F1 > unseen F1: {} ({augmented:.3} vs {unseen:.3})",
        if augmented > unseen { "PASS" } else { "FAIL" }
    );
    let detail = format!(
        "per-pitcher [{}], healthy-augmented {augmented:.3}, unseen {unseen:.3}",
        listing.join(", ")
    );
    verdict(
        4,
        "synthetic detection",
        pp_ok && augmented > unseen,
        &detail,
        started,
    );
}

#[test]
fn criterion_5_flip_property() {
    let started = Instant::now();
    let (cfg, corpus, flows) = corpus();
    let manifest = corpus.manifest();
    let mut inputs = InputCache::new(manifest, flows);
    let labels = labels_for(manifest, cfg.k).unwrap();
    let plan = |with_flip| {
        let p = Protocol::FlipCrossArm {
            direction: Direction::LeftToRight,
            with_flip,
            with_healthy: false,
        };
        build_protocol(manifest, &p, cfg.k, cfg.split_seed).unwrap()
    };
    let (flipped, plain) = (plan(true), plan(false));
    assert_eq!(flipped.train, plain.train);
    let (net, _) = train_on_plan(&mut inputs, &flipped, &labels, &cfg.model, &cfg.train).unwrap();

    let on_flipped = evaluate_plan(&mut inputs, &flipped, &net, cfg.threshold).unwrap();
    let on_plain = evaluate_plan(&mut inputs, &plain, &net, cfg.threshold).unwrap();
    // The same right-handed pitches rendered as the left-handed originals they mirror.
    let originals: Vec<(String, Tensor<f32>)> = flipped
        .test
        .iter()
        .map(|id| {
            let record = manifest.get(id).unwrap();
            assert_eq!(record.handedness, Handedness::Right);
            let (clip, bbox) = corpus.render_as(record, Handedness::Left).unwrap();
            let flow = preprocess_clip(&clip, &bbox, &cfg.preprocess, &record.clip_ref).unwrap();
            (id.clone(), Tensor::from_flow(&flow, false))
        })
        .collect();
    let on_originals = predict(&net, &originals, cfg.threshold).unwrap();

    let s_flipped = score(&on_flipped, &labels).unwrap().scores;
    let s_originals = score(&on_originals, &labels).unwrap().scores;
    let s_plain = score(&on_plain, &labels).unwrap().scores;
    let exact = on_flipped == on_originals && s_flipped == s_originals;
    let detail = format!(
        "flipped F1 {:.3} / originals F1 {:.3} (predictions {}), unflipped F1 {:.3}",
        s_flipped.f1,
        s_originals.f1,
        if on_flipped == on_originals {
            "identical"
        } else {
            "differ"
        },
        s_plain.f1
    );
    verdict(
        5,
        "flip property",
        exact && s_plain.f1 < s_flipped.f1,
        &detail,
        started,
    );
}

#[test]
fn criterion_6_bias_probes() {
    let started = Instant::now();
    let (cfg, corpus, flows) = corpus();
    let pitchers: Vec<String> = ["L01", "L02", "R01", "R02"].map(String::from).to_vec();
    let game = run_experiment(
        &cfg.experiment_spec(Experiment::GameProbe {
            pitchers: pitchers.clone(),
        }),
        corpus.manifest(),
        flows,
    )
    .unwrap();
    let order = run_experiment(
        &cfg.experiment_spec(Experiment::OrderProbe {
            pitchers,
            seeds: vec![1, 2, 3, 4, 5],
        }),
        corpus.manifest(),
        flows,
    )
    .unwrap();
    let game = &game.probes[0].table;
    let order = &order.probes[0].table;
    let (acc, chance) = (game.average(), game.average_chance().unwrap());
    let game_ok = (acc - chance).abs() <= 0.10;
    let order_ok = (order.average() - 0.5).abs() <= 0.07;
    let detail = format!(
        "game probe {acc:.3} vs chance {chance:.3}, order probe average {:.3}",
        order.average()
    );
    verdict(6, "bias probes", game_ok && order_ok, &detail, started);
}

#[test]
fn criterion_7_k_sweep() {
    let started = Instant::now();
    // Left arm only, with 200 healthy pitches per pitcher so that k = 75 labels
    // a minority of pitches injured. At 100 healthy pitches k = 75 labels 62%
    // injured and the all-injured guess alone reaches F1 0.77.
    let mut cfg = PipelineConfig::compact();
    cfg.synth.right_pitchers = 0;
    cfg.synth.healthy_per_pitcher = 200;
    let corpus = synth_generate(&cfg.synth).unwrap();
    let flows = preprocess_corpus(corpus.manifest(), &corpus, &cfg.preprocess).unwrap();
    let spec = cfg.experiment_spec(Experiment::KSweep {
        protocol: Protocol::Cohort {
            cohort: Cohort::Left,
        },
        ks: vec![20, 30, 75],
    });
    let report = run_experiment(&spec, corpus.manifest(), &flows).unwrap();
    let f1: BTreeMap<u32, f64> = report.runs.iter().map(|r| (r.k, r.row.scores.f1)).collect();
    let detail = format!(
        "F1 k=20 {:.3}, k=30 {:.3}, k=75 {:.3}",
        f1[&20], f1[&30], f1[&75]
    );
    verdict(
        7,
        "k-sweep trend",
        f1[&20] > f1[&75] && f1[&30] > f1[&75],
        &detail,
        started,
    );
}

/// A small end-to-end configuration rooted at `root`.
fn tiny_pipeline(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::compact();
    cfg.output_dir = root.to_path_buf();
    cfg.synth.left_pitchers = 1;
    cfg.synth.right_pitchers = 1;
    cfg.synth.healthy_per_pitcher = 12;
    cfg.synth.injured_per_event = 6;
    cfg.synth.link_window = None;
    cfg.k = 6;
    cfg.train.epochs = 2;
    cfg
}

fn run_cli(config: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_pitchflow"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove(pitchflow::config::OUTPUT_ENV)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_8_determinism() {
    let started = Instant::now();
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("out");
        let config = dir.path().join("pipeline.json");
        std::fs::write(
            &config,
            serde_json::to_string_pretty(&tiny_pipeline(&root)).unwrap(),
        )
        .unwrap();
        let single = dir.path().join("single.json");
        std::fs::write(
            &single,
            r#"{"kind": "single", "protocol": {"kind": "per_pitcher", "pitcher": "L01"}}"#,
        )
        .unwrap();
        let probe = dir.path().join("probe.json");
        std::fs::write(&probe, r#"{"kind": "game_probe", "pitchers": ["R01"]}"#).unwrap();
        let s = |p: &Path| p.to_str().unwrap().to_string();
        for args in [
            vec!["synth".to_string()],
            vec!["preprocess".into()],
            vec!["train".into(), "--spec".into(), s(&single)],
            vec!["eval".into(), "--spec".into(), s(&single)],
            vec!["protocol".into(), "--spec".into(), s(&single)],
            vec!["probe".into(), "--spec".into(), s(&probe)],
            vec!["report".into()],
        ] {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            run_cli(&config, &args);
        }
        // Configs echo the absolute output path, which differs between runs.
        snapshot(&root)
            .into_iter()
            .filter(|(name, _)| !name.ends_with("config.json"))
            .collect::<BTreeMap<_, _>>()
    };
    let (a, b) = (run(), run());
    let kinds = ["manifest.jsonl", "model.pgc", "reports/"];
    let covered = kinds.iter().all(|k| a.keys().any(|name| name.contains(k)));
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    let detail = format!("{} files compared, {} differ", a.len(), differing.len());
    verdict(
        8,
        "determinism",
        covered && a.len() == b.len() && differing.is_empty(),
        &detail,
        started,
    );
}

/// One pitcher's history: `(linked pitches before each placement, unlinked pitches before them)`,
/// followed by trailing unlinked pitches.
fn history_strategy() -> impl Strategy<Value = (Vec<(u32, u32)>, u32)> {
    (prop::collection::vec((1u32..120, 0u32..30), 0..4), 0u32..15)
}

fn build_manifest(histories: &[(Vec<(u32, u32)>, u32)]) -> Manifest {
    let mut records = Vec::new();
    for (pi, (events, trailing)) in histories.iter().enumerate() {
        let pitcher = format!("P{pi:02}");
        let mut seq = 0u32;
        let mut push = |event: Option<(usize, u32)>| {
            records.push(PitchRecord {
                pitch_id: format!("{pitcher}-{seq:04}"),
                pitcher_id: pitcher.clone(),
                handedness: Handedness::Left,
                game_id: format!("{pitcher}-g{}", seq / 25),
                seq_index: seq,
                injury_event_id: event.map(|(e, _)| format!("{pitcher}-e{e}")),
                pitches_before_dl: event.map(|(_, d)| d),
                injury_type: event.map(|_| InjuryType::UclTear),
                clip_ref: format!("{pitcher}-{seq:04}"),
                bbox: BoundingBox {
                    x: 0,
                    y: 0,
                    w: 1,
                    h: 1,
                },
            });
            seq += 1;
        };
        for (e, &(linked, unlinked)) in events.iter().enumerate() {
            for _ in 0..unlinked {
                push(None);
            }
            for j in 0..linked {
                push(Some((e, linked - j)));
            }
        }
        for _ in 0..*trailing {
            push(None);
        }
    }
    Manifest::new(records).unwrap()
}

/// Recount from event membership and pitch order alone: the last `k` linked
/// pitches of each event are injured.
fn brute_force_injured(manifest: &Manifest, k: u32) -> BTreeMap<String, usize> {
    let mut events: BTreeMap<&str, Vec<&PitchRecord>> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in manifest.records() {
        counts.entry(r.pitcher_id.clone()).or_insert(0);
        if let Some(e) = &r.injury_event_id {
            events.entry(e.as_str()).or_default().push(r);
        }
    }
    for recs in events.values_mut() {
        recs.sort_by_key(|r| r.seq_index);
        let injured = recs.len().min(k as usize);
        *counts.get_mut(&recs[0].pitcher_id).unwrap() += injured;
    }
    counts
}

#[test]
fn criterion_9_labeling_exactness() {
    let started = Instant::now();
    let checked = Cell::new(0usize);
    let short = Cell::new(0usize);
    let result = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(64)).run(
        &prop::collection::vec(history_strategy(), 1..6),
        |histories| {
            let manifest = build_manifest(&histories);
            for k in [10u32, 20, 30, 50, 75] {
                let labeled = label_pitches(manifest.records(), k).unwrap();
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for l in &labeled {
                    *counts.entry(l.record.pitcher_id.clone()).or_insert(0) +=
                        l.label.is_injured() as usize;
                }
                prop_assert_eq!(counts, brute_force_injured(&manifest, k));
                short.set(
                    short.get()
                        + histories
                            .iter()
                            .flat_map(|h| &h.0)
                            .filter(|(linked, _)| *linked < k)
                            .count(),
                );
                checked.set(checked.get() + 1);
            }
            Ok(())
        },
    );
    let detail = match &result {
        Ok(()) => format!(
            "{} manifest/k pairs, {} events shorter than k",
            checked.get(),
            short.get()
        ),
        Err(e) => e.to_string(),
    };
    verdict(
        9,
        "labeling exactness",
        result.is_ok() && short.get() > 0,
        &detail,
        started,
    );
}
