//! Bias probes: can a classifier recover game identity or chronological order
//! from the flow input alone? Near-chance accuracy means it cannot.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::experiment::{ExperimentSpec, InputCache};
use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::metrics::{AccuracyRow, AccuracyTable};
use crate::model::{train_classifier, Head, LossKind, Sample, Tensor, TrainConfig};
use crate::seed;

/// Pitch ids of each pitcher's healthy games (games without a pitch thrown
/// right before a disabled-list placement), in manifest order.
pub fn healthy_games(manifest: &Manifest) -> BTreeMap<String, BTreeMap<String, Vec<String>>> {
    let injury = manifest.injury_games();
    let mut out: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    for r in manifest.records() {
        if !injury.contains(&r.game_id) {
            out.entry(r.pitcher_id.clone())
                .or_default()
                .entry(r.game_id.clone())
                .or_default()
                .push(r.pitch_id.clone());
        }
    }
    out
}

/// Share of the most common game.
pub fn majority_share(games: &BTreeMap<String, Vec<String>>) -> f64 {
    let total: usize = games.values().map(Vec::len).sum();
    let max = games.values().map(Vec::len).max().unwrap_or(0);
    max as f64 / total.max(1) as f64
}

fn probe_pitchers(manifest: &Manifest, requested: &[String]) -> Result<Vec<String>> {
    let known = manifest.pitchers();
    if requested.is_empty() {
        return Ok(known.into_keys().collect());
    }
    for p in requested {
        if !known.contains_key(p) {
            return Err(Error::Lookup {
                kind: "pitcher",
                id: p.clone(),
            });
        }
    }
    Ok(requested.to_vec())
}

fn probe_train_config(spec: &ExperimentSpec, stream: &[u64]) -> TrainConfig {
    TrainConfig {
        loss: LossKind::CrossEntropy,
        seed: seed::derive(spec.train.seed, stream),
        ..spec.train.clone()
    }
}

pub fn run_bias_probe_game(
    spec: &ExperimentSpec,
    pitchers: &[String],
    inputs: &mut InputCache<'_>,
) -> Result<AccuracyTable> {
    let manifest = inputs.manifest();
    let games = healthy_games(manifest);
    let mut rows = Vec::new();
    for (pi, pitcher) in probe_pitchers(manifest, pitchers)?.into_iter().enumerate() {
        let g = games.get(&pitcher).cloned().unwrap_or_default();
        if g.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "pitcher {pitcher} has {} healthy game(s); the game probe needs at least 2",
                g.len()
            )));
        }
        let mut train_set = Vec::new();
        let mut test_set = Vec::new();
        for (class, (_, ids)) in g.iter().enumerate() {
            let mut ids = ids.clone();
            ids.shuffle(&mut seed::rng(
                spec.seed,
                &[seed::tag("game-probe"), pi as u64, class as u64],
            ));
            let cut = ids.len().div_ceil(2);
            for (i, id) in ids.iter().enumerate() {
                let s = Sample {
                    input: inputs.get(id, false)?.clone(),
                    target: class,
                };
                if i < cut {
                    train_set.push(s);
                } else {
                    test_set.push(s);
                }
            }
        }
        let model = spec.model.with_head(Head::Softmax { classes: g.len() });
        let cfg = probe_train_config(spec, &[seed::tag("game-probe"), pi as u64]);
        let (_, accuracy) = train_classifier(&model, &train_set, &test_set, &cfg)?;
        rows.push(AccuracyRow {
            pitcher,
            accuracy,
            chance: Some(majority_share(&g)),
        });
    }
    Ok(AccuracyTable {
        average_label: "Average".into(),
        rows,
    })
}

/// Balanced ordered pairs from one pool of same-game pitches: `n` pairs, half
/// presented in chronological order (target 1) and half reversed (target 0).
fn order_pairs(
    pool: &[(usize, String)],
    n: usize,
    rng: &mut impl rand::Rng,
) -> Vec<(String, String, usize)> {
    let mut all = Vec::new();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            all.push((i, j));
        }
    }
    all.shuffle(rng);
    all.truncate(n);
    all.iter()
        .enumerate()
        .map(|(slot, &(i, j))| {
            // pool is in chronological order, so i precedes j
            let (a, b) = (&pool[i].1, &pool[j].1);
            if slot % 2 == 0 {
                (a.clone(), b.clone(), 1)
            } else {
                (b.clone(), a.clone(), 0)
            }
        })
        .collect()
}

fn pair_samples(
    pairs: &[(String, String, usize)],
    inputs: &mut InputCache<'_>,
) -> Result<Vec<Sample<f32>>> {
    pairs
        .iter()
        .map(|(a, b, t)| {
            let ta = inputs.get(a, false)?.clone();
            let tb = inputs.get(b, false)?;
            Ok(Sample {
                input: Tensor::concat_channels(&[&ta, tb])?,
                target: *t,
            })
        })
        .collect()
}

pub fn run_bias_probe_order(
    spec: &ExperimentSpec,
    pitchers: &[String],
    seeds: &[u64],
    inputs: &mut InputCache<'_>,
) -> Result<AccuracyTable> {
    let manifest = inputs.manifest();
    let games = healthy_games(manifest);
    let seq: BTreeMap<&str, u32> = manifest
        .records()
        .iter()
        .map(|r| (r.pitch_id.as_str(), r.seq_index))
        .collect();
    let model = spec
        .model
        .with_input_channels(2 * spec.model.input[0])
        .with_head(Head::Softmax { classes: 2 });
    let mut rows = Vec::new();
    for (pi, pitcher) in probe_pitchers(manifest, pitchers)?.into_iter().enumerate() {
        let g = games.get(&pitcher).cloned().unwrap_or_default();
        if g.is_empty() {
            return Err(Error::InsufficientData(format!(
                "pitcher {pitcher} has no healthy games"
            )));
        }
        let mut acc_sum = 0.0;
        for &s in seeds {
            let mut train_pairs = Vec::new();
            let mut test_pairs = Vec::new();
            for (gi, (game, ids)) in g.iter().enumerate() {
                if ids.len() < 4 {
                    return Err(Error::InsufficientData(format!(
                        "game {game} has {} pitches; the order probe needs at least 4",
                        ids.len()
                    )));
                }
                let mut rng = seed::rng(s, &[seed::tag("order-probe"), pi as u64, gi as u64]);
                let mut ids = ids.clone();
                ids.shuffle(&mut rng);
                let cut = ids.len().div_ceil(2);
                let mut halves = [ids[..cut].to_vec(), ids[cut..].to_vec()];
                for h in &mut halves {
                    h.sort_by_key(|id| seq[id.as_str()]);
                }
                let pool = |h: &[String]| -> Vec<(usize, String)> {
                    h.iter().cloned().enumerate().collect()
                };
                train_pairs.extend(order_pairs(&pool(&halves[0]), halves[0].len(), &mut rng));
                test_pairs.extend(order_pairs(&pool(&halves[1]), halves[1].len(), &mut rng));
            }
            let train_set = pair_samples(&train_pairs, inputs)?;
            let test_set = pair_samples(&test_pairs, inputs)?;
            let cfg = probe_train_config(spec, &[seed::tag("order-probe"), pi as u64, s]);
            let mut m = model.clone();
            m.seed = seed::derive(spec.model.seed, &[s]);
            let (_, acc) = train_classifier(&m, &train_set, &test_set, &cfg)?;
            acc_sum += acc;
        }
        rows.push(AccuracyRow {
            pitcher,
            accuracy: acc_sum / seeds.len() as f64,
            chance: None,
        });
    }
    Ok(AccuracyTable {
        average_label: "All Average".into(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_games_have_even_chance() {
        let g: BTreeMap<String, Vec<String>> = [
            ("g1".to_string(), vec!["a".to_string(), "b".into()]),
            ("g2".to_string(), vec!["c".to_string(), "d".into()]),
        ]
        .into();
        assert_eq!(majority_share(&g), 0.5);
    }

    #[test]
    fn pairs_are_balanced_and_ordered() {
        let pool: Vec<(usize, String)> = (0..6).map(|i| (i, format!("p{i}"))).collect();
        let pairs = order_pairs(&pool, 6, &mut seed::rng(1, &[]));
        assert_eq!(pairs.len(), 6);
        assert_eq!(pairs.iter().filter(|p| p.2 == 1).count(), 3);
        for (a, b, t) in pairs {
            assert_eq!(t == 1, a < b);
        }
    }
}
