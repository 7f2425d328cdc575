use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::probes::{run_bias_probe_game, run_bias_probe_order};
use crate::dataset::{
    build_protocol, label_pitches, Cohort, FlowSource, Handedness, InjuryType, Label, Manifest,
    PitchRecord, Protocol, SplitAudit, SplitPlan,
};
use crate::error::{Error, Result, StageExt};
use crate::metrics::{
    confusion, tabulate, AccuracyTable, ConfusionCounts, Grouping, MetricsRow, Table,
};
use crate::model::{
    predict, train, History, Prediction, Sample, Tensor, Tiny3d, Tiny3dConfig, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// One split, one model.
    Single { protocol: Protocol },
    /// One model per pitcher; an empty list means every pitcher.
    PerPitcher { pitchers: Vec<String> },
    /// The same protocol repeated for each labeling window.
    KSweep { protocol: Protocol, ks: Vec<u32> },
    /// One model, test metrics broken down by injury type.
    PerInjury { protocol: Protocol },
    /// Classify which healthy game a pitch came from.
    GameProbe { pitchers: Vec<String> },
    /// Classify the chronological order of two pitches from the same healthy game.
    OrderProbe {
        pitchers: Vec<String>,
        seeds: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub k: u32,
    pub model: Tiny3dConfig,
    pub train: TrainConfig,
    /// Split seed.
    pub seed: u64,
    pub threshold: f64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be >= 1".into()));
        }
        if let Experiment::KSweep { ks, .. } = &self.experiment {
            if ks.is_empty() || ks.contains(&0) {
                return Err(Error::InvalidParams(
                    "k sweep needs a non-empty list of k >= 1".into(),
                ));
            }
        }
        if let Experiment::OrderProbe { seeds, .. } = &self.experiment {
            if seeds.is_empty() {
                return Err(Error::InvalidParams(
                    "order probe needs at least one seed".into(),
                ));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParams(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        self.model.validate()?;
        self.train.validate()
    }
}

/// One trained-and-evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub k: u32,
    pub audit: SplitAudit,
    pub row: MetricsRow,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTable {
    pub title: String,
    pub table: Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAccuracy {
    pub title: String,
    pub table: AccuracyTable,
}

/// Everything needed to reproduce and read an experiment. Contains no
/// timing information so identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub corpus_fingerprint: String,
    pub runs: Vec<RunRecord>,
    pub tables: Vec<NamedTable>,
    pub probes: Vec<NamedAccuracy>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Network inputs keyed by `(pitch_id, flipped)`, loaded on first use.
pub struct InputCache<'a> {
    manifest: &'a Manifest,
    flows: &'a dyn FlowSource,
    cache: BTreeMap<(String, bool), Tensor<f32>>,
}

impl<'a> InputCache<'a> {
    pub fn new(manifest: &'a Manifest, flows: &'a dyn FlowSource) -> Self {
        InputCache {
            manifest,
            flows,
            cache: BTreeMap::new(),
        }
    }

    pub fn manifest(&self) -> &'a Manifest {
        self.manifest
    }

    pub fn get(&mut self, pitch_id: &str, flip: bool) -> Result<&Tensor<f32>> {
        let key = (pitch_id.to_string(), flip);
        if !self.cache.contains_key(&key) {
            let record = self.manifest.get(pitch_id).ok_or_else(|| Error::Lookup {
                kind: "pitch",
                id: pitch_id.to_string(),
            })?;
            let flow = self.flows.flow(record)?;
            self.cache
                .insert(key.clone(), Tensor::from_flow(&flow, flip));
        }
        Ok(&self.cache[&key])
    }
}

/// Artifacts of one protocol run.
pub struct ProtocolOutcome {
    pub plan: SplitPlan,
    pub net: Tiny3d<f32>,
    pub history: History,
    pub predictions: Vec<Prediction>,
    pub labels: BTreeMap<String, Label>,
}

pub fn labels_for(manifest: &Manifest, k: u32) -> Result<BTreeMap<String, Label>> {
    Ok(label_pitches(manifest.records(), k)?
        .into_iter()
        .map(|l| (l.record.pitch_id, l.label))
        .collect())
}

pub fn train_on_plan(
    inputs: &mut InputCache<'_>,
    plan: &SplitPlan,
    labels: &BTreeMap<String, Label>,
    model: &Tiny3dConfig,
    cfg: &TrainConfig,
) -> Result<(Tiny3d<f32>, History)> {
    let mut samples = Vec::with_capacity(plan.train.len());
    for id in &plan.train {
        samples.push(Sample {
            input: inputs.get(id, plan.flipped.contains(id))?.clone(),
            target: labels[id].as_target(),
        });
    }
    let mut net = Tiny3d::new(model)?;
    let history = train(&mut net, &samples, cfg)?;
    Ok((net, history))
}

pub fn evaluate_plan(
    inputs: &mut InputCache<'_>,
    plan: &SplitPlan,
    net: &Tiny3d<f32>,
    threshold: f64,
) -> Result<Vec<Prediction>> {
    let mut items = Vec::with_capacity(plan.test.len());
    for id in &plan.test {
        items.push((
            id.clone(),
            inputs.get(id, plan.flipped.contains(id))?.clone(),
        ));
    }
    predict(net, &items, threshold)
}

/// Split, train and predict for one protocol.
pub fn run_protocol(
    spec: &ExperimentSpec,
    protocol: &Protocol,
    k: u32,
    inputs: &mut InputCache<'_>,
) -> Result<ProtocolOutcome> {
    let manifest = inputs.manifest();
    let plan = build_protocol(manifest, protocol, k, spec.seed).stage("split")?;
    plan.validate(manifest).stage("split")?;
    let labels = labels_for(manifest, k).stage("label")?;
    let (net, history) =
        train_on_plan(inputs, &plan, &labels, &spec.model, &spec.train).stage("train")?;
    let predictions = evaluate_plan(inputs, &plan, &net, spec.threshold).stage("predict")?;
    Ok(ProtocolOutcome {
        plan,
        net,
        history,
        predictions,
        labels,
    })
}

fn test_labels(outcome: &ProtocolOutcome) -> BTreeMap<String, Label> {
    outcome
        .plan
        .test
        .iter()
        .map(|id| (id.clone(), outcome.labels[id]))
        .collect()
}

fn protocol_context(p: &Protocol) -> (Option<String>, Option<String>) {
    match p {
        Protocol::PerPitcher { pitcher } => (Some(pitcher.clone()), None),
        Protocol::Transfer {
            train_pitcher,
            test_pitcher,
        } => (Some(format!("{train_pitcher} -> {test_pitcher}")), None),
        Protocol::Cohort { cohort }
        | Protocol::Unseen { cohort }
        | Protocol::HealthyAugmented { cohort } => (None, Some(cohort.to_string())),
        Protocol::FlipCrossArm { .. } => (None, Some(p.name())),
    }
}

fn record_run(
    protocol: &Protocol,
    k: u32,
    outcome: &ProtocolOutcome,
    manifest: &Manifest,
) -> Result<RunRecord> {
    let counts = confusion(&outcome.predictions, &test_labels(outcome)).stage("metrics")?;
    let mut row = MetricsRow::new(counts).stage("metrics")?;
    (row.pitcher, row.cohort) = protocol_context(protocol);
    row.k = Some(k);
    Ok(RunRecord {
        name: outcome.plan.name.clone(),
        k,
        audit: outcome.plan.audit(manifest),
        row,
        final_loss: outcome.history.epochs.last().map(|e| e.loss).unwrap_or(0.0),
    })
}

/// Injury type each pitch is attributed to: its own linked injury, or for
/// unlinked pitches the next injury event of the same pitcher.
pub fn injury_attribution(manifest: &Manifest) -> BTreeMap<String, InjuryType> {
    let mut out = BTreeMap::new();
    for pitcher in manifest.pitchers().keys() {
        let recs: Vec<&PitchRecord> = manifest.pitcher_records(pitcher).collect();
        let mut next: Option<InjuryType> = None;
        for r in recs.iter().rev() {
            if r.injury_type.is_some() {
                next = r.injury_type;
            }
            if let Some(t) = next {
                out.insert(r.pitch_id.clone(), t);
            }
        }
    }
    out
}

fn per_injury_rows(
    outcome: &ProtocolOutcome,
    manifest: &Manifest,
    k: u32,
) -> Result<Vec<MetricsRow>> {
    let attribution = injury_attribution(manifest);
    let index = manifest.index();
    let mut by_group: BTreeMap<(Handedness, InjuryType), ConfusionCounts> = BTreeMap::new();
    for p in &outcome.predictions {
        let Some(&t) = attribution.get(&p.pitch_id) else {
            continue;
        };
        let hand = index[p.pitch_id.as_str()].handedness;
        by_group
            .entry((hand, t))
            .or_default()
            .record(p.label_hat, outcome.labels[&p.pitch_id]);
    }
    by_group
        .into_iter()
        .map(|((hand, t), c)| {
            let mut row = MetricsRow::new(c)?;
            row.injury = Some(t.name().into());
            row.cohort = Some(
                match hand {
                    Handedness::Left => Cohort::Left,
                    Handedness::Right => Cohort::Right,
                }
                .to_string(),
            );
            row.k = Some(k);
            Ok(row)
        })
        .collect()
}

fn split_by_cohort(rows: &[MetricsRow]) -> BTreeMap<String, Vec<MetricsRow>> {
    let mut m: BTreeMap<String, Vec<MetricsRow>> = BTreeMap::new();
    for r in rows {
        m.entry(r.cohort.clone().unwrap_or_default())
            .or_default()
            .push(r.clone());
    }
    m
}

pub fn run_experiment(
    spec: &ExperimentSpec,
    manifest: &Manifest,
    flows: &dyn FlowSource,
) -> Result<ExperimentReport> {
    spec.validate().stage("spec")?;
    let mut inputs = InputCache::new(manifest, flows);
    let mut runs = Vec::new();
    let mut tables = Vec::new();
    let mut probes = Vec::new();
    let single = |protocol: &Protocol, k: u32, inputs: &mut InputCache<'_>| -> Result<RunRecord> {
        let outcome = run_protocol(spec, protocol, k, inputs)?;
        record_run(protocol, k, &outcome, manifest)
    };
    match &spec.experiment {
        Experiment::Single { protocol } => {
            let run = single(protocol, spec.k, &mut inputs)?;
            let grouping = match protocol {
                Protocol::PerPitcher { .. } | Protocol::Transfer { .. } => Grouping::Pitcher,
                _ => Grouping::Cohort,
            };
            tables.push(NamedTable {
                title: run.name.clone(),
                table: tabulate(std::slice::from_ref(&run.row), grouping)?,
            });
            runs.push(run);
        }
        Experiment::PerPitcher { pitchers } => {
            let all: Vec<String> = if pitchers.is_empty() {
                manifest.pitchers().into_keys().collect()
            } else {
                pitchers.clone()
            };
            for p in all {
                runs.push(single(
                    &Protocol::PerPitcher { pitcher: p },
                    spec.k,
                    &mut inputs,
                )?);
            }
            let rows: Vec<MetricsRow> = runs.iter().map(|r| r.row.clone()).collect();
            tables.push(NamedTable {
                title: "Per-pitcher models".into(),
                table: tabulate(&rows, Grouping::Pitcher)?,
            });
        }
        Experiment::KSweep { protocol, ks } => {
            for &k in ks {
                runs.push(single(protocol, k, &mut inputs)?);
            }
            let rows: Vec<MetricsRow> = runs.iter().map(|r| r.row.clone()).collect();
            tables.push(NamedTable {
                title: format!("{} by k", protocol.name()),
                table: tabulate(&rows, Grouping::K)?,
            });
        }
        Experiment::PerInjury { protocol } => {
            let outcome = run_protocol(spec, protocol, spec.k, &mut inputs)?;
            let rows = per_injury_rows(&outcome, manifest, spec.k).stage("metrics")?;
            runs.push(record_run(protocol, spec.k, &outcome, manifest)?);
            for (cohort, rows) in split_by_cohort(&rows) {
                tables.push(NamedTable {
                    title: format!("{cohort} by injury"),
                    table: tabulate(&rows, Grouping::Injury)?,
                });
            }
        }
        Experiment::GameProbe { pitchers } => {
            probes.push(NamedAccuracy {
                title: "Game identity probe".into(),
                table: run_bias_probe_game(spec, pitchers, &mut inputs).stage("probe")?,
            });
        }
        Experiment::OrderProbe { pitchers, seeds } => {
            probes.push(NamedAccuracy {
                title: "Temporal order probe".into(),
                table: run_bias_probe_order(spec, pitchers, seeds, &mut inputs).stage("probe")?,
            });
        }
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        corpus_fingerprint: manifest.fingerprint(),
        runs,
        tables,
        probes,
    })
}

/// Metrics for a prediction list against the labels of its pitches.
pub fn score(predictions: &[Prediction], labels: &BTreeMap<String, Label>) -> Result<MetricsRow> {
    let ids: BTreeSet<&str> = predictions.iter().map(|p| p.pitch_id.as_str()).collect();
    let subset: BTreeMap<String, Label> = labels
        .iter()
        .filter(|(k, _)| ids.contains(k.as_str()))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    MetricsRow::new(confusion(predictions, &subset)?)
}
