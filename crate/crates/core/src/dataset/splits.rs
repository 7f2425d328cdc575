//! Train/test partitions realising each experimental protocol.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::labels::{label_pitches, Label, LabeledPitch};
use super::record::{Handedness, Manifest};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Left,
    Right,
    All,
}

impl Cohort {
    pub fn contains(self, h: Handedness) -> bool {
        match self {
            Cohort::Left => h == Handedness::Left,
            Cohort::Right => h == Handedness::Right,
            Cohort::All => true,
        }
    }

    fn hands(self) -> &'static [Handedness] {
        match self {
            Cohort::Left => &[Handedness::Left],
            Cohort::Right => &[Handedness::Right],
            Cohort::All => &[Handedness::Left, Handedness::Right],
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cohort::Left => "Lefty",
            Cohort::Right => "Righty",
            Cohort::All => "All pitchers",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

impl Direction {
    pub fn source(self) -> Handedness {
        match self {
            Direction::LeftToRight => Handedness::Left,
            Direction::RightToLeft => Handedness::Right,
        }
    }

    pub fn target(self) -> Handedness {
        self.source().other()
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LeftToRight => "Left-to-Right",
            Direction::RightToLeft => "Right-to-Left",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    /// One pitcher, stratified half split.
    PerPitcher { pitcher: String },
    /// Train on one pitcher's training half, test on every pitch of another.
    Transfer {
        train_pitcher: String,
        test_pitcher: String,
    },
    /// Stratified half split over every pitcher of the cohort.
    Cohort { cohort: Cohort },
    /// Half the pitchers train, the other half test.
    Unseen { cohort: Cohort },
    /// As `Unseen`, plus half the healthy pitches of the held-out pitchers in training.
    HealthyAugmented { cohort: Cohort },
    /// Train on one arm, test on the other, optionally flipping the target arm.
    FlipCrossArm {
        direction: Direction,
        with_flip: bool,
        with_healthy: bool,
    },
}

impl Protocol {
    pub fn name(&self) -> String {
        match self {
            Protocol::PerPitcher { pitcher } => format!("per_pitcher({pitcher})"),
            Protocol::Transfer {
                train_pitcher,
                test_pitcher,
            } => format!("transfer({train_pitcher}->{test_pitcher})"),
            Protocol::Cohort { cohort } => format!("cohort({cohort})"),
            Protocol::Unseen { cohort } => format!("unseen({cohort})"),
            Protocol::HealthyAugmented { cohort } => format!("healthy_augmented({cohort})"),
            Protocol::FlipCrossArm {
                direction,
                with_flip,
                with_healthy,
            } => {
                let mut s = direction.to_string();
                if *with_flip {
                    s.push_str(" + Flip");
                }
                if *with_healthy {
                    s.push_str(" + 'Healthy'");
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub name: String,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub k: u32,
    pub notes: String,
    /// Pitches whose flow is horizontally flipped before use.
    pub flipped: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub train: usize,
    pub test: usize,
    pub overlap: usize,
    pub unknown: usize,
}

impl SplitPlan {
    pub fn audit(&self, manifest: &Manifest) -> SplitAudit {
        let index = manifest.index();
        SplitAudit {
            train: self.train.len(),
            test: self.test.len(),
            overlap: self.train.intersection(&self.test).count(),
            unknown: self
                .train
                .iter()
                .chain(&self.test)
                .filter(|id| !index.contains_key(id.as_str()))
                .count(),
        }
    }

    pub fn validate(&self, manifest: &Manifest) -> Result<()> {
        let a = self.audit(manifest);
        if a.overlap > 0 {
            return Err(Error::InvalidProtocol(format!(
                "{}: {} pitches in both train and test",
                self.name, a.overlap
            )));
        }
        if a.unknown > 0 {
            return Err(Error::InvalidProtocol(format!(
                "{}: {} pitch ids missing from the manifest",
                self.name, a.unknown
            )));
        }
        Ok(())
    }
}

/// Shuffles `ids` with the given stream and returns `(first half, rest)`, the
/// extra element of an odd count going to the first half.
fn halve(mut ids: Vec<String>, seed: u64, tags: &[u64]) -> (Vec<String>, Vec<String>) {
    ids.shuffle(&mut seed::rng(seed, tags));
    let cut = ids.len().div_ceil(2);
    let rest = ids.split_off(cut);
    (ids, rest)
}

fn label_tag(l: Label) -> u64 {
    l.as_target() as u64
}

/// Stratified 50/50 split within each (pitcher, label) group.
pub fn split_half(labeled: &[LabeledPitch], seed: u64) -> Result<SplitPlan> {
    for class in [Label::Healthy, Label::Injured] {
        let n = labeled.iter().filter(|l| l.label == class).count();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "class `{}` has {n} pitches, need at least 2",
                match class {
                    Label::Healthy => "healthy",
                    Label::Injured => "injured",
                }
            )));
        }
    }
    let mut groups: BTreeMap<(&str, Label), Vec<(u32, String)>> = BTreeMap::new();
    for l in labeled {
        groups
            .entry((l.record.pitcher_id.as_str(), l.label))
            .or_default()
            .push((l.record.seq_index, l.record.pitch_id.clone()));
    }
    let (mut train, mut test) = (BTreeSet::new(), BTreeSet::new());
    for ((pitcher, label), mut members) in groups {
        members.sort();
        let ids = members.into_iter().map(|(_, id)| id).collect();
        let (a, b) = halve(
            ids,
            seed,
            &[
                seed::tag("split_half"),
                seed::tag(pitcher),
                label_tag(label),
            ],
        );
        train.extend(a);
        test.extend(b);
    }
    Ok(SplitPlan {
        name: "split_half".into(),
        train,
        test,
        k: labeled.first().map_or(0, |l| l.k_used),
        notes: String::new(),
        flipped: BTreeSet::new(),
    })
}

/// Splits the cohort's pitchers per handedness into (train, held-out) halves.
pub fn partition_pitchers(
    manifest: &Manifest,
    cohort: Cohort,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    let pitchers = manifest.pitchers();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for &hand in cohort.hands() {
        let ids: Vec<String> = pitchers
            .iter()
            .filter(|(_, &h)| h == hand)
            .map(|(id, _)| id.clone())
            .collect();
        if ids.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{hand}-handed cohort has {} pitchers, need at least 2 to hold some out",
                ids.len()
            )));
        }
        let (a, b) = halve(ids, seed, &[seed::tag("partition"), hand as u64]);
        train.extend(a);
        held.extend(b);
    }
    train.sort();
    held.sort();
    Ok((train, held))
}

fn ids_of<'a>(
    labeled: &'a [LabeledPitch],
    pitchers: &'a [String],
) -> impl Iterator<Item = &'a LabeledPitch> + 'a {
    labeled
        .iter()
        .filter(move |l| pitchers.contains(&l.record.pitcher_id))
}

/// Half of each listed pitcher's healthy pitches go to `train`; the rest of their pitches go to `test`.
fn healthy_half(
    labeled: &[LabeledPitch],
    pitchers: &[String],
    seed: u64,
    train: &mut BTreeSet<String>,
    test: &mut BTreeSet<String>,
) {
    for p in pitchers {
        let mut healthy = Vec::new();
        for l in labeled.iter().filter(|l| &l.record.pitcher_id == p) {
            match l.label {
                Label::Healthy => healthy.push(l.record.pitch_id.clone()),
                Label::Injured => {
                    test.insert(l.record.pitch_id.clone());
                }
            }
        }
        let (a, b) = halve(healthy, seed, &[seed::tag("healthy_half"), seed::tag(p)]);
        train.extend(a);
        test.extend(b);
    }
}

pub fn build_protocol(
    manifest: &Manifest,
    protocol: &Protocol,
    k: u32,
    seed: u64,
) -> Result<SplitPlan> {
    let labeled = label_pitches(manifest.records(), k)?;
    let pitchers = manifest.pitchers();
    let require = |p: &str| -> Result<()> {
        if pitchers.contains_key(p) {
            Ok(())
        } else {
            Err(Error::Lookup {
                kind: "pitcher",
                id: p.to_string(),
            })
        }
    };
    let of_pitcher = |p: &str| -> Vec<LabeledPitch> {
        labeled
            .iter()
            .filter(|l| l.record.pitcher_id == p)
            .cloned()
            .collect()
    };

    let mut plan = match protocol {
        Protocol::PerPitcher { pitcher } => {
            require(pitcher)?;
            let mut plan = split_half(&of_pitcher(pitcher), seed)?;
            plan.notes = format!("pitcher {pitcher}: half healthy + half injured train, rest test");
            plan
        }
        Protocol::Transfer {
            train_pitcher,
            test_pitcher,
        } => {
            if train_pitcher == test_pitcher {
                return Err(Error::InvalidProtocol(format!(
                    "transfer needs two different pitchers, got {train_pitcher} twice"
                )));
            }
            require(train_pitcher)?;
            require(test_pitcher)?;
            let source = split_half(&of_pitcher(train_pitcher), seed)?;
            SplitPlan {
                name: String::new(),
                train: source.train,
                test: of_pitcher(test_pitcher)
                    .into_iter()
                    .map(|l| l.record.pitch_id)
                    .collect(),
                k,
                notes: format!("train half of {train_pitcher}, test every pitch of {test_pitcher}"),
                flipped: BTreeSet::new(),
            }
        }
        Protocol::Cohort { cohort } => {
            let members: Vec<LabeledPitch> = labeled
                .iter()
                .filter(|l| cohort.contains(l.record.handedness))
                .cloned()
                .collect();
            if members.is_empty() {
                return Err(Error::InsufficientData(format!("cohort {cohort} is empty")));
            }
            let mut plan = split_half(&members, seed)?;
            plan.notes = format!("{cohort}: stratified half split per pitcher");
            plan
        }
        Protocol::Unseen { cohort } => {
            let (train_p, held_p) = partition_pitchers(manifest, *cohort, seed)?;
            SplitPlan {
                name: String::new(),
                train: ids_of(&labeled, &train_p)
                    .map(|l| l.record.pitch_id.clone())
                    .collect(),
                test: ids_of(&labeled, &held_p)
                    .map(|l| l.record.pitch_id.clone())
                    .collect(),
                k,
                notes: format!("train pitchers {train_p:?}; unseen test pitchers {held_p:?}"),
                flipped: BTreeSet::new(),
            }
        }
        Protocol::HealthyAugmented { cohort } => {
            let (train_p, held_p) = partition_pitchers(manifest, *cohort, seed)?;
            let mut train: BTreeSet<String> = ids_of(&labeled, &train_p)
                .map(|l| l.record.pitch_id.clone())
                .collect();
            let mut test = BTreeSet::new();
            healthy_half(&labeled, &held_p, seed, &mut train, &mut test);
            SplitPlan {
                name: String::new(),
                train,
                test,
                k,
                notes: format!(
                    "train pitchers {train_p:?} plus half the healthy pitches of held-out {held_p:?}"
                ),
                flipped: BTreeSet::new(),
            }
        }
        Protocol::FlipCrossArm {
            direction,
            with_flip,
            with_healthy,
        } => {
            let side = |h: Handedness| -> Vec<String> {
                pitchers
                    .iter()
                    .filter(|(_, &hand)| hand == h)
                    .map(|(id, _)| id.clone())
                    .collect()
            };
            let (src, dst) = (side(direction.source()), side(direction.target()));
            if src.is_empty() || dst.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "{direction} needs pitchers of both arms"
                )));
            }
            let mut train: BTreeSet<String> = ids_of(&labeled, &src)
                .map(|l| l.record.pitch_id.clone())
                .collect();
            let mut test = BTreeSet::new();
            if *with_healthy {
                healthy_half(&labeled, &dst, seed, &mut train, &mut test);
            } else {
                test.extend(ids_of(&labeled, &dst).map(|l| l.record.pitch_id.clone()));
            }
            let flipped = if *with_flip {
                ids_of(&labeled, &dst)
                    .map(|l| l.record.pitch_id.clone())
                    .collect()
            } else {
                BTreeSet::new()
            };
            SplitPlan {
                name: String::new(),
                train,
                test,
                k,
                notes: format!(
                    "train on {} arm, test on {} arm; {} side flipped",
                    direction.source(),
                    direction.target(),
                    if *with_flip { "target" } else { "no" }
                ),
                flipped,
            }
        }
    };
    plan.name = protocol.name();
    plan.k = k;
    plan.validate(manifest)?;
    Ok(plan)
}
