use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::video::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handedness {
    Left,
    Right,
}

impl Handedness {
    pub fn other(self) -> Self {
        match self {
            Handedness::Left => Handedness::Right,
            Handedness::Right => Handedness::Left,
        }
    }
}

impl fmt::Display for Handedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Handedness::Left => "left",
            Handedness::Right => "right",
        })
    }
}

/// The injury categories present in the broadcast corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjuryType {
    BackStrain,
    ArmStrain,
    FingerBlister,
    ShoulderStrain,
    UclTear,
    IntercostalStrain,
    SternoclavicularJoint,
    RotatorCuff,
    HamstringStrain,
    GroinStrain,
}

impl InjuryType {
    pub const ALL: [InjuryType; 10] = [
        InjuryType::BackStrain,
        InjuryType::ArmStrain,
        InjuryType::FingerBlister,
        InjuryType::ShoulderStrain,
        InjuryType::UclTear,
        InjuryType::IntercostalStrain,
        InjuryType::SternoclavicularJoint,
        InjuryType::RotatorCuff,
        InjuryType::HamstringStrain,
        InjuryType::GroinStrain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InjuryType::BackStrain => "Back Strain",
            InjuryType::ArmStrain => "Arm Strain",
            InjuryType::FingerBlister => "Finger Blister",
            InjuryType::ShoulderStrain => "Shoulder Strain",
            InjuryType::UclTear => "UCL Tear",
            InjuryType::IntercostalStrain => "Intercostal Strain",
            InjuryType::SternoclavicularJoint => "Sternoclavicular",
            InjuryType::RotatorCuff => "Rotator Cuff",
            InjuryType::HamstringStrain => "Hamstring Strain",
            InjuryType::GroinStrain => "Groin Strain",
        }
    }
}

impl fmt::Display for InjuryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One manifest line. Field names are the on-disk JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitchRecord {
    pub pitch_id: String,
    pub pitcher_id: String,
    pub handedness: Handedness,
    pub game_id: String,
    /// Chronological index within the pitcher's history, 0-based.
    pub seq_index: u32,
    pub injury_event_id: Option<String>,
    /// Distance to the disabled-list placement; 1 = last pitch before it.
    pub pitches_before_dl: Option<u32>,
    pub injury_type: Option<InjuryType>,
    /// Storage key for the raw clip and its flow clip.
    pub clip_ref: String,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    records: Vec<PitchRecord>,
}

impl Manifest {
    pub fn new(records: Vec<PitchRecord>) -> Result<Self> {
        let m = Manifest { records };
        m.validate()?;
        Ok(m)
    }

    pub fn records(&self) -> &[PitchRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut last_seq: BTreeMap<&str, u32> = BTreeMap::new();
        let mut hand: BTreeMap<&str, Handedness> = BTreeMap::new();
        for r in &self.records {
            let bad = |msg: &str| Error::InvalidInput(format!("pitch {}: {msg}", r.pitch_id));
            if !ids.insert(r.pitch_id.as_str()) {
                return Err(bad("duplicate pitch_id"));
            }
            if r.pitches_before_dl == Some(0) {
                return Err(bad("pitches_before_dl must be >= 1"));
            }
            if r.injury_type.is_some() != r.injury_event_id.is_some() {
                return Err(bad("injury_type must be present iff injury_event_id is"));
            }
            if let Some(prev) = last_seq.insert(&r.pitcher_id, r.seq_index) {
                if r.seq_index <= prev {
                    return Err(bad("seq_index not strictly increasing for pitcher"));
                }
            }
            if let Some(h) = hand.insert(&r.pitcher_id, r.handedness) {
                if h != r.handedness {
                    return Err(bad("pitcher handedness changes between records"));
                }
            }
            if r.bbox.w == 0 || r.bbox.h == 0 {
                return Err(bad("bbox has zero extent"));
            }
        }
        Ok(())
    }

    pub fn get(&self, pitch_id: &str) -> Option<&PitchRecord> {
        self.records.iter().find(|r| r.pitch_id == pitch_id)
    }

    pub fn index(&self) -> BTreeMap<&str, &PitchRecord> {
        self.records
            .iter()
            .map(|r| (r.pitch_id.as_str(), r))
            .collect()
    }

    /// Pitcher ids with their handedness, sorted by id.
    pub fn pitchers(&self) -> BTreeMap<String, Handedness> {
        self.records
            .iter()
            .map(|r| (r.pitcher_id.clone(), r.handedness))
            .collect()
    }

    pub fn pitcher_records<'a>(
        &'a self,
        pitcher_id: &'a str,
    ) -> impl Iterator<Item = &'a PitchRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.pitcher_id == pitcher_id)
    }

    /// Game ids containing a pitch thrown immediately before a disabled-list placement.
    pub fn injury_games(&self) -> BTreeSet<String> {
        self.records
            .iter()
            .filter(|r| r.pitches_before_dl == Some(1))
            .map(|r| r.game_id.clone())
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::InvalidInput(format!("manifest line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Manifest::new(records)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
        Manifest::from_jsonl(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::tensor_file::write_bytes_atomic(path, self.to_jsonl().as_bytes())
    }

    /// SHA-256 of the JSONL serialisation, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}
