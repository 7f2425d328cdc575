use serde::{Deserialize, Serialize};

use super::record::PitchRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Healthy,
    Injured,
}

impl Label {
    pub fn as_target(self) -> usize {
        match self {
            Label::Healthy => 0,
            Label::Injured => 1,
        }
    }

    pub fn is_injured(self) -> bool {
        self == Label::Injured
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPitch {
    pub record: PitchRecord,
    pub label: Label,
    pub k_used: u32,
}

/// Last-k labeling: a pitch is injured iff it is among the final `k` pitches
/// before a disabled-list placement. Pitchers with fewer than `k` linked
/// pitches have all of them labeled injured.
pub fn label_pitches(records: &[PitchRecord], k: u32) -> Result<Vec<LabeledPitch>> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    Ok(records
        .iter()
        .map(|r| LabeledPitch {
            record: r.clone(),
            label: match r.pitches_before_dl {
                Some(d) if d <= k => Label::Injured,
                _ => Label::Healthy,
            },
            k_used: k,
        })
        .collect())
}
