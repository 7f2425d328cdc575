//! Confusion counts, accuracy/precision/recall/F1 and report tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::model::Prediction;

/// Positive class is injured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted.is_injured(), actual.is_injured()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Counts over predictions matched to labels by pitch id. Every label must
/// have exactly one prediction and vice versa.
pub fn confusion(
    preds: &[Prediction],
    labels: &BTreeMap<String, Label>,
) -> Result<ConfusionCounts> {
    let mut seen = BTreeSet::new();
    let mut c = ConfusionCounts::default();
    for p in preds {
        let actual = labels.get(&p.pitch_id).ok_or_else(|| {
            Error::Alignment(format!("prediction for unlabeled pitch {}", p.pitch_id))
        })?;
        if !seen.insert(p.pitch_id.as_str()) {
            return Err(Error::Alignment(format!(
                "duplicate prediction for {}",
                p.pitch_id
            )));
        }
        c.record(p.label_hat, *actual);
    }
    if seen.len() != labels.len() {
        let missing = labels.keys().find(|k| !seen.contains(k.as_str())).unwrap();
        return Err(Error::Alignment(format!(
            "{} labeled pitches have no prediction (first: {missing})",
            labels.len() - seen.len()
        )));
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when either is 0.
pub fn f1_score(prec: f64, rec: f64) -> f64 {
    if prec <= 0.0 || rec <= 0.0 {
        0.0
    } else {
        1.0 / (0.5 * (1.0 / rec + 1.0 / prec))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub prec: f64,
    pub rec: f64,
    pub f1: f64,
}

/// Zero denominators give 0 rather than NaN.
pub fn compute_metrics(c: &ConfusionCounts) -> Result<Scores> {
    if c.total() == 0 {
        return Err(Error::InsufficientData("no evaluated pitches".into()));
    }
    let prec = ratio(c.tp, c.tp + c.fp);
    let rec = ratio(c.tp, c.tp + c.fn_);
    Ok(Scores {
        acc: ratio(c.tp + c.tn, c.total()),
        prec,
        rec,
        f1: f1_score(prec, rec),
    })
}

/// One evaluated group with its context labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub pitcher: Option<String>,
    pub cohort: Option<String>,
    pub injury: Option<String>,
    pub k: Option<u32>,
    pub counts: ConfusionCounts,
    pub scores: Scores,
}

impl MetricsRow {
    pub fn new(counts: ConfusionCounts) -> Result<Self> {
        Ok(MetricsRow {
            pitcher: None,
            cohort: None,
            injury: None,
            k: None,
            scores: compute_metrics(&counts)?,
            counts,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Pitcher,
    Injury,
    K,
    Cohort,
}

impl Grouping {
    pub fn header(self) -> &'static str {
        match self {
            Grouping::Pitcher => "Pitcher",
            Grouping::Injury => "Injury",
            Grouping::K => "k",
            Grouping::Cohort => "Arm",
        }
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pitcher" => Ok(Grouping::Pitcher),
            "injury" => Ok(Grouping::Injury),
            "k" => Ok(Grouping::K),
            "cohort" => Ok(Grouping::Cohort),
            other => Err(Error::InvalidArgument(format!(
                "unknown grouping `{other}` (expected pitcher, injury, k or cohort)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum GroupKey {
    Num(u32),
    Text(String),
}

impl GroupKey {
    fn label(&self) -> String {
        match self {
            GroupKey::Num(k) => format!("k={k}"),
            GroupKey::Text(s) => s.clone(),
        }
    }
}

fn key_of(row: &MetricsRow, g: Grouping) -> Option<GroupKey> {
    match g {
        Grouping::Pitcher => row.pitcher.clone().map(GroupKey::Text),
        Grouping::Injury => row.injury.clone().map(GroupKey::Text),
        Grouping::Cohort => row.cohort.clone().map(GroupKey::Text),
        Grouping::K => row.k.map(GroupKey::Num),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub key: String,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub key_header: String,
    pub rows: Vec<TableRow>,
    /// Unweighted mean of the group rows.
    pub average: Scores,
}

fn mean_scores<'a>(it: impl Iterator<Item = &'a Scores>) -> Scores {
    let (mut n, mut s) = (0.0, [0.0; 4]);
    for x in it {
        n += 1.0;
        s[0] += x.acc;
        s[1] += x.prec;
        s[2] += x.rec;
        s[3] += x.f1;
    }
    Scores {
        acc: s[0] / n,
        prec: s[1] / n,
        rec: s[2] / n,
        f1: s[3] / n,
    }
}

/// Groups rows by the chosen key (sorted; rows sharing a key are averaged)
/// and appends the unweighted average over groups.
pub fn tabulate(rows: &[MetricsRow], grouping: Grouping) -> Result<Table> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no rows to tabulate".into()));
    }
    let mut groups: BTreeMap<GroupKey, Vec<&Scores>> = BTreeMap::new();
    for r in rows {
        let key = key_of(r, grouping).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "row lacks the `{}` label needed for grouping",
                grouping.header()
            ))
        })?;
        groups.entry(key).or_default().push(&r.scores);
    }
    let rows: Vec<TableRow> = groups
        .into_iter()
        .map(|(k, v)| TableRow {
            key: k.label(),
            scores: mean_scores(v.into_iter()),
        })
        .collect();
    Ok(Table {
        key_header: grouping.header().into(),
        average: mean_scores(rows.iter().map(|r| &r.scores)),
        rows,
    })
}

pub fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

impl Table {
    /// Full-precision CSV: key column, Acc, Prec, Rec, F1, then an Average row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([self.key_header.as_str(), "Acc", "Prec", "Rec", "F1"])?;
        for (key, s) in self
            .rows
            .iter()
            .map(|r| (r.key.as_str(), &r.scores))
            .chain([("Average", &self.average)])
        {
            w.write_record([
                key.to_string(),
                s.acc.to_string(),
                s.prec.to_string(),
                s.rec.to_string(),
                s.f1.to_string(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidState(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned markdown table rounded to two decimals.
    pub fn to_markdown(&self) -> String {
        let mut cells: Vec<[String; 5]> = vec![[
            self.key_header.clone(),
            "Acc".into(),
            "Prec".into(),
            "Rec".into(),
            "F1".into(),
        ]];
        for (key, s) in self
            .rows
            .iter()
            .map(|r| (r.key.as_str(), &r.scores))
            .chain([("Average", &self.average)])
        {
            cells.push([
                key.into(),
                fmt2(s.acc),
                fmt2(s.prec),
                fmt2(s.rec),
                fmt2(s.f1),
            ]);
        }
        markdown(&cells)
    }
}

pub(crate) fn markdown<const N: usize>(cells: &[[String; N]]) -> String {
    let widths: Vec<usize> = (0..N)
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        out.push('|');
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                write!(out, " {:<w$} |", cell, w = widths[c]).unwrap();
            } else {
                write!(out, " {:>w$} |", cell, w = widths[c]).unwrap();
            }
        }
        out.push('\n');
        if i == 0 {
            out.push('|');
            for (c, w) in widths.iter().enumerate() {
                out.push_str(if c == 0 { " :" } else { " " });
                out.push_str(&"-".repeat(w - 1));
                out.push_str(if c == 0 { " |" } else { ": |" });
            }
            out.push('\n');
        }
    }
    out
}

/// Per-pitcher probe accuracy rows with an optional chance column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub average_label: String,
    pub rows: Vec<AccuracyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub pitcher: String,
    pub accuracy: f64,
    pub chance: Option<f64>,
}

impl AccuracyTable {
    pub fn average(&self) -> f64 {
        self.rows.iter().map(|r| r.accuracy).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn average_chance(&self) -> Option<f64> {
        let c: Option<Vec<f64>> = self.rows.iter().map(|r| r.chance).collect();
        c.map(|c| c.iter().sum::<f64>() / c.len().max(1) as f64)
    }

    pub fn to_csv(&self) -> Result<String> {
        let with_chance = self.rows.iter().any(|r| r.chance.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        if with_chance {
            w.write_record(["Pitcher", "Guess", "Accuracy"])?;
        } else {
            w.write_record(["Pitcher", "Accuracy"])?;
        }
        let avg = AccuracyRow {
            pitcher: self.average_label.clone(),
            accuracy: self.average(),
            chance: self.average_chance(),
        };
        for r in self.rows.iter().chain([&avg]) {
            if with_chance {
                w.write_record([
                    r.pitcher.clone(),
                    r.chance.unwrap_or(f64::NAN).to_string(),
                    r.accuracy.to_string(),
                ])?;
            } else {
                w.write_record([r.pitcher.clone(), r.accuracy.to_string()])?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidState(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let mut cells = vec![["Pitcher".to_string(), "Guess".into(), "Accuracy".into()]];
        for r in &self.rows {
            cells.push([
                r.pitcher.clone(),
                r.chance.map(fmt2).unwrap_or_default(),
                fmt2(r.accuracy),
            ]);
        }
        cells.push([
            self.average_label.clone(),
            self.average_chance().map(fmt2).unwrap_or_default(),
            fmt2(self.average()),
        ]);
        markdown(&cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(id: &str, injured: bool) -> Prediction {
        Prediction {
            pitch_id: id.into(),
            p: if injured { 0.9 } else { 0.1 },
            label_hat: if injured {
                Label::Injured
            } else {
                Label::Healthy
            },
        }
    }

    fn lab(b: bool) -> Label {
        if b {
            Label::Injured
        } else {
            Label::Healthy
        }
    }

    #[test]
    fn counts_from_hand_built_list() {
        // 3 tp, 1 fp, 1 fn, 5 tn
        let spec = [
            (true, true),
            (true, true),
            (true, true),
            (true, false),
            (false, true),
            (false, false),
            (false, false),
            (false, false),
            (false, false),
            (false, false),
        ];
        let preds: Vec<_> = spec
            .iter()
            .enumerate()
            .map(|(i, &(p, _))| pred(&i.to_string(), p))
            .collect();
        let labels = spec
            .iter()
            .enumerate()
            .map(|(i, &(_, l))| (i.to_string(), lab(l)))
            .collect();
        let c = confusion(&preds, &labels).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 3,
                fp: 1,
                fn_: 1,
                tn: 5
            }
        );
    }

    #[test]
    fn all_injured_predictions_on_healthy() {
        let preds: Vec<_> = (0..4).map(|i| pred(&i.to_string(), true)).collect();
        let labels = (0..4).map(|i| (i.to_string(), Label::Healthy)).collect();
        let c = confusion(&preds, &labels).unwrap();
        assert_eq!((c.tp, c.fp), (0, 4));
        let s = compute_metrics(&c).unwrap();
        assert_eq!((s.prec, s.rec, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn misaligned_ids_rejected() {
        let labels: BTreeMap<_, _> = [("a".to_string(), Label::Healthy)].into();
        assert!(matches!(
            confusion(&[pred("b", true)], &labels),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(confusion(&[], &labels), Err(Error::Alignment(_))));
        assert!(matches!(
            confusion(&[pred("a", true), pred("a", true)], &labels),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn empty_counts_rejected() {
        assert!(matches!(
            compute_metrics(&ConfusionCounts::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn tabulate_groups_and_averages() {
        let mut rows = Vec::new();
        for (inj, tp) in [("UCL Tear", 3), ("Back Strain", 1), ("UCL Tear", 1)] {
            let mut r = MetricsRow::new(ConfusionCounts {
                tp,
                fp: 1,
                fn_: 1,
                tn: 5,
            })
            .unwrap();
            r.injury = Some(inj.into());
            rows.push(r);
        }
        let t = tabulate(&rows, Grouping::Injury).unwrap();
        assert_eq!(
            t.rows.iter().map(|r| r.key.as_str()).collect::<Vec<_>>(),
            ["Back Strain", "UCL Tear"]
        );
        assert!(tabulate(&rows, Grouping::Pitcher).is_err());
        assert!("arm".parse::<Grouping>().is_err());
        let single = tabulate(&rows[..1], Grouping::Injury).unwrap();
        assert_eq!(single.average, single.rows[0].scores);
    }

    #[test]
    fn k_groups_sort_numerically() {
        let rows: Vec<_> = [75, 10, 20]
            .iter()
            .map(|&k| {
                let mut r = MetricsRow::new(ConfusionCounts {
                    tp: 1,
                    fp: 0,
                    fn_: 0,
                    tn: 1,
                })
                .unwrap();
                r.k = Some(k);
                r
            })
            .collect();
        let t = tabulate(&rows, Grouping::K).unwrap();
        assert_eq!(
            t.rows.iter().map(|r| r.key.as_str()).collect::<Vec<_>>(),
            ["k=10", "k=20", "k=75"]
        );
    }

    #[test]
    fn csv_and_markdown_layout() {
        let mut r = MetricsRow::new(ConfusionCounts {
            tp: 3,
            fp: 0,
            fn_: 1,
            tn: 6,
        })
        .unwrap();
        r.pitcher = Some("L01".into());
        let t = tabulate(&[r], Grouping::Pitcher).unwrap();
        let csv = t.to_csv().unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "Pitcher,Acc,Prec,Rec,F1");
        assert!(lines[1].starts_with("L01,0.9,1,0.75,0.857"));
        assert!(lines[2].starts_with("Average,"));
        let md = t.to_markdown();
        assert!(
            md.contains("| L01     | 0.90 | 1.00 | 0.75 | 0.86 |"),
            "{md}"
        );
    }

    #[test]
    fn accuracy_table_average_row() {
        let t = AccuracyTable {
            average_label: "All Average".into(),
            rows: vec![
                AccuracyRow {
                    pitcher: "a".into(),
                    accuracy: 0.5,
                    chance: None,
                },
                AccuracyRow {
                    pitcher: "b".into(),
                    accuracy: 0.6,
                    chance: None,
                },
            ],
        };
        assert!((t.average() - 0.55).abs() < 1e-12);
        assert!(t
            .to_csv()
            .unwrap()
            .lines()
            .last()
            .unwrap()
            .starts_with("All Average,0.55"));
        assert!(t.to_markdown().contains("All Average"));
    }

    fn naive(pairs: &[(bool, bool)]) -> (f64, f64, f64, f64) {
        let n = pairs.len() as f64;
        let correct = pairs.iter().filter(|(p, l)| p == l).count() as f64;
        let pred_inj = pairs.iter().filter(|(p, _)| *p).count() as f64;
        let true_inj = pairs.iter().filter(|(_, l)| *l).count() as f64;
        let hit = pairs.iter().filter(|(p, l)| *p && *l).count() as f64;
        let prec = if pred_inj > 0.0 { hit / pred_inj } else { 0.0 };
        let rec = if true_inj > 0.0 { hit / true_inj } else { 0.0 };
        let f1 = if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
        (correct / n, prec, rec, f1)
    }

    proptest! {
        #[test]
        fn matches_naive_recount_and_permutation(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40), rot in 0usize..40) {
            let preds: Vec<_> = pairs.iter().enumerate().map(|(i, &(p, _))| pred(&format!("{i:03}"), p)).collect();
            let labels: BTreeMap<_, _> = pairs.iter().enumerate().map(|(i, &(_, l))| (format!("{i:03}"), lab(l))).collect();
            let s = compute_metrics(&confusion(&preds, &labels).unwrap()).unwrap();
            let (a, p, r, f) = naive(&pairs);
            prop_assert!((s.acc - a).abs() < 1e-12 && (s.prec - p).abs() < 1e-12);
            prop_assert!((s.rec - r).abs() < 1e-12 && (s.f1 - f).abs() < 1e-12);
            let mut rotated = preds.clone();
            rotated.rotate_left(rot % preds.len());
            prop_assert_eq!(compute_metrics(&confusion(&rotated, &labels).unwrap()).unwrap(), s);
        }

        #[test]
        fn harmonic_mean_bounds(p in 0.001f64..=1.0, r in 0.001f64..=1.0) {
            let f = f1_score(p, r);
            prop_assert!(f <= 2.0 * p.min(r) + 1e-12);
            prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
        }
    }
}
