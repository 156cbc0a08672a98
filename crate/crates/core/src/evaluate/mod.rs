//! Mean percentage error scoring, grouped reports and the prior-mean
//! baseline comparison.

mod baseline;

pub use baseline::{compare, prior_mean_baseline, Comparison, ComparisonRow};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{invalid, Error, Result};
use crate::ingest::{CountFrame, TimeBin};
use crate::model::FittedTable;

pub type CellKey = (NaiveDate, TimeBin, usize);

/// `|y - yhat| / y * 100`, or `None` when `y` is missing or zero or the
/// prediction is missing.
pub fn percentage_error(observed: Option<f64>, predicted: Option<f64>) -> Option<f64> {
    match (observed, predicted) {
        (Some(y), Some(p)) if y != 0.0 => Some((y - p).abs() / y.abs() * 100.0),
        _ => None,
    }
}

/// Mean of the percentage errors over includable pairs.
pub fn mpe(observed: &[Option<f64>], predicted: &[Option<f64>]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(invalid(format!(
            "{} observations against {} predictions",
            observed.len(),
            predicted.len()
        )));
    }
    let pes: Vec<f64> = observed
        .iter()
        .zip(predicted)
        .filter_map(|(y, p)| percentage_error(*y, *p))
        .collect();
    if pes.is_empty() {
        return Err(Error::EmptyMetric);
    }
    Ok(pes.iter().sum::<f64>() / pes.len() as f64)
}

/// Predicted value per cell; `None` marks a cell that has no prediction
/// (for example a baseline without history).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    values: BTreeMap<CellKey, Option<f64>>,
}

impl Predictions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: CellKey, value: Option<f64>) {
        self.values.insert(key, value);
    }

    pub fn get(&self, key: &CellKey) -> Option<Option<f64>> {
        self.values.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &Option<f64>)> {
        self.values.iter()
    }

    /// Counts of a frame read as predictions.
    pub fn from_frame(frame: &CountFrame) -> Self {
        Self {
            values: frame.rows().iter().map(|r| (r.key(), r.count)).collect(),
        }
    }

    pub fn from_fitted(table: &FittedTable) -> Self {
        Self {
            values: table
                .rows
                .iter()
                .map(|r| ((r.date, r.bin, r.site), Some(r.fitted)))
                .collect(),
        }
    }

    /// Prediction for every row of `frame`, in row order.
    pub fn align(&self, frame: &CountFrame) -> Result<Vec<Option<f64>>> {
        frame
            .rows()
            .iter()
            .map(|r| {
                self.get(&r.key()).ok_or_else(|| {
                    invalid(format!("no prediction for {} {} site {}", r.date, r.bin, r.site))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupBy {
    Site,
    Day,
    Time,
    DayTime,
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "site" => Ok(GroupBy::Site),
            "day" => Ok(GroupBy::Day),
            "time" => Ok(GroupBy::Time),
            "day_time" | "daytime" => Ok(GroupBy::DayTime),
            _ => Err(invalid(format!("unknown grouping {s:?}"))),
        }
    }
}

/// Group label; days are counted from Monday so keys sort Monday first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupKey {
    Site(usize),
    Day(u32),
    Time(TimeBin),
    DayTime(u32, TimeBin),
}

fn weekday_name(d: u32) -> String {
    Weekday::try_from(d as u8).map(|w| w.to_string()).unwrap_or_default()
}

impl GroupKey {
    fn of(by: GroupBy, date: NaiveDate, bin: TimeBin, site: usize) -> Self {
        let day = date.weekday().num_days_from_monday();
        match by {
            GroupBy::Site => GroupKey::Site(site),
            GroupBy::Day => GroupKey::Day(day),
            GroupBy::Time => GroupKey::Time(bin),
            GroupBy::DayTime => GroupKey::DayTime(day, bin),
        }
    }

    fn fields(&self) -> Vec<String> {
        match self {
            GroupKey::Site(s) => vec![s.to_string()],
            GroupKey::Day(d) => vec![weekday_name(*d)],
            GroupKey::Time(b) => vec![b.label()],
            GroupKey::DayTime(d, b) => vec![weekday_name(*d), b.label()],
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fields().join(" "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMpe {
    pub key: GroupKey,
    /// Pairs that entered the mean.
    pub n: usize,
    pub mpe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedMpe {
    pub group_by: GroupBy,
    /// Mean over all included observations, not the mean of group means.
    pub overall: f64,
    pub n: usize,
    pub groups: Vec<GroupMpe>,
    /// Groups present in the frame with nothing to score.
    pub omitted: Vec<GroupKey>,
}

impl GroupedMpe {
    pub fn get(&self, key: GroupKey) -> Option<f64> {
        self.groups.iter().find(|g| g.key == key).map(|g| g.mpe)
    }

    pub fn to_csv(&self) -> String {
        let head = match self.group_by {
            GroupBy::Site => "ID",
            GroupBy::Day => "Day",
            GroupBy::Time => "TimeBin",
            GroupBy::DayTime => "Day,TimeBin",
        };
        let mut out = format!("{head},N,MPE\n");
        for g in &self.groups {
            out.push_str(&format!("{},{},{}\n", g.key.fields().join(","), g.n, g.mpe));
        }
        out
    }
}

pub fn grouped_mpe(frame: &CountFrame, predictions: &Predictions, group_by: GroupBy) -> Result<GroupedMpe> {
    let preds = predictions.align(frame)?;
    let mut sums: BTreeMap<GroupKey, (f64, usize)> = BTreeMap::new();
    let (mut total, mut n) = (0.0, 0);
    for (r, p) in frame.rows().iter().zip(&preds) {
        let entry = sums.entry(GroupKey::of(group_by, r.date, r.bin, r.site)).or_default();
        if let Some(pe) = percentage_error(r.count, *p) {
            entry.0 += pe;
            entry.1 += 1;
            total += pe;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMetric);
    }
    let mut groups = Vec::new();
    let mut omitted = Vec::new();
    for (key, (s, k)) in sums {
        if k == 0 {
            omitted.push(key);
        } else {
            groups.push(GroupMpe {
                key,
                n: k,
                mpe: s / k as f64,
            });
        }
    }
    Ok(GroupedMpe {
        group_by,
        overall: total / n as f64,
        n,
        groups,
        omitted,
    })
}

/// All four groupings of one prediction run.
#[derive(Debug, Clone, PartialEq)]
pub struct MpeReport {
    pub overall: f64,
    pub by_site: GroupedMpe,
    pub by_day: GroupedMpe,
    pub by_time: GroupedMpe,
    pub by_day_time: GroupedMpe,
}

impl MpeReport {
    pub fn new(frame: &CountFrame, predictions: &Predictions) -> Result<Self> {
        let by_site = grouped_mpe(frame, predictions, GroupBy::Site)?;
        Ok(Self {
            overall: by_site.overall,
            by_day: grouped_mpe(frame, predictions, GroupBy::Day)?,
            by_time: grouped_mpe(frame, predictions, GroupBy::Time)?,
            by_day_time: grouped_mpe(frame, predictions, GroupBy::DayTime)?,
            by_site,
        })
    }

    /// Human-readable notes for omitted groups.
    pub fn notes(&self) -> Vec<String> {
        [&self.by_site, &self.by_day, &self.by_time, &self.by_day_time]
            .iter()
            .flat_map(|g| g.omitted.iter().map(|k| format!("group {k} has no scorable cells")))
            .collect()
    }
}
