//! Raw per-detector exports and their reduction to a [`CountFrame`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use chrono::NaiveDate;

use super::frame::{parse_date, CountFrame, CountRow, TimeBin};
use crate::error::{Error, Result};

/// One detector reading over a half-hour; `count` is `None` for `BAD`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetectorRow {
    pub date: NaiveDate,
    pub interval: TimeBin,
    pub site: u32,
    pub detector: u32,
    pub count: Option<u64>,
}

/// Reads CSV with columns `Date, Time, Site, Detector, Count`.
pub fn read_raw<R: Read>(reader: R) -> Result<Vec<RawDetectorRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected = ["Date", "Time", "Site", "Detector", "Count"];
    if header.iter().ne(expected) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        let fail = |message: String| Error::Parse { line, message };
        let date = parse_date(&rec[0]).map_err(|e| fail(e.to_string()))?;
        let interval: TimeBin = rec[1].parse().map_err(|e: Error| fail(e.to_string()))?;
        if interval.width_min != 30 {
            return Err(fail(format!("interval {} is not a half-hour", &rec[1])));
        }
        let site = rec[2].parse().map_err(|_| fail(format!("bad site {:?}", &rec[2])))?;
        let detector = rec[3].parse().map_err(|_| fail(format!("bad detector {:?}", &rec[3])))?;
        let count = match &rec[4] {
            "BAD" => None,
            s => Some(s.parse().map_err(|_| fail(format!("bad count {s:?}")))?),
        };
        out.push(RawDetectorRow {
            date,
            interval,
            site,
            detector,
            count,
        });
    }
    Ok(out)
}

/// Site to the set of stop-line detectors retained for it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeepDetectors(BTreeMap<u32, BTreeSet<u32>>);

impl KeepDetectors {
    pub fn new(map: BTreeMap<u32, BTreeSet<u32>>) -> Self {
        Self(map)
    }

    /// Parses `site: d1 d2 ...` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |message: String| Error::Parse { line: k + 1, message };
            let (site, dets) = line.split_once(':').ok_or_else(|| fail("expected `site: detectors`".into()))?;
            let site: u32 = site.trim().parse().map_err(|_| fail(format!("bad site {site:?}")))?;
            let set = dets
                .split_whitespace()
                .map(|d| d.parse::<u32>().map_err(|_| fail(format!("bad detector {d:?}"))))
                .collect::<Result<BTreeSet<_>>>()?;
            if set.is_empty() {
                return Err(fail(format!("site {site} keeps no detectors")));
            }
            if map.insert(site, set).is_some() {
                return Err(fail(format!("site {site} listed twice")));
            }
        }
        Ok(Self(map))
    }

    pub fn sites(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.keys().copied()
    }

    pub fn keeps(&self, site: u32, detector: u32) -> bool {
        self.0.get(&site).is_some_and(|s| s.contains(&detector))
    }

    pub fn detectors(&self, site: u32) -> Option<&BTreeSet<u32>> {
        self.0.get(&site)
    }
}

/// Sums the kept detectors per (site, date, interval). An interval is missing
/// when any kept detector reads `BAD` or has no row. Sites are recoded to
/// 1..n in ascending original order.
pub fn clean(raw: &[RawDetectorRow], keep: &KeepDetectors) -> Result<CountFrame> {
    let mut readings: HashMap<(u32, NaiveDate, TimeBin), BTreeMap<u32, Option<u64>>> = HashMap::new();
    for r in raw {
        if !keep.keeps(r.site, r.detector) {
            continue;
        }
        let slot = readings.entry((r.site, r.date, r.interval)).or_default();
        if slot.insert(r.detector, r.count).is_some() {
            return Err(Error::DuplicateRow(format!(
                "site {} detector {} at {} {}",
                r.site, r.detector, r.date, r.interval
            )));
        }
    }
    let sites: BTreeSet<u32> = readings.keys().map(|k| k.0).collect();
    let id_map: BTreeMap<u32, usize> = sites.iter().enumerate().map(|(k, &s)| (s, k + 1)).collect();
    let rows = readings
        .into_iter()
        .map(|((site, date, bin), dets)| {
            let wanted = keep.detectors(site).expect("only kept sites collected");
            let complete = wanted.iter().all(|d| matches!(dets.get(d), Some(Some(_))));
            let count = complete.then(|| dets.values().map(|c| c.unwrap_or(0) as f64).sum());
            CountRow {
                date,
                bin,
                site: id_map[&site],
                count,
                covariates: vec![],
            }
        })
        .collect();
    CountFrame::new(rows, id_map, vec![])
}
