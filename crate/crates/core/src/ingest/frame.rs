//! Cleaned count table: one row per (date, time bin, site) with the summed
//! count or a missing marker.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{invalid, Error, Result};

/// A clock interval `HH:MM-HH:MM` within one day, in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeBin {
    pub start_min: u32,
    pub width_min: u32,
}

impl TimeBin {
    pub fn new(start_min: u32, width_min: u32) -> Result<Self> {
        if width_min == 0 || start_min + width_min > 24 * 60 {
            return Err(invalid(format!("time bin {start_min}+{width_min} minutes leaves the day")));
        }
        Ok(Self { start_min, width_min })
    }

    pub fn end_min(&self) -> u32 {
        self.start_min + self.width_min
    }

    pub fn label(&self) -> String {
        let hm = |m: u32| format!("{:02}:{:02}", m / 60, m % 60);
        format!("{}-{}", hm(self.start_min), hm(self.end_min()))
    }
}

impl fmt::Display for TimeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn parse_clock(s: &str) -> Option<u32> {
    let (h, m) = s.trim().split_once(':')?;
    let (h, m): (u32, u32) = (h.parse().ok()?, m.parse().ok()?);
    (h <= 24 && m < 60 && h * 60 + m <= 24 * 60).then_some(h * 60 + m)
}

impl FromStr for TimeBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("malformed interval label {s:?}"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let (start, end) = (parse_clock(a).ok_or_else(bad)?, parse_clock(b).ok_or_else(bad)?);
        if end <= start {
            return Err(bad());
        }
        TimeBin::new(start, end - start)
    }
}

/// Accepts `D/M/YY`, `D/M/YYYY` and ISO `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    let s = s.trim();
    let parsed = if s.contains('/') {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [_, _, y] if y.len() == 2 => NaiveDate::parse_from_str(s, "%d/%m/%y").ok(),
            [_, _, y] if y.len() == 4 => NaiveDate::parse_from_str(s, "%d/%m/%Y").ok(),
            _ => None,
        }
    } else {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
    };
    parsed.ok_or_else(|| invalid(format!("unrecognised date {s:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    pub date: NaiveDate,
    pub bin: TimeBin,
    /// Sequential site ID, 1-based.
    pub site: usize,
    pub count: Option<f64>,
    pub covariates: Vec<f64>,
}

impl CountRow {
    pub fn key(&self) -> (NaiveDate, TimeBin, usize) {
        (self.date, self.bin, self.site)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountFrame {
    rows: Vec<CountRow>,
    /// Original site number to sequential ID.
    id_map: BTreeMap<u32, usize>,
    covariate_names: Vec<String>,
}

impl CountFrame {
    /// Rows are sorted by (date, bin, site).
    pub fn new(mut rows: Vec<CountRow>, id_map: BTreeMap<u32, usize>, covariate_names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            if r.site == 0 {
                return Err(invalid("site IDs are 1-based"));
            }
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateRow(format!("{} {} site {}", r.date, r.bin, r.site)));
            }
            if let Some(c) = r.count {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(invalid(format!("count {c} at {} {} site {}", r.date, r.bin, r.site)));
                }
            }
            if r.covariates.len() != covariate_names.len() || r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("incomplete covariates at {} {} site {}", r.date, r.bin, r.site)));
            }
        }
        let ids: BTreeSet<usize> = id_map.values().copied().collect();
        if ids.len() != id_map.len() {
            return Err(invalid("two original sites share a sequential ID"));
        }
        rows.sort_by_key(|r| r.key());
        Ok(Self {
            rows,
            id_map,
            covariate_names,
        })
    }

    /// A frame whose sites keep their IDs (identity `id_map`).
    pub fn from_rows(rows: Vec<CountRow>, covariate_names: Vec<String>) -> Result<Self> {
        let id_map = rows
            .iter()
            .map(|r| r.site)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|s| (s as u32, s))
            .collect();
        Self::new(rows, id_map, covariate_names)
    }

    pub fn rows(&self) -> &[CountRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn id_map(&self) -> &BTreeMap<u32, usize> {
        &self.id_map
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Distinct sequential site IDs present in the rows.
    pub fn sites(&self) -> BTreeSet<usize> {
        self.rows.iter().map(|r| r.site).collect()
    }

    pub fn dates(&self) -> BTreeSet<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    pub fn bins(&self) -> BTreeSet<TimeBin> {
        self.rows.iter().map(|r| r.bin).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.rows.iter().filter(|r| r.count.is_none()).count()
    }

    /// Non-missing total.
    pub fn total_count(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.count).sum()
    }

    pub fn get(&self, date: NaiveDate, bin: TimeBin, site: usize) -> Option<&CountRow> {
        self.rows
            .binary_search_by_key(&(date, bin, site), |r| r.key())
            .ok()
            .map(|k| &self.rows[k])
    }

    /// Rows satisfying `keep`, same metadata.
    pub fn filter(&self, keep: impl Fn(&CountRow) -> bool) -> Self {
        Self {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            id_map: self.id_map.clone(),
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Copy with the counts of rows matching `hide` set to missing.
    pub fn masked(&self, hide: impl Fn(&CountRow) -> bool) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            if hide(r) {
                r.count = None;
            }
        }
        out
    }

    /// CSV with columns `Date, TimeBin, ID, Sum` then the covariates; an
    /// empty `Sum` is a missing count.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["Date".to_string(), "TimeBin".into(), "ID".into(), "Sum".into()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.date.to_string(),
                r.bin.label(),
                r.site.to_string(),
                r.count.map(|c| c.to_string()).unwrap_or_default(),
            ];
            rec.extend(r.covariates.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let expected = ["Date", "TimeBin", "ID", "Sum"];
        if header.len() < 4 || header.iter().take(4).ne(expected) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header starting {}", expected.join(",")),
            });
        }
        let covariate_names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec?;
            let fail = |message: String| Error::Parse { line, message };
            let date = parse_date(&rec[0]).map_err(|e| fail(e.to_string()))?;
            let bin: TimeBin = rec[1].parse().map_err(|e: Error| fail(e.to_string()))?;
            let site: usize = rec[2].parse().map_err(|_| fail(format!("bad ID {:?}", &rec[2])))?;
            let count = match &rec[3] {
                "" | "NA" => None,
                s => Some(s.parse::<f64>().map_err(|_| fail(format!("bad Sum {s:?}")))?),
            };
            let covariates = (4..rec.len())
                .map(|c| rec[c].parse::<f64>().map_err(|_| fail(format!("bad covariate {:?}", &rec[c]))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(CountRow {
                date,
                bin,
                site,
                count,
                covariates,
            });
        }
        Self::from_rows(rows, covariate_names)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes())
    }

    /// `OriginalSite,ID` lines.
    pub fn id_map_csv(&self) -> String {
        let mut out = String::from("OriginalSite,ID\n");
        for (orig, id) in &self.id_map {
            out.push_str(&format!("{orig},{id}\n"));
        }
        out
    }
}
