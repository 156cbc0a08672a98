//! Hourly aggregation, weekday/weekend partition and missingness tallies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};

use super::frame::{CountFrame, CountRow, TimeBin};
use crate::error::{invalid, Error, Result};

/// First and last hour (exclusive) of the modelled day.
pub const DAY_START_HOUR: u32 = 7;
pub const DAY_END_HOUR: u32 = 19;

/// A half-hour dropped because its partner half was absent.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageWarning {
    pub date: NaiveDate,
    pub site: usize,
    pub bin: TimeBin,
}

impl fmt::Display for CoverageWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} site {}: half-hour {} has no partner; dropped", self.date, self.site, self.bin)
    }
}

/// Sums half-hour pairs into hourly bins over 07:00–19:00. An hour is
/// missing when either half is missing.
pub fn aggregate_hourly(frame: &CountFrame) -> Result<(CountFrame, Vec<CoverageWarning>)> {
    let mut halves: BTreeMap<(NaiveDate, usize, u32), [Option<&CountRow>; 2]> = BTreeMap::new();
    for r in frame.rows() {
        if r.bin.width_min != 30 || r.bin.start_min % 30 != 0 {
            return Err(invalid(format!("row {} {} is not on a half-hour grid", r.date, r.bin)));
        }
        let hour = r.bin.start_min / 60;
        if !(DAY_START_HOUR..DAY_END_HOUR).contains(&hour) {
            continue;
        }
        let half = ((r.bin.start_min % 60) / 30) as usize;
        halves.entry((r.date, r.site, hour)).or_default()[half] = Some(r);
    }
    let mut rows = Vec::with_capacity(halves.len());
    let mut warnings = Vec::new();
    for ((date, site, hour), pair) in halves {
        match pair {
            [Some(a), Some(b)] => rows.push(CountRow {
                date,
                bin: TimeBin::new(hour * 60, 60)?,
                site,
                count: a.count.zip(b.count).map(|(x, y)| x + y),
                covariates: a.covariates.iter().zip(&b.covariates).map(|(x, y)| 0.5 * (x + y)).collect(),
            }),
            [Some(r), None] | [None, Some(r)] => warnings.push(CoverageWarning { date, site, bin: r.bin }),
            [None, None] => unreachable!("entries are created with one half set"),
        }
    }
    let out = CountFrame::new(rows, frame.id_map().clone(), frame.covariate_names().to_vec())?;
    Ok((out, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weekpart {
    Weekday,
    Weekend,
    #[default]
    All,
}

impl Weekpart {
    pub fn contains(self, date: NaiveDate) -> bool {
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        match self {
            Weekpart::Weekday => !weekend,
            Weekpart::Weekend => weekend,
            Weekpart::All => true,
        }
    }
}

impl FromStr for Weekpart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weekday" => Ok(Weekpart::Weekday),
            "weekend" => Ok(Weekpart::Weekend),
            "all" => Ok(Weekpart::All),
            _ => Err(invalid(format!("weekpart must be weekday, weekend or all, not {s:?}"))),
        }
    }
}

impl fmt::Display for Weekpart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weekpart::Weekday => "weekday",
            Weekpart::Weekend => "weekend",
            Weekpart::All => "all",
        })
    }
}

/// Monday–Friday rows and Saturday–Sunday rows.
pub fn split_weekpart(frame: &CountFrame) -> (CountFrame, CountFrame) {
    (
        frame.filter(|r| Weekpart::Weekday.contains(r.date)),
        frame.filter(|r| Weekpart::Weekend.contains(r.date)),
    )
}

/// Missing-cell tallies by ISO week and by site; every week and site present
/// in the frame appears, with zero when nothing is missing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MissingnessReport {
    pub by_week: BTreeMap<(i32, u32), usize>,
    pub by_site: BTreeMap<usize, usize>,
    pub rows: usize,
    pub missing: usize,
}

impl MissingnessReport {
    pub fn missing_fraction(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.missing as f64 / self.rows as f64
        }
    }

    /// `Group,Key,Missing` with week keys as `YYYY-Www`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Group,Key,Missing\n");
        for ((y, w), n) in &self.by_week {
            out.push_str(&format!("week,{y}-W{w:02},{n}\n"));
        }
        for (s, n) in &self.by_site {
            out.push_str(&format!("site,{s},{n}\n"));
        }
        out
    }
}

pub fn missingness_report(frame: &CountFrame) -> MissingnessReport {
    let mut report = MissingnessReport {
        rows: frame.len(),
        ..Default::default()
    };
    let weeks: BTreeSet<(i32, u32)> = frame
        .rows()
        .iter()
        .map(|r| (r.date.iso_week().year(), r.date.iso_week().week()))
        .collect();
    report.by_week = weeks.into_iter().map(|w| (w, 0)).collect();
    report.by_site = frame.sites().into_iter().map(|s| (s, 0)).collect();
    for r in frame.rows().iter().filter(|r| r.count.is_none()) {
        let w = r.date.iso_week();
        *report.by_week.get_mut(&(w.year(), w.week())).expect("week seeded") += 1;
        *report.by_site.get_mut(&r.site).expect("site seeded") += 1;
        report.missing += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(date: &str, bin: &str, site: usize, count: Option<f64>) -> CountRow {
        CountRow {
            date: date.parse().unwrap(),
            bin: bin.parse().unwrap(),
            site,
            count,
            covariates: vec![],
        }
    }

    #[test]
    fn half_hours_pair_into_hours() {
        let f = CountFrame::from_rows(
            vec![
                row("2017-10-16", "07:00-07:30", 1, Some(67.0)),
                row("2017-10-16", "07:30-08:00", 1, Some(90.0)),
                row("2017-10-16", "08:00-08:30", 1, None),
                row("2017-10-16", "08:30-09:00", 1, Some(50.0)),
                row("2017-10-16", "06:30-07:00", 1, Some(1.0)),
            ],
            vec![],
        )
        .unwrap();
        let (h, warnings) = aggregate_hourly(&f).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(h.len(), 2);
        assert_eq!(h.rows()[0].count, Some(157.0));
        assert_eq!(h.rows()[0].bin.label(), "07:00-08:00");
        assert_eq!(h.rows()[1].count, None);
    }

    #[test]
    fn full_day_gives_twelve_hours() {
        let rows = (0..48)
            .map(|k| {
                let b = TimeBin::new(k * 30, 30).unwrap();
                row("2018-04-09", &b.label(), 1, Some(1.0))
            })
            .collect();
        let (h, _) = aggregate_hourly(&CountFrame::from_rows(rows, vec![]).unwrap()).unwrap();
        assert_eq!(h.len(), 12);
    }

    #[test]
    fn dangling_half_dropped_with_warning() {
        let f = CountFrame::from_rows(vec![row("2018-04-09", "10:30-11:00", 2, Some(5.0))], vec![]).unwrap();
        let (h, warnings) = aggregate_hourly(&f).unwrap();
        assert!(h.is_empty());
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].site, 2);
    }

    #[test]
    fn weekpart_membership() {
        let mon: NaiveDate = "2018-04-09".parse().unwrap();
        let sun: NaiveDate = "2018-04-08".parse().unwrap();
        assert!(Weekpart::Weekday.contains(mon) && !Weekpart::Weekend.contains(mon));
        assert!(Weekpart::Weekend.contains(sun) && !Weekpart::Weekday.contains(sun));
        assert!("weekdays".parse::<Weekpart>().is_err());
    }

    #[test]
    fn single_missing_cell_tallied() {
        let f = CountFrame::from_rows(
            vec![
                row("2018-01-08", "07:00-08:00", 4, None),
                row("2018-01-08", "07:00-08:00", 1, Some(3.0)),
                row("2018-01-15", "07:00-08:00", 4, Some(3.0)),
            ],
            vec![],
        )
        .unwrap();
        let r = missingness_report(&f);
        assert_eq!(r.by_week[&(2018, 2)], 1);
        assert_eq!(r.by_week[&(2018, 3)], 0);
        assert_eq!(r.by_site[&4], 1);
        assert_eq!(r.by_site[&1], 0);
        assert!(r.to_csv().contains("week,2018-W02,1"));
    }
}
