use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};

use super::{percentage_error, Predictions};
use crate::error::{invalid, Error, Result};
use crate::ingest::{parse_date, CountFrame, TimeBin};

/// Mean of the same site, weekday and bin over the `history_weeks` weeks
/// before each target date in `from..=to`, skipping missing history.
pub fn prior_mean_baseline(
    frame: &CountFrame,
    from: NaiveDate,
    to: NaiveDate,
    history_weeks: usize,
) -> Result<Predictions> {
    if history_weeks == 0 {
        return Err(invalid("history must span at least one week"));
    }
    if to < from {
        return Err(invalid(format!("empty target range {from}..{to}")));
    }
    let dates = frame.dates();
    if !dates.range(from..=to).any(|_| true) {
        return Err(invalid(format!("target range {from}..{to} lies outside the data")));
    }
    if dates.range(..from).next().is_none() {
        return Err(invalid(format!("no history before {from}")));
    }
    let mut out = Predictions::new();
    for r in frame.rows().iter().filter(|r| (from..=to).contains(&r.date)) {
        let history: Vec<f64> = (1..=history_weeks as i64)
            .filter_map(|k| frame.get(r.date - Duration::days(7 * k), r.bin, r.site))
            .filter_map(|h| h.count)
            .collect();
        let mean = (!history.is_empty()).then(|| history.iter().sum::<f64>() / history.len() as f64);
        out.insert(r.key(), mean);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub date: NaiveDate,
    pub bin: TimeBin,
    pub site: usize,
    pub actual: Option<f64>,
    pub pred: Option<f64>,
    pub mean: Option<f64>,
    pub mean_pe: Option<f64>,
    pub pred_pe: Option<f64>,
}

/// Observed against model and baseline predictions. The aggregates average
/// over rows where both percentage errors exist, so the two are scored on
/// the same cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub mean_mpe: Option<f64>,
    pub pred_mpe: Option<f64>,
}

const HEADER: [&str; 8] = ["Date", "TimeBin", "ID", "ActualY", "pred", "mean", "meanPE", "predPE"];
const OVERALL: &str = "overall";

/// Rows are the frame rows covered by both prediction sets; a key present in
/// one set but not the other is an error.
pub fn compare(model: &Predictions, baseline: &Predictions, frame: &CountFrame) -> Result<Comparison> {
    let mut rows = Vec::new();
    for r in frame.rows() {
        let key = r.key();
        let (pred, mean) = match (model.get(&key), baseline.get(&key)) {
            (Some(p), Some(m)) => (p, m),
            (None, None) => continue,
            _ => {
                return Err(invalid(format!(
                    "predictions disagree on {} {} site {}",
                    r.date, r.bin, r.site
                )))
            }
        };
        rows.push(ComparisonRow {
            date: r.date,
            bin: r.bin,
            site: r.site,
            actual: r.count,
            pred,
            mean,
            mean_pe: percentage_error(r.count, mean),
            pred_pe: percentage_error(r.count, pred),
        });
    }
    if rows.is_empty() {
        return Err(invalid("no frame rows carry both predictions"));
    }
    let both: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.mean_pe?, r.pred_pe?))).collect();
    let avg = |f: fn(&(f64, f64)) -> f64| (!both.is_empty()).then(|| both.iter().map(f).sum::<f64>() / both.len() as f64);
    Ok(Comparison {
        mean_mpe: avg(|p| p.0),
        pred_mpe: avg(|p| p.1),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Comparison {
    /// One line per key, then an `overall` line carrying the aggregates.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.date.to_string(),
                r.bin.label(),
                r.site.to_string(),
                opt(r.actual),
                opt(r.pred),
                opt(r.mean),
                opt(r.mean_pe),
                opt(r.pred_pe),
            ])?;
        }
        let blank = String::new;
        w.write_record([
            OVERALL.to_string(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            opt(self.mean_mpe),
            opt(self.pred_mpe),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        if rdr.headers()?.iter().ne(HEADER) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {}", HEADER.join(",")),
            });
        }
        let mut out = Comparison {
            rows: Vec::new(),
            mean_mpe: None,
            pred_mpe: None,
        };
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let fail = |message: String| Error::Parse { line: k + 2, message };
            let num = |s: &str| -> Result<Option<f64>> {
                match s {
                    "" => Ok(None),
                    s => s.parse().map(Some).map_err(|_| fail(format!("bad number {s:?}"))),
                }
            };
            if &rec[0] == OVERALL {
                out.mean_mpe = num(&rec[6])?;
                out.pred_mpe = num(&rec[7])?;
                continue;
            }
            out.rows.push(ComparisonRow {
                date: parse_date(&rec[0]).map_err(|e| fail(e.to_string()))?,
                bin: rec[1].parse().map_err(|e: Error| fail(e.to_string()))?,
                site: rec[2].parse().map_err(|_| fail(format!("bad ID {:?}", &rec[2])))?,
                actual: num(&rec[3])?,
                pred: num(&rec[4])?,
                mean: num(&rec[5])?,
                mean_pe: num(&rec[6])?,
                pred_pe: num(&rec[7])?,
            });
        }
        Ok(out)
    }
}
