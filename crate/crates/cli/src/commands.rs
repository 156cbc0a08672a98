use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use thiserror::Error;

use stinla::evaluate::{compare, mpe, prior_mean_baseline, MpeReport, Predictions};
use stinla::gmrf::SiteGraph;
use stinla::ingest::{
    aggregate_hourly, clean as clean_raw, missingness_report, parse_date, read_raw, CountFrame, CountRow,
    KeepDetectors, Weekpart,
};
use stinla::model::{Config, FittedTable, ModelSpec};
use stinla::sim::{sample_counts, sample_graph, BlockPrecisions, SimConfig};

use crate::{BaselineArgs, CleanArgs, Common, FitArgs, PredictArgs, ScoreArgs, SimulateArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: stinla::Error,
    },
    #[error(transparent)]
    Core(#[from] stinla::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Input { source: e, .. } | CliError::Core(e) => {
                if e.is_numerical() {
                    4
                } else {
                    3
                }
            }
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn input<T>(path: &Path, r: stinla::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn read_frame(path: &Path) -> CliResult<CountFrame> {
    let text = read_text(path)?;
    input(path, CountFrame::from_csv_str(&text))
}

fn read_fitted(path: &Path) -> CliResult<FittedTable> {
    let text = read_text(path)?;
    input(path, FittedTable::read_csv(text.as_bytes()))
}

fn write_out(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let io = |source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

/// The config file with command-line flags laid over it.
fn load_config(common: &Common, overrides: &[(&str, Option<String>)]) -> CliResult<Config> {
    let mut cfg = match &common.config {
        Some(p) => input(p, Config::parse(&read_text(p)?))?,
        None => Config::default(),
    };
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v.clone());
        }
    }
    Ok(cfg)
}

fn date_key(cfg: &Config, key: &str) -> CliResult<Option<NaiveDate>> {
    cfg.get(key)
        .map(|s| parse_date(s).map_err(|e| CliError::Usage(format!("--{}: {e}", key.replace('_', "-")))))
        .transpose()
}

fn weekpart(cfg: &Config) -> CliResult<Weekpart> {
    Ok(cfg.parse_or("weekpart", Weekpart::All)?)
}

fn frame_csv(frame: &CountFrame) -> CliResult<String> {
    Ok(frame.to_csv_string()?)
}

fn fitted_csv(table: &FittedTable) -> CliResult<String> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn clean(a: &CleanArgs) -> CliResult<()> {
    let cfg = load_config(&a.common, &[("weekpart", a.weekpart.clone())])?;
    let raw = input(&a.data, read_raw(read_text(&a.data)?.as_bytes()))?;
    let keep = match &a.keep {
        Some(p) => input(p, KeepDetectors::parse(&read_text(p)?))?,
        None => {
            let mut all: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
            for r in &raw {
                all.entry(r.site).or_default().insert(r.detector);
            }
            KeepDetectors::new(all)
        }
    };
    let half_hourly = input(&a.data, clean_raw(&raw, &keep))?;
    let (hourly, warnings) = aggregate_hourly(&half_hourly)?;
    let part = weekpart(&cfg)?;
    let hourly = hourly.filter(|r| part.contains(r.date));
    let out = &a.common.out;
    write_out(out, "counts.csv", &frame_csv(&hourly)?)?;
    write_out(out, "id_map.csv", &hourly.id_map_csv())?;
    write_out(out, "missingness.csv", &missingness_report(&hourly).to_csv())?;
    let mut cov = String::from("Date,ID,TimeBin\n");
    for w in &warnings {
        cov.push_str(&format!("{},{},{}\n", w.date, w.site, w.bin));
    }
    write_out(out, "coverage_warnings.csv", &cov)?;
    println!(
        "{} hourly rows, {} missing, {} partial-coverage warnings",
        hourly.len(),
        hourly.n_missing(),
        warnings.len()
    );
    Ok(())
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let cfg = load_config(
        &a.common,
        &[
            ("weekpart", a.weekpart.clone()),
            ("predict_from", a.predict_from.clone()),
            ("predict_to", a.predict_to.clone()),
        ],
    )?;
    let spec = ModelSpec::from_config(&cfg)?;
    let part = weekpart(&cfg)?;
    let data = read_frame(&a.data)?.filter(|r| part.contains(r.date));
    let Some(&last) = data.dates().iter().next_back() else {
        return Err(CliError::Usage(format!("no {part} rows in {}", a.data.display())));
    };
    let graph = input(&a.graph, SiteGraph::parse(&read_text(&a.graph)?))?;
    let to = date_key(&cfg, "predict_to")?.unwrap_or(last);
    let from = date_key(&cfg, "predict_from")?.unwrap_or(to - Duration::days(6));
    if to < from {
        return Err(CliError::Usage(format!("prediction range {from}..{to} is empty")));
    }
    let in_range = |d: NaiveDate| (from..=to).contains(&d);
    let masked = data.masked(|r| in_range(r.date));
    let result = stinla::model::fit(&spec, &masked, &graph)?;
    let table = result.table();
    let out = &a.common.out;
    write_out(out, "fitted.csv", &fitted_csv(&table)?)?;
    write_out(out, "predictions.csv", &fitted_csv(&table.filter(|r| in_range(r.date)))?)?;
    write_out(out, "hyper.csv", &result.hyper_csv())?;
    write_out(out, "config.txt", &cfg.to_text())?;
    println!(
        "fitted {} cells ({} masked) with {} objective evaluations; log evidence {:.3}",
        table.rows.len(),
        table.rows.iter().filter(|r| in_range(r.date)).count(),
        result.evaluations,
        result.log_evidence
    );
    Ok(())
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let cfg = load_config(
        &a.common,
        &[("predict_from", a.predict_from.clone()), ("predict_to", a.predict_to.clone())],
    )?;
    let table = read_fitted(&a.data)?;
    let Some(last) = table.rows.iter().map(|r| r.date).max() else {
        return Err(CliError::Usage(format!("{} has no rows", a.data.display())));
    };
    let to = date_key(&cfg, "predict_to")?.unwrap_or(last);
    let from = date_key(&cfg, "predict_from")?.unwrap_or(to - Duration::days(6));
    let picked = table.filter(|r| (from..=to).contains(&r.date));
    write_out(&a.common.out, "predictions.csv", &fitted_csv(&picked)?)?;
    println!("{} predictions from {from} to {to}", picked.rows.len());
    Ok(())
}

/// Observed rows that have a prediction, and the predictions.
fn scored(a: &ScoreArgs) -> CliResult<(CountFrame, Predictions)> {
    let data = read_frame(&a.data)?;
    let preds = Predictions::from_fitted(&read_fitted(&a.predictions)?);
    let scope = data.filter(|r| preds.get(&r.key()).is_some());
    if scope.is_empty() {
        return Err(CliError::Usage(format!(
            "no rows of {} have predictions in {}",
            a.data.display(),
            a.predictions.display()
        )));
    }
    Ok((scope, preds))
}

pub fn evaluate(a: &ScoreArgs) -> CliResult<()> {
    let (scope, preds) = scored(a)?;
    let predicted = preds.align(&scope)?;
    let observed: Vec<Option<f64>> = scope.rows().iter().map(|r| r.count).collect();
    let value = mpe(&observed, &predicted)?;
    let n = observed
        .iter()
        .zip(&predicted)
        .filter(|(y, p)| y.is_some_and(|y| y != 0.0) && p.is_some())
        .count();
    write_out(&a.common.out, "mpe.csv", &format!("Metric,Value\nMPE,{value}\nN,{n}\n"))?;
    println!("MPE {value:.2}% over {n} cells");
    Ok(())
}

pub fn report(a: &ScoreArgs) -> CliResult<()> {
    let (scope, preds) = scored(a)?;
    let report = MpeReport::new(&scope, &preds)?;
    let out = &a.common.out;
    write_out(out, "mpe_by_site.csv", &report.by_site.to_csv())?;
    write_out(out, "mpe_by_day.csv", &report.by_day.to_csv())?;
    write_out(out, "mpe_by_time.csv", &report.by_time.to_csv())?;
    write_out(out, "mpe_by_day_time.csv", &report.by_day_time.to_csv())?;
    for note in report.notes() {
        eprintln!("note: {note}");
    }
    println!("overall MPE {:.2}% over {} cells", report.overall, report.by_site.n);
    Ok(())
}

pub fn baseline(a: &BaselineArgs) -> CliResult<()> {
    let cfg = load_config(
        &a.common,
        &[
            ("predict_from", a.predict_from.clone()),
            ("predict_to", a.predict_to.clone()),
            ("history_weeks", a.history_weeks.map(|h| h.to_string())),
        ],
    )?;
    let data = read_frame(&a.data)?;
    let model = Predictions::from_fitted(&read_fitted(&a.predictions)?);
    let pred_dates: BTreeSet<NaiveDate> = model.iter().map(|(k, _)| k.0).collect();
    let (Some(&first), Some(&last)) = (pred_dates.iter().next(), pred_dates.iter().next_back()) else {
        return Err(CliError::Usage(format!("{} has no rows", a.predictions.display())));
    };
    let from = date_key(&cfg, "predict_from")?.unwrap_or(first);
    let to = date_key(&cfg, "predict_to")?.unwrap_or(last);
    let weeks: usize = cfg.parse_or("history_weeks", 7)?;
    let base = prior_mean_baseline(&data, from, to, weeks)?;
    let rows = base
        .iter()
        .map(|(&(date, bin, site), &count)| CountRow {
            date,
            bin,
            site,
            count,
            covariates: vec![],
        })
        .collect();
    let base_frame = CountFrame::from_rows(rows, vec![])?;
    let target = data.filter(|r| (from..=to).contains(&r.date));
    let cmp = compare(&model, &base, &target)?;
    let mut buf = Vec::new();
    cmp.write_csv(&mut buf)?;
    let out = &a.common.out;
    write_out(out, "baseline.csv", &frame_csv(&base_frame)?)?;
    write_out(out, "comparison.csv", &String::from_utf8(buf).expect("csv output is utf-8"))?;
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}%"));
    println!(
        "baseline MPE {} vs model MPE {} over {} rows",
        pct(cmp.mean_mpe),
        pct(cmp.pred_mpe),
        cmp.rows.len()
    );
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let cfg = load_config(
        &a.common,
        &[
            ("sites", a.sites.map(|v| v.to_string())),
            ("days", a.days.map(|v| v.to_string())),
            ("seed", a.seed.map(|v| v.to_string())),
        ],
    )?;
    let d = SimConfig::default();
    let p = BlockPrecisions::default();
    let sim = SimConfig {
        n_sites: cfg.parse_or("sites", d.n_sites)?,
        n_days: cfg.parse_or("days", d.n_days)?,
        period: cfg.parse_or("period", d.period)?,
        precisions: BlockPrecisions {
            spatial_structured: cfg.parse_or("tau_spatial_structured", p.spatial_structured)?,
            spatial_iid: cfg.parse_or("tau_spatial_iid", p.spatial_iid)?,
            seasonal: cfg.parse_or("tau_seasonal", p.seasonal)?,
            temporal_iid: cfg.parse_or("tau_temporal_iid", p.temporal_iid)?,
            interaction: cfg.parse_or("tau_interaction", p.interaction)?,
        },
        intercept: cfg.parse_or("intercept_level", d.intercept)?,
        missing_rate: cfg.parse_or("missing_rate", d.missing_rate)?,
        zigzag_site: cfg.get("zigzag_site").map(|_| cfg.parse_or("zigzag_site", 0)).transpose()?,
        stuck_low: None,
        seed: cfg.parse_or("seed", d.seed)?,
        start_date: date_key(&cfg, "start_date")?.unwrap_or(d.start_date),
        weekdays_only: cfg.flag_or("weekdays_only", d.weekdays_only)?,
        first_hour: cfg.parse_or("first_hour", d.first_hour)?,
    };
    let graph = sample_graph(sim.n_sites, sim.seed)?;
    let (frame, truth) = sample_counts(&sim, &graph)?;
    let mut truth_csv = String::from("Date,TimeBin,ID,Lambda,Count\n");
    let (dates, bins) = (sim.dates(), sim.bins());
    for site in 1..=sim.n_sites {
        for (day, date) in dates.iter().enumerate() {
            for (b, bin) in bins.iter().enumerate() {
                let c = truth.cell(site, day, b);
                truth_csv.push_str(&format!("{date},{bin},{site},{},{}\n", truth.lambda[c], truth.counts[c]));
            }
        }
    }
    let out = &a.common.out;
    write_out(out, "counts.csv", &frame_csv(&frame)?)?;
    write_out(out, "graph.txt", &graph.to_edge_list())?;
    write_out(out, "truth.csv", &truth_csv)?;
    println!(
        "simulated {} sites x {} days x {} bins ({} missing)",
        sim.n_sites,
        sim.n_days,
        sim.period,
        frame.n_missing()
    );
    Ok(())
}
