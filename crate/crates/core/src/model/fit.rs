//! Empirical-Bayes fit of an assembled model and count-scale summaries.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::assemble::{assemble, ObservationKey, StModel, TimeAxis};
use super::layout::LatentLayout;
use super::spec::{Family, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::gmrf::SiteGraph;
use crate::ingest::{parse_date, CountFrame, TimeBin};
use crate::laplace::{eb_optimize_with, HyperModel, NelderMeadOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub layout: LatentLayout,
    pub axis: TimeAxis,
    pub latent_mean: Vec<f64>,
    pub latent_sd: Vec<f64>,
    pub hyper_names: Vec<String>,
    pub psi_mode: Vec<f64>,
    pub keys: Vec<ObservationKey>,
    pub observed: Vec<Option<f64>>,
    /// Posterior mean and variance of the linear predictor per cell.
    pub eta_mean: Vec<f64>,
    pub eta_var: Vec<f64>,
    /// Posterior mean on the response scale, `exp(eta + var / 2)` for Poisson.
    pub fitted: Vec<f64>,
    /// Posterior sd on the response scale.
    pub fitted_sd: Vec<f64>,
    /// Hyperparameter objective at the mode, without the hyperprior.
    pub log_evidence: f64,
    pub evaluations: usize,
    pub family: Family,
}

/// Optimiser settings used by [`fit`].
pub fn default_search() -> NelderMeadOptions {
    NelderMeadOptions {
        initial_step: 1.0,
        ..NelderMeadOptions::default()
    }
}

pub fn fit(spec: &ModelSpec, data: &CountFrame, graph: &SiteGraph) -> Result<FitResult> {
    let model = assemble(spec, data, graph)?;
    fit_model(&model, &model.initial_psi(), &default_search())
}

pub fn fit_model(model: &StModel, init_psi: &[f64], search: &NelderMeadOptions) -> Result<FitResult> {
    if model.cells().iter().all(|c| c.observed.is_none()) {
        return Err(Error::Degenerate("no observed counts to fit".into()));
    }
    // Flat directions (a variance component heading to zero) can exhaust
    // one search budget; a single restart from the best point finishes them.
    let eb = match eb_optimize_with(model, init_psi, search) {
        Err(Error::OptimizerCap { evaluations, best, .. }) => {
            let mut eb = eb_optimize_with(model, &best, search)?;
            eb.evaluations += evaluations;
            eb
        }
        other => other?,
    };
    let approx = &eb.approx;
    let family = model.spec().family;
    let n = model.cells().len();
    let mut eta_mean = Vec::with_capacity(n);
    let mut eta_var = Vec::with_capacity(n);
    for row in model.predictor_rows() {
        eta_mean.push(row.eval(&approx.mode));
        eta_var.push(
            approx
                .linear_combination_variance(&row.terms)
                .expect("predictor cliques lie on the curvature pattern"),
        );
    }
    let (fitted, fitted_sd) = eta_mean
        .iter()
        .zip(&eta_var)
        .map(|(&m, &v)| match family {
            Family::Poisson => {
                let mean = (m + 0.5 * v).exp();
                (mean, mean * v.exp_m1().sqrt())
            }
            Family::Gaussian => (m, v.sqrt()),
        })
        .unzip();
    Ok(FitResult {
        layout: model.layout().clone(),
        axis: model.axis().clone(),
        latent_mean: approx.mode.clone(),
        latent_sd: approx.marginal_sds.clone(),
        hyper_names: model.hyper_names(),
        log_evidence: eb.log_posterior - model.log_hyperprior(&eb.psi_mode),
        psi_mode: eb.psi_mode,
        keys: model.cells().iter().map(|c| c.key).collect(),
        observed: model.cells().iter().map(|c| c.observed).collect(),
        eta_mean,
        eta_var,
        fitted,
        fitted_sd,
        evaluations: eb.evaluations,
        family,
    })
}

impl FitResult {
    fn index(&self) -> HashMap<ObservationKey, usize> {
        self.keys.iter().enumerate().map(|(i, k)| (*k, i)).collect()
    }

    /// Cell position of `(date, bin, site)`, if modelled.
    pub fn locate(&self, date: NaiveDate, bin: TimeBin, site: usize) -> Option<usize> {
        let key = ObservationKey {
            site_id: site,
            day_index: self.axis.day_index(date)?,
            time_bin: self.axis.bin_index(bin)?,
        };
        self.keys.binary_search(&key).ok()
    }

    pub fn table(&self) -> FittedTable {
        let rows = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, k)| FittedRow {
                date: self.axis.dates[k.day_index],
                bin: self.axis.bins[k.time_bin],
                site: k.site_id,
                observed: self.observed[i],
                fitted: self.fitted[i],
                sd: self.fitted_sd[i],
            })
            .collect();
        FittedTable { rows }
    }

    /// `Name,Value` lines for the hyperparameter mode and the evidence.
    pub fn hyper_csv(&self) -> String {
        let mut out = String::from("Name,Value\n");
        for (n, v) in self.hyper_names.iter().zip(&self.psi_mode) {
            out.push_str(&format!("{n},{v}\n"));
        }
        out.push_str(&format!("log_evidence,{}\n", self.log_evidence));
        out
    }
}

/// Fitted value for each key.
pub fn predict(fit: &FitResult, keys: &[ObservationKey]) -> Result<Vec<f64>> {
    let index = fit.index();
    keys.iter()
        .map(|k| {
            index
                .get(k)
                .map(|&i| fit.fitted[i])
                .ok_or_else(|| invalid(format!("key {k:?} is outside the fitted grid")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedRow {
    pub date: NaiveDate,
    pub bin: TimeBin,
    pub site: usize,
    pub observed: Option<f64>,
    pub fitted: f64,
    pub sd: f64,
}

/// CSV export of fitted cells: `Date, TimeBin, ID, Observed, Fitted, Sd`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FittedTable {
    pub rows: Vec<FittedRow>,
}

impl FittedTable {
    pub fn filter(&self, keep: impl Fn(&FittedRow) -> bool) -> Self {
        Self {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["Date", "TimeBin", "ID", "Observed", "Fitted", "Sd"])?;
        for r in &self.rows {
            w.write_record([
                r.date.to_string(),
                r.bin.label(),
                r.site.to_string(),
                r.observed.map(|v| v.to_string()).unwrap_or_default(),
                r.fitted.to_string(),
                r.sd.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let expected = ["Date", "TimeBin", "ID", "Observed", "Fitted", "Sd"];
        if rdr.headers()?.iter().ne(expected) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {}", expected.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let fail = |message: String| Error::Parse { line: k + 2, message };
            let num = |s: &str| s.parse::<f64>().map_err(|_| fail(format!("bad number {s:?}")));
            rows.push(FittedRow {
                date: parse_date(&rec[0]).map_err(|e| fail(e.to_string()))?,
                bin: rec[1].parse().map_err(|e: Error| fail(e.to_string()))?,
                site: rec[2].parse().map_err(|_| fail(format!("bad ID {:?}", &rec[2])))?,
                observed: match &rec[3] {
                    "" => None,
                    s => Some(num(s)?),
                },
                fitted: num(&rec[4])?,
                sd: num(&rec[5])?,
            });
        }
        Ok(Self { rows })
    }

    /// The fitted values as a count table.
    pub fn as_prediction_frame(&self) -> Result<CountFrame> {
        let rows = self
            .rows
            .iter()
            .map(|r| crate::ingest::CountRow {
                date: r.date,
                bin: r.bin,
                site: r.site,
                count: Some(r.fitted),
                covariates: vec![],
            })
            .collect();
        CountFrame::from_rows(rows, vec![])
    }
}
