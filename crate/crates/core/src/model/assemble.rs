//! Builds the latent Gaussian problem of the spatio-temporal count model
//! `eta = beta0 + x'beta + mu_s + upsilon_s + gamma_t + phi_t + delta_st`
//! from a count table and a site graph.

use std::collections::BTreeSet;

use chrono::NaiveDate;

use super::layout::{BlockKind, LatentLayout};
use super::spec::{Family, HyperPrior, ModelSpec};
use crate::error::{invalid, Result};
use crate::gmrf::{
    build_icar_structure, build_iid_structure, build_seasonal_structure, kronecker, PrecisionStructure, SiteGraph,
    SparseSym,
};
use crate::ingest::{CountFrame, TimeBin};
use crate::laplace::{log_gamma_hyperprior, HyperModel, LatentGaussianProblem, Likelihood, PredictorRow};

/// Position of one cell of the site x day x bin grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObservationKey {
    /// 1-based sequential site ID.
    pub site_id: usize,
    /// 0-based index into the distinct dates of the data.
    pub day_index: usize,
    /// 0-based bin within the day, below the period.
    pub time_bin: usize,
}

/// Calendar meaning of day and bin indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeAxis {
    pub dates: Vec<NaiveDate>,
    pub bins: Vec<TimeBin>,
}

impl TimeAxis {
    /// Distinct dates of the frame, and `period` equal-width bins starting at
    /// the earliest bin present.
    pub fn from_frame(frame: &CountFrame, period: usize) -> Result<Self> {
        let dates: Vec<NaiveDate> = frame.dates().into_iter().collect();
        let present: BTreeSet<TimeBin> = frame.bins();
        let first = *present.iter().next().ok_or_else(|| invalid("count table is empty"))?;
        let width = first.width_min;
        let bins = (0..period)
            .map(|k| TimeBin::new(first.start_min + k as u32 * width, width))
            .collect::<Result<Vec<_>>>()
            .map_err(|_| invalid(format!("{period} bins of {width} minutes from {first} overrun the day")))?;
        if let Some(b) = present.iter().find(|b| !bins.contains(b)) {
            return Err(invalid(format!("time bin {b} does not fit {period} bins of {width} minutes from {first}")));
        }
        Ok(Self { dates, bins })
    }

    pub fn n_times(&self) -> usize {
        self.dates.len() * self.bins.len()
    }

    pub fn period(&self) -> usize {
        self.bins.len()
    }

    pub fn time_index(&self, key: &ObservationKey) -> usize {
        key.day_index * self.bins.len() + key.time_bin
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn bin_index(&self, bin: TimeBin) -> Option<usize> {
        self.bins.iter().position(|b| *b == bin)
    }
}

/// One modelled grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: ObservationKey,
    pub observed: Option<f64>,
    pub covariates: Vec<f64>,
}

/// The assembled model: a [`HyperModel`] over log block precisions (and
/// log noise precision for the Gaussian family).
#[derive(Debug, Clone)]
pub struct StModel {
    spec: ModelSpec,
    layout: LatentLayout,
    axis: TimeAxis,
    cells: Vec<Cell>,
    rows: Vec<PredictorRow>,
    /// Unit-precision structure of every block, in layout order.
    structures: Vec<(BlockKind, PrecisionStructure)>,
    initial_latent: Vec<f64>,
}

/// Lays out the latent field, builds every grid cell's predictor row and the
/// per-block structures. Cells absent from `data` enter with a missing count
/// when the model has no covariates; with covariates only rows of `data` are
/// modelled.
pub fn assemble(spec: &ModelSpec, data: &CountFrame, graph: &SiteGraph) -> Result<StModel> {
    spec.validate()?;
    let names = data.covariate_names();
    let columns = spec
        .fixed_effects
        .iter()
        .map(|c| names.iter().position(|n| n == c).ok_or_else(|| invalid(format!("no covariate column {c:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let n_sites = graph.n_sites();
    if let Some(r) = data.rows().iter().find(|r| r.site > n_sites) {
        return Err(invalid(format!("site {} is not in the {n_sites}-site graph", r.site)));
    }
    let axis = TimeAxis::from_frame(data, spec.period)?;
    let layout = LatentLayout::new(spec, n_sites, axis.n_times());

    let mut cells = Vec::new();
    if columns.is_empty() {
        for site_id in 1..=n_sites {
            for (day_index, &date) in axis.dates.iter().enumerate() {
                for (time_bin, &bin) in axis.bins.iter().enumerate() {
                    cells.push(Cell {
                        key: ObservationKey {
                            site_id,
                            day_index,
                            time_bin,
                        },
                        observed: data.get(date, bin, site_id).and_then(|r| r.count),
                        covariates: vec![],
                    });
                }
            }
        }
    } else {
        for r in data.rows() {
            cells.push(Cell {
                key: ObservationKey {
                    site_id: r.site,
                    day_index: axis.day_index(r.date).expect("date on axis"),
                    time_bin: axis.bin_index(r.bin).expect("bin on axis"),
                },
                observed: r.count,
                covariates: columns.iter().map(|&c| r.covariates[c]).collect(),
            });
        }
        cells.sort_by_key(|c| c.key);
    }
    if spec.family == Family::Poisson {
        if let Some(c) = cells.iter().find(|c| c.observed.is_some_and(|y| y.fract() != 0.0)) {
            return Err(invalid(format!("Poisson count {} is not an integer", c.observed.unwrap_or(0.0))));
        }
    }

    let rows = cells.iter().map(|c| predictor_row(&layout, &axis, c)).collect();
    let mut structures = Vec::new();
    for b in layout.blocks() {
        let s = match b.kind {
            BlockKind::Intercept | BlockKind::FixedEffects | BlockKind::SpatialIid | BlockKind::TemporalIid => {
                build_iid_structure(b.len)?
            }
            BlockKind::SpatialStructured => build_icar_structure(graph)?,
            BlockKind::TemporalSeasonal => build_seasonal_structure(axis.n_times(), axis.period())?,
            BlockKind::Interaction => {
                kronecker(&build_iid_structure(n_sites)?, &build_iid_structure(axis.n_times())?)?
            }
        };
        structures.push((b.kind, s));
    }

    let observed: Vec<f64> = cells.iter().filter_map(|c| c.observed).collect();
    let mut initial_latent = vec![0.0; layout.dim()];
    if let (Some(b), false) = (layout.block(BlockKind::Intercept), observed.is_empty()) {
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        initial_latent[b.offset] = match spec.family {
            Family::Poisson => mean.max(0.5).ln(),
            Family::Gaussian => mean,
        };
    }
    Ok(StModel {
        spec: spec.clone(),
        layout,
        axis,
        cells,
        rows,
        structures,
        initial_latent,
    })
}

fn predictor_row(layout: &LatentLayout, axis: &TimeAxis, cell: &Cell) -> PredictorRow {
    let site = cell.key.site_id;
    let t = axis.time_index(&cell.key);
    let mut terms = Vec::with_capacity(6 + cell.covariates.len());
    if let Some(b) = layout.block(BlockKind::Intercept) {
        terms.push((b.offset, 1.0));
    }
    if let Some(b) = layout.block(BlockKind::FixedEffects) {
        terms.extend(cell.covariates.iter().enumerate().map(|(k, &v)| (b.offset + k, v)));
    }
    for kind in [BlockKind::SpatialStructured, BlockKind::SpatialIid] {
        terms.extend(layout.site_index(kind, site).map(|i| (i, 1.0)));
    }
    for kind in [BlockKind::TemporalSeasonal, BlockKind::TemporalIid] {
        terms.extend(layout.time_index(kind, t).map(|i| (i, 1.0)));
    }
    terms.extend(layout.interaction_index(site, t).map(|i| (i, 1.0)));
    PredictorRow { terms, offset: 0.0 }
}

impl StModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn axis(&self) -> &TimeAxis {
        &self.axis
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn predictor_rows(&self) -> &[PredictorRow] {
        &self.rows
    }

    /// Unit-precision structure of a block.
    pub fn structure(&self, kind: BlockKind) -> Option<&PrecisionStructure> {
        self.structures.iter().find(|(k, _)| *k == kind).map(|(_, s)| s)
    }

    /// `log_tau_<block>` per random block, then `log_noise_precision` for the
    /// Gaussian family.
    pub fn hyper_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.layout.random_blocks().map(|b| format!("log_tau_{}", b.kind)).collect();
        if self.spec.family == Family::Gaussian {
            names.push("log_noise_precision".into());
        }
        names
    }

    /// Spreads the empirical variance of the observations (log scale for
    /// Poisson, net of sampling noise) evenly over the variance components.
    pub fn initial_psi(&self) -> Vec<f64> {
        let n = self.n_hyper();
        let observed: Vec<f64> = self.cells.iter().filter_map(|c| c.observed).collect();
        if n == 0 || observed.len() < 2 {
            return vec![0.0; n];
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let total = match self.spec.family {
            Family::Poisson => {
                let logs: Vec<f64> = observed.iter().map(|y| (y + 0.5).ln()).collect();
                let noise = observed.iter().map(|y| 1.0 / (y + 0.5)).sum::<f64>() / observed.len() as f64;
                (var(&logs) - noise).max(0.01)
            }
            Family::Gaussian => var(&observed).max(1e-6),
        };
        vec![(n as f64 / total).ln(); n]
    }

    fn n_random(&self) -> usize {
        self.layout.random_blocks().count()
    }

    fn block_precision(&self, kind: BlockKind, psi: &[f64]) -> f64 {
        if !kind.is_random() {
            return self.spec.fixed_precision;
        }
        let k = self
            .layout
            .random_blocks()
            .position(|b| b.kind == kind)
            .expect("random block in layout");
        psi[k].exp()
    }

    /// Block-diagonal prior precision at `psi`, intrinsic blocks jittered,
    /// with every block constraint embedded in the full latent vector.
    pub fn prior_precision(&self, psi: &[f64]) -> Result<PrecisionStructure> {
        let dim = self.layout.dim();
        let mut parts = Vec::with_capacity(self.structures.len());
        let mut constraints = Vec::new();
        for (b, (kind, s)) in self.layout.blocks().iter().zip(&self.structures) {
            let mut m: SparseSym = s.entries().scaled(self.block_precision(*kind, psi));
            if s.is_intrinsic() {
                m.add_diagonal(self.spec.jitter);
            }
            parts.push(m);
            for c in s.constraints() {
                let mut row = vec![0.0; dim];
                row[b.range()].copy_from_slice(c);
                constraints.push(row);
            }
        }
        let refs: Vec<&SparseSym> = parts.iter().collect();
        // Jitter leaves the assembled matrix full rank.
        PrecisionStructure::new(SparseSym::block_diagonal(&refs), 0, constraints)
    }
}

impl HyperModel for StModel {
    fn n_hyper(&self) -> usize {
        self.n_random() + usize::from(self.spec.family == Family::Gaussian)
    }

    fn problem(&self, psi: &[f64]) -> Result<LatentGaussianProblem> {
        if psi.len() != self.n_hyper() {
            return Err(invalid(format!("expected {} hyperparameters, got {}", self.n_hyper(), psi.len())));
        }
        let likelihood = match self.spec.family {
            Family::Poisson => Likelihood::PoissonLog,
            Family::Gaussian => Likelihood::GaussianIdentity {
                precision: psi[self.n_random()].exp(),
            },
        };
        Ok(LatentGaussianProblem {
            prior_precision: self.prior_precision(psi)?,
            prior_mean: vec![0.0; self.layout.dim()],
            observation_map: self.rows.clone(),
            likelihood,
            observations: self.cells.iter().map(|c| c.observed).collect(),
            initial: Some(self.initial_latent.clone()),
        })
    }

    fn log_hyperprior(&self, psi: &[f64]) -> f64 {
        let HyperPrior { shape, rate } = self.spec.hyperprior;
        psi.iter().map(|&t| log_gamma_hyperprior(t, shape, rate)).sum()
    }
}
