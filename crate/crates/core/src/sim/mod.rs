//! Synthetic road networks and counts drawn from the model's own generative
//! process, with optional missingness and detector-fault patterns.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{invalid, Result};
use crate::gmrf::{build_icar_structure, build_seasonal_structure, GmrfSampler, PrecisionStructure, SiteGraph};
use crate::ingest::{CountFrame, CountRow, TimeBin};

/// Largest count ever emitted.
pub const COUNT_CAP: f64 = 1e6;

/// Generating precision of each random block; `f64::INFINITY` switches a
/// block off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockPrecisions {
    pub spatial_structured: f64,
    pub spatial_iid: f64,
    pub seasonal: f64,
    pub temporal_iid: f64,
    pub interaction: f64,
}

impl BlockPrecisions {
    pub fn all_off() -> Self {
        Self {
            spatial_structured: f64::INFINITY,
            spatial_iid: f64::INFINITY,
            seasonal: f64::INFINITY,
            temporal_iid: f64::INFINITY,
            interaction: f64::INFINITY,
        }
    }

    /// In model hyperparameter order.
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.spatial_structured,
            self.spatial_iid,
            self.seasonal,
            self.temporal_iid,
            self.interaction,
        ]
    }
}

impl Default for BlockPrecisions {
    fn default() -> Self {
        Self {
            spatial_structured: 1.0,
            spatial_iid: 10.0,
            seasonal: 25.0,
            temporal_iid: 50.0,
            interaction: 50.0,
        }
    }
}

/// Recorded count scaled down at one cell, as by a stuck detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StuckLow {
    pub site: usize,
    pub day: usize,
    pub bin: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_sites: usize,
    pub n_days: usize,
    pub period: usize,
    pub precisions: BlockPrecisions,
    pub intercept: f64,
    /// Probability that a cell's count is missing.
    pub missing_rate: f64,
    /// Site whose every second bin records half its count.
    pub zigzag_site: Option<usize>,
    pub stuck_low: Option<StuckLow>,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Skip Saturdays and Sundays when laying out days.
    pub weekdays_only: bool,
    pub first_hour: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_sites: 10,
            n_days: 14,
            period: 12,
            precisions: BlockPrecisions::default(),
            intercept: 5.0,
            missing_rate: 0.0,
            zigzag_site: None,
            stuck_low: None,
            seed: 1,
            start_date: NaiveDate::from_ymd_opt(2018, 1, 15).expect("valid date"),
            weekdays_only: false,
            first_hour: 7,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 || self.n_days == 0 || self.period < 2 {
            return Err(invalid("need at least 2 sites, 1 day and a period of 2"));
        }
        if self.first_hour as usize * 60 + self.period * 60 > 24 * 60 {
            return Err(invalid("hourly bins overrun the day"));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(invalid("missing rate must lie in [0, 1]"));
        }
        if self.precisions.as_array().iter().any(|t| !(*t > 0.0)) {
            return Err(invalid("generating precisions must be positive"));
        }
        if !self.intercept.is_finite() {
            return Err(invalid("intercept must be finite"));
        }
        if self.zigzag_site.is_some_and(|s| s == 0 || s > self.n_sites) {
            return Err(invalid("zig-zag site out of range"));
        }
        if let Some(f) = self.stuck_low {
            if f.site == 0 || f.site > self.n_sites || f.day >= self.n_days || f.bin >= self.period {
                return Err(invalid("stuck-low cell out of range"));
            }
            if !(0.0..1.0).contains(&f.factor) {
                return Err(invalid("stuck-low factor must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Calendar dates of the simulated days.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.n_days);
        let mut d = self.start_date;
        while out.len() < self.n_days {
            if !(self.weekdays_only && matches!(d.weekday(), Weekday::Sat | Weekday::Sun)) {
                out.push(d);
            }
            d = d.succ_opt().expect("date in range");
        }
        out
    }

    pub fn bins(&self) -> Vec<TimeBin> {
        (0..self.period)
            .map(|k| TimeBin::new((self.first_hour + k as u32) * 60, 60).expect("validated bins"))
            .collect()
    }
}

/// Latent truth behind a simulated frame. Per-cell vectors follow the
/// site-major order `(site - 1) * n_times + day * period + bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub spatial_structured: Vec<f64>,
    pub spatial_iid: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub temporal_iid: Vec<f64>,
    pub interaction: Vec<f64>,
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Poisson draws before faults and masking.
    pub counts: Vec<f64>,
    pub n_times: usize,
    pub period: usize,
}

impl GroundTruth {
    pub fn cell(&self, site: usize, day: usize, bin: usize) -> usize {
        (site - 1) * self.n_times + day * self.period + bin
    }
}

/// A chain `1 - 2 - ... - n` plus about `n / 4` chords spanning two to four
/// positions.
pub fn sample_graph(n_sites: usize, seed: u64) -> Result<SiteGraph> {
    if n_sites < 2 {
        return Err(invalid("a graph needs at least two sites"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..n_sites).map(|i| (i, i + 1)).collect();
    let wanted = n_sites / 4;
    let mut attempts = 0;
    while edges.len() < n_sites - 1 + wanted && attempts < 100 * (wanted + 1) {
        attempts += 1;
        let span = rng.random_range(2..=4);
        if span >= n_sites {
            continue;
        }
        let a = rng.random_range(1..=n_sites - span);
        let e = (a, a + span);
        if !edges.contains(&e) {
            edges.push(e);
        }
    }
    SiteGraph::new(n_sites, &edges)
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn iid_block(rng: &mut ChaCha8Rng, n: usize, tau: f64) -> Vec<f64> {
    let z = standard_normals(rng, n);
    if tau.is_infinite() {
        return vec![0.0; n];
    }
    z.iter().map(|v| v / tau.sqrt()).collect()
}

/// Draw from the intrinsic GMRF `tau * R` restricted to its constraints.
fn intrinsic_block(rng: &mut ChaCha8Rng, s: &PrecisionStructure, tau: f64) -> Result<Vec<f64>> {
    let z = standard_normals(rng, s.dim());
    if tau.is_infinite() {
        return Ok(vec![0.0; s.dim()]);
    }
    let scaled = PrecisionStructure::new(s.entries().scaled(tau), s.rank_deficiency(), s.constraints().to_vec())?;
    Ok(GmrfSampler::new(&scaled)?.sample(&z))
}

/// Draws every latent block, forms `eta` and the Poisson counts, then applies
/// faults and the missing mask.
pub fn sample_counts(cfg: &SimConfig, graph: &SiteGraph) -> Result<(CountFrame, GroundTruth)> {
    cfg.validate()?;
    if graph.n_sites() != cfg.n_sites {
        return Err(invalid(format!("graph has {} sites, config {}", graph.n_sites(), cfg.n_sites)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, p) = (cfg.n_sites, cfg.period);
    let n_times = cfg.n_days * p;
    let tau = cfg.precisions;

    let spatial_structured = intrinsic_block(&mut rng, &build_icar_structure(graph)?, tau.spatial_structured)?;
    let spatial_iid = iid_block(&mut rng, n, tau.spatial_iid);
    let seasonal = intrinsic_block(&mut rng, &build_seasonal_structure(n_times, p)?, tau.seasonal)?;
    let temporal_iid = iid_block(&mut rng, n_times, tau.temporal_iid);
    let interaction = iid_block(&mut rng, n * n_times, tau.interaction);

    let mut eta = Vec::with_capacity(n * n_times);
    for s in 0..n {
        for t in 0..n_times {
            eta.push(
                cfg.intercept
                    + spatial_structured[s]
                    + spatial_iid[s]
                    + seasonal[t]
                    + temporal_iid[t]
                    + interaction[s * n_times + t],
            );
        }
    }
    let lambda: Vec<f64> = eta.iter().map(|e| e.exp().min(COUNT_CAP)).collect();
    let counts = lambda
        .iter()
        .map(|&l| {
            let dist = Poisson::new(l).map_err(|e| invalid(format!("Poisson rate {l}: {e}")))?;
            let y: f64 = dist.sample(&mut rng);
            Ok(y.min(COUNT_CAP))
        })
        .collect::<Result<Vec<f64>>>()?;

    let dates = cfg.dates();
    let bins = cfg.bins();
    let mut rows = Vec::with_capacity(n * n_times);
    for s in 1..=n {
        for (day, &date) in dates.iter().enumerate() {
            for (b, &bin) in bins.iter().enumerate() {
                let cell = (s - 1) * n_times + day * p + b;
                let mut y = counts[cell];
                if cfg.zigzag_site == Some(s) && b % 2 == 1 {
                    y = (0.5 * y).round();
                }
                if let Some(f) = cfg.stuck_low {
                    if (f.site, f.day, f.bin) == (s, day, b) {
                        y = (f.factor * y).round();
                    }
                }
                let missing = rng.random::<f64>() < cfg.missing_rate;
                rows.push(CountRow {
                    date,
                    bin,
                    site: s,
                    count: (!missing).then_some(y),
                    covariates: vec![],
                });
            }
        }
    }
    let frame = CountFrame::from_rows(rows, vec![])?;
    let truth = GroundTruth {
        spatial_structured,
        spatial_iid,
        seasonal,
        temporal_iid,
        interaction,
        eta,
        lambda,
        counts,
        n_times,
        period: p,
    };
    Ok((frame, truth))
}
