//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::Datelike;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stinla::evaluate::{compare, mpe, prior_mean_baseline, Predictions};
use stinla::gmrf::{
    build_icar_structure, build_iid_structure, build_rw_structure, kronecker, numeric_rank, PrecisionStructure,
    SiteGraph, SparseSym,
};
use stinla::ingest::{CountFrame, CountRow};
use stinla::laplace::{
    eb_optimize, gamma_laplace, gaussian_approximation, laplace_interval_integral, scalar_laplace, FnHyperModel,
    HyperModel, LatentGaussianProblem, Likelihood, PredictorRow, ScalarTarget,
};
use stinla::model::{fit, ModelSpec};
use stinla::sim::{sample_counts, sample_graph, SimConfig, StuckLow};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(name: &str, budget: Duration, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
        .unwrap_or_else(|_| outcome(false, "panicked"));
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = result.pass && in_time;
    let timing = if in_time {
        String::new()
    } else {
        format!(" (over the {budget:?} budget)")
    };
    println!(
        "{} {name}: {}; {:.2?}{timing}",
        if pass { "PASS" } else { "FAIL" },
        result.detail,
        took
    );
    pass
}

fn gamma_mode_identity() -> Outcome {
    let mut worst_closed: f64 = 0.0;
    let mut worst_newton: f64 = 0.0;
    for a in [2.0, 3.0, 10.0, 50.0] {
        for b in [0.5, 1.0, 2.0] {
            let (mode, var) = ((a - 1.0) / b, (a - 1.0) / (b * b));
            let closed = match gamma_laplace(a, b) {
                Ok(f) => f,
                Err(e) => return outcome(false, format!("Gamma({a}, {b}): {e}")),
            };
            worst_closed = worst_closed.max((closed.mode - mode).abs()).max((closed.variance - var).abs());
            let target = ScalarTarget::gamma(a, b).expect("valid gamma");
            let newton = match scalar_laplace(&target, a / b) {
                Ok(f) => f,
                Err(e) => return outcome(false, format!("Gamma({a}, {b}) Newton: {e}")),
            };
            worst_newton = worst_newton.max((newton.mode - mode).abs()).max((newton.variance - var).abs());
        }
    }
    outcome(
        worst_closed <= 1e-12 && worst_newton <= 1e-8,
        format!("closed-form error {worst_closed:.1e} (tol 1e-12), Newton error {worst_newton:.1e} (tol 1e-8)"),
    )
}

/// Adaptive Simpson on `[a, b]`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (f(a) + 4.0 * fm + f(b)), fm)
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (left, _) = simpson(f, a, m);
        let (right, _) = simpson(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, left, tol / 2.0, depth - 1) + rec(f, m, b, right, tol / 2.0, depth - 1)
    }
    let (whole, _) = simpson(f, a, b);
    rec(f, a, b, whole, tol, 50)
}

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf((x - mean) / (sd * std::f64::consts::SQRT_2)))
}

fn interval_integral() -> Outcome {
    let gamma = ScalarTarget::gamma(10.0, 2.0).expect("valid gamma");
    let total = match laplace_interval_integral(&gamma, 0.0, f64::INFINITY) {
        Ok(v) => v,
        Err(e) => return outcome(false, e.to_string()),
    };
    let part = laplace_interval_integral(&gamma, 3.0, 6.0).expect("finite interval");
    let density = |x: f64| gamma.log_density(x).exp();
    let oracle = adaptive_simpson(&density, 3.0, 6.0, 1e-12);
    let total_err = (total - 1.0).abs();
    let part_err = (part - oracle).abs() / oracle;

    let mut gauss_err: f64 = 0.0;
    for (mean, var, a, b) in [
        (0.0, 1.0, -1.0, 1.0),
        (3.0, 4.0, 2.0, 7.5),
        (-2.0, 0.25, f64::NEG_INFINITY, -1.8),
        (10.0, 9.0, 4.0, f64::INFINITY),
    ] {
        let t = ScalarTarget::gaussian(mean, var).expect("valid gaussian");
        let got = laplace_interval_integral(&t, a, b).expect("gaussian interval");
        let sd: f64 = f64::sqrt(var);
        let cdf = |x: f64| {
            if x.is_infinite() {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                normal_cdf(x, mean, sd)
            }
        };
        gauss_err = gauss_err.max((got - (cdf(b) - cdf(a))).abs());
    }
    outcome(
        total_err <= 0.03 && part_err <= 0.05 && gauss_err <= 1e-6,
        format!(
            "Gamma(10,2) total {total:.4} (|err| {:.2}%, tol 3%), [3,6] rel err {:.2}% (tol 5%), Gaussian err {gauss_err:.1e} (tol 1e-6)",
            100.0 * total_err,
            100.0 * part_err
        ),
    )
}

/// Dense posterior mean and covariance of a Gaussian-likelihood problem,
/// conditioned on the prior's constraints.
fn dense_posterior(p: &LatentGaussianProblem, kappa: f64) -> (DVector<f64>, DMatrix<f64>) {
    let n = p.dim();
    let q = p.prior_precision.to_dense();
    let mut prec = q.clone();
    let mut rhs = &q * DVector::from_column_slice(&p.prior_mean);
    for (row, y) in p.observation_map.iter().zip(&p.observations) {
        let Some(y) = y else { continue };
        let mut b = DVector::zeros(n);
        for &(j, w) in &row.terms {
            b[j] += w;
        }
        prec += kappa * &b * b.transpose();
        rhs += kappa * (y - row.offset) * &b;
    }
    let cov = prec.try_inverse().expect("posterior precision invertible");
    let mut mean = &cov * rhs;
    let mut cov = cov;
    let cons = p.prior_precision.constraints();
    if !cons.is_empty() {
        let a = DMatrix::from_fn(cons.len(), n, |r, c| cons[r][c]);
        let sa = &cov * a.transpose();
        let s = (&a * &sa).try_inverse().expect("constraints identifiable");
        mean -= &sa * (&s * (&a * &mean));
        cov -= &sa * &s * sa.transpose();
    }
    (mean, cov)
}

fn random_gaussian_problem(rng: &mut ChaCha8Rng, n: usize, constrained: bool) -> (LatentGaussianProblem, f64) {
    let mut triplets = Vec::new();
    let mut diag = vec![0.0; n];
    for i in 1..n {
        for j in 0..i {
            if rng.random::<f64>() < 0.1 {
                let w = rng.random_range(0.2..1.5);
                triplets.push((i, j, -w));
                diag[i] += w;
                diag[j] += w;
            }
        }
    }
    // Graph Laplacian; a positive ridge unless the problem carries a
    // sum-to-zero constraint.
    for (i, d) in diag.iter().enumerate() {
        let ridge = if constrained { 1e-6 } else { rng.random_range(0.1..2.0) };
        triplets.push((i, i, d + ridge));
    }
    for i in 1..n {
        triplets.push((i, i - 1, -0.3));
        triplets.push((i, i, 0.3));
        triplets.push((i - 1, i - 1, 0.3));
    }
    let q = SparseSym::from_triplets(n, &triplets).expect("valid triplets");
    let constraints = if constrained { vec![vec![1.0; n]] } else { vec![] };
    let prior_precision = PrecisionStructure::new(q, 0, constraints).expect("valid structure");
    let prior_mean = if constrained {
        vec![0.0; n]
    } else {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let mut observation_map = Vec::new();
    let mut observations = Vec::new();
    for i in 0..n {
        let mut terms = vec![(i, 1.0)];
        if rng.random::<f64>() < 0.3 {
            terms.push(((i + 7) % n, rng.random_range(-1.0..1.0)));
        }
        observation_map.push(PredictorRow {
            terms,
            offset: rng.random_range(-0.5..0.5),
        });
        observations.push((rng.random::<f64>() > 0.2).then(|| rng.random_range(-3.0..3.0)));
    }
    let kappa = rng.random_range(0.5..5.0);
    (
        LatentGaussianProblem {
            prior_precision,
            prior_mean,
            observation_map,
            likelihood: Likelihood::GaussianIdentity { precision: kappa },
            observations,
            initial: None,
        },
        kappa,
    )
}

fn gaussian_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let (mut mean_err, mut sd_err): (f64, f64) = (0.0, 0.0);
    for k in 0..20 {
        let (p, kappa) = random_gaussian_problem(&mut rng, 30, k % 2 == 1);
        let approx = match gaussian_approximation(&p) {
            Ok(a) => a,
            Err(e) => return outcome(false, format!("problem {k}: {e}")),
        };
        let (mean, cov) = dense_posterior(&p, kappa);
        for i in 0..30 {
            mean_err = mean_err.max((approx.mode[i] - mean[i]).abs());
            sd_err = sd_err.max((approx.marginal_sds[i] - cov[(i, i)].max(0.0).sqrt()).abs());
        }
    }
    outcome(
        mean_err <= 1e-8 && sd_err <= 1e-8,
        format!("20 problems of 30 nodes: max mean error {mean_err:.1e}, max sd error {sd_err:.1e} (tol 1e-8)"),
    )
}

/// Poisson problems with one or two latent nodes; `psi` is the log prior
/// precision.
fn poisson_corpus() -> Vec<impl HyperModel> {
    let designs: Vec<(usize, Vec<(Vec<(usize, f64)>, f64, f64)>)> = vec![
        (1, vec![(vec![(0, 1.0)], 0.0, 12.0)]),
        (1, vec![(vec![(0, 1.0)], 0.0, 25.0), (vec![(0, 1.0)], 0.0, 31.0)]),
        (1, vec![(vec![(0, 1.0)], 1.0, 40.0), (vec![(0, 1.0)], 0.0, 9.0), (vec![(0, 1.0)], 0.5, 20.0)]),
        (1, vec![(vec![(0, 1.0)], 0.0, 60.0); 4]),
        (1, vec![(vec![(0, 1.0)], -1.0, 3.0), (vec![(0, 1.0)], 0.0, 14.0)]),
        (2, vec![(vec![(0, 1.0)], 0.0, 15.0), (vec![(1, 1.0)], 0.0, 30.0)]),
        (2, vec![(vec![(0, 1.0)], 0.0, 8.0), (vec![(1, 1.0)], 0.0, 22.0), (vec![(0, 1.0), (1, 1.0)], -2.0, 18.0)]),
        (2, vec![(vec![(0, 1.0)], 0.0, 45.0), (vec![(0, 1.0)], 0.0, 50.0), (vec![(1, 1.0)], 0.0, 20.0)]),
        (2, vec![(vec![(0, 1.0), (1, -1.0)], 2.0, 35.0), (vec![(1, 1.0)], 0.0, 11.0)]),
        (2, vec![(vec![(0, 1.0)], 0.5, 16.0), (vec![(1, 1.0)], 0.5, 16.0), (vec![(0, 0.5), (1, 0.5)], 0.0, 10.0)]),
    ];
    designs
        .into_iter()
        .map(|(n, obs)| {
            FnHyperModel::new(
                1,
                move |psi: &[f64]| {
                    let tau = psi[0].exp();
                    let q = if n == 1 {
                        SparseSym::identity(1).scaled(tau)
                    } else {
                        SparseSym::from_triplets(2, &[(0, 0, 1.5 * tau), (1, 0, -0.5 * tau), (1, 1, 1.5 * tau)])?
                    };
                    Ok(LatentGaussianProblem {
                        prior_precision: PrecisionStructure::new(q, 0, vec![])?,
                        prior_mean: vec![2.0; n],
                        observation_map: obs
                            .iter()
                            .map(|(terms, offset, _)| PredictorRow {
                                terms: terms.clone(),
                                offset: *offset,
                            })
                            .collect(),
                        likelihood: Likelihood::PoissonLog,
                        observations: obs.iter().map(|o| Some(o.2)).collect(),
                        initial: None,
                    })
                },
                |psi: &[f64]| stinla::laplace::log_gamma_hyperprior(psi[0], 1.0, 5e-5),
            )
        })
        .collect()
}

/// Posterior mean by the trapezoid rule on a grid spanning the mode plus or
/// minus ten approximate sds.
fn quadrature_mean(p: &LatentGaussianProblem, centre: &[f64], sd: &[f64]) -> Vec<f64> {
    let m = 801;
    let axis = |k: usize| -> Vec<f64> {
        (0..m)
            .map(|i| centre[k] + sd[k] * (-10.0 + 20.0 * i as f64 / (m - 1) as f64))
            .collect()
    };
    let peak = p.log_joint(centre);
    let mut total = 0.0;
    let mut first = vec![0.0; centre.len()];
    let weight = |i: usize| if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
    if centre.len() == 1 {
        for (i, x) in axis(0).into_iter().enumerate() {
            let w = weight(i) * (p.log_joint(&[x]) - peak).exp();
            total += w;
            first[0] += w * x;
        }
    } else {
        let (a0, a1) = (axis(0), axis(1));
        for (i, &x0) in a0.iter().enumerate() {
            for (j, &x1) in a1.iter().enumerate() {
                let w = weight(i) * weight(j) * (p.log_joint(&[x0, x1]) - peak).exp();
                total += w;
                first[0] += w * x0;
                first[1] += w * x1;
            }
        }
    }
    first.iter().map(|v| v / total).collect()
}

fn quadrature_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, model) in poisson_corpus().iter().enumerate() {
        let eb = match eb_optimize(model, &[0.0]) {
            Ok(f) => f,
            Err(e) => return outcome(false, format!("problem {k}: {e}")),
        };
        let problem = model.problem(&eb.psi_mode).expect("problem at mode");
        let oracle = quadrature_mean(&problem, &eb.approx.mode, &eb.approx.marginal_sds);
        for (a, b) in eb.approx.mode.iter().zip(&oracle) {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    outcome(
        worst <= 0.02,
        format!("10 Poisson problems: max relative mean error {:.3}% (tol 2%)", 100.0 * worst),
    )
}

/// One representative per isomorphism class of connected graphs on `n`
/// vertices.
fn connected_graphs(n: usize) -> Vec<SiteGraph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let perms = permutations(n);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for mask in 1u32..(1 << pairs.len()) {
        let edges: Vec<(usize, usize)> = (0..pairs.len())
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| pairs[b])
            .collect();
        let canonical = perms
            .iter()
            .map(|p| {
                let mut e: Vec<(usize, usize)> = edges
                    .iter()
                    .map(|&(a, b)| (p[a].min(p[b]), p[a].max(p[b])))
                    .collect();
                e.sort_unstable();
                e
            })
            .min()
            .expect("at least one permutation");
        if !seen.insert(canonical) {
            continue;
        }
        let one_based: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a + 1, b + 1)).collect();
        let g = SiteGraph::new(n, &one_based).expect("valid graph");
        if g.is_connected() {
            out.push(g);
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn type_iv_rank() -> Outcome {
    let mut checked = 0;
    for n in 2..=6 {
        for g in connected_graphs(n) {
            let icar = build_icar_structure(&g).expect("icar");
            for t in 2..=6 {
                for order in [1, 2] {
                    if t <= order {
                        continue;
                    }
                    let rw = build_rw_structure(t, order).expect("rw");
                    let k = kronecker(&icar, &rw).expect("kronecker");
                    let rank = numeric_rank(&k).expect("rank");
                    let expected = (t - order) * (n - 1);
                    if rank != expected {
                        return outcome(
                            false,
                            format!("n={n}, T={t}, RW{order}: rank {rank}, expected {expected} ({:?})", g.to_edge_list()),
                        );
                    }
                    checked += 1;
                }
            }
        }
    }
    outcome(true, format!("{checked} graph/length/order combinations"))
}

fn type_i_identity() -> Outcome {
    let mut checked = 0;
    for n in 1..=400usize {
        for t in 1..=400 / n {
            let k = kronecker(
                &build_iid_structure(n).expect("iid"),
                &build_iid_structure(t).expect("iid"),
            )
            .expect("kronecker");
            let dim = n * t;
            let entries: Vec<(usize, usize, f64)> = k.entries().iter_lower().filter(|e| e.2 != 0.0).collect();
            let identity = k.dim() == dim
                && entries.len() == dim
                && entries.iter().all(|&(i, j, v)| i == j && v == 1.0)
                && k.rank_deficiency() == 0
                && k.constraints().is_empty();
            if !identity {
                return outcome(false, format!("n={n}, T={t} is not the identity"));
            }
            checked += 1;
        }
    }
    outcome(true, format!("all {checked} shapes with n*T <= 400 equal I exactly"))
}

fn table_rows() -> Outcome {
    // (ActualY, pred, mean, meanPE, predPE) as printed.
    let rows = [
        (2382.0, 2208.88, 1992.42, 16.36, 7.27),
        (153.0, 678.36, 472.29, 208.68, 343.37),
    ];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (y, pred, mean, mean_pe, pred_pe) in rows {
        let m = mpe(&[Some(y)], &[Some(mean)]).expect("scorable");
        let p = mpe(&[Some(y)], &[Some(pred)]).expect("scorable");
        lines.push(format!("ActualY {y}: meanPE {m:.3}, predPE {p:.3}"));
        worst = worst.max((m - mean_pe).abs()).max((p - pred_pe).abs());
    }
    outcome(
        worst <= 0.01,
        format!("{}; max deviation {worst:.4} (tol 0.01)", lines.join("; ")),
    )
}

struct Recovery {
    corr: f64,
    model_mpe: f64,
    baseline_mpe: f64,
    psi: Vec<f64>,
    truth_psi: Vec<f64>,
    names: Vec<String>,
    imputed: f64,
    injected: f64,
    true_count: f64,
    neighbours: (f64, f64),
    took: Duration,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// 20 sites, eight weeks of weekdays, final week masked; a stuck-low hour is
/// injected at site 1 on the Wednesday of the final week.
fn synthetic_run() -> Result<Recovery, String> {
    let start = Instant::now();
    let seed = 2018;
    let graph = sample_graph(20, seed).map_err(|e| e.to_string())?;
    let mut cfg = SimConfig {
        n_sites: 20,
        n_days: 40,
        period: 12,
        missing_rate: 0.02,
        weekdays_only: true,
        seed,
        ..SimConfig::default()
    };
    let (_, truth) = sample_counts(&cfg, &graph).map_err(|e| e.to_string())?;
    let dates = cfg.dates();
    let fault_day = cfg.n_days - 3;
    let lam = |bin: usize| truth.lambda[truth.cell(1, fault_day, bin)];
    // Interior bin whose true mean lies strictly between its neighbours',
    // with the widest neighbour gap.
    let fault_bin = (1..cfg.period - 1)
        .filter(|&b| {
            let (lo, hi) = (lam(b - 1).min(lam(b + 1)), lam(b - 1).max(lam(b + 1)));
            lo < lam(b) && lam(b) < hi
        })
        .max_by(|&a, &b| {
            let gap = |k: usize| (lam(k - 1) - lam(k + 1)).abs();
            gap(a).total_cmp(&gap(b))
        })
        .ok_or("no monotone interior bin at the fault site")?;
    cfg.stuck_low = Some(StuckLow {
        site: 1,
        day: fault_day,
        bin: fault_bin,
        factor: 0.2,
    });
    let (recorded, truth) = sample_counts(&cfg, &graph).map_err(|e| e.to_string())?;

    let week_start = dates[cfg.n_days - 5];
    let week_end = dates[cfg.n_days - 1];
    assert_eq!(week_start.weekday(), chrono::Weekday::Mon);
    let masked = recorded.masked(|r| r.date >= week_start);
    let spec = ModelSpec::default();
    let fitted = fit(&spec, &masked, &graph).map_err(|e| e.to_string())?;

    // True counts of the masked week, before faults and masking.
    let bins = cfg.bins();
    let mut truth_rows = Vec::new();
    for site in 1..=cfg.n_sites {
        for (day, &date) in dates.iter().enumerate().filter(|(_, d)| **d >= week_start) {
            for (b, &bin) in bins.iter().enumerate() {
                truth_rows.push(CountRow {
                    date,
                    bin,
                    site,
                    count: Some(truth.counts[truth.cell(site, day, b)]),
                    covariates: vec![],
                });
            }
        }
    }
    let truth_week = CountFrame::from_rows(truth_rows, vec![]).map_err(|e| e.to_string())?;
    let model_preds = Predictions::from_fitted(&fitted.table());
    let baseline =
        prior_mean_baseline(&recorded, week_start, week_end, 7).map_err(|e| e.to_string())?;
    let cmp = compare(&model_preds, &baseline, &truth_week).map_err(|e| e.to_string())?;

    let (mut f, mut t) = (Vec::new(), Vec::new());
    for r in &cmp.rows {
        if let (Some(p), Some(y)) = (r.pred, r.actual) {
            f.push(p);
            t.push(y);
        }
    }

    let cell = fitted
        .locate(dates[fault_day], bins[fault_bin], 1)
        .ok_or("fault cell not in the fitted grid")?;
    let true_count = truth.counts[truth.cell(1, fault_day, fault_bin)];
    Ok(Recovery {
        corr: pearson(&f, &t),
        model_mpe: cmp.pred_mpe.ok_or("no scorable cells")?,
        baseline_mpe: cmp.mean_mpe.ok_or("no scorable cells")?,
        truth_psi: cfg.precisions.as_array().iter().map(|p| p.ln()).collect(),
        psi: fitted.psi_mode.clone(),
        names: fitted.hyper_names.clone(),
        imputed: fitted.fitted[cell],
        injected: (0.2 * true_count).round(),
        true_count,
        neighbours: (lam(fault_bin - 1), lam(fault_bin + 1)),
        took: start.elapsed(),
    })
}

fn recovery_outcome(r: &Result<Recovery, String>) -> Outcome {
    let r = match r {
        Ok(r) => r,
        Err(e) => return outcome(false, e.clone()),
    };
    let deviations: Vec<String> = r
        .names
        .iter()
        .zip(r.psi.iter().zip(&r.truth_psi))
        .map(|(n, (a, b))| format!("{n} {a:.2} vs {b:.2}"))
        .collect();
    let psi_ok = r.psi.iter().zip(&r.truth_psi).all(|(a, b)| (a - b).abs() <= 1.0);
    let corr_ok = r.corr >= 0.9;
    let mpe_ok = r.model_mpe <= 1.2 * r.baseline_mpe;
    outcome(
        corr_ok && mpe_ok && psi_ok,
        format!(
            "(a) corr {:.3} (>= 0.9) {}; (b) model MPE {:.2} vs baseline {:.2} (ratio {:.3} <= 1.2) {}; (c) log-precisions [{}] (within 1.0) {}; fit {:.1?}",
            r.corr,
            if corr_ok { "ok" } else { "FAIL" },
            r.model_mpe,
            r.baseline_mpe,
            r.model_mpe / r.baseline_mpe,
            if mpe_ok { "ok" } else { "FAIL" },
            deviations.join(", "),
            if psi_ok { "ok" } else { "FAIL" },
            r.took
        ),
    )
}

fn imputation_outcome(r: &Result<Recovery, String>) -> Outcome {
    let r = match r {
        Ok(r) => r,
        Err(e) => return outcome(false, e.clone()),
    };
    let (lo, hi) = (r.neighbours.0.min(r.neighbours.1), r.neighbours.0.max(r.neighbours.1));
    let between = lo <= r.imputed && r.imputed <= hi;
    let drop = r.true_count - r.injected;
    let recovered = (r.imputed - r.injected).abs() >= 0.5 * drop;
    outcome(
        between && recovered,
        format!(
            "imputed {:.1} within neighbour means [{lo:.1}, {hi:.1}] {}; injected {} (true {}), moved {:.1} of a {drop} drop (>= 50%) {}",
            r.imputed,
            if between { "ok" } else { "FAIL" },
            r.injected,
            r.true_count,
            (r.imputed - r.injected).abs(),
            if recovered { "ok" } else { "FAIL" }
        ),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    all &= run("gamma mode identity", Duration::from_secs(1), gamma_mode_identity);
    all &= run("interval integral", Duration::from_secs(1), interval_integral);
    all &= run("Gaussian-likelihood exactness", Duration::from_secs(10), gaussian_exactness);
    all &= run("quadrature-oracle agreement", Duration::from_secs(30), quadrature_agreement);
    all &= run("Type IV rank identity", Duration::from_secs(10), type_iv_rank);
    all &= run("Type I identity", Duration::from_secs(60), type_i_identity);
    all &= run("MPE table rows", Duration::from_secs(1), table_rows);
    let recovery = synthetic_run();
    all &= run("synthetic recovery", Duration::from_secs(600), || recovery_outcome(&recovery));
    all &= run("imputation of a stuck-low hour", Duration::from_secs(600), || {
        imputation_outcome(&recovery)
    });
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
