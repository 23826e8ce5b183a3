//! Dispatch of configured experiments onto the simulation modules.

use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;
use statrs::function::beta::beta_reg;

use super::config::{AxiomCheck, ExperimentConfig, ExperimentKind, SupportCase, WalkFamily};
use super::record::{Cell, CheckResult, PlotData, RunRecord, Table};
use crate::error::{Error, Result};
use crate::hypergroup::{
    bessel_character_1d, convolve_points, kappa_exact, kappa_mu, root_lipschitz_gap, run_bessel_walk_with, BesselParam,
    BesselWalkConfig, ContractionSampler, TestFunction,
};
use crate::laws::MomentData;
use crate::limit::{
    berry_esseen_scan, mardia_tests, moment_identity_rhs, normalize_clt, t_squared_limit, CltInput, CltKind,
};
use crate::linalg::{psd_sqrt, vectorize_herm, CovMatrix, Field, HermVector, HermitianMatrix, PsdMatrix};
use crate::orbit::{run_group_walk, run_group_walk_norms, wishart_sample, GroupWalkConfig, WalkTrajectory};
use crate::rng::{normal, SeedSequence, Stream};
use crate::stats::{
    chi2_cdf, covariance_standard_errors, empirical_cov, ks_statistic, ks_two_sample, mean_and_se, normal_cdf,
    EmpiricalSummary,
};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "CONEWALK_WORKERS";

/// Worker count from [`WORKERS_ENV`], else the number of available CPUs.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `cfg` on a pool of `workers` threads. Results do not depend on `workers`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<RunRecord> {
    cfg.validate()?;
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::numerical("thread pool", e.to_string()))?;
    let start = Instant::now();
    let mut record = pool.install(|| dispatch(cfg))?;
    record.wall_time_secs = start.elapsed().as_secs_f64();
    record.workers = workers;
    log::info!(
        "{} `{}` finished in {:.2}s on {} workers",
        cfg.experiment,
        cfg.name,
        record.wall_time_secs,
        workers
    );
    Ok(record)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<RunRecord> {
    match cfg.experiment {
        ExperimentKind::WalkGroup => walk_group(cfg),
        ExperimentKind::WalkBessel => walk_bessel(cfg),
        ExperimentKind::Convolve => convolve(cfg),
        ExperimentKind::Kappa => kappa(cfg),
        ExperimentKind::CltCheck => clt_check(cfg),
        ExperimentKind::BerryEsseenScan => berry_esseen(cfg),
        ExperimentKind::Axioms => axioms(cfg),
        ExperimentKind::MomentIdentity => moment_identity(cfg),
    }
}

/// Maps replicate `i` of grid point `grid` to its private stream, in parallel, keeping
/// replicate order.
fn replicates<T: Send>(
    seeds: &SeedSequence,
    grid: u64,
    reps: usize,
    f: impl Fn(&mut Stream) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            f(&mut seeds.stream2(grid, i)).map_err(|e| Error::Replicate {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

fn se_check(name: String, empirical: f64, se: f64, expected: f64, k: f64) -> CheckResult {
    let diff = (empirical - expected).abs();
    let passed = if se > 0.0 {
        diff <= k * se
    } else {
        diff <= 1e-9 * (1.0 + expected.abs())
    };
    CheckResult::new(name, passed, empirical, expected, format!("|diff| = {diff:e}, {k}*SE = {:e}", k * se))
}

fn z_score(empirical: f64, se: f64, expected: f64) -> Option<f64> {
    (se > 0.0).then(|| (empirical - expected) / se)
}

const WALK_COLUMNS: [&str; 8] = [
    "grid_value",
    "step",
    "replicates",
    "mean_norm_sq",
    "std_error",
    "expected_norm_sq",
    "z",
    "passed",
];

const REPLICATE_COLUMNS: [&str; 6] = ["grid_index", "replicate", "step", "norm_sq", "phi_sq_dim", "phi_sq_vec"];

fn record_walks(
    cfg: &ExperimentConfig,
    md: &MomentData,
    grid: &[(f64, Vec<WalkTrajectory>, bool)],
    label: &str,
) -> RunRecord {
    let mut rec = RunRecord::empty(cfg, &WALK_COLUMNS);
    let k = cfg.thresholds.se_multiplier;
    let mut reps_table = cfg.record_replicates.then(|| Table::new(&REPLICATE_COLUMNS));
    let mut grid_summaries = Vec::new();
    let mut plot = Vec::new();
    for (g, (value, trajectories, checked)) in grid.iter().enumerate() {
        let mut rows = Vec::new();
        for (c, &step) in cfg.checkpoints().iter().enumerate() {
            let norms: Vec<f64> = trajectories.iter().map(|t| t.checkpoints[c].norm_sq()).collect();
            let (mean, se) = mean_and_se(&norms);
            let expected = step as f64 * md.m2;
            let check = se_check(format!("m2-additivity {label}={value} n={step}"), mean, se, expected, k);
            rec.table.push(vec![
                (*value).into(),
                step.into(),
                trajectories.len().into(),
                mean.into(),
                se.into(),
                expected.into(),
                z_score(mean, se, expected).into(),
                check.passed.into(),
            ]);
            if grid.len() == 1 {
                plot.push([step as f64, mean, se]);
            }
            rows.push(json!({"step": step, "mean_norm_sq": mean, "std_error": se, "expected": expected}));
            if *checked {
                rec.checks.push(check);
            }
        }
        if let Some(table) = reps_table.as_mut() {
            for (i, t) in trajectories.iter().enumerate() {
                for cp in &t.checkpoints {
                    let v = vectorize_herm(&cp.square);
                    let joined: Vec<String> = v.values.iter().map(|x| format!("{x:e}")).collect();
                    table.push(vec![
                        g.into(),
                        i.into(),
                        cp.step.into(),
                        cp.norm_sq().into(),
                        v.dim().into(),
                        joined.join(";").into(),
                    ]);
                }
            }
        }
        grid_summaries.push(json!({label: value, "checkpoints": rows, "m2_checked": checked}));
    }
    rec.aggregate = json!({"m2": md.m2, "moments_exact": matches!(md.exactness, crate::laws::Exactness::Analytic), "grid": grid_summaries});
    rec.replicate_table = reps_table;
    if !plot.is_empty() {
        rec.plot = Some(PlotData {
            x_label: "n",
            y_label: "mean ||S_n||^2",
            points: plot,
        });
    }
    rec
}

fn walk_group(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let law = cfg.build_law()?;
    let md = law.moments();
    let seeds = SeedSequence::new(cfg.master_seed);
    let mut grid = Vec::new();
    for (g, &p) in cfg.p_grid.iter().enumerate() {
        let wc = GroupWalkConfig::new(p, cfg.field, cfg.n_steps, law.clone())
            .and_then(|w| w.with_checkpoints(cfg.checkpoints()))
            .map_err(|e| Error::config("p_grid", e.to_string()))?
            .with_engine(cfg.engine);
        let runs = replicates(&seeds, g as u64, cfg.replicates, |rng| run_group_walk(&wc, rng))?;
        grid.push((p as f64, runs, true));
    }
    Ok(record_walks(cfg, &md, &grid, "p"))
}

fn bessel_param(mu: f64, q: usize, field: Field) -> Result<BesselParam> {
    BesselParam::new(mu, q, field).map_err(|e| Error::config("mu_grid", e.to_string()))
}

fn walk_bessel(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let law = cfg.build_law()?;
    let md = law.moments();
    let seeds = SeedSequence::new(cfg.master_seed);
    let mut grid = Vec::new();
    let mut warnings = Vec::new();
    for (g, &mu) in cfg.mu_grid.iter().enumerate() {
        let param = bessel_param(mu, law.q(), cfg.field)?;
        let wc = BesselWalkConfig::new(param, law.clone(), cfg.n_steps)
            .and_then(|w| w.with_checkpoints(cfg.checkpoints()))
            .map_err(|e| Error::config("law", e.to_string()))?;
        let sampler = ContractionSampler::new(param).map_err(|e| Error::config("mu_grid", e.to_string()))?;
        let runs = replicates(&seeds, g as u64, cfg.replicates, |rng| run_bessel_walk_with(&wc, &sampler, rng))?;
        if !param.in_approximation_range() {
            warnings.push(format!(
                "mu = {mu} is below 2*rho = {}; m2 additivity is reported but not checked",
                2.0 * param.rho()
            ));
        }
        grid.push((mu, runs, param.in_approximation_range()));
    }
    let mut rec = record_walks(cfg, &md, &grid, "mu");
    rec.warnings = warnings;
    Ok(rec)
}

fn convolve(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let pts = cfg.points.as_ref().expect("validated");
    let r = pts.r.to_psd().map_err(|e| Error::config("points.r", e.to_string()))?;
    let s = pts.s.to_psd().map_err(|e| Error::config("points.s", e.to_string()))?;
    if r.q() != s.q() {
        return Err(Error::config("points", "r and s must have the same size"));
    }
    let field = cfg.field.join(r.field()).join(s.field());
    let seeds = SeedSequence::new(cfg.master_seed);
    let k = cfg.thresholds.se_multiplier;
    let slack = cfg.thresholds.support_slack;
    let bound = r.frob_norm() + s.frob_norm();
    let expected_m2 = r.square().trace() + s.square().trace();
    let mut rec = RunRecord::empty(
        cfg,
        &[
            "mu",
            "draws",
            "mean_norm_sq",
            "std_error",
            "expected_norm_sq",
            "mean_norm",
            "norm_std_error",
            "max_norm",
            "support_bound",
            "violations",
        ],
    );
    let mut reps_table = cfg.record_replicates.then(|| Table::new(&["mu", "draw", "norm_sq", "phi_sq_vec"]));
    let mut grid = Vec::new();
    for (g, &mu) in cfg.mu_grid.iter().enumerate() {
        let param = bessel_param(mu, r.q(), field)?;
        let sampler = ContractionSampler::new(param).map_err(|e| Error::config("mu_grid", e.to_string()))?;
        let draws = replicates(&seeds, g as u64, cfg.replicates, |rng| convolve_points(&r, &s, &sampler, rng))?;
        let norm_sq: Vec<f64> = draws.iter().map(|t| t.square().trace()).collect();
        let norms: Vec<f64> = draws.iter().map(|t| t.frob_norm()).collect();
        let (m2, se2) = mean_and_se(&norm_sq);
        let (m1, se1) = mean_and_se(&norms);
        let max = norms.iter().copied().fold(0.0, f64::max);
        let violations = norms.iter().filter(|&&t| t > bound + slack).count();
        rec.table.push(vec![
            mu.into(),
            draws.len().into(),
            m2.into(),
            se2.into(),
            expected_m2.into(),
            m1.into(),
            se1.into(),
            max.into(),
            bound.into(),
            violations.into(),
        ]);
        rec.checks.push(CheckResult::new(
            format!("support-bound mu={mu}"),
            violations == 0,
            violations as f64,
            0.0,
            format!("max ||t|| = {max:e}, bound = {bound:e}"),
        ));
        rec.checks.push(se_check(format!("m2 mu={mu}"), m2, se2, expected_m2, k));
        rec.checks.push(CheckResult::new(
            format!("m1-subadditivity mu={mu}"),
            m1 <= bound + k * se1,
            m1,
            bound,
            format!("mean ||t|| = {m1:e} +- {se1:e}"),
        ));
        if let Some(t) = reps_table.as_mut() {
            for (i, d) in draws.iter().enumerate() {
                let v: Vec<String> = vectorize_herm(&d.square()).values.iter().map(|x| format!("{x:e}")).collect();
                t.push(vec![mu.into(), i.into(), norm_sq[i].into(), v.join(";").into()]);
            }
        }
        grid.push(json!({"mu": mu, "mean_norm_sq": m2, "std_error": se2, "mean_norm": m1, "max_norm": max, "violations": violations}));
    }
    rec.replicate_table = reps_table;
    rec.aggregate = json!({"support_bound": bound, "expected_norm_sq": expected_m2, "grid": grid});
    Ok(rec)
}

fn kappa(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let q = cfg.q.or_else(|| cfg.law.as_ref().and_then(|_| cfg.build_law().ok().map(|l| l.q()))).unwrap_or(1);
    let seeds = SeedSequence::new(cfg.master_seed);
    let k = cfg.thresholds.se_multiplier;
    let mut rec = RunRecord::empty(
        cfg,
        &["mu", "q", "field", "samples", "estimate", "std_error", "exact", "z", "proposal"],
    );
    let params = cfg
        .mu_grid
        .iter()
        .map(|&mu| bessel_param(mu, q, cfg.field))
        .collect::<Result<Vec<_>>>()?;
    let estimates = params
        .par_iter()
        .enumerate()
        .map(|(g, p)| kappa_mu(*p, cfg.replicates, &mut seeds.stream2(g as u64, 0)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::UnsupportedParameter(m) | Error::InsufficientData(m) => Error::config("mu_grid", m),
            other => other,
        })?;
    let mut grid = Vec::new();
    let mut plot = Vec::new();
    for (p, est) in params.iter().zip(&estimates) {
        let exact = kappa_exact(*p).ok();
        rec.table.push(vec![
            p.mu().into(),
            q.into(),
            p.field().to_string().into(),
            cfg.replicates.into(),
            est.estimate.into(),
            est.std_error.into(),
            exact.into(),
            exact.and_then(|x| z_score(est.estimate, est.std_error, x)).into(),
            serde_json::to_value(est.proposal).unwrap().as_str().unwrap_or("").into(),
        ]);
        if let Some(x) = exact {
            rec.checks.push(se_check(format!("kappa mu={}", p.mu()), est.estimate, est.std_error, x, k));
        }
        plot.push([p.mu(), est.estimate, est.std_error]);
        grid.push(json!({"mu": p.mu(), "estimate": est.estimate, "std_error": est.std_error, "exact": exact}));
    }
    rec.plot = Some(PlotData {
        x_label: "mu",
        y_label: "kappa_mu",
        points: plot,
    });
    rec.aggregate = json!({"q": q, "field": cfg.field, "grid": grid});
    Ok(rec)
}

const CLT_COLUMNS: [&str; 11] = [
    "grid_value",
    "n",
    "replicates",
    "kind",
    "row",
    "col",
    "empirical_cov",
    "limit_cov",
    "std_error",
    "z",
    "ks_distance",
];

fn regime_warnings(kind: CltKind, walk: WalkFamily, n: f64, grid: f64, ratio: f64) -> Option<String> {
    let (value, text) = match (kind, walk) {
        (CltKind::Clt1, _) => (grid.powi(3) / n, "p^3/n"),
        (CltKind::Clt3, _) => (grid.powi(4) / n, "p^4/n"),
        (_, WalkFamily::Group) => (n * n / grid, "n^2/p"),
        (_, WalkFamily::Bessel) => (n * n / grid, "n^2/mu"),
    };
    (value > ratio).then(|| {
        format!("{kind:?} at n = {n}, grid value {grid}: {text} = {value:.3e} exceeds {ratio}; outside the limit regime")
    })
}

fn clt_check(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let law = cfg.build_law()?;
    let md = law.moments();
    let kind = cfg.kind.expect("validated");
    let n = cfg.n_steps;
    let seeds = SeedSequence::new(cfg.master_seed);
    let th = cfg.thresholds;
    if !kind.is_scalar() && law.field() != cfg.field {
        return Err(Error::config("field", "CLT3/CLT4 checks need the law and the walk over the same field"));
    }
    let limit_cov: CovMatrix = match kind {
        CltKind::Clt1 => CovMatrix::from_fn(1, |_, _| 1.0),
        CltKind::Clt2 => CovMatrix::from_fn(1, |_, _| md.m4 - md.sigma2_scalar().powi(2)),
        CltKind::Clt3 => t_squared_limit(&md.sigma2).map_err(|e| Error::config("field", e.to_string()))?,
        CltKind::Clt4 => md.sigma2_image_cov.clone(),
    };
    if kind.is_scalar() && law.q() != 1 {
        return Err(Error::config("kind", "CLT1/CLT2 need a law on Π_1"));
    }
    let grid: Vec<f64> = match cfg.walk {
        WalkFamily::Group => cfg.p_grid.iter().map(|&p| p as f64).collect(),
        WalkFamily::Bessel => cfg.mu_grid.clone(),
    };
    let mut rec = RunRecord::empty(cfg, &CLT_COLUMNS);
    let mut summaries = Vec::new();
    for (g, &value) in grid.iter().enumerate() {
        if let Some(w) = regime_warnings(kind, cfg.walk, n as f64, value, th.regime_ratio) {
            rec.warnings.push(w);
        }
        let squares: Vec<HermitianMatrix> = match cfg.walk {
            WalkFamily::Group => {
                let wc = GroupWalkConfig::new(value as usize, cfg.field, n, law.clone())
                    .map_err(|e| Error::config("p_grid", e.to_string()))?
                    .with_engine(cfg.engine);
                if law.q() == 1 {
                    let norms = replicates(&seeds, g as u64, cfg.replicates, |rng| {
                        run_group_walk_norms(&wc, rng).map(|v| v[0])
                    })?;
                    norms.into_iter().map(|x| HermitianMatrix::diag(&[x], cfg.field)).collect()
                } else {
                    replicates(&seeds, g as u64, cfg.replicates, |rng| {
                        run_group_walk(&wc, rng).map(|t| t.last().square.clone())
                    })?
                }
            }
            WalkFamily::Bessel => {
                let param = bessel_param(value, law.q(), cfg.field)?;
                if !param.in_approximation_range() {
                    rec.warnings.push(format!("mu = {value} is below 2*rho = {}", 2.0 * param.rho()));
                }
                let wc = BesselWalkConfig::new(param, law.clone(), n).map_err(|e| Error::config("law", e.to_string()))?;
                let sampler = ContractionSampler::new(param).map_err(|e| Error::config("mu_grid", e.to_string()))?;
                replicates(&seeds, g as u64, cfg.replicates, |rng| {
                    run_bessel_walk_with(&wc, &sampler, rng).map(|t| t.last().square.clone())
                })?
            }
        };
        let stat = normalize_clt(kind, CltInput::Matrix(&squares), n as u64, value, &md)
            .map_err(|e| Error::config("kind", e.to_string()))?;
        let samples: Vec<HermVector> = stat.vectors();
        let (mean, cov) = empirical_cov(&samples)?;
        let se = covariance_standard_errors(&samples, &mean, &cov);
        let mut summary = EmpiricalSummary::from_samples(&samples)?;
        let mut worst: f64 = 0.0;
        let mut cov_ok = true;
        let ks = if kind.is_scalar() {
            let var = limit_cov.get(0, 0);
            let xs = stat.scalars().expect("scalar statistic");
            Some(ks_statistic(xs, |x| normal_cdf(x, 0.0, var)))
        } else {
            None
        };
        summary.ks_distance = ks;
        if cfg.walk == WalkFamily::Group && law.q() == 1 {
            let dim = (cfg.field.dim() * value as usize) as u64;
            let scale = dim as f64 / (n as f64 * md.sigma2_scalar());
            let xs: Vec<f64> = squares.iter().map(|s| s.first() * scale).collect();
            summary.sup_chi2_distance = Some(ks_statistic(&xs, |x| chi2_cdf(dim, x)));
        }
        for i in 0..cov.dim() {
            for j in i..cov.dim() {
                let (e, t, s) = (cov.get(i, j), limit_cov.get(i, j), se.get(i, j));
                let z = z_score(e, s, t);
                if let Some(z) = z {
                    worst = worst.max(z.abs());
                }
                let ok = if s > 0.0 {
                    (e - t).abs() <= th.se_multiplier * s
                } else {
                    (e - t).abs() <= 1e-9 * (1.0 + t.abs())
                };
                cov_ok &= ok;
                rec.table.push(vec![
                    value.into(),
                    n.into(),
                    samples.len().into(),
                    format!("{kind:?}").to_uppercase().into(),
                    i.into(),
                    j.into(),
                    e.into(),
                    t.into(),
                    s.into(),
                    z.into(),
                    if i == 0 && j == 0 { ks.into() } else { Cell::Empty },
                ]);
            }
        }
        if let Some(d) = ks {
            rec.checks.push(CheckResult::new(
                format!("ks-normal grid={value}"),
                d <= th.ks_max,
                d,
                th.ks_max,
                format!("KS distance to N(0, {:e})", limit_cov.get(0, 0)),
            ));
        } else {
            rec.checks.push(CheckResult::new(
                format!("limit-covariance grid={value}"),
                cov_ok,
                worst,
                th.se_multiplier,
                "largest |z| over covariance entries",
            ));
        }
        let mardia = if !kind.is_scalar() {
            match mardia_tests(&samples) {
                Ok(m) => {
                    summary.mardia_skew = Some(m.skew);
                    summary.mardia_kurt = Some(m.kurt);
                    if kind == CltKind::Clt4 {
                        rec.checks.push(CheckResult::new(
                            format!("mardia grid={value}"),
                            m.accepts(th.p_value_min),
                            m.skew_p_value.min(m.kurt_p_value),
                            th.p_value_min,
                            format!("skew p = {:e}, kurtosis p = {:e}", m.skew_p_value, m.kurt_p_value),
                        ));
                    }
                    Some(m)
                }
                Err(e) => {
                    rec.warnings.push(format!("Mardia tests skipped at grid value {value}: {e}"));
                    None
                }
            }
        } else {
            None
        };
        summaries.push(json!({
            "grid_value": value,
            "summary": summary,
            "limit_covariance": limit_cov.rows(),
            "max_abs_z": worst,
            "mardia": mardia,
        }));
    }
    rec.aggregate = json!({
        "kind": kind,
        "walk": cfg.walk,
        "n": n,
        "m2": md.m2,
        "m4": md.m4,
        "sigma2": vectorize_herm(md.sigma2.as_herm()).values,
        "grid": summaries,
    });
    Ok(rec)
}

fn berry_esseen(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let law = cfg.build_law()?;
    let seeds = SeedSequence::new(cfg.master_seed);
    let mut rec = RunRecord::empty(cfg, &["p", "n", "replicates", "ks_distance", "noise_floor", "flagged"]);
    let mut fits = Vec::new();
    let mut plot = Vec::new();
    for (g, &p) in cfg.p_grid.iter().enumerate() {
        let fit = berry_esseen_scan(&law, p, cfg.field, &cfg.n_grid, cfg.replicates, cfg.engine, &seeds.child(g as u64))
            .map_err(|e| match e {
                Error::ShapeMismatch(m) | Error::InvalidLaw(m) | Error::InsufficientData(m) => Error::config("n_grid", m),
                other => other,
            })?;
        for pt in &fit.points {
            rec.table.push(vec![
                p.into(),
                pt.n.into(),
                cfg.replicates.into(),
                pt.distance.into(),
                fit.noise_floor.into(),
                pt.flagged.into(),
            ]);
            if cfg.p_grid.len() == 1 {
                plot.push([(pt.n as f64).ln(), pt.distance.ln(), 1.0 / ((cfg.replicates as f64).sqrt() * pt.distance)]);
            }
        }
        match fit.slope {
            Some(slope) => rec.checks.push(CheckResult::new(
                format!("rate-slope p={p}"),
                slope <= cfg.thresholds.slope_max,
                slope,
                cfg.thresholds.slope_max,
                format!("fitted on {} unflagged points", fit.points.iter().filter(|x| !x.flagged).count()),
            )),
            None => rec
                .warnings
                .push(format!("p = {p}: slope undefined, fewer than two points above the noise floor")),
        }
        fits.push(json!({"p": p, "fit": fit}));
    }
    if !plot.is_empty() {
        rec.plot = Some(PlotData {
            x_label: "ln n",
            y_label: "ln KS distance",
            points: plot,
        });
    }
    rec.aggregate = json!({"fits": fits});
    Ok(rec)
}

fn moment_identity(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let law = cfg.build_law()?;
    if law.q() != 1 {
        return Err(Error::config("law", "moment identity needs a law on Π_1"));
    }
    let md = law.moments();
    let sigma2 = md.sigma2_scalar();
    let seeds = SeedSequence::new(cfg.master_seed);
    let k = cfg.thresholds.se_multiplier;
    let mut rec = RunRecord::empty(
        cfg,
        &["n", "p", "replicates", "empirical", "std_error", "expected", "z", "passed"],
    );
    let mut grid = Vec::new();
    let mut plot = Vec::new();
    for (g, &(n, p)) in cfg.np_grid.iter().enumerate() {
        let wc = GroupWalkConfig::new(p, cfg.field, n, law.clone())
            .map_err(|e| Error::config("np_grid", e.to_string()))?
            .with_engine(cfg.engine);
        let dev = replicates(&seeds, g as u64, cfg.replicates, |rng| {
            run_group_walk_norms(&wc, rng).map(|v| (v[0] - n as f64 * sigma2).powi(2))
        })?;
        let (mean, se) = mean_and_se(&dev);
        // over C the walk lives in R^{2p}
        let expected = moment_identity_rhs(n as u64, (cfg.field.dim() * p) as f64, &md)?;
        let check = se_check(format!("moment-identity n={n} p={p}"), mean, se, expected, k);
        rec.table.push(vec![
            n.into(),
            p.into(),
            cfg.replicates.into(),
            mean.into(),
            se.into(),
            expected.into(),
            z_score(mean, se, expected).into(),
            check.passed.into(),
        ]);
        plot.push([n as f64, mean, se]);
        grid.push(json!({"n": n, "p": p, "empirical": mean, "std_error": se, "expected": expected}));
        rec.checks.push(check);
    }
    rec.plot = Some(PlotData {
        x_label: "n",
        y_label: "E(||S_n||^2 - n sigma^2)^2",
        points: plot,
    });
    rec.aggregate = json!({"m4": md.m4, "sigma2": sigma2, "grid": grid});
    Ok(rec)
}

const AXIOM_COLUMNS: [&str; 9] = ["check", "q", "field", "mu", "draws", "statistic", "reference", "std_error", "passed"];

/// A random point of the cone: the root of a scaled Wishart matrix.
fn random_point(q: usize, field: Field, rng: &mut Stream) -> Result<PsdMatrix> {
    let w = wishart_sample(q + 2, q, field, rng);
    let scale = (0.7 * normal(rng)).exp();
    psd_sqrt(&PsdMatrix::new(w.into_herm().scale(scale))?)
}

fn axioms(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let seeds = SeedSequence::new(cfg.master_seed);
    let th = cfg.thresholds;
    let reps = cfg.replicates;
    let mut rec = RunRecord::empty(cfg, &AXIOM_COLUMNS);
    let mut results = Vec::new();
    for (ci, check) in cfg.checks.iter().enumerate() {
        let seq = seeds.child(ci as u64);
        let name = serde_json::to_value(check).unwrap().as_str().unwrap_or("").to_string();
        let mut push = |rec: &mut RunRecord, q: usize, field: Field, mu: f64, draws: usize, stat: f64, reference: f64, se: Option<f64>, passed: bool, detail: String| {
            rec.table.push(vec![
                name.as_str().into(),
                q.into(),
                field.to_string().into(),
                mu.into(),
                draws.into(),
                stat.into(),
                reference.into(),
                se.into(),
                passed.into(),
            ]);
            results.push(json!({"check": name, "q": q, "field": field, "mu": mu, "statistic": stat, "reference": reference, "passed": passed}));
            rec.checks.push(CheckResult::new(format!("{name} q={q} {field} mu={mu}"), passed, stat, reference, detail));
        };
        match check {
            AxiomCheck::SupportBound | AxiomCheck::Commutativity | AxiomCheck::M1Subadditivity => {
                for (g, case) in cfg.support_grid.iter().enumerate() {
                    let SupportCase { q, field, mu } = *case;
                    let param = bessel_param(mu, q, field)?;
                    let sampler = ContractionSampler::new(param).map_err(|e| Error::config("support_grid", e.to_string()))?;
                    match check {
                        AxiomCheck::SupportBound => {
                            let excess = replicates(&seq, g as u64, reps, |rng| {
                                let r = random_point(q, field, rng)?;
                                let s = random_point(q, field, rng)?;
                                let t = convolve_points(&r, &s, &sampler, rng)?;
                                Ok(t.frob_norm() - r.frob_norm() - s.frob_norm())
                            })?;
                            let worst = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            let violations = excess.iter().filter(|&&e| e > th.support_slack).count();
                            push(&mut rec, q, field, mu, reps, violations as f64, 0.0, None, violations == 0,
                                format!("largest ||t|| - ||r|| - ||s|| = {worst:e}"));
                        }
                        AxiomCheck::Commutativity => {
                            let mut rng = seq.stream2(g as u64, u64::MAX);
                            let r = random_point(q, field, &mut rng)?;
                            let s = random_point(q, field, &mut rng)?;
                            let a = replicates(&seq, 2 * g as u64, reps, |rng| {
                                Ok(convolve_points(&r, &s, &sampler, rng)?.square().trace())
                            })?;
                            let b = replicates(&seq, 2 * g as u64 + 1, reps, |rng| {
                                Ok(convolve_points(&s, &r, &sampler, rng)?.square().trace())
                            })?;
                            let ks = ks_two_sample(&a, &b);
                            push(&mut rec, q, field, mu, reps, ks.p_value, th.p_value_min, None, ks.p_value >= th.p_value_min,
                                format!("two-sample KS distance {:e}", ks.distance));
                        }
                        _ => {
                            let mut rng = seq.stream2(g as u64, u64::MAX);
                            let r = random_point(q, field, &mut rng)?;
                            let s = random_point(q, field, &mut rng)?;
                            let norms = replicates(&seq, g as u64, reps, |rng| Ok(convolve_points(&r, &s, &sampler, rng)?.frob_norm()))?;
                            let (m, se) = mean_and_se(&norms);
                            let bound = r.frob_norm() + s.frob_norm();
                            push(&mut rec, q, field, mu, reps, m, bound, Some(se), m <= bound + th.se_multiplier * se,
                                format!("mean ||t|| = {m:e} +- {se:e}"));
                        }
                    }
                }
            }
            AxiomCheck::Character => {
                let c = cfg.character.expect("validated");
                let param = bessel_param(c.mu, 1, Field::Real)?;
                let sampler = ContractionSampler::new(param).map_err(|e| Error::config("character", e.to_string()))?;
                let (r1, r2) = (
                    PsdMatrix::scalar(c.r1).map_err(|e| Error::config("character.r1", e.to_string()))?,
                    PsdMatrix::scalar(c.r2).map_err(|e| Error::config("character.r2", e.to_string()))?,
                );
                let vals = replicates(&seq, 0, reps, |rng| {
                    let t = convolve_points(&r1, &r2, &sampler, rng)?.as_herm().first();
                    bessel_character_1d(c.mu, t, c.s)
                })
                .map_err(|e| Error::config("character", e.to_string()))?;
                let (m, se) = mean_and_se(&vals);
                let product = bessel_character_1d(c.mu, c.r1, c.s)? * bessel_character_1d(c.mu, c.r2, c.s)?;
                let chk = se_check(String::new(), m, se, product, th.se_multiplier);
                push(&mut rec, 1, Field::Real, c.mu, reps, m, product, Some(se), chk.passed, chk.detail);
            }
            AxiomCheck::GroupOracle => {
                let law = cfg.build_law()?;
                let q = law.q();
                let d = cfg.field.dim() as f64;
                for (g, &mu) in cfg.mu_grid.iter().enumerate() {
                    let p = 2.0 * mu / d;
                    if p.fract() != 0.0 || (p as usize) < 2 * q {
                        return Err(Error::config("mu_grid", format!("mu = {mu} is not p*d/2 with an integer p >= 2q")));
                    }
                    let param = bessel_param(mu, q, cfg.field)?;
                    let bw = BesselWalkConfig::new(param, law.clone(), cfg.n_steps).map_err(|e| Error::config("law", e.to_string()))?;
                    let sampler = ContractionSampler::new(param).map_err(|e| Error::config("mu_grid", e.to_string()))?;
                    let gw = GroupWalkConfig::new(p as usize, cfg.field, cfg.n_steps, law.clone())
                        .map_err(|e| Error::config("mu_grid", e.to_string()))?
                        .with_engine(cfg.engine);
                    let a = replicates(&seq, 2 * g as u64, reps, |rng| Ok(run_bessel_walk_with(&bw, &sampler, rng)?.last().norm_sq()))?;
                    let b = replicates(&seq, 2 * g as u64 + 1, reps, |rng| Ok(run_group_walk(&gw, rng)?.last().norm_sq()))?;
                    let ks = ks_two_sample(&a, &b);
                    push(&mut rec, q, cfg.field, mu, reps, ks.p_value, th.p_value_min, None, ks.p_value >= th.p_value_min,
                        format!("p = {p}, n = {}, two-sample KS distance {:e}", cfg.n_steps, ks.distance));
                }
            }
            AxiomCheck::LipschitzGap => {
                let law = cfg.build_law()?;
                let q = law.q();
                let md = law.moments();
                let spec = cfg.test_function.clone().unwrap_or_default();
                let direction = match &spec.direction {
                    Some(m) => m.to_herm().map_err(|e| Error::config("test_function.direction", e.to_string()))?,
                    None => HermitianMatrix::identity(q, Field::Real),
                };
                let cap = spec
                    .cap
                    .unwrap_or_else(|| direction.as_matrix().real_inner(md.sigma2.as_herm().as_matrix()) * cfg.n_steps as f64);
                let f = TestFunction::clipped_quadratic(direction, cap);
                let mut gaps = Vec::new();
                for (g, &mu) in cfg.mu_grid.iter().enumerate() {
                    let param = bessel_param(mu, q, cfg.field)?;
                    let gap = root_lipschitz_gap(&law, param, cfg.n_steps, &f, reps, &seq.child(g as u64))
                        .map_err(|e| match e {
                            Error::UnsupportedParameter(m) | Error::ShapeMismatch(m) => Error::config("mu_grid", m),
                            other => other,
                        })?;
                    gaps.push((mu, gap));
                }
                for w in gaps.windows(2) {
                    let (mu0, g0) = w[0];
                    let (mu1, g1) = w[1];
                    let ratio = g0.gap / g1.gap;
                    let passed = ratio.is_finite() && ratio >= th.gap_ratio_min && ratio <= th.gap_ratio_max;
                    let ratio_se = ratio * ((g0.std_error / g0.gap).powi(2) + (g1.std_error / g1.gap).powi(2)).sqrt();
                    push(&mut rec, q, cfg.field, mu0, reps, ratio, (mu1 / mu0).sqrt(), Some(ratio_se), passed,
                        format!("gap({mu0}) = {:e} +- {:e}, gap({mu1}) = {:e} +- {:e}, cap = {cap}, L = {}",
                            g0.gap, g0.std_error, g1.gap, g1.std_error, f.lipschitz_constant()));
                }
            }
            AxiomCheck::ContractionKs => {
                for (g, &mu) in cfg.mu_grid.iter().enumerate() {
                    let param = bessel_param(mu, 1, cfg.field)?;
                    let sampler = ContractionSampler::new(param).map_err(|e| Error::config("mu_grid", e.to_string()))?;
                    let xs = replicates(&seq, g as u64, reps, |rng| Ok(sampler.sample_scalar(rng)?.norm_sqr()))?;
                    let (a, b) = (param.field().dim() as f64 / 2.0, param.exponent() + 1.0);
                    let d = ks_statistic(&xs, |x| if x <= 0.0 { 0.0 } else if x >= 1.0 { 1.0 } else { beta_reg(a, b, x) });
                    push(&mut rec, 1, cfg.field, mu, reps, d, th.ks_max, None, d <= th.ks_max,
                        format!("KS distance of |v|^2 to Beta({a}, {b}), proposal {:?}", sampler.proposal()));
                }
            }
        }
    }
    rec.aggregate = json!({"results": results});
    Ok(rec)
}
