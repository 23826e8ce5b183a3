//! Convergence-rate scans of ‖S_n‖² towards its χ² limit.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laws::RadialLaw;
use crate::linalg::Field;
use crate::orbit::{run_group_walk_norms, GroupEngine, GroupWalkConfig};
use crate::rng::SeedSequence;
use crate::stats::{chi2_cdf, ks_distance, ks_noise_floor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub distance: f64,
    /// Distance below the Monte Carlo noise floor; excluded from the fit.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    pub noise_floor: f64,
    /// Least-squares slope of ln(distance) against ln(n) over unflagged points.
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
    pub intercept: Option<f64>,
}

impl RateFit {
    /// Flags points under `noise_floor` and fits the rest.
    pub fn from_points(points: &[(usize, f64)], noise_floor: f64) -> Result<RateFit> {
        if points.iter().any(|(_, d)| !(*d > 0.0)) {
            return Err(Error::DegenerateData("rate fit needs positive distances".into()));
        }
        let points: Vec<RatePoint> = points
            .iter()
            .map(|&(n, distance)| RatePoint {
                n,
                distance,
                flagged: distance < noise_floor,
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|p| !p.flagged)
            .map(|p| ((p.n as f64).ln(), p.distance.ln()))
            .unzip();
        let (slope, intercept, se) = least_squares(&xs, &ys);
        Ok(RateFit {
            points,
            noise_floor,
            slope,
            slope_std_error: se,
            intercept,
        })
    }
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    let k = xs.len();
    if k < 2 {
        return (None, None, None);
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = (k > 2).then(|| {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (kf - 2.0) / sxx).sqrt()
    });
    (Some(slope), Some(intercept), se)
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.len() < 4 {
        return Err(Error::ShapeMismatch(format!("rate scans need at least 4 grid points, got {}", n_grid.len())));
    }
    if n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ShapeMismatch("grid must be positive and strictly increasing".into()));
    }
    let ratio = (n_grid[1] as f64 / n_grid[0] as f64).ln();
    if n_grid
        .windows(2)
        .any(|w| ((w[1] as f64 / w[0] as f64).ln() - ratio).abs() > 0.05 * ratio)
    {
        return Err(Error::ShapeMismatch("grid must be geometric".into()));
    }
    Ok(())
}

/// KS distance of `D/(nσ²)·‖S_n‖²` to χ²_D (D = d·p, the real dimension) along a geometric
/// grid of walk lengths, with a log-log rate fit. One walk per replicate is recorded at
/// every grid point.
pub fn berry_esseen_scan(
    law: &RadialLaw,
    p: usize,
    field: Field,
    n_grid: &[usize],
    reps: usize,
    engine: GroupEngine,
    seeds: &SeedSequence,
) -> Result<RateFit> {
    if law.q() != 1 {
        return Err(Error::ShapeMismatch("rate scans need a law on Π_1".into()));
    }
    check_grid(n_grid)?;
    if reps < 2 {
        return Err(Error::InsufficientData("rate scans need at least 2 replicates".into()));
    }
    let sigma2 = law.moments().sigma2_scalar();
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidLaw("rate scans need a law with positive second moment".into()));
    }
    let n_max = *n_grid.last().unwrap();
    let cfg = GroupWalkConfig::new(p, field, n_max, law.clone())?
        .with_checkpoints(n_grid.to_vec())?
        .with_engine(engine);
    let runs = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            run_group_walk_norms(&cfg, &mut seeds.stream(i)).map_err(|e| Error::Replicate {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let dim = (field.dim() * p) as u64;
    let points: Vec<(usize, f64)> = n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let scale = dim as f64 / (n as f64 * sigma2);
            let mut xs: Vec<f64> = runs.iter().map(|r| r[k] * scale).collect();
            xs.sort_by(f64::total_cmp);
            (n, ks_distance(&xs, |x| chi2_cdf(dim, x)))
        })
        .collect();
    RateFit::from_points(&points, ks_noise_floor(reps))
}
