use crate::error::{Error, Result};
use crate::linalg::{CovMatrix, HermVector};

/// Streaming mean and co-moment accumulator. Two accumulators merge exactly as if all
/// observations had been pushed into one.
#[derive(Clone, Debug, PartialEq)]
pub struct CovAccumulator {
    count: u64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl CovAccumulator {
    pub fn new(dim: usize) -> Self {
        CovAccumulator {
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        let dim = self.dim();
        debug_assert_eq!(x.len(), dim);
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        for i in 0..dim {
            let after = x[i] - self.mean[i];
            for j in 0..dim {
                self.comoment[i * dim + j] += delta[j] * after;
            }
        }
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &CovAccumulator) {
        assert_eq!(self.dim(), other.dim());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let dim = self.dim();
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..dim {
            for j in 0..dim {
                self.comoment[i * dim + j] += other.comoment[i * dim + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased covariance, symmetrized.
    pub fn covariance(&self) -> CovMatrix {
        let dim = self.dim();
        let denom = (self.count.saturating_sub(1)).max(1) as f64;
        CovMatrix::from_fn(dim, |i, j| {
            0.5 * (self.comoment[i * dim + j] + self.comoment[j * dim + i]) / denom
        })
    }
}

/// Sample mean and unbiased covariance of vectorized observations.
pub fn empirical_cov(samples: &[HermVector]) -> Result<(HermVector, CovMatrix)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].dim();
    let mut acc = CovAccumulator::new(dim);
    for s in samples {
        if s.dim() != dim {
            return Err(Error::ShapeMismatch("samples of different dimensions".into()));
        }
        acc.push(&s.values);
    }
    Ok((HermVector { values: acc.mean().to_vec() }, acc.covariance()))
}

/// Standard errors of each covariance entry: `sqrt(Var[(x_i−m_i)(x_j−m_j)] / N)`.
pub fn covariance_standard_errors(samples: &[HermVector], mean: &HermVector, cov: &CovMatrix) -> CovMatrix {
    let dim = cov.dim();
    let n = samples.len() as f64;
    let mut second = vec![0.0; dim * dim];
    for s in samples {
        let c: Vec<f64> = s.values.iter().zip(&mean.values).map(|(x, m)| x - m).collect();
        for i in 0..dim {
            for j in 0..dim {
                let z = c[i] * c[j];
                second[i * dim + j] += z * z;
            }
        }
    }
    CovMatrix::from_fn(dim, |i, j| {
        let var = second[i * dim + j] / n - cov.get(i, j).powi(2);
        (var.max(0.0) / n).sqrt()
    })
}

/// Mean and standard error of a scalar sample.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Replicate-level statistics of a batch of vectorized samples.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EmpiricalSummary {
    pub count: usize,
    pub mean: HermVector,
    pub covariance: CovMatrix,
    /// Kolmogorov–Smirnov distance to the reference law (one-dimensional samples only).
    pub ks_distance: Option<f64>,
    /// KS distance of the rescaled squared norms to their χ² law.
    pub sup_chi2_distance: Option<f64>,
    pub mardia_skew: Option<f64>,
    pub mardia_kurt: Option<f64>,
}

impl EmpiricalSummary {
    pub fn from_samples(samples: &[HermVector]) -> Result<Self> {
        let (mean, covariance) = empirical_cov(samples)?;
        Ok(EmpiricalSummary {
            count: samples.len(),
            mean,
            covariance,
            ks_distance: None,
            sup_chi2_distance: None,
            mardia_skew: None,
            mardia_kurt: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, SeedSequence};

    fn hv(v: &[f64]) -> HermVector {
        HermVector { values: v.to_vec() }
    }

    #[test]
    fn two_point_covariance() {
        let x = hv(&[1.0, 2.0, -1.0]);
        let y = hv(&[0.0, 0.5, 1.0]);
        let (_, cov) = empirical_cov(&[x.clone(), y.clone()]).unwrap();
        let d: Vec<f64> = x.values.iter().zip(&y.values).map(|(a, b)| a - b).collect();
        for i in 0..3 {
            for j in 0..3 {
                assert!((cov.get(i, j) - d[i] * d[j] / 2.0).abs() < 1e-14);
            }
        }
        let eig = cov.eigen().unwrap();
        let norm2: f64 = d.iter().map(|v| v * v).sum();
        assert!((eig.values[2] - norm2 / 2.0).abs() < 1e-12);
        assert!(eig.values[0].abs() < 1e-12 && eig.values[1].abs() < 1e-12);
    }

    #[test]
    fn standard_normal_covariance() {
        let mut rng = SeedSequence::new(11).stream(0);
        let samples: Vec<HermVector> =
            (0..100_000).map(|_| hv(&[normal(&mut rng), normal(&mut rng), normal(&mut rng)])).collect();
        let (mean, cov) = empirical_cov(&samples).unwrap();
        let se = covariance_standard_errors(&samples, &mean, &cov);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov.get(i, j) - target).abs() <= 4.0 * se.get(i, j));
            }
        }
        assert!(cov.is_symmetric());
    }

    #[test]
    fn shift_invariance() {
        let mut rng = SeedSequence::new(12).stream(0);
        let samples: Vec<HermVector> = (0..1000).map(|_| hv(&[normal(&mut rng), normal(&mut rng)])).collect();
        let shifted: Vec<HermVector> = samples.iter().map(|s| hv(&[s.values[0] + 5.0, s.values[1] - 3.0])).collect();
        let (_, a) = empirical_cov(&samples).unwrap();
        let (_, b) = empirical_cov(&shifted).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn merge_matches_single_pass() {
        let mut rng = SeedSequence::new(13).stream(0);
        let data: Vec<[f64; 2]> = (0..500).map(|_| [normal(&mut rng), 3.0 * normal(&mut rng) + 1.0]).collect();
        let mut whole = CovAccumulator::new(2);
        data.iter().for_each(|x| whole.push(x));
        let mut left = CovAccumulator::new(2);
        let mut right = CovAccumulator::new(2);
        data[..123].iter().for_each(|x| left.push(x));
        data[123..].iter().for_each(|x| right.push(x));
        left.merge(&right);
        assert_eq!(left.count(), whole.count());
        assert!(left.covariance().max_abs_diff(&whole.covariance()) < 1e-12);
        assert!((left.mean()[1] - whole.mean()[1]).abs() < 1e-13);
    }

    #[test]
    fn too_few_samples() {
        assert!(empirical_cov(&[hv(&[1.0])]).is_err());
    }
}
