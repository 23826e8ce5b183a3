//! Mardia's multivariate skewness and kurtosis normality tests.

use serde::Serialize;
use statrs::function::{erf, gamma};

use crate::error::{Error, Result};
use crate::linalg::{HermVector, HermitianMatrix, Matrix, Field, C64};
use crate::stats::CovAccumulator;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MardiaResult {
    pub dim: usize,
    pub count: usize,
    /// Sample skewness b₁.
    pub skew: f64,
    /// Sample kurtosis b₂.
    pub kurt: f64,
    /// `N·b₁/6`, asymptotically χ² with `k(k+1)(k+2)/6` degrees of freedom.
    pub skew_statistic: f64,
    /// `(b₂ − k(k+2)) / sqrt(8k(k+2)/N)`, asymptotically N(0,1).
    pub kurt_z: f64,
    pub skew_p_value: f64,
    pub kurt_p_value: f64,
}

impl MardiaResult {
    /// True when neither test rejects normality at `level`.
    pub fn accepts(&self, level: f64) -> bool {
        self.skew_p_value >= level && self.kurt_p_value >= level
    }
}

pub fn mardia_tests(samples: &[HermVector]) -> Result<MardiaResult> {
    let Some(first) = samples.first() else {
        return Err(Error::InsufficientData("Mardia tests need samples".into()));
    };
    let k = first.dim();
    let n = samples.len();
    if n <= 10 * k * k {
        return Err(Error::InsufficientData(format!(
            "Mardia tests need more than {} samples in dimension {k}, got {n}",
            10 * k * k
        )));
    }
    let mut acc = CovAccumulator::new(k);
    for s in samples {
        if s.dim() != k {
            return Err(Error::ShapeMismatch("samples of different dimensions".into()));
        }
        acc.push(&s.values);
    }
    let nf = n as f64;
    // maximum-likelihood covariance
    let cov = acc.covariance();
    let ml = Matrix::from_fn(k, k, Field::Real, |i, j| C64::new(cov.get(i, j) * (nf - 1.0) / nf, 0.0));
    let eig = crate::linalg::eig_herm(&HermitianMatrix::new(ml)?)?;
    let top = eig.values.last().copied().unwrap_or(0.0);
    if !(top > 0.0) || eig.values[0] <= 1e-12 * top {
        return Err(Error::DegenerateData(format!(
            "sample covariance is singular (eigenvalues {:e}..{:e})",
            eig.values[0], top
        )));
    }
    let whiten = eig.reconstruct_with(|x| 1.0 / x.sqrt());
    let w: Vec<f64> = (0..k * k).map(|idx| whiten.get(idx / k, idx % k).re).collect();
    let mean = acc.mean();

    let mut third = vec![0.0; k * k * k];
    let mut b2 = 0.0;
    let mut c = vec![0.0; k];
    let mut y = vec![0.0; k];
    for s in samples {
        for (ci, (x, m)) in c.iter_mut().zip(s.values.iter().zip(mean)) {
            *ci = x - m;
        }
        for a in 0..k {
            y[a] = (0..k).map(|b| w[a * k + b] * c[b]).sum();
        }
        let r2: f64 = y.iter().map(|v| v * v).sum();
        b2 += r2 * r2;
        for a in 0..k {
            for b in a..k {
                let yab = y[a] * y[b];
                for cc in b..k {
                    third[(a * k + b) * k + cc] += yab * y[cc];
                }
            }
        }
    }
    b2 /= nf;
    let mut b1 = 0.0;
    for a in 0..k {
        for b in a..k {
            for cc in b..k {
                let t = third[(a * k + b) * k + cc] / nf;
                b1 += multiplicity(a, b, cc) * t * t;
            }
        }
    }

    let kf = k as f64;
    let df = kf * (kf + 1.0) * (kf + 2.0) / 6.0;
    let skew_statistic = nf * b1 / 6.0;
    let kurt_z = (b2 - kf * (kf + 2.0)) / (8.0 * kf * (kf + 2.0) / nf).sqrt();
    Ok(MardiaResult {
        dim: k,
        count: n,
        skew: b1,
        kurt: b2,
        skew_statistic,
        kurt_z,
        skew_p_value: gamma::gamma_ur(df / 2.0, skew_statistic / 2.0),
        kurt_p_value: erf::erfc(kurt_z.abs() / std::f64::consts::SQRT_2),
    })
}

/// Number of orderings of the index triple `a ≤ b ≤ c`.
fn multiplicity(a: usize, b: usize, c: usize) -> f64 {
    if a == b && b == c {
        1.0
    } else if a == b || b == c {
        3.0
    } else {
        6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, SeedSequence};

    fn hv(v: Vec<f64>) -> HermVector {
        HermVector { values: v }
    }

    /// Pairwise definition, O(N²).
    fn brute_force(samples: &[HermVector]) -> (f64, f64) {
        let k = samples[0].dim();
        let n = samples.len() as f64;
        let mean: Vec<f64> = (0..k).map(|a| samples.iter().map(|s| s.values[a]).sum::<f64>() / n).collect();
        let cs: Vec<Vec<f64>> = samples.iter().map(|s| s.values.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
        let mut cov = vec![vec![0.0; k]; k];
        for c in &cs {
            for a in 0..k {
                for b in 0..k {
                    cov[a][b] += c[a] * c[b] / n;
                }
            }
        }
        let inv = invert(&cov);
        let quad = |u: &[f64], v: &[f64]| -> f64 {
            (0..k).map(|a| (0..k).map(|b| u[a] * inv[a][b] * v[b]).sum::<f64>()).sum()
        };
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for ci in &cs {
            for cj in &cs {
                b1 += quad(ci, cj).powi(3);
            }
            b2 += quad(ci, ci).powi(2);
        }
        (b1 / (n * n), b2 / n)
    }

    fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = m.len();
        let mut a: Vec<Vec<f64>> = m
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = r.clone();
                row.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for col in 0..k {
            let piv = (col..k).max_by(|x, y| a[*x][col].abs().total_cmp(&a[*y][col].abs())).unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            a[col].iter_mut().for_each(|v| *v /= d);
            for r in 0..k {
                if r != col {
                    let f = a[r][col];
                    let pivot_row = a[col].clone();
                    a[r].iter_mut().zip(pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        a.into_iter().map(|r| r[k..].to_vec()).collect()
    }

    #[test]
    fn matches_pairwise_definition() {
        let mut rng = SeedSequence::new(31).stream(0);
        let samples: Vec<HermVector> = (0..300)
            .map(|_| {
                let (a, b, c) = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
                hv(vec![a, 0.5 * a + b, (c * c - 1.0) + 0.2 * b])
            })
            .collect();
        let r = mardia_tests(&samples).unwrap();
        let (b1, b2) = brute_force(&samples);
        assert!((r.skew - b1).abs() < 1e-9 * b1.max(1.0), "{} vs {b1}", r.skew);
        assert!((r.kurt - b2).abs() < 1e-9 * b2, "{} vs {b2}", r.kurt);
    }

    #[test]
    fn gaussian_sample_not_rejected() {
        let mut rng = SeedSequence::new(32).stream(0);
        let samples: Vec<HermVector> = (0..10_000)
            .map(|_| {
                let (a, b, c) = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
                hv(vec![a, a - b, 2.0 * b + c + 1.0])
            })
            .collect();
        assert!(mardia_tests(&samples).unwrap().accepts(1e-3));
    }

    #[test]
    fn skewed_sample_rejected() {
        let mut rng = SeedSequence::new(33).stream(0);
        let samples: Vec<HermVector> = (0..10_000)
            .map(|_| hv(vec![normal(&mut rng).powi(2), normal(&mut rng)]))
            .collect();
        let r = mardia_tests(&samples).unwrap();
        assert!(r.skew_p_value < 1e-6);
    }

    #[test]
    fn degenerate_and_small_inputs() {
        let constant: Vec<HermVector> = (0..100).map(|_| hv(vec![1.0, 2.0])).collect();
        assert!(matches!(mardia_tests(&constant), Err(Error::DegenerateData(_))));
        let few: Vec<HermVector> = (0..40).map(|i| hv(vec![i as f64, (i * i) as f64])).collect();
        assert!(matches!(mardia_tests(&few), Err(Error::InsufficientData(_))));
    }
}
