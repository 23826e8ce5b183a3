//! Reference distribution functions and Kolmogorov–Smirnov distances.

use statrs::function::{erf, gamma};

/// CDF of the χ² distribution with `p` degrees of freedom: `P(p/2, x/2)`.
pub fn chi2_cdf(p: u64, x: f64) -> f64 {
    assert!(p >= 1, "chi2_cdf needs p >= 1");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma::gamma_lr(p as f64 / 2.0, x / 2.0)
}

pub fn normal_cdf(x: f64, mean: f64, variance: f64) -> f64 {
    0.5 * erf::erfc(-(x - mean) / (2.0 * variance).sqrt())
}

/// Sup distance between the empirical CDF of an ascending sample and `cdf`.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!sorted.is_empty(), "ks_distance needs a nonempty sample");
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "sample must be sorted");
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let hi = (i + 1) as f64 / n - f;
            let lo = f - i as f64 / n;
            hi.abs().max(lo.abs())
        })
        .fold(0.0, f64::max)
}

/// Sorts a copy of `sample` and returns its KS distance to `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    ks_distance(&s, cdf)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * pi2 / (8.0 * lambda * lambda)).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value of a KS distance `d` at effective sample size `n_eff`.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoSampleKs {
    pub distance: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TwoSampleKs {
    assert!(!a.is_empty() && !b.is_empty(), "two-sample KS needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    TwoSampleKs {
        distance: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    }
}

/// Noise floor used to flag KS distances that Monte Carlo error alone could produce.
pub fn ks_noise_floor(reps: usize) -> f64 {
    3.0 / (reps as f64).sqrt()
}
