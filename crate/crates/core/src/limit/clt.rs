//! The normalized CLT statistics and their limit parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::MomentData;
use crate::linalg::{vectorize_herm, CovMatrix, Field, HermVector, HermitianMatrix, Matrix, PsdMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CltKind {
    /// `√p/(nσ²√2)·(‖S_n‖² − nσ²)`, limit N(0,1) for n ≫ p³.
    #[serde(rename = "CLT1")]
    Clt1,
    /// `(‖S_n‖² − nσ²)/√n`, limit N(0, m₄ − σ⁴) for n² ≪ p.
    #[serde(rename = "CLT2")]
    Clt2,
    /// `√p/n·(φ(S_n)² − nσ²)`, limit N(0, T²) on H_q for n ≫ p⁴.
    #[serde(rename = "CLT3")]
    Clt3,
    /// `(φ(S_n)² − nσ²)/√n`, limit N(0, Σ²) on H_q for n² ≪ p (or n² ≪ μ).
    #[serde(rename = "CLT4")]
    Clt4,
}

impl CltKind {
    pub fn is_scalar(self) -> bool {
        matches!(self, CltKind::Clt1 | CltKind::Clt2)
    }

    pub fn needs_dimension(self) -> bool {
        matches!(self, CltKind::Clt1 | CltKind::Clt3)
    }
}

/// Raw walk observations: `‖S_n‖²` values or `φ(S_n)²` matrices.
#[derive(Clone, Copy, Debug)]
pub enum CltInput<'a> {
    Scalar(&'a [f64]),
    Matrix(&'a [HermitianMatrix]),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CltValues {
    Scalar(Vec<f64>),
    Vector(Vec<HermVector>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CltStatistic {
    pub kind: CltKind,
    pub n: u64,
    /// The dimension p (group walks) or index μ (Bessel walks).
    pub p_or_mu: f64,
    pub values: CltValues,
}

impl CltStatistic {
    pub fn scalars(&self) -> Option<&[f64]> {
        match &self.values {
            CltValues::Scalar(v) => Some(v),
            CltValues::Vector(_) => None,
        }
    }

    /// Values as vectors; scalar statistics become one-dimensional vectors.
    pub fn vectors(&self) -> Vec<HermVector> {
        match &self.values {
            CltValues::Scalar(v) => v.iter().map(|x| HermVector { values: vec![*x] }).collect(),
            CltValues::Vector(v) => v.clone(),
        }
    }
}

/// Applies the centering and scaling of `kind` to raw observations.
pub fn normalize_clt(kind: CltKind, raw: CltInput<'_>, n: u64, p_or_mu: f64, md: &MomentData) -> Result<CltStatistic> {
    if n == 0 {
        return Err(Error::ShapeMismatch("CLT statistics need n >= 1".into()));
    }
    let nf = n as f64;
    if kind.needs_dimension() && !(p_or_mu > 0.0) {
        return Err(Error::ShapeMismatch(format!("{kind:?} needs a positive dimension p, got {p_or_mu}")));
    }
    let values = if kind.is_scalar() {
        if md.q() != 1 {
            return Err(Error::ShapeMismatch(format!("{kind:?} is defined for q = 1, law has q = {}", md.q())));
        }
        let sigma2 = md.sigma2_scalar();
        let (center, scale) = match kind {
            CltKind::Clt1 => {
                if sigma2 <= 0.0 {
                    return Err(Error::ShapeMismatch("CLT1 needs a law other than the point mass at 0".into()));
                }
                (nf * sigma2, p_or_mu.sqrt() / (nf * sigma2 * std::f64::consts::SQRT_2))
            }
            _ => (nf * sigma2, 1.0 / nf.sqrt()),
        };
        let xs: Vec<f64> = match raw {
            CltInput::Scalar(xs) => xs.to_vec(),
            CltInput::Matrix(ms) => {
                if ms.iter().any(|m| m.q() != 1) {
                    return Err(Error::ShapeMismatch(format!("{kind:?} needs 1x1 observations")));
                }
                ms.iter().map(HermitianMatrix::first).collect()
            }
        };
        CltValues::Scalar(xs.into_iter().map(|x| (x - center) * scale).collect())
    } else {
        let scale = match kind {
            CltKind::Clt3 => p_or_mu.sqrt() / nf,
            _ => 1.0 / nf.sqrt(),
        };
        let center = md.sigma2.as_herm().scale(nf);
        let vectors = match raw {
            CltInput::Scalar(xs) => {
                if md.q() != 1 {
                    return Err(Error::ShapeMismatch(format!("scalar observations for a law with q = {}", md.q())));
                }
                xs.iter().map(|x| HermVector { values: vec![(x - center.first()) * scale] }).collect()
            }
            CltInput::Matrix(ms) => ms
                .iter()
                .map(|m| {
                    if m.q() != md.q() {
                        return Err(Error::ShapeMismatch(format!("observation q = {} but law q = {}", m.q(), md.q())));
                    }
                    Ok(vectorize_herm(&widen(m, center.field()).sub(&widen(&center, m.field())).scale(scale)))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        CltValues::Vector(vectors)
    };
    Ok(CltStatistic {
        kind,
        n,
        p_or_mu,
        values,
    })
}

fn widen(a: &HermitianMatrix, other: Field) -> HermitianMatrix {
    if a.field() == Field::Real && other == Field::Complex {
        let q = a.q();
        HermitianMatrix::new(Matrix::from_fn(q, q, Field::Complex, |i, j| a.get(i, j))).expect("square")
    } else {
        a.clone()
    }
}

/// Covariance of the limit law N(0, T²) of the CLT3 statistic over the reals, mapped to
/// [`HermVector`] coordinates: `T²_{(i,j),(k,l)} = σ²_{ik}σ²_{jl} + σ²_{il}σ²_{jk}`.
pub fn t_squared_limit(sigma2: &PsdMatrix) -> Result<CovMatrix> {
    if sigma2.field() != Field::Real {
        return Err(Error::UnsupportedField("T² is only available over the reals".into()));
    }
    let q = sigma2.q();
    let s = |i: usize, j: usize| sigma2.as_herm().get(i, j).re;
    let basis = real_herm_basis(q);
    let dim = basis.len();
    let mut out = CovMatrix::zeros(dim);
    for a in 0..dim {
        for b in a..dim {
            let mut acc = 0.0;
            for &(i, j, ea) in &basis[a] {
                for &(k, l, eb) in &basis[b] {
                    acc += ea * eb * (s(i, k) * s(j, l) + s(i, l) * s(j, k));
                }
            }
            out.set(a, b, acc);
            out.set(b, a, acc);
        }
    }
    Ok(out)
}

/// Orthonormal basis of real symmetric matrices matching the `HermVector` layout, as
/// sparse `(row, col, value)` lists.
fn real_herm_basis(q: usize) -> Vec<Vec<(usize, usize, f64)>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis: Vec<Vec<(usize, usize, f64)>> = (0..q).map(|i| vec![(i, i, 1.0)]).collect();
    for i in 0..q {
        for j in (i + 1)..q {
            basis.push(vec![(i, j, h), (j, i, h)]);
        }
    }
    basis
}

/// `E[(‖S_n‖² − nσ²)²] = n(m₄ − σ⁴) + 2·n(n−1)/p·σ⁴` for group walks on Π_1.
pub fn moment_identity_rhs(n: u64, p: f64, md: &MomentData) -> Result<f64> {
    if md.q() != 1 {
        return Err(Error::ShapeMismatch("moment identity is stated for q = 1".into()));
    }
    let nf = n as f64;
    let s4 = md.sigma2_scalar().powi(2);
    let second = if p.is_infinite() {
        0.0
    } else {
        2.0 * nf * (nf - 1.0) / p * s4
    };
    Ok(nf * (md.m4 - s4) + second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::RadialLaw;

    fn two_point() -> MomentData {
        RadialLaw::two_point(1.0, 2.0, 0.5).unwrap().moments()
    }

    #[test]
    fn clt2_centering() {
        let md = two_point();
        let st = normalize_clt(CltKind::Clt2, CltInput::Scalar(&[250.0]), 100, 1e5, &md).unwrap();
        assert_eq!(st.scalars().unwrap(), &[0.0]);
    }

    #[test]
    fn clt1_arithmetic() {
        let md = two_point();
        let st = normalize_clt(CltKind::Clt1, CltInput::Scalar(&[260.0]), 100, 4.0, &md).unwrap();
        let expected = 2.0 / (100.0 * 2.5 * std::f64::consts::SQRT_2) * 10.0;
        assert!((st.scalars().unwrap()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.056_568_542_494_923_8).abs() < 1e-15);
    }

    #[test]
    fn clt4_matches_clt2_for_q1() {
        let md = two_point();
        let raw = [231.0, 250.0, 277.5];
        let a = normalize_clt(CltKind::Clt2, CltInput::Scalar(&raw), 100, 1e5, &md).unwrap();
        let mats: Vec<HermitianMatrix> = raw.iter().map(|x| HermitianMatrix::scalar(*x)).collect();
        let b = normalize_clt(CltKind::Clt4, CltInput::Matrix(&mats), 100, 1e5, &md).unwrap();
        let bv: Vec<f64> = b.vectors().iter().map(|v| v.values[0]).collect();
        assert_eq!(a.scalars().unwrap(), bv.as_slice());
    }

    #[test]
    fn shape_mismatch() {
        let md = RadialLaw::point_mass(PsdMatrix::identity(2, Field::Real)).moments();
        assert!(normalize_clt(CltKind::Clt2, CltInput::Scalar(&[1.0]), 10, 100.0, &md).is_err());
        let wrong = [HermitianMatrix::identity(3, Field::Real)];
        assert!(normalize_clt(CltKind::Clt4, CltInput::Matrix(&wrong), 10, 100.0, &md).is_err());
    }

    #[test]
    fn t_squared_identity() {
        let t = t_squared_limit(&PsdMatrix::identity(2, Field::Real)).unwrap();
        let expected = CovMatrix::from_fn(3, |i, j| if i == j { 2.0 } else { 0.0 });
        assert!(t.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn t_squared_rank_one() {
        let t = t_squared_limit(&PsdMatrix::diag(&[1.0, 0.0], Field::Real).unwrap()).unwrap();
        let expected = CovMatrix::from_fn(3, |i, j| if i == 0 && j == 0 { 2.0 } else { 0.0 });
        assert!(t.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn t_squared_symmetric_and_refuses_complex() {
        let s = PsdMatrix::new(HermitianMatrix::from_real_rows(&[vec![2.0, 0.5, 0.1], vec![0.5, 1.0, -0.3], vec![0.1, -0.3, 0.7]]).unwrap())
            .unwrap();
        assert!(t_squared_limit(&s).unwrap().is_symmetric());
        assert!(matches!(
            t_squared_limit(&PsdMatrix::identity(2, Field::Complex)),
            Err(Error::UnsupportedField(_))
        ));
    }

    #[test]
    fn moment_identity_values() {
        let md = two_point();
        assert!((moment_identity_rhs(1, 50.0, &md).unwrap() - 2.25).abs() < 1e-14);
        assert!((moment_identity_rhs(20, 50.0, &md).unwrap() - 140.0).abs() < 1e-12);
        assert!((moment_identity_rhs(20, f64::INFINITY, &md).unwrap() - 45.0).abs() < 1e-12);
    }
}
