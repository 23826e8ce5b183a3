//! Radial laws ν on the cone Π_q with samplers and moment metadata.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    clamp_psd, psd_sqrt, vectorize_herm, CovMatrix, Field, HermitianMatrix, Matrix, PsdMatrix, C64, EPS_PSD,
};
use crate::rng::{field_gaussian, normal, SeedSequence};

/// Number of draws behind Monte Carlo moment estimates.
pub const MOMENT_MC_SAMPLES: usize = 1_000_000;
const MOMENT_MC_SEED: u64 = 0x6d6f_6d65_6e74_7321;

#[derive(Clone, Debug, PartialEq)]
pub enum LawKind {
    PointMass(PsdMatrix),
    FiniteMixture { atoms: Vec<PsdMatrix>, weights: Vec<f64> },
    ScalarTwoPoint { a: f64, b: f64, p_a: f64 },
    ScalarLogNormal { log_mean: f64, log_sd: f64 },
    ScalarUniform { lo: f64, hi: f64 },
    /// `psd_sqrt(L·G^*G·L)` with `G` a `dof × q` standard Gaussian matrix and `L = scale^{1/2}`.
    WishartRoot { scale: PsdMatrix, dof: usize },
}

/// A sampleable probability law on Π_q.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialLaw {
    kind: LawKind,
    q: usize,
    field: Field,
    cumulative: Vec<f64>,
    scale_root: Option<PsdMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Exactness {
    Analytic,
    /// Standard errors are for the estimates of m₁..m₄.
    MonteCarlo { n_samples: usize, std_errors: [f64; 4] },
}

/// Moments of a radial law: `m_k = ∫‖s‖^k dν`, `σ² = ∫ s² dν` and the covariance of the
/// image of ν under `s ↦ s²` in [`HermVector`](crate::linalg::HermVector) coordinates.
#[derive(Clone, Debug)]
pub struct MomentData {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub sigma2: PsdMatrix,
    pub sigma2_image_cov: CovMatrix,
    pub exactness: Exactness,
}

impl MomentData {
    /// σ² as a number; only meaningful for q = 1.
    pub fn sigma2_scalar(&self) -> f64 {
        self.sigma2.as_herm().first()
    }

    pub fn q(&self) -> usize {
        self.sigma2.q()
    }
}

impl RadialLaw {
    pub fn new(mut kind: LawKind) -> Result<Self> {
        let (q, field) = match &kind {
            LawKind::PointMass(s) => (s.q(), s.field()),
            LawKind::FiniteMixture { atoms, weights } => {
                let first = atoms.first().ok_or_else(|| Error::InvalidLaw("mixture without atoms".into()))?;
                if atoms.len() != weights.len() {
                    return Err(Error::InvalidLaw(format!("{} atoms but {} weights", atoms.len(), weights.len())));
                }
                if atoms.iter().any(|a| a.q() != first.q()) {
                    return Err(Error::InvalidLaw("mixture atoms of different sizes".into()));
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err(Error::InvalidLaw("negative or non-finite weight".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidLaw(format!("weights sum to {total}, not 1")));
                }
                let field = atoms.iter().fold(Field::Real, |f, a| f.join(a.field()));
                (first.q(), field)
            }
            LawKind::ScalarTwoPoint { a, b, p_a } => {
                if !(*a >= 0.0 && *b >= 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::InvalidLaw("two-point atoms must be finite and nonnegative".into()));
                }
                if !(0.0..=1.0).contains(p_a) {
                    return Err(Error::InvalidLaw(format!("p_a={p_a} is not a probability")));
                }
                (1, Field::Real)
            }
            LawKind::ScalarLogNormal { log_mean, log_sd } => {
                if !(log_mean.is_finite() && log_sd.is_finite() && *log_sd >= 0.0) {
                    return Err(Error::InvalidLaw("log-normal needs finite log_mean and log_sd >= 0".into()));
                }
                (1, Field::Real)
            }
            LawKind::ScalarUniform { lo, hi } => {
                if !(*lo >= 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(Error::InvalidLaw(format!("uniform needs 0 <= lo <= hi, got [{lo}, {hi}]")));
                }
                (1, Field::Real)
            }
            LawKind::WishartRoot { scale, dof } => {
                if *dof < scale.q() {
                    return Err(Error::InvalidLaw(format!("dof {dof} below q={}", scale.q())));
                }
                (scale.q(), scale.field())
            }
        };
        if let LawKind::FiniteMixture { atoms, .. } = &mut kind {
            for a in atoms.iter_mut() {
                *a = widen_psd(a, field);
            }
        }
        let cumulative = match &kind {
            LawKind::FiniteMixture { weights, .. } => weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect(),
            _ => Vec::new(),
        };
        let scale_root = match &kind {
            LawKind::WishartRoot { scale, .. } => Some(psd_sqrt(scale)?),
            _ => None,
        };
        Ok(RadialLaw {
            kind,
            q,
            field,
            cumulative,
            scale_root,
        })
    }

    pub fn point_mass(s: PsdMatrix) -> Self {
        Self::new(LawKind::PointMass(s)).expect("point mass is always valid")
    }

    pub fn two_point(a: f64, b: f64, p_a: f64) -> Result<Self> {
        Self::new(LawKind::ScalarTwoPoint { a, b, p_a })
    }

    pub fn mixture(atoms: Vec<PsdMatrix>, weights: Vec<f64>) -> Result<Self> {
        Self::new(LawKind::FiniteMixture { atoms, weights })
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// True when every draw is the zero matrix.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            LawKind::PointMass(s) => s.is_zero(),
            LawKind::FiniteMixture { atoms, weights } => {
                atoms.iter().zip(weights).all(|(a, w)| *w == 0.0 || a.is_zero())
            }
            LawKind::ScalarTwoPoint { a, b, p_a } => (*a == 0.0 || *p_a == 0.0) && (*b == 0.0 || *p_a == 1.0),
            LawKind::ScalarUniform { hi, .. } => *hi == 0.0,
            _ => false,
        }
    }

    fn pick_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|c| u < *c)
            .unwrap_or(self.cumulative.len() - 1)
    }

    /// Draws one radial part `s ~ ν`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PsdMatrix {
        match &self.kind {
            LawKind::PointMass(s) => s.clone(),
            LawKind::FiniteMixture { atoms, .. } => atoms[self.pick_atom(rng)].clone(),
            LawKind::WishartRoot { .. } if self.q > 1 => {
                let sq = self.sample_wishart_square(rng);
                psd_sqrt(&clamp_psd(&sq, EPS_PSD).expect("Gram matrix lies in the cone"))
                    .expect("square root of a Gram matrix")
            }
            _ => {
                let x = self.sample_scalar(rng);
                PsdMatrix::from_herm_unchecked(HermitianMatrix::diag(&[x], self.field))
            }
        }
    }

    /// Draws `s ~ ν` for a law on Π_1 as a number.
    ///
    /// # Panics
    /// If `q > 1`.
    pub fn sample_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        assert_eq!(self.q, 1, "sample_scalar needs a law on Π_1");
        match &self.kind {
            LawKind::PointMass(s) => s.as_herm().first(),
            LawKind::FiniteMixture { atoms, .. } => atoms[self.pick_atom(rng)].as_herm().first(),
            LawKind::ScalarTwoPoint { a, b, p_a } => {
                if rng.random::<f64>() < *p_a {
                    *a
                } else {
                    *b
                }
            }
            LawKind::ScalarLogNormal { log_mean, log_sd } => (log_mean + log_sd * normal(rng)).exp(),
            LawKind::ScalarUniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            LawKind::WishartRoot { scale, dof } => {
                let ss: f64 = (0..*dof).map(|_| field_gaussian(self.field, rng).norm_sqr()).sum();
                (scale.as_herm().first() * ss).sqrt()
            }
        }
    }

    fn sample_wishart_square<R: Rng + ?Sized>(&self, rng: &mut R) -> HermitianMatrix {
        let LawKind::WishartRoot { dof, .. } = &self.kind else {
            unreachable!("wishart square of a non-Wishart law")
        };
        let root = self.scale_root.as_ref().expect("scale root").as_herm().as_matrix();
        let g = crate::rng::gaussian_matrix(*dof, self.q, self.field, rng);
        let gram = g.adjoint_matmul(&g);
        HermitianMatrix::new(root.matmul(&gram).matmul(root)).expect("square")
    }

    /// Moments of the law: closed forms where available, Monte Carlo for Wishart roots.
    pub fn moments(&self) -> MomentData {
        let dim = crate::linalg::herm_dim(self.q, self.field);
        let analytic = |m: [f64; 4], sigma2: PsdMatrix, cov: CovMatrix| MomentData {
            m1: m[0],
            m2: m[1],
            m3: m[2],
            m4: m[3],
            sigma2,
            sigma2_image_cov: cov,
            exactness: Exactness::Analytic,
        };
        let scalar = |m: [f64; 4]| {
            analytic(
                m,
                PsdMatrix::scalar(m[1]).expect("second moment is nonnegative"),
                CovMatrix::from_fn(1, |_, _| (m[3] - m[1] * m[1]).max(0.0)),
            )
        };
        match &self.kind {
            LawKind::PointMass(s) => {
                let r = s.frob_norm();
                let sq = s.square();
                analytic(
                    [r, r * r, r.powi(3), r.powi(4)],
                    PsdMatrix::new(sq).expect("square of a PSD matrix"),
                    CovMatrix::zeros(dim),
                )
            }
            LawKind::FiniteMixture { atoms, weights } => {
                let mut m = [0.0; 4];
                let mut sigma2 = Matrix::zeros(self.q, self.q, self.field);
                let squares: Vec<Vec<f64>> = atoms.iter().map(|a| vectorize_herm(&a.square()).values).collect();
                for (a, w) in atoms.iter().zip(weights) {
                    let r = a.frob_norm();
                    for (k, mk) in m.iter_mut().enumerate() {
                        *mk += w * r.powi(k as i32 + 1);
                    }
                    sigma2.add_scaled(a.square().as_matrix(), *w);
                }
                let mean: Vec<f64> = (0..dim)
                    .map(|i| squares.iter().zip(weights).map(|(v, w)| w * v[i]).sum())
                    .collect();
                let cov = CovMatrix::from_fn(dim, |i, j| {
                    squares
                        .iter()
                        .zip(weights)
                        .map(|(v, w)| w * (v[i] - mean[i]) * (v[j] - mean[j]))
                        .sum()
                });
                analytic(
                    m,
                    PsdMatrix::new(HermitianMatrix::new(sigma2).expect("square")).expect("mixture of squares"),
                    cov,
                )
            }
            LawKind::ScalarTwoPoint { a, b, p_a } => {
                scalar(std::array::from_fn(|k| p_a * a.powi(k as i32 + 1) + (1.0 - p_a) * b.powi(k as i32 + 1)))
            }
            LawKind::ScalarUniform { lo, hi } => scalar(std::array::from_fn(|k| {
                let k = k as i32 + 1;
                if hi == lo {
                    lo.powi(k)
                } else {
                    (hi.powi(k + 1) - lo.powi(k + 1)) / ((k + 1) as f64 * (hi - lo))
                }
            })),
            LawKind::ScalarLogNormal { log_mean, log_sd } => scalar(std::array::from_fn(|k| {
                let k = (k + 1) as f64;
                (k * log_mean + 0.5 * k * k * log_sd * log_sd).exp()
            })),
            LawKind::WishartRoot { .. } => self.monte_carlo_moments(MOMENT_MC_SAMPLES),
        }
    }

    fn monte_carlo_moments(&self, n: usize) -> MomentData {
        let mut rng = SeedSequence::new(MOMENT_MC_SEED).stream(0);
        let dim = crate::linalg::herm_dim(self.q, self.field);
        let mut sums = [0.0f64; 4];
        let mut sq_sums = [0.0f64; 4];
        let mut acc = crate::stats::CovAccumulator::new(dim);
        for _ in 0..n {
            let sq = if self.q == 1 {
                let x = self.sample_scalar(&mut rng);
                HermitianMatrix::diag(&[x * x], self.field)
            } else {
                self.sample_wishart_square(&mut rng)
            };
            let r2 = sq.trace().max(0.0);
            let r = r2.sqrt();
            let powers = [r, r2, r2 * r, r2 * r2];
            for k in 0..4 {
                sums[k] += powers[k];
                sq_sums[k] += powers[k] * powers[k];
            }
            acc.push(&vectorize_herm(&sq).values);
        }
        let nf = n as f64;
        let m: [f64; 4] = std::array::from_fn(|k| sums[k] / nf);
        let std_errors = std::array::from_fn(|k| ((sq_sums[k] / nf - m[k] * m[k]).max(0.0) / nf).sqrt());
        let sigma2 = crate::linalg::devectorize_herm(&crate::linalg::HermVector { values: acc.mean().to_vec() }, self.q, self.field)
            .expect("dimension matches");
        MomentData {
            m1: m[0],
            m2: m[1],
            m3: m[2],
            m4: m[3],
            sigma2: clamp_psd(&sigma2, EPS_PSD).expect("mean of squares lies in the cone"),
            sigma2_image_cov: acc.covariance(),
            exactness: Exactness::MonteCarlo {
                n_samples: n,
                std_errors,
            },
        }
    }
}

/// JSON description of a matrix: plain rows, separate real and imaginary rows, a
/// diagonal, or the PSD square root of a given matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diag { diag: Vec<f64> },
    RootOf { root_of: Box<MatrixSpec> },
    Complex { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_psd(&self) -> Result<PsdMatrix> {
        match self {
            MatrixSpec::RootOf { root_of } => psd_sqrt(&root_of.to_psd()?),
            _ => PsdMatrix::new(self.to_herm()?),
        }
    }

    pub fn to_herm(&self) -> Result<HermitianMatrix> {
        match self {
            MatrixSpec::Diag { diag } => {
                if diag.is_empty() {
                    return Err(Error::ShapeMismatch("empty diagonal".into()));
                }
                Ok(HermitianMatrix::diag(diag, Field::Real))
            }
            MatrixSpec::Rows(rows) => HermitianMatrix::from_real_rows(rows),
            MatrixSpec::Complex { re, im } => {
                let n = re.len();
                if im.len() != n || re.iter().chain(im).any(|r| r.len() != n) {
                    return Err(Error::ShapeMismatch("re/im parts must be square and equal in size".into()));
                }
                HermitianMatrix::new(Matrix::from_fn(n, n, Field::Complex, |i, j| C64::new(re[i][j], im[i][j])))
            }
            MatrixSpec::RootOf { .. } => Ok(self.to_psd()?.into_herm()),
        }
    }
}

/// `a` as a matrix over `field`; a real matrix is also a complex one.
fn widen_psd(a: &PsdMatrix, field: Field) -> PsdMatrix {
    if a.field() == field {
        return a.clone();
    }
    let m = Matrix::from_fn(a.q(), a.q(), field, |i, j| a.as_herm().get(i, j));
    PsdMatrix::from_herm_unchecked(HermitianMatrix::new(m).expect("widening keeps a matrix Hermitian"))
}

/// Serializable law description used by experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    PointMass { atom: MatrixSpec },
    FiniteMixture { atoms: Vec<MatrixSpec>, weights: Vec<f64> },
    ScalarTwoPoint { a: f64, b: f64, p_a: f64 },
    ScalarLogNormal { log_mean: f64, log_sd: f64 },
    ScalarUniform { lo: f64, hi: f64 },
    WishartRoot {
        scale: MatrixSpec,
        dof: usize,
        #[serde(default)]
        field: Field,
    },
}

impl LawSpec {
    pub fn build(&self) -> Result<RadialLaw> {
        let kind = match self {
            LawSpec::PointMass { atom } => LawKind::PointMass(atom.to_psd()?),
            LawSpec::FiniteMixture { atoms, weights } => LawKind::FiniteMixture {
                atoms: atoms.iter().map(MatrixSpec::to_psd).collect::<Result<_>>()?,
                weights: weights.clone(),
            },
            LawSpec::ScalarTwoPoint { a, b, p_a } => LawKind::ScalarTwoPoint {
                a: *a,
                b: *b,
                p_a: *p_a,
            },
            LawSpec::ScalarLogNormal { log_mean, log_sd } => LawKind::ScalarLogNormal {
                log_mean: *log_mean,
                log_sd: *log_sd,
            },
            LawSpec::ScalarUniform { lo, hi } => LawKind::ScalarUniform { lo: *lo, hi: *hi },
            LawSpec::WishartRoot { scale, dof, field } => {
                let s = scale.to_psd()?;
                LawKind::WishartRoot {
                    scale: widen_psd(&s, s.field().join(*field)),
                    dof: *dof,
                }
            }
        };
        RadialLaw::new(kind)
    }
}
