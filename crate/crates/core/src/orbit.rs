//! Random walks on p×q matrices driven by Haar-random frames, observed through their
//! radial part `φ(S) = (S^*S)^{1/2}`.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::RadialLaw;
use crate::linalg::{inv_sqrt_pd, sqrt_clamped, Field, HermitianMatrix, Matrix, PsdMatrix, RectMatrix, C64};
use crate::rng::{field_gaussian, gaussian_matrix, normal};

/// Largest `p` for which [`GroupEngine::Auto`] materializes the full p×q walk.
pub const AUTO_MATRIX_MAX_P: usize = 32;

/// How a group walk is simulated. Both engines produce the same law for `φ(S_n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupEngine {
    #[default]
    Auto,
    /// Keep `S_n` itself and add `Q_k s_k` with a fresh Haar frame each step.
    Matrix,
    /// Keep only `r = φ(S_n)`; each step draws the q×q block of the frame that the
    /// next radial part depends on.
    Projected,
}

impl GroupEngine {
    pub fn resolve(self, p: usize) -> GroupEngine {
        match self {
            GroupEngine::Auto if p <= AUTO_MATRIX_MAX_P => GroupEngine::Matrix,
            GroupEngine::Auto => GroupEngine::Projected,
            e => e,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroupWalkConfig {
    pub p: usize,
    pub field: Field,
    pub n_steps: usize,
    pub law: RadialLaw,
    /// Steps at which `φ(S_n)²` is recorded, ascending, each in `1..=n_steps`.
    pub checkpoints: Vec<usize>,
    pub engine: GroupEngine,
}

impl GroupWalkConfig {
    pub fn new(p: usize, field: Field, n_steps: usize, law: RadialLaw) -> Result<Self> {
        let cfg = GroupWalkConfig {
            p,
            field,
            n_steps,
            law,
            checkpoints: vec![n_steps],
            engine: GroupEngine::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<usize>) -> Result<Self> {
        self.checkpoints = checkpoints;
        self.validate()?;
        Ok(self)
    }

    pub fn with_engine(mut self, engine: GroupEngine) -> Self {
        self.engine = engine;
        self
    }

    pub fn q(&self) -> usize {
        self.law.q()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q();
        if self.p < q {
            return Err(Error::ShapeMismatch(format!("walk needs p >= q, got p = {} and q = {q}", self.p)));
        }
        if self.law.field() == Field::Complex && self.field == Field::Real {
            return Err(Error::UnsupportedField("complex radial law for a real walk".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::ShapeMismatch("at least one checkpoint is required".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ShapeMismatch("checkpoints must be strictly increasing".into()));
        }
        if self.checkpoints[0] == 0 || *self.checkpoints.last().unwrap() > self.n_steps {
            return Err(Error::ShapeMismatch(format!("checkpoints must lie in 1..={}", self.n_steps)));
        }
        Ok(())
    }
}

/// `φ(S_n)²` at one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub square: HermitianMatrix,
}

impl Checkpoint {
    /// `‖S_n‖² = tr φ(S_n)²`.
    pub fn norm_sq(&self) -> f64 {
        self.square.trace()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkTrajectory {
    pub checkpoints: Vec<Checkpoint>,
}

impl WalkTrajectory {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trajectory has a checkpoint")
    }
}

/// A Haar-distributed p×q matrix with orthonormal columns.
pub fn sample_stiefel_frame<R: Rng + ?Sized>(p: usize, q: usize, field: Field, rng: &mut R) -> Result<RectMatrix> {
    if q > p || q == 0 {
        return Err(Error::ShapeMismatch(format!("Stiefel frame needs 1 <= q <= p, got p = {p}, q = {q}")));
    }
    let mut g = gaussian_matrix(p, q, field, rng);
    orthonormalize_columns(&mut g)?;
    Ok(g)
}

/// Gram–Schmidt applied twice; the columns come out with a positive R diagonal, which
/// makes the result Haar distributed when the input is Gaussian.
fn orthonormalize_columns(m: &mut Matrix) -> Result<()> {
    let (p, q) = (m.rows(), m.cols());
    for j in 0..q {
        for _ in 0..2 {
            for k in 0..j {
                let mut proj = C64::new(0.0, 0.0);
                for i in 0..p {
                    proj += m.get(i, k).conj() * m.get(i, j);
                }
                for i in 0..p {
                    let v = m.get(i, j) - proj * m.get(i, k);
                    m.set(i, j, v);
                }
            }
        }
        let norm = (0..p).map(|i| m.get(i, j).norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::numerical("sample_stiefel_frame", "rank-deficient Gaussian draw"));
        }
        for i in 0..p {
            let v = m.get(i, j) / norm;
            m.set(i, j, v);
        }
    }
    Ok(())
}

/// `Q·s` with `Q` Haar on the Stiefel manifold and `s ~ ν`.
pub fn sample_radial_matrix<R: Rng + ?Sized>(p: usize, law: &RadialLaw, field: Field, rng: &mut R) -> Result<RectMatrix> {
    let s = law.sample(rng);
    let frame = sample_stiefel_frame(p, law.q(), field, rng)?;
    Ok(frame.matmul(s.as_herm().as_matrix()))
}

/// `G^*G / p` with `G` a p×q standard Gaussian matrix.
pub fn wishart_sample<R: Rng + ?Sized>(p: usize, q: usize, field: Field, rng: &mut R) -> PsdMatrix {
    let g = gaussian_matrix(p, q, field, rng);
    let w = HermitianMatrix::new(g.adjoint_matmul(&g).scale(1.0 / p as f64)).expect("square");
    PsdMatrix::new(w).expect("Gram matrix lies in the cone")
}

/// Runs one group walk and records `φ(S_n)²` at the configured checkpoints.
pub fn run_group_walk<R: Rng + ?Sized>(cfg: &GroupWalkConfig, rng: &mut R) -> Result<WalkTrajectory> {
    cfg.validate()?;
    let field = cfg.field;
    let engine = cfg.engine.resolve(cfg.p);
    if cfg.q() == 1 {
        let norms = scalar_walk(cfg, engine, rng)?;
        let checkpoints = cfg
            .checkpoints
            .iter()
            .zip(norms)
            .map(|(&step, x)| Checkpoint {
                step,
                square: HermitianMatrix::diag(&[x], field),
            })
            .collect();
        return Ok(WalkTrajectory { checkpoints });
    }
    match engine {
        GroupEngine::Projected => projected_walk(cfg, rng),
        _ => matrix_walk(cfg, rng),
    }
}

/// `‖S_n‖²` at each checkpoint of a walk on Π_1.
pub fn run_group_walk_norms<R: Rng + ?Sized>(cfg: &GroupWalkConfig, rng: &mut R) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.q() != 1 {
        return Err(Error::ShapeMismatch("norm-only walks need q = 1".into()));
    }
    scalar_walk(cfg, cfg.engine.resolve(cfg.p), rng)
}

fn scalar_walk<R: Rng + ?Sized>(cfg: &GroupWalkConfig, engine: GroupEngine, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cfg.checkpoints.len());
    let mut next = cfg.checkpoints.iter().peekable();
    match engine {
        GroupEngine::Projected => {
            // Over C, C^p is R^{2p} and the walk is the real walk in dimension 2p.
            let dim = cfg.field.dim() * cfg.p;
            let chi = if dim > 1 {
                Some(ChiSquared::new((dim - 1) as f64).expect("positive degrees of freedom"))
            } else {
                None
            };
            let mut r2 = 0.0f64;
            for step in 1..=cfg.n_steps {
                let s = cfg.law.sample_scalar(rng);
                let z = normal(rng);
                let rest = chi.as_ref().map_or(0.0, |c| c.sample(rng));
                let u = z / (z * z + rest).sqrt();
                r2 = (r2 + s * s + 2.0 * r2.sqrt() * s * u).max(0.0);
                if next.peek() == Some(&&step) {
                    next.next();
                    out.push(r2);
                }
            }
            if !r2.is_finite() {
                return Err(Error::numerical("run_group_walk", "non-finite walk state"));
            }
        }
        _ => {
            let n = cfg.field.dim() * cfg.p;
            let mut state = vec![0.0f64; n];
            let mut g = vec![0.0f64; n];
            for step in 1..=cfg.n_steps {
                let s = cfg.law.sample_scalar(rng);
                let mut norm2 = 0.0;
                for x in g.iter_mut() {
                    *x = normal(rng);
                    norm2 += *x * *x;
                }
                let c = s / norm2.sqrt();
                for (x, gi) in state.iter_mut().zip(&g) {
                    *x += c * gi;
                }
                if next.peek() == Some(&&step) {
                    next.next();
                    out.push(state.iter().map(|x| x * x).sum());
                }
            }
            if state.iter().any(|x| !x.is_finite()) {
                return Err(Error::numerical("run_group_walk", "non-finite walk state"));
            }
        }
    }
    Ok(out)
}

fn matrix_walk<R: Rng + ?Sized>(cfg: &GroupWalkConfig, rng: &mut R) -> Result<WalkTrajectory> {
    let q = cfg.q();
    let mut state = Matrix::zeros(cfg.p, q, cfg.field);
    let mut checkpoints = Vec::with_capacity(cfg.checkpoints.len());
    let mut next = cfg.checkpoints.iter().peekable();
    for step in 1..=cfg.n_steps {
        let x = sample_radial_matrix(cfg.p, &cfg.law, cfg.field, rng)?;
        state = state.add(&x);
        if next.peek() == Some(&&step) {
            next.next();
            if !state.is_finite() {
                return Err(Error::numerical("run_group_walk", "non-finite walk state"));
            }
            checkpoints.push(Checkpoint {
                step,
                square: HermitianMatrix::new(state.adjoint_matmul(&state))?,
            });
        }
    }
    Ok(WalkTrajectory { checkpoints })
}

fn projected_walk<R: Rng + ?Sized>(cfg: &GroupWalkConfig, rng: &mut R) -> Result<WalkTrajectory> {
    let q = cfg.q();
    let field = cfg.field;
    let mut r = PsdMatrix::zeros(q, field);
    let mut checkpoints = Vec::with_capacity(cfg.checkpoints.len());
    let mut next = cfg.checkpoints.iter().peekable();
    for step in 1..=cfg.n_steps {
        let s = widen(cfg.law.sample(rng).into_herm().into_matrix(), field);
        let w = haar_top_block(cfg.p, q, field, rng)?;
        let rm = r.as_herm().as_matrix();
        let k = rm.matmul(&w).matmul(&s);
        let m = rm.matmul(rm).add(&s.matmul(&s)).add(&k).add(&k.adjoint());
        let sq = HermitianMatrix::new(m)?;
        if next.peek() == Some(&&step) {
            next.next();
            if !sq.as_matrix().is_finite() {
                return Err(Error::numerical("run_group_walk", "non-finite walk state"));
            }
            checkpoints.push(Checkpoint { step, square: sq.clone() });
        }
        if step < cfg.n_steps {
            r = sqrt_clamped(&sq)?;
        }
    }
    Ok(WalkTrajectory { checkpoints })
}

fn widen(m: Matrix, field: Field) -> Matrix {
    if m.field() == field {
        m
    } else {
        Matrix::from_fn(m.rows(), m.cols(), field, |i, j| m.get(i, j))
    }
}

/// Top q×q block `Q_top` of a Haar p×q frame, generated as `G_top (G^*G)^{-1/2}` where
/// the Gram matrix of the remaining `p − q` rows is drawn directly as a Wishart matrix.
fn haar_top_block<R: Rng + ?Sized>(p: usize, q: usize, field: Field, rng: &mut R) -> Result<Matrix> {
    let top = gaussian_matrix(q, q, field, rng);
    let m = p - q;
    let mut gram = top.adjoint_matmul(&top);
    if m > 0 {
        let rest = if m < q {
            let g = gaussian_matrix(m, q, field, rng);
            g.adjoint_matmul(&g)
        } else {
            let l = bartlett_factor(m, q, field, rng)?;
            l.matmul(&l.adjoint())
        };
        gram = gram.add(&rest);
    }
    let inv = inv_sqrt_pd(&HermitianMatrix::new(gram)?)?;
    Ok(top.matmul(inv.as_matrix()))
}

/// Lower-triangular `L` with `L L^*` distributed as the Gram matrix of an m×q standard
/// Gaussian matrix (`m ≥ q`).
fn bartlett_factor<R: Rng + ?Sized>(m: usize, q: usize, field: Field, rng: &mut R) -> Result<Matrix> {
    let d = field.dim() as f64;
    let mut l = Matrix::zeros(q, q, field);
    for i in 0..q {
        let shape = d * (m - i) as f64 / 2.0;
        let g = Gamma::new(shape, 2.0 / d).map_err(|e| Error::numerical("bartlett_factor", e.to_string()))?;
        l.set(i, i, C64::new(g.sample(rng).sqrt(), 0.0));
        for j in 0..i {
            l.set(i, j, field_gaussian(field, rng));
        }
    }
    Ok(l)
}
