//! Bessel convolutions on the cone Π_q, their random walks, and q = 1 characters.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::laws::RadialLaw;
use crate::linalg::{logdet_pd, sqrt_clamped, Field, HermitianMatrix, Matrix, PsdMatrix, C64};
use crate::orbit::{Checkpoint, WalkTrajectory};
use crate::rng::normal;

/// Proposals tried by one call of the contraction sampler before it gives up.
pub const STALL_WINDOW: u64 = 10_000_000;

/// Largest `r·s` accepted by [`bessel_character_1d`].
pub const CHARACTER_MAX_ARG: f64 = 50.0;

/// The index μ of the convolution together with the cone Π_q over a field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BesselParam {
    mu: f64,
    q: usize,
    field: Field,
}

impl BesselParam {
    pub fn new(mu: f64, q: usize, field: Field) -> Result<Self> {
        if q == 0 {
            return Err(Error::ShapeMismatch("q must be at least 1".into()));
        }
        let p = BesselParam { mu, q, field };
        if !mu.is_finite() || mu <= p.rho() - 1.0 {
            return Err(Error::Range(format!("mu = {mu} must exceed rho - 1 = {}", p.rho() - 1.0)));
        }
        Ok(p)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// `ρ = d(q − ½) + 1`.
    pub fn rho(&self) -> f64 {
        self.field.dim() as f64 * (self.q as f64 - 0.5) + 1.0
    }

    /// Exponent `μ − ρ` of the contraction density.
    pub fn exponent(&self) -> f64 {
        self.mu - self.rho()
    }

    /// Real dimension `d·q²` of the matrix ball.
    pub fn ball_dim(&self) -> usize {
        self.field.dim() * self.q * self.q
    }

    /// True when `μ ≥ 2ρ`, where m₂ is additive and walks track the semigroup walk.
    pub fn in_approximation_range(&self) -> bool {
        self.mu >= 2.0 * self.rho()
    }

    pub fn require_approximation_range(&self) -> Result<()> {
        if self.in_approximation_range() {
            Ok(())
        } else {
            Err(Error::UnsupportedParameter(format!(
                "mu = {} is below 2 rho = {}",
                self.mu,
                2.0 * self.rho()
            )))
        }
    }
}

/// A strict contraction: `I − v^*v` positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionMatrix {
    v: Matrix,
}

impl ContractionMatrix {
    pub fn new(v: Matrix) -> Result<Self> {
        if v.rows() != v.cols() {
            return Err(Error::ShapeMismatch("contraction must be square".into()));
        }
        let q = v.rows();
        let gap = Matrix::identity(q, v.field()).sub(&v.adjoint_matmul(&v));
        if logdet_pd(&gap).is_none() {
            return Err(Error::Range("I - v*v is not positive definite".into()));
        }
        Ok(ContractionMatrix { v })
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.v
    }

    pub fn into_matrix(self) -> Matrix {
        self.v
    }
}

/// Proposal used by the contraction sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// Centered Gaussian with density ∝ `exp(−(μ−ρ)⟨v,v⟩)`.
    Gaussian,
    /// Uniform on the Frobenius ball of radius √q, which contains the matrix ball.
    UniformBall,
    /// `|v|² ~ Beta(d/2, μ−ρ+1)` with a uniform direction; exact for q = 1.
    Beta,
}

/// Rejection sampler for the density ∝ `Δ(I − v^*v)^{μ−ρ}` on the matrix ball.
#[derive(Clone, Debug)]
pub struct ContractionSampler {
    param: BesselParam,
    a: f64,
    proposal: Proposal,
    sd: f64,
    beta: Option<Beta<f64>>,
}

impl ContractionSampler {
    pub fn new(param: BesselParam) -> Result<Self> {
        let a = param.exponent();
        let proposal = choose_proposal(&param)?;
        let beta = match proposal {
            Proposal::Beta => Some(
                Beta::new(param.field.dim() as f64 / 2.0, a + 1.0)
                    .map_err(|e| Error::numerical("contraction sampler", e.to_string()))?,
            ),
            _ => None,
        };
        Ok(ContractionSampler {
            param,
            a,
            proposal,
            sd: if a > 0.0 { (0.5 / a).sqrt() } else { 0.0 },
            beta,
        })
    }

    pub fn param(&self) -> &BesselParam {
        &self.param
    }

    pub fn proposal(&self) -> Proposal {
        self.proposal
    }

    /// One draw for q = 1, as a scalar of the field.
    pub fn sample_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<C64> {
        assert_eq!(self.param.q, 1, "sample_scalar needs q = 1");
        let d = self.param.field.dim();
        if let Some(beta) = &self.beta {
            let radius = beta.sample(rng).sqrt();
            return Ok(match self.param.field {
                Field::Real => C64::new(if rng.random::<bool>() { radius } else { -radius }, 0.0),
                Field::Complex => C64::from_polar(radius, std::f64::consts::TAU * rng.random::<f64>()),
            });
        }
        let mut c = [0.0f64; 2];
        for _ in 0..STALL_WINDOW {
            let r2 = match self.proposal {
                Proposal::Gaussian => {
                    for x in c.iter_mut().take(d) {
                        *x = self.sd * normal(rng);
                    }
                    c[..d].iter().map(|x| x * x).sum::<f64>()
                }
                _ => uniform_ball(&mut c[..d], 1.0, rng),
            };
            if r2 >= 1.0 {
                continue;
            }
            let logdet = (-r2).ln_1p();
            if self.accept(logdet, r2, rng) {
                return Ok(C64::new(c[0], if d == 2 { c[1] } else { 0.0 }));
            }
        }
        Err(self.stall())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ContractionMatrix> {
        let q = self.param.q;
        let field = self.param.field;
        if q == 1 {
            let v = self.sample_scalar(rng)?;
            return Ok(ContractionMatrix {
                v: Matrix::from_fn(1, 1, field, |_, _| v),
            });
        }
        let dim = self.param.ball_dim();
        let radius = (q as f64).sqrt();
        let mut c = vec![0.0f64; dim];
        for _ in 0..STALL_WINDOW {
            let r2 = match self.proposal {
                Proposal::Gaussian => {
                    for x in c.iter_mut() {
                        *x = self.sd * normal(rng);
                    }
                    c.iter().map(|x| x * x).sum::<f64>()
                }
                _ => uniform_ball(&mut c, radius, rng),
            };
            if r2 >= q as f64 {
                continue;
            }
            let v = coords_to_matrix(&c, q, field);
            let gap = Matrix::identity(q, field).sub(&v.adjoint_matmul(&v));
            let Some(logdet) = logdet_pd(&gap) else {
                continue;
            };
            if self.accept(logdet, r2, rng) {
                return Ok(ContractionMatrix { v });
            }
        }
        Err(self.stall())
    }

    fn accept<R: Rng + ?Sized>(&self, logdet: f64, r2: f64, rng: &mut R) -> bool {
        let log_ratio = match self.proposal {
            Proposal::Gaussian => {
                let bound = logdet + r2;
                assert!(
                    bound <= 1e-12 * (1.0 + r2),
                    "acceptance ratio above one: log det(I - v*v) + <v,v> = {bound:e}"
                );
                self.a * bound
            }
            _ => self.a * logdet,
        };
        log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
    }

    fn stall(&self) -> Error {
        Error::SamplerStall {
            mu: self.param.mu,
            q: self.param.q,
            accepted: 0,
            proposals: STALL_WINDOW,
        }
    }
}

/// Gaussian proposals for `μ − ρ ≥ ½` unless the uniform ball wastes fewer draws, which
/// happens when `μ − ρ < Γ(D/2 + 1)^{2/D} / q` (D the real dimension of the ball).
fn choose_proposal(param: &BesselParam) -> Result<Proposal> {
    let a = param.exponent();
    if a < 0.0 {
        return if param.q == 1 {
            Ok(Proposal::Beta)
        } else {
            Err(Error::UnsupportedParameter(format!(
                "mu - rho = {a} < 0 is only supported for q = 1"
            )))
        };
    }
    let dim = param.ball_dim() as f64;
    let crossover = (ln_gamma(dim / 2.0 + 1.0) * 2.0 / dim).exp() / param.q as f64;
    if a >= 0.5 && a >= crossover {
        Ok(Proposal::Gaussian)
    } else {
        Ok(Proposal::UniformBall)
    }
}

/// Fills `c` with a uniform point of the centered Euclidean ball; returns its squared norm.
fn uniform_ball<R: Rng + ?Sized>(c: &mut [f64], radius: f64, rng: &mut R) -> f64 {
    let mut n2 = 0.0;
    for x in c.iter_mut() {
        *x = normal(rng);
        n2 += *x * *x;
    }
    let r = radius * rng.random::<f64>().powf(1.0 / c.len() as f64);
    let scale = r / n2.sqrt();
    c.iter_mut().for_each(|x| *x *= scale);
    r * r
}

fn coords_to_matrix(c: &[f64], q: usize, field: Field) -> Matrix {
    match field {
        Field::Real => Matrix::from_fn(q, q, field, |i, j| C64::new(c[i * q + j], 0.0)),
        Field::Complex => Matrix::from_fn(q, q, field, |i, j| {
            let k = 2 * (i * q + j);
            C64::new(c[k], c[k + 1])
        }),
    }
}

/// Draws `v` with density ∝ `Δ(I − v^*v)^{μ−ρ}` on the matrix ball.
pub fn sample_contraction<R: Rng + ?Sized>(param: BesselParam, rng: &mut R) -> Result<ContractionMatrix> {
    ContractionSampler::new(param)?.sample(rng)
}

/// One draw of `δ_r *_μ δ_s`: `√(r² + s² + s v r + r v^* s)` with `v` a random contraction.
pub fn convolve_points<R: Rng + ?Sized>(
    r: &PsdMatrix,
    s: &PsdMatrix,
    sampler: &ContractionSampler,
    rng: &mut R,
) -> Result<PsdMatrix> {
    let param = sampler.param();
    if r.q() != param.q || s.q() != param.q {
        return Err(Error::ShapeMismatch(format!(
            "points of size {} and {} for a convolution on Π_{}",
            r.q(),
            s.q(),
            param.q
        )));
    }
    if r.field() == Field::Complex && param.field == Field::Real || s.field() == Field::Complex && param.field == Field::Real
    {
        return Err(Error::UnsupportedField("complex points for a real convolution".into()));
    }
    if r.is_zero() {
        return Ok(s.clone());
    }
    if s.is_zero() {
        return Ok(r.clone());
    }
    if param.q == 1 {
        let t = convolve_scalar(r.as_herm().first(), s.as_herm().first(), sampler.sample_scalar(rng)?);
        return PsdMatrix::diag(&[t], param.field);
    }
    let v = sampler.sample(rng)?.into_matrix();
    let rm = r.as_herm().as_matrix();
    let sm = s.as_herm().as_matrix();
    let k = sm.matmul(&v).matmul(rm);
    let m = rm.matmul(rm).add(&sm.matmul(sm)).add(&k).add(&k.adjoint());
    let m = Matrix::from_fn(param.q, param.q, param.field, |i, j| m.get(i, j));
    sqrt_clamped(&HermitianMatrix::new(m)?)
}

/// `√(r² + s² + 2rs·Re v)` for q = 1.
pub fn convolve_scalar(r: f64, s: f64, v: C64) -> f64 {
    if r == 0.0 {
        return s;
    }
    if s == 0.0 {
        return r;
    }
    (r * r + s * s + 2.0 * r * s * v.re).max(0.0).sqrt()
}

/// The semigroup convolution `r • s = √(r² + s²)`.
pub fn semigroup_convolve(r: &PsdMatrix, s: &PsdMatrix) -> Result<PsdMatrix> {
    if r.q() != s.q() {
        return Err(Error::ShapeMismatch("semigroup convolution of different sizes".into()));
    }
    if r.is_zero() {
        return Ok(s.clone());
    }
    if s.is_zero() {
        return Ok(r.clone());
    }
    sqrt_clamped(&r.square().add(&s.square()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KappaEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub proposal: Proposal,
}

/// Monte Carlo estimate of `κ_μ = ∫ Δ(I − v^*v)^{μ−ρ} dv` over the matrix ball.
pub fn kappa_mu<R: Rng + ?Sized>(param: BesselParam, n_samples: usize, rng: &mut R) -> Result<KappaEstimate> {
    if n_samples < 2 {
        return Err(Error::InsufficientData("kappa estimate needs at least 2 samples".into()));
    }
    let a = param.exponent();
    let q = param.q;
    let field = param.field;
    let dim = param.ball_dim();
    let dimf = dim as f64;
    let proposal = if a >= 0.5 {
        Proposal::Gaussian
    } else if a >= 0.0 {
        Proposal::UniformBall
    } else {
        return Err(Error::UnsupportedParameter(format!(
            "Monte Carlo kappa needs mu - rho >= 0, got {a}; use kappa_exact for q = 1"
        )));
    };
    let (log_volume, sd) = match proposal {
        Proposal::Gaussian => (dimf / 2.0 * (std::f64::consts::PI / a).ln(), (0.5 / a).sqrt()),
        _ => (dimf / 2.0 * (std::f64::consts::PI * q as f64).ln() - ln_gamma(dimf / 2.0 + 1.0), 0.0),
    };
    let radius = (q as f64).sqrt();
    let mut c = vec![0.0f64; dim];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let r2 = match proposal {
            Proposal::Gaussian => {
                c.iter_mut().for_each(|x| *x = sd * normal(rng));
                c.iter().map(|x| x * x).sum()
            }
            _ => uniform_ball(&mut c, radius, rng),
        };
        let w = if r2 >= q as f64 {
            0.0
        } else {
            let logdet = if q == 1 {
                if r2 < 1.0 {
                    Some((-r2).ln_1p())
                } else {
                    None
                }
            } else {
                let v = coords_to_matrix(&c, q, field);
                logdet_pd(&Matrix::identity(q, field).sub(&v.adjoint_matmul(&v)))
            };
            match (logdet, proposal) {
                (None, _) => 0.0,
                (Some(ld), Proposal::Gaussian) => (a * (ld + r2)).exp(),
                (Some(ld), _) => (a * ld).exp(),
            }
        };
        sum += w;
        sum_sq += w * w;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let scale = log_volume.exp();
    Ok(KappaEstimate {
        estimate: scale * mean,
        std_error: scale * (var / n).sqrt(),
        proposal,
    })
}

/// Exact `κ_μ` for q = 1: `π^{d/2} Γ(μ−ρ+1) / Γ(μ−ρ+1+d/2)`.
pub fn kappa_exact(param: BesselParam) -> Result<f64> {
    if param.q != 1 {
        return Err(Error::UnsupportedParameter("exact kappa is only available for q = 1".into()));
    }
    let a = param.exponent();
    let h = param.field.dim() as f64 / 2.0;
    Ok((h * std::f64::consts::PI.ln() + ln_gamma(a + 1.0) - ln_gamma(a + 1.0 + h)).exp())
}

/// A Bessel walk: `S_0 = 0`, `S_{n+1} ~ δ_{S_n} *_μ ν`.
#[derive(Clone, Debug)]
pub struct BesselWalkConfig {
    pub param: BesselParam,
    pub law: RadialLaw,
    pub n_steps: usize,
    pub checkpoints: Vec<usize>,
}

impl BesselWalkConfig {
    pub fn new(param: BesselParam, law: RadialLaw, n_steps: usize) -> Result<Self> {
        let cfg = BesselWalkConfig {
            param,
            law,
            n_steps,
            checkpoints: vec![n_steps],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<usize>) -> Result<Self> {
        self.checkpoints = checkpoints;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.law.q() != self.param.q {
            return Err(Error::ShapeMismatch(format!(
                "law on Π_{} for a walk on Π_{}",
                self.law.q(),
                self.param.q
            )));
        }
        if self.law.field() == Field::Complex && self.param.field == Field::Real {
            return Err(Error::UnsupportedField("complex radial law for a real walk".into()));
        }
        if self.checkpoints.is_empty()
            || self.checkpoints[0] == 0
            || self.checkpoints.windows(2).any(|w| w[0] >= w[1])
            || *self.checkpoints.last().unwrap() > self.n_steps
        {
            return Err(Error::ShapeMismatch(format!(
                "checkpoints must be strictly increasing within 1..={}",
                self.n_steps
            )));
        }
        Ok(())
    }
}

pub fn run_bessel_walk<R: Rng + ?Sized>(cfg: &BesselWalkConfig, rng: &mut R) -> Result<WalkTrajectory> {
    let sampler = ContractionSampler::new(cfg.param)?;
    run_bessel_walk_with(cfg, &sampler, rng)
}

/// [`run_bessel_walk`] with a prepared sampler for `cfg.param`.
pub fn run_bessel_walk_with<R: Rng + ?Sized>(
    cfg: &BesselWalkConfig,
    sampler: &ContractionSampler,
    rng: &mut R,
) -> Result<WalkTrajectory> {
    cfg.validate()?;
    let field = cfg.param.field;
    let mut checkpoints = Vec::with_capacity(cfg.checkpoints.len());
    let mut next = cfg.checkpoints.iter().peekable();
    if cfg.param.q == 1 {
        let mut t = 0.0f64;
        for step in 1..=cfg.n_steps {
            let s = cfg.law.sample_scalar(rng);
            t = if t == 0.0 || s == 0.0 {
                t + s
            } else {
                convolve_scalar(t, s, sampler.sample_scalar(rng)?)
            };
            if next.peek() == Some(&&step) {
                next.next();
                if !t.is_finite() {
                    return Err(Error::numerical("run_bessel_walk", "non-finite walk state"));
                }
                checkpoints.push(Checkpoint {
                    step,
                    square: HermitianMatrix::diag(&[t * t], field),
                });
            }
        }
        return Ok(WalkTrajectory { checkpoints });
    }
    let mut state = PsdMatrix::zeros(cfg.param.q, field);
    for step in 1..=cfg.n_steps {
        let s = cfg.law.sample(rng);
        state = convolve_points(&state, &s, sampler, rng)?;
        if next.peek() == Some(&&step) {
            next.next();
            checkpoints.push(Checkpoint {
                step,
                square: state.square(),
            });
        }
    }
    Ok(WalkTrajectory { checkpoints })
}

/// `j_{μ−1}(rs) = ₀F₁(μ; −(rs)²/4)`, the bounded spherical function of the q = 1
/// hypergroup evaluated at `(r, s)`.
pub fn bessel_character_1d(mu: f64, r: f64, s: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Range(format!("character needs mu > 0, got {mu}")));
    }
    if !(r >= 0.0) || !(s >= 0.0) {
        return Err(Error::Range(format!("character needs r, s >= 0, got r = {r}, s = {s}")));
    }
    let x = r * s;
    if x > CHARACTER_MAX_ARG || !x.is_finite() {
        return Err(Error::Range(format!("r*s = {x} exceeds {CHARACTER_MAX_ARG}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x <= 8.0 {
        Ok(hypergeometric_0f1(mu, -x * x / 4.0))
    } else {
        Ok(normalized_bessel_miller(mu - 1.0, x))
    }
}

fn hypergeometric_0f1(b: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..500 {
        let kf = k as f64;
        term *= z / ((b + kf) * (kf + 1.0));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && kf > z.abs().sqrt() {
            break;
        }
    }
    sum
}

/// `Γ(α+1)(2/x)^α J_α(x)` by backward recurrence, normalized with
/// `(x/2)^α = Σ_k (α+2k) Γ(α+k)/k! · J_{α+2k}(x)`.
fn normalized_bessel_miller(alpha: f64, x: f64) -> f64 {
    let start = (x + 40.0 + 12.0 * x.sqrt()).ceil() as usize;
    let start = start + start % 2;
    // f_k ∝ J_{α+k}; recurrence f_{k−1} = 2(α+k)/x · f_k − f_{k+1}
    let mut above = 0.0f64;
    let mut current = 1e-300f64;
    let mut norm = 0.0f64;
    // weights w_m for J_{α+2m}: w_0 = 1, w_m = (α+2m)·d_m with d_1 = 1, d_m = d_{m−1}(α+m−1)/m
    let half = start / 2;
    let mut d = vec![0.0f64; half + 1];
    if half >= 1 {
        d[1] = 1.0;
    }
    for m in 2..=half {
        d[m] = d[m - 1] * (alpha + m as f64 - 1.0) / m as f64;
    }
    for k in (1..=start).rev() {
        if k % 2 == 0 {
            let m = k / 2;
            norm += (alpha + 2.0 * m as f64) * d[m] * current;
        }
        let below = 2.0 * (alpha + k as f64) / x * current - above;
        above = current;
        current = below;
        if current.abs() > 1e250 {
            current *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += current;
    current / norm
}

/// Root-Lipschitz test functions evaluated on `x²`.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// `f(x) = min(tr(D x²), cap)`, root-Lipschitz with constant `‖D‖_F`.
    ClippedQuadratic { direction: HermitianMatrix, cap: f64 },
}

impl TestFunction {
    pub fn clipped_quadratic(direction: HermitianMatrix, cap: f64) -> Self {
        TestFunction::ClippedQuadratic { direction, cap }
    }

    /// Evaluates `f` at the point whose square is `x2`.
    pub fn eval_square(&self, x2: &HermitianMatrix) -> f64 {
        match self {
            TestFunction::ClippedQuadratic { direction, cap } => {
                direction.as_matrix().real_inner(x2.as_matrix()).min(*cap)
            }
        }
    }

    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            TestFunction::ClippedQuadratic { direction, .. } => direction.frob_norm(),
        }
    }

    pub fn q(&self) -> usize {
        match self {
            TestFunction::ClippedQuadratic { direction, .. } => direction.q(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapEstimate {
    /// `|E f(S_n^μ) − E f(S_n^•)|`.
    pub gap: f64,
    pub std_error: f64,
    /// Signed mean difference `E f(S_n^μ) − E f(S_n^•)`.
    pub mean_difference: f64,
}

/// Difference `f(S_n^μ) − f(S_n^•)` for one pair of walks driven by the same increments.
pub fn paired_gap_sample<R: Rng + ?Sized>(
    law: &RadialLaw,
    sampler: &ContractionSampler,
    n: usize,
    f: &TestFunction,
    rng: &mut R,
) -> Result<f64> {
    let param = sampler.param();
    let field = param.field;
    if param.q == 1 {
        let mut t = 0.0f64;
        let mut u2 = 0.0f64;
        for _ in 0..n {
            let s = law.sample_scalar(rng);
            t = if t == 0.0 || s == 0.0 {
                t + s
            } else {
                convolve_scalar(t, s, sampler.sample_scalar(rng)?)
            };
            u2 += s * s;
        }
        let a = f.eval_square(&HermitianMatrix::diag(&[t * t], field));
        let b = f.eval_square(&HermitianMatrix::diag(&[u2], field));
        return Ok(a - b);
    }
    let mut t = PsdMatrix::zeros(param.q, field);
    let mut u2 = HermitianMatrix::zeros(param.q, field);
    for _ in 0..n {
        let s = law.sample(rng);
        t = convolve_points(&t, &s, sampler, rng)?;
        u2 = u2.add(&s.square());
    }
    Ok(f.eval_square(&t.square()) - f.eval_square(&u2))
}

/// Paired Monte Carlo estimate of the gap between the Bessel walk of index μ and the
/// semigroup walk after `n` steps, one independent stream per replicate.
pub fn root_lipschitz_gap(
    law: &RadialLaw,
    param: BesselParam,
    n: usize,
    f: &TestFunction,
    reps: usize,
    seeds: &crate::rng::SeedSequence,
) -> Result<GapEstimate> {
    use rayon::prelude::*;
    param.require_approximation_range()?;
    if law.q() != param.q || f.q() != param.q {
        return Err(Error::ShapeMismatch("law, test function and parameter must share q".into()));
    }
    if reps < 2 {
        return Err(Error::InsufficientData("gap estimate needs at least 2 replicates".into()));
    }
    let sampler = ContractionSampler::new(param)?;
    let diffs = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            paired_gap_sample(law, &sampler, n, f, &mut seeds.stream(i)).map_err(|e| Error::Replicate {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = crate::stats::mean_and_se(&diffs);
    Ok(GapEstimate {
        gap: mean.abs(),
        std_error: se,
        mean_difference: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{run_group_walk, GroupEngine, GroupWalkConfig};
    use crate::rng::SeedSequence;
    use crate::stats::{ks_two_sample, mean_and_se};

    fn real(mu: f64, q: usize) -> BesselParam {
        BesselParam::new(mu, q, Field::Real).unwrap()
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, depth)
    }

    #[test]
    fn param_domain() {
        assert!(BesselParam::new(0.4, 1, Field::Real).is_err());
        assert!(BesselParam::new(0.6, 1, Field::Real).is_ok());
        let p = real(3.0, 2);
        assert_eq!(p.rho(), 2.5);
        assert!(!p.in_approximation_range());
        assert!(real(5.0, 2).in_approximation_range());
        assert_eq!(BesselParam::new(4.0, 2, Field::Complex).unwrap().rho(), 4.0);
    }

    #[test]
    fn contraction_constructor_checks_norm() {
        assert!(ContractionMatrix::new(Matrix::from_real_rows(&[vec![0.5, 0.0], vec![0.0, 0.9]]).unwrap()).is_ok());
        assert!(ContractionMatrix::new(Matrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, 0.1]]).unwrap()).is_err());
    }

    #[test]
    fn uniform_at_critical_index() {
        let s = ContractionSampler::new(real(1.5, 1)).unwrap();
        let mut rng = SeedSequence::new(61).stream(0);
        let xs: Vec<f64> = (0..100_000).map(|_| s.sample_scalar(&mut rng).unwrap().re).collect();
        let (m, se) = mean_and_se(&xs);
        assert!(m.abs() <= 3.0 * se);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (v, se) = mean_and_se(&sq);
        assert!((v - 1.0 / 3.0).abs() <= 3.0 * se);
    }

    #[test]
    fn q1_matches_beta_law() {
        for (mu, seed) in [(5.0, 62), (2.0, 63), (1.2, 64)] {
            let s = ContractionSampler::new(real(mu, 1)).unwrap();
            let mut rng = SeedSequence::new(seed).stream(0);
            let xs: Vec<f64> = (0..100_000).map(|_| s.sample_scalar(&mut rng).unwrap().re).collect();
            // CDF of v by quadrature of (1 − v²)^{μ−3/2}, in the variable θ = asin v
            let e = 2.0 * (mu - 1.5) + 1.0;
            let dens = move |t: f64| t.cos().max(0.0).powf(e);
            let h = std::f64::consts::FRAC_PI_2;
            let total = simpson(&dens, -h, h, 1e-13, 40);
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            let mut acc = 0.0;
            let mut prev = -h;
            let mut d: f64 = 0.0;
            let n = sorted.len() as f64;
            for (i, x) in sorted.iter().enumerate() {
                let t = x.clamp(-1.0, 1.0).asin();
                acc += simpson(&dens, prev, t, 1e-15, 30);
                prev = t;
                let f = acc / total;
                d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
            }
            assert!(d <= 0.006, "mu={mu}: {d}");
        }
    }

    #[test]
    fn matrix_sampler_is_symmetric_and_contractive() {
        for (param, seed) in [
            (real(3.0, 2), 65),
            (real(6.0, 2), 66),
            (BesselParam::new(5.0, 2, Field::Complex).unwrap(), 67),
        ] {
            let s = ContractionSampler::new(param).unwrap();
            let mut rng = SeedSequence::new(seed).stream(0);
            let draws: Vec<Matrix> = (0..20_000).map(|_| s.sample(&mut rng).unwrap().into_matrix()).collect();
            for (i, j) in [(0, 0), (0, 1), (1, 0)] {
                let xs: Vec<f64> = draws.iter().map(|v| v.get(i, j).re).collect();
                let (m, se) = mean_and_se(&xs);
                assert!(m.abs() <= 4.0 * se, "{param:?} ({i},{j}): {m}");
            }
            assert!(draws.iter().all(|v| ContractionMatrix::new(v.clone()).is_ok()));
        }
    }

    #[test]
    fn negative_exponent() {
        // q = 1 exact path: v² ~ Beta(1/2, μ − 1/2)
        let s = ContractionSampler::new(real(0.8, 1)).unwrap();
        assert_eq!(s.proposal(), Proposal::Beta);
        let mut rng = SeedSequence::new(68).stream(0);
        let sq: Vec<f64> = (0..50_000).map(|_| s.sample_scalar(&mut rng).unwrap().re.powi(2)).collect();
        let (m, se) = mean_and_se(&sq);
        assert!((m - 0.5 / 0.8).abs() <= 4.0 * se);
        assert!(matches!(ContractionSampler::new(real(2.2, 2)), Err(Error::UnsupportedParameter(_))));
    }

    #[test]
    fn convolution_edge_cases() {
        let sampler = ContractionSampler::new(real(4.0, 2)).unwrap();
        let mut rng = SeedSequence::new(69).stream(0);
        let s = PsdMatrix::new(HermitianMatrix::from_real_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap()).unwrap();
        let zero = PsdMatrix::zeros(2, Field::Real);
        assert_eq!(convolve_points(&zero, &s, &sampler, &mut rng).unwrap(), s);
        assert_eq!(convolve_points(&s, &zero, &sampler, &mut rng).unwrap(), s);
        let three = PsdMatrix::identity(3, Field::Real);
        assert!(convolve_points(&three, &s, &sampler, &mut rng).is_err());
    }

    #[test]
    fn unit_points_second_moment() {
        let sampler = ContractionSampler::new(real(3.0, 1)).unwrap();
        let mut rng = SeedSequence::new(70).stream(0);
        let one = PsdMatrix::scalar(1.0).unwrap();
        let t2: Vec<f64> = (0..100_000)
            .map(|_| {
                let t = convolve_points(&one, &one, &sampler, &mut rng).unwrap().as_herm().first();
                assert!((0.0..=2.0).contains(&t));
                t * t
            })
            .collect();
        let (m, se) = mean_and_se(&t2);
        assert!((m - 2.0).abs() <= 3.0 * se);
    }

    #[test]
    fn group_consistency_sphere() {
        // μ = 3/2 is the index of R³: ‖x + Y‖ for unit x and Y uniform on S².
        let sampler = ContractionSampler::new(real(1.5, 1)).unwrap();
        let mut rng = SeedSequence::new(71).stream(0);
        let one = PsdMatrix::scalar(1.0).unwrap();
        let n = 100_000;
        let a: Vec<f64> = (0..n)
            .map(|_| convolve_points(&one, &one, &sampler, &mut rng).unwrap().as_herm().first())
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|_| {
                let y = crate::orbit::sample_stiefel_frame(3, 1, Field::Real, &mut rng).unwrap();
                ((1.0 + y.get(0, 0).re).powi(2) + y.get(1, 0).re.powi(2) + y.get(2, 0).re.powi(2)).sqrt()
            })
            .collect();
        assert!(ks_two_sample(&a, &b).p_value > 1e-3);
    }

    #[test]
    fn commutativity_in_law() {
        let sampler = ContractionSampler::new(real(4.0, 2)).unwrap();
        let mut rng = SeedSequence::new(72).stream(0);
        let r = PsdMatrix::diag(&[1.0, 0.2], Field::Real).unwrap();
        let s = PsdMatrix::new(HermitianMatrix::from_real_rows(&[vec![0.7, 0.4], vec![0.4, 0.9]]).unwrap()).unwrap();
        let a: Vec<f64> = (0..20_000).map(|_| convolve_points(&r, &s, &sampler, &mut rng).unwrap().square().trace()).collect();
        let b: Vec<f64> = (0..20_000).map(|_| convolve_points(&s, &r, &sampler, &mut rng).unwrap().square().trace()).collect();
        assert!(ks_two_sample(&a, &b).p_value > 1e-3);
    }

    #[test]
    fn semigroup_examples() {
        let t = semigroup_convolve(&PsdMatrix::scalar(3.0).unwrap(), &PsdMatrix::scalar(4.0).unwrap()).unwrap();
        assert!((t.as_herm().first() - 5.0).abs() < 1e-15);
        let r = PsdMatrix::diag(&[1.0, 0.2], Field::Real).unwrap();
        let s = PsdMatrix::new(HermitianMatrix::from_real_rows(&[vec![0.7, 0.4], vec![0.4, 0.9]]).unwrap()).unwrap();
        let rs = semigroup_convolve(&r, &s).unwrap();
        let sr = semigroup_convolve(&s, &r).unwrap();
        assert_eq!(rs.as_herm().sub(sr.as_herm()).frob_norm(), 0.0);
        assert_eq!(semigroup_convolve(&PsdMatrix::zeros(2, Field::Real), &s).unwrap(), s);
    }

    #[test]
    fn kappa_values() {
        assert!((kappa_exact(real(1.5, 1)).unwrap() - 2.0).abs() < 1e-13);
        assert!((kappa_exact(real(2.5, 1)).unwrap() - 4.0 / 3.0).abs() < 1e-13);
        let mut rng = SeedSequence::new(73).stream(0);
        let k = kappa_mu(real(1.5, 1), 1000, &mut rng).unwrap();
        assert!((k.estimate - 2.0).abs() < 1e-12 && k.std_error < 1e-12);
        for mu in [2.5, 6.0] {
            let k = kappa_mu(real(mu, 1), 100_000, &mut rng).unwrap();
            let e = mu - 1.5;
            let exact = simpson(&|v: f64| (1.0 - v * v).max(0.0).powf(e), -1.0, 1.0, 1e-13, 40);
            assert!((k.estimate - exact).abs() <= 4.0 * k.std_error, "mu={mu}: {k:?} vs {exact}");
            assert!((kappa_exact(real(mu, 1)).unwrap() - exact).abs() < 1e-9);
        }
        // complex q = 1: ∫_{|v|<1} (1 − |v|²)^a = π/(a+1), here a = 2
        let c = BesselParam::new(4.0, 1, Field::Complex).unwrap();
        assert!((kappa_exact(c).unwrap() - std::f64::consts::PI / 3.0).abs() < 1e-13);
        let k = kappa_mu(c, 100_000, &mut rng).unwrap();
        assert!((k.estimate - std::f64::consts::PI / 3.0).abs() <= 4.0 * k.std_error);
    }

    #[test]
    fn bessel_walk_basics() {
        let zero = RadialLaw::point_mass(PsdMatrix::zeros(2, Field::Real));
        let cfg = BesselWalkConfig::new(real(5.0, 2), zero, 5).unwrap().with_checkpoints(vec![1, 3, 5]).unwrap();
        let t = run_bessel_walk(&cfg, &mut SeedSequence::new(74).stream(0)).unwrap();
        assert!(t.checkpoints.iter().all(|c| c.square.is_zero()));

        let one = RadialLaw::point_mass(PsdMatrix::scalar(1.0).unwrap());
        let cfg = BesselWalkConfig::new(real(3.0, 1), one, 2).unwrap();
        let xs: Vec<f64> = (0..50_000)
            .map(|i| run_bessel_walk(&cfg, &mut SeedSequence::new(75).stream(i)).unwrap().last().norm_sq())
            .collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - 2.0).abs() <= 4.0 * se);
    }

    #[test]
    fn bessel_walk_matches_group_walk() {
        // μ = p·d/2 with p = 3, d = 2 for q = 1: the walk is the radial part of a walk on C³.
        let law = RadialLaw::two_point(0.5, 1.5, 0.4).unwrap();
        let param = BesselParam::new(3.0, 1, Field::Complex).unwrap();
        let bessel = BesselWalkConfig::new(param, law.clone(), 5).unwrap();
        let group = GroupWalkConfig::new(3, Field::Complex, 5, law).unwrap().with_engine(GroupEngine::Matrix);
        let a: Vec<f64> = (0..10_000)
            .map(|i| run_bessel_walk(&bessel, &mut SeedSequence::new(76).stream(i)).unwrap().last().norm_sq())
            .collect();
        let b: Vec<f64> = (0..10_000)
            .map(|i| run_group_walk(&group, &mut SeedSequence::new(77).stream(i)).unwrap().last().norm_sq())
            .collect();
        assert!(ks_two_sample(&a, &b).p_value > 1e-3);
    }

    #[test]
    fn character_closed_forms() {
        assert_eq!(bessel_character_1d(2.7, 0.0, 3.0).unwrap(), 1.0);
        assert!(bessel_character_1d(1.5, std::f64::consts::PI, 1.0).unwrap().abs() <= 1e-10);
        for i in 1..=500 {
            let x = i as f64 * 0.1;
            let j_half = x.sin() / x;
            let j_three_half = 3.0 * (x.sin() - x * x.cos()) / x.powi(3);
            assert!((bessel_character_1d(1.5, x, 1.0).unwrap() - j_half).abs() <= 1e-10, "x={x}");
            assert!((bessel_character_1d(2.5, 1.0, x).unwrap() - j_three_half).abs() <= 1e-10, "x={x}");
            assert!((bessel_character_1d(0.5, x, 1.0).unwrap() - x.cos()).abs() <= 1e-10, "x={x}");
        }
    }

    #[test]
    fn character_integral_representation() {
        // J₀(x) = (1/π) ∫₀^π cos(x sin θ) dθ
        for x in [0.5, 3.0, 7.9, 8.1, 15.0, 33.3, 49.0] {
            let exact = simpson(&|t: f64| (x * t.sin()).cos(), 0.0, std::f64::consts::PI, 1e-14, 50) / std::f64::consts::PI;
            assert!((bessel_character_1d(1.0, x, 1.0).unwrap() - exact).abs() <= 1e-10, "x={x}");
        }
    }

    #[test]
    fn character_range() {
        assert!(matches!(bessel_character_1d(2.0, 10.0, 6.0), Err(Error::Range(_))));
        assert!(bessel_character_1d(0.0, 1.0, 1.0).is_err());
        assert!(bessel_character_1d(2.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn gap_trivial_cases() {
        let f = TestFunction::clipped_quadratic(HermitianMatrix::scalar(1.0), 10.0);
        let one = RadialLaw::point_mass(PsdMatrix::scalar(1.0).unwrap());
        let seeds = SeedSequence::new(78);
        let g = root_lipschitz_gap(&one, real(200.0, 1), 1, &f, 100, &seeds).unwrap();
        assert_eq!(g.gap, 0.0);
        let zero = RadialLaw::point_mass(PsdMatrix::zeros(1, Field::Real));
        let g = root_lipschitz_gap(&zero, real(200.0, 1), 10, &f, 100, &seeds).unwrap();
        assert_eq!(g.gap, 0.0);
        assert!(root_lipschitz_gap(&one, real(2.0, 1), 10, &f, 100, &seeds).is_err());
        assert_eq!(f.lipschitz_constant(), 1.0);
    }
}
