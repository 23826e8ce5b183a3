//! Deterministic random streams.
//!
//! Every replicate gets its own ChaCha8 stream whose 256-bit key is the SHA-256 digest
//! of `(domain, master_seed, stream index)`. Streams never share state, so results do
//! not depend on how replicates are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::linalg::{Field, Matrix, C64};

pub type Stream = ChaCha8Rng;

const DOMAIN: &[u8] = b"conewalk/replicate-stream/v1";

/// Derives independent streams from a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedSequence {
    master: u64,
}

impl SeedSequence {
    pub fn new(master: u64) -> Self {
        SeedSequence { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream for replicate `index`.
    pub fn stream(&self, index: u64) -> Stream {
        self.stream2(index, 0)
    }

    /// Stream keyed by a two-level index, e.g. (grid point, replicate).
    pub fn stream2(&self, major: u64, minor: u64) -> Stream {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(self.master.to_le_bytes());
        h.update(major.to_le_bytes());
        h.update(minor.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(key)
    }

    /// A child sequence for a labelled sub-experiment.
    pub fn child(&self, label: u64) -> SeedSequence {
        let mut rng = self.stream2(u64::MAX, label);
        SeedSequence { master: rng.random() }
    }
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard Gaussian scalar of the field, normalized so that `E|z|² = 1`.
#[inline]
pub fn field_gaussian<R: Rng + ?Sized>(field: Field, rng: &mut R) -> C64 {
    match field {
        Field::Real => C64::new(normal(rng), 0.0),
        Field::Complex => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            C64::new(s * normal(rng), s * normal(rng))
        }
    }
}

/// Matrix of i.i.d. [`field_gaussian`] entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, field: Field, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, field, |_, _| field_gaussian(field, rng))
}
