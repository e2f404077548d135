//! Path-keyed deterministic random streams.
//!
//! Every stream is derived from a root seed plus a label path such as
//! `["round", 3, "client", 17]`. The path is hashed into a ChaCha key, so
//! sibling streams are independent and the order in which they are created
//! has no effect on what they produce.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// One component of a derivation path.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Name(String),
    Index(u64),
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Name(s.to_owned())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label::Name(s)
    }
}

impl From<u64> for Label {
    fn from(i: u64) -> Self {
        Label::Index(i)
    }
}

impl From<usize> for Label {
    fn from(i: usize) -> Self {
        Label::Index(i as u64)
    }
}

impl From<u32> for Label {
    fn from(i: u32) -> Self {
        Label::Index(u64::from(i))
    }
}

impl From<i32> for Label {
    fn from(i: i32) -> Self {
        Label::Index(i as u64)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Name(s) => f.write_str(s),
            Label::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Builds a `Vec<Label>` from heterogeneous literals.
#[macro_export]
macro_rules! path {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::numkernel::Label::from($x)),*]
    };
}

/// Single-owner generator bound to `(seed, path)`.
#[derive(Clone)]
pub struct Rng {
    seed: u64,
    path: Vec<Label>,
    inner: ChaCha8Rng,
}

impl fmt::Debug for Rng {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rng({}", self.seed)?;
        for l in &self.path {
            write!(f, "/{l}")?;
        }
        f.write_str(")")
    }
}

fn key(seed: u64, path: &[Label]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"fedlab.rng.v1");
    h.update(seed.to_le_bytes());
    for label in path {
        match label {
            Label::Name(s) => {
                h.update([0u8]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
            Label::Index(i) => {
                h.update([1u8]);
                h.update(i.to_le_bytes());
            }
        }
    }
    h.finalize().into()
}

impl Rng {
    pub fn derive(seed: u64, path: &[Label]) -> Self {
        Self {
            seed,
            path: path.to_vec(),
            inner: ChaCha8Rng::from_seed(key(seed, path)),
        }
    }

    /// Fresh stream at `self.path ++ more`. Independent of how much of
    /// `self` has been consumed.
    pub fn child(&self, more: &[Label]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(more);
        Self::derive(self.seed, &path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[Label] {
        &self.path
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn sample<T, D: Distribution<T>>(&mut self, dist: &D) -> T {
        dist.sample(&mut self.inner)
    }

    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            let n = super::mat::norm(&v);
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Shorthand for [`Rng::derive`].
pub fn rng_derive(seed: u64, path: &[Label]) -> Rng {
    Rng::derive(seed, path)
}
