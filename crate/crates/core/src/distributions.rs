//! Seeded degree draws and shuffling.
//!
//! Every random decision in the crate flows through a [`RandomStream`], a
//! ChaCha8 generator seeded from a 64-bit value. Child streams are derived
//! from `(parent seed, index)` with a splitmix64 mix, so work split across
//! constraints or queries stays reproducible regardless of scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::DegreeDistribution;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DistributionError {
    #[error("cannot draw from a non-specified distribution")]
    NonSpecified,
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child of a stream seeded with `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `index`. Depends only on this stream's
    /// seed, not on how much of it has been consumed.
    pub fn child(&self, index: u64) -> RandomStream {
        RandomStream::new(child_seed(self.seed, index))
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Bounded Zipf law over `1..=k_max`, sampled by inverting a cumulative table.
#[derive(Debug, Clone)]
pub struct ZipfTable {
    cumulative: Vec<f64>,
}

impl ZipfTable {
    pub fn new(s: f64, k_max: u64) -> Self {
        let k_max = k_max.max(1);
        let mut cumulative = Vec::with_capacity(k_max as usize);
        let mut acc = 0.0;
        for k in 1..=k_max {
            acc += (k as f64).powf(-s);
            cumulative.push(acc);
        }
        ZipfTable { cumulative }
    }

    pub fn k_max(&self) -> u64 {
        self.cumulative.len() as u64
    }

    /// Exact probability of rank `k`.
    pub fn probability(&self, k: u64) -> f64 {
        if k == 0 || k > self.k_max() {
            return 0.0;
        }
        let i = (k - 1) as usize;
        let mass = if i == 0 { self.cumulative[0] } else { self.cumulative[i] - self.cumulative[i - 1] };
        mass / self.total()
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().expect("table is never empty")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = rng.random::<f64>() * self.total();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        (idx.min(self.cumulative.len() - 1) + 1) as u64
    }
}

/// A distribution prepared for repeated draws.
#[derive(Debug, Clone)]
pub enum DegreeSampler {
    Uniform { min: u64, max: u64 },
    Gaussian(Normal<f64>),
    Zipfian(ZipfTable),
}

impl DegreeSampler {
    /// `population` is the default Zipfian support cap, used unless the
    /// distribution carries its own.
    pub fn new(dist: &DegreeDistribution, population: u64) -> Result<Self, DistributionError> {
        match *dist {
            DegreeDistribution::Uniform { min, max } => Ok(DegreeSampler::Uniform { min, max }),
            DegreeDistribution::Gaussian { mu, sigma } => Ok(DegreeSampler::Gaussian(
                Normal::new(mu, sigma).expect("sigma validated as finite and non-negative"),
            )),
            DegreeDistribution::Zipfian { s, max } => {
                Ok(DegreeSampler::Zipfian(ZipfTable::new(s, max.unwrap_or(population).max(1))))
            }
            DegreeDistribution::NonSpecified => Err(DistributionError::NonSpecified),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            DegreeSampler::Uniform { min, max } => rng.random_range(*min..=*max),
            DegreeSampler::Gaussian(normal) => {
                let x = normal.sample(rng).round();
                if x > 0.0 {
                    x as u64
                } else {
                    0
                }
            }
            DegreeSampler::Zipfian(table) => table.sample(rng),
        }
    }
}

/// Single draw. Builds the sampler on every call; use [`DegreeSampler`] for
/// repeated draws from one distribution.
pub fn draw(dist: &DegreeDistribution, population: u64, rng: &mut RandomStream) -> Result<u64, DistributionError> {
    Ok(DegreeSampler::new(dist, population)?.sample(rng))
}

pub fn shuffle<T>(v: &mut [T], rng: &mut RandomStream) {
    v.shuffle(rng);
}
