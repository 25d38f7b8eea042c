//! Seeded random streams and the sampling laws shared by scans and tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of shards every scan is split into, independent of thread count.
pub const SHARDS: u64 = 64;

pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ shard)
}

/// Sample index range owned by `shard` when `count` samples are split.
pub fn shard_range(count: u64, shard: u64) -> std::ops::Range<u64> {
    let lo = count * shard / SHARDS;
    let hi = count * (shard + 1) / SHARDS;
    lo..hi
}

/// Runs `body(rng, len)` once per shard in parallel and returns results in shard order.
pub fn run_sharded<T, F>(seed: u64, count: u64, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    (0..SHARDS)
        .into_par_iter()
        .map(|s| {
            let mut rng = shard_rng(seed, s);
            let r = shard_range(count, s);
            body(&mut rng, r.end - r.start)
        })
        .collect()
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let t: f64 = rng.random();
    (lo.ln() + t * (hi.ln() - lo.ln())).exp()
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    0.5 * (&g + g.transpose())
}

/// `Q diag(eigs) Q^T` with a random orthogonal `Q`.
pub fn random_with_spectrum(rng: &mut impl Rng, eigs: &[f64]) -> DMatrix<f64> {
    let q = random_orthogonal(rng, eigs.len());
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(eigs));
    let m = &q * d * q.transpose();
    0.5 * (&m + m.transpose())
}

/// Law for the test direction paired with each spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum XiLaw {
    Sphere,
    Sparse,
    #[default]
    Mixed,
}

/// Sampling configuration for the spectral inequality scans.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleConfig {
    pub seed: u64,
    pub count: u64,
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_lo")]
    pub e_lo: f64,
    #[serde(default = "default_hi")]
    pub e_hi: f64,
    /// Forced log-uniform range for the largest eigenvalue.
    #[serde(default)]
    pub lambda1_range: Option<(f64, f64)>,
    #[serde(default)]
    pub xi: XiLaw,
}

fn default_lo() -> f64 {
    1e-3
}

fn default_hi() -> f64 {
    1e3
}

impl SampleConfig {
    pub fn new(seed: u64, count: u64, n: usize, k: usize) -> Self {
        Self {
            seed,
            count,
            n,
            k,
            e_lo: default_lo(),
            e_hi: default_hi(),
            lambda1_range: None,
            xi: XiLaw::Mixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Argument("sample count must be >= 1".into()));
        }
        if !(self.e_lo > 0.0 && self.e_hi >= self.e_lo) {
            return Err(Error::Argument(format!("bad eigenvalue range [{}, {}]", self.e_lo, self.e_hi)));
        }
        if let Some((a, b)) = self.lambda1_range {
            if !(a > 0.0 && b >= a) {
                return Err(Error::Argument(format!("bad lambda1 range [{a}, {b}]")));
            }
        }
        if self.n < 2 {
            return Err(Error::Argument("n must be >= 2".into()));
        }
        Ok(())
    }

    /// Draws a descending positive spectrum.
    pub fn spectrum(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.n).map(|_| log_uniform(rng, self.e_lo, self.e_hi)).collect();
        if let Some((a, b)) = self.lambda1_range {
            v[0] = log_uniform(rng, a, b);
        }
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// Draws a unit direction under the configured law.
    pub fn direction(&self, rng: &mut impl Rng) -> Vec<f64> {
        let sparse = match self.xi {
            XiLaw::Sphere => false,
            XiLaw::Sparse => true,
            XiLaw::Mixed => rng.random::<bool>(),
        };
        if !sparse {
            return unit_vector(rng, self.n);
        }
        let n = self.n;
        let mut v = vec![0.0; n];
        let i = if rng.random::<bool>() { 0 } else { rng.random_range(0..n) };
        v[i] = 1.0;
        if rng.random::<bool>() {
            let j = rng.random_range(0..n);
            v[j] += gaussian(rng) * log_uniform(rng, 1e-4, 1.0);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shards_cover_count() {
        let total: u64 = (0..SHARDS).map(|s| shard_range(1000, s).count() as u64).sum();
        assert_eq!(total, 1000);
        assert_eq!(shard_range(1000, 0).start, 0);
        assert_eq!(shard_range(1000, SHARDS - 1).end, 1000);
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = shard_rng(3, 0);
        let q = random_orthogonal(&mut rng, 5);
        let e = &q.transpose() * &q - DMatrix::identity(5, 5);
        assert!(e.amax() < 1e-13);
    }

    #[test]
    fn streams_are_reproducible() {
        let cfg = SampleConfig::new(11, 10, 4, 2);
        let a: Vec<Vec<f64>> = run_sharded(cfg.seed, 100, |rng, m| (0..m).map(|_| cfg.spectrum(rng)).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect();
        let b: Vec<Vec<f64>> = run_sharded(cfg.seed, 100, |rng, m| (0..m).map(|_| cfg.spectrum(rng)).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.windows(2).all(|w| w[0] >= w[1])));
    }
}
