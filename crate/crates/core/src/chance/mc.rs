//! Seeded Monte-Carlo estimates of Gaussian region probabilities.
//!
//! Samples are drawn in fixed-size batches. Batch `k` uses the ChaCha stream
//! `k` of the generator seeded with the caller's seed, so the tally does not
//! depend on how batches are scheduled across threads.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{check_psd, GaussianBelief2D};
use crate::error::{Error, Result};

/// Number of samples drawn from each random substream.
pub const MC_BATCH: usize = 4096;

/// Draws positions from a planar Gaussian via a symmetric square-root factor,
/// which also covers singular covariances.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSampler {
    mean: Vector2<f64>,
    factor: Matrix2<f64>,
}

impl GaussianSampler {
    pub fn new(belief: &GaussianBelief2D) -> Result<Self> {
        check_psd(&belief.cov)?;
        let eig = SymmetricEigen::new(belief.cov);
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = eig.eigenvectors * Matrix2::from_diagonal(&roots);
        Ok(Self {
            mean: belief.mean,
            factor,
        })
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vector2<f64> {
        let z = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        self.mean + self.factor * z
    }
}

/// Runs `per_sample` once for each of `n` samples and sums the per-bin hit
/// counts it records.
///
/// The result is identical whether batches run in parallel or not.
pub(crate) fn batched_tally<F>(seed: u64, n: usize, bins: usize, parallel: bool, per_sample: F) -> Vec<u64>
where
    F: Fn(&mut ChaCha8Rng, &mut [u64]) + Sync,
{
    let batches = n.div_ceil(MC_BATCH);
    let run_batch = |k: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let len = MC_BATCH.min(n - k * MC_BATCH);
        let mut hits = vec![0u64; bins];
        for _ in 0..len {
            per_sample(&mut rng, &mut hits);
        }
        hits
    };
    let add = |mut a: Vec<u64>, b: Vec<u64>| {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        a
    };
    if parallel {
        (0..batches)
            .into_par_iter()
            .map(run_batch)
            .reduce(|| vec![0u64; bins], add)
    } else {
        (0..batches).map(run_batch).fold(vec![0u64; bins], add)
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    Ok(())
}

/// Fraction of `n` samples of the source position within `radius` of `center`.
pub fn mc_disk_probability(
    belief: &GaussianBelief2D,
    center: &Vector2<f64>,
    radius: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    check_count(n)?;
    if !(radius >= 0.0) {
        return Err(Error::Domain(format!("radius must be nonnegative, got {radius}")));
    }
    let sampler = GaussianSampler::new(belief)?;
    let r2 = radius * radius;
    let hits = batched_tally(seed, n, 1, true, |rng, hits| {
        // strict so that a zero radius is an empty disk
        if (sampler.sample(rng) - center).norm_squared() < r2 {
            hits[0] += 1;
        }
    });
    Ok(hits[0] as f64 / n as f64)
}

/// Fraction of `n` samples `x` with `a^T (x - ref_point) <= b`, `a` the unit
/// vector from `ref_point` toward the belief mean.
pub fn mc_halfplane_probability(
    belief: &GaussianBelief2D,
    ref_point: &Vector2<f64>,
    b: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    check_count(n)?;
    let d = belief.mean - ref_point;
    let norm = d.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateDirection("danger source mean"));
    }
    let a = d / norm;
    let sampler = GaussianSampler::new(belief)?;
    let hits = batched_tally(seed, n, 1, true, |rng, hits| {
        if a.dot(&(sampler.sample(rng) - ref_point)) <= b {
            hits[0] += 1;
        }
    });
    Ok(hits[0] as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal_at(center: Vector2<f64>) -> GaussianBelief2D {
        GaussianBelief2D::isotropic(center, 1.0).unwrap()
    }

    #[test]
    fn zero_radius_is_empty() {
        let c = Vector2::new(1.0, -2.0);
        assert_eq!(mc_disk_probability(&std_normal_at(c), &c, 0.0, 1000, 7).unwrap(), 0.0);
    }

    #[test]
    fn wide_disk_contains_everything() {
        let c = Vector2::new(0.5, 0.5);
        let p = mc_disk_probability(&std_normal_at(c), &c, 10.0, 100_000, 1).unwrap();
        assert!((p - 1.0).abs() <= 0.01);
    }

    #[test]
    fn isotropic_disk_matches_rayleigh_cdf() {
        let c = Vector2::zeros();
        let p = mc_disk_probability(&std_normal_at(c), &c, 1.0, 100_000, 3).unwrap();
        let exact = 1.0 - (-0.5_f64).exp();
        assert!((p - exact).abs() <= 0.01, "p = {p}, exact = {exact}");
    }

    #[test]
    fn rejects_bad_input() {
        let c = Vector2::zeros();
        let bad = GaussianBelief2D {
            mean: c,
            cov: Matrix2::new(1.0, 0.0, 0.0, -1.0),
        };
        assert!(matches!(mc_disk_probability(&bad, &c, 1.0, 10, 0), Err(Error::NotPsd(_))));
        assert!(mc_disk_probability(&std_normal_at(c), &c, 1.0, 0, 0).is_err());
        assert!(mc_disk_probability(&std_normal_at(c), &c, -1.0, 10, 0).is_err());
    }

    #[test]
    fn parallel_and_sequential_tallies_agree() {
        let sampler = GaussianSampler::new(&std_normal_at(Vector2::new(0.3, 0.0))).unwrap();
        let f = |rng: &mut ChaCha8Rng, hits: &mut [u64]| {
            let x = sampler.sample(rng);
            if x.norm() < 1.0 {
                hits[0] += 1;
            }
            if x.x > 0.0 {
                hits[1] += 1;
            }
        };
        let n = 5 * MC_BATCH + 17;
        assert_eq!(batched_tally(11, n, 2, true, f), batched_tally(11, n, 2, false, f));
    }

    #[test]
    fn deterministic_given_seed() {
        let b = GaussianBelief2D::new(Vector2::new(1.0, 2.0), Matrix2::new(0.5, 0.1, 0.1, 0.3)).unwrap();
        let c = Vector2::new(1.5, 1.5);
        let p1 = mc_disk_probability(&b, &c, 0.8, 20_000, 99).unwrap();
        let p2 = mc_disk_probability(&b, &c, 0.8, 20_000, 99).unwrap();
        let p3 = mc_disk_probability(&b, &c, 0.8, 20_000, 100).unwrap();
        assert_eq!(p1, p2);
        assert_ne!(p1, p3);
    }

    #[test]
    fn singular_covariance_samples_on_a_line() {
        let b = GaussianBelief2D::new(Vector2::zeros(), Matrix2::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        let s = GaussianSampler::new(&b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert!(s.sample(&mut rng).y.abs() < 1e-12);
        }
    }
}
