//! Seeded samplers for the simulation studies.
//!
//! Reproducibility contract: the generator is ChaCha8 (portable, counter
//! seeded) and Gaussian variates come from `rand_distr::StandardNormal`
//! (ziggurat). Per-distribution streams are derived from the base seed by a
//! fixed splitting constant, so distribution `j` sees the same stream
//! regardless of how many samples the others draw, and prefixes of a stream
//! are stable as `n` grows.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::measures::DiscreteMeasure;
use crate::{Error, Result};

/// Golden-ratio stream splitting for per-distribution seeds.
const STREAM_SPLIT: u64 = 0x9E37_79B9_7F4A_7C15;

/// RNG for distribution index `j` under a base seed.
pub fn stream_rng(base_seed: u64, j: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed ^ j.wrapping_mul(STREAM_SPLIT).wrapping_add(j))
}

/// Covariance Σ = (1−ρ)·I + ρ·𝟙𝟙ᵀ, i.e. unit variances with common
/// correlation ρ. Admissible for −1/(d−1) ≤ ρ ≤ 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Equicorrelated {
    pub rho: f64,
}

impl Equicorrelated {
    /// Closed-form symmetric square root `a·I + b·𝟙𝟙ᵀ`, from the
    /// eigenstructure: eigenvalue `1−ρ` (multiplicity d−1) and
    /// `1 + ρ(d−1)` (on the all-ones direction).
    pub fn sqrt_factors(&self, d: usize) -> Result<(f64, f64)> {
        if d == 0 {
            return Err(Error::EmptyInput("dimension"));
        }
        let rho = self.rho;
        let lo = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
        if !(lo..=1.0).contains(&rho) || !rho.is_finite() {
            return Err(Error::NonPsdCovariance { rho, d });
        }
        let a = (1.0 - rho).max(0.0).sqrt();
        let s = (1.0 - rho + d as f64 * rho).max(0.0).sqrt();
        let b = (s - a) / d as f64;
        Ok((a, b))
    }
}

/// Draws `n` samples of N(μ·𝟙, Σ) with Σ equicorrelated; μ is a constant
/// mean level across coordinates.
pub fn sample_gaussian(
    n: usize,
    d: usize,
    mean: f64,
    cov: Equicorrelated,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::EmptyInput("sample count"));
    }
    let (a, b) = cov.sqrt_factors(d)?;
    let mut out = Array2::zeros((n, d));
    let mut z = vec![0.0f64; d];
    for mut row in out.rows_mut() {
        let mut zsum = 0.0;
        for zk in z.iter_mut() {
            *zk = rng.sample(StandardNormal);
            zsum += *zk;
        }
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = mean + a * z[k] + b * zsum;
        }
    }
    Ok(out)
}

/// The four-distribution Gaussian design: constant mean levels per
/// distribution, shared equicorrelated covariance.
#[derive(Debug, Clone)]
pub struct GaussianDesign {
    pub d: usize,
    /// Mean level of the target followed by one level per control.
    pub mean_levels: Vec<f64>,
    pub cov: Equicorrelated,
}

impl GaussianDesign {
    /// The design used by the simulation studies: d = 10, means
    /// (10, 50, 200, −50), ρ = 0.8.
    pub fn standard() -> Self {
        Self {
            d: 10,
            mean_levels: vec![10.0, 50.0, 200.0, -50.0],
            cov: Equicorrelated { rho: 0.8 },
        }
    }

    /// Samples `n` draws per distribution; returns (target, controls).
    pub fn sample(&self, n: usize, seed: u64) -> Result<(DiscreteMeasure, Vec<DiscreteMeasure>)> {
        if self.mean_levels.len() < 2 {
            return Err(Error::EmptyInput("mean levels"));
        }
        let mut measures = Vec::with_capacity(self.mean_levels.len());
        for (j, &mu) in self.mean_levels.iter().enumerate() {
            let mut rng = stream_rng(seed, j as u64);
            let samples = sample_gaussian(n, self.d, mu, self.cov, &mut rng)?;
            measures.push(DiscreteMeasure::from_samples(samples)?);
        }
        let target = measures.remove(0);
        Ok((target, measures))
    }
}

/// Gaussian-mixture design: each distribution mixes the base Gaussians with
/// its own component weights.
#[derive(Debug, Clone)]
pub struct MixtureDesign {
    pub d: usize,
    /// Mean level of each base Gaussian component.
    pub component_levels: Vec<f64>,
    pub cov: Equicorrelated,
    /// Component weights, one row per distribution (target first); rows
    /// must be simplex vectors over the components.
    pub mixtures: Vec<Vec<f64>>,
}

impl MixtureDesign {
    /// The mixture design of the simulation appendix: d = 20, components at
    /// (10, 50, 200, −50) with ρ = 0.8, and rows
    /// Y₀ = (0.3, 0.6, 0.1, 0), Y₁ = (0.8, 0.1, 0.1, 0),
    /// Y₂ = (0, 0.2, 0.7, 0.1), Y₃ = (0.2, 0, 0.2, 0.6).
    pub fn standard() -> Self {
        Self {
            d: 20,
            component_levels: vec![10.0, 50.0, 200.0, -50.0],
            cov: Equicorrelated { rho: 0.8 },
            mixtures: vec![
                vec![0.3, 0.6, 0.1, 0.0],
                vec![0.8, 0.1, 0.1, 0.0],
                vec![0.0, 0.2, 0.7, 0.1],
                vec![0.2, 0.0, 0.2, 0.6],
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mixtures.len() < 2 {
            return Err(Error::EmptyInput("mixture rows"));
        }
        for row in &self.mixtures {
            if row.len() != self.component_levels.len() {
                return Err(Error::BadMixWeights(format!(
                    "{} coefficients for {} components",
                    row.len(),
                    self.component_levels.len()
                )));
            }
            let mut sum = 0.0;
            for &c in row {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::BadMixWeights(format!("coefficient {c}")));
                }
                sum += c;
            }
            if (sum - 1.0).abs() > crate::WEIGHT_TOL {
                return Err(Error::BadMixWeights(format!("row sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Samples `n` draws per distribution: a categorical component label
    /// followed by the component Gaussian.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(DiscreteMeasure, Vec<DiscreteMeasure>)> {
        self.validate()?;
        let (a, b) = self.cov.sqrt_factors(self.d)?;
        let mut measures = Vec::with_capacity(self.mixtures.len());
        for (j, coefs) in self.mixtures.iter().enumerate() {
            let mut rng = stream_rng(seed, j as u64);
            let mut out = Array2::zeros((n, self.d));
            let mut z = vec![0.0f64; self.d];
            for mut row in out.rows_mut() {
                let u: f64 = rng.random_range(0.0..1.0);
                let mut acc = 0.0;
                let mut comp = coefs.len() - 1;
                for (c, &w) in coefs.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        comp = c;
                        break;
                    }
                }
                let mean = self.component_levels[comp];
                let mut zsum = 0.0;
                for zk in z.iter_mut() {
                    *zk = rng.sample(StandardNormal);
                    zsum += *zk;
                }
                for (k, slot) in row.iter_mut().enumerate() {
                    *slot = mean + a * z[k] + b * zsum;
                }
            }
            measures.push(DiscreteMeasure::from_samples(out)?);
        }
        let target = measures.remove(0);
        Ok((target, measures))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sqrt_factors_reproduce_covariance() {
        for d in [1usize, 2, 10, 20] {
            for rho in [0.0, 0.3, 0.8] {
                let cov = Equicorrelated { rho };
                let (a, b) = cov.sqrt_factors(d).unwrap();
                // (aI + b11ᵀ)² = a²I + (2ab + d b²)11ᵀ must equal
                // (1−ρ)I + ρ11ᵀ.
                assert_abs_diff_eq!(a * a, 1.0 - rho, epsilon = 1e-12);
                assert_abs_diff_eq!(
                    2.0 * a * b + d as f64 * b * b,
                    rho,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn invalid_rho_rejected() {
        let cov = Equicorrelated { rho: -0.5 };
        assert!(matches!(
            cov.sqrt_factors(10),
            Err(Error::NonPsdCovariance { .. })
        ));
        let cov = Equicorrelated { rho: 1.5 };
        assert!(cov.sqrt_factors(3).is_err());
    }

    #[test]
    fn gaussian_sample_moments() {
        let mut rng = stream_rng(42, 0);
        let n = 20_000;
        let cov = Equicorrelated { rho: 0.8 };
        let x = sample_gaussian(n, 4, 10.0, cov, &mut rng).unwrap();
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        for &m in mean.iter() {
            assert!((m - 10.0).abs() < 0.05, "mean {m}");
        }
        // Sample covariance of coordinates 0 and 1 near 0.8; variance near 1.
        let c0 = x.column(0);
        let c1 = x.column(1);
        let m0 = mean[0];
        let m1 = mean[1];
        let mut var0 = 0.0;
        let mut cov01 = 0.0;
        for i in 0..n {
            var0 += (c0[i] - m0) * (c0[i] - m0);
            cov01 += (c0[i] - m0) * (c1[i] - m1);
        }
        var0 /= n as f64 - 1.0;
        cov01 /= n as f64 - 1.0;
        assert!((var0 - 1.0).abs() < 0.06, "var {var0}");
        assert!((cov01 - 0.8).abs() < 0.06, "cov {cov01}");
    }

    #[test]
    fn streams_are_prefix_stable_and_independent() {
        let d = GaussianDesign::standard();
        let (t1, c1) = d.sample(100, 7).unwrap();
        let (t2, c2) = d.sample(200, 7).unwrap();
        // The first 100 rows of the larger draw equal the smaller draw.
        for i in 0..100 {
            for k in 0..d.d {
                assert_eq!(t1.support()[[i, k]], t2.support()[[i, k]]);
                assert_eq!(c1[0].support()[[i, k]], c2[0].support()[[i, k]]);
            }
        }
    }

    #[test]
    fn mixture_rows_validated() {
        let mut m = MixtureDesign::standard();
        m.mixtures[1] = vec![0.5, 0.0, 0.0, 0.0];
        assert!(matches!(m.validate(), Err(Error::BadMixWeights(_))));
    }

    #[test]
    fn mixture_target_mean_level() {
        // Y₀ mixes components (10, 50, 200) with (0.3, 0.6, 0.1):
        // mean level 0.3·10 + 0.6·50 + 0.1·200 = 53.
        let design = MixtureDesign::standard();
        let (target, _) = design.sample(20_000, 3).unwrap();
        let mean = target.mean();
        for &m in mean.iter() {
            assert!((m - 53.0).abs() < 1.5, "mean {m}");
        }
    }
}
