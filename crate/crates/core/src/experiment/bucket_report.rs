use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsh::{bucket_stats, EuclideanLsh};
use crate::par;
use crate::rng::{derive_seed, Rng64};
use crate::targets::{random_orthonormal_rows, sample_slice_point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReportConfig {
    pub d: usize,
    pub k: usize,
    pub planes: usize,
    pub lsh_width: f64,
    pub samples: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialBuckets {
    pub trial: usize,
    pub non_empty: usize,
    pub max_diameter: f64,
    pub sample_size: usize,
    /// `max_diameter ≤ lsh_width`.
    pub within_width: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub config: BucketReportConfig,
    pub trials: Vec<TrialBuckets>,
    /// Fraction of trials with `within_width`.
    pub diameter_pass_fraction: f64,
    pub mean_non_empty: f64,
}

/// Points drawn uniformly from a random `k`-dimensional slice of the cube
/// (the whole cube when `k = d`).
pub fn slice_points(d: usize, k: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = Rng64::new(seed);
    if k == d {
        return Ok((0..n).map(|_| (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).collect());
    }
    let rows = random_orthonormal_rows(d, k, &mut rng)?;
    (0..n).map(|_| sample_slice_point(&rows, &mut rng)).collect()
}

/// Each trial draws a fresh slice, a fresh sample and a fresh LSH family.
pub fn bucket_report(config: &BucketReportConfig) -> Result<BucketReport> {
    if config.k == 0 || config.k > config.d {
        return Err(Error::InvalidArgument(format!("need 1 ≤ k ≤ d, got k={} d={}", config.k, config.d)));
    }
    if config.trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let trials = par::map_range(config.trials, |trial| -> Result<TrialBuckets> {
        let points = slice_points(config.d, config.k, config.samples, derive_seed(config.seed, &[trial as u64, 0]))?;
        let lsh = EuclideanLsh::new(
            config.d,
            config.planes,
            config.lsh_width,
            derive_seed(config.seed, &[trial as u64, 1]),
        )?;
        let stats = bucket_stats(&lsh, &points)?;
        Ok(TrialBuckets {
            trial,
            non_empty: stats.non_empty_count,
            max_diameter: stats.max_diameter,
            sample_size: stats.sample_size,
            within_width: stats.max_diameter <= config.lsh_width,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = trials.len() as f64;
    Ok(BucketReport {
        config: config.clone(),
        diameter_pass_fraction: trials.iter().filter(|t| t.within_width).count() as f64 / n,
        mean_non_empty: trials.iter().map(|t| t.non_empty as f64).sum::<f64>() / n,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, k: usize) -> BucketReportConfig {
        BucketReportConfig {
            d,
            k,
            planes: 8,
            lsh_width: 0.5,
            samples: 200,
            trials: 3,
            seed: 1,
        }
    }

    #[test]
    fn full_dimensional_case() {
        let r = bucket_report(&cfg(3, 3)).unwrap();
        assert_eq!(r.trials.len(), 3);
        assert!(r.trials.iter().all(|t| t.sample_size == 200 && t.non_empty <= 200));
    }

    #[test]
    fn slice_points_in_cube() {
        let pts = slice_points(8, 2, 300, 4).unwrap();
        assert!(pts.iter().flatten().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn invalid_dims() {
        assert!(bucket_report(&cfg(3, 4)).is_err());
        assert!(bucket_report(&cfg(3, 0)).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(bucket_report(&cfg(8, 2)).unwrap(), bucket_report(&cfg(8, 2)).unwrap());
    }
}
