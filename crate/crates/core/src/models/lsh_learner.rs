//! Bucket learner over a Euclidean LSH: one stored value (or polynomial) per
//! non-empty bucket, nearest-training-point fallback for empty buckets.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist, dot, sq_dist};
use crate::lsh::{BucketKey, BucketTable, EuclideanLsh, LshFamily};
use crate::par;
use crate::targets::Dataset;

/// Iteration budget of [`calibrate_width`].
pub const CALIBRATION_ITERS: usize = 20;

#[derive(Debug, Serialize, Deserialize)]
pub struct LshLearner {
    pub family: EuclideanLsh,
    table: BucketTable,
    /// Retained training inputs with their keys, in training order.
    fallback_index: Vec<(Vec<f64>, BucketKey)>,
    #[serde(skip)]
    fallback_count: AtomicU64,
    fitted: bool,
}

impl Clone for LshLearner {
    fn clone(&self) -> Self {
        Self {
            family: self.family.clone(),
            table: self.table.clone(),
            fallback_index: self.fallback_index.clone(),
            fallback_count: AtomicU64::new(self.fallback_count()),
            fitted: self.fitted,
        }
    }
}

/// Where a prediction came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionSource {
    Bucket,
    /// Empty bucket; value taken from training point `index`'s bucket.
    Fallback { index: usize },
}

impl LshLearner {
    pub fn new(family: EuclideanLsh, degree: u32) -> Self {
        let table = BucketTable::for_family(&LshFamily::Euclidean(family.clone()), degree);
        Self {
            family,
            table,
            fallback_index: Vec::new(),
            fallback_count: AtomicU64::new(0),
            fitted: false,
        }
    }

    pub fn table(&self) -> &BucketTable {
        &self.table
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn fallback_count(&self) -> u64 {
        self.fallback_count.load(Ordering::Relaxed)
    }

    pub fn reset_fallback_count(&self) {
        self.fallback_count.store(0, Ordering::Relaxed);
    }

    pub fn fit(&mut self, train: &Dataset) -> Result<()> {
        if train.is_empty() {
            return Err(Error::EmptyInput);
        }
        let keys = par::map_slice(&train.inputs, |x| self.family.hash(x))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut table = BucketTable::for_family(&LshFamily::Euclidean(self.family.clone()), self.table.degree());
        for ((x, &y), key) in train.inputs.iter().zip(&train.targets).zip(&keys) {
            table.insert(key.clone(), x, y)?;
        }
        table.fit_polynomials()?;
        self.table = table;
        self.fallback_index = train.inputs.iter().cloned().zip(keys).collect();
        self.fitted = true;
        self.reset_fallback_count();
        Ok(())
    }

    /// Prediction plus its source; does not touch the fallback counter.
    pub fn predict_traced(&self, x: &[f64]) -> Result<(f64, PredictionSource)> {
        if !self.fitted {
            return Err(Error::Unfitted);
        }
        let key = self.family.hash(x)?;
        if let Some(p) = self.table.get(&key) {
            return Ok((self.table.eval_payload(p, x), PredictionSource::Bucket));
        }
        let (index, _) = self
            .fallback_index
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (i, sq_dist(p, x)))
            .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
        let payload = self
            .table
            .get(&self.fallback_index[index].1)
            .expect("every retained input has a trained bucket");
        Ok((self.table.eval_payload(payload, x), PredictionSource::Fallback { index }))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let (v, src) = self.predict_traced(x)?;
        if matches!(src, PredictionSource::Fallback { .. }) {
            self.fallback_count.fetch_add(1, Ordering::Relaxed);
        }
        Ok(v)
    }

    /// Predictions for many inputs, possibly in parallel.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        par::map_slice(xs, |x| self.predict(x)).into_iter().collect()
    }

    /// Floating point operations of one prediction that hits a trained bucket.
    pub fn hash_flops(&self) -> u64 {
        self.family.hash_flops()
    }
}

/// Weighted sum of per-table predictions; `weights = None` means `1/s` each.
pub fn lsh_ensemble_predict(learners: &[LshLearner], weights: Option<&[f64]>, x: &[f64]) -> Result<f64> {
    if learners.is_empty() {
        return Err(Error::EmptyInput);
    }
    let uniform;
    let w = match weights {
        Some(w) => {
            check_dim(learners.len(), w.len())?;
            w
        }
        None => {
            uniform = vec![1.0 / learners.len() as f64; learners.len()];
            &uniform
        }
    };
    let preds = learners.iter().map(|l| l.predict(x)).collect::<Result<Vec<_>>>()?;
    Ok(dot(w, &preds))
}

/// True when every bucket of `lsh` over `points` has diameter ≤ `bound`.
/// Same answer as `bucket_stats(lsh, points)?.max_diameter <= bound`, but
/// stops at the first violating pair.
pub fn buckets_within(lsh: &EuclideanLsh, points: &[Vec<f64>], bound: f64) -> bool {
    let keys = par::map_slice(points, |p| lsh.hash_unchecked(p));
    let mut groups: HashMap<BucketKey, Vec<usize>> = HashMap::new();
    for (i, k) in keys.into_iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    par::map_slice(&groups, |g| {
        g.iter()
            .enumerate()
            .all(|(a, &i)| g[a + 1..].iter().all(|&j| dist(&points[i], &points[j]) <= bound))
    })
    .into_iter()
    .all(|ok| ok)
}

/// Largest width (among those tested) whose buckets over `inputs` all have
/// diameter ≤ `target_diameter`.
///
/// The first probe is a width twice the largest projected spread of the data.
/// Failing probes halve the width until one passes, then bisection refines
/// between the last pass and the last failure. At most
/// [`CALIBRATION_ITERS`] widths are tested. The probe sequence depends only
/// on earlier outcomes, so a smaller target can never return a larger width.
pub fn calibrate_width(template: &EuclideanLsh, inputs: &[Vec<f64>], target_diameter: f64) -> Result<f64> {
    if !(target_diameter > 0.0) {
        return Err(Error::InvalidArgument("target diameter must be positive".into()));
    }
    if inputs.len() < 2 {
        return Err(Error::TooFewPoints {
            need: 2,
            got: inputs.len(),
        });
    }
    for x in inputs {
        check_dim(template.dim, x.len())?;
    }
    let spread = template
        .directions
        .iter()
        .map(|a| {
            let (lo, hi) = inputs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                let p = dot(a, x);
                (lo.min(p), hi.max(p))
            });
            hi - lo
        })
        .fold(0.0_f64, f64::max);
    let w_max = if spread > 0.0 { 2.0 * spread } else { 1.0 };
    let passes = |w: f64| -> Result<bool> { Ok(buckets_within(&template.with_width(w)?, inputs, target_diameter)) };

    let mut fail: Option<f64> = None;
    let mut best: Option<f64> = None;
    let mut w = w_max;
    for _ in 0..CALIBRATION_ITERS {
        if passes(w)? {
            best = Some(w);
            match fail {
                None => break,
                Some(hi) => w = (w + hi) / 2.0,
            }
        } else {
            fail = Some(w);
            w = match best {
                None => w / 2.0,
                Some(lo) => (lo + w) / 2.0,
            };
        }
    }
    best.ok_or_else(|| {
        Error::Unattainable(format!(
            "no width down to {:e} keeps bucket diameters ≤ {target_diameter}",
            w_max / 2f64.powi(CALIBRATION_ITERS as i32 - 1)
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::bucket_stats;
    use crate::rng::Rng64;

    fn cube_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = Rng64::new(seed);
        (0..n).map(|_| (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).collect()
    }

    #[test]
    fn one_point_one_bucket() {
        let mut l = LshLearner::new(EuclideanLsh::new(2, 4, 0.3, 1).unwrap(), 0);
        l.fit(&Dataset::new(vec![vec![0.2, 0.1]], vec![4.0]).unwrap()).unwrap();
        assert_eq!(l.table().non_empty(), 1);
        assert_eq!(l.predict(&[0.2, 0.1]).unwrap(), 4.0);
        assert_eq!(l.fallback_count(), 0);
    }

    #[test]
    fn shared_bucket_mean() {
        let mut l = LshLearner::new(EuclideanLsh::new(2, 4, 100.0, 1).unwrap(), 0);
        l.fit(&Dataset::new(vec![vec![0.0, 0.0], vec![0.01, 0.0]], vec![1.0, 3.0]).unwrap())
            .unwrap();
        assert_eq!(l.table().non_empty(), 1);
        assert_eq!(l.predict(&[0.005, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn errors() {
        let mut l = LshLearner::new(EuclideanLsh::new(2, 4, 0.3, 1).unwrap(), 0);
        assert!(matches!(l.predict(&[0.0, 0.0]), Err(Error::Unfitted)));
        assert!(matches!(l.fit(&Dataset::new(vec![], vec![]).unwrap()), Err(Error::EmptyInput)));
    }

    #[test]
    fn fallback_uses_nearest_training_bucket() {
        let fam = EuclideanLsh::new(2, 6, 0.05, 3).unwrap();
        let xs = cube_points(30, 2, 4);
        let ys: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut l = LshLearner::new(fam.clone(), 0);
        l.fit(&Dataset::new(xs.clone(), ys).unwrap()).unwrap();
        let probes = cube_points(200, 2, 5);
        let mut empty_hits = 0;
        for q in &probes {
            let key = fam.hash(q).unwrap();
            let v = l.predict(q).unwrap();
            match l.table().get(&key) {
                Some(p) => assert_eq!(v, p.constant),
                None => {
                    empty_hits += 1;
                    let nearest = (0..xs.len())
                        .min_by(|&a, &b| dist(&xs[a], q).total_cmp(&dist(&xs[b], q)))
                        .unwrap();
                    let want = l.table().get(&fam.hash(&xs[nearest]).unwrap()).unwrap().constant;
                    assert_eq!(v, want);
                }
            }
        }
        assert!(empty_hits > 0);
        assert_eq!(l.fallback_count(), empty_hits);
    }

    #[test]
    fn non_empty_at_most_points() {
        let xs = cube_points(300, 3, 1);
        let ys = vec![0.0; 300];
        let mut l = LshLearner::new(EuclideanLsh::new(3, 6, 0.2, 2).unwrap(), 0);
        l.fit(&Dataset::new(xs, ys).unwrap()).unwrap();
        assert!(l.table().non_empty() <= 300);
    }

    #[test]
    fn ensemble_of_one_and_of_copies() {
        let xs = cube_points(100, 2, 1);
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[1]).collect();
        let mut l = LshLearner::new(EuclideanLsh::new(2, 4, 0.3, 1).unwrap(), 0);
        l.fit(&Dataset::new(xs, ys).unwrap()).unwrap();
        let copies = vec![l.clone(), l.clone(), l.clone()];
        for q in cube_points(20, 2, 9) {
            let single = l.predict(&q).unwrap();
            assert_eq!(lsh_ensemble_predict(std::slice::from_ref(&l), Some(&[1.0]), &q).unwrap(), single);
            assert!((lsh_ensemble_predict(&copies, None, &q).unwrap() - single).abs() < 1e-15);
        }
        assert!(lsh_ensemble_predict(&copies, Some(&[1.0]), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn buckets_within_agrees_with_stats() {
        let xs = cube_points(400, 3, 2);
        for w in [0.05, 0.2, 0.8] {
            let fam = EuclideanLsh::new(3, 6, w, 7).unwrap();
            let stats = bucket_stats(&fam, &xs).unwrap();
            for bound in [0.1, 0.3, 1.0] {
                assert_eq!(buckets_within(&fam, &xs, bound), stats.max_diameter <= bound);
            }
        }
    }

    #[test]
    fn calibration_meets_bound() {
        let xs = cube_points(500, 2, 3);
        let fam = EuclideanLsh::new(2, 8, 1.0, 5).unwrap();
        let w = calibrate_width(&fam, &xs, 0.2).unwrap();
        let stats = bucket_stats(&fam.with_width(w).unwrap(), &xs).unwrap();
        assert!(stats.max_diameter <= 0.2);
    }

    #[test]
    fn calibration_large_target_keeps_max_width() {
        let xs = cube_points(100, 2, 3);
        let fam = EuclideanLsh::new(2, 8, 1.0, 5).unwrap();
        let w1 = calibrate_width(&fam, &xs, 100.0).unwrap();
        let w2 = calibrate_width(&fam, &xs, 1000.0).unwrap();
        assert_eq!(w1, w2);
        let stats = bucket_stats(&fam.with_width(w1).unwrap(), &xs).unwrap();
        assert!(stats.max_diameter <= 2.0 * 2f64.sqrt());
    }

    #[test]
    fn calibration_monotone_in_target() {
        let xs = cube_points(300, 2, 8);
        for seed in 0..5 {
            let fam = EuclideanLsh::new(2, 8, 1.0, seed).unwrap();
            let mut prev = f64::INFINITY;
            for delta in [1.6, 0.8, 0.4, 0.2, 0.1] {
                let w = calibrate_width(&fam, &xs, delta).unwrap();
                assert!(w <= prev);
                prev = w;
            }
        }
    }

    #[test]
    fn calibration_errors() {
        let fam = EuclideanLsh::new(2, 8, 1.0, 5).unwrap();
        assert!(calibrate_width(&fam, &[vec![0.0, 0.0]], 0.1).is_err());
        assert!(calibrate_width(&fam, &cube_points(10, 2, 1), 0.0).is_err());
    }

    #[test]
    fn learner_json_roundtrip() {
        let xs = cube_points(50, 2, 1);
        let ys: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        let mut l = LshLearner::new(EuclideanLsh::new(2, 4, 0.3, 1).unwrap(), 0);
        l.fit(&Dataset::new(xs, ys).unwrap()).unwrap();
        let back: LshLearner = serde_json::from_str(&serde_json::to_string(&l).unwrap()).unwrap();
        for q in cube_points(20, 2, 2) {
            assert_eq!(back.predict(&q).unwrap(), l.predict(&q).unwrap());
        }
    }
}
