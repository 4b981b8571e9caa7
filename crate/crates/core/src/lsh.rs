//! Hash families, bucket keys and bucket tables.
//!
//! Two families are provided:
//!
//! * [`EuclideanLsh`]: the lattice family `h_i(x) = ⌊(a_iᵀx + b_i) / w⌋` with
//!   standard-normal directions `a_i` and offsets `b_i` uniform on `[0, w)`.
//! * [`SignLsh`]: hyperplane sign patterns `sign(a_iᵀx)`, with `0 ↦ +1`.
//!
//! A [`BucketTable`] accumulates training pairs per key and stores either the
//! mean target (degree 0) or a ridge least-squares polynomial fit centred on
//! the bucket centroid (degree ≥ 1).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist, dot, ridge_least_squares};
use crate::monomial::{eval_monomial, multi_indices};
use crate::par;
use crate::rng::Rng64;

/// Ridge applied to per-bucket polynomial fits.
pub const BUCKET_RIDGE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BucketKey(pub Vec<i64>);

impl BucketKey {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 64-bit digest of the key, stable across runs.
    pub fn digest(&self) -> u64 {
        self.0
            .iter()
            .fold(0x243F_6A88_85A3_08D3, |acc, &c| crate::rng::mix64(acc ^ c as u64))
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuclideanLsh {
    pub dim: usize,
    pub num_planes: usize,
    pub width: f64,
    pub directions: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub seed: u64,
}

impl EuclideanLsh {
    /// Draws directions first (row-major normals), then one uniform per
    /// offset scaled by `width`. Directions and the uniforms behind the
    /// offsets do not depend on `width`, so [`Self::with_width`] rescales the
    /// same underlying draw.
    pub fn new(dim: usize, num_planes: usize, width: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()));
        }
        if num_planes == 0 {
            return Err(Error::InvalidArgument("num_planes must be positive".into()));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!("width must be positive, got {width}")));
        }
        let mut rng = Rng64::new(seed);
        let directions = (0..num_planes).map(|_| rng.normal_vec(dim)).collect();
        let offsets = (0..num_planes)
            .map(|_| {
                let b = rng.uniform() * width;
                // Guard against rounding u·w up to w.
                if b >= width {
                    0.0
                } else {
                    b
                }
            })
            .collect();
        Ok(Self {
            dim,
            num_planes,
            width,
            directions,
            offsets,
            seed,
        })
    }

    pub fn with_width(&self, width: f64) -> Result<Self> {
        Self::new(self.dim, self.num_planes, width, self.seed)
    }

    pub fn hash(&self, x: &[f64]) -> Result<BucketKey> {
        check_dim(self.dim, x.len())?;
        check_finite(x)?;
        Ok(self.hash_unchecked(x))
    }

    pub(crate) fn hash_unchecked(&self, x: &[f64]) -> BucketKey {
        BucketKey(
            self.directions
                .iter()
                .zip(&self.offsets)
                .map(|(a, b)| ((dot(a, x) + b) / self.width).floor() as i64)
                .collect(),
        )
    }

    /// Short identifier recorded in bucket tables built from this family.
    pub fn family_id(&self) -> String {
        format!(
            "euclidean(dim={},planes={},width={},seed={})",
            self.dim, self.num_planes, self.width, self.seed
        )
    }

    /// Floating point operations for one hash: a dot product plus offset per plane.
    pub fn hash_flops(&self) -> u64 {
        (self.num_planes * (2 * self.dim + 1)) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignLsh {
    pub dim: usize,
    pub num_planes: usize,
    pub directions: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SignLsh {
    pub fn new(dim: usize, num_planes: usize, seed: u64) -> Result<Self> {
        if dim == 0 || num_planes == 0 {
            return Err(Error::InvalidArgument("dim and num_planes must be positive".into()));
        }
        let mut rng = Rng64::new(seed);
        let directions = (0..num_planes).map(|_| rng.normal_vec(dim)).collect();
        Ok(Self {
            dim,
            num_planes,
            directions,
            seed,
        })
    }

    pub fn hash(&self, x: &[f64]) -> Result<BucketKey> {
        check_dim(self.dim, x.len())?;
        check_finite(x)?;
        Ok(self.hash_unchecked(x))
    }

    pub(crate) fn hash_unchecked(&self, x: &[f64]) -> BucketKey {
        BucketKey(
            self.directions
                .iter()
                .map(|a| if dot(a, x) >= 0.0 { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn family_id(&self) -> String {
        format!("sign(dim={},planes={},seed={})", self.dim, self.num_planes, self.seed)
    }

    pub fn hash_flops(&self) -> u64 {
        (self.num_planes * 2 * self.dim) as u64
    }
}

/// Either hash family, for code that routes through a generic LSH.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LshFamily {
    Euclidean(EuclideanLsh),
    Sign(SignLsh),
}

impl LshFamily {
    pub fn dim(&self) -> usize {
        match self {
            LshFamily::Euclidean(l) => l.dim,
            LshFamily::Sign(l) => l.dim,
        }
    }

    pub fn num_planes(&self) -> usize {
        match self {
            LshFamily::Euclidean(l) => l.num_planes,
            LshFamily::Sign(l) => l.num_planes,
        }
    }

    pub fn hash(&self, x: &[f64]) -> Result<BucketKey> {
        match self {
            LshFamily::Euclidean(l) => l.hash(x),
            LshFamily::Sign(l) => l.hash(x),
        }
    }

    pub fn hash_flops(&self) -> u64 {
        match self {
            LshFamily::Euclidean(l) => l.hash_flops(),
            LshFamily::Sign(l) => l.hash_flops(),
        }
    }

    pub fn family_id(&self) -> String {
        match self {
            LshFamily::Euclidean(l) => l.family_id(),
            LshFamily::Sign(l) => l.family_id(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketPayload {
    /// Mean of the targets hashed here.
    pub constant: f64,
    /// Polynomial coefficients over `x - centroid`, present when degree ≥ 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    pub count: u64,
    pub centroid: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BucketEntry {
    key: BucketKey,
    payload: BucketPayload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "BucketTableRepr", try_from = "BucketTableRepr")]
pub struct BucketTable {
    family_ref: String,
    key_len: usize,
    dim: usize,
    degree: u32,
    monomials: Vec<Vec<u32>>,
    entries: HashMap<BucketKey, BucketPayload>,
    samples: HashMap<BucketKey, Vec<(Vec<f64>, f64)>>,
    needs_fit: bool,
}

#[derive(Serialize, Deserialize)]
struct BucketTableRepr {
    family_ref: String,
    key_len: usize,
    dim: usize,
    degree: u32,
    entries: Vec<BucketEntry>,
}

impl From<BucketTable> for BucketTableRepr {
    fn from(t: BucketTable) -> Self {
        let mut entries: Vec<BucketEntry> = t
            .entries
            .into_iter()
            .map(|(key, payload)| BucketEntry { key, payload })
            .collect();
        entries.sort_by(|a, b| a.key.cmp(&b.key));
        Self {
            family_ref: t.family_ref,
            key_len: t.key_len,
            dim: t.dim,
            degree: t.degree,
            entries,
        }
    }
}

impl TryFrom<BucketTableRepr> for BucketTable {
    type Error = String;

    fn try_from(r: BucketTableRepr) -> std::result::Result<Self, String> {
        let mut table = BucketTable::new(r.family_ref, r.key_len, r.dim, r.degree);
        for e in r.entries {
            if e.key.len() != r.key_len {
                return Err("bucket key length does not match table".into());
            }
            if e.payload.count == 0 {
                return Err("bucket with zero count".into());
            }
            table.entries.insert(e.key, e.payload);
        }
        Ok(table)
    }
}

impl BucketTable {
    pub fn new(family_ref: impl Into<String>, key_len: usize, dim: usize, degree: u32) -> Self {
        Self {
            family_ref: family_ref.into(),
            key_len,
            dim,
            degree,
            monomials: if degree > 0 { multi_indices(dim, degree) } else { Vec::new() },
            entries: HashMap::new(),
            samples: HashMap::new(),
            needs_fit: false,
        }
    }

    pub fn for_family(family: &LshFamily, degree: u32) -> Self {
        Self::new(family.family_id(), family.num_planes(), family.dim(), degree)
    }

    pub fn family_ref(&self) -> &str {
        &self.family_ref
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn non_empty(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, key: &BucketKey) -> Option<&BucketPayload> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BucketKey, &BucketPayload)> {
        self.entries.iter()
    }

    pub fn insert(&mut self, key: BucketKey, x: &[f64], y: f64) -> Result<()> {
        if key.len() != self.key_len {
            return Err(Error::DimensionMismatch {
                expected: self.key_len,
                got: key.len(),
            });
        }
        check_dim(self.dim, x.len())?;
        let payload = self.entries.entry(key.clone()).or_insert_with(|| BucketPayload {
            constant: 0.0,
            coefficients: None,
            count: 0,
            centroid: vec![0.0; x.len()],
        });
        payload.count += 1;
        let n = payload.count as f64;
        payload.constant += (y - payload.constant) / n;
        for (c, &xi) in payload.centroid.iter_mut().zip(x) {
            *c += (xi - *c) / n;
        }
        if self.degree > 0 {
            self.samples.entry(key).or_default().push((x.to_vec(), y));
            self.needs_fit = true;
        }
        Ok(())
    }

    /// Fits per-bucket polynomials from the accumulated pairs. No-op for degree 0.
    pub fn fit_polynomials(&mut self) -> Result<()> {
        if self.degree == 0 || !self.needs_fit {
            return Ok(());
        }
        let mut keys: Vec<BucketKey> = self.samples.keys().cloned().collect();
        keys.sort();
        let fits = par::map_slice(&keys, |key| {
            let payload = &self.entries[key];
            let pairs = &self.samples[key];
            let rows: Vec<Vec<f64>> = pairs
                .iter()
                .map(|(x, _)| self.design_row(x, &payload.centroid))
                .collect();
            let ys: Vec<f64> = pairs.iter().map(|(_, y)| *y).collect();
            ridge_least_squares(&rows, &ys, BUCKET_RIDGE)
        });
        for (key, fit) in keys.into_iter().zip(fits) {
            let coeffs = fit?;
            self.entries.get_mut(&key).expect("bucket exists").coefficients = Some(coeffs);
        }
        self.samples.clear();
        self.needs_fit = false;
        Ok(())
    }

    fn design_row(&self, x: &[f64], centroid: &[f64]) -> Vec<f64> {
        let centred: Vec<f64> = x.iter().zip(centroid).map(|(a, c)| a - c).collect();
        self.monomials.iter().map(|m| eval_monomial(m, &centred)).collect()
    }

    /// Evaluates a stored payload at `x`.
    pub fn eval_payload(&self, payload: &BucketPayload, x: &[f64]) -> f64 {
        match &payload.coefficients {
            Some(c) => dot(c, &self.design_row(x, &payload.centroid)),
            None => payload.constant,
        }
    }

    /// Number of parameters stored per bucket.
    pub fn params_per_bucket(&self) -> usize {
        self.monomials.len().max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    #[serde(rename = "non_empty")]
    pub non_empty_count: usize,
    pub max_diameter: f64,
    #[serde(skip)]
    pub diameters: Vec<f64>,
    pub sample_size: usize,
}

/// Exact max pairwise distance within a group of points.
pub fn diameter(points: &[&[f64]]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.max(dist(points[i], points[j]));
        }
    }
    best
}

/// Groups `points` by bucket and measures each bucket's exact diameter.
/// Diameters are reported in key order.
pub fn bucket_stats(lsh: &EuclideanLsh, points: &[Vec<f64>]) -> Result<BucketStats> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            need: 2,
            got: points.len(),
        });
    }
    for p in points {
        check_dim(lsh.dim, p.len())?;
        check_finite(p)?;
    }
    let keys = par::map_slice(points, |p| lsh.hash_unchecked(p));
    let mut groups: HashMap<BucketKey, Vec<usize>> = HashMap::new();
    for (i, k) in keys.into_iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    let mut grouped: Vec<(BucketKey, Vec<usize>)> = groups.into_iter().collect();
    grouped.sort_by(|a, b| a.0.cmp(&b.0));
    let diameters = par::map_slice(&grouped, |(_, idx)| {
        let pts: Vec<&[f64]> = idx.iter().map(|&i| points[i].as_slice()).collect();
        diameter(&pts)
    });
    Ok(BucketStats {
        non_empty_count: grouped.len(),
        max_diameter: diameters.iter().copied().fold(0.0, f64::max),
        diameters,
        sample_size: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_family(offset: f64, width: f64) -> EuclideanLsh {
        EuclideanLsh {
            dim: 2,
            num_planes: 1,
            width,
            directions: vec![vec![1.0, 0.0]],
            offsets: vec![offset],
            seed: 0,
        }
    }

    #[test]
    fn construction_shape_and_range() {
        let lsh = EuclideanLsh::new(2, 3, 0.5, 7).unwrap();
        assert_eq!(lsh.directions.len(), 3);
        assert!(lsh.directions.iter().all(|r| r.len() == 2));
        assert!(lsh.offsets.iter().all(|&b| (0.0..0.5).contains(&b)));
    }

    #[test]
    fn construction_is_deterministic() {
        let a = EuclideanLsh::new(2, 3, 0.5, 7).unwrap();
        let b = EuclideanLsh::new(2, 3, 0.5, 7).unwrap();
        let bits = |l: &EuclideanLsh| -> Vec<u64> {
            l.directions
                .iter()
                .flatten()
                .chain(&l.offsets)
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(EuclideanLsh::new(0, 3, 0.5, 7), Err(Error::InvalidArgument(_))));
        assert!(matches!(EuclideanLsh::new(2, 0, 0.5, 7), Err(Error::InvalidArgument(_))));
        assert!(matches!(EuclideanLsh::new(2, 3, 0.0, 7), Err(Error::InvalidArgument(_))));
        assert!(matches!(EuclideanLsh::new(2, 3, -1.0, 7), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn euclidean_hash_arithmetic() {
        let lsh = unit_family(0.5, 1.0);
        assert_eq!(lsh.hash(&[2.3, 7.0]).unwrap().0, vec![2]);
        assert_eq!(lsh.hash(&[-1.6, 0.0]).unwrap().0, vec![-2]);
    }

    #[test]
    fn euclidean_hash_errors() {
        let lsh = unit_family(0.5, 1.0);
        assert!(matches!(lsh.hash(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(lsh.hash(&[f64::NAN, 0.0]), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn translation_shifts_coordinates() {
        // a = (1, 0), (0, 1): moving by width·(m, n) shifts the key by (m, n).
        let lsh = EuclideanLsh {
            dim: 2,
            num_planes: 2,
            width: 0.3,
            directions: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            offsets: vec![0.1, 0.2],
            seed: 0,
        };
        let x = [0.123, -0.456];
        let base = lsh.hash(&x).unwrap();
        let moved = lsh.hash(&[x[0] + 0.3 * 3.0, x[1] - 0.3 * 2.0]).unwrap();
        assert_eq!(moved.0, vec![base.0[0] + 3, base.0[1] - 2]);
    }

    #[test]
    fn sign_hash_values() {
        let lsh = SignLsh {
            dim: 2,
            num_planes: 1,
            directions: vec![vec![1.0, 0.0]],
            seed: 0,
        };
        assert_eq!(lsh.hash(&[2.0, 5.0]).unwrap().0, vec![1]);
        assert_eq!(lsh.hash(&[-2.0, 5.0]).unwrap().0, vec![-1]);
        assert_eq!(lsh.hash(&[0.0, 5.0]).unwrap().0, vec![1]);
        assert!(lsh.hash(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn table_mean_count_and_centroid() {
        let mut t = BucketTable::new("test", 1, 2, 0);
        let key = BucketKey(vec![4]);
        assert_eq!(t.non_empty(), 0);
        t.insert(key.clone(), &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(t.non_empty(), 1);
        t.insert(key.clone(), &[2.0, 0.0], 3.0).unwrap();
        let p = t.get(&key).unwrap();
        assert_eq!(p.constant, 2.0);
        assert_eq!(p.count, 2);
        assert_eq!(p.centroid, vec![1.0, 0.0]);
        assert!(p.coefficients.is_none());
    }

    #[test]
    fn table_rejects_wrong_key_length() {
        let mut t = BucketTable::new("test", 2, 1, 0);
        assert!(t.insert(BucketKey(vec![1]), &[0.0], 1.0).is_err());
    }

    #[test]
    fn linear_bucket_fit_is_exact_on_linear_data() {
        let mut t = BucketTable::new("test", 1, 2, 1);
        let key = BucketKey(vec![0]);
        let f = |x: &[f64]| 0.5 + 2.0 * x[0] - x[1];
        let pts = [[0.1, 0.2], [0.3, -0.1], [-0.2, 0.4], [0.0, 0.0], [0.25, 0.25]];
        for p in &pts {
            t.insert(key.clone(), p, f(p)).unwrap();
        }
        t.fit_polynomials().unwrap();
        let payload = t.get(&key).unwrap().clone();
        assert_eq!(payload.coefficients.as_ref().unwrap().len(), 3);
        let probe = [0.15, -0.05];
        assert!((t.eval_payload(&payload, &probe) - f(&probe)).abs() < 1e-6);
    }

    #[test]
    fn stats_identical_points() {
        let lsh = EuclideanLsh::new(2, 4, 0.5, 1).unwrap();
        let s = bucket_stats(&lsh, &[vec![0.3, 0.3], vec![0.3, 0.3]]).unwrap();
        assert_eq!(s.non_empty_count, 1);
        assert_eq!(s.max_diameter, 0.0);
        assert!(matches!(bucket_stats(&lsh, &[vec![0.0, 0.0]]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn stats_json_shape() {
        let lsh = EuclideanLsh::new(2, 4, 0.5, 1).unwrap();
        let s = bucket_stats(&lsh, &[vec![0.3, 0.3], vec![0.9, -0.3]]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["max_diameter", "non_empty", "sample_size"]);
    }

    #[test]
    fn key_serializes_as_int_array() {
        let k = BucketKey(vec![1, -2, 3]);
        assert_eq!(serde_json::to_string(&k).unwrap(), "[1,-2,3]");
    }

    #[test]
    fn table_json_roundtrip() {
        let mut t = BucketTable::new("fam", 2, 1, 0);
        t.insert(BucketKey(vec![1, 2]), &[0.5], 1.0).unwrap();
        t.insert(BucketKey(vec![0, 2]), &[0.1], -1.0).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: BucketTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn co_bucket_bound(seed in 0u64..1000, pts in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 2..40)) {
            let lsh = EuclideanLsh::new(3, 6, 0.4, seed).unwrap();
            let keys: Vec<BucketKey> = pts.iter().map(|p| lsh.hash(p).unwrap()).collect();
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    if keys[i] == keys[j] {
                        for a in &lsh.directions {
                            let diff: Vec<f64> = pts[i].iter().zip(&pts[j]).map(|(u, v)| u - v).collect();
                            prop_assert!(dot(a, &diff).abs() < lsh.width);
                        }
                    }
                }
            }
        }

        #[test]
        fn sign_hash_scale_invariant(seed in 0u64..1000, x in proptest::collection::vec(-1.0f64..1.0, 4), lambda in 0.01f64..100.0) {
            let lsh = SignLsh::new(4, 8, seed).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
            prop_assume!(lsh.directions.iter().all(|a| dot(a, &x).abs() > 1e-9));
            prop_assert_eq!(lsh.hash(&x).unwrap(), lsh.hash(&scaled).unwrap());
        }

        #[test]
        fn running_mean_matches_arithmetic_mean(ys in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
            let mut t = BucketTable::new("t", 1, 1, 0);
            for &y in &ys {
                t.insert(BucketKey(vec![0]), &[0.0], y).unwrap();
            }
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            prop_assert!((t.get(&BucketKey(vec![0])).unwrap().constant - mean).abs() <= 1e-12);
        }
    }
}
