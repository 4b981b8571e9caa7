//! Routing rules: how an input picks its activated units.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, sq_dist};
use crate::lsh::LshFamily;
use crate::rng::{mix64, Rng64};

/// Indices of the `k` largest entries of `scores`, ascending. Ties go to the
/// lower index.
pub fn top_k_indices<T, F>(scores: &[T], k: usize, cmp: F) -> Vec<usize>
where
    F: Fn(&T, &T) -> Ordering,
{
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let order = |a: &usize, b: &usize| cmp(&scores[*b], &scores[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, order);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

fn check_k(k: usize, t: usize) -> Result<()> {
    if k == 0 || k > t {
        Err(Error::InvalidArgument(format!("K must be in 1..={t}, got {k}")))
    } else {
        Ok(())
    }
}

fn to_mask(t: usize, units: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; t];
    for &j in units {
        mask[j] = true;
    }
    mask
}

/// Ones at the `k` largest entries of `z`.
pub fn mask_topk(z: &[f64], k: usize) -> Result<Vec<bool>> {
    check_k(k, z.len())?;
    Ok(to_mask(z.len(), &top_k_indices(z, k, |a, b| a.total_cmp(b))))
}

/// Input-keyed pseudo-random mask.
///
/// The input is optionally projected by a seeded Gaussian map to `mask_dim`
/// coordinates. The canonical bit pattern of every coordinate (`-0.0` folded
/// to `0.0`) is folded through the SplitMix64 finalizer into one input
/// digest; unit `j` then scores `mix64(digest ^ mix64(j ⊕ seed-salt))` and the
/// `k` highest scores (lowest index on ties) are activated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomHashRouter {
    pub input_dim: usize,
    pub width: usize,
    pub k: usize,
    pub hash_seed: u64,
    pub mask_dim: usize,
    /// `mask_dim` rows of length `input_dim`; absent when `mask_dim == input_dim`.
    pub projection: Option<Vec<Vec<f64>>>,
}

impl RandomHashRouter {
    pub fn new(input_dim: usize, width: usize, k: usize, hash_seed: u64, mask_dim: usize) -> Result<Self> {
        check_k(k, width)?;
        if mask_dim == 0 || mask_dim > width {
            return Err(Error::InvalidArgument(format!("mask_dim must be in 1..={width}, got {mask_dim}")));
        }
        let projection = (mask_dim != input_dim).then(|| {
            let mut rng = Rng64::derived(hash_seed, &[0x70726f6a]);
            (0..mask_dim).map(|_| rng.normal_vec(input_dim)).collect()
        });
        Ok(Self {
            input_dim,
            width,
            k,
            hash_seed,
            mask_dim,
            projection,
        })
    }

    pub fn digest(&self, x: &[f64]) -> u64 {
        let canon = |v: f64| if v == 0.0 { 0u64 } else { v.to_bits() };
        let start = mix64(self.hash_seed);
        match &self.projection {
            Some(p) => p.iter().fold(start, |acc, row| mix64(acc ^ canon(dot(row, x)))),
            None => x.iter().fold(start, |acc, &v| mix64(acc ^ canon(v))),
        }
    }

    pub fn units(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_dim(self.input_dim, x.len())?;
        let h = self.digest(x);
        let salt = self.hash_seed.rotate_left(29);
        let scores: Vec<u64> = (0..self.width as u64).map(|j| mix64(h ^ mix64(j ^ salt))).collect();
        Ok(top_k_indices(&scores, self.k, |a, b| a.cmp(b)))
    }

    pub fn mask(&self, x: &[f64]) -> Result<Vec<bool>> {
        Ok(to_mask(self.width, &self.units(x)?))
    }

    pub fn routing_flops(&self) -> u64 {
        if self.projection.is_some() {
            (2 * self.mask_dim * self.input_dim) as u64
        } else {
            0
        }
    }
}

pub fn mask_random_hash(x: &[f64], t: usize, k: usize, hash_seed: u64, mask_dim: usize) -> Result<Vec<bool>> {
    RandomHashRouter::new(x.len(), t, k, hash_seed, mask_dim)?.mask(x)
}

/// Maps bucket keys to experts by digest modulo the expert count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertMap {
    pub num_experts: usize,
    pub salt: u64,
}

impl ExpertMap {
    pub fn expert(&self, key: &crate::lsh::BucketKey) -> usize {
        (mix64(key.digest() ^ self.salt) % self.num_experts as u64) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoutingRule {
    /// Units with the `k` largest pre-activations.
    TopK { k: usize },
    RandomHash(RandomHashRouter),
    /// Switch-style: the LSH bucket picks one contiguous block of `block` units.
    Lsh {
        family: LshFamily,
        experts: ExpertMap,
        block: usize,
    },
    /// Unit of the nearest stored point (lowest index on ties).
    NearestPoint { points: Vec<Vec<f64>> },
}

impl RoutingRule {
    pub fn sparsity(&self) -> usize {
        match self {
            RoutingRule::TopK { k } => *k,
            RoutingRule::RandomHash(r) => r.k,
            RoutingRule::Lsh { block, .. } => *block,
            RoutingRule::NearestPoint { .. } => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RoutingRule::TopK { .. } => "topk",
            RoutingRule::RandomHash(_) => "randhash",
            RoutingRule::Lsh { .. } => "lsh",
            RoutingRule::NearestPoint { .. } => "nearest",
        }
    }

    /// Whether routing needs every pre-activation `Bx`.
    pub fn needs_full_preactivation(&self) -> bool {
        matches!(self, RoutingRule::TopK { .. })
    }

    /// Routing overhead in floating point operations, excluding `Bx`.
    pub fn routing_flops(&self, input_dim: usize) -> u64 {
        match self {
            RoutingRule::TopK { .. } => 0,
            RoutingRule::RandomHash(r) => r.routing_flops(),
            RoutingRule::Lsh { family, .. } => family.hash_flops(),
            RoutingRule::NearestPoint { points } => (points.len() * 3 * input_dim) as u64,
        }
    }

    /// Activated units for `x`, ascending. `pre` must hold `Bx` when
    /// [`Self::needs_full_preactivation`] is true.
    pub(crate) fn route(&self, x: &[f64], pre: Option<&[f64]>) -> Result<Vec<usize>> {
        match self {
            RoutingRule::TopK { k } => {
                let z = pre.expect("top-k routing needs pre-activations");
                check_k(*k, z.len())?;
                Ok(top_k_indices(z, *k, |a, b| a.total_cmp(b)))
            }
            RoutingRule::RandomHash(r) => r.units(x),
            RoutingRule::Lsh { family, experts, block } => {
                let e = experts.expert(&family.hash(x)?);
                Ok((e * block..(e + 1) * block).collect())
            }
            RoutingRule::NearestPoint { points } => {
                let best = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, x)))
                    .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
                Ok(vec![best.0])
            }
        }
    }
}

/// One active unit per block of `block_size`, at offset `choices[j]` (1-based)
/// within block `j`.
pub fn block_routing_mask(choices: &[usize], block_size: usize) -> Result<Vec<bool>> {
    if block_size == 0 {
        return Err(Error::InvalidArgument("block size must be positive".into()));
    }
    let mut mask = vec![false; choices.len() * block_size];
    for (j, &c) in choices.iter().enumerate() {
        if c == 0 || c > block_size {
            return Err(Error::InvalidArgument(format!(
                "block choice {c} outside 1..={block_size}"
            )));
        }
        mask[j * block_size + c - 1] = true;
    }
    Ok(mask)
}
