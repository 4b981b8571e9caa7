use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm};
use crate::lsh::LshFamily;
use crate::rng::{derive_seed, Rng64};

use super::dense::{Activation, DenseModel};
use super::routing::{ExpertMap, RandomHashRouter, RoutingRule};
use super::{ActiveFeatures, TopLayerModel};

/// Smallest `|⟨b_i, x_i⟩|` accepted by [`simulate_interpolation`].
pub const INTERPOLATION_MIN_DOT: f64 = 1e-6;
const INTERPOLATION_RETRIES: usize = 32;

/// Dense core with an input-dependent mask on the top row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsmModel {
    pub core: DenseModel,
    pub routing: RoutingRule,
}

impl DsmModel {
    pub fn new(core: DenseModel, routing: RoutingRule) -> Result<Self> {
        let t = core.width;
        let ok = match &routing {
            RoutingRule::TopK { k } => (1..=t).contains(k),
            RoutingRule::RandomHash(r) => r.width == t && r.input_dim == core.input_dim,
            RoutingRule::Lsh { family, experts, block } => {
                family.dim() == core.input_dim && experts.num_experts * block == t && *block > 0
            }
            RoutingRule::NearestPoint { points } => {
                points.len() == t && points.iter().all(|p| p.len() == core.input_dim)
            }
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{} routing is inconsistent with width {t} / input dim {}",
                routing.name(),
                core.input_dim
            )));
        }
        Ok(Self { core, routing })
    }

    pub fn top_k(input_dim: usize, width: usize, k: usize, activation: Activation, seed: u64) -> Result<Self> {
        Self::new(DenseModel::new(input_dim, width, activation, seed)?, RoutingRule::TopK { k })
    }

    /// Random-hash routing; the hash seed is derived from `seed`.
    pub fn random_hash(input_dim: usize, width: usize, k: usize, mask_dim: usize, activation: Activation, seed: u64) -> Result<Self> {
        let router = RandomHashRouter::new(input_dim, width, k, derive_seed(seed, &[0x68617368]), mask_dim)?;
        Self::new(
            DenseModel::new(input_dim, width, activation, seed)?,
            RoutingRule::RandomHash(router),
        )
    }

    /// Switch-style routing: `num_experts` blocks of `block` units, the
    /// block chosen by the LSH bucket of the input.
    pub fn lsh_routed(family: LshFamily, num_experts: usize, block: usize, activation: Activation, seed: u64) -> Result<Self> {
        let core = DenseModel::new(family.dim(), num_experts * block, activation, seed)?;
        let experts = ExpertMap {
            num_experts,
            salt: derive_seed(seed, &[0x6578]),
        };
        Self::new(core, RoutingRule::Lsh { family, experts, block })
    }

    pub fn sparsity(&self) -> usize {
        self.routing.sparsity()
    }

    /// Output value and the activated units.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, Vec<usize>)> {
        let f = self.active_features(x)?;
        Ok((f.dot_top(&self.core.top), f.units))
    }
}

impl TopLayerModel for DsmModel {
    fn input_dim(&self) -> usize {
        self.core.input_dim
    }

    fn width(&self) -> usize {
        self.core.width
    }

    fn top(&self) -> &[f64] {
        &self.core.top
    }

    fn top_mut(&mut self) -> &mut [f64] {
        &mut self.core.top
    }

    fn active_features(&self, x: &[f64]) -> Result<ActiveFeatures> {
        check_dim(self.core.input_dim, x.len())?;
        let act = self.core.activation;
        if self.routing.needs_full_preactivation() {
            let pre = self.core.pre_activations(x);
            let units = self.routing.route(x, Some(&pre))?;
            let values = units.iter().map(|&j| act.apply(pre[j])).collect();
            Ok(ActiveFeatures { units, values })
        } else {
            let units = self.routing.route(x, None)?;
            let values = units.iter().map(|&j| self.core.feature(j, x)).collect();
            Ok(ActiveFeatures { units, values })
        }
    }

    fn activated_units(&self) -> usize {
        self.sparsity()
    }

    fn routing_flops(&self) -> u64 {
        self.routing.routing_flops(self.core.input_dim)
    }
}

/// Exact interpolation of `f` at `points` with one active unit per input.
///
/// Rows of `B` are Gaussian; a row nearly orthogonal to its point is redrawn.
/// Routing sends each input to the unit of its nearest construction point.
pub fn simulate_interpolation<F>(points: &[Vec<f64>], f: F, seed: u64) -> Result<DsmModel>
where
    F: Fn(&[f64]) -> f64,
{
    let t = points.len();
    let d = points.first().map(Vec::len).ok_or(Error::EmptyInput)?;
    let mut core = DenseModel::new(d, t, Activation::Identity, seed)?;
    let mut rng = Rng64::derived(seed, &[0x696e74]);
    let scale = 1.0 / (d as f64).sqrt();
    for (i, x) in points.iter().enumerate() {
        check_dim(d, x.len())?;
        let mut tries = 0;
        while dot(core.row(i), x).abs() < INTERPOLATION_MIN_DOT {
            tries += 1;
            if tries > INTERPOLATION_RETRIES {
                return Err(Error::Degenerate(format!(
                    "bottom row {i} stays orthogonal to its point (is the point zero?)"
                )));
            }
            let row: Vec<f64> = rng.normal_vec(d).into_iter().map(|v| v * scale).collect();
            core.set_row(i, &row);
        }
        core.top[i] = f(x) / dot(core.row(i), x);
    }
    DsmModel::new(
        core,
        RoutingRule::NearestPoint {
            points: points.to_vec(),
        },
    )
}

/// k-NN regression as a DSM: `B` holds the anchors, `A = f(b)/k`, and the
/// mask is the indicator of the `k` largest inner products.
pub fn simulate_knn<F>(anchors: &[Vec<f64>], f: F, k: usize) -> Result<DsmModel>
where
    F: Fn(&[f64]) -> f64,
{
    if anchors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = anchors.iter().position(|b| (norm(b) - 1.0).abs() > 1e-9) {
        return Err(Error::InvalidArgument(format!("anchor {bad} is not unit norm")));
    }
    let top = anchors.iter().map(|b| f(b) / k as f64).collect();
    let core = DenseModel::from_weights(anchors.to_vec(), top, Activation::Indicator)?;
    DsmModel::new(core, RoutingRule::TopK { k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::EuclideanLsh;

    #[test]
    fn full_topk_equals_dense() {
        let dsm = DsmModel::top_k(5, 32, 32, Activation::Relu, 4).unwrap();
        let mut dense = dsm.core.clone();
        let mut rng = Rng64::new(1);
        dense.top = rng.normal_vec(32);
        let mut dsm = dsm;
        dsm.core.top = dense.top.clone();
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let (v, units) = dsm.forward(&x).unwrap();
            assert_eq!(units.len(), 32);
            assert!((v - dense.forward(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_unit_weight_reads_feature() {
        let mut m = DsmModel::top_k(3, 10, 4, Activation::Relu, 2).unwrap();
        let x = [0.4, -0.1, 0.8];
        let (_, units) = m.forward(&x).unwrap();
        let j = units[1];
        m.core.top[j] = 1.0;
        let (v, _) = m.forward(&x).unwrap();
        assert_eq!(v, m.core.feature(j, &x));
    }

    #[test]
    fn forward_matches_resummation() {
        let mut m = DsmModel::top_k(6, 40, 7, Activation::Relu, 8).unwrap();
        let mut rng = Rng64::new(11);
        m.core.top = rng.normal_vec(40);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let (v, units) = m.forward(&x).unwrap();
            assert_eq!(units.len(), 7);
            let pre = m.core.pre_activations(&x);
            let mut by_unit = 0.0;
            for &j in &units {
                by_unit += m.core.top[j] * pre[j].max(0.0);
            }
            assert!((v - by_unit).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_single_point() {
        let m = simulate_interpolation(&[vec![0.3, -0.7]], |_| 2.5, 1).unwrap();
        let (v, units) = m.forward(&[0.3, -0.7]).unwrap();
        assert_eq!(units, vec![0]);
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn interpolation_of_zero_has_zero_top() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 + 1.0, 1.0]).collect();
        let m = simulate_interpolation(&pts, |_| 0.0, 3).unwrap();
        assert!(m.core.top.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn interpolation_rejects_zero_point() {
        assert!(matches!(
            simulate_interpolation(&[vec![0.0, 0.0]], |_| 1.0, 1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn knn_self_query() {
        let anchors = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let m = simulate_knn(&anchors, |b| b[0] + 10.0 * b[1], 1).unwrap();
        assert_eq!(m.forward(&[0.0, 1.0]).unwrap().0, 10.0);
        assert!(simulate_knn(&[vec![2.0, 0.0]], |_| 0.0, 1).is_err());
    }

    #[test]
    fn lsh_routing_activates_one_block() {
        let fam = LshFamily::Euclidean(EuclideanLsh::new(4, 8, 0.5, 3).unwrap());
        let m = DsmModel::lsh_routed(fam, 8, 16, Activation::Relu, 1).unwrap();
        let (_, units) = m.forward(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        assert_eq!(units.len(), 16);
        assert_eq!(units[0] % 16, 0);
        assert!(units.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn inconsistent_routing_rejected() {
        let core = DenseModel::new(3, 10, Activation::Relu, 1).unwrap();
        assert!(DsmModel::new(core.clone(), RoutingRule::TopK { k: 11 }).is_err());
        assert!(DsmModel::new(core, RoutingRule::NearestPoint { points: vec![] }).is_err());
    }
}
