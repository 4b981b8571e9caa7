//! Synthetic target families with exact evaluation, Lipschitz estimation and
//! dataset sampling.

pub mod cone;
pub mod dataset;
pub mod fourier;
pub mod hypercube;
pub mod polynomial;
pub mod subspace;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::dist;
use crate::rng::Rng64;

pub use cone::{gen_cone_function, ConeFunctionSpec};
pub use dataset::{sample_dataset, sidecar_path, Dataset, DatasetMeta, Distribution};
pub use fourier::{gen_fourier, FourierSpec};
pub use hypercube::{gen_hypercube, HypercubeSpec};
pub use polynomial::{gen_random_polynomial, gen_random_polynomial_with, CoefficientNorm, PolynomialSpec, Term};
pub use subspace::{gen_subspace_embedding, random_orthonormal_rows, sample_slice_point, SubspaceEmbedding};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TargetFunction {
    Polynomial(PolynomialSpec),
    Hypercube(HypercubeSpec),
    Subspace(SubspaceEmbedding),
    Cone(ConeFunctionSpec),
    Fourier(FourierSpec),
}

impl TargetFunction {
    pub fn dim(&self) -> usize {
        match self {
            TargetFunction::Polynomial(p) => p.dim,
            TargetFunction::Hypercube(h) => h.dim,
            TargetFunction::Subspace(s) => s.ambient_dim,
            TargetFunction::Cone(c) => c.intrinsic_dim,
            TargetFunction::Fourier(f) => f.intrinsic_dim,
        }
    }

    pub fn name(&self) -> String {
        match self {
            TargetFunction::Polynomial(_) => "poly".into(),
            TargetFunction::Hypercube(_) => "hypercube".into(),
            TargetFunction::Subspace(s) => format!("subspace-{}", s.inner.name()),
            TargetFunction::Cone(_) => "cone".into(),
            TargetFunction::Fourier(_) => "fourier".into(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            TargetFunction::Polynomial(p) => p.eval(x),
            TargetFunction::Hypercube(h) => h.eval(x),
            TargetFunction::Subspace(s) => s.eval(x),
            TargetFunction::Cone(c) => c.eval(x),
            TargetFunction::Fourier(f) => f.eval(x),
        }
    }

    pub fn as_subspace(&self) -> Option<&SubspaceEmbedding> {
        match self {
            TargetFunction::Subspace(s) => Some(s),
            _ => None,
        }
    }
}

/// Radius of the local perturbations used by [`estimate_lipschitz`].
pub const LOCAL_RADIUS: f64 = 1e-3;

/// Largest observed slope `|f(x) − f(x′)| / ‖x − x′‖` over `num_pairs` pairs.
///
/// Even-numbered pairs are two independent draws from `sampler`; odd ones
/// perturb a draw by a random direction of length [`LOCAL_RADIUS`], clamped
/// back into `[-1, 1]^d`.
pub fn estimate_lipschitz<F, S>(f: F, mut sampler: S, num_pairs: usize, seed: u64) -> f64
where
    F: Fn(&[f64]) -> f64,
    S: FnMut(&mut Rng64) -> Vec<f64>,
{
    let mut rng = Rng64::new(seed);
    let mut best: f64 = 0.0;
    for i in 0..num_pairs {
        let x = sampler(&mut rng);
        let x2 = if i % 2 == 0 {
            sampler(&mut rng)
        } else {
            let dir = rng.normal_vec(x.len());
            let len = crate::linalg::norm(&dir).max(f64::MIN_POSITIVE);
            x.iter()
                .zip(&dir)
                .map(|(a, u)| (a + LOCAL_RADIUS * u / len).clamp(-1.0, 1.0))
                .collect()
        };
        let r = dist(&x, &x2);
        if r > 0.0 {
            best = best.max((f(&x) - f(&x2)).abs() / r);
        }
    }
    best
}

impl TargetFunction {
    /// [`estimate_lipschitz`] with points drawn from `distribution`.
    pub fn estimate_lipschitz(&self, distribution: Distribution, num_pairs: usize, seed: u64) -> Result<f64> {
        let sampler = dataset::InputSampler::new(self, distribution)?;
        let mut failure = None;
        let est = estimate_lipschitz(
            |x| self.eval(x).unwrap_or(f64::NAN),
            |rng| match sampler.sample(rng) {
                Ok(x) => x,
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![0.0; self.dim()]
                }
            },
            num_pairs,
            seed,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(est),
        }
    }
}
