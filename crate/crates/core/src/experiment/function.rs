use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::monomial::count_multi_indices;
use crate::targets::{
    gen_cone_function, gen_fourier, gen_hypercube, gen_random_polynomial_with, gen_subspace_embedding, CoefficientNorm,
    Distribution, TargetFunction,
};

fn one() -> f64 {
    1.0
}

fn four() -> f64 {
    4.0
}

/// Target family with its parameters, as written in configs and on the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "kebab-case")]
pub enum FunctionFamily {
    Poly {
        d: usize,
        degree: u32,
        /// Number of monomials; all monomials of degree ≤ `degree` if absent.
        #[serde(default)]
        terms: Option<usize>,
        #[serde(default)]
        norm: CoefficientNorm,
    },
    Hypercube {
        d: usize,
    },
    /// Polynomial in `k` variables composed with a random `k × d` orthonormal map.
    SubspacePoly {
        d: usize,
        k: usize,
        degree: u32,
        #[serde(default)]
        terms: Option<usize>,
        #[serde(default)]
        norm: CoefficientNorm,
    },
    Cone {
        k: usize,
        #[serde(default = "one")]
        lipschitz: f64,
        epsilon: f64,
        #[serde(default = "one")]
        half_extent: f64,
    },
    Fourier {
        k: usize,
        inv_eps1: usize,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default = "four")]
        c: f64,
        #[serde(default = "one")]
        lipschitz: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionConfig {
    #[serde(flatten)]
    pub family: FunctionFamily,
    #[serde(default)]
    pub seed: u64,
}

impl FunctionConfig {
    pub fn build(&self) -> Result<TargetFunction> {
        let seed = self.seed;
        Ok(match &self.family {
            FunctionFamily::Poly { d, degree, terms, norm } => {
                let n = terms.unwrap_or_else(|| count_multi_indices(*d, *degree));
                TargetFunction::Polynomial(gen_random_polynomial_with(*d, *degree, n, seed, *norm)?)
            }
            FunctionFamily::Hypercube { d } => TargetFunction::Hypercube(gen_hypercube(*d, seed)?),
            FunctionFamily::SubspacePoly {
                d,
                k,
                degree,
                terms,
                norm,
            } => {
                let n = terms.unwrap_or_else(|| count_multi_indices(*k, *degree));
                let inner = TargetFunction::Polynomial(gen_random_polynomial_with(*k, *degree, n, seed, *norm)?);
                let embed_seed = crate::rng::derive_seed(seed, &[0x656d62]);
                TargetFunction::Subspace(gen_subspace_embedding(*d, *k, inner, embed_seed)?)
            }
            FunctionFamily::Cone {
                k,
                lipschitz,
                epsilon,
                half_extent,
            } => TargetFunction::Cone(gen_cone_function(*k, *lipschitz, *epsilon, *half_extent, seed)?),
            FunctionFamily::Fourier {
                k,
                inv_eps1,
                alpha,
                c,
                lipschitz,
            } => TargetFunction::Fourier(gen_fourier(*k, *inv_eps1, *alpha, *c, *lipschitz, seed)?),
        })
    }

    /// Slice sampling for subspace families, the cube otherwise.
    pub fn natural_distribution(&self) -> Distribution {
        match self.family {
            FunctionFamily::SubspacePoly { .. } => Distribution::SubspaceSlice,
            _ => Distribution::UniformCube,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_builds() {
        let cfg: FunctionConfig = serde_json::from_str(r#"{"fn":"poly","d":8,"degree":4,"seed":3}"#).unwrap();
        let f = cfg.build().unwrap();
        match &f {
            TargetFunction::Polynomial(p) => {
                assert_eq!(p.terms.len(), 495);
                assert!((p.abs_coefficient_sum() - 0.25).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        let cfg: FunctionConfig =
            serde_json::from_str(r#"{"fn":"subspace-poly","d":8,"k":2,"degree":4,"seed":1}"#).unwrap();
        assert_eq!(cfg.build().unwrap().dim(), 8);
        assert_eq!(cfg.natural_distribution(), Distribution::SubspaceSlice);
    }

    #[test]
    fn hypercube_cap_enforced() {
        let cfg = FunctionConfig {
            family: FunctionFamily::Hypercube { d: 20 },
            seed: 0,
        };
        assert!(cfg.build().is_err());
    }
}
