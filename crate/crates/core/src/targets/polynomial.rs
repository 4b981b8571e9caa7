use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::monomial::{eval_monomial, multi_indices, total_degree};
use crate::rng::Rng64;

/// How raw coefficients are rescaled after drawing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientNorm {
    /// `Σ|c| = 1/D`, which bounds every partial derivative by 1 on the cube.
    #[default]
    InverseDegree,
    /// `Σ|c| = 1`.
    UnitSum,
}

impl CoefficientNorm {
    fn target_sum(self, degree: u32) -> f64 {
        match self {
            CoefficientNorm::InverseDegree => 1.0 / degree as f64,
            CoefficientNorm::UnitSum => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSpec {
    pub dim: usize,
    pub degree: u32,
    pub terms: Vec<Term>,
    pub seed: u64,
    #[serde(default)]
    pub norm: CoefficientNorm,
}

impl PolynomialSpec {
    /// Builds a spec from explicit terms; no normalization is applied.
    pub fn from_terms(dim: usize, degree: u32, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            check_dim(dim, t.exponents.len())?;
            if total_degree(&t.exponents) > degree {
                return Err(Error::InvalidArgument(format!(
                    "term {:?} exceeds degree {degree}",
                    t.exponents
                )));
            }
        }
        Ok(Self {
            dim,
            degree,
            terms,
            seed: 0,
            norm: CoefficientNorm::InverseDegree,
        })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient * eval_monomial(&t.exponents, x))
            .sum()
    }

    pub fn abs_coefficient_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }
}

/// Random polynomial over `num_terms` distinct monomials of total degree ≤ `degree`.
pub fn gen_random_polynomial(dim: usize, degree: u32, num_terms: usize, seed: u64) -> Result<PolynomialSpec> {
    gen_random_polynomial_with(dim, degree, num_terms, seed, CoefficientNorm::InverseDegree)
}

pub fn gen_random_polynomial_with(
    dim: usize,
    degree: u32,
    num_terms: usize,
    seed: u64,
    norm: CoefficientNorm,
) -> Result<PolynomialSpec> {
    if dim == 0 || degree == 0 || num_terms == 0 {
        return Err(Error::InvalidArgument(
            "polynomial needs dim, degree and num_terms ≥ 1".into(),
        ));
    }
    let basis = multi_indices(dim, degree);
    if num_terms > basis.len() {
        return Err(Error::InvalidArgument(format!(
            "{num_terms} terms requested but only {} monomials have degree ≤ {degree} in {dim} variables",
            basis.len()
        )));
    }
    let mut rng = Rng64::new(seed);
    let mut chosen = rng.sample_indices(basis.len(), num_terms);
    chosen.sort_unstable();
    let mut terms: Vec<Term> = chosen
        .into_iter()
        .map(|i| Term {
            exponents: basis[i].clone(),
            coefficient: rng.uniform_in(-1.0, 1.0),
        })
        .collect();
    let raw: f64 = terms.iter().map(|t| t.coefficient.abs()).sum();
    if raw == 0.0 {
        return Err(Error::Degenerate("all coefficients drew zero".into()));
    }
    let scale = norm.target_sum(degree) / raw;
    for t in &mut terms {
        t.coefficient *= scale;
    }
    Ok(PolynomialSpec {
        dim,
        degree,
        terms,
        seed,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_to_inverse_degree() {
        for seed in 0..20 {
            let p = gen_random_polynomial(8, 4, 495, seed).unwrap();
            assert!((p.abs_coefficient_sum() - 0.25).abs() < 1e-12);
            assert!(p.terms.iter().all(|t| total_degree(&t.exponents) <= 4));
        }
    }

    #[test]
    fn unit_sum_variant() {
        let p = gen_random_polynomial_with(3, 2, 5, 1, CoefficientNorm::UnitSum).unwrap();
        assert!((p.abs_coefficient_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_built_monomial() {
        let p = PolynomialSpec::from_terms(
            4,
            4,
            vec![Term {
                exponents: vec![1, 1, 1, 1],
                coefficient: 0.25,
            }],
        )
        .unwrap();
        assert_eq!(p.eval(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.25);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gen_random_polynomial(0, 4, 1, 0).is_err());
        assert!(gen_random_polynomial(2, 0, 1, 0).is_err());
        assert!(gen_random_polynomial(2, 2, 0, 0).is_err());
        assert!(gen_random_polynomial(2, 2, 7, 0).is_err());
    }

    #[test]
    fn coordinate_slope_bound() {
        // |∂_i p| ≤ D·Σ|c| = 1 on the cube, so single-coordinate moves are 1-Lipschitz.
        let p = gen_random_polynomial(8, 4, 495, 11).unwrap();
        let mut rng = Rng64::new(5);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..8).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let mut x2 = x.clone();
            let i = rng.below(8) as usize;
            x2[i] = rng.uniform_in(-1.0, 1.0);
            let lhs = (p.eval(&x).unwrap() - p.eval(&x2).unwrap()).abs();
            assert!(lhs <= (x[i] - x2[i]).abs() + 1e-15);
        }
    }
}
