use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::Rng64;

const MAX_TERMS: usize = 1 << 20;

/// Random-sign cosine series `Σ_n η_n ε₁^α · 2cos(π nᵀx)` over
/// `n ∈ {1, …, 1/ε₁}^k`, with `η_n = ±L / (C√k π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSpec {
    pub intrinsic_dim: usize,
    pub inv_eps1: usize,
    pub alpha: f64,
    pub c_const: f64,
    pub lipschitz: f64,
    /// One η per multi-index, multi-indices in lexicographic order.
    pub signs: Vec<f64>,
    pub seed: u64,
}

impl FourierSpec {
    pub fn eps1(&self) -> f64 {
        1.0 / self.inv_eps1 as f64
    }

    /// Multi-index for flat position `flat` (lexicographic, entries from 1).
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut n = vec![0; self.intrinsic_dim];
        let mut rem = flat;
        for axis in (0..self.intrinsic_dim).rev() {
            n[axis] = rem % self.inv_eps1 + 1;
            rem /= self.inv_eps1;
        }
        n
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.intrinsic_dim, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let amp = self.eps1().powf(self.alpha);
        self.signs
            .iter()
            .enumerate()
            .map(|(flat, eta)| {
                let phase: f64 = self
                    .multi_index(flat)
                    .iter()
                    .zip(x)
                    .map(|(&n, &xi)| n as f64 * xi)
                    .sum();
                eta * amp * 2.0 * (std::f64::consts::PI * phase).cos()
            })
            .sum()
    }

    /// Gradient-norm ceiling `L / ε₁^((k + 2 − 2α)/2)`.
    pub fn gradient_bound(&self) -> f64 {
        let k = self.intrinsic_dim as f64;
        self.lipschitz / self.eps1().powf((k + 2.0 - 2.0 * self.alpha) / 2.0)
    }
}

/// `alpha = None` selects `k/2 + 1`.
pub fn gen_fourier(k: usize, inv_eps1: usize, alpha: Option<f64>, c_const: f64, lipschitz: f64, seed: u64) -> Result<FourierSpec> {
    if k == 0 || inv_eps1 == 0 {
        return Err(Error::InvalidArgument("k and 1/eps1 must be positive".into()));
    }
    if !(c_const > 0.0 && lipschitz > 0.0) {
        return Err(Error::InvalidArgument("C and L must be positive".into()));
    }
    let terms = (inv_eps1 as u128).pow(k as u32);
    if terms > MAX_TERMS as u128 {
        return Err(Error::InvalidArgument(format!("{terms} Fourier terms exceed the cap {MAX_TERMS}")));
    }
    let magnitude = lipschitz / (c_const * (k as f64).sqrt() * std::f64::consts::PI);
    let mut rng = Rng64::new(seed);
    let signs = (0..terms as usize).map(|_| rng.sign() * magnitude).collect();
    Ok(FourierSpec {
        intrinsic_dim: k,
        inv_eps1,
        alpha: alpha.unwrap_or(k as f64 / 2.0 + 1.0),
        c_const,
        lipschitz,
        signs,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term_at_origin() {
        let spec = FourierSpec {
            intrinsic_dim: 1,
            inv_eps1: 1,
            alpha: 1.5,
            c_const: 4.0,
            lipschitz: 1.0,
            signs: vec![1.0 / (4.0 * std::f64::consts::PI)],
            seed: 0,
        };
        let eta = spec.signs[0];
        assert!((spec.eval(&[0.0]).unwrap() - 2.0 * eta * spec.eps1().powf(1.5)).abs() < 1e-15);
    }

    #[test]
    fn shape_and_magnitudes() {
        let spec = gen_fourier(2, 5, None, 4.0, 1.0, 3).unwrap();
        assert_eq!(spec.signs.len(), 25);
        assert_eq!(spec.alpha, 2.0);
        let mag = 1.0 / (4.0 * 2f64.sqrt() * std::f64::consts::PI);
        assert!(spec.signs.iter().all(|s| (s.abs() - mag).abs() < 1e-15));
        assert_eq!(spec.multi_index(0), vec![1, 1]);
        assert_eq!(spec.multi_index(24), vec![5, 5]);
    }

    #[test]
    fn even_function() {
        let spec = gen_fourier(2, 6, None, 4.0, 1.0, 1).unwrap();
        let mut rng = Rng64::new(0);
        for _ in 0..100 {
            let x = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
            let neg = [-x[0], -x[1]];
            assert!((spec.eval(&x).unwrap() - spec.eval(&neg).unwrap()).abs() < 1e-12);
        }
    }
}
