use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::Rng64;

pub const MAX_HYPERCUBE_DIM: usize = 16;

/// Multilinear interpolation of random ±1 corner values.
///
/// Corner `c` (an index in `0..2^d`) has coordinates `y_i = -1` when bit
/// `d-1-i` of `c` is set and `+1` otherwise, so index 0 is `(1, …, 1)` and the
/// last index is `(-1, …, -1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypercubeSpec {
    pub dim: usize,
    pub corner_values: Vec<f64>,
    pub seed: u64,
}

pub fn corner(dim: usize, index: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| if index >> (dim - 1 - i) & 1 == 1 { -1.0 } else { 1.0 })
        .collect()
}

/// `I_y(x) = Π (1 + y_i x_i) / 2`.
pub fn indicator(y: &[f64], x: &[f64]) -> f64 {
    y.iter().zip(x).map(|(yi, xi)| (1.0 + yi * xi) / 2.0).product()
}

fn check_dim_cap(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_HYPERCUBE_DIM {
        Err(Error::InvalidArgument(format!(
            "hypercube dimension must be in 1..={MAX_HYPERCUBE_DIM}, got {dim}"
        )))
    } else {
        Ok(())
    }
}

impl HypercubeSpec {
    pub fn from_values(dim: usize, corner_values: Vec<f64>) -> Result<Self> {
        check_dim_cap(dim)?;
        check_dim(1 << dim, corner_values.len())?;
        if corner_values.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidArgument("corner values must be ±1".into()));
        }
        Ok(Self {
            dim,
            corner_values,
            seed: 0,
        })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        if let Some(v) = x.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::OutOfDomain(format!("hypercube input coordinate {v}")));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let plus: Vec<f64> = x.iter().map(|v| (1.0 + v) / 2.0).collect();
        let minus: Vec<f64> = x.iter().map(|v| (1.0 - v) / 2.0).collect();
        let d = self.dim;
        self.corner_values
            .iter()
            .enumerate()
            .map(|(c, &v)| {
                let w: f64 = (0..d)
                    .map(|i| if c >> (d - 1 - i) & 1 == 1 { minus[i] } else { plus[i] })
                    .product();
                v * w
            })
            .sum()
    }
}

pub fn gen_hypercube(dim: usize, seed: u64) -> Result<HypercubeSpec> {
    check_dim_cap(dim)?;
    let mut rng = Rng64::new(seed);
    let corner_values = (0..1usize << dim).map(|_| rng.sign()).collect();
    Ok(HypercubeSpec {
        dim,
        corner_values,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_corners() {
        let spec = gen_hypercube(5, 3).unwrap();
        for c in 0..32 {
            let y = corner(5, c);
            assert_eq!(spec.eval(&y).unwrap(), spec.corner_values[c]);
        }
    }

    #[test]
    fn signs_cancel_at_origin() {
        let spec = HypercubeSpec::from_values(2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        assert_eq!(corner(2, 1), vec![1.0, -1.0]);
        assert_eq!(spec.eval(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = Rng64::new(8);
        for d in 1..=10 {
            for _ in 0..20 {
                let x: Vec<f64> = (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                let s: f64 = (0..1 << d).map(|c| indicator(&corner(d, c), &x)).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bounded_by_one() {
        let spec = gen_hypercube(6, 1).unwrap();
        let mut rng = Rng64::new(2);
        for _ in 0..500 {
            let x: Vec<f64> = (0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            assert!(spec.eval(&x).unwrap().abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn domain_and_cap() {
        let spec = gen_hypercube(2, 1).unwrap();
        assert!(matches!(spec.eval(&[1.5, 0.0]), Err(Error::OutOfDomain(_))));
        assert!(gen_hypercube(20, 1).is_err());
        assert!(gen_hypercube(0, 1).is_err());
    }
}
