use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::Rng64;

use super::TargetFunction;

/// Redraws allowed per row before orthonormalization gives up.
const MAX_ROW_RETRIES: usize = 16;
/// Relative residual below which a Gram–Schmidt row counts as degenerate.
const DEGENERATE_RESIDUAL: f64 = 1e-8;
/// Rejection-sampling budget per slice point.
const MAX_SLICE_ATTEMPTS: usize = 1_000_000;

/// `x ↦ inner(A x)` for a `k × d` matrix `A` with orthonormal rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceEmbedding {
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub rows: Vec<Vec<f64>>,
    pub inner: Box<TargetFunction>,
    pub seed: u64,
}

/// Orthonormalizes `k` Gaussian rows in `ℝ^d` with modified Gram–Schmidt.
pub fn random_orthonormal_rows(d: usize, k: usize, rng: &mut Rng64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("need 1 ≤ k ≤ d, got k={k}, d={d}")));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    for r in 0..k {
        let mut accepted = None;
        for _ in 0..MAX_ROW_RETRIES {
            let mut v = rng.normal_vec(d);
            let start = norm(&v);
            for q in &rows {
                let proj = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
            let residual = norm(&v);
            if residual > DEGENERATE_RESIDUAL * start.max(f64::MIN_POSITIVE) {
                v.iter_mut().for_each(|vi| *vi /= residual);
                accepted = Some(v);
                break;
            }
        }
        match accepted {
            Some(v) => rows.push(v),
            None => {
                return Err(Error::Degenerate(format!(
                    "row {r} stayed in the span of earlier rows after {MAX_ROW_RETRIES} draws"
                )))
            }
        }
    }
    Ok(rows)
}

pub fn gen_subspace_embedding(d: usize, k: usize, inner: TargetFunction, seed: u64) -> Result<SubspaceEmbedding> {
    check_dim(k, inner.dim())?;
    let mut rng = Rng64::new(seed);
    let rows = random_orthonormal_rows(d, k, &mut rng)?;
    Ok(SubspaceEmbedding {
        ambient_dim: d,
        intrinsic_dim: k,
        rows,
        inner: Box::new(inner),
        seed,
    })
}

impl SubspaceEmbedding {
    /// `A x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| dot(r, x)).collect()
    }

    /// `Aᵀ u`.
    pub fn lift(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ambient_dim];
        for (row, &ui) in self.rows.iter().zip(u) {
            for (xi, ri) in x.iter_mut().zip(row) {
                *xi += ui * ri;
            }
        }
        x
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.ambient_dim, x.len())?;
        self.inner.eval(&self.project(x))
    }

    /// Uniform point on the slice `{Aᵀu} ∩ [-1,1]^d`; see [`sample_slice_point`].
    pub fn sample_slice(&self, rng: &mut Rng64) -> Result<Vec<f64>> {
        sample_slice_point(&self.rows, rng)
    }
}

/// Uniform point on `{Aᵀu} ∩ [-1,1]^d` for orthonormal `rows`, returned in
/// ambient coordinates. Rejection sampling from the box `|u_i| ≤ ‖a_i‖₁`,
/// which contains the slice because `u_i = a_iᵀx` for `x` in the cube.
pub fn sample_slice_point(rows: &[Vec<f64>], rng: &mut Rng64) -> Result<Vec<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    let bounds: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).collect();
    for _ in 0..MAX_SLICE_ATTEMPTS {
        let mut x = vec![0.0; d];
        for (row, &b) in rows.iter().zip(&bounds) {
            let ui = rng.uniform_in(-b, b);
            for (xi, ri) in x.iter_mut().zip(row) {
                *xi += ui * ri;
            }
        }
        if x.iter().all(|v| v.abs() <= 1.0) {
            return Ok(x);
        }
    }
    Err(Error::Unattainable(format!(
        "slice rejection sampler exceeded {MAX_SLICE_ATTEMPTS} attempts (k={} is too large for rejection sampling)",
        rows.len()
    )))
}
