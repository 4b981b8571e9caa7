use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::dist;
use crate::rng::Rng64;

const MAX_CENTERS: usize = 1 << 22;

/// Sum of signed cones on a regular grid.
///
/// The grid tiles `[-half_extent, half_extent]^k` (centred) with cubes of side
/// `2ε/L`; each cube centre `v` carries a value `s_v = ±ε` and the function is
/// `Σ_v sgn(s_v)·max(0, ε − L‖x − v‖)`. Cone supports are the balls inscribed
/// in the grid cubes, so they have disjoint interiors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeFunctionSpec {
    pub intrinsic_dim: usize,
    pub lipschitz: f64,
    pub epsilon: f64,
    pub half_extent: f64,
    pub per_axis: usize,
    /// Coordinate of the first centre along every axis.
    pub origin: f64,
    pub centers: Vec<Vec<f64>>,
    pub signs: Vec<f64>,
    pub seed: u64,
}

impl ConeFunctionSpec {
    pub fn spacing(&self) -> f64 {
        2.0 * self.epsilon / self.lipschitz
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.intrinsic_dim, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    /// Only the nearest grid centre can contribute; clamping each axis index
    /// gives that centre for any `x`, inside the grid or not.
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let spacing = self.spacing();
        let mut flat = 0usize;
        for &xi in x {
            let j = ((xi - self.origin) / spacing).round();
            let j = j.clamp(0.0, (self.per_axis - 1) as f64) as usize;
            flat = flat * self.per_axis + j;
        }
        self.cone_term(flat, x)
    }

    fn cone_term(&self, index: usize, x: &[f64]) -> f64 {
        let s = self.signs[index];
        let r = dist(&self.centers[index], x);
        s.signum() * (s.abs() - self.lipschitz * r).max(0.0)
    }

    /// Brute-force sum over every centre.
    pub fn eval_all_terms(&self, x: &[f64]) -> f64 {
        (0..self.centers.len()).map(|i| self.cone_term(i, x)).sum()
    }

    /// Copy with the sign at `index` flipped.
    pub fn with_flipped(&self, index: usize) -> Self {
        let mut out = self.clone();
        out.signs[index] = -out.signs[index];
        out
    }
}

pub fn gen_cone_function(k: usize, lipschitz: f64, epsilon: f64, half_extent: f64, seed: u64) -> Result<ConeFunctionSpec> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if !(lipschitz > 0.0 && epsilon > 0.0 && half_extent > 0.0) {
        return Err(Error::InvalidArgument(
            "lipschitz, epsilon and half_extent must be positive".into(),
        ));
    }
    let spacing = 2.0 * epsilon / lipschitz;
    let per_axis = ((2.0 * half_extent / spacing) + 1e-9).floor() as usize;
    if per_axis == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid spacing {spacing} exceeds the region width {}",
            2.0 * half_extent
        )));
    }
    let total = (per_axis as u128).pow(k as u32);
    if total > MAX_CENTERS as u128 {
        return Err(Error::InvalidArgument(format!("{total} cone centres exceed the cap {MAX_CENTERS}")));
    }
    let origin = -(per_axis as f64) * spacing / 2.0 + spacing / 2.0;
    let mut rng = Rng64::new(seed);
    let mut centers = Vec::with_capacity(total as usize);
    let mut signs = Vec::with_capacity(total as usize);
    for flat in 0..total as usize {
        let mut rem = flat;
        let mut c = vec![0.0; k];
        for axis in (0..k).rev() {
            c[axis] = origin + (rem % per_axis) as f64 * spacing;
            rem /= per_axis;
        }
        centers.push(c);
        signs.push(rng.sign() * epsilon);
    }
    Ok(ConeFunctionSpec {
        intrinsic_dim: k,
        lipschitz,
        epsilon,
        half_extent,
        per_axis,
        origin,
        centers,
        signs,
        seed,
    })
}
