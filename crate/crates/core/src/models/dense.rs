use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::dot;
use crate::rng::Rng64;

use super::{ActiveFeatures, TopLayerModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    #[default]
    Relu,
    /// Constant 1 on active units (turns a Top-K mask into a 0/1 indicator).
    Indicator,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Indicator => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "indicator" => Ok(Activation::Indicator),
            _ => Err(Error::InvalidArgument(format!("unknown activation {s:?}"))),
        }
    }
}

/// `g(x) = A·σ(Bx)` with `B` frozen after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseModel {
    pub input_dim: usize,
    pub width: usize,
    /// Row-major `width × input_dim`.
    bottom: Vec<f64>,
    pub top: Vec<f64>,
    pub activation: Activation,
    pub seed: u64,
}

impl DenseModel {
    /// Bottom entries `N(0, 1)/√d`, top row zero.
    pub fn new(input_dim: usize, width: usize, activation: Activation, seed: u64) -> Result<Self> {
        if input_dim == 0 || width == 0 {
            return Err(Error::InvalidArgument("input_dim and width must be positive".into()));
        }
        let scale = 1.0 / (input_dim as f64).sqrt();
        let mut rng = Rng64::new(seed);
        let bottom = (0..width * input_dim).map(|_| rng.normal() * scale).collect();
        Ok(Self {
            input_dim,
            width,
            bottom,
            top: vec![0.0; width],
            activation,
            seed,
        })
    }

    /// Explicit weights; `bottom` is given as rows.
    pub fn from_weights(bottom: Vec<Vec<f64>>, top: Vec<f64>, activation: Activation) -> Result<Self> {
        let width = bottom.len();
        if width == 0 {
            return Err(Error::InvalidArgument("bottom layer has no rows".into()));
        }
        let input_dim = bottom[0].len();
        for row in &bottom {
            check_dim(input_dim, row.len())?;
        }
        check_dim(width, top.len())?;
        Ok(Self {
            input_dim,
            width,
            bottom: bottom.into_iter().flatten().collect(),
            top,
            activation,
            seed: 0,
        })
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.bottom[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub(crate) fn set_row(&mut self, j: usize, values: &[f64]) {
        self.bottom[j * self.input_dim..(j + 1) * self.input_dim].copy_from_slice(values);
    }

    /// `Bx`.
    pub fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        self.bottom.chunks_exact(self.input_dim).map(|r| dot(r, x)).collect()
    }

    pub fn feature(&self, j: usize, x: &[f64]) -> f64 {
        self.activation.apply(dot(self.row(j), x))
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim, x.len())?;
        Ok(self
            .pre_activations(x)
            .into_iter()
            .zip(&self.top)
            .map(|(z, a)| a * self.activation.apply(z))
            .sum())
    }
}

impl TopLayerModel for DenseModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn width(&self) -> usize {
        self.width
    }

    fn top(&self) -> &[f64] {
        &self.top
    }

    fn top_mut(&mut self) -> &mut [f64] {
        &mut self.top
    }

    fn active_features(&self, x: &[f64]) -> Result<ActiveFeatures> {
        check_dim(self.input_dim, x.len())?;
        Ok(ActiveFeatures {
            units: (0..self.width).collect(),
            values: self
                .pre_activations(x)
                .into_iter()
                .map(|z| self.activation.apply(z))
                .collect(),
        })
    }

    fn activated_units(&self) -> usize {
        self.width
    }
}
