use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsh::{EuclideanLsh, LshFamily};
use crate::metrics::{actual_flops, ideal_flops, MetricsRecord, ModelKind};
use crate::models::{calibrate_width, lsh_ensemble_predict, Activation, DenseModel, DsmModel, LshLearner, TopLayerModel};
use crate::par;
use crate::rng::derive_seed;
use crate::targets::Dataset;
use crate::training::{mse, predict_all, sup_error, train, OptimizerConfig};

/// Width used for LSH families when neither a width nor calibration is given.
pub const DEFAULT_LSH_WIDTH: f64 = 0.5;

/// LSH width selection: a fixed width, or calibrated so every training
/// bucket has diameter at most `epsilon / lipschitz`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum LshWidth {
    Fixed { width: f64 },
    Calibrated { epsilon: f64, lipschitz: f64 },
}

impl LshWidth {
    fn resolve(&self, template: &EuclideanLsh, inputs: &[Vec<f64>]) -> Result<f64> {
        match *self {
            LshWidth::Fixed { width } => Ok(width),
            LshWidth::Calibrated { epsilon, lipschitz } => {
                if !(epsilon > 0.0 && lipschitz > 0.0) {
                    return Err(Error::InvalidArgument("epsilon and lipschitz must be positive".into()));
                }
                calibrate_width(template, inputs, epsilon / lipschitz)
            }
        }
    }
}

/// One model configuration of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Units in the top layer. Unused by the LSH learner.
    pub width: usize,
    /// Activated fraction of the width (`1.0` for dense).
    pub sparsity: f64,
    pub activation: Activation,
    /// Hyperplanes per LSH family (LSH learner and LSH routing).
    pub planes: usize,
    pub lsh_width: LshWidth,
    /// Number of LSH tables averaged by the LSH learner.
    pub tables: usize,
    /// Per-bucket polynomial degree of the LSH learner.
    pub degree: u32,
    /// Projection size of random-hash routing; the input dimension if absent.
    pub mask_dim: Option<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Dense,
            width: 256,
            sparsity: 1.0,
            activation: Activation::Relu,
            planes: 16,
            lsh_width: LshWidth::Fixed { width: DEFAULT_LSH_WIDTH },
            tables: 1,
            degree: 0,
            mask_dim: None,
        }
    }
}

impl ModelSpec {
    /// Activated units `round(sparsity · width)`, checked against the width.
    pub fn active_units(&self) -> Result<usize> {
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::InvalidArgument(format!("sparsity {} outside (0, 1]", self.sparsity)));
        }
        let k = (self.sparsity * self.width as f64).round() as usize;
        if k == 0 || k > self.width {
            return Err(Error::InvalidArgument(format!(
                "sparsity {} of width {} activates no units",
                self.sparsity, self.width
            )));
        }
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::Dense => {
                if self.sparsity != 1.0 {
                    return Err(Error::InvalidArgument("dense models have sparsity 1".into()));
                }
                self.active_units().map(|_| ())
            }
            ModelKind::DsmTopK | ModelKind::RandomHash => self.active_units().map(|_| ()),
            ModelKind::DsmLsh => {
                let k = self.active_units()?;
                if !self.width.is_multiple_of(k) {
                    return Err(Error::InvalidArgument(format!(
                        "LSH routing needs the width {} to split into blocks of {k}",
                        self.width
                    )));
                }
                Ok(())
            }
            ModelKind::Lsh => {
                if self.tables == 0 || self.planes == 0 {
                    return Err(Error::InvalidArgument("LSH learner needs ≥ 1 table and plane".into()));
                }
                Ok(())
            }
        }
    }
}

/// Builds, trains and evaluates one model. `seed` drives every random choice
/// of the model and of the optimizer's shuffling; `record_seed` is written to
/// the record's seed column.
pub fn run_model(
    spec: &ModelSpec,
    train_data: &Dataset,
    test_data: &Dataset,
    optimizer: &OptimizerConfig,
    seed: u64,
    record_seed: u64,
) -> Result<MetricsRecord> {
    spec.validate()?;
    if train_data.is_empty() || test_data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = train_data.dim();
    crate::error::check_dim(d, test_data.dim())?;
    let started = Instant::now();
    let mut record = match spec.kind {
        ModelKind::Lsh => run_lsh(spec, train_data, test_data, seed)?,
        _ => run_trained(spec, train_data, test_data, optimizer, seed)?,
    };
    record.seed = record_seed;
    record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(record)
}

fn build_top_layer_model(spec: &ModelSpec, d: usize, seed: u64) -> Result<Box<dyn TopLayerModel + Send>> {
    let t = spec.width;
    let act = spec.activation;
    Ok(match spec.kind {
        ModelKind::Dense => Box::new(DenseModel::new(d, t, act, seed)?),
        ModelKind::DsmTopK => Box::new(DsmModel::top_k(d, t, spec.active_units()?, act, seed)?),
        ModelKind::RandomHash => Box::new(DsmModel::random_hash(
            d,
            t,
            spec.active_units()?,
            spec.mask_dim.unwrap_or(d),
            act,
            seed,
        )?),
        ModelKind::DsmLsh => {
            let block = spec.active_units()?;
            let width = match spec.lsh_width {
                LshWidth::Fixed { width } => width,
                LshWidth::Calibrated { .. } => {
                    return Err(Error::InvalidArgument(
                        "LSH routing takes a fixed LSH width".into(),
                    ))
                }
            };
            let family = EuclideanLsh::new(d, spec.planes, width, derive_seed(seed, &[0x6c7368]))?;
            Box::new(DsmModel::lsh_routed(LshFamily::Euclidean(family), t / block, block, act, seed)?)
        }
        ModelKind::Lsh => unreachable!("LSH learners are not trained by gradient"),
    })
}

fn run_trained(
    spec: &ModelSpec,
    train_data: &Dataset,
    test_data: &Dataset,
    optimizer: &OptimizerConfig,
    seed: u64,
) -> Result<MetricsRecord> {
    let d = train_data.dim();
    let mut model = build_top_layer_model(spec, d, seed)?;
    let config = OptimizerConfig {
        seed: derive_seed(seed, &[0x73687566]),
        ..optimizer.clone()
    };
    let history = train(model.as_mut(), train_data, None, &config)?;
    let preds = predict_all(model.as_ref(), &test_data.inputs)?;
    let u = model.activated_units();
    let r = model.routing_flops();
    Ok(MetricsRecord {
        model_kind: spec.kind,
        width: spec.width,
        sparsity: u as f64 / spec.width as f64,
        activated_units: u,
        ideal_flops: ideal_flops(u as u64, d as u64),
        actual_flops: actual_flops(spec.kind, spec.width as u64, u as u64, d as u64, r),
        routing_flops: r,
        train_mse: history.train_mse.last().copied().unwrap_or(f64::NAN),
        eval_mse: mse(&preds, &test_data.targets)?,
        sup_error: sup_error(&preds, &test_data.targets)?,
        fallback_count: 0,
        seed: 0,
        epochs: config.epochs,
        lr: config.learning_rate,
        wall_ms: 0.0,
    })
}

/// Fits the LSH learner tables described by `spec`.
pub fn fit_lsh_tables(spec: &ModelSpec, train_data: &Dataset, seed: u64) -> Result<Vec<LshLearner>> {
    let d = train_data.dim();
    let fit_one = |table: usize| -> Result<LshLearner> {
        let family_seed = derive_seed(seed, &[0x7461626c, table as u64]);
        let template = EuclideanLsh::new(d, spec.planes, 1.0, family_seed)?;
        let width = spec.lsh_width.resolve(&template, &train_data.inputs)?;
        let mut learner = LshLearner::new(template.with_width(width)?, spec.degree);
        learner.fit(train_data)?;
        Ok(learner)
    };
    (0..spec.tables).map(fit_one).collect()
}

fn run_lsh(spec: &ModelSpec, train_data: &Dataset, test_data: &Dataset, seed: u64) -> Result<MetricsRecord> {
    let d = train_data.dim();
    let learners = fit_lsh_tables(spec, train_data, seed)?;
    let predict = |xs: &[Vec<f64>]| -> Result<Vec<f64>> {
        par::map_slice(xs, |x| lsh_ensemble_predict(&learners, None, x))
            .into_iter()
            .collect()
    };
    let train_preds = predict(&train_data.inputs)?;
    learners.iter().for_each(LshLearner::reset_fallback_count);
    let preds = predict(&test_data.inputs)?;
    let fallback: u64 = learners.iter().map(LshLearner::fallback_count).sum();
    let buckets: usize = learners.iter().map(|l| l.table().non_empty()).sum();
    let u = learners.len();
    let r: u64 = learners.iter().map(LshLearner::hash_flops).sum();
    Ok(MetricsRecord {
        model_kind: ModelKind::Lsh,
        width: buckets,
        sparsity: u as f64 / buckets as f64,
        activated_units: u,
        ideal_flops: ideal_flops(u as u64, d as u64),
        actual_flops: actual_flops(ModelKind::Lsh, buckets as u64, u as u64, d as u64, r),
        routing_flops: r,
        train_mse: mse(&train_preds, &train_data.targets)?,
        eval_mse: mse(&preds, &test_data.targets)?,
        sup_error: sup_error(&preds, &test_data.targets)?,
        fallback_count: fallback,
        seed: 0,
        epochs: 0,
        lr: 0.0,
        wall_ms: 0.0,
    })
}
