//! Top-layer training against mean-squared error.
//!
//! The bottom layer and routing are frozen, so each input's active features
//! are computed once and reused every epoch. The problem in `A` is convex.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, solve_ridge};
use crate::models::{ActiveFeatures, TopLayerModel};
use crate::par;
use crate::rng::Rng64;
use crate::targets::Dataset;

/// Train MSE above this aborts a run.
pub const DIVERGENCE_MSE: f64 = 1e6;
/// Ridge of the closed-form oracle, relative to the largest Gram diagonal.
pub const ORACLE_RIDGE: f64 = 1e-10;

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions, targets)?;
    let sum: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sum / predictions.len() as f64)
}

pub fn sup_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions, targets)?;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).abs())
        .fold(0.0, f64::max))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(a.len(), b.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Gd,
    Sgd,
    Rmsprop,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(OptimizerKind::Gd),
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            other => Err(Error::InvalidArgument(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Ignored by `gd`, which always uses the full batch.
    pub batch_size: usize,
    pub rho: f64,
    pub stabilizer: f64,
    /// Shuffling seed.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    /// Desk-scale defaults; see [`OptimizerConfig::reference`] for the longer reference run.
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Rmsprop,
            learning_rate: 3e-6,
            epochs: 50,
            batch_size: 64,
            rho: 0.9,
            stabilizer: 1e-8,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    /// RMSProp, learning rate 1e-5, 50 epochs.
    pub fn reference() -> Self {
        Self {
            learning_rate: 1e-5,
            ..Self::default()
        }
    }

    pub fn gd(learning_rate: f64, epochs: usize) -> Self {
        Self {
            kind: OptimizerKind::Gd,
            learning_rate,
            epochs,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rmsprop decay must lie in (0, 1)");
        }
        if !(self.stabilizer > 0.0) {
            return bad("rmsprop stabilizer must be positive");
        }
        if self.batch_size == 0 && self.kind != OptimizerKind::Gd {
            return bad("batch size must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_mse: Vec<f64>,
    pub eval_mse: Vec<Option<f64>>,
    pub wall_ms: Vec<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.train_mse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_mse.is_empty()
    }

    /// Columns `epoch,train_mse,eval_mse,wall_ms`; epochs count from 1 and a
    /// missing eval MSE is an empty field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["epoch", "train_mse", "eval_mse", "wall_ms"]).map_err(csv_err)?;
        for i in 0..self.len() {
            let eval = self.eval_mse[i].map(|v| format!("{v:?}")).unwrap_or_default();
            w.write_record([
                (i + 1).to_string(),
                format!("{:?}", self.train_mse[i]),
                eval,
                format!("{:.3}", self.wall_ms[i]),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Active features of every input, computed once.
pub fn feature_rows<M: TopLayerModel + ?Sized>(model: &M, inputs: &[Vec<f64>]) -> Result<Vec<ActiveFeatures>> {
    par::map_slice(inputs, |x| model.active_features(x)).into_iter().collect()
}

fn predictions(rows: &[ActiveFeatures], top: &[f64]) -> Vec<f64> {
    par::map_slice(rows, |f| f.dot_top(top))
}

fn cached_mse(rows: &[ActiveFeatures], targets: &[f64], top: &[f64]) -> f64 {
    let partial = par::map_chunks(rows.len(), |r| {
        r.map(|i| {
            let e = rows[i].dot_top(top) - targets[i];
            e * e
        })
        .sum::<f64>()
    });
    partial.iter().sum::<f64>() / rows.len() as f64
}

/// Mean over `batch` (indices into `rows`) of `2(g − y)·mask·φ`.
fn batch_gradient(rows: &[ActiveFeatures], targets: &[f64], batch: &[usize], top: &[f64]) -> Vec<f64> {
    let t = top.len();
    let partial = par::map_chunks(batch.len(), |r| {
        let mut g = vec![0.0; t];
        for &i in &batch[r] {
            let f = &rows[i];
            let residual = 2.0 * (f.dot_top(top) - targets[i]);
            for (&j, v) in f.units.iter().zip(&f.values) {
                g[j] += residual * v;
            }
        }
        g
    });
    let mut grad = vec![0.0; t];
    for g in partial {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    grad
}

/// Gradient of the batch MSE with respect to the top row.
pub fn top_layer_gradient<M: TopLayerModel + ?Sized>(model: &M, batch: &Dataset) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows = feature_rows(model, &batch.inputs)?;
    let idx: Vec<usize> = (0..rows.len()).collect();
    Ok(batch_gradient(&rows, &batch.targets, &idx, model.top()))
}

/// One RMSProp update. Returns the parameter delta; `v` is updated in place.
pub fn rmsprop_step(v: &mut [f64], grad: &[f64], config: &OptimizerConfig) -> Vec<f64> {
    v.iter_mut()
        .zip(grad)
        .map(|(vi, &g)| {
            *vi = config.rho * *vi + (1.0 - config.rho) * g * g;
            -config.learning_rate * g / (vi.sqrt() + config.stabilizer)
        })
        .collect()
}

/// Trains the top row of `model` in place.
pub fn train<M: TopLayerModel + ?Sized>(
    model: &mut M,
    train: &Dataset,
    eval: Option<&Dataset>,
    config: &OptimizerConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train.is_empty() || eval.is_some_and(Dataset::is_empty) {
        return Err(Error::EmptyInput);
    }
    let rows = feature_rows(&*model, &train.inputs)?;
    let eval_rows = eval.map(|e| feature_rows(&*model, &e.inputs)).transpose()?;
    let n = rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng64::new(config.seed);
    let mut v = vec![0.0; model.width()];
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        match config.kind {
            OptimizerKind::Gd => {
                let grad = batch_gradient(&rows, &train.targets, &order, model.top());
                for (a, g) in model.top_mut().iter_mut().zip(grad) {
                    *a -= config.learning_rate * g;
                }
            }
            OptimizerKind::Sgd | OptimizerKind::Rmsprop => {
                rng.shuffle(&mut order);
                for batch in order.chunks(config.batch_size) {
                    let grad = batch_gradient(&rows, &train.targets, batch, model.top());
                    let top = model.top_mut();
                    if config.kind == OptimizerKind::Sgd {
                        for (a, g) in top.iter_mut().zip(grad) {
                            *a -= config.learning_rate * g;
                        }
                    } else {
                        for (a, d) in top.iter_mut().zip(rmsprop_step(&mut v, &grad, config)) {
                            *a += d;
                        }
                    }
                }
            }
        }
        let train_mse = cached_mse(&rows, &train.targets, model.top());
        if !(train_mse <= DIVERGENCE_MSE) {
            return Err(Error::Diverged { epoch, mse: train_mse });
        }
        let eval_mse = match (&eval_rows, eval) {
            (Some(r), Some(e)) => Some(cached_mse(r, &e.targets, model.top())),
            _ => None,
        };
        history.train_mse.push(train_mse);
        history.eval_mse.push(eval_mse);
        history.wall_ms.push(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(history)
}

/// Predictions of `model` on every input.
pub fn predict_all<M: TopLayerModel + ?Sized>(model: &M, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(predictions(&feature_rows(model, inputs)?, model.top()))
}

fn feature_matrix(rows: &[ActiveFeatures], t: usize) -> DMatrix<f64> {
    let mut phi = DMatrix::<f64>::zeros(rows.len(), t);
    for (i, f) in rows.iter().enumerate() {
        for (&j, &v) in f.units.iter().zip(&f.values) {
            phi[(i, j)] = v;
        }
    }
    phi
}

/// Closed-form minimizer of the train MSE over the top row.
pub fn least_squares_oracle<M: TopLayerModel + ?Sized>(model: &M, train: &Dataset) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let phi = feature_matrix(&feature_rows(model, &train.inputs)?, model.width());
    let gram = phi.tr_mul(&phi);
    let rhs = phi.tr_mul(&DVector::from_column_slice(&train.targets));
    Ok(solve_ridge(&gram, &rhs, ORACLE_RIDGE)?.iter().copied().collect())
}

/// Power-iteration estimate of the largest eigenvalue of the train-MSE
/// Hessian `(2/n) ΦᵀΦ`. Full-batch GD with a step below `1 / λ` never
/// increases the train MSE.
pub fn hessian_spectral_norm<M: TopLayerModel + ?Sized>(model: &M, train: &Dataset, iterations: usize, seed: u64) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows = feature_rows(model, &train.inputs)?;
    let t = model.width();
    let scale = 2.0 / rows.len() as f64;
    let apply = |v: &[f64]| -> Vec<f64> {
        let partial = par::map_chunks(rows.len(), |r| {
            let mut out = vec![0.0; t];
            for f in &rows[r] {
                let s = f.dot_top(v);
                for (&j, &val) in f.units.iter().zip(&f.values) {
                    out[j] += s * val;
                }
            }
            out
        });
        let mut out = vec![0.0; t];
        for p in partial {
            for (a, b) in out.iter_mut().zip(p) {
                *a += b;
            }
        }
        out.iter_mut().for_each(|a| *a *= scale);
        out
    };
    let mut rng = Rng64::new(seed);
    let mut v = rng.normal_vec(t);
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let len = norm(&v);
        if len == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|a| *a /= len);
        let w = apply(&v);
        lambda = dot(&v, &w);
        v = w;
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, DenseModel, DsmModel};

    fn toy_data(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = Rng64::new(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).collect();
        let ys = xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>() - x[0]).collect();
        Dataset::new(xs, ys).unwrap()
    }

    #[test]
    fn mse_and_sup_examples() {
        assert_eq!(mse(&[0.0], &[2.0]).unwrap(), 4.0);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(sup_error(&[0.1, -0.3], &[0.0, 0.0]).unwrap(), 0.3);
        assert!(matches!(mse(&[], &[]), Err(Error::EmptyInput)));
        assert!(sup_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn scalar_gradient() {
        let mut m = DenseModel::from_weights(vec![vec![1.0]], vec![2.0], Activation::Identity).unwrap();
        let batch = Dataset::new(vec![vec![3.0]], vec![5.0]).unwrap();
        assert_eq!(top_layer_gradient(&m, &batch).unwrap(), vec![6.0]);
        m.top[0] = 5.0 / 3.0;
        assert!(top_layer_gradient(&m, &batch).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn rmsprop_scalar() {
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            ..OptimizerConfig::default()
        };
        let mut v = vec![0.0];
        let d = rmsprop_step(&mut v, &[1.0], &cfg);
        assert!((v[0] - 0.1).abs() < 1e-15);
        assert!((d[0] + 0.316227766).abs() < 1e-6);
        let d = rmsprop_step(&mut v, &[0.0], &cfg);
        assert_eq!(d[0], 0.0);
        assert!((v[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn zero_targets_stay_zero() {
        let mut m = DsmModel::top_k(3, 16, 4, Activation::Relu, 1).unwrap();
        let mut data = toy_data(64, 3, 2);
        data.targets.iter_mut().for_each(|y| *y = 0.0);
        let h = train(&mut m, &data, Some(&data), &OptimizerConfig::default()).unwrap();
        assert_eq!(h.len(), 50);
        assert!(h.train_mse.iter().all(|&v| v == 0.0));
        assert!(m.core.top.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn gd_descent_with_safe_step() {
        let mut m = DenseModel::new(4, 32, Activation::Relu, 3).unwrap();
        let data = toy_data(256, 4, 5);
        let lambda = hessian_spectral_norm(&m, &data, 200, 1).unwrap();
        let h = train(&mut m, &data, None, &OptimizerConfig::gd(0.9 / lambda, 200)).unwrap();
        assert!(h.train_mse.windows(2).all(|w| w[1] <= w[0]));
        assert!(h.eval_mse.iter().all(Option::is_none));
    }

    #[test]
    fn oracle_scalar_closed_form() {
        let m = DenseModel::from_weights(vec![vec![1.0]], vec![0.0], Activation::Identity).unwrap();
        let data = Dataset::new(vec![vec![1.0], vec![2.0], vec![-1.0]], vec![2.0, 3.0, 0.5]).unwrap();
        let want = (2.0 + 6.0 - 0.5) / (1.0 + 4.0 + 1.0);
        assert!((least_squares_oracle(&m, &data).unwrap()[0] - want).abs() < 1e-8);
    }

    #[test]
    fn never_active_units_unchanged() {
        // Units 0 and 1 never fire on inputs with a negative first coordinate.
        let bottom = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]];
        let mut m = DenseModel::from_weights(bottom, vec![0.7, -0.3, 0.0, 0.0], Activation::Relu).unwrap();
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![-0.5 - i as f64 * 0.01, 0.3]).collect();
        let data = Dataset::new(xs, vec![1.0; 20]).unwrap();
        let g = top_layer_gradient(&m, &data).unwrap();
        assert_eq!(&g[..2], &[0.0, 0.0]);
        train(&mut m, &data, None, &OptimizerConfig::default()).unwrap();
        assert_eq!(&m.top[..2], &[0.7, -0.3]);
    }

    #[test]
    fn deterministic_history() {
        let data = toy_data(200, 3, 9);
        let cfg = OptimizerConfig {
            epochs: 5,
            seed: 4,
            ..OptimizerConfig::default()
        };
        let run = || {
            let mut m = DsmModel::top_k(3, 64, 16, Activation::Relu, 2).unwrap();
            let h = train(&mut m, &data, Some(&data), &cfg).unwrap();
            (h.train_mse, m.core.top)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_guard() {
        let mut m = DenseModel::new(3, 16, Activation::Relu, 1).unwrap();
        let data = toy_data(64, 3, 1);
        let r = train(&mut m, &data, None, &OptimizerConfig::gd(1e4, 10));
        assert!(matches!(r, Err(Error::Diverged { .. })));
    }

    #[test]
    fn history_csv() {
        let h = TrainHistory {
            train_mse: vec![1.0, 0.5],
            eval_mse: vec![Some(2.0), None],
            wall_ms: vec![1.0, 2.0],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "epoch,train_mse,eval_mse,wall_ms");
        assert_eq!(text.lines().nth(2).unwrap(), "2,0.5,,2.000");
    }

    #[test]
    fn invalid_config() {
        let cfg = OptimizerConfig {
            rho: 1.0,
            ..OptimizerConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = OptimizerConfig::gd(-1.0, 1);
        assert!(cfg.validate().is_err());
    }
}
