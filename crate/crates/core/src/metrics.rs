//! Cost accounting and per-run metric records.
//!
//! Per activated unit a forward pass costs `2d` for the bottom row
//! multiply-add and `2` for the top-layer multiply-add, so
//! `ideal_flops(u, d) = u(2d + 2)`. This is the accounting that reproduces
//! the reported width/FLOPs table (1024 units at d = 8 give 18432).

use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TopLayerModel;

/// Header of the metrics CSV, in column order.
pub const METRICS_COLUMNS: [&str; 15] = [
    "model_kind",
    "width",
    "sparsity",
    "activated_units",
    "ideal_flops",
    "actual_flops",
    "routing_flops",
    "train_mse",
    "eval_mse",
    "sup_error",
    "fallback_count",
    "seed",
    "epochs",
    "lr",
    "wall_ms",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "dense")]
    Dense,
    /// DSM with Top-K routing.
    #[serde(rename = "dsm")]
    DsmTopK,
    /// DSM with LSH block routing.
    #[serde(rename = "dsm-lsh")]
    DsmLsh,
    /// DSM with random-hash routing.
    #[serde(rename = "randhash")]
    RandomHash,
    /// LSH bucket learner.
    #[serde(rename = "lsh")]
    Lsh,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dense => "dense",
            ModelKind::DsmTopK => "dsm",
            ModelKind::DsmLsh => "dsm-lsh",
            ModelKind::RandomHash => "randhash",
            ModelKind::Lsh => "lsh",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(ModelKind::Dense),
            "dsm" | "dsm-topk" => Ok(ModelKind::DsmTopK),
            "dsm-lsh" => Ok(ModelKind::DsmLsh),
            "randhash" => Ok(ModelKind::RandomHash),
            "lsh" => Ok(ModelKind::Lsh),
            other => Err(Error::InvalidArgument(format!("unknown model kind {other:?}"))),
        }
    }
}

pub fn ideal_flops(activated_units: u64, input_dim: u64) -> u64 {
    activated_units * (2 * input_dim + 2)
}

/// Forward-pass cost including work the ideal count leaves out.
///
/// Top-K computes the whole bottom layer before selecting; routed models only
/// touch their active rows; dense touches everything. `routing_flops` is added
/// for every sparse kind.
pub fn actual_flops(kind: ModelKind, width: u64, activated_units: u64, input_dim: u64, routing_flops: u64) -> u64 {
    match kind {
        ModelKind::Dense => ideal_flops(width, input_dim),
        ModelKind::DsmTopK => width * 2 * input_dim + 2 * activated_units + routing_flops,
        ModelKind::DsmLsh | ModelKind::RandomHash | ModelKind::Lsh => {
            ideal_flops(activated_units, input_dim) + routing_flops
        }
    }
}

/// Number of units the model activates on `x`.
pub fn count_activated<M: TopLayerModel + ?Sized>(model: &M, x: &[f64]) -> Result<usize> {
    Ok(model.active_features(x)?.units.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model_kind: ModelKind,
    pub width: usize,
    /// Activated fraction `s / t`.
    pub sparsity: f64,
    pub activated_units: usize,
    pub ideal_flops: u64,
    pub actual_flops: u64,
    pub routing_flops: u64,
    pub train_mse: f64,
    pub eval_mse: f64,
    pub sup_error: f64,
    pub fallback_count: u64,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub wall_ms: f64,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Csv(format!("{other:?}")),
    }
}

/// Writes a header and the records.
pub fn write_metrics_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    // `serialize` emits the header itself before the first row.
    if records.is_empty() {
        w.write_record(METRICS_COLUMNS).map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Appends rows to `path`, writing the header first if the file is new or empty.
pub fn append_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    if fresh {
        return write_metrics_csv(&mut file, records);
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut file);
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    for col in METRICS_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Csv(format!("missing column {col}")));
        }
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, DenseModel, DsmModel};

    #[test]
    fn ideal_examples() {
        assert_eq!(ideal_flops(1, 1), 4);
        assert_eq!(ideal_flops(1024, 8), 18432);
    }

    #[test]
    fn actual_examples() {
        for t in [1u64, 64, 1024] {
            assert_eq!(actual_flops(ModelKind::Dense, t, t, 8, 0), ideal_flops(t, 8));
            assert_eq!(
                actual_flops(ModelKind::DsmTopK, t, t, 8, 5),
                ideal_flops(t, 8) + 5
            );
        }
        assert_eq!(actual_flops(ModelKind::DsmLsh, 4096, 1024, 8, 272), 18432 + 272);
    }

    #[test]
    fn counts() {
        let dense = DenseModel::new(4, 20, Activation::Relu, 1).unwrap();
        let dsm = DsmModel::top_k(4, 20, 5, Activation::Relu, 1).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(count_activated(&dense, &x).unwrap(), 20);
        assert_eq!(count_activated(&dsm, &x).unwrap(), 5);
    }

    fn record(kind: ModelKind) -> MetricsRecord {
        MetricsRecord {
            model_kind: kind,
            width: 1024,
            sparsity: 0.25,
            activated_units: 256,
            ideal_flops: 4608,
            actual_flops: 16896,
            routing_flops: 0,
            train_mse: 0.01,
            eval_mse: 0.02,
            sup_error: 0.5,
            fallback_count: 0,
            seed: 42,
            epochs: 50,
            lr: 1e-3,
            wall_ms: 12.5,
        }
    }

    #[test]
    fn csv_header_and_roundtrip() {
        let rows = vec![record(ModelKind::DsmTopK), record(ModelKind::Dense)];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "model_kind,width,sparsity,activated_units,ideal_flops,actual_flops,routing_flops,train_mse,eval_mse,sup_error,fallback_count,seed,epochs,lr,wall_ms"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("dsm,1024,0.25,256,"));
        assert_eq!(read_metrics_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn append_writes_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        append_metrics_csv(&path, &[record(ModelKind::Lsh)]).unwrap();
        append_metrics_csv(&path, &[record(ModelKind::Dense)]).unwrap();
        let back = read_metrics_csv(std::fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].model_kind, ModelKind::Dense);
    }

    #[test]
    fn missing_column_rejected() {
        assert!(read_metrics_csv(&b"model_kind,width\ndense,4\n"[..]).is_err());
    }
}
