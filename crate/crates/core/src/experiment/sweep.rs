use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{write_metrics_csv, MetricsRecord, ModelKind};
use crate::models::Activation;
use crate::par;
use crate::rng::derive_seed;
use crate::targets::{sample_dataset, Dataset, Distribution};
use crate::training::OptimizerConfig;

use super::function::FunctionConfig;
use super::run::{run_model, LshWidth, ModelSpec};

const TRAIN_TAG: u64 = 0x747261696e;
const TEST_TAG: u64 = 0x74657374;

fn default_train_n() -> usize {
    1 << 13
}

fn default_test_n() -> usize {
    1 << 12
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_widths() -> Vec<usize> {
    vec![256, 512, 1024]
}

fn default_sparsities() -> Vec<f64> {
    vec![1.0]
}

fn default_planes() -> usize {
    16
}

fn default_tables() -> usize {
    1
}

fn default_lipschitz() -> f64 {
    1.0
}

/// One row of the model grid. Expands to `widths × sparsities` runs, or for
/// the LSH learner to one run per entry of `lsh_widths` then `epsilons`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub kind: ModelKind,
    /// `topk` (default) or `lsh`; only meaningful for `kind = "dsm"`.
    #[serde(default)]
    pub routing: Option<String>,
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_sparsities")]
    pub sparsities: Vec<f64>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_planes")]
    pub planes: usize,
    /// Fixed LSH widths (LSH learner, or the single width of LSH routing).
    #[serde(default)]
    pub lsh_widths: Vec<f64>,
    /// Target errors for calibrated LSH learners.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_lipschitz")]
    pub lipschitz: f64,
    #[serde(default = "default_tables")]
    pub tables: usize,
    #[serde(default)]
    pub degree: u32,
    #[serde(default)]
    pub mask_dim: Option<usize>,
}

impl GridEntry {
    fn resolved_kind(&self) -> Result<ModelKind> {
        match (self.kind, self.routing.as_deref()) {
            (kind, None) => Ok(kind),
            (ModelKind::DsmTopK, Some("topk")) => Ok(ModelKind::DsmTopK),
            (ModelKind::DsmTopK | ModelKind::DsmLsh, Some("lsh")) => Ok(ModelKind::DsmLsh),
            (kind, Some(r)) => Err(Error::InvalidArgument(format!("routing {r:?} does not apply to {kind}"))),
        }
    }

    /// Concrete run specs in grid order.
    pub fn expand(&self) -> Result<Vec<ModelSpec>> {
        let kind = self.resolved_kind()?;
        let base = ModelSpec {
            kind,
            activation: self.activation,
            planes: self.planes,
            tables: self.tables,
            degree: self.degree,
            mask_dim: self.mask_dim,
            ..ModelSpec::default()
        };
        let mut out = Vec::new();
        if kind == ModelKind::Lsh {
            for &width in &self.lsh_widths {
                out.push(ModelSpec {
                    lsh_width: LshWidth::Fixed { width },
                    ..base.clone()
                });
            }
            for &epsilon in &self.epsilons {
                out.push(ModelSpec {
                    lsh_width: LshWidth::Calibrated {
                        epsilon,
                        lipschitz: self.lipschitz,
                    },
                    ..base.clone()
                });
            }
            if out.is_empty() {
                return Err(Error::InvalidArgument(
                    "an lsh grid entry needs lsh_widths or epsilons".into(),
                ));
            }
        } else {
            let lsh_width = match self.lsh_widths.as_slice() {
                [] => base.lsh_width,
                [w] => LshWidth::Fixed { width: *w },
                _ => {
                    return Err(Error::InvalidArgument(
                        "LSH routing takes a single lsh width per grid entry".into(),
                    ))
                }
            };
            for &width in &self.widths {
                for &sparsity in &self.sparsities {
                    out.push(ModelSpec {
                        width,
                        sparsity,
                        lsh_width,
                        ..base.clone()
                    });
                }
            }
        }
        for spec in &out {
            spec.validate()?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub function: FunctionConfig,
    /// The function's natural distribution if absent.
    #[serde(default)]
    pub distribution: Option<Distribution>,
    #[serde(default = "default_train_n")]
    pub train_n: usize,
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    pub models: Vec<GridEntry>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Trial seeds; each trial draws fresh train and test sets.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidArgument("empty model grid".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("no trial seeds".into()));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::InvalidArgument("trial seeds must be distinct".into()));
        }
        if self.train_n == 0 || self.test_n == 0 {
            return Err(Error::InvalidArgument("train_n and test_n must be positive".into()));
        }
        self.optimizer.validate()?;
        self.grid().map(|_| ())
    }

    /// All run specs in grid order.
    pub fn grid(&self) -> Result<Vec<ModelSpec>> {
        let mut out = Vec::new();
        for entry in &self.models {
            out.extend(entry.expand()?);
        }
        Ok(out)
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution.unwrap_or_else(|| self.function.natural_distribution())
    }

    /// Train and test sets of one trial; shared by every model of the trial.
    pub fn trial_data(&self, trial_seed: u64) -> Result<(Dataset, Dataset)> {
        let f = self.function.build()?;
        let dist = self.distribution();
        let train = sample_dataset(&f, self.train_n, derive_seed(self.global_seed, &[TRAIN_TAG, trial_seed]), dist)?;
        let test = sample_dataset(&f, self.test_n, derive_seed(self.global_seed, &[TEST_TAG, trial_seed]), dist)?;
        Ok((train, test))
    }

    /// Seed of the model at grid position `grid_index` in trial `trial_seed`.
    pub fn run_seed(&self, grid_index: usize, trial_seed: u64) -> u64 {
        derive_seed(self.global_seed, &[grid_index as u64, trial_seed])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub grid_index: usize,
    pub seed: u64,
    pub model_kind: ModelKind,
    pub width: usize,
    pub sparsity: f64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepOutcome {
    /// Successful runs in grid order × seed order.
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<RunFailure>,
}

/// Runs every grid entry against every trial seed, in parallel. Per-run
/// errors become [`RunFailure`]s; only configuration and data-generation
/// errors abort the sweep.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let grid = config.grid()?;
    let data: Vec<(Dataset, Dataset)> = par::map_slice(&config.seeds, |&s| config.trial_data(s))
        .into_iter()
        .collect::<Result<_>>()?;
    let trials = config.seeds.len();
    let results = par::map_range(grid.len() * trials, |i| {
        let (g, t) = (i / trials, i % trials);
        let seed = config.seeds[t];
        let (train, test) = &data[t];
        run_model(&grid[g], train, test, &config.optimizer, config.run_seed(g, seed), seed).map_err(|e| RunFailure {
            grid_index: g,
            seed,
            model_kind: grid[g].kind,
            width: grid[g].width,
            sparsity: grid[g].sparsity,
            error: e.to_string(),
        })
    });
    let mut outcome = SweepOutcome::default();
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => outcome.failures.push(f),
        }
    }
    Ok(outcome)
}

/// `results.csv` → `results.errors.csv`.
pub fn errors_path(results: &Path) -> PathBuf {
    let stem = results.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    results.with_file_name(format!("{stem}.errors.csv"))
}

pub fn write_failures_csv<W: Write>(out: W, failures: &[RunFailure]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for f in failures {
        w.serialize(f).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the metrics CSV and, when runs failed, the errors file next to it.
/// A stale errors file from an earlier sweep is removed.
pub fn write_sweep_outputs(outcome: &SweepOutcome, path: &Path) -> Result<()> {
    write_metrics_csv(std::fs::File::create(path)?, &outcome.records)?;
    let err_path = errors_path(path);
    if outcome.failures.is_empty() {
        if err_path.exists() {
            std::fs::remove_file(&err_path)?;
        }
    } else {
        write_failures_csv(std::fs::File::create(&err_path)?, &outcome.failures)?;
    }
    Ok(())
}
