use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dsm_core::experiment::{
    bucket_report, render_svg, run_model, run_sweep, write_sweep_outputs, BucketReportConfig, FunctionConfig,
    FunctionFamily, LshWidth, ModelSpec, SweepConfig, XAxis, YAxis, DEFAULT_LSH_WIDTH,
};
use dsm_core::metrics::{append_metrics_csv, read_metrics_csv, ModelKind};
use dsm_core::models::Activation;
use dsm_core::targets::{sample_dataset, sidecar_path, CoefficientNorm, Dataset, Distribution};
use dsm_core::training::{OptimizerConfig, OptimizerKind};

/// Exit status for runs that started but did not all succeed.
const EXIT_RUN_FAILURE: u8 = 2;
const EXIT_USAGE: u8 = 1;

#[derive(Parser)]
#[command(name = "dsm", version, about = "Sparse-model and LSH experiments on synthetic Lipschitz targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a synthetic target and write CSV + JSON sidecar.
    GenData(GenDataArgs),
    /// Build, train and evaluate one model; append a metrics row.
    TrainEval(TrainEvalArgs),
    /// Run a model grid over trial seeds from a JSON config.
    Sweep(SweepArgs),
    /// Bucket geometry of Euclidean LSH on random subspace slices.
    BucketStats(BucketStatsArgs),
    /// Render a metrics CSV as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long = "fn", value_parser = ["poly", "hypercube", "subspace-poly", "cone", "fourier"])]
    function: String,
    /// Ambient input dimension (poly, hypercube, subspace-poly).
    #[arg(long)]
    d: Option<usize>,
    /// Polynomial degree (poly, subspace-poly).
    #[arg(long)]
    degree: Option<u32>,
    /// Intrinsic dimension (subspace-poly, cone, fourier).
    #[arg(long)]
    k: Option<usize>,
    /// Number of monomials; all monomials up to the degree if absent.
    #[arg(long)]
    terms: Option<usize>,
    #[arg(long, value_parser = ["inverse-degree", "unit-sum"])]
    norm: Option<String>,
    #[arg(long)]
    lipschitz: Option<f64>,
    /// Cone height ε.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Cone grid covers [-half_extent, half_extent]^k.
    #[arg(long)]
    half_extent: Option<f64>,
    /// Fourier frequency cutoff 1/ε₁.
    #[arg(long)]
    inv_eps1: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Fourier amplitude constant C.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_parser = ["uniform-cube", "subspace-slice"])]
    distribution: Option<String>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the target function; defaults to --seed.
    #[arg(long)]
    fn_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainEvalArgs {
    #[arg(long, value_parser = ["dense", "dsm", "lsh", "randhash"])]
    model: String,
    #[arg(long)]
    width: Option<usize>,
    /// Activated fraction of the width.
    #[arg(long)]
    sparsity: Option<f64>,
    /// DSM routing.
    #[arg(long, value_parser = ["topk", "lsh"])]
    routing: Option<String>,
    /// Hyperplanes per LSH family.
    #[arg(long)]
    planes: Option<usize>,
    #[arg(long, conflicts_with = "auto_calibrate")]
    lsh_width: Option<f64>,
    /// Pick the LSH width so training buckets have diameter ≤ eps / lipschitz.
    #[arg(long, requires = "eps")]
    auto_calibrate: bool,
    #[arg(long, requires = "auto_calibrate")]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1.0, requires = "auto_calibrate")]
    lipschitz: f64,
    /// LSH tables averaged by the LSH learner.
    #[arg(long)]
    tables: Option<usize>,
    /// Per-bucket polynomial degree of the LSH learner.
    #[arg(long)]
    degree: Option<u32>,
    /// Projection size of random-hash routing.
    #[arg(long)]
    mask_dim: Option<usize>,
    #[arg(long, default_value = "relu", value_parser = ["identity", "relu", "indicator"])]
    activation: String,
    /// Training dataset CSV.
    #[arg(long)]
    train: PathBuf,
    /// Test dataset CSV.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "rmsprop", value_parser = ["gd", "sgd", "rmsprop"])]
    optimizer: String,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    stabilizer: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metrics CSV to append to.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Results CSV; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BucketStatsArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    planes: usize,
    #[arg(long)]
    lsh_width: f64,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "activated_units", value_parser = ["activated_units", "width", "ideal_flops"])]
    x: String,
    #[arg(long, default_value = "eval_mse", value_parser = ["eval_mse", "sup_error"])]
    y: String,
    #[arg(long)]
    out: PathBuf,
}

/// An error raised after work started: a failed run rather than bad input.
#[derive(Debug)]
struct RunFailed(String);

impl std::fmt::Display for RunFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RunFailed {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainEval(a) => train_eval(a),
        Command::Sweep(a) => sweep(a),
        Command::BucketStats(a) => bucket_stats(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<RunFailed>().is_some() {
                ExitCode::from(EXIT_RUN_FAILURE)
            } else {
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}

fn reject_flags(family: &str, flags: &[(&str, bool)]) -> Result<()> {
    let given: Vec<&str> = flags.iter().filter(|(_, set)| *set).map(|(name, _)| *name).collect();
    if given.is_empty() {
        Ok(())
    } else {
        bail!("--fn {family} does not take {}", given.join(", "))
    }
}

fn need<T>(value: Option<T>, flag: &str, family: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("--fn {family} requires {flag}"))
}

fn parse_norm(norm: Option<&str>) -> CoefficientNorm {
    match norm {
        Some("unit-sum") => CoefficientNorm::UnitSum,
        _ => CoefficientNorm::InverseDegree,
    }
}

fn function_from_flags(a: &GenDataArgs) -> Result<FunctionFamily> {
    let f = a.function.as_str();
    let poly_flags = [("--degree", a.degree.is_some()), ("--terms", a.terms.is_some()), ("--norm", a.norm.is_some())];
    let cone_flags = [("--epsilon", a.epsilon.is_some()), ("--half-extent", a.half_extent.is_some())];
    let fourier_flags = [
        ("--inv-eps1", a.inv_eps1.is_some()),
        ("--alpha", a.alpha.is_some()),
        ("--c", a.c.is_some()),
    ];
    let family = match f {
        "poly" | "hypercube" | "subspace-poly" => {
            reject_flags(f, &cone_flags)?;
            reject_flags(f, &fourier_flags)?;
            reject_flags(f, &[("--lipschitz", a.lipschitz.is_some())])?;
            let d = need(a.d, "--d", f)?;
            match f {
                "poly" => {
                    reject_flags(f, &[("--k", a.k.is_some())])?;
                    FunctionFamily::Poly {
                        d,
                        degree: need(a.degree, "--degree", f)?,
                        terms: a.terms,
                        norm: parse_norm(a.norm.as_deref()),
                    }
                }
                "hypercube" => {
                    reject_flags(f, &[("--k", a.k.is_some())])?;
                    reject_flags(f, &poly_flags)?;
                    FunctionFamily::Hypercube { d }
                }
                _ => FunctionFamily::SubspacePoly {
                    d,
                    k: need(a.k, "--k", f)?,
                    degree: need(a.degree, "--degree", f)?,
                    terms: a.terms,
                    norm: parse_norm(a.norm.as_deref()),
                },
            }
        }
        "cone" => {
            reject_flags(f, &poly_flags)?;
            reject_flags(f, &fourier_flags)?;
            reject_flags(f, &[("--d", a.d.is_some())])?;
            FunctionFamily::Cone {
                k: need(a.k, "--k", f)?,
                lipschitz: a.lipschitz.unwrap_or(1.0),
                epsilon: need(a.epsilon, "--epsilon", f)?,
                half_extent: a.half_extent.unwrap_or(1.0),
            }
        }
        "fourier" => {
            reject_flags(f, &poly_flags)?;
            reject_flags(f, &cone_flags)?;
            reject_flags(f, &[("--d", a.d.is_some())])?;
            FunctionFamily::Fourier {
                k: need(a.k, "--k", f)?,
                inv_eps1: need(a.inv_eps1, "--inv-eps1", f)?,
                alpha: a.alpha,
                c: a.c.unwrap_or(4.0),
                lipschitz: a.lipschitz.unwrap_or(1.0),
            }
        }
        other => bail!("unknown function family {other}"),
    };
    Ok(family)
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let config = FunctionConfig {
        family: function_from_flags(&a)?,
        seed: a.fn_seed.unwrap_or(a.seed),
    };
    let function = config.build()?;
    let distribution = match a.distribution.as_deref() {
        Some(s) => s.parse::<Distribution>()?,
        None => config.natural_distribution(),
    };
    let data = sample_dataset(&function, a.n, a.seed, distribution)?;
    data.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let (lo, hi) = data.target_range().unwrap_or((f64::NAN, f64::NAN));
    println!(
        "wrote {} ({} rows, d={}, y in [{lo:.6}, {hi:.6}]) and {}",
        a.out.display(),
        data.len(),
        data.dim(),
        sidecar_path(&a.out).display()
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn model_spec(a: &TrainEvalArgs) -> Result<ModelSpec> {
    let model = a.model.as_str();
    let kind = match (model, a.routing.as_deref()) {
        ("dsm", None | Some("topk")) => ModelKind::DsmTopK,
        ("dsm", Some("lsh")) => ModelKind::DsmLsh,
        (_, Some(_)) => bail!("--routing only applies to --model dsm"),
        (other, None) => other.parse::<ModelKind>()?,
    };
    let uses_lsh = matches!(kind, ModelKind::Lsh | ModelKind::DsmLsh);
    if a.planes.is_some() && !uses_lsh {
        bail!("--planes only applies to LSH models");
    }
    if a.lsh_width.is_some() && !uses_lsh {
        bail!("--lsh-width only applies to LSH models");
    }
    if a.auto_calibrate && kind != ModelKind::Lsh {
        bail!("--auto-calibrate only applies to --model lsh");
    }
    if (a.tables.is_some() || a.degree.is_some()) && kind != ModelKind::Lsh {
        bail!("--tables and --degree only apply to --model lsh");
    }
    if a.mask_dim.is_some() && kind != ModelKind::RandomHash {
        bail!("--mask-dim only applies to --model randhash");
    }
    let mut spec = ModelSpec {
        kind,
        activation: a.activation.parse::<Activation>()?,
        planes: a.planes.unwrap_or(16),
        tables: a.tables.unwrap_or(1),
        degree: a.degree.unwrap_or(0),
        mask_dim: a.mask_dim,
        ..ModelSpec::default()
    };
    if kind == ModelKind::Lsh {
        if a.width.is_some() || a.sparsity.is_some() {
            bail!("--model lsh takes no --width or --sparsity");
        }
        spec.lsh_width = match (a.auto_calibrate, a.eps, a.lsh_width) {
            (true, Some(epsilon), _) => LshWidth::Calibrated {
                epsilon,
                lipschitz: a.lipschitz,
            },
            (false, _, Some(width)) => LshWidth::Fixed { width },
            _ => bail!("--model lsh needs --lsh-width or --auto-calibrate --eps"),
        };
    } else {
        spec.width = a.width.ok_or_else(|| anyhow!("--model {model} requires --width"))?;
        spec.sparsity = a.sparsity.unwrap_or(1.0);
        if kind == ModelKind::Dense && spec.sparsity != 1.0 {
            bail!("--model dense takes no --sparsity below 1");
        }
        spec.lsh_width = LshWidth::Fixed {
            width: a.lsh_width.unwrap_or(DEFAULT_LSH_WIDTH),
        };
    }
    spec.validate()?;
    Ok(spec)
}

fn optimizer(a: &TrainEvalArgs) -> Result<OptimizerConfig> {
    let defaults = OptimizerConfig::default();
    let config = OptimizerConfig {
        kind: a.optimizer.parse::<OptimizerKind>()?,
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        rho: a.rho.unwrap_or(defaults.rho),
        stabilizer: a.stabilizer.unwrap_or(defaults.stabilizer),
        seed: a.seed,
    };
    config.validate()?;
    Ok(config)
}

fn train_eval(a: TrainEvalArgs) -> Result<()> {
    let spec = model_spec(&a)?;
    let config = optimizer(&a)?;
    let train = load_dataset(&a.train)?;
    let test = load_dataset(&a.test)?;
    if train.dim() != test.dim() {
        bail!("train has d={} but test has d={}", train.dim(), test.dim());
    }
    let record = run_model(&spec, &train, &test, &config, a.seed, a.seed).map_err(|e| RunFailed(e.to_string()))?;
    append_metrics_csv(&a.out, std::slice::from_ref(&record))
        .with_context(|| format!("appending to {}", a.out.display()))?;
    println!("{}", serde_json::to_string(&record)?);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let config = SweepConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    let out = a
        .out
        .or_else(|| config.output.clone())
        .ok_or_else(|| anyhow!("no output path: pass --out or set \"output\" in the config"))?;
    let outcome = run_sweep(&config)?;
    write_sweep_outputs(&outcome, &out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "{} rows written to {}, {} failed runs",
        outcome.records.len(),
        out.display(),
        outcome.failures.len()
    );
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(RunFailed(format!(
            "{} of {} runs failed; see {}",
            outcome.failures.len(),
            outcome.failures.len() + outcome.records.len(),
            dsm_core::experiment::errors_path(&out).display()
        ))
        .into())
    }
}

fn bucket_stats(a: BucketStatsArgs) -> Result<()> {
    let report = bucket_report(&BucketReportConfig {
        d: a.d,
        k: a.k,
        planes: a.planes,
        lsh_width: a.lsh_width,
        samples: a.samples,
        trials: a.trials,
        seed: a.seed,
    })?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &a.out {
        std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{json}");
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let file = std::fs::File::open(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let records = read_metrics_csv(file)?;
    let svg = render_svg(&records, a.x.parse::<XAxis>()?, a.y.parse::<YAxis>()?)?;
    std::fs::write(&a.out, svg).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}
