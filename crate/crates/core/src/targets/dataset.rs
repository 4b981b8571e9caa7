use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::Rng64;

use super::{SubspaceEmbedding, TargetFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    UniformCube,
    /// Uniform on the intersection of the embedding's row space with the cube.
    SubspaceSlice,
}

impl std::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-cube" | "cube" => Ok(Distribution::UniformCube),
            "subspace-slice" | "slice" => Ok(Distribution::SubspaceSlice),
            other => Err(Error::InvalidArgument(format!("unknown distribution {other:?}"))),
        }
    }
}

pub(crate) enum InputSampler<'a> {
    Cube(usize),
    Slice(&'a SubspaceEmbedding),
}

impl<'a> InputSampler<'a> {
    pub(crate) fn new(f: &'a TargetFunction, distribution: Distribution) -> Result<Self> {
        match distribution {
            Distribution::UniformCube => Ok(InputSampler::Cube(f.dim())),
            Distribution::SubspaceSlice => f.as_subspace().map(InputSampler::Slice).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "subspace-slice sampling needs a subspace-embedded function, got {}",
                    f.name()
                ))
            }),
        }
    }

    pub(crate) fn sample(&self, rng: &mut Rng64) -> Result<Vec<f64>> {
        match self {
            InputSampler::Cube(d) => Ok((0..*d).map(|_| rng.uniform_in(-1.0, 1.0)).collect()),
            InputSampler::Slice(e) => e.sample_slice(rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub function: String,
    pub params: TargetFunction,
    pub seed: u64,
    pub n: usize,
    pub distribution: Distribution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub meta: Option<DatasetMeta>,
}

pub fn sample_dataset(f: &TargetFunction, n: usize, seed: u64, distribution: Distribution) -> Result<Dataset> {
    let sampler = InputSampler::new(f, distribution)?;
    let mut rng = Rng64::new(seed);
    let inputs = (0..n)
        .map(|_| sampler.sample(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    let targets = par::map_slice(&inputs, |x| f.eval(x))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        inputs,
        targets,
        meta: Some(DatasetMeta {
            function: f.name(),
            params: f.clone(),
            seed,
            n,
            distribution,
        }),
    })
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if let Some(d) = inputs.first().map(Vec::len) {
            for x in &inputs {
                crate::error::check_dim(d, x.len())?;
            }
        }
        Ok(Self {
            inputs,
            targets,
            meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.dim();
        let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        w.write_record(&header).map_err(csv_err)?;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let row: Vec<String> = x.iter().chain(std::iter::once(y)).map(|v| format!("{v:?}")).collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.is_empty() || &header[header.len() - 1] != "y" {
            return Err(Error::Csv("last column must be named y".into()));
        }
        let d = header.len() - 1;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Csv(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != d + 1 {
                return Err(Error::Csv(format!("row has {} fields, expected {}", vals.len(), d + 1)));
            }
            targets.push(vals[d]);
            inputs.push(vals[..d].to_vec());
        }
        Self::new(inputs, targets)
    }

    /// Writes `path` (CSV) and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))?;
        if let Some(meta) = &self.meta {
            let mut side = BufWriter::new(File::create(sidecar_path(path))?);
            serde_json::to_writer_pretty(&mut side, meta)?;
            side.flush()?;
        }
        Ok(())
    }

    /// Reads `path` and, if present, its sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let mut ds = Self::read_csv(File::open(path)?)?;
        let side = sidecar_path(path);
        if side.exists() {
            ds.meta = Some(serde_json::from_reader(File::open(side)?)?);
        }
        Ok(ds)
    }

    /// `(min, max)` of the targets.
    pub fn target_range(&self) -> Option<(f64, f64)> {
        let mut it = self.targets.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{gen_hypercube, gen_random_polynomial, gen_subspace_embedding};

    #[test]
    fn deterministic_in_seed() {
        let f = TargetFunction::Polynomial(gen_random_polynomial(8, 4, 100, 1).unwrap());
        let a = sample_dataset(&f, 10, 5, Distribution::UniformCube).unwrap();
        let b = sample_dataset(&f, 10, 5, Distribution::UniformCube).unwrap();
        let bits = |d: &Dataset| d.inputs[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a, b);
    }

    #[test]
    fn inputs_inside_cube() {
        let inner = TargetFunction::Polynomial(gen_random_polynomial(2, 4, 15, 1).unwrap());
        let f = TargetFunction::Subspace(gen_subspace_embedding(8, 2, inner, 2).unwrap());
        for dist in [Distribution::UniformCube, Distribution::SubspaceSlice] {
            let ds = sample_dataset(&f, 500, 3, dist).unwrap();
            assert_eq!(ds.inputs.len(), ds.targets.len());
            assert!(ds.inputs.iter().flatten().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn slice_needs_embedding() {
        let f = TargetFunction::Hypercube(gen_hypercube(3, 1).unwrap());
        assert!(sample_dataset(&f, 5, 1, Distribution::SubspaceSlice).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let f = TargetFunction::Hypercube(gen_hypercube(3, 1).unwrap());
        let ds = sample_dataset(&f, 50, 3, Distribution::UniformCube).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,x3,y\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.inputs, ds.inputs);
        assert_eq!(back.targets, ds.targets);
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let f = TargetFunction::Hypercube(gen_hypercube(2, 1).unwrap());
        let ds = sample_dataset(&f, 20, 3, Distribution::UniformCube).unwrap();
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, ds);
        let side: serde_json::Value = serde_json::from_reader(File::open(sidecar_path(&path)).unwrap()).unwrap();
        for key in ["function", "params", "seed", "n", "distribution"] {
            assert!(side.get(key).is_some(), "{key}");
        }
    }
}
