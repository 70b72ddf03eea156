//! Synthetic datasets, CSV ingestion and deterministic splits.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcs::{TargetFunction, TargetId};
use crate::scalar::Scalar;

/// Default train/validation/test proportions.
pub const DEFAULT_PROPORTIONS: [f64; 3] = [0.65, 0.05, 0.30];

/// Row-major inputs with their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    dim: usize,
}

impl<T: Scalar> Samples<T> {
    pub fn new(x: Vec<T>, y: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || x.len() != y.len() * dim {
            return Err(Error::Shape(format!(
                "{} inputs cannot form {} rows of width {dim}",
                x.len(),
                y.len()
            )));
        }
        Ok(Samples { x, y, dim })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.len()).map(|i| self.x[i * self.dim + j]).collect()
    }

    pub fn y_mean(&self) -> T {
        self.y.iter().copied().sum::<T>() / T::of(self.len().max(1) as f64)
    }

    /// Same inputs with replacement targets.
    pub fn with_targets(&self, y: Vec<T>) -> Self {
        assert_eq!(y.len(), self.len());
        Samples {
            x: self.x.clone(),
            y,
            dim: self.dim,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Samples<U> {
        Samples {
            x: self.x.iter().map(|v| U::of(v.f64())).collect(),
            y: self.y.iter().map(|v| U::of(v.f64())).collect(),
            dim: self.dim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Signal,
    Redundant,
    Deceptive,
    Noise,
    External,
}

impl FeatureRole {
    /// Counted against the noise ratio.
    pub fn is_uninformative(self) -> bool {
        matches!(
            self,
            FeatureRole::Redundant | FeatureRole::Deceptive | FeatureRole::Noise
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle followed by a contiguous train/val/test cut. Validation
/// and test sizes round down, so rounding slack goes to train.
pub fn make_split(n: usize, proportions: [f64; 3], seed: u64) -> Result<Split> {
    let total: f64 = proportions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || proportions.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::config(format!(
            "split proportions {proportions:?} must be non-negative and sum to 1"
        )));
    }
    let n_val = (n as f64 * proportions[1] + 1e-9).floor() as usize;
    let n_test = (n as f64 * proportions[2] + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Split {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    })
}

/// Noise-column policy of the robustness benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Fewest noise columns such that uninformative / total >= alpha.
    Ratio(f64),
    /// An explicit number of pure-noise columns.
    Columns(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderPolicy {
    #[default]
    Present,
    Absent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub target: TargetColumn,
    #[serde(default)]
    pub header: HeaderPolicy,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub split_seed: u64,
}

/// Everything needed to rebuild a dataset bitwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Provenance {
    Function {
        target: TargetId,
        n: usize,
        seed: u64,
        proportions: [f64; 3],
        domain: Vec<(f64, f64)>,
        exclusion: Option<(usize, f64)>,
    },
    NoiseBenchmark {
        n: usize,
        noise: NoiseSpec,
        obs_sigma: f64,
        seed: u64,
        proportions: [f64; 3],
    },
    Csv {
        path: PathBuf,
        options: CsvOptions,
        proportions: [f64; 3],
    },
}

/// Per-column affine map fitted on the train split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub dim: usize,
    pub names: Vec<String>,
    pub roles: Vec<FeatureRole>,
    pub split: Split,
    pub provenance: Provenance,
    pub standardizer: Option<Standardizer>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self, idx: &[usize]) -> Samples<T> {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Samples {
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            dim: self.dim,
        }
    }

    pub fn train(&self) -> Samples<T> {
        self.samples(&self.split.train)
    }

    pub fn val(&self) -> Samples<T> {
        self.samples(&self.split.val)
    }

    pub fn test(&self) -> Samples<T> {
        self.samples(&self.split.test)
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            x: self.x.iter().map(|v| U::of(v.f64())).collect(),
            y: self.y.iter().map(|v| U::of(v.f64())).collect(),
            dim: self.dim,
            names: self.names.clone(),
            roles: self.roles.clone(),
            split: self.split.clone(),
            provenance: self.provenance.clone(),
            standardizer: self.standardizer.clone(),
        }
    }

    /// Z-scores every feature column with train-split statistics. Constant
    /// columns are only centered.
    pub fn standardize(&mut self) {
        let n = self.split.train.len().max(1) as f64;
        let mut mean = vec![0.0; self.dim];
        let mut std = vec![0.0; self.dim];
        for &i in &self.split.train {
            for (m, v) in mean.iter_mut().zip(self.row(i)) {
                *m += v.f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for &i in &self.split.train {
            for ((s, v), m) in std.iter_mut().zip(self.row(i)).zip(&mean) {
                *s += (v.f64() - m).powi(2);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        for i in 0..self.len() {
            for j in 0..self.dim {
                let v = &mut self.x[i * self.dim + j];
                *v = T::of((v.f64() - mean[j]) / std[j]);
            }
        }
        self.standardizer = Some(Standardizer { mean, std });
    }

    /// Writes the data as CSV with a header of feature names and `y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| crate::optim::csv_io(path, e))?;
        let mut header = self.names.clone();
        header.push("y".into());
        w.write_record(&header)
            .map_err(|e| crate::optim::csv_io(path, e))?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self
                .row(i)
                .iter()
                .map(|v| format!("{:?}", v.f64()))
                .collect();
            rec.push(format!("{:?}", self.y[i].f64()));
            w.write_record(&rec)
                .map_err(|e| crate::optim::csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// JSON sidecar content describing a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub provenance: Provenance,
    pub names: Vec<String>,
    pub roles: Vec<FeatureRole>,
    pub n: usize,
    pub split_sizes: [usize; 3],
}

impl<T: Scalar> Dataset<T> {
    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            provenance: self.provenance.clone(),
            names: self.names.clone(),
            roles: self.roles.clone(),
            n: self.len(),
            split_sizes: [
                self.split.train.len(),
                self.split.val.len(),
                self.split.test.len(),
            ],
        }
    }

    pub fn write_provenance(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Reads a sidecar written by [`Dataset::write_provenance`].
pub fn read_provenance(path: &Path) -> Result<Provenance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    Ok(sidecar.provenance)
}

/// Rebuilds the dataset a provenance record describes.
pub fn regenerate(p: &Provenance) -> Result<Dataset<f64>> {
    match p {
        Provenance::Function {
            target,
            n,
            seed,
            proportions,
            domain,
            exclusion,
        } => {
            let mut t = TargetFunction::new(*target);
            t.domain = domain.clone();
            t.exclusion = *exclusion;
            sample_function_with(&t, *n, *seed, *proportions)
        }
        Provenance::NoiseBenchmark {
            n,
            noise,
            obs_sigma,
            seed,
            proportions,
        } => noise_benchmark(*n, *noise, *obs_sigma, *seed, *proportions),
        Provenance::Csv {
            path,
            options,
            proportions,
        } => load_csv_with(path, options, *proportions),
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, t: &TargetFunction) -> Vec<f64> {
    loop {
        let x: Vec<f64> = t
            .domain
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..=hi))
            .collect();
        match t.exclusion {
            Some((j, w)) if x[j].abs() < w => continue,
            _ => return x,
        }
    }
}

/// Uniform samples over the target's domain (minus its exclusion band)
/// with exact targets and the default split.
pub fn sample_function<T: Scalar>(id: TargetId, n: usize, seed: u64) -> Result<Dataset<T>> {
    sample_function_with(&id.target(), n, seed, DEFAULT_PROPORTIONS).map(|d| d.cast())
}

pub fn sample_function_with(
    t: &TargetFunction,
    n: usize,
    seed: u64,
    proportions: [f64; 3],
) -> Result<Dataset<f64>> {
    if n < 10 {
        return Err(Error::config("sample_function needs n >= 10"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = t.arity();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for index in 0..n {
        let p = uniform_point(&mut rng, t);
        let v = t.eval(&p).map_err(|e| Error::Sample {
            index,
            source: Box::new(e),
        })?;
        x.extend(p);
        y.push(v);
    }
    Ok(Dataset {
        x,
        y,
        dim: d,
        names: (1..=d).map(|j| format!("x{j}")).collect(),
        roles: vec![FeatureRole::Signal; d],
        split: make_split(n, proportions, seed)?,
        provenance: Provenance::Function {
            target: t.id,
            n,
            seed,
            proportions,
            domain: t.domain.clone(),
            exclusion: t.exclusion,
        },
        standardizer: None,
    })
}

pub const SIGNAL_COLUMNS: usize = 4;
pub const REDUNDANT_COLUMNS: usize = 2;
pub const DECEPTIVE_COLUMNS: usize = 1;
/// Correlation of the deceptive column with the target on the train split.
pub const DECEPTIVE_CORRELATION: f64 = 0.8;
const REDUNDANT_SIGMA: f64 = 0.05;

/// Fewest pure-noise columns `k` with `(3 + k) / (7 + k) >= alpha`.
pub fn noise_columns_for(alpha: f64) -> Result<usize> {
    if !(0.0..=0.95).contains(&alpha) {
        return Err(Error::config(format!(
            "noise ratio {alpha} outside [0, 0.95]"
        )));
    }
    let fixed_bad = (REDUNDANT_COLUMNS + DECEPTIVE_COLUMNS) as f64;
    let fixed = (SIGNAL_COLUMNS + REDUNDANT_COLUMNS + DECEPTIVE_COLUMNS) as f64;
    if alpha < fixed_bad / fixed - 1e-12 {
        return Err(Error::InfeasibleRatio { alpha });
    }
    let mut k = 0usize;
    while (fixed_bad + k as f64) / (fixed + k as f64) < alpha - 1e-12 {
        k += 1;
    }
    Ok(k)
}

/// Robustness benchmark with a target noise ratio.
pub fn gen_noise_benchmark<T: Scalar>(
    n: usize,
    alpha: f64,
    obs_sigma: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    noise_benchmark(
        n,
        NoiseSpec::Ratio(alpha),
        obs_sigma,
        seed,
        DEFAULT_PROPORTIONS,
    )
    .map(|d| d.cast())
}

/// Robustness benchmark with an explicit count of pure-noise columns.
pub fn gen_noise_benchmark_columns<T: Scalar>(
    n: usize,
    noise_columns: usize,
    obs_sigma: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    noise_benchmark(
        n,
        NoiseSpec::Columns(noise_columns),
        obs_sigma,
        seed,
        DEFAULT_PROPORTIONS,
    )
    .map(|d| d.cast())
}

fn standardized(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// Columns: 4 signal, 2 redundant, 1 deceptive, then the noise columns.
pub fn noise_benchmark(
    n: usize,
    noise: NoiseSpec,
    obs_sigma: f64,
    seed: u64,
    proportions: [f64; 3],
) -> Result<Dataset<f64>> {
    if n < 100 {
        return Err(Error::config("noise benchmark needs n >= 100"));
    }
    if !(obs_sigma >= 0.0) {
        return Err(Error::config("obs_sigma must be non-negative"));
    }
    let k = match noise {
        NoiseSpec::Ratio(alpha) => noise_columns_for(alpha)?,
        NoiseSpec::Columns(k) => k,
    };
    let split = make_split(n, proportions, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let signal: Vec<[f64; 4]> = (0..n)
        .map(|_| {
            [
                normal(&mut rng),
                normal(&mut rng),
                normal(&mut rng),
                normal(&mut rng),
            ]
        })
        .collect();
    let noise_dist = Normal::new(0.0, obs_sigma).expect("finite sigma");
    let y: Vec<f64> = signal
        .iter()
        .map(|s| signal_target(s) + noise_dist.sample(&mut rng))
        .collect();

    let mix: Vec<[f64; 4]> = (0..REDUNDANT_COLUMNS)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let perturb = Normal::new(0.0, REDUNDANT_SIGMA).expect("positive sigma");
    let redundant: Vec<Vec<f64>> = mix
        .iter()
        .map(|a| {
            signal
                .iter()
                .map(|s| {
                    s.iter().zip(a).map(|(x, c)| x * c).sum::<f64>() + perturb.sample(&mut rng)
                })
                .collect()
        })
        .collect();

    // Deceptive column: on train, a mix of the standardized target and a
    // draw orthogonalized against it, so the sample correlation is exact.
    let mut deceptive = vec![0.0; n];
    let zy = standardized(&split.train.iter().map(|&i| y[i]).collect::<Vec<_>>());
    let xi: Vec<f64> = (0..split.train.len()).map(|_| normal(&mut rng)).collect();
    let xi_mean = xi.iter().sum::<f64>() / xi.len() as f64;
    let proj = xi
        .iter()
        .zip(&zy)
        .map(|(a, b)| (a - xi_mean) * b)
        .sum::<f64>()
        / zy.iter().map(|v| v * v).sum::<f64>();
    let resid: Vec<f64> = xi
        .iter()
        .zip(&zy)
        .map(|(a, b)| a - xi_mean - proj * b)
        .collect();
    let xi_perp = standardized(&resid);
    let r = DECEPTIVE_CORRELATION;
    let s = (1.0 - r * r).sqrt();
    for ((&i, z), e) in split.train.iter().zip(&zy).zip(&xi_perp) {
        deceptive[i] = r * z + s * e;
    }
    for &i in split.val.iter().chain(&split.test) {
        deceptive[i] = normal(&mut rng);
    }

    let noise_cols: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| normal(&mut rng)).collect())
        .collect();

    let dim = SIGNAL_COLUMNS + REDUNDANT_COLUMNS + DECEPTIVE_COLUMNS + k;
    let mut x = Vec::with_capacity(n * dim);
    for i in 0..n {
        x.extend_from_slice(&signal[i]);
        x.extend(redundant.iter().map(|c| c[i]));
        x.push(deceptive[i]);
        x.extend(noise_cols.iter().map(|c| c[i]));
    }
    let mut names = Vec::with_capacity(dim);
    let mut roles = Vec::with_capacity(dim);
    for j in 1..=SIGNAL_COLUMNS {
        names.push(format!("signal{j}"));
        roles.push(FeatureRole::Signal);
    }
    for j in 1..=REDUNDANT_COLUMNS {
        names.push(format!("redundant{j}"));
        roles.push(FeatureRole::Redundant);
    }
    names.push("deceptive1".into());
    roles.push(FeatureRole::Deceptive);
    for j in 1..=k {
        names.push(format!("noise{j}"));
        roles.push(FeatureRole::Noise);
    }
    Ok(Dataset {
        x,
        y,
        dim,
        names,
        roles,
        split,
        provenance: Provenance::NoiseBenchmark {
            n,
            noise,
            obs_sigma,
            seed,
            proportions,
        },
        standardizer: None,
    })
}

/// `sin x1 + cos x2 + x3 x4`.
pub fn signal_target(s: &[f64; 4]) -> f64 {
    s[0].sin() + s[1].cos() + s[2] * s[3]
}

/// Pearson correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Loads a numeric CSV; every non-target column becomes an external feature.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset<f64>> {
    load_csv_with(path, options, DEFAULT_PROPORTIONS)
}

pub fn load_csv_with(
    path: &Path,
    options: &CsvOptions,
    proportions: [f64; 3],
) -> Result<Dataset<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| crate::optim::csv_io(path, e))?;
    let mut records = reader.records();
    let header: Option<Vec<String>> = match options.header {
        HeaderPolicy::Present => match records.next() {
            Some(r) => Some(
                r.map_err(|e| parse_err(0, 0, e.to_string()))?
                    .iter()
                    .map(str::to_owned)
                    .collect(),
            ),
            None => return Err(parse_err(0, 0, "empty file".into())),
        },
        HeaderPolicy::Absent => None,
    };
    let first_data_row = usize::from(header.is_some());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for (r, rec) in records.enumerate() {
        let row = r + first_data_row;
        let rec = rec.map_err(|e| parse_err(row, 0, e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(parse_err(
                row,
                rec.len().min(w),
                format!("expected {w} fields, found {}", rec.len()),
            ));
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(column, cell)| {
                cell.parse::<f64>().map_err(|_| Error::NonNumericCell {
                    row,
                    column,
                    value: cell.to_owned(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    let width = width.unwrap_or(0);
    let target = match &options.target {
        TargetColumn::Index(i) if *i < width => *i,
        TargetColumn::Index(i) => {
            return Err(parse_err(
                0,
                *i,
                format!("target column index {i} out of range"),
            ))
        }
        TargetColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| parse_err(0, 0, format!("target column {name:?} not found")))?,
    };
    if width < 2 || rows.len() < 2 {
        return Err(parse_err(
            first_data_row,
            0,
            "need at least two rows and two columns".into(),
        ));
    }
    let names: Vec<String> = (0..width)
        .filter(|&j| j != target)
        .map(|j| {
            header
                .as_ref()
                .map_or_else(|| format!("x{}", j + 1), |h| h[j].clone())
        })
        .collect();
    let dim = width - 1;
    let mut x = Vec::with_capacity(rows.len() * dim);
    let mut y = Vec::with_capacity(rows.len());
    for r in &rows {
        for (j, &v) in r.iter().enumerate() {
            if j == target {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    let n = y.len();
    let mut ds = Dataset {
        x,
        y,
        dim,
        names,
        roles: vec![FeatureRole::External; dim],
        split: make_split(n, proportions, options.split_seed)?,
        provenance: Provenance::Csv {
            path: path.to_path_buf(),
            options: options.clone(),
            proportions,
        },
        standardizer: None,
    };
    if options.standardize {
        ds.standardize();
    }
    Ok(ds)
}

fn parse_err(row: usize, column: usize, message: String) -> Error {
    Error::Parse {
        row,
        column,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn split_sizes() {
        let s = make_split(5000, DEFAULT_PROPORTIONS, 42).unwrap();
        assert_eq!(
            (s.train.len(), s.val.len(), s.test.len()),
            (3250, 250, 1500)
        );
        let s = make_split(20, DEFAULT_PROPORTIONS, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (13, 1, 6));
        assert_eq!(make_split(20, DEFAULT_PROPORTIONS, 1).unwrap(), s);
        assert!(make_split(10, [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let s = make_split(137, [0.6, 0.1, 0.3], 3).unwrap();
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..137).collect::<Vec<_>>());
    }

    #[test]
    fn function_sampling_is_deterministic_and_respects_exclusion() {
        let a: Dataset<f64> = sample_function(TargetId::BilinearRatio, 500, 7).unwrap();
        let b: Dataset<f64> = sample_function(TargetId::BilinearRatio, 500, 7).unwrap();
        assert_eq!(a, b);
        assert!((0..a.len()).all(|i| a.row(i)[2].abs() >= 0.1));
        let c: Dataset<f64> = sample_function(TargetId::BilinearRatio, 500, 8).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn signal_formula() {
        assert_eq!(signal_target(&[0.0, 0.0, 2.0, 3.0]), 7.0);
    }

    #[test]
    fn noise_ratio_contract() {
        assert!(matches!(
            noise_columns_for(0.2),
            Err(Error::InfeasibleRatio { .. })
        ));
        assert!(noise_columns_for(0.99).is_err());
        for alpha in [3.0 / 7.0, 0.5, 0.6, 0.75, 0.9, 0.95] {
            let k = noise_columns_for(alpha).unwrap();
            let ratio = |k: usize| (3 + k) as f64 / (7 + k) as f64;
            assert!(ratio(k) >= alpha - 1e-12);
            if k > 0 {
                assert!(ratio(k - 1) < alpha);
            }
        }
    }

    #[test]
    fn deceptive_feature_correlations() {
        let ds: Dataset<f64> = gen_noise_benchmark_columns(5000, 4, 0.05, 42).unwrap();
        assert_eq!(ds.dim, 11);
        let j = ds
            .roles
            .iter()
            .position(|&r| r == FeatureRole::Deceptive)
            .unwrap();
        let corr = |s: &Samples<f64>| pearson(&s.column(j), &s.y);
        let (tr, te) = (ds.train(), ds.test());
        assert!((corr(&tr) - 0.8).abs() < 0.05);
        assert!(corr(&te).abs() < 0.1);
    }

    #[test]
    fn standardization_uses_train_statistics() {
        let mut ds: Dataset<f64> = gen_noise_benchmark(400, 0.5, 0.05, 1).unwrap();
        ds.standardize();
        let tr = ds.train();
        for j in 0..ds.dim {
            let col = tr.column(j);
            assert!((col.iter().sum::<f64>() / col.len() as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn regeneration_is_bitwise() {
        let ds: Dataset<f64> = gen_noise_benchmark(300, 0.6, 0.05, 9).unwrap();
        let again = regenerate(&ds.provenance).unwrap();
        assert_eq!(
            ds.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            again.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(ds, again);
    }

    fn temp_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_round_trip_of_a_toy_file() {
        let f = temp_csv("a,b,t\n1,2,3\n4.5,-5,6\n7,8e-1,9\n");
        let opts = CsvOptions {
            target: TargetColumn::Name("t".into()),
            header: HeaderPolicy::Present,
            standardize: false,
            split_seed: 0,
        };
        let ds = load_csv(f.path(), &opts).unwrap();
        assert_eq!(ds.x, vec![1.0, 2.0, 4.5, -5.0, 7.0, 0.8]);
        assert_eq!(ds.y, vec![3.0, 6.0, 9.0]);
        assert_eq!(ds.names, vec!["a", "b"]);
        assert!(ds.roles.iter().all(|&r| r == FeatureRole::External));
    }

    #[test]
    fn csv_errors() {
        let f = temp_csv("a,b\n1,2\n3,4\n");
        let missing = CsvOptions {
            target: TargetColumn::Name("y".into()),
            header: HeaderPolicy::Present,
            standardize: false,
            split_seed: 0,
        };
        match load_csv(f.path(), &missing) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("\"y\"")),
            other => panic!("{other:?}"),
        }
        let f = temp_csv("1,2\n3,oops\n");
        let opts = CsvOptions {
            target: TargetColumn::Index(1),
            header: HeaderPolicy::Absent,
            standardize: false,
            split_seed: 0,
        };
        assert!(matches!(
            load_csv(f.path(), &opts),
            Err(Error::NonNumericCell {
                row: 1,
                column: 1,
                ..
            })
        ));
        let f = temp_csv("1,2\n3,4,5\n");
        assert!(matches!(
            load_csv(f.path(), &opts),
            Err(Error::Parse { row: 1, .. })
        ));
    }
}
