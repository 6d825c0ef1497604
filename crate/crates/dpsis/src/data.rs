//! Dataset representation, CSV ingestion, preprocessing, and synthetic
//! generators.
//!
//! Preprocessing contract: every feature column is centered and scaled so
//! its infinity-norm is at most 1, and the target is scaled (not centered)
//! to infinity-norm at most 1. Selectors that rely on unit per-score
//! sensitivity refuse datasets that have not gone through [`Dataset::preprocess`].
//!
//! ```
//! use dpsis::data::Dataset;
//!
//! let ds = Dataset::from_columns(vec![vec![1.0, 3.0]], vec![2.0, -4.0])
//!     .preprocess()
//!     .unwrap();
//! assert_eq!(ds.col(0), &[-1.0, 1.0]); // centered, infinity-norm 1
//! assert_eq!(ds.y(), &[0.5, -1.0]);    // scaled only
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed::{mix, rng_from_seed};

/// A regression dataset: `n` rows (individuals) by `d` feature columns
/// plus a target vector. Feature values are stored column-major so the
/// correlation and coordinate-descent paths stream over contiguous memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    cols: Vec<f64>, // column-major, length n * d
    n: usize,
    d: usize,
    y: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
    pub true_support: Option<BTreeSet<usize>>,
    preprocessed: bool,
}

impl Dataset {
    /// Builds a dataset from column vectors. All columns and `y` must have
    /// equal length `n >= 1`.
    pub fn from_columns(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Self {
        let d = columns.len();
        let n = y.len();
        assert!(n >= 1 && d >= 1, "dataset must be at least 1x1");
        let mut cols = Vec::with_capacity(n * d);
        for c in &columns {
            assert_eq!(c.len(), n, "column length mismatch");
            cols.extend_from_slice(c);
        }
        Dataset {
            cols,
            n,
            d,
            y,
            feature_names: None,
            true_support: None,
            preprocessed: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Column `j` as a contiguous slice of length `n`.
    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    pub fn is_preprocessed(&self) -> bool {
        self.preprocessed
    }

    /// Marks the dataset preprocessed without running the transform, for
    /// data that already satisfies the centering and infinity-norm bounds.
    pub fn assume_preprocessed(mut self) -> Dataset {
        self.preprocessed = true;
        self
    }

    /// Dataset restricted to rows `[start, end)`. Preprocessing status and
    /// support metadata are inherited; row subsets preserve the norm bounds.
    pub fn row_slice(&self, start: usize, end: usize) -> Dataset {
        assert!(start < end && end <= self.n);
        let n = end - start;
        let mut cols = Vec::with_capacity(n * self.d);
        for j in 0..self.d {
            cols.extend_from_slice(&self.col(j)[start..end]);
        }
        Dataset {
            cols,
            n,
            d: self.d,
            y: self.y[start..end].to_vec(),
            feature_names: self.feature_names.clone(),
            true_support: self.true_support.clone(),
            preprocessed: self.preprocessed,
        }
    }

    /// Absolute correlation scores `|x_(j)^T y|` for every feature.
    pub fn abs_correlations(&self) -> Vec<f64> {
        (0..self.d)
            .map(|j| dot(self.col(j), &self.y).abs())
            .collect()
    }

    /// Centers every column, scales columns and target to infinity-norm 1.
    ///
    /// Zero-norm columns (constants, annihilated by centering) pass through
    /// as zeros. Returns a new dataset flagged as preprocessed.
    pub fn preprocess(&self) -> Result<Dataset> {
        if self.preprocessed {
            return Err(Error::AlreadyPreprocessed);
        }
        let mut out = self.clone();
        let n = self.n as f64;
        for j in 0..self.d {
            let col = &mut out.cols[j * self.n..(j + 1) * self.n];
            let mean = col.iter().sum::<f64>() / n;
            for v in col.iter_mut() {
                *v -= mean;
            }
            let norm = inf_norm(col);
            if norm > 0.0 {
                for v in col.iter_mut() {
                    *v /= norm;
                }
            }
        }
        let y_norm = inf_norm(&out.y);
        if y_norm > 0.0 {
            for v in out.y.iter_mut() {
                *v /= y_norm;
            }
        }
        out.preprocessed = true;
        Ok(out)
    }

    /// Writes the dataset as CSV (features then a final `y` column) with a
    /// plain key-value sidecar (same path, extension `.meta`) recording
    /// shape and support.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for j in 0..self.d {
            let name = match &self.feature_names {
                Some(names) => names[j].clone(),
                None => format!("f{j}"),
            };
            let _ = write!(text, "{name},");
        }
        text.push_str("y\n");
        for i in 0..self.n {
            for j in 0..self.d {
                let _ = write!(text, "{},", self.col(j)[i]);
            }
            let _ = writeln!(text, "{}", self.y[i]);
        }
        write_file(path, &text)?;

        let mut meta = String::new();
        let _ = writeln!(meta, "n = {}", self.n);
        let _ = writeln!(meta, "d = {}", self.d);
        let _ = writeln!(meta, "preprocessed = {}", self.preprocessed);
        if let Some(support) = &self.true_support {
            let list: Vec<String> = support.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(meta, "true_support = {}", list.join(" "));
        }
        write_file(&path.with_extension("meta"), &meta)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Target column selector for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Name(String),
    Index(usize),
}

impl Target {
    /// Parses a CLI argument: a bare non-negative integer means a 0-based
    /// column index, anything else a column name.
    pub fn parse(s: &str) -> Target {
        match s.parse::<usize>() {
            Ok(i) => Target::Index(i),
            Err(_) => Target::Name(s.to_string()),
        }
    }
}

/// Loads a comma-separated file. The first row is treated as a header when
/// any of its cells fails to parse as a number. No quoting support; cells
/// are trimmed. Row numbers in errors are 1-based file lines.
pub fn load_csv(path: &Path, target: &Target) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }

    let first: Vec<&str> = lines[0].split(',').map(str::trim).collect();
    let width = first.len();
    let has_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let header: Option<Vec<String>> = if has_header {
        Some(first.iter().map(|s| s.to_string()).collect())
    } else {
        None
    };

    let target_idx = match target {
        Target::Index(i) => {
            if *i >= width {
                return Err(Error::MissingTarget {
                    path: path.to_path_buf(),
                    target: i.to_string(),
                });
            }
            *i
        }
        Target::Name(name) => match &header {
            Some(h) => h.iter().position(|c| c == name).ok_or_else(|| Error::MissingTarget {
                path: path.to_path_buf(),
                target: name.clone(),
            })?,
            None => {
                return Err(Error::MissingTarget {
                    path: path.to_path_buf(),
                    target: name.clone(),
                })
            }
        },
    };
    if width < 2 {
        return Err(Error::NoFeatures {
            path: path.to_path_buf(),
        });
    }

    let data_lines = &lines[if has_header { 1 } else { 0 }..];
    if data_lines.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let n = data_lines.len();
    let d = width - 1;
    let mut columns = vec![Vec::with_capacity(n); d];
    let mut y = Vec::with_capacity(n);
    for (offset, line) in data_lines.iter().enumerate() {
        let file_row = offset + 1 + if has_header { 1 } else { 0 };
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row: file_row,
                got: cells.len(),
                expected: width,
            });
        }
        let mut feature_slot = 0;
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::BadCell {
                path: path.to_path_buf(),
                row: file_row,
                col: col + 1,
                cell: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::BadCell {
                    path: path.to_path_buf(),
                    row: file_row,
                    col: col + 1,
                    cell: cell.to_string(),
                });
            }
            if col == target_idx {
                y.push(value);
            } else {
                columns[feature_slot].push(value);
                feature_slot += 1;
            }
        }
    }

    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, name)| name)
            .collect()
    });
    let mut ds = Dataset::from_columns(columns, y);
    ds.feature_names = feature_names;
    Ok(ds)
}

/// Parameters for the sparse linear synthetic benchmark generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub n_nonzero: usize,
    pub noise_variance: f64,
    pub bernoulli_p: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        SynthSpec {
            n,
            d,
            n_nonzero: 8,
            noise_variance: 1.5,
            bernoulli_p: 0.4,
            seed,
        }
    }

    fn validate(&self) {
        assert!(self.n >= 1 && self.d >= 1);
        assert!(self.n_nonzero <= self.d, "n_nonzero exceeds d");
        assert!(self.noise_variance > 0.0);
        assert!((0.0..=1.0).contains(&self.bernoulli_p));
    }
}

const STREAM_SYNTH: u64 = 1;
const STREAM_W1: u64 = 2;
const STREAM_W1W2: u64 = 3;

fn standard_normals<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}

/// Sparse linear benchmark: standard-normal design, `n_nonzero` signal
/// weights of magnitude at least `a = 4 ln(n)/sqrt(n)`, Gaussian target
/// noise. The output is centered and scaled, with the chosen signal
/// indices recorded as `true_support`.
pub fn gen_synth_fan(spec: &SynthSpec) -> Dataset {
    spec.validate();
    let mut rng = rng_from_seed(mix(&[STREAM_SYNTH, spec.seed]));
    let (n, d) = (spec.n, spec.d);

    let columns: Vec<Vec<f64>> = (0..d).map(|_| standard_normals(&mut rng, n)).collect();

    // Signal indices: partial Fisher-Yates over 0..d.
    let mut pool: Vec<usize> = (0..d).collect();
    let mut support = BTreeSet::new();
    for i in 0..spec.n_nonzero {
        let pick = rng.random_range(i..d);
        pool.swap(i, pick);
        support.insert(pool[i]);
    }

    let a = 4.0 * (n as f64).ln() / (n as f64).sqrt();
    let mut w = vec![0.0; d];
    for &idx in &support {
        let u = rng.random_bool(spec.bernoulli_p);
        let z: f64 = StandardNormal.sample(&mut rng);
        let sign = if u { -1.0 } else { 1.0 };
        w[idx] = sign * (a + z.abs());
    }

    let noise_sd = spec.noise_variance.sqrt();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mean: f64 = support.iter().map(|&j| columns[j][i] * w[j]).sum();
            let z: f64 = StandardNormal.sample(&mut rng);
            mean + noise_sd * z
        })
        .collect();

    let mut ds = Dataset::from_columns(columns, y);
    ds.true_support = Some(support);
    let mut out = ds.preprocess().expect("fresh dataset");
    out.true_support = ds.true_support;
    out
}

fn instability_design<R: Rng>(rng: &mut R) -> Vec<Vec<f64>> {
    (0..100).map(|_| standard_normals(rng, 100)).collect()
}

/// First instability benchmark: 100 x 100 standard-normal design, weights
/// equal to 1 on the first five features, target noise variance 0.1.
/// Returned unpreprocessed; callers preprocess before selection.
pub fn gen_instability_w1(seed: u64) -> Dataset {
    let mut rng = rng_from_seed(mix(&[STREAM_W1, seed]));
    let columns = instability_design(&mut rng);
    let noise_sd = 0.1_f64.sqrt();
    let y: Vec<f64> = (0..100)
        .map(|i| {
            let mean: f64 = (0..5).map(|j| columns[j][i]).sum();
            let z: f64 = StandardNormal.sample(&mut rng);
            mean + noise_sd * z
        })
        .collect();
    let mut ds = Dataset::from_columns(columns, y);
    ds.true_support = Some((0..5).collect());
    ds
}

/// Second instability benchmark: as [`gen_instability_w1`] but every tenth
/// row is generated from an outlier weight vector supported on the last
/// five features, so each block of 10 consecutive rows holds one outlier.
pub fn gen_instability_w1w2(seed: u64) -> Dataset {
    let mut rng = rng_from_seed(mix(&[STREAM_W1W2, seed]));
    let columns = instability_design(&mut rng);
    let noise_sd = 0.1_f64.sqrt();
    let y: Vec<f64> = (0..100)
        .map(|i| {
            let outlier = i % 10 == 9;
            let mean: f64 = if outlier {
                (95..100).map(|j| columns[j][i]).sum()
            } else {
                (0..5).map(|j| columns[j][i]).sum()
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            mean + noise_sd * z
        })
        .collect();
    let mut ds = Dataset::from_columns(columns, y);
    ds.true_support = Some((0..5).collect());
    ds
}
