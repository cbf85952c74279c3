//! Dataset containers, file loaders, target splitting, standardization and
//! the synthetic heterogeneous-domain generator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HandaError, Result};
use crate::numerics::{Matrix, Rng};

/// Samples of one domain as columns of `features`, with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    class_count: usize,
    name: String,
}

impl DomainDataset {
    /// Labeled dataset; `class_count` is `1 + max label`.
    pub fn labeled(name: impl Into<String>, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        let class_count = labels.iter().max().map_or(0, |m| m + 1);
        Self::with_classes(name, features, Some(labels), class_count)
    }

    pub fn unlabeled(name: impl Into<String>, features: Matrix) -> Result<Self> {
        Self::with_classes(name, features, None, 0)
    }

    pub fn with_classes(
        name: impl Into<String>,
        features: Matrix,
        labels: Option<Vec<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        if !features.is_finite() {
            return Err(HandaError::contract("dataset features contain NaN or Inf"));
        }
        if let Some(y) = &labels {
            if y.len() != features.cols() {
                return Err(HandaError::shape(
                    "DomainDataset",
                    format!("{} labels for {} samples", y.len(), features.cols()),
                ));
            }
            if let Some(&bad) = y.iter().find(|&&v| v >= class_count) {
                return Err(HandaError::contract(format!(
                    "label {bad} outside [0, {class_count})"
                )));
            }
        }
        Ok(DomainDataset {
            features,
            labels,
            class_count,
            name: name.into(),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or a contract error naming the dataset when absent.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| HandaError::contract(format!("dataset '{}' is unlabeled", self.name)))
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    pub fn len(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.features.cols() == 0
    }

    /// Columns `idx` in the given order; class count is preserved.
    pub fn subset(&self, idx: &[usize], name: impl Into<String>) -> DomainDataset {
        DomainDataset {
            features: self.features.select_columns(idx),
            labels: self.labels.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect()),
            class_count: self.class_count,
            name: name.into(),
        }
    }

    pub fn without_labels(&self) -> DomainDataset {
        DomainDataset {
            labels: None,
            ..self.clone()
        }
    }

    pub fn with_features(&self, features: Matrix) -> Result<DomainDataset> {
        if features.cols() != self.len() {
            return Err(HandaError::shape(
                "with_features",
                format!("{} columns for {} samples", features.cols(), self.len()),
            ));
        }
        Self::with_classes(self.name.clone(), features, self.labels.clone(), self.class_count)
    }

    /// Sample indices of each class, in ascending order.
    pub fn class_indices(&self) -> Result<Vec<Vec<usize>>> {
        let y = self.require_labels()?;
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &c) in y.iter().enumerate() {
            out[c].push(i);
        }
        Ok(out)
    }
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> HandaError {
    HandaError::Format {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| HandaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| HandaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_value(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format_err(path, line, format!("unparsable number '{}'", field.trim())))?;
    if !v.is_finite() {
        return Err(format_err(path, line, format!("non-finite value '{}'", field.trim())));
    }
    Ok(v)
}

fn parse_label(path: &Path, line: usize, field: &str) -> Result<usize> {
    let field = field.trim();
    let field = field.strip_prefix('+').unwrap_or(field);
    if let Ok(v) = field.parse::<usize>() {
        return Ok(v);
    }
    // accept integral reals such as "2.0"
    match field.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 => Ok(v as usize),
        _ => Err(format_err(
            path,
            line,
            format!("label '{field}' is not a non-negative integer"),
        )),
    }
}

fn finish(
    path: &Path,
    columns: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    dim: usize,
) -> Result<DomainDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let n = columns.len();
    let mut features = Matrix::zeros(dim, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            features[(i, j)] = v;
        }
    }
    match labels {
        Some(y) => DomainDataset::labeled(name, features, y),
        None => DomainDataset::unlabeled(name, features),
    }
}

/// Reads "label,f1,...,fm" rows (or "f1,...,fm" when `has_labels` is false).
/// A first line whose first field is not a number is treated as a header.
pub fn load_dense(path: impl AsRef<Path>, has_labels: bool) -> Result<DomainDataset> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut columns = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if first {
            first = false;
            if fields[0].trim().parse::<f64>().is_err() {
                continue;
            }
        }
        let offset = usize::from(has_labels);
        if fields.len() <= offset {
            return Err(format_err(path, lineno, "row has no feature values"));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(format_err(
                    path,
                    lineno,
                    format!("ragged row: {} fields, expected {w}", fields.len()),
                ))
            }
            _ => {}
        }
        if has_labels {
            labels.push(parse_label(path, lineno, fields[0])?);
        }
        let col = fields[offset..]
            .iter()
            .map(|f| parse_value(path, lineno, f))
            .collect::<Result<Vec<f64>>>()?;
        columns.push(col);
    }
    let Some(width) = width else {
        return Err(format_err(path, 1, "file contains no data rows"));
    };
    let dim = width - usize::from(has_labels);
    finish(path, columns, has_labels.then_some(labels), dim)
}

/// Writes the dataset in the layout read by [`load_dense`], rendering every
/// value with the shortest decimal that parses back to the same bits.
pub fn save_dense(ds: &DomainDataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &dense_text(ds))
}

pub fn dense_text(ds: &DomainDataset) -> String {
    let x = ds.features();
    let mut out = String::new();
    for j in 0..ds.len() {
        let mut first = true;
        if let Some(y) = ds.labels() {
            let _ = write!(out, "{}", y[j]);
            first = false;
        }
        for i in 0..x.rows() {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{}", x[(i, j)]);
        }
        out.push('\n');
    }
    out
}

/// Reads svmlight-style "label idx:val ..." lines with 1-based, strictly
/// increasing indices. The largest index seen defines the dimension.
pub fn load_sparse(path: impl AsRef<Path>) -> Result<DomainDataset> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        labels.push(parse_label(path, lineno, label)?);
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| format_err(path, lineno, format!("malformed pair '{tok}'")))?;
            let i: usize = i
                .parse()
                .map_err(|_| format_err(path, lineno, format!("bad index in '{tok}'")))?;
            if i == 0 {
                return Err(format_err(path, lineno, "indices are 1-based"));
            }
            if i <= last {
                return Err(format_err(
                    path,
                    lineno,
                    format!("index {i} does not increase past {last}"),
                ));
            }
            last = i;
            row.push((i - 1, parse_value(path, lineno, v)?));
        }
        dim = dim.max(last);
        entries.push(row);
    }
    if entries.is_empty() {
        return Err(format_err(path, 1, "file contains no data rows"));
    }
    if dim == 0 {
        return Err(format_err(path, 1, "no feature indices present"));
    }
    let columns = entries
        .into_iter()
        .map(|row| {
            let mut col = vec![0.0; dim];
            for (i, v) in row {
                col[i] = v;
            }
            col
        })
        .collect();
    finish(path, columns, Some(labels), dim)
}

/// Inverse of [`load_sparse`]: zero entries are omitted.
pub fn sparse_text(ds: &DomainDataset) -> Result<String> {
    let y = ds.require_labels()?;
    let x = ds.features();
    let mut out = String::new();
    for (j, label) in y.iter().enumerate() {
        let _ = write!(out, "{label}");
        for i in 0..x.rows() {
            if x[(i, j)] != 0.0 {
                let _ = write!(out, " {}:{}", i + 1, x[(i, j)]);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_sparse(ds: &DomainDataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &sparse_text(ds)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labeled_per_class: usize,
    pub seed: u64,
    /// Fraction of the non-labeled remainder held out for testing.
    pub test_fraction: f64,
}

impl SplitSpec {
    pub fn new(labeled_per_class: usize, seed: u64) -> Self {
        SplitSpec {
            labeled_per_class,
            seed,
            test_fraction: 0.5,
        }
    }
}

/// Result of [`split_target`]. Index vectors refer to the input dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSplit {
    pub labeled: DomainDataset,
    /// Features only; ground truth kept separately in `unlabeled_truth`.
    pub unlabeled: DomainDataset,
    pub test: DomainDataset,
    pub unlabeled_truth: Vec<usize>,
    pub labeled_idx: Vec<usize>,
    pub unlabeled_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Stratified labeled draw of exactly `labeled_per_class` samples per class;
/// the remainder is shuffled and divided between unlabeled and test.
pub fn split_target(ds: &DomainDataset, spec: &SplitSpec) -> Result<TargetSplit> {
    if spec.labeled_per_class == 0 {
        return Err(HandaError::contract("labeled_per_class must be at least 1"));
    }
    if !(0.0..=1.0).contains(&spec.test_fraction) {
        return Err(HandaError::contract(format!(
            "test_fraction must lie in [0, 1], got {}",
            spec.test_fraction
        )));
    }
    let by_class = ds.class_indices()?;
    let mut rng = Rng::new(spec.seed).split(0x5711);
    let mut labeled_idx = Vec::new();
    let mut rest = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < spec.labeled_per_class + 1 {
            return Err(HandaError::contract(format!(
                "class {c} has {} samples, needs at least {}",
                members.len(),
                spec.labeled_per_class + 1
            )));
        }
        let pick = rng.sample_without_replacement(members.len(), members.len());
        labeled_idx.extend(pick[..spec.labeled_per_class].iter().map(|&p| members[p]));
        rest.extend(pick[spec.labeled_per_class..].iter().map(|&p| members[p]));
    }
    rest.sort_unstable();
    rng.shuffle(&mut rest);
    let n_test = (rest.len() as f64 * spec.test_fraction).round() as usize;
    let test_idx = rest[..n_test].to_vec();
    let unlabeled_idx = rest[n_test..].to_vec();
    let y = ds.require_labels()?;
    let name = ds.name();
    Ok(TargetSplit {
        labeled: ds.subset(&labeled_idx, format!("{name}.labeled")),
        unlabeled: ds.subset(&unlabeled_idx, format!("{name}.unlabeled")).without_labels(),
        test: ds.subset(&test_idx, format!("{name}.test")),
        unlabeled_truth: unlabeled_idx.iter().map(|&i| y[i]).collect(),
        labeled_idx,
        unlabeled_idx,
        test_idx,
    })
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Statistics over the columns of all `parts` together. Constant features
    /// keep scale 1.
    pub fn fit(parts: &[&Matrix]) -> Result<Self> {
        let dim = parts
            .first()
            .ok_or_else(|| HandaError::contract("standardizer needs at least one matrix"))?
            .rows();
        if parts.iter().any(|m| m.rows() != dim) {
            return Err(HandaError::shape("Standardizer::fit", "feature dimensions differ"));
        }
        let n: usize = parts.iter().map(|m| m.cols()).sum();
        if n == 0 {
            return Err(HandaError::contract("standardizer needs at least one sample"));
        }
        let mut mean = vec![0.0; dim];
        for m in parts {
            for (i, mu) in mean.iter_mut().enumerate() {
                *mu += m.row(i).iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|mu| *mu /= n as f64);
        let mut var = vec![0.0; dim];
        for m in parts {
            for (i, v) in var.iter_mut().enumerate() {
                *v += m.row(i).iter().map(|x| (x - mean[i]).powi(2)).sum::<f64>();
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.mean.len() {
            return Err(HandaError::shape(
                "Standardizer::apply",
                format!("{} features, fitted on {}", x.rows(), self.mean.len()),
            ));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x[(i, j)] - self.mean[i]) / self.scale[i]
        }))
    }

    pub fn apply_dataset(&self, ds: &DomainDataset) -> Result<DomainDataset> {
        ds.with_features(self.apply(ds.features())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub latent_dim: usize,
    pub m_s: usize,
    pub m_t: usize,
    pub n_per_class: usize,
    pub noise: f64,
    pub shift: f64,
    pub seed: u64,
    /// Use one mixing matrix for both domains (requires `m_s == m_t`).
    #[serde(default)]
    pub share_mixing: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 3,
            latent_dim: 6,
            m_s: 20,
            m_t: 12,
            n_per_class: 200,
            noise: 0.3,
            shift: 1.0,
            seed: 0,
            share_mixing: false,
        }
    }
}

pub const SYNTHETIC_RADIUS: f64 = 4.0;

/// Two domains generated from shared latent class means on a sphere of
/// radius 4. Source columns are `M_s (μ_y + σ ε)`, target columns are
/// `M_t (μ_y + shift e₁ + σ ε)` with independent Gaussian mixing matrices.
/// Samples are ordered by class.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(DomainDataset, DomainDataset)> {
    let z = spec.latent_dim;
    if spec.classes < 2 {
        return Err(HandaError::contract("synthetic task needs at least two classes"));
    }
    if z == 0 || z > spec.m_s.min(spec.m_t) {
        return Err(HandaError::contract(format!(
            "latent dim {z} must lie in [1, min(m_s, m_t) = {}]",
            spec.m_s.min(spec.m_t)
        )));
    }
    if spec.n_per_class == 0 {
        return Err(HandaError::contract("n_per_class must be at least 1"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite() && spec.shift.is_finite()) {
        return Err(HandaError::contract("noise must be finite and >= 0, shift finite"));
    }
    if spec.share_mixing && spec.m_s != spec.m_t {
        return Err(HandaError::contract("shared mixing requires m_s == m_t"));
    }
    let root = Rng::new(spec.seed);
    let mut mean_rng = root.split(1);
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..z).map(|_| mean_rng.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                break v.iter().map(|x| SYNTHETIC_RADIUS * x / norm).collect();
            }
        })
        .collect();
    let m_s = root.split(2).normal_matrix(spec.m_s, z);
    let m_t = if spec.share_mixing {
        m_s.clone()
    } else {
        root.split(3).normal_matrix(spec.m_t, z)
    };

    let domain = |mix: &Matrix, shift: f64, tag: u64, name: &str| -> Result<DomainDataset> {
        let mut rng = root.split(tag);
        let n = spec.classes * spec.n_per_class;
        let mut latent = Matrix::zeros(z, n);
        let mut labels = Vec::with_capacity(n);
        for (c, mu) in means.iter().enumerate() {
            for s in 0..spec.n_per_class {
                let j = c * spec.n_per_class + s;
                for (i, &m) in mu.iter().enumerate() {
                    let offset = if i == 0 { shift } else { 0.0 };
                    latent[(i, j)] = m + offset + spec.noise * rng.normal();
                }
                labels.push(c);
            }
        }
        DomainDataset::with_classes(name, mix.matmul(&latent)?, Some(labels), spec.classes)
    };
    // the same noise stream for both domains when they share a mixing matrix
    let target_tag = if spec.share_mixing { 4 } else { 5 };
    Ok((
        domain(&m_s, 0.0, 4, "source")?,
        domain(&m_t, spec.shift, target_tag, "target")?,
    ))
}
