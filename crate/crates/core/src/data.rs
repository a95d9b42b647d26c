//! Dataset ingestion and the column-per-sample data model.
//!
//! A `Dataset` holds `X` as a d×n matrix whose columns are samples. Two file
//! formats are supported: a small binary matrix container ("RGM1") and CSV
//! with one sample per row. Labels live in sidecar text files, one integer
//! per line.

use crate::error::{Error, Result};
use crate::numerics::{rng, Matrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const RGM_MAGIC: &[u8; 4] = b"RGM1";

#[derive(Debug, Clone)]
pub struct Dataset {
    /// d×n; feature values, one sample per column.
    pub x: Matrix,
    /// Class ids in `[0, k)`, one per sample, when ground truth is known.
    pub labels: Option<Vec<usize>>,
    /// (height, width, channels) for image data; product must equal d.
    pub sample_shape: Option<(usize, usize, usize)>,
    pub name: String,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        let ds = Dataset {
            x,
            labels,
            sample_shape: None,
            name: name.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_sample_shape(mut self, shape: (usize, usize, usize)) -> Result<Self> {
        self.sample_shape = Some(shape);
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.len() {
                return Err(Error::contract(format!(
                    "dataset {}: {} labels for {} samples",
                    self.name,
                    labels.len(),
                    self.len()
                )));
            }
        }
        if let Some((h, w, c)) = self.sample_shape {
            if h * w * c != self.dim() {
                return Err(Error::contract(format!(
                    "dataset {}: sample shape {h}x{w}x{c} does not flatten to {} features",
                    self.name,
                    self.dim()
                )));
            }
        }
        self.x.check_finite(&format!("dataset {}", self.name))
    }

    /// Number of distinct classes, when labels are present.
    pub fn class_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Rgm,
    Csv,
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgm" => Ok(MatrixFormat::Rgm),
            "csv" => Ok(MatrixFormat::Csv),
            other => Err(Error::config(format!("unknown matrix format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    None,
    /// Affine map sending the global min to 0 and the global max to 1.
    #[default]
    GlobalMinMax,
    /// Same map applied per feature row.
    PerFeatureMinMax,
}

/// Load a dense matrix file as a dataset, applying load-time normalization.
pub fn load_dense(path: &Path, format: MatrixFormat, normalize: Normalize) -> Result<Dataset> {
    let mut x = match format {
        MatrixFormat::Rgm => read_rgm(path)?,
        MatrixFormat::Csv => read_csv_samples(path)?,
    };
    normalize_in_place(&mut x, normalize);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Dataset::new(x, None, name)
}

/// Rescale entries into `[0, 1]`. A degenerate range (max == min, e.g. a
/// constant feature under the per-feature rule) maps to 0 rather than NaN.
pub fn normalize_in_place(x: &mut Matrix, mode: Normalize) {
    match mode {
        Normalize::None => {}
        Normalize::GlobalMinMax => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in x.data() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            rescale(x.data_mut(), lo, hi);
        }
        Normalize::PerFeatureMinMax => {
            for i in 0..x.rows() {
                let row = x.row(i);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &v in row {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                rescale(x.row_mut(i), lo, hi);
            }
        }
    }
}

fn rescale(values: &mut [f64], lo: f64, hi: f64) {
    if values.is_empty() {
        return;
    }
    let range = hi - lo;
    if range <= 0.0 {
        values.fill(0.0);
    } else {
        for v in values.iter_mut() {
            *v = (*v - lo) / range;
        }
    }
}

// ── binary matrix format ──────────────────────────────────────────────

/// Magic "RGM1", u32 LE rows (d), u32 LE cols (n), then rows·cols f64 LE
/// values in row-major order.
pub fn write_rgm(path: &Path, m: &Matrix) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + m.data().len() * 8);
    buf.extend_from_slice(RGM_MAGIC);
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    buf.extend_from_slice(&m.le_bytes());
    write_file(path, &buf)
}

pub fn read_rgm(path: &Path) -> Result<Matrix> {
    let bytes = read_file(path)?;
    let name = path.display().to_string();
    if bytes.len() < 12 {
        return Err(Error::parse(&name, "file shorter than the 12-byte header"));
    }
    if &bytes[0..4] != RGM_MAGIC {
        return Err(Error::parse(
            &name,
            format!("unknown format tag {:?}", &bytes[0..4]),
        ));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + rows * cols * 8;
    if bytes.len() != expected {
        return Err(Error::parse(
            &name,
            format!(
                "payload is {} bytes, header {rows}x{cols} implies {expected}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[12..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    for (idx, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::parse(
                &name,
                format!(
                    "non-finite entry {v} at row {}, column {}",
                    idx / cols,
                    idx % cols
                ),
            ));
        }
    }
    Matrix::from_vec(rows, cols, data)
}

// ── csv (one sample per row) ──────────────────────────────────────────

/// CSV rows are samples; the returned matrix is the d×n transpose.
pub fn read_csv_samples(path: &Path) -> Result<Matrix> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(
                    &name,
                    format!("unparseable value '{}' at line {}, field {}", field, lineno + 1, col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    &name,
                    format!("non-finite entry at line {}, field {}", lineno + 1, col + 1),
                ));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(
                    &name,
                    format!(
                        "line {} has {} fields, expected {}",
                        lineno + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(&name, "no samples"));
    }
    let samples = Matrix::from_rows(&rows)?;
    Ok(samples.transpose())
}

// ── label files ───────────────────────────────────────────────────────

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: usize = line.parse().map_err(|_| {
            Error::parse(&name, format!("bad label '{}' at line {}", line, lineno + 1))
        })?;
        labels.push(v);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut buf = String::new();
    for l in labels {
        buf.push_str(&l.to_string());
        buf.push('\n');
    }
    write_file(path, buf.as_bytes())
}

// ── tf-idf vectorization ──────────────────────────────────────────────

/// Term weights: tf = raw count / document length, idf = ln(N / df). The
/// vocabulary keeps the `vocab_size` terms with the highest max column
/// weight (ties broken lexicographically); matrix rows follow that ranking.
pub fn tfidf_vectorize(
    documents: &[Vec<String>],
    vocab_size: usize,
) -> Result<(Matrix, Vec<String>)> {
    if vocab_size == 0 {
        return Err(Error::contract("tfidf_vectorize: vocab_size must be >= 1"));
    }
    let n = documents.len();
    if n == 0 || documents.iter().all(|d| d.is_empty()) {
        return Err(Error::contract("tfidf_vectorize: empty corpus"));
    }

    // BTreeMap keeps term iteration order deterministic.
    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: Vec<BTreeMap<&str, usize>> = Vec::with_capacity(n);
    for doc in documents {
        let mut c: BTreeMap<&str, usize> = BTreeMap::new();
        for token in doc {
            *c.entry(token.as_str()).or_insert(0) += 1;
        }
        for term in c.keys() {
            *doc_freq.entry(term).or_insert(0) += 1;
        }
        counts.push(c);
    }

    let idf: BTreeMap<&str, f64> = doc_freq
        .iter()
        .map(|(&t, &df)| (t, (n as f64 / df as f64).ln()))
        .collect();

    // Corpus-level score per term: the maximum tf-idf over documents.
    let mut scored: Vec<(&str, f64)> = idf
        .iter()
        .map(|(&t, &idf_t)| {
            let best = counts
                .iter()
                .zip(documents.iter())
                .filter(|(_, doc)| !doc.is_empty())
                .map(|(c, doc)| {
                    let tf = *c.get(t).unwrap_or(&0) as f64 / doc.len() as f64;
                    tf * idf_t
                })
                .fold(0.0f64, f64::max);
            (t, best)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
    scored.truncate(vocab_size);
    let vocab: Vec<String> = scored.iter().map(|(t, _)| t.to_string()).collect();

    let mut x = Matrix::zeros(vocab.len(), n);
    for (row, term) in vocab.iter().enumerate() {
        let idf_t = idf[term.as_str()];
        for (col, (c, doc)) in counts.iter().zip(documents.iter()).enumerate() {
            if doc.is_empty() {
                continue;
            }
            let tf = *c.get(term.as_str()).unwrap_or(&0) as f64 / doc.len() as f64;
            x.set(row, col, tf * idf_t);
        }
    }
    Ok((x, vocab))
}

// ── subsampling ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleSpec {
    /// First `count` samples of each class, in source order.
    PerClass(usize),
    /// Seeded uniform subset of `count` samples, kept in source order.
    Total(usize),
}

pub fn subsample(ds: &Dataset, spec: SubsampleSpec, seed: u64) -> Result<Dataset> {
    let indices = subsample_indices(ds, spec, seed)?;
    let x = ds.x.select_cols(&indices);
    let labels = ds
        .labels
        .as_ref()
        .map(|l| indices.iter().map(|&i| l[i]).collect());
    let mut out = Dataset::new(x, labels, format!("{}-sub", ds.name))?;
    out.sample_shape = ds.sample_shape;
    Ok(out)
}

pub fn subsample_indices(ds: &Dataset, spec: SubsampleSpec, seed: u64) -> Result<Vec<usize>> {
    let n = ds.len();
    match spec {
        SubsampleSpec::PerClass(per_class) => {
            let labels = ds.labels.as_ref().ok_or_else(|| {
                Error::config("per-class subsampling requires labels".to_string())
            })?;
            let k = ds.class_count().unwrap_or(0);
            let mut taken = vec![0usize; k];
            let mut indices = Vec::new();
            for (i, &l) in labels.iter().enumerate() {
                if taken[l] < per_class {
                    taken[l] += 1;
                    indices.push(i);
                }
            }
            if taken.iter().any(|&t| t < per_class) {
                return Err(Error::config(format!(
                    "requested {per_class} samples per class but some class has fewer"
                )));
            }
            Ok(indices)
        }
        SubsampleSpec::Total(total) => {
            if total > n {
                return Err(Error::config(format!(
                    "requested {total} samples from a dataset of {n}"
                )));
            }
            let mut rng = rng::seeded(seed);
            let mut pool: Vec<usize> = (0..n).collect();
            // Partial Fisher-Yates, then restore source order.
            for i in 0..total {
                let j = rand::Rng::gen_range(&mut rng, i..n);
                pool.swap(i, j);
            }
            let mut indices = pool[..total].to_vec();
            indices.sort_unstable();
            Ok(indices)
        }
    }
}

// ── helpers ───────────────────────────────────────────────────────────

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.display().to_string();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(&name, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(&name, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&name, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let name = path.display().to_string();
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(&name, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(&name, e))?;
    Ok(buf)
}
