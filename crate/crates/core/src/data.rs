//! Labelled feature matrices: validation, file formats, synthetic clusters
//! and seeded train/query splitting.
//!
//! Features are held column-per-sample (`D x N`), matching the on-disk
//! column-major layout of the binary format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::binio;
use crate::{LbseError, Result};

const DATASET_MAGIC: &[u8; 4] = b"LBSE";
const DATASET_VERSION: u8 = 1;

/// Supported dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Binary,
}

impl DatasetFormat {
    /// `.csv` means CSV; anything else is treated as the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Binary,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = LbseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DatasetFormat::Csv),
            "lbse-binary" | "binary" | "bin" => Ok(DatasetFormat::Binary),
            other => Err(LbseError::InvalidConfig(format!("unknown dataset format {other:?}"))),
        }
    }
}

/// A single-label dataset: `features` is `D x N`, `labels[i]` is the class of
/// column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (d, n) = features.shape();
        if d == 0 || n == 0 {
            return Err(LbseError::DimensionMismatch(format!(
                "dataset needs D >= 1 and N >= 1, got D={d}, N={n}"
            )));
        }
        if num_classes < 2 {
            return Err(LbseError::InvalidConfig(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if labels.len() != n {
            return Err(LbseError::DimensionMismatch(format!(
                "{} labels for {n} samples",
                labels.len()
            )));
        }
        if let Some((sample, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(LbseError::LabelOutOfRange {
                sample,
                label,
                num_classes,
            });
        }
        for (col, column) in features.column_iter().enumerate() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(LbseError::NonFinite { row, col });
            }
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Columns `indices` in the given order, same class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.select_columns(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(features, labels, self.num_classes)
    }

    pub fn label_matrix(&self) -> LabelMatrix {
        to_label_matrix(self)
    }

    pub fn load(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
        let file = File::open(path.as_ref())?;
        let mut reader = BufReader::new(file);
        match format {
            DatasetFormat::Csv => read_csv(reader),
            DatasetFormat::Binary => read_binary(&mut reader),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DatasetFormat) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        match format {
            DatasetFormat::Csv => self.write_csv(&mut w)?,
            DatasetFormat::Binary => self.write_binary(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{},{},{}", self.dim(), self.len(), self.num_classes)?;
        for row in self.features.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        let labels: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        writeln!(w, "{}", labels.join(","))?;
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&[DATASET_VERSION])?;
        binio::write_u32(w, binio::to_u32(self.dim(), "feature dimension")?)?;
        binio::write_u32(w, binio::to_u32(self.len(), "sample count")?)?;
        binio::write_u32(w, binio::to_u32(self.num_classes, "class count")?)?;
        // nalgebra storage is column-major already
        for &v in self.features.as_slice() {
            binio::write_f64(w, v)?;
        }
        for &l in &self.labels {
            binio::write_u32(w, l as u32)?;
        }
        Ok(())
    }
}

/// Loads a dataset from `path`.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    Dataset::load(path, format)
}

fn parse_header(line: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(LbseError::MalformedHeader(format!(
            "expected `D,N,C`, found {line:?}"
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| LbseError::MalformedHeader(format!("bad header field {s:?}")))
    };
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

pub(crate) fn read_csv<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    let Some(header) = lines.first() else {
        return Err(LbseError::MalformedHeader("empty file".into()));
    };
    let (d, n, c) = parse_header(header)?;
    if lines.len() != d + 2 {
        return Err(LbseError::DimensionMismatch(format!(
            "expected {} feature rows plus a label row, found {} data lines",
            d,
            lines.len() - 1
        )));
    }

    let mut features = DMatrix::<f64>::zeros(d, n);
    for (r, line) in lines[1..=d].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n {
            return Err(LbseError::DimensionMismatch(format!(
                "feature row {r} has {} values, header declares N={n}",
                cells.len()
            )));
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| LbseError::InvalidNumber {
                line: r + 2,
                text: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(LbseError::NonFinite { row: r, col });
            }
            features[(r, col)] = v;
        }
    }

    let label_cells: Vec<&str> = lines[d + 1].split(',').map(str::trim).collect();
    if label_cells.len() != n {
        return Err(LbseError::DimensionMismatch(format!(
            "label row has {} entries, header declares N={n}",
            label_cells.len()
        )));
    }
    let labels = label_cells
        .iter()
        .map(|cell| {
            cell.parse::<usize>().map_err(|_| LbseError::InvalidNumber {
                line: d + 2,
                text: cell.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(features, labels, c)
}

pub(crate) fn read_binary<R: Read>(r: &mut R) -> Result<Dataset> {
    binio::read_magic(r, DATASET_MAGIC)?;
    binio::read_version(r, DATASET_VERSION)?;
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = binio::read_u32(r).map_err(|e| binio::header_err(e, "truncated header"))? as usize;
    }
    let [d, n, c] = dims;
    if d == 0 || n == 0 {
        return Err(LbseError::MalformedHeader(format!("empty shape D={d}, N={n}")));
    }
    let mut values = Vec::with_capacity(d * n);
    for _ in 0..d * n {
        values.push(binio::read_f64(r).map_err(binio::payload_err)?);
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(binio::read_u32(r).map_err(binio::payload_err)? as usize);
    }
    binio::expect_eof(r)?;
    Dataset::new(DMatrix::from_vec(d, n, values), labels, c)
}

/// One-hot `C x N` label matrix; exactly one 1 per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix(DMatrix<f64>);

impl LabelMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.nrows()
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }
}

pub fn to_label_matrix(d: &Dataset) -> LabelMatrix {
    let mut y = DMatrix::zeros(d.num_classes(), d.len());
    for (i, &l) in d.labels().iter().enumerate() {
        y[(l, i)] = 1.0;
    }
    LabelMatrix(y)
}

/// Isotropic Gaussian blobs, one per class, around standard-normal centers.
/// Samples are laid out class by class.
pub fn synth_clusters(
    n_per_class: usize,
    num_classes: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || dim == 0 {
        return Err(LbseError::InvalidConfig(
            "per-class count and dimension must be positive".into(),
        ));
    }
    if num_classes < 2 {
        return Err(LbseError::InvalidConfig(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(LbseError::InvalidConfig(format!("spread must be > 0, got {spread}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    while centers.len() < num_classes {
        let c: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if centers.iter().all(|o| o != &c) {
            centers.push(c);
        }
    }

    let n = n_per_class * num_classes;
    let mut features = DMatrix::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for k in 0..n_per_class {
            let col = class * n_per_class + k;
            for (r, &mu) in center.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                features[(r, col)] = mu + spread * z;
            }
            labels.push(class);
        }
    }
    Dataset::new(features, labels, num_classes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub query_fraction: f64,
    pub seed: u64,
}

/// Seeded random partition into `(database, query)`. Both sides keep the
/// original relative sample order.
pub fn split(d: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (db_idx, q_idx) = split_indices(d.len(), spec)?;
    Ok((d.subset(&db_idx)?, d.subset(&q_idx)?))
}

pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.query_fraction > 0.0 && spec.query_fraction < 1.0) {
        return Err(LbseError::DegenerateSplit(format!(
            "query fraction {} outside (0, 1)",
            spec.query_fraction
        )));
    }
    let n_query = (n as f64 * spec.query_fraction).round() as usize;
    if n_query == 0 || n_query >= n {
        return Err(LbseError::DegenerateSplit(format!(
            "{n} samples with fraction {} leaves an empty side",
            spec.query_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut query = order[..n_query].to_vec();
    let mut database = order[n_query..].to_vec();
    query.sort_unstable();
    database.sort_unstable();
    Ok((database, query))
}

/// Per-feature zero-mean/unit-variance transform fitted on one dataset and
/// applied to others. Constant features are centered only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &DMatrix<f64>) -> Self {
        let n = features.ncols() as f64;
        let mut mean = Vec::with_capacity(features.nrows());
        let mut scale = Vec::with_capacity(features.nrows());
        for row in features.row_iter() {
            let m = row.sum() / n;
            let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.dim() != self.mean.len() {
            return Err(LbseError::DimensionMismatch(format!(
                "standardizer fitted on D={}, dataset has D={}",
                self.mean.len(),
                d.dim()
            )));
        }
        let mut x = d.features().clone();
        for (r, mut row) in x.row_iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = (*v - self.mean[r]) / self.scale[r];
            }
        }
        Dataset::new(x, d.labels().to_vec(), d.num_classes())
    }
}
