//! Dataset ingestion, normalization, synthetic benchmark generation, and
//! non-IID client partitioning.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::metrics;
use crate::rng::{mix_seed, rng_from};

/// An n x d real-valued dataset, optionally carrying per-row integer labels.
///
/// Labels are evaluation-only: they never travel to clients or the server.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    labels: Option<Vec<i64>>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidConfig(
                "data matrix must have at least one row and one column".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("data matrix contains non-finite values".into()));
        }
        if let Some(l) = &labels {
            if l.len() != values.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} rows",
                    l.len(),
                    values.nrows()
                )));
            }
        }
        Ok(Self { values, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<i64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidConfig("no rows supplied".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged row lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(values, labels)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Per-column min-max scaling into [0, 1]. A constant column maps to
    /// all-zeros, so it no longer influences any distance.
    pub fn minmax_normalize(&self) -> DataMatrix {
        let mut out = self.values.clone();
        for mut col in out.axis_iter_mut(Axis(1)) {
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = max - min;
            if span > 0.0 {
                col.mapv_inplace(|v| (v - min) / span);
            } else {
                col.fill(0.0);
            }
        }
        DataMatrix { values: out, labels: self.labels.clone() }
    }

    /// Row subset in the given order, keeping label alignment.
    pub fn select_rows(&self, indices: &[usize]) -> Result<DataMatrix> {
        if indices.iter().any(|&i| i >= self.n()) {
            return Err(Error::DimensionMismatch("row index out of range".into()));
        }
        let values = self.values.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        DataMatrix::new(values, labels)
    }
}

/// One client's shard of the global dataset.
#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: usize,
    pub data: DataMatrix,
    /// Original row indices in the global matrix, in shard order.
    pub source_rows: Vec<usize>,
}

impl ClientDataset {
    pub fn size(&self) -> usize {
        self.data.n()
    }
}

/// Mixture-of-Gaussians generator specification.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub centers: Vec<Vec<f64>>,
    pub stddevs: Vec<f64>,
    pub counts: Vec<usize>,
    pub rng_seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::InvalidConfig("synthesis needs at least one component".into()));
        }
        let d = self.centers[0].len();
        if d == 0 || self.centers.iter().any(|c| c.len() != d) {
            return Err(Error::DimensionMismatch("component centers have unequal dimension".into()));
        }
        if self.stddevs.len() != self.centers.len() || self.counts.len() != self.centers.len() {
            return Err(Error::DimensionMismatch(
                "centers, stddevs and counts must have equal length".into(),
            ));
        }
        if self.stddevs.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::InvalidConfig("stddevs must be positive".into()));
        }
        if self.counts.contains(&0) {
            return Err(Error::InvalidConfig("component counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a CSV load: the parsed matrix plus how many rows were dropped
/// because of missing cells.
#[derive(Debug)]
pub struct LoadedCsv {
    pub data: DataMatrix,
    pub dropped_rows: usize,
}

/// Loads a comma-separated file of reals, optionally splitting out one
/// integer label column.
///
/// Rows with an empty cell (or too few cells) are dropped; a non-empty cell
/// that does not parse as a finite real is an error.
pub fn load_csv(path: &Path, has_header: bool, label_col: Option<usize>) -> Result<LoadedCsv> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut dropped = 0usize;
    let mut width: Option<usize> = None;

    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if has_header && line_no == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let expect = *width.get_or_insert(cells.len());
        if cells.len() != expect || cells.iter().any(|c| c.is_empty()) {
            dropped += 1;
            continue;
        }
        if let Some(lc) = label_col {
            if lc >= cells.len() {
                return Err(Error::InvalidConfig(format!(
                    "label column {lc} out of range for {} columns",
                    cells.len()
                )));
            }
        }

        let mut row = Vec::with_capacity(cells.len());
        let mut label = None;
        let mut bad_cell = None;
        for (col, cell) in cells.iter().enumerate() {
            if Some(col) == label_col {
                match cell.parse::<i64>() {
                    Ok(v) => label = Some(v),
                    Err(_) => {
                        bad_cell = Some((line_no, col, cell.to_string()));
                        break;
                    }
                }
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    _ => {
                        bad_cell = Some((line_no, col, cell.to_string()));
                        break;
                    }
                }
            }
        }
        if let Some((r, c, value)) = bad_cell {
            return Err(Error::NonNumericCell { row: r, col: c, value });
        }
        rows.push(row);
        if let Some(l) = label {
            labels.push(l);
        }
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset {
            path: path.display().to_string(),
        });
    }
    let labels = if label_col.is_some() { Some(labels) } else { None };
    Ok(LoadedCsv {
        data: DataMatrix::from_rows(&rows, labels)?,
        dropped_rows: dropped,
    })
}

/// Draws a labeled Gaussian mixture. Deterministic for a given spec; labels
/// are component indices. The output is raw, the caller normalizes.
pub fn synth_gaussian(spec: &SynthSpec) -> Result<DataMatrix> {
    spec.validate()?;
    let d = spec.centers[0].len();
    let n: usize = spec.counts.iter().sum();
    let mut rng = rng_from(spec.rng_seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut values = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (comp, (center, (&stddev, &count))) in spec
        .centers
        .iter()
        .zip(spec.stddevs.iter().zip(spec.counts.iter()))
        .enumerate()
    {
        for _ in 0..count {
            for (j, &c) in center.iter().enumerate() {
                values[[row, j]] = c + stddev * unit.sample(&mut rng);
            }
            labels.push(comp as i64);
            row += 1;
        }
    }
    DataMatrix::new(values, Some(labels))
}

const PARTITION_RETRIES: usize = 10;

/// Splits a dataset into `p` non-IID clients by clustering it with k = p and
/// handing each cluster to one client, so a global cluster can end up split
/// into non-overlapping shards.
///
/// Row order within a client follows the global row order.
pub fn partition_noniid(m: &DataMatrix, p: usize, rng_seed: u64) -> Result<Vec<ClientDataset>> {
    if p == 0 {
        return Err(Error::InvalidConfig("client count must be at least 1".into()));
    }
    if p > m.n() {
        return Err(Error::TooManyClients { p, n: m.n() });
    }

    for attempt in 0..PARTITION_RETRIES {
        let seed = mix_seed(rng_seed, STREAM_ATTEMPT_BASE + attempt as u64);
        let fit = metrics::centralized_kmeans(m, p, seed, 100)?;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); p];
        for (row, &c) in fit.labels.iter().enumerate() {
            members[c].push(row);
        }
        if members.iter().all(|g| !g.is_empty()) {
            let mut out = Vec::with_capacity(p);
            for (client_id, source_rows) in members.into_iter().enumerate() {
                let data = m.select_rows(&source_rows)?;
                out.push(ClientDataset { client_id, data, source_rows });
            }
            return Ok(out);
        }
    }
    Err(Error::EmptyClient { retries: PARTITION_RETRIES })
}

const STREAM_ATTEMPT_BASE: u64 = 0x70;
