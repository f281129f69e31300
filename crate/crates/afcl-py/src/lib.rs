//! Python bindings: datasets, run configuration, full federated clustering
//! runs, and the validity indices.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use afcl_core::data::{self, DataMatrix};
use afcl_core::metrics::{self, LabeledEvaluation};
use afcl_core::orchestrator::{self, RunConfig};
use afcl_core::report::ClusterReport;

fn value_err(e: afcl_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An n x d dataset with optional integer labels (evaluation only).
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: DataMatrix,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (rows, labels=None))]
    fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<i64>>) -> PyResult<Self> {
        Ok(Self { inner: DataMatrix::from_rows(&rows, labels).map_err(value_err)? })
    }

    /// Load a CSV file, optionally splitting out one integer label column.
    #[staticmethod]
    #[pyo3(signature = (path, has_header=false, label_col=None))]
    fn load_csv(path: PathBuf, has_header: bool, label_col: Option<usize>) -> PyResult<Self> {
        let loaded = data::load_csv(&path, has_header, label_col).map_err(value_err)?;
        if loaded.dropped_rows > 0 {
            eprintln!("dropped {} incomplete rows from {}", loaded.dropped_rows, path.display());
        }
        Ok(Self { inner: loaded.data })
    }

    /// Draw a labeled Gaussian mixture; labels are component indices.
    #[staticmethod]
    fn synth_gaussian(
        centers: Vec<Vec<f64>>,
        stddevs: Vec<f64>,
        counts: Vec<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = data::SynthSpec { centers, stddevs, counts, rng_seed: seed };
        Ok(Self { inner: data::synth_gaussian(&spec).map_err(value_err)? })
    }

    /// Per-column min-max scaling into [0, 1].
    fn minmax_normalize(&self) -> Self {
        Self { inner: self.inner.minmax_normalize() }
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.values().rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn labels(&self) -> Option<Vec<i64>> {
        self.inner.labels().map(<[i64]>::to_vec)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d={}, labeled={})", self.inner.n(), self.inner.d(), self.inner.labels().is_some())
    }
}

/// Run configuration; unspecified knobs keep the library defaults.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (
        k0, participation, seed, *,
        eta=None, xi=None, max_iter=None, conv_rel_tol=None, conv_patience=None,
        merge_radius=None, literal_aggregation=false, disable_balancing=false,
        shuffle_rows=false
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        k0: usize,
        participation: Vec<f64>,
        seed: u64,
        eta: Option<f64>,
        xi: Option<f64>,
        max_iter: Option<u64>,
        conv_rel_tol: Option<f64>,
        conv_patience: Option<usize>,
        merge_radius: Option<f64>,
        literal_aggregation: bool,
        disable_balancing: bool,
        shuffle_rows: bool,
    ) -> PyResult<Self> {
        let mut config = RunConfig::new(k0, participation, seed);
        if let Some(v) = eta {
            config.eta = v;
        }
        if let Some(v) = xi {
            config.xi = v;
        }
        if let Some(v) = max_iter {
            config.max_iter = v;
        }
        if let Some(v) = conv_rel_tol {
            config.conv_rel_tol = v;
        }
        if let Some(v) = conv_patience {
            config.conv_patience = v;
        }
        config.merge_radius = merge_radius;
        config.literal_aggregation = literal_aggregation;
        config.disable_balancing = disable_balancing;
        config.shuffle_rows = shuffle_rows;
        config.validate().map_err(value_err)?;
        Ok(Self { inner: config })
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(k0={}, clients={}, eta={}, xi={})",
            self.inner.k0,
            self.inner.schedule.clients(),
            self.inner.eta,
            self.inner.xi
        )
    }
}

/// Outcome of one run.
#[pyclass(name = "Report")]
struct PyReport {
    inner: ClusterReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn learned_k(&self) -> usize {
        self.inner.learned_k
    }

    #[getter]
    fn merged_centers(&self) -> Vec<Vec<f64>> {
        self.inner.merged_centers.clone()
    }

    #[getter]
    fn seed_to_cluster(&self) -> Vec<usize> {
        self.inner.seed_to_cluster.clone()
    }

    #[getter]
    fn final_seeds(&self) -> Vec<Vec<f64>> {
        self.inner.final_seeds.clone()
    }

    #[getter]
    fn assignment(&self) -> Vec<usize> {
        self.inner.assignment.clone()
    }

    #[getter]
    fn source_rows(&self) -> Vec<usize> {
        self.inner.source_rows.clone()
    }

    #[getter]
    fn z_history(&self) -> Vec<f64> {
        self.inner.z_history.clone()
    }

    #[getter]
    fn silhouette(&self) -> Option<f64> {
        self.inner.silhouette
    }

    #[getter]
    fn calinski_harabasz(&self) -> Option<f64> {
        self.inner.calinski_harabasz
    }

    #[getter]
    fn iterations_run(&self) -> u64 {
        self.inner.iterations_run
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// Per-iteration seed snapshots as (iteration, positions) pairs;
    /// iteration 0 is the initialization.
    fn trajectory(&self) -> Vec<(u64, Vec<Vec<f64>>)> {
        self.inner
            .trajectory
            .iter()
            .map(|s| (s.iteration, s.seeds.clone()))
            .collect()
    }

    /// Per-round records as (iteration, participants, objective) tuples.
    fn rounds(&self) -> Vec<(u64, Vec<usize>, Option<f64>)> {
        self.inner
            .rounds
            .iter()
            .map(|r| (r.iteration, r.participants.clone(), r.z))
            .collect()
    }

    /// The full report as a JSON document.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(learned_k={}, iterations={}, converged={})",
            self.inner.learned_k, self.inner.iterations_run, self.inner.converged
        )
    }
}

/// Partition the dataset into as many non-IID clients as the configuration
/// has participation probabilities, then run the full protocol.
#[pyfunction]
fn run(dataset: &PyDataset, config: &PyConfig) -> PyResult<PyReport> {
    let report = orchestrator::run(&dataset.inner, &config.inner).map_err(value_err)?;
    Ok(PyReport { inner: report })
}

/// Cluster the dataset with k = clients and hand each cluster to one client;
/// returns the global row indices of each shard.
#[pyfunction]
fn partition_noniid(dataset: &PyDataset, clients: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    let shards = data::partition_noniid(&dataset.inner, clients, seed).map_err(value_err)?;
    Ok(shards.into_iter().map(|s| s.source_rows).collect())
}

/// Mean silhouette of a labeling.
#[pyfunction]
fn silhouette(dataset: &PyDataset, labels: Vec<usize>) -> PyResult<f64> {
    let ev = LabeledEvaluation::new(&dataset.inner, &labels).map_err(value_err)?;
    Ok(metrics::silhouette(&ev))
}

/// Calinski-Harabasz ratio of a labeling.
#[pyfunction]
fn calinski_harabasz(dataset: &PyDataset, labels: Vec<usize>) -> PyResult<f64> {
    let ev = LabeledEvaluation::new(&dataset.inner, &labels).map_err(value_err)?;
    Ok(metrics::calinski_harabasz(&ev))
}

/// Centralized k-means (k-means++ seeding plus Lloyd refinement); returns
/// (centers, labels).
#[pyfunction]
#[pyo3(signature = (dataset, k, seed, max_iter=100))]
fn centralized_kmeans(
    dataset: &PyDataset,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let fit = metrics::centralized_kmeans(&dataset.inner, k, seed, max_iter).map_err(value_err)?;
    let centers = fit.centers.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok((centers, fit.labels))
}

/// k-means++ seeding only.
#[pyfunction]
fn kmeanspp_init(dataset: &PyDataset, k: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let seeds = afcl_core::init::kmeanspp_init(&dataset.inner, k, seed).map_err(value_err)?;
    Ok(seeds.positions().rows().into_iter().map(|r| r.to_vec()).collect())
}

/// Per-client balance weights from communication counts.
#[pyfunction]
fn balance_weights(theta: Vec<u64>, xi: f64) -> Vec<f64> {
    afcl_core::server::balance_weights(&theta, xi)
}

#[pymodule]
fn afcl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(partition_noniid, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(calinski_harabasz, m)?)?;
    m.add_function(wrap_pyfunction!(centralized_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(kmeanspp_init, m)?)?;
    m.add_function(wrap_pyfunction!(balance_weights, m)?)?;
    Ok(())
}
