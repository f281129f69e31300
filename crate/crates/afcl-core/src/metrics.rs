//! Internal validity indices and a centralized k-means oracle.
//!
//! The oracle backs the non-IID partitioner and the degeneracy checks; the
//! indices score clusterings without ground-truth labels.

use ndarray::Array2;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::init::{kmeanspp_init, sq_dist};

/// A dataset together with a candidate labeling, validated for index
/// computation (at least 2 and at most n - 1 distinct labels).
pub struct LabeledEvaluation<'a> {
    data: &'a DataMatrix,
    /// Labels remapped to 0..k_hat in first-appearance order.
    compact: Vec<usize>,
    k_hat: usize,
}

impl<'a> LabeledEvaluation<'a> {
    pub fn new(data: &'a DataMatrix, labels: &[usize]) -> Result<Self> {
        if labels.len() != data.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                data.n()
            )));
        }
        let mut map = std::collections::HashMap::new();
        let mut compact = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = map.len();
            compact.push(*map.entry(l).or_insert(next));
        }
        let k_hat = map.len();
        if k_hat < 2 {
            return Err(Error::UndefinedIndex(
                "fewer than 2 distinct clusters".into(),
            ));
        }
        if k_hat > data.n() - 1 {
            return Err(Error::UndefinedIndex(
                "every point is its own cluster".into(),
            ));
        }
        Ok(Self { data, compact, k_hat })
    }

    pub fn k_hat(&self) -> usize {
        self.k_hat
    }
}

/// Mean silhouette over all points. Singleton clusters contribute 0.
pub fn silhouette(ev: &LabeledEvaluation) -> f64 {
    let n = ev.data.n();
    let k = ev.k_hat;
    let mut cluster_sizes = vec![0usize; k];
    for &c in &ev.compact {
        cluster_sizes[c] += 1;
    }

    // sums[i][c] = total distance from point i to every point of cluster c.
    let mut sums = vec![0.0f64; n * k];
    for i in 0..n {
        let xi = ev.data.row(i);
        for j in (i + 1)..n {
            let d = sq_dist(xi, ev.data.row(j)).sqrt();
            sums[i * k + ev.compact[j]] += d;
            sums[j * k + ev.compact[i]] += d;
        }
    }

    let mut total = 0.0;
    for i in 0..n {
        let ci = ev.compact[i];
        if cluster_sizes[ci] == 1 {
            continue; // contributes s = 0
        }
        let a = sums[i * k + ci] / (cluster_sizes[ci] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != ci)
            .map(|c| sums[i * k + c] / cluster_sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Calinski-Harabasz ratio: between-cluster over within-cluster dispersion,
/// each normalized by its degrees of freedom. Returns +infinity when every
/// cluster has zero spread.
pub fn calinski_harabasz(ev: &LabeledEvaluation) -> f64 {
    let n = ev.data.n();
    let d = ev.data.d();
    let k = ev.k_hat;

    let mut sizes = vec![0usize; k];
    let mut means = Array2::<f64>::zeros((k, d));
    for (i, &c) in ev.compact.iter().enumerate() {
        sizes[c] += 1;
        let mut row = means.row_mut(c);
        row += &ev.data.row(i);
    }
    for (c, &sz) in sizes.iter().enumerate() {
        let mut row = means.row_mut(c);
        row /= sz as f64;
    }
    let grand = ev.data.values().mean_axis(ndarray::Axis(0)).expect("n >= 1");

    let between: f64 = (0..k)
        .map(|c| sizes[c] as f64 * sq_dist(means.row(c), grand.view()))
        .sum();
    let within: f64 = (0..n)
        .map(|i| sq_dist(ev.data.row(i), means.row(ev.compact[i])))
        .sum();

    let numer = between / (k - 1) as f64;
    if within == 0.0 {
        return f64::INFINITY;
    }
    numer / (within / (n - k) as f64)
}

/// A fitted centralized k-means model.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centers: Array2<f64>,
    pub labels: Vec<usize>,
    pub iterations: usize,
    pub within_ss: f64,
}

/// k-means++ seeding followed by Lloyd refinement.
pub fn centralized_kmeans(
    m: &DataMatrix,
    k: usize,
    rng_seed: u64,
    max_iter: usize,
) -> Result<KMeansFit> {
    let seeds = kmeanspp_init(m, k, rng_seed)?;
    Ok(lloyd(m, seeds.positions().clone(), max_iter))
}

fn assign_nearest(m: &DataMatrix, centers: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let n = m.n();
    let k = centers.nrows();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    for i in 0..n {
        let x = m.row(i);
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for c in 0..k {
            let d = sq_dist(x, centers.row(c));
            if d < best {
                best = d;
                arg = c;
            }
        }
        labels[i] = arg;
        dists[i] = best;
    }
    (labels, dists)
}

/// Lloyd iterations from explicit initial centers, to an assignment fixpoint
/// or `max_iter`. An emptied cluster is re-seeded to the point currently
/// farthest from its center (among clusters with more than one member).
pub fn lloyd(m: &DataMatrix, mut centers: Array2<f64>, max_iter: usize) -> KMeansFit {
    let n = m.n();
    let d = m.d();
    let k = centers.nrows();
    let (mut labels, mut dists) = assign_nearest(m, &centers);
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &m.row(i);
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mut row = sums.row_mut(c);
                row /= count as f64;
                centers.row_mut(c).assign(&sums.row(c));
            }
        }
        // Re-seed empty clusters to far points of crowded clusters.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dists[a].partial_cmp(&dists[b]).expect("finite distances"));
                if let Some(far) = far {
                    centers.row_mut(c).assign(&m.row(far));
                    counts[labels[far]] -= 1;
                    counts[c] += 1;
                    labels[far] = c;
                    dists[far] = 0.0;
                }
            }
        }

        let (new_labels, new_dists) = assign_nearest(m, &centers);
        let converged = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        if converged {
            break;
        }
    }

    let within_ss = dists.iter().sum();
    KMeansFit { centers, labels, iterations, within_ss }
}

/// Squared Euclidean nearest-center labels, used for final reporting.
pub fn nearest_center_labels(m: &DataMatrix, centers: &Array2<f64>) -> Vec<usize> {
    assign_nearest(m, centers).0
}
