//! k-means++ seeding on clients and the pooled re-seeding on the server.

use ndarray::{Array2, ArrayView1, ArrayViewMut2, Axis};
use rand::Rng;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::rng::rng_from;

pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let diff = x - y;
            diff * diff
        })
        .sum()
}

/// The k global seed points plus a stable identity per seed.
///
/// Seeds are updated in place over the run and never reindexed, so an id
/// names the same trajectory from initialization to convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    seeds: Array2<f64>,
    ids: Vec<u32>,
}

impl SeedSet {
    pub fn new(seeds: Array2<f64>, ids: Vec<u32>) -> Result<Self> {
        if seeds.nrows() == 0 || seeds.ncols() == 0 {
            return Err(Error::InvalidConfig("seed set must be non-empty".into()));
        }
        if ids.len() != seeds.nrows() {
            return Err(Error::DimensionMismatch("one id per seed required".into()));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(Error::InvalidConfig("seed ids must be unique".into()));
        }
        if seeds.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInvariant("seed coordinates must be finite".into()));
        }
        Ok(Self { seeds, ids })
    }

    pub fn k(&self) -> usize {
        self.seeds.nrows()
    }

    pub fn d(&self) -> usize {
        self.seeds.ncols()
    }

    pub fn positions(&self) -> &Array2<f64> {
        &self.seeds
    }

    pub fn position(&self, r: usize) -> ArrayView1<'_, f64> {
        self.seeds.row(r)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub(crate) fn positions_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.seeds.view_mut()
    }

    pub fn all_finite(&self) -> bool {
        self.seeds.iter().all(|v| v.is_finite())
    }
}

/// Standard k-means++ seeding: first seed uniform over rows, every further
/// seed drawn proportionally to its squared distance from the nearest chosen
/// seed. Seeding only, no refinement.
pub fn kmeanspp_init(m: &DataMatrix, k: usize, rng_seed: u64) -> Result<SeedSet> {
    let n = m.n();
    if k == 0 || k > n {
        return Err(Error::BadSeedCount { k, n });
    }
    let mut rng = rng_from(rng_seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let mut dist = vec![f64::INFINITY; n];

    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;

    while chosen.len() < k {
        let last = m.row(*chosen.last().expect("at least one seed"));
        for (i, di) in dist.iter_mut().enumerate() {
            let d = sq_dist(m.row(i), last);
            if d < *di {
                *di = d;
            }
        }
        let total: f64 = dist
            .iter()
            .zip(&taken)
            .map(|(d, &t)| if t { 0.0 } else { *d })
            .sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for i in 0..n {
                if taken[i] {
                    continue;
                }
                target -= dist[i];
                if target <= 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave a tail; fall back to the last untaken row.
            pick.unwrap_or_else(|| (0..n).rev().find(|&i| !taken[i]).expect("untaken row"))
        } else {
            // All remaining rows coincide with chosen seeds; pick uniformly.
            let remaining: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            remaining[rng.random_range(0..remaining.len())]
        };
        chosen.push(next);
        taken[next] = true;
    }

    let mut seeds = Array2::zeros((k, m.d()));
    for (row, &idx) in chosen.iter().enumerate() {
        seeds.row_mut(row).assign(&m.row(idx));
    }
    SeedSet::new(seeds, (0..k as u32).collect())
}

/// Pools every client's initial seeds into one point set and re-seeds k
/// global seeds from it with k-means++. Global ids are assigned here and
/// kept for the whole run.
pub fn server_pool_init(client_seed_sets: &[SeedSet], k: usize, rng_seed: u64) -> Result<SeedSet> {
    let pooled: usize = client_seed_sets.iter().map(SeedSet::k).sum();
    if pooled < k {
        return Err(Error::PoolTooSmall { pooled, k });
    }
    let d = client_seed_sets[0].d();
    if client_seed_sets.iter().any(|s| s.d() != d) {
        return Err(Error::DimensionMismatch("client seed sets differ in dimension".into()));
    }
    let views: Vec<_> = client_seed_sets.iter().map(|s| s.positions().view()).collect();
    let pool = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let pool = DataMatrix::new(pool, None)?;
    kmeanspp_init(&pool, k, rng_seed)
}
