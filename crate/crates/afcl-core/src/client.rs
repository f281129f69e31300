//! Per-round local computation on one client: frequency-weighted winner
//! assignment, win counting, suspended update intensities, local centers and
//! objective contributions.
//!
//! Nothing here mutates the global seeds. All seed movement is deferred to
//! the server, which receives the accumulated intensities.

use ndarray::ArrayView1;

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::init::{sq_dist, SeedSet};

/// Win counts for one round and the frequency weights derived from them.
///
/// Counts start at one rather than zero so the weight vector is defined
/// before the first win.
#[derive(Debug, Clone, PartialEq)]
pub struct WinState {
    wins: Vec<u64>,
}

impl WinState {
    pub fn new(k: usize) -> Self {
        Self { wins: vec![1; k] }
    }

    pub fn wins(&self) -> &[u64] {
        &self.wins
    }

    /// Normalized win frequencies; always a point on the simplex.
    pub fn weights(&self) -> Vec<f64> {
        let mut buf = vec![0.0; self.wins.len()];
        self.weights_into(&mut buf);
        buf
    }

    pub fn weights_into(&self, out: &mut [f64]) {
        let total: u64 = self.wins.iter().sum();
        for (o, &s) in out.iter_mut().zip(&self.wins) {
            *o = s as f64 / total as f64;
        }
    }

    pub fn record_win(&mut self, winner: usize) {
        self.wins[winner] += 1;
    }
}

/// Picks the seed minimizing `weight_r * ||x - m_r||^2`; ties go to the
/// lowest seed index.
pub fn assign_winner(x: ArrayView1<f64>, seeds: &SeedSet, weights: &[f64]) -> usize {
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (r, w) in weights.iter().enumerate().take(seeds.k()) {
        let cost = w * sq_dist(x, seeds.position(r));
        if cost < best {
            best = cost;
            arg = r;
        }
    }
    arg
}

/// The suspended competitive-learning displacement `eta * (x - m_winner)`.
pub fn update_intensity(x: ArrayView1<f64>, m_winner: ArrayView1<f64>, eta: f64) -> Vec<f64> {
    x.iter().zip(m_winner.iter()).map(|(xi, mi)| eta * (xi - mi)).collect()
}

/// Per-seed lists of update-intensity vectors, in the order the contributing
/// objects were processed.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateIntensitySet {
    d: usize,
    per_seed: Vec<Vec<f64>>, // flat d-vectors per seed
}

impl UpdateIntensitySet {
    pub fn new(k: usize, d: usize) -> Self {
        Self { d, per_seed: vec![Vec::new(); k] }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.per_seed.len()
    }

    pub fn push(&mut self, seed: usize, v: &[f64]) {
        debug_assert_eq!(v.len(), self.d);
        self.per_seed[seed].extend_from_slice(v);
    }

    /// Number of vectors attributed to `seed`.
    pub fn count(&self, seed: usize) -> usize {
        self.per_seed[seed].len() / self.d
    }

    pub fn total_count(&self) -> usize {
        (0..self.k()).map(|r| self.count(r)).sum()
    }

    pub fn vectors(&self, seed: usize) -> impl Iterator<Item = &[f64]> {
        self.per_seed[seed].chunks_exact(self.d)
    }
}

/// One client's round output. Empty local clusters carry no center and no
/// contribution; the server skips them during aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpload {
    pub client_id: usize,
    pub round_index: u64,
    /// Local cluster centers, one per seed, absent where the seed won nothing.
    pub centers: Vec<Option<Vec<f64>>>,
    /// Per-seed dispersion around the local center (squared-distance units).
    pub contributions: Vec<Option<f64>>,
    /// Per-seed cluster sizes; sums to the client's row count.
    pub sizes: Vec<usize>,
    pub intensities: UpdateIntensitySet,
}

impl ClientUpload {
    pub fn k(&self) -> usize {
        self.sizes.len()
    }
}

/// Mean of the rows won by each seed, plus the respective counts.
pub fn local_centers(
    x: &ClientDataset,
    winners: &[usize],
    k: usize,
) -> (Vec<Option<Vec<f64>>>, Vec<usize>) {
    let d = x.data.d();
    let mut sums = vec![vec![0.0f64; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &w) in winners.iter().enumerate() {
        counts[w] += 1;
        for (j, v) in x.data.row(i).iter().enumerate() {
            sums[w][j] += v;
        }
    }
    let centers = sums
        .into_iter()
        .zip(&counts)
        .map(|(mut s, &c)| {
            if c == 0 {
                None
            } else {
                s.iter_mut().for_each(|v| *v /= c as f64);
                Some(s)
            }
        })
        .collect();
    (centers, counts)
}

/// Sum of squared distances of each cluster's rows to its local center.
pub fn local_contributions(
    x: &ClientDataset,
    winners: &[usize],
    centers: &[Option<Vec<f64>>],
) -> Vec<Option<f64>> {
    let mut z: Vec<Option<f64>> = centers
        .iter()
        .map(|c| c.as_ref().map(|_| 0.0))
        .collect();
    for (i, &w) in winners.iter().enumerate() {
        if let Some(center) = &centers[w] {
            let dsq: f64 = x
                .data
                .row(i)
                .iter()
                .zip(center.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            *z[w].as_mut().expect("center implies contribution") += dsq;
        }
    }
    z
}

/// Runs one full client round against a frozen snapshot of the global seeds,
/// processing rows in stored order.
pub fn client_round(
    x: &ClientDataset,
    seeds: &SeedSet,
    eta: f64,
    round_index: u64,
) -> Result<ClientUpload> {
    client_round_with_order(x, seeds, eta, round_index, None)
}

/// As [`client_round`], but visiting rows in an explicit order. The winner
/// bookkeeping is online, so the visiting order changes the competition.
pub fn client_round_with_order(
    x: &ClientDataset,
    seeds: &SeedSet,
    eta: f64,
    round_index: u64,
    order: Option<&[usize]>,
) -> Result<ClientUpload> {
    if eta <= 0.0 {
        return Err(Error::InvalidConfig("learning rate must be positive".into()));
    }
    if x.data.d() != seeds.d() {
        return Err(Error::DimensionMismatch(format!(
            "client data is {}-dimensional, seeds are {}-dimensional",
            x.data.d(),
            seeds.d()
        )));
    }
    let n = x.data.n();
    if let Some(o) = order {
        if o.len() != n || o.iter().any(|&i| i >= n) {
            return Err(Error::InvalidConfig("row order must be a permutation of 0..n".into()));
        }
    }
    let k = seeds.k();

    let mut state = WinState::new(k);
    let mut weights = vec![0.0; k];
    let mut winners = vec![0usize; n];
    let mut intensities = UpdateIntensitySet::new(k, x.data.d());

    let visit = |i: usize,
                     state: &mut WinState,
                     weights: &mut Vec<f64>,
                     winners: &mut Vec<usize>,
                     intensities: &mut UpdateIntensitySet| {
        let xi = x.data.row(i);
        state.weights_into(weights);
        let w = assign_winner(xi, seeds, weights);
        state.record_win(w);
        let v = update_intensity(xi, seeds.position(w), eta);
        intensities.push(w, &v);
        winners[i] = w;
    };
    match order {
        Some(o) => {
            for &i in o {
                visit(i, &mut state, &mut weights, &mut winners, &mut intensities);
            }
        }
        None => {
            for i in 0..n {
                visit(i, &mut state, &mut weights, &mut winners, &mut intensities);
            }
        }
    }

    let (centers, sizes) = local_centers(x, &winners, k);
    let contributions = local_contributions(x, &winners, &centers);
    Ok(ClientUpload {
        client_id: x.client_id,
        round_index,
        centers,
        contributions,
        sizes,
        intensities,
    })
}
