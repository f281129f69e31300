//! Server-side seed interaction: balance-weight maintenance, aggregation of
//! uploaded centers and contributions, the DBI-form objective, cooperative
//! sets, and the seed updates themselves.

use ndarray::Array1;

use crate::client::ClientUpload;
use crate::error::{Error, Result};
use crate::init::{sq_dist, SeedSet};

/// Tuning knobs the server needs each round.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Learning rate the clients used when accumulating intensities.
    pub eta: f64,
    /// Sensitivity of the balance weights to communication-frequency shares.
    pub xi: f64,
    /// Divide aggregates by raw cluster-size sums instead of the weighted
    /// mass, reproducing the unnormalized aggregation rule.
    pub literal_aggregation: bool,
    /// Force every balance weight to 1, disabling frequency damping.
    pub disable_balancing: bool,
    /// Squared center distance below which a seed pair counts as one cluster
    /// and is excluded from the objective.
    pub dup_threshold: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            eta: 0.003,
            xi: 1.0,
            literal_aggregation: false,
            disable_balancing: false,
            dup_threshold: 1e-6,
        }
    }
}

/// Per-client balance weights: `w_g = xi / (xi + share_g)` where `share_g`
/// is the client's fraction of all communications so far. Before anyone has
/// communicated every weight is 1.
pub fn balance_weights(theta: &[u64], xi: f64) -> Vec<f64> {
    let total: u64 = theta.iter().sum();
    if total == 0 {
        return vec![1.0; theta.len()];
    }
    theta
        .iter()
        .map(|&t| {
            let share = t as f64 / total as f64;
            xi / (xi + share)
        })
        .collect()
}

/// The convergence-relevant part of one upload (intensities excluded).
#[derive(Debug, Clone)]
pub struct UploadStats {
    pub centers: Vec<Option<Vec<f64>>>,
    pub contributions: Vec<Option<f64>>,
    pub sizes: Vec<usize>,
}

impl From<&ClientUpload> for UploadStats {
    fn from(up: &ClientUpload) -> Self {
        Self {
            centers: up.centers.clone(),
            contributions: up.contributions.clone(),
            sizes: up.sizes.clone(),
        }
    }
}

/// Cross-client aggregate of centers and contributions per seed.
#[derive(Debug, Clone)]
pub struct AggregatedSummary {
    pub centers: Vec<Option<Vec<f64>>>,
    pub contributions: Vec<Option<f64>>,
    /// How many clients reported a nonempty cluster for each seed; a seed
    /// with support 0 is excluded from the objective this round.
    pub support: Vec<usize>,
}

fn aggregate_entries(
    entries: &[(usize, &UploadStats)],
    weights: &[f64],
    literal: bool,
) -> Result<AggregatedSummary> {
    if entries.is_empty() {
        return Err(Error::NoUploads);
    }
    let k = entries[0].1.sizes.len();
    if entries.iter().any(|(_, s)| s.sizes.len() != k) {
        return Err(Error::DimensionMismatch("uploads disagree on seed count".into()));
    }

    let mut centers = Vec::with_capacity(k);
    let mut contributions = Vec::with_capacity(k);
    let mut support = Vec::with_capacity(k);
    for r in 0..k {
        let mut center_num: Option<Vec<f64>> = None;
        let mut z_num = 0.0;
        let mut denom = 0.0;
        let mut sup = 0usize;
        for &(client, stats) in entries {
            let o = stats.sizes[r];
            if o == 0 {
                continue;
            }
            let w = weights[client];
            let mass = w * o as f64;
            let b = stats.centers[r]
                .as_ref()
                .ok_or_else(|| Error::DimensionMismatch("nonempty cluster without center".into()))?;
            let z = stats.contributions[r]
                .ok_or_else(|| Error::DimensionMismatch("nonempty cluster without contribution".into()))?;
            let acc = center_num.get_or_insert_with(|| vec![0.0; b.len()]);
            for (a, &bi) in acc.iter_mut().zip(b) {
                *a += mass * bi;
            }
            z_num += mass * z;
            denom += if literal { o as f64 } else { mass };
            sup += 1;
        }
        if sup == 0 {
            centers.push(None);
            contributions.push(None);
        } else {
            let mut c = center_num.expect("support implies accumulator");
            c.iter_mut().for_each(|v| *v /= denom);
            centers.push(Some(c));
            contributions.push(Some(z_num / denom));
        }
        support.push(sup);
    }
    Ok(AggregatedSummary { centers, contributions, support })
}

/// Weighted aggregation of a round's uploads. With `literal` set the
/// divisor is the raw count sum, so coefficients need not sum to one.
pub fn aggregate(
    uploads: &[ClientUpload],
    weights: &[f64],
    literal: bool,
) -> Result<AggregatedSummary> {
    let stats: Vec<UploadStats> = uploads.iter().map(UploadStats::from).collect();
    let entries: Vec<(usize, &UploadStats)> = uploads
        .iter()
        .zip(&stats)
        .map(|(u, s)| (u.client_id, s))
        .collect();
    aggregate_entries(&entries, weights, literal)
}

/// The global objective value for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// Mean worst-pair ratio over the supported seeds.
    pub over_supported: f64,
    /// Same sum averaged over the configured seed count instead.
    pub over_configured: f64,
    pub supported: usize,
}

/// Compactness-versus-dispersion objective over the aggregated summary: for
/// every supported seed, the worst ratio `(z_l + z_r) / ||b_l - b_r||^2`
/// against any other supported seed, averaged.
///
/// Pairs whose centers sit closer than `dup_threshold` (squared) are treated
/// as one homogenized cluster and skipped; a seed with no admissible partner
/// contributes 0. Returns `None` when fewer than 2 seeds are supported, in
/// which case the round has no objective and the previous value stands.
pub fn global_objective(agg: &AggregatedSummary, dup_threshold: f64) -> Option<Objective> {
    let supported: Vec<usize> = (0..agg.support.len())
        .filter(|&r| agg.support[r] > 0)
        .collect();
    if supported.len() < 2 {
        return None;
    }
    let mut sum = 0.0;
    for &l in &supported {
        let bl = agg.centers[l].as_ref().expect("supported seed has center");
        let zl = agg.contributions[l].expect("supported seed has contribution");
        let mut worst = 0.0f64;
        for &r in &supported {
            if r == l {
                continue;
            }
            let br = agg.centers[r].as_ref().expect("supported seed has center");
            let zr = agg.contributions[r].expect("supported seed has contribution");
            let dist_sq: f64 = bl
                .iter()
                .zip(br)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist_sq < dup_threshold {
                continue;
            }
            let ratio = (zl + zr) / dist_sq;
            if ratio > worst {
                worst = ratio;
            }
        }
        sum += worst;
    }
    Some(Objective {
        over_supported: sum / supported.len() as f64,
        over_configured: sum / agg.support.len() as f64,
        supported: supported.len(),
    })
}

/// Seeds within the data-driven radius of the winner: every seed `l` with
/// `||m_r - m_l||^2 <= ||w_g * v / eta||^2`. Always contains `r` itself.
pub fn cooperative_set(seeds: &SeedSet, r: usize, v: &[f64], w_g: f64, eta: f64) -> Vec<usize> {
    let radius_sq: f64 = v.iter().map(|vi| (w_g * vi / eta) * (w_g * vi / eta)).sum();
    let winner = seeds.position(r);
    (0..seeds.k())
        .filter(|&l| sq_dist(winner, seeds.position(l)) <= radius_sq)
        .collect()
}

/// Moves every member of a cooperative set by the balanced intensity plus an
/// attraction toward the winner's reference position.
///
/// `winner_reference` is the winner's position in the frame the intensity
/// was computed against, read before any member moves. With that reference
/// the member step equals `w_g * eta * (x - m_u)` for the contributing
/// object x, a convex step toward the object; for the winner at its
/// reference position the attraction vanishes and the step reduces to
/// `m_r += w_g * v`.
pub fn apply_seed_update(
    seeds: &mut SeedSet,
    coop: &[usize],
    winner_reference: &Array1<f64>,
    v: &[f64],
    w_g: f64,
    eta: f64,
) {
    let mut positions = seeds.positions_mut();
    for &u in coop {
        for j in 0..v.len() {
            let m = positions[[u, j]];
            positions[[u, j]] = m + w_g * v[j] + w_g * eta * (winner_reference[j] - m);
        }
    }
}

/// What one server round produced.
#[derive(Debug, Clone)]
pub struct RoundSummary {
    /// 1-based index of the completed round.
    pub iteration: u64,
    /// Clients that uploaded, ascending.
    pub participants: Vec<usize>,
    /// Objective over supported seeds, absent on a degenerate round.
    pub z: Option<f64>,
    /// Companion value averaged over the configured seed count.
    pub z_over_configured: Option<f64>,
    pub supported_seeds: usize,
}

/// Mutable server: the seed set, communication frequencies, balance weights,
/// each client's most recent summary statistics, and the objective history.
///
/// Single-writer: one round mutates the state at a time.
#[derive(Debug, Clone)]
pub struct ServerState {
    seeds: SeedSet,
    theta: Vec<u64>,
    weights: Vec<f64>,
    latest: Vec<Option<UploadStats>>,
    z_history: Vec<f64>,
    iteration: u64,
    config: ServerConfig,
}

impl ServerState {
    pub fn new(seeds: SeedSet, clients: usize, config: ServerConfig) -> Result<Self> {
        if clients == 0 {
            return Err(Error::InvalidConfig("at least one client required".into()));
        }
        if !(config.eta > 0.0) || !(config.xi > 0.0) {
            return Err(Error::InvalidConfig("eta and xi must be positive".into()));
        }
        Ok(Self {
            seeds,
            theta: vec![0; clients],
            weights: vec![1.0; clients],
            latest: vec![None; clients],
            z_history: Vec::new(),
            iteration: 0,
            config,
        })
    }

    pub fn seeds(&self) -> &SeedSet {
        &self.seeds
    }

    pub fn theta(&self) -> &[u64] {
        &self.theta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn z_history(&self) -> &[f64] {
        &self.z_history
    }

    pub fn current_z(&self) -> Option<f64> {
        self.z_history.last().copied()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    /// Runs one server round over the given uploads: records participation,
    /// applies every accumulated intensity through its cooperative set using
    /// the balance weights computed at the end of the previous round, then
    /// refreshes the aggregate objective and the weights.
    ///
    /// Cooperative radii and attraction targets are taken in the round-start
    /// frame, the same seed positions every intensity in these uploads was
    /// computed against, so each member update is a step toward the
    /// contributing object itself. Uploads are processed in ascending client
    /// id, seeds in ascending index, vectors in upload order, so the result
    /// is independent of submission order.
    pub fn server_round(&mut self, uploads: &[ClientUpload]) -> Result<RoundSummary> {
        if uploads.is_empty() {
            return Err(Error::NoUploads);
        }
        let p = self.theta.len();
        let k = self.seeds.k();
        let mut order: Vec<usize> = (0..uploads.len()).collect();
        order.sort_by_key(|&i| uploads[i].client_id);
        for pair in order.windows(2) {
            if uploads[pair[0]].client_id == uploads[pair[1]].client_id {
                return Err(Error::InvalidConfig("duplicate client id in round".into()));
            }
        }
        for up in uploads {
            if up.client_id >= p {
                return Err(Error::InvalidConfig(format!("unknown client id {}", up.client_id)));
            }
            if up.k() != k || up.intensities.k() != k {
                return Err(Error::DimensionMismatch("upload seed count mismatch".into()));
            }
            if up.intensities.d() != self.seeds.d() {
                return Err(Error::DimensionMismatch("upload dimension mismatch".into()));
            }
        }

        for &i in &order {
            self.theta[uploads[i].client_id] += 1;
        }

        let reference = self.seeds.clone();
        for &i in &order {
            let up = &uploads[i];
            let w_g = self.weights[up.client_id];
            for r in 0..k {
                let winner_reference: Array1<f64> = reference.position(r).to_owned();
                for v in up.intensities.vectors(r) {
                    let coop = cooperative_set(&reference, r, v, w_g, self.config.eta);
                    apply_seed_update(&mut self.seeds, &coop, &winner_reference, v, w_g, self.config.eta);
                }
            }
        }
        if !self.seeds.all_finite() {
            return Err(Error::NumericInvariant("seed position became non-finite".into()));
        }

        for &i in &order {
            let up = &uploads[i];
            self.latest[up.client_id] = Some(UploadStats::from(up));
        }
        let entries: Vec<(usize, &UploadStats)> = self
            .latest
            .iter()
            .enumerate()
            .filter_map(|(c, s)| s.as_ref().map(|s| (c, s)))
            .collect();
        let agg = aggregate_entries(&entries, &self.weights, self.config.literal_aggregation)?;
        let objective = global_objective(&agg, self.config.dup_threshold);
        if let Some(obj) = objective {
            self.z_history.push(obj.over_supported);
        }

        self.weights = if self.config.disable_balancing {
            vec![1.0; p]
        } else {
            balance_weights(&self.theta, self.config.xi)
        };
        self.iteration += 1;

        Ok(RoundSummary {
            iteration: self.iteration,
            participants: order.iter().map(|&i| uploads[i].client_id).collect(),
            z: objective.map(|o| o.over_supported),
            z_over_configured: objective.map(|o| o.over_configured),
            supported_seeds: objective.map_or(0, |o| o.supported),
        })
    }
}
