//! End-to-end runs: seeded asynchronous participation, convergence
//! detection, homogenized-seed merging, and the final global assignment.

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::client::client_round_with_order;
use crate::data::{partition_noniid, ClientDataset, DataMatrix};
use crate::error::{Error, Result};
use crate::init::{kmeanspp_init, server_pool_init, SeedSet};
use crate::metrics::{self, LabeledEvaluation};
use crate::report::{ClusterReport, RoundRecord, TrajectorySnapshot};
use crate::rng::{
    mix_seed, rng_from, STREAM_CLIENT_INIT, STREAM_PARTITION, STREAM_POOL_INIT, STREAM_SHUFFLE,
};
use crate::server::{ServerConfig, ServerState};

/// Per-client participation probabilities for each iteration, with the seed
/// for the participation stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationSchedule {
    pub probs: Vec<f64>,
    pub rng_seed: u64,
}

impl ParticipationSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::InvalidConfig("schedule needs at least one client".into()));
        }
        if self.probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidConfig(
                "participation probabilities must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn clients(&self) -> usize {
        self.probs.len()
    }
}

/// Everything one run needs besides the data.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Initial (deliberately excessive) seed count.
    pub k0: usize,
    /// Balance-weight sensitivity.
    pub xi: f64,
    /// Learning rate.
    pub eta: f64,
    pub max_iter: u64,
    /// Relative objective change below which an iteration counts as stable.
    pub conv_rel_tol: f64,
    /// Stable iterations required before declaring convergence.
    pub conv_patience: usize,
    /// Seed-merge radius; `None` resolves to `0.01 * sqrt(d)`.
    pub merge_radius: Option<f64>,
    pub schedule: ParticipationSchedule,
    pub rng_seed: u64,
    /// Use the unnormalized aggregation divisor.
    pub literal_aggregation: bool,
    /// Force all balance weights to 1.
    pub disable_balancing: bool,
    /// Visit client rows in a per-round seeded shuffle instead of stored order.
    pub shuffle_rows: bool,
}

impl RunConfig {
    pub fn new(k0: usize, probs: Vec<f64>, rng_seed: u64) -> Self {
        Self {
            k0,
            xi: 1.0,
            eta: 0.003,
            max_iter: 100,
            conv_rel_tol: 1e-3,
            conv_patience: 3,
            merge_radius: None,
            schedule: ParticipationSchedule { probs, rng_seed: mix_seed(rng_seed, 0x5c8ed) },
            rng_seed,
            literal_aggregation: false,
            disable_balancing: false,
            shuffle_rows: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.k0 == 0 {
            return Err(Error::InvalidConfig("k0 must be at least 1".into()));
        }
        if !(self.eta > 0.0) || !(self.xi > 0.0) {
            return Err(Error::InvalidConfig("eta and xi must be positive".into()));
        }
        if !(self.conv_rel_tol > 0.0) || self.conv_patience == 0 {
            return Err(Error::InvalidConfig("convergence tolerances must be positive".into()));
        }
        if let Some(r) = self.merge_radius {
            if !(r > 0.0) {
                return Err(Error::InvalidConfig("merge radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn resolved_merge_radius(&self, d: usize) -> f64 {
        self.merge_radius.unwrap_or(0.04 * (d as f64).sqrt())
    }
}

/// Draws an initial seed count from `[k_star, 2 * k_star]` for experiment
/// setups where a reference cluster count is available.
pub fn sample_initial_k(k_star: usize, rng_seed: u64) -> usize {
    let mut rng = rng_from(rng_seed);
    rng.random_range(k_star..=2 * k_star)
}

/// Squared center distance below which a seed pair counts as homogenized
/// for the objective.
const DUP_THRESHOLD: f64 = 1e-6;

const PARTICIPANT_RESAMPLES: usize = 32;

/// Independently includes each client with its probability, deterministically
/// for a given (seed, iteration). An empty draw is resampled; if that keeps
/// failing the highest-probability client is forced in.
pub fn sample_participants(schedule: &ParticipationSchedule, iteration: u64) -> Vec<usize> {
    let mut rng = rng_from(mix_seed(schedule.rng_seed, iteration));
    for _ in 0..PARTICIPANT_RESAMPLES {
        let picked: Vec<usize> = schedule
            .probs
            .iter()
            .enumerate()
            .filter_map(|(g, &p)| (rng.random::<f64>() < p).then_some(g))
            .collect();
        if !picked.is_empty() {
            return picked;
        }
    }
    let forced = schedule
        .probs
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite probabilities"))
        .map(|(g, _)| g)
        .expect("nonempty schedule");
    vec![forced]
}

const CONV_EPS: f64 = 1e-12;

/// True when the trailing relative changes of the objective stay below
/// `tol` for `patience` consecutive iterations (or the entire history is
/// that stable and spans at least `patience` entries).
pub fn check_convergence(z_history: &[f64], conv_rel_tol: f64, conv_patience: usize) -> bool {
    let n = z_history.len();
    let mut stable = 0usize;
    for i in (1..n).rev() {
        let denom = z_history[i - 1].abs().max(CONV_EPS);
        if (z_history[i] - z_history[i - 1]).abs() / denom < conv_rel_tol {
            stable += 1;
        } else {
            break;
        }
    }
    stable >= conv_patience || (stable == n.saturating_sub(1) && n >= conv_patience)
}

/// Single-linkage grouping of seeds within `merge_radius` (Euclidean).
/// Returns the unweighted group centers and each seed's group index; groups
/// are numbered by their lowest seed index.
pub fn merge_seeds(seeds: &SeedSet, merge_radius: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = seeds.k();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let radius_sq = merge_radius * merge_radius;
    for i in 0..k {
        for j in (i + 1)..k {
            if crate::init::sq_dist(seeds.position(i), seeds.position(j)) <= radius_sq {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = b.min(a);
                }
            }
        }
    }

    let mut group_of_root: std::collections::BTreeMap<usize, usize> = Default::default();
    let mut seed_to_cluster = vec![0usize; k];
    for i in 0..k {
        let root = find(&mut parent, i);
        let next = group_of_root.len();
        let g = *group_of_root.entry(root).or_insert(next);
        seed_to_cluster[i] = g;
    }

    let groups = group_of_root.len();
    let d = seeds.d();
    let mut centers = vec![vec![0.0; d]; groups];
    let mut counts = vec![0usize; groups];
    for i in 0..k {
        let g = seed_to_cluster[i];
        counts[g] += 1;
        for (j, v) in seeds.position(i).iter().enumerate() {
            centers[g][j] += v;
        }
    }
    for (c, &n) in centers.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }
    (centers, seed_to_cluster)
}

/// Nearest merged center per object, concatenated client by client in
/// canonical order. Plain squared Euclidean, no frequency weighting.
pub fn final_assignment(clients: &[ClientDataset], merged_centers: &[Vec<f64>]) -> Result<Vec<usize>> {
    if merged_centers.is_empty() {
        return Err(Error::InvalidConfig("no centers to assign against".into()));
    }
    let d = merged_centers[0].len();
    let flat: Vec<f64> = merged_centers.iter().flatten().copied().collect();
    let centers = Array2::from_shape_vec((merged_centers.len(), d), flat)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let mut out = Vec::new();
    for c in clients {
        out.extend(metrics::nearest_center_labels(&c.data, &centers));
    }
    Ok(out)
}

/// Partitions the dataset into non-IID clients and runs the full protocol.
pub fn run(data: &DataMatrix, config: &RunConfig) -> Result<ClusterReport> {
    config.validate()?;
    let clients = partition_noniid(
        data,
        config.schedule.clients(),
        mix_seed(config.rng_seed, STREAM_PARTITION),
    )?;
    run_partitioned(&clients, config)
}

/// Runs the full protocol over pre-partitioned clients: per-client seeding,
/// pooled server re-seeding, the asynchronous learning loop, merging, and
/// reporting. Deterministic for a given (clients, config).
pub fn run_partitioned(clients: &[ClientDataset], config: &RunConfig) -> Result<ClusterReport> {
    config.validate()?;
    if clients.is_empty() {
        return Err(Error::InvalidConfig("at least one client required".into()));
    }
    if clients.len() != config.schedule.clients() {
        return Err(Error::InvalidConfig(format!(
            "{} clients but {} participation probabilities",
            clients.len(),
            config.schedule.clients()
        )));
    }
    for (i, c) in clients.iter().enumerate() {
        if c.client_id != i {
            return Err(Error::InvalidConfig("clients must be ordered by id 0..p".into()));
        }
    }
    let d = clients[0].data.d();
    if clients.iter().any(|c| c.data.d() != d) {
        return Err(Error::DimensionMismatch("clients disagree on dimension".into()));
    }

    // Per-client seeding, then pooled re-seeding on the server.
    let init_base = mix_seed(config.rng_seed, STREAM_CLIENT_INIT);
    let mut client_seeds = Vec::with_capacity(clients.len());
    for c in clients {
        let k_local = config.k0.min(c.size());
        client_seeds.push(kmeanspp_init(&c.data, k_local, mix_seed(init_base, c.client_id as u64))?);
    }
    let seeds = server_pool_init(
        &client_seeds,
        config.k0,
        mix_seed(config.rng_seed, STREAM_POOL_INIT),
    )?;

    let merge_radius = config.resolved_merge_radius(d);
    let server_config = ServerConfig {
        eta: config.eta,
        xi: config.xi,
        literal_aggregation: config.literal_aggregation,
        disable_balancing: config.disable_balancing,
        dup_threshold: DUP_THRESHOLD,
    };
    let mut server = ServerState::new(seeds, clients.len(), server_config)?;

    // On normalized data every seed must stay inside a fixed box around the
    // unit cube; enforce it whenever the inputs actually are normalized.
    let data_in_unit_cube = clients
        .iter()
        .all(|c| c.data.values().iter().all(|&v| (0.0..=1.0).contains(&v)));

    let shuffle_base = mix_seed(config.rng_seed, STREAM_SHUFFLE);
    let mut trajectory = vec![TrajectorySnapshot {
        iteration: 0,
        seeds: seed_rows(server.seeds()),
    }];
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut converged = false;
    let mut iterations_run = 0u64;

    for t in 1..=config.max_iter {
        let participants = sample_participants(&config.schedule, t);
        let mut uploads = Vec::with_capacity(participants.len());
        for &g in &participants {
            let order = if config.shuffle_rows {
                let mut idx: Vec<usize> = (0..clients[g].size()).collect();
                let mut rng = rng_from(mix_seed(mix_seed(shuffle_base, t), g as u64));
                use rand::seq::SliceRandom;
                idx.shuffle(&mut rng);
                Some(idx)
            } else {
                None
            };
            uploads.push(client_round_with_order(
                &clients[g],
                server.seeds(),
                config.eta,
                t,
                order.as_deref(),
            )?);
        }
        let summary = server.server_round(&uploads)?;
        if data_in_unit_cube {
            let inside = server
                .seeds()
                .positions()
                .iter()
                .all(|&v| (-1.0..=2.0).contains(&v));
            if !inside {
                return Err(Error::NumericInvariant(
                    "seed left the [-1, 2] box on normalized data".into(),
                ));
            }
        }
        trajectory.push(TrajectorySnapshot { iteration: t, seeds: seed_rows(server.seeds()) });
        rounds.push(RoundRecord {
            iteration: t,
            participants: summary.participants,
            z: summary.z,
            z_over_configured: summary.z_over_configured,
            supported_seeds: summary.supported_seeds,
        });
        iterations_run = t;
        if check_convergence(server.z_history(), config.conv_rel_tol, config.conv_patience) {
            converged = true;
            break;
        }
    }

    let (merged_centers, seed_to_cluster) = merge_seeds(server.seeds(), merge_radius);
    let assignment = final_assignment(clients, &merged_centers)?;
    let source_rows: Vec<usize> = clients.iter().flat_map(|c| c.source_rows.clone()).collect();

    // Score the final labeling; undefined indices (e.g. a single learned
    // cluster) are reported as absent rather than failing the run.
    let views: Vec<_> = clients.iter().map(|c| c.data.values().view()).collect();
    let stacked = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let stacked = DataMatrix::new(stacked, None)?;
    let (silhouette, calinski_harabasz) = match LabeledEvaluation::new(&stacked, &assignment) {
        Ok(ev) => (Some(metrics::silhouette(&ev)), Some(metrics::calinski_harabasz(&ev))),
        Err(_) => (None, None),
    };

    Ok(ClusterReport {
        learned_k: merged_centers.len(),
        merged_centers,
        seed_to_cluster,
        final_seeds: seed_rows(server.seeds()),
        seed_ids: server.seeds().ids().to_vec(),
        assignment,
        source_rows,
        z_history: server.z_history().to_vec(),
        rounds,
        trajectory,
        silhouette,
        calinski_harabasz,
        iterations_run,
        converged,
    })
}

fn seed_rows(seeds: &SeedSet) -> Vec<Vec<f64>> {
    seeds.positions().rows().into_iter().map(|r| r.to_vec()).collect()
}
