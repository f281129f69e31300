//! Property tests and independent-oracle cross-checks.

use afcl_core::client::{assign_winner, client_round, WinState};
use afcl_core::data::{partition_noniid, synth_gaussian, ClientDataset, DataMatrix, SynthSpec};
use afcl_core::init::{kmeanspp_init, SeedSet};
use afcl_core::metrics::{silhouette, LabeledEvaluation};
use afcl_core::orchestrator::{merge_seeds, run_partitioned, RunConfig};
use afcl_core::rng::{mix_seed, rng_from};
use afcl_core::server::{cooperative_set, ServerConfig, ServerState};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn matrix_strategy(max_n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-1e3..1e3f64, d),
        2..max_n,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_is_idempotent_and_bounded(rows in matrix_strategy(40, 3)) {
        let m = DataMatrix::from_rows(&rows, None).unwrap();
        let once = m.minmax_normalize();
        prop_assert!(once.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let twice = once.minmax_normalize();
        prop_assert_eq!(once.values(), twice.values());
    }

    #[test]
    fn partition_is_exact_cover(rows in matrix_strategy(60, 2), p in 1usize..5, seed in 0u64..1000) {
        let m = DataMatrix::from_rows(&rows, None).unwrap();
        prop_assume!(p <= m.n());
        let clients = partition_noniid(&m, p, seed).unwrap();
        let mut seen: Vec<usize> = clients.iter().flat_map(|c| c.source_rows.clone()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..m.n()).collect::<Vec<_>>());
        for c in &clients {
            prop_assert!(c.size() >= 1);
        }
    }

    #[test]
    fn damped_cooperative_set_is_subset(
        coords in prop::collection::vec(0.0..1.0f64, 8),
        v in prop::collection::vec(-0.3..0.3f64, 2),
        w in 0.0..1.0f64,
        r in 0usize..4,
    ) {
        let seeds = SeedSet::new(
            Array2::from_shape_vec((4, 2), coords).unwrap(),
            vec![0, 1, 2, 3],
        ).unwrap();
        let full = cooperative_set(&seeds, r, &v, 1.0, 0.003);
        let damped = cooperative_set(&seeds, r, &v, w, 0.003);
        prop_assert!(damped.contains(&r));
        prop_assert!(damped.iter().all(|u| full.contains(u)));
    }

    #[test]
    fn merged_count_monotone_in_radius(
        coords in prop::collection::vec(0.0..1.0f64, 12),
        r1 in 1e-4..1.0f64,
        r2 in 1e-4..1.0f64,
    ) {
        let seeds = SeedSet::new(
            Array2::from_shape_vec((6, 2), coords).unwrap(),
            (0..6).collect(),
        ).unwrap();
        let (small, big) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let (ks, _) = merge_seeds(&seeds, small);
        let (kb, _) = merge_seeds(&seeds, big);
        prop_assert!(kb.len() <= ks.len());
    }

    #[test]
    fn silhouette_bounded_and_permutation_invariant(
        rows in matrix_strategy(30, 2),
        flip in any::<bool>(),
    ) {
        prop_assume!(rows.len() >= 4);
        let m = DataMatrix::from_rows(&rows, None).unwrap();
        let labels: Vec<usize> = (0..m.n()).map(|i| i % 2).collect();
        let sc = silhouette(&LabeledEvaluation::new(&m, &labels).unwrap());
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&sc));
        if flip {
            let renamed: Vec<usize> = labels.iter().map(|&l| 5 - l).collect();
            let sc2 = silhouette(&LabeledEvaluation::new(&m, &renamed).unwrap());
            prop_assert!((sc - sc2).abs() < 1e-12);
        }
    }

    #[test]
    fn win_weights_stay_on_simplex(wins in prop::collection::vec(0usize..5, 1..200)) {
        let mut st = WinState::new(5);
        for w in wins {
            st.record_win(w);
            let sum: f64 = st.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}

fn small_blobs(seed: u64, k: usize, per: usize, stddev: f64) -> DataMatrix {
    let mut rng = rng_from(seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            vec![
                0.15 + 0.7 * (i % 2) as f64 + rng.random_range(-0.03..0.03),
                0.15 + 0.7 * (i / 2) as f64 + rng.random_range(-0.03..0.03),
            ]
        })
        .collect();
    let spec = SynthSpec {
        centers,
        stddevs: vec![stddev; k],
        counts: vec![per; k],
        rng_seed: mix_seed(seed, 1),
    };
    synth_gaussian(&spec).unwrap().minmax_normalize()
}

fn as_single_client(data: &DataMatrix) -> ClientDataset {
    ClientDataset {
        client_id: 0,
        data: data.clone(),
        source_rows: (0..data.n()).collect(),
    }
}

/// The upload's per-seed contributions must equal a brute-force recomputation
/// of the within-cluster sum of squares around the local centers, with the
/// winner sequence reproduced independently.
#[test]
fn upload_contributions_match_brute_force() {
    let data = small_blobs(31, 3, 80, 0.02);
    let client = as_single_client(&data);
    let seeds = kmeanspp_init(&data, 4, 5).unwrap();
    let eta = 0.003;
    let up = client_round(&client, &seeds, eta, 0).unwrap();

    // Independent replay of the online competition.
    let k = seeds.k();
    let mut s = vec![1u64; k];
    let mut winners = Vec::new();
    for i in 0..data.n() {
        let total: u64 = s.iter().sum();
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for r in 0..k {
            let gamma = s[r] as f64 / total as f64;
            let dist: f64 = data
                .row(i)
                .iter()
                .zip(seeds.position(r).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let cost = gamma * dist;
            if cost < best {
                best = cost;
                arg = r;
            }
        }
        winners.push(arg);
        s[arg] += 1;
    }

    let mut sums = vec![vec![0.0; 2]; k];
    let mut counts = vec![0usize; k];
    for (i, &w) in winners.iter().enumerate() {
        counts[w] += 1;
        for j in 0..2 {
            sums[w][j] += data.row(i)[j];
        }
    }
    assert_eq!(counts, up.sizes);
    let mut total_z = 0.0;
    for r in 0..k {
        if counts[r] == 0 {
            assert_eq!(up.contributions[r], None);
            continue;
        }
        let center: Vec<f64> = sums[r].iter().map(|v| v / counts[r] as f64).collect();
        let mut z = 0.0;
        for (i, &w) in winners.iter().enumerate() {
            if w == r {
                z += data
                    .row(i)
                    .iter()
                    .zip(&center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }
        let got = up.contributions[r].unwrap();
        assert!((got - z).abs() < 1e-9, "seed {r}: {got} vs brute-force {z}");
        total_z += z;
    }
    let uploaded: f64 = up.contributions.iter().flatten().sum();
    assert!((uploaded - total_z).abs() < 1e-9);
}

/// With uniform frozen weights the winner rule is plain nearest-seed.
#[test]
fn frozen_uniform_weights_are_nearest_seed() {
    let data = small_blobs(77, 4, 30, 0.05);
    let seeds = kmeanspp_init(&data, 5, 3).unwrap();
    let uniform = vec![0.2; 5];
    for i in 0..data.n() {
        let x = data.row(i);
        let got = assign_winner(x, &seeds, &uniform);
        let nearest = (0..5)
            .min_by(|&a, &b| {
                let da: f64 = x.iter().zip(seeds.position(a)).map(|(p, q)| (p - q) * (p - q)).sum();
                let db: f64 = x.iter().zip(seeds.position(b)).map(|(p, q)| (p - q) * (p - q)).sum();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        assert_eq!(got, nearest);
    }
}

/// Sample-based oracle for the server update: with w = 1, every member of
/// the cooperative set must take the step `eta * (x - m_u)` toward the
/// contributing object, where x is recovered from the uploaded intensity.
#[test]
fn server_round_matches_sample_based_oracle() {
    let data = small_blobs(13, 3, 60, 0.03);
    let client = as_single_client(&data);
    let init = kmeanspp_init(&data, 4, 21).unwrap();
    let eta = 0.003;

    let mut state = ServerState::new(
        init.clone(),
        1,
        ServerConfig { eta, disable_balancing: true, ..ServerConfig::default() },
    )
    .unwrap();
    let up = client_round(&client, &init, eta, 1).unwrap();
    state.server_round(&[up.clone()]).unwrap();

    // Oracle: frozen round-start frame, members step toward the object.
    let mut oracle: Vec<Vec<f64>> = init.positions().rows().into_iter().map(|r| r.to_vec()).collect();
    for r in 0..4 {
        let reference: Vec<f64> = init.position(r).to_vec();
        for v in up.intensities.vectors(r) {
            let x: Vec<f64> = reference.iter().zip(v).map(|(m, vi)| m + vi / eta).collect();
            let radius_sq: f64 = reference.iter().zip(&x).map(|(m, xi)| (m - xi) * (m - xi)).sum();
            for l in 0..4 {
                let dist_sq: f64 = reference
                    .iter()
                    .zip(init.position(l).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist_sq <= radius_sq {
                    for j in 0..2 {
                        oracle[l][j] += eta * (x[j] - oracle[l][j]);
                    }
                }
            }
        }
    }
    for r in 0..4 {
        for j in 0..2 {
            let got = state.seeds().position(r)[j];
            let want = oracle[r][j];
            assert!(
                (got - want).abs() < 1e-9,
                "seed {r} dim {j}: {got} vs oracle {want}"
            );
        }
    }
}

/// Full-pipeline oracle: a fused reimplementation of the suspended
/// competitive-learning rounds must reproduce the client/server pipeline
/// exactly when balancing is off.
#[test]
fn single_client_rounds_match_fused_reimplementation() {
    let data = small_blobs(19, 3, 50, 0.03);
    let client = as_single_client(&data);
    let init = kmeanspp_init(&data, 3, 8).unwrap();
    let eta = 0.004;
    let rounds = 6;

    let mut state = ServerState::new(
        init.clone(),
        1,
        ServerConfig { eta, disable_balancing: true, ..ServerConfig::default() },
    )
    .unwrap();
    for t in 1..=rounds {
        let up = client_round(&client, state.seeds(), eta, t).unwrap();
        state.server_round(&[up]).unwrap();
    }

    // Fused reimplementation: one pass computes winners and offsets against
    // the frozen frame, then applies every offset through its radius.
    let k = init.k();
    let d = init.d();
    let mut seeds: Vec<Vec<f64>> = init.positions().rows().into_iter().map(|r| r.to_vec()).collect();
    for _ in 1..=rounds {
        let frame = seeds.clone();
        let mut s = vec![1u64; k];
        let mut per_seed_offsets: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
        for i in 0..data.n() {
            let total: u64 = s.iter().sum();
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for r in 0..k {
                let gamma = s[r] as f64 / total as f64;
                let dist: f64 = data.row(i).iter().zip(&frame[r]).map(|(a, b)| (a - b) * (a - b)).sum();
                if gamma * dist < best {
                    best = gamma * dist;
                    arg = r;
                }
            }
            s[arg] += 1;
            let offset: Vec<f64> = data.row(i).iter().zip(&frame[arg]).map(|(x, m)| x - m).collect();
            per_seed_offsets[arg].push(offset);
        }
        for (r, offsets) in per_seed_offsets.iter().enumerate() {
            for offset in offsets {
                let radius_sq: f64 = offset.iter().map(|o| o * o).sum();
                for l in 0..k {
                    let dist_sq: f64 = frame[r].iter().zip(&frame[l]).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist_sq <= radius_sq {
                        for j in 0..d {
                            let x = frame[r][j] + offset[j];
                            seeds[l][j] += eta * (x - seeds[l][j]);
                        }
                    }
                }
            }
        }
    }

    for r in 0..k {
        for j in 0..d {
            let got = state.seeds().position(r)[j];
            let want = seeds[r][j];
            assert!(
                (got - want).abs() < 1e-9,
                "after {rounds} rounds, seed {r} dim {j}: {got} vs {want}"
            );
        }
    }
}

/// A huge sensitivity parameter must behave like disabling balancing.
#[test]
fn huge_xi_equals_disabled_balancing() {
    let data = small_blobs(23, 4, 60, 0.02);
    let clients = partition_noniid(&data, 3, 5).unwrap();

    let mut with_xi = RunConfig::new(5, vec![0.7, 0.7, 0.7], 99);
    with_xi.xi = 1e12;
    with_xi.max_iter = 20;
    let mut disabled = with_xi.clone();
    disabled.xi = 1.0;
    disabled.disable_balancing = true;

    let a = run_partitioned(&clients, &with_xi).unwrap();
    let b = run_partitioned(&clients, &disabled).unwrap();
    assert_eq!(a.trajectory.len(), b.trajectory.len());
    for (sa, sb) in a.trajectory.iter().zip(&b.trajectory) {
        for (pa, pb) in sa.seeds.iter().zip(&sb.seeds) {
            for (xa, xb) in pa.iter().zip(pb) {
                assert!((xa - xb).abs() < 1e-9, "trajectories diverged: {xa} vs {xb}");
            }
        }
    }
}

/// Per-iteration displacement of any seed is bounded by the number of
/// processed vectors times the largest possible convex step.
#[test]
fn per_iteration_displacement_is_bounded() {
    let data = small_blobs(41, 4, 70, 0.04);
    let clients = partition_noniid(&data, 2, 3).unwrap();
    let init_a = kmeanspp_init(&clients[0].data, 4, 1).unwrap();
    let init_b = kmeanspp_init(&clients[1].data, 4, 2).unwrap();
    let seeds = afcl_core::init::server_pool_init(&[init_a, init_b], 4, 3).unwrap();
    let eta = 0.01;
    let mut state = ServerState::new(seeds, 2, ServerConfig { eta, ..ServerConfig::default() }).unwrap();

    for t in 1..=8u64 {
        let before = state.seeds().positions().clone();
        let uploads: Vec<_> = clients
            .iter()
            .map(|c| client_round(c, state.seeds(), eta, t).unwrap())
            .collect();
        let vectors: usize = uploads.iter().map(|u| u.intensities.total_count()).sum();
        state.server_round(&uploads).unwrap();

        // All positions and data live in [0, 1]^2, so no single convex step
        // exceeds eta * sqrt(2), and a seed receives at most every vector.
        let cap = vectors as f64 * eta * 2f64.sqrt();
        for (prev, now) in before.rows().into_iter().zip(state.seeds().positions().rows()) {
            let moved: f64 = prev
                .iter()
                .zip(now.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(moved <= cap, "seed moved {moved}, cap {cap}");
        }
    }
}

/// Seeds stay inside the unit box on normalized data.
#[test]
fn seeds_remain_in_data_hull() {
    let data = small_blobs(53, 4, 100, 0.05);
    let clients = partition_noniid(&data, 3, 11).unwrap();
    let mut config = RunConfig::new(6, vec![1.0, 0.5, 0.3], 37);
    config.eta = 0.01;
    config.max_iter = 40;
    let report = run_partitioned(&clients, &config).unwrap();
    for snap in &report.trajectory {
        for seed in &snap.seeds {
            for &v in seed {
                assert!((-1.0..=2.0).contains(&v), "seed coordinate {v} escaped");
            }
        }
    }
}
