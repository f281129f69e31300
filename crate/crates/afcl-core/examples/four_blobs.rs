//! Minimal end-to-end demo: four well-separated Gaussian blobs split across
//! three non-IID clients with asynchronous participation, clustered without
//! knowing the true cluster count.
//!
//!     cargo run --release --example four_blobs

use afcl_core::data::{partition_noniid, synth_gaussian, SynthSpec};
use afcl_core::orchestrator::{run_partitioned, RunConfig};

fn main() {
    let spec = SynthSpec {
        centers: vec![
            vec![0.15, 0.15],
            vec![0.85, 0.2],
            vec![0.2, 0.85],
            vec![0.8, 0.8],
        ],
        stddevs: vec![0.01; 4],
        counts: vec![575; 4],
        rng_seed: 7,
    };
    let data = synth_gaussian(&spec).unwrap().minmax_normalize();
    let clients = partition_noniid(&data, 3, 11).unwrap();
    println!(
        "clients: {:?} rows",
        clients.iter().map(|c| c.size()).collect::<Vec<_>>()
    );

    // Deliberately excessive seed count; redundant seeds homogenize.
    let config = RunConfig::new(7, vec![1.0, 0.6, 0.3], 42);
    let report = run_partitioned(&clients, &config).unwrap();

    println!(
        "learned_k = {} after {} iterations (converged: {})",
        report.learned_k, report.iterations_run, report.converged
    );
    for (i, center) in report.merged_centers.iter().enumerate() {
        let members = report
            .seed_to_cluster
            .iter()
            .filter(|&&g| g == i)
            .count();
        println!("  cluster {i}: center [{:.3}, {:.3}] from {members} seeds", center[0], center[1]);
    }
    if let Some(sc) = report.silhouette {
        println!("silhouette = {sc:.4}");
    }
}
