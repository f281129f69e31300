//! Run reports and their on-disk forms: a JSON document plus two CSV traces
//! (per-iteration objective and per-seed trajectories).

use std::io::Write;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// What one round recorded: who uploaded and what the objective became.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub iteration: u64,
    pub participants: Vec<usize>,
    /// Objective averaged over supported seeds; absent on degenerate rounds.
    pub z: Option<f64>,
    /// Same numerator averaged over the configured seed count.
    pub z_over_configured: Option<f64>,
    pub supported_seeds: usize,
}

/// Seed positions after one iteration (iteration 0 is the initialization).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySnapshot {
    pub iteration: u64,
    pub seeds: Vec<Vec<f64>>,
}

fn serialize_index<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    // JSON has no infinities; an unbounded index degenerates to null.
    match v {
        Some(x) if x.is_finite() => s.serialize_some(x),
        _ => s.serialize_none(),
    }
}

/// The full outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    /// Number of merged seed groups: the learned cluster count.
    pub learned_k: usize,
    pub merged_centers: Vec<Vec<f64>>,
    /// Merged group index of each seed.
    pub seed_to_cluster: Vec<usize>,
    pub final_seeds: Vec<Vec<f64>>,
    pub seed_ids: Vec<u32>,
    /// Cluster index per object, clients concatenated in canonical order.
    pub assignment: Vec<usize>,
    /// Original global row index per assignment entry.
    pub source_rows: Vec<usize>,
    pub z_history: Vec<f64>,
    pub rounds: Vec<RoundRecord>,
    pub trajectory: Vec<TrajectorySnapshot>,
    #[serde(serialize_with = "serialize_index")]
    pub silhouette: Option<f64>,
    #[serde(serialize_with = "serialize_index")]
    pub calinski_harabasz: Option<f64>,
    pub iterations_run: u64,
    pub converged: bool,
}

pub fn write_report_json<W: Write>(report: &ClusterReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)
        .map_err(|e| Error::InvalidConfig(format!("report serialization failed: {e}")))?;
    out.write_all(b"\n").map_err(|source| Error::Io { path: "<report>".into(), source })?;
    Ok(())
}

/// `iteration,Z,participant_ids` with the objective carried forward over
/// degenerate rounds and participant ids joined by semicolons.
pub fn write_objective_csv<W: Write>(report: &ClusterReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "Z", "participant_ids"]).map_err(csv_err)?;
    let mut current_z: Option<f64> = None;
    for round in &report.rounds {
        if round.z.is_some() {
            current_z = round.z;
        }
        let z_field = current_z.map_or(String::new(), |z| z.to_string());
        let participants = round
            .participants
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([round.iteration.to_string(), z_field, participants])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: "<objective.csv>".into(), source })?;
    Ok(())
}

/// `iteration,seed_id,dim_0..dim_{d-1}`, one row per seed per snapshot.
pub fn write_trajectory_csv<W: Write>(report: &ClusterReport, out: W) -> Result<()> {
    let d = report.final_seeds.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string(), "seed_id".to_string()];
    header.extend((0..d).map(|j| format!("dim_{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for snap in &report.trajectory {
        for (seed, pos) in report.seed_ids.iter().zip(&snap.seeds) {
            let mut rec = vec![snap.iteration.to_string(), seed.to_string()];
            rec.extend(pos.iter().map(ToString::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: "<trajectory.csv>".into(), source })?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("csv write failed: {e}"))
}
