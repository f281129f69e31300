//! Experiment manifests: a TOML description of one dataset, one partitioning,
//! and a batch of seeded trials with per-trial reports and an aggregate
//! summary.
//!
//! All randomness flows from the single manifest seed: trial t derives its
//! seed as `mix_seed(seed, t)`, from which the per-trial draws (k0,
//! participation probabilities), the partition, and the run itself are
//! keyed. Any single trial can therefore be reproduced in isolation.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

use afcl_core::data::{load_csv, partition_noniid, synth_gaussian, DataMatrix, SynthSpec};
use afcl_core::orchestrator::{run_partitioned, RunConfig};
use afcl_core::report::{write_objective_csv, write_report_json, write_trajectory_csv, ClusterReport};
use afcl_core::rng::{mix_seed, rng_from};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub seed: u64,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub dataset: DatasetSource,
    pub partition: PartitionSection,
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub path: Option<PathBuf>,
    pub has_header: Option<bool>,
    pub label_col: Option<usize>,
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub blobs: usize,
    pub n: usize,
    pub d: usize,
    pub spread: Option<f64>,
    pub min_sep: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub clients: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub k0: Option<usize>,
    /// Inclusive range the initial seed count is drawn from per trial.
    pub k0_range: Option<[usize; 2]>,
    pub xi: Option<f64>,
    pub eta: Option<f64>,
    pub max_iter: Option<u64>,
    pub conv_rel_tol: Option<f64>,
    pub conv_patience: Option<usize>,
    pub merge_radius: Option<f64>,
    /// Fixed per-client participation probabilities.
    pub participation: Option<Vec<f64>>,
    /// Inclusive range each client's probability is drawn from per trial.
    pub participation_range: Option<[f64; 2]>,
    pub literal_aggregation: Option<bool>,
    pub disable_balancing: Option<bool>,
    pub shuffle_rows: Option<bool>,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        let manifest: ExperimentManifest =
            toml::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        match (&self.dataset.path, &self.dataset.synth) {
            (Some(_), Some(_)) => bail!("dataset: give either a path or a synth block, not both"),
            (None, None) => bail!("dataset: needs a path or a synth block"),
            _ => {}
        }
        match (&self.run.k0, &self.run.k0_range) {
            (Some(_), Some(_)) => bail!("run: give either k0 or k0_range, not both"),
            (None, None) => bail!("run: needs k0 or k0_range"),
            (None, Some([lo, hi])) if lo > hi || *lo == 0 => bail!("run: invalid k0_range"),
            _ => {}
        }
        match (&self.run.participation, &self.run.participation_range) {
            (Some(_), Some(_)) => {
                bail!("run: give either participation or participation_range, not both")
            }
            (None, None) => bail!("run: needs participation or participation_range"),
            (Some(p), None) if p.len() != self.partition.clients => {
                bail!(
                    "run: {} participation probabilities for {} clients",
                    p.len(),
                    self.partition.clients
                )
            }
            _ => {}
        }
        if self.partition.clients == 0 {
            bail!("partition: clients must be at least 1");
        }
        Ok(())
    }

    fn load_dataset(&self) -> Result<DataMatrix> {
        let raw = match (&self.dataset.path, &self.dataset.synth) {
            (Some(path), None) => {
                let loaded = load_csv(
                    path,
                    self.dataset.has_header.unwrap_or(false),
                    self.dataset.label_col,
                )?;
                if loaded.dropped_rows > 0 {
                    eprintln!("dropped {} incomplete rows from {}", loaded.dropped_rows, path.display());
                }
                loaded.data
            }
            (None, Some(synth)) => {
                let spec = synth_spec(synth, mix_seed(self.seed, STREAM_DATASET))?;
                synth_gaussian(&spec)?
            }
            _ => unreachable!("validated"),
        };
        Ok(raw.minmax_normalize())
    }
}

const STREAM_DATASET: u64 = 0xD5;
const STREAM_DRAWS: u64 = 0x01;
const STREAM_PARTITION: u64 = 0x02;
const STREAM_RUN: u64 = 0x03;

/// Places `blobs` Gaussian components uniformly in the unit cube with a
/// minimum pairwise separation, splitting `n` points evenly across them.
pub fn synth_spec(section: &SynthSection, rng_seed: u64) -> Result<SynthSpec> {
    if section.blobs == 0 || section.n < section.blobs || section.d == 0 {
        bail!("synth: need blobs >= 1, d >= 1 and n >= blobs");
    }
    let spread = section.spread.unwrap_or(0.03);
    let min_sep = section.min_sep.unwrap_or(0.3);
    if !(spread > 0.0) || !(min_sep >= 0.0) {
        bail!("synth: spread must be positive and min_sep nonnegative");
    }
    let mut rng = rng_from(mix_seed(rng_seed, 0xB10B));
    let mut attempts = 0;
    let centers = loop {
        attempts += 1;
        if attempts > 10_000 {
            bail!("synth: could not place {} centers at min_sep {}", section.blobs, min_sep);
        }
        let cand: Vec<Vec<f64>> = (0..section.blobs)
            .map(|_| (0..section.d).map(|_| rng.random_range(0.08..0.92)).collect())
            .collect();
        let ok = cand.iter().enumerate().all(|(i, a)| {
            cand[i + 1..].iter().all(|b| {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                d.sqrt() >= min_sep
            })
        });
        if ok {
            break cand;
        }
    };
    let base = section.n / section.blobs;
    let extra = section.n % section.blobs;
    let counts: Vec<usize> = (0..section.blobs)
        .map(|i| base + usize::from(i < extra))
        .collect();
    Ok(SynthSpec {
        centers,
        stddevs: vec![spread; section.blobs],
        counts,
        rng_seed: mix_seed(rng_seed, 0xDA7A),
    })
}

#[derive(Debug, Serialize)]
struct Aggregate {
    mean: f64,
    std: f64,
    /// Trials the statistic was defined for.
    defined: usize,
}

fn aggregate(values: &[f64]) -> Aggregate {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len();
    if n == 0 {
        return Aggregate { mean: f64::NAN, std: f64::NAN, defined: 0 };
    }
    let mean = finite.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Aggregate { mean, std: var.sqrt(), defined: n }
}

#[derive(Debug, Serialize)]
struct Summary {
    trials: usize,
    silhouette: Aggregate,
    calinski_harabasz: Aggregate,
    learned_k: Aggregate,
    iterations: Aggregate,
    converged_trials: usize,
}

/// Executes every trial of the manifest and writes per-trial reports plus
/// the aggregate summary. Returns the number of trials run.
pub fn execute(manifest: &ExperimentManifest) -> Result<usize> {
    let data = manifest.load_dataset()?;
    fs::create_dir_all(&manifest.output_dir)
        .with_context(|| format!("cannot create {}", manifest.output_dir.display()))?;

    let mut reports: Vec<ClusterReport> = Vec::with_capacity(manifest.trials);
    for t in 0..manifest.trials {
        let trial_seed = mix_seed(manifest.seed, t as u64);
        let mut draws = rng_from(mix_seed(trial_seed, STREAM_DRAWS));

        let k0 = match (&manifest.run.k0, &manifest.run.k0_range) {
            (Some(k), None) => *k,
            (None, Some([lo, hi])) => draws.random_range(*lo..=*hi),
            _ => unreachable!("validated"),
        };
        let probs: Vec<f64> = match (&manifest.run.participation, &manifest.run.participation_range) {
            (Some(p), None) => p.clone(),
            (None, Some([lo, hi])) => (0..manifest.partition.clients)
                .map(|_| draws.random_range(*lo..=*hi))
                .collect(),
            _ => unreachable!("validated"),
        };

        let clients = partition_noniid(
            &data,
            manifest.partition.clients,
            mix_seed(trial_seed, STREAM_PARTITION),
        )?;

        let mut config = RunConfig::new(k0, probs, mix_seed(trial_seed, STREAM_RUN));
        if let Some(v) = manifest.run.xi {
            config.xi = v;
        }
        if let Some(v) = manifest.run.eta {
            config.eta = v;
        }
        if let Some(v) = manifest.run.max_iter {
            config.max_iter = v;
        }
        if let Some(v) = manifest.run.conv_rel_tol {
            config.conv_rel_tol = v;
        }
        if let Some(v) = manifest.run.conv_patience {
            config.conv_patience = v;
        }
        if let Some(v) = manifest.run.merge_radius {
            config.merge_radius = Some(v);
        }
        if let Some(v) = manifest.run.literal_aggregation {
            config.literal_aggregation = v;
        }
        if let Some(v) = manifest.run.disable_balancing {
            config.disable_balancing = v;
        }
        if let Some(v) = manifest.run.shuffle_rows {
            config.shuffle_rows = v;
        }

        let report = run_partitioned(&clients, &config)?;
        write_trial_files(&manifest.output_dir, t, &report)?;
        reports.push(report);
    }

    let summary = Summary {
        trials: manifest.trials,
        silhouette: aggregate(
            &reports.iter().map(|r| r.silhouette.unwrap_or(f64::NAN)).collect::<Vec<_>>(),
        ),
        calinski_harabasz: aggregate(
            &reports
                .iter()
                .map(|r| r.calinski_harabasz.unwrap_or(f64::NAN))
                .collect::<Vec<_>>(),
        ),
        learned_k: aggregate(&reports.iter().map(|r| r.learned_k as f64).collect::<Vec<_>>()),
        iterations: aggregate(&reports.iter().map(|r| r.iterations_run as f64).collect::<Vec<_>>()),
        converged_trials: reports.iter().filter(|r| r.converged).count(),
    };
    let summary_path = manifest.output_dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&summary_path, text)
        .with_context(|| format!("cannot write {}", summary_path.display()))?;
    Ok(manifest.trials)
}

fn write_trial_files(dir: &Path, trial: usize, report: &ClusterReport) -> Result<()> {
    let report_path = dir.join(format!("report_{trial}.json"));
    let file = fs::File::create(&report_path)
        .with_context(|| format!("cannot write {}", report_path.display()))?;
    write_report_json(report, file)?;

    let traj_path = dir.join(format!("trajectory_{trial}.csv"));
    let file = fs::File::create(&traj_path)
        .with_context(|| format!("cannot write {}", traj_path.display()))?;
    write_trajectory_csv(report, file)?;

    let obj_path = dir.join(format!("objective_{trial}.csv"));
    let file = fs::File::create(&obj_path)
        .with_context(|| format!("cannot write {}", obj_path.display()))?;
    write_objective_csv(report, file)?;
    Ok(())
}
