//! `afcl` — dataset synthesis, non-IID partitioning, federated clustering
//! runs, and validity-index evaluation, all seeded and reproducible.

mod manifest;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use afcl_core::data::{load_csv, partition_noniid, synth_gaussian, DataMatrix};
use afcl_core::metrics::{calinski_harabasz, silhouette, LabeledEvaluation};
use manifest::{synth_spec, ExperimentManifest, SynthSection};

#[derive(Parser)]
#[command(
    name = "afcl",
    about = "Federated clustering with asynchronous clients and automatic cluster-count selection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled Gaussian-mixture benchmark CSV.
    Synth {
        /// Number of mixture components.
        #[arg(long)]
        blobs: usize,
        /// Total number of rows.
        #[arg(long)]
        n: usize,
        /// Dimensions.
        #[arg(long)]
        d: usize,
        /// Per-component standard deviation.
        #[arg(long, default_value_t = 0.03)]
        spread: f64,
        /// Minimum pairwise distance between component centers.
        #[arg(long, default_value_t = 0.3)]
        min_sep: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (header x0..x{d-1},label).
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a dataset into non-IID client shards by clustering it.
    Partition {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        has_header: bool,
        /// 0-based label column to carry through (evaluation only).
        #[arg(long)]
        label_col: Option<usize>,
        #[arg(long)]
        clients: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for client_<g>.csv shards.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Execute the trial batch described by a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score a labeling with the internal validity indices.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        has_header: bool,
        #[arg(long)]
        label_col: Option<usize>,
        /// One integer cluster label per data row.
        #[arg(long)]
        labels: PathBuf,
        /// Score the data as given instead of min-max normalizing first.
        #[arg(long)]
        no_normalize: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { blobs, n, d, spread, min_sep, seed, out } => {
            cmd_synth(blobs, n, d, spread, min_sep, seed, &out)
        }
        Command::Partition { data, has_header, label_col, clients, seed, out_dir } => {
            cmd_partition(&data, has_header, label_col, clients, seed, &out_dir)
        }
        Command::Run { manifest } => cmd_run(&manifest),
        Command::Eval { data, has_header, label_col, labels, no_normalize } => {
            cmd_eval(&data, has_header, label_col, &labels, no_normalize)
        }
    }
}

fn cmd_synth(
    blobs: usize,
    n: usize,
    d: usize,
    spread: f64,
    min_sep: f64,
    seed: u64,
    out: &PathBuf,
) -> Result<()> {
    let section = SynthSection { blobs, n, d, spread: Some(spread), min_sep: Some(min_sep) };
    let spec = synth_spec(&section, seed)?;
    let data = synth_gaussian(&spec)?;
    write_dataset_csv(&data, out)?;
    println!("wrote {}: n={} d={} k_star={}", out.display(), data.n(), data.d(), blobs);
    Ok(())
}

fn write_dataset_csv(data: &DataMatrix, out: &PathBuf) -> Result<()> {
    let file = fs::File::create(out).with_context(|| format!("cannot write {}", out.display()))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = (0..data.d()).map(|j| format!("x{j}")).collect();
    if data.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.row(i).iter().map(ToString::to_string).collect();
        if let Some(labels) = data.labels() {
            rec.push(labels[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_partition(
    data_path: &PathBuf,
    has_header: bool,
    label_col: Option<usize>,
    clients: usize,
    seed: u64,
    out_dir: &PathBuf,
) -> Result<()> {
    let loaded = load_csv(data_path, has_header, label_col)?;
    if loaded.dropped_rows > 0 {
        eprintln!("dropped {} incomplete rows from {}", loaded.dropped_rows, data_path.display());
    }
    let normalized = loaded.data.minmax_normalize();
    let shards = partition_noniid(&normalized, clients, seed)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;

    for shard in &shards {
        let path = out_dir.join(format!("client_{}.csv", shard.client_id));
        let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<String> = (0..shard.data.d()).map(|j| format!("x{j}")).collect();
        if shard.data.labels().is_some() {
            header.push("label".into());
        }
        header.push("source_row".into());
        w.write_record(&header)?;
        for i in 0..shard.size() {
            let mut rec: Vec<String> = shard.data.row(i).iter().map(ToString::to_string).collect();
            if let Some(labels) = shard.data.labels() {
                rec.push(labels[i].to_string());
            }
            rec.push(shard.source_rows[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        println!("client {}: {} rows -> {}", shard.client_id, shard.size(), path.display());
    }
    Ok(())
}

fn cmd_run(manifest_path: &PathBuf) -> Result<()> {
    let manifest = ExperimentManifest::load(manifest_path)?;
    let trials = manifest::execute(&manifest)?;
    println!(
        "ran {trials} trials -> {} (report_<t>.json, trajectory_<t>.csv, objective_<t>.csv, summary.json)",
        manifest.output_dir.display()
    );
    Ok(())
}

fn cmd_eval(
    data_path: &PathBuf,
    has_header: bool,
    label_col: Option<usize>,
    labels_path: &PathBuf,
    no_normalize: bool,
) -> Result<()> {
    let loaded = load_csv(data_path, has_header, label_col)?;
    if loaded.dropped_rows > 0 {
        eprintln!("dropped {} incomplete rows from {}", loaded.dropped_rows, data_path.display());
    }
    let data = if no_normalize { loaded.data } else { loaded.data.minmax_normalize() };

    let text = fs::read_to_string(labels_path)
        .with_context(|| format!("cannot read {}", labels_path.display()))?;
    let labels: Vec<i64> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<i64>().with_context(|| format!("bad label {l:?}")))
        .collect::<Result<_>>()?;
    if labels.len() != data.n() {
        bail!("{} labels for {} data rows", labels.len(), data.n());
    }
    // Compact arbitrary integers into cluster indices.
    let mut seen = std::collections::HashMap::new();
    let compact: Vec<usize> = labels
        .iter()
        .map(|l| {
            let next = seen.len();
            *seen.entry(*l).or_insert(next)
        })
        .collect();

    let ev = LabeledEvaluation::new(&data, &compact)?;
    let sc = silhouette(&ev);
    let ch = calinski_harabasz(&ev);
    let out = serde_json::json!({
        "silhouette": if sc.is_finite() { Some(sc) } else { None },
        "calinski_harabasz": if ch.is_finite() { Some(ch) } else { None },
        "clusters": ev.k_hat(),
        "rows": data.n(),
    });
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", serde_json::to_string_pretty(&out)?)?;
    Ok(())
}
