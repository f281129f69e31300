//! Federated clustering for asynchronously participating, non-IID clients.
//!
//! Clients never share raw objects. Each round they accumulate competitive
//! seed-update intensities against a frozen snapshot of the global seeds and
//! upload them together with local cluster centers and dispersion summaries.
//! The server applies the intensities through cooperative seed sets, damping
//! frequently uploading clients with balance weights, so an excessive number
//! of initial seeds gradually homogenizes onto the real cluster centers and
//! the cluster count is read off by merging.

pub mod client;
pub mod data;
pub mod error;
pub mod init;
pub mod metrics;
pub mod orchestrator;
pub mod report;
pub mod rng;
pub mod server;

pub use client::{client_round, ClientUpload};
pub use data::{load_csv, partition_noniid, synth_gaussian, ClientDataset, DataMatrix, SynthSpec};
pub use error::{Error, Result};
pub use init::{kmeanspp_init, server_pool_init, SeedSet};
pub use metrics::{calinski_harabasz, centralized_kmeans, silhouette, LabeledEvaluation};
pub use orchestrator::{run, run_partitioned, ParticipationSchedule, RunConfig};
pub use report::ClusterReport;
pub use server::{balance_weights, ServerConfig, ServerState};
