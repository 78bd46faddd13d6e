//! Training engine for multi-source heterogeneous domain adaptation applied
//! to intrusion detection.
//!
//! Two labelled source domains (a large network-intrusion set and a small
//! IoT-intrusion set) and a scarcely labelled IoT target are embedded by
//! per-domain encoders into one low-dimensional subspace. A shared
//! classifier is trained jointly with an adversarial domain discriminator,
//! tempered-softmax distillation from per-class source distributions, and
//! centroid/representative alignment driven by consensus pseudo-labels.
//!
//! Module map:
//!
//! - [`autodiff`]: the reverse-mode graph, Adam, finite differences.
//! - [`model`]: encoders, classifier, discriminator, checkpoints.
//! - [`losses`]: every objective term and the source weighting.
//! - [`plr`]: the consensus pseudo-label refiner.
//! - [`clustering`]: k-means++ / Lloyd representatives.
//! - [`data`]: CSV ingestion, manifests, splitting, synthetic domains.
//! - [`metrics`]: accuracy, weighted P/R/F1, paired t-test.
//! - [`trainer`]: the training loop and the target-only baseline.
//! - [`harness`]: ablation grids and hyperparameter sweeps.
//! - [`audit`]: finite-difference audit of every loss term.

pub mod audit;
pub mod autodiff;
pub mod clustering;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod plr;
pub mod trainer;

pub use autodiff::{Graph, Matrix, NodeId, Param};
pub use config::{AblationSwitches, SourceSelection, TrainConfig};
pub use data::{DomainDataset, Manifest, Role, SplitSpec, TrainingData};
pub use error::{JstnError, Result};
pub use harness::{run_ablation, run_sweep, AblationTable, SweepRow, Variant};
pub use losses::LossBreakdown;
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use model::{Architecture, InitSpec, JstnModel};
pub use trainer::{evaluate_target, train, train_target_only, EpochReport, TrainOutcome};
