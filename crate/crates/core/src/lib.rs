//! Joint latent-space modeling of functional connectomes and behavior.
//!
//! The core model couples a rank-1 per-subject factorization of Fisher-z
//! connectivity matrices with a unidimensional latent behavior construct
//! through a shared latent covariance, estimated by Gibbs sampling. Around
//! it sit the pieces a full study needs: dataset ingestion and validation,
//! a cross-validated semi-supervised prediction harness, CPM and ridge
//! reference predictors, biomarker ranking and network counting, OLS
//! condition/label regressions, convergence diagnostics, and reproducible
//! run-directory output.

pub mod analysis;
pub mod baselines;
pub mod ingest;
pub mod model;
pub mod predict;
pub mod report;
pub mod rng;

pub use ingest::{Atlas, BehaviorPanel, Connectome, Dataset, IngestError, Network};
pub use model::{
    GenParams, ModelState, PosteriorDraws, PosteriorSummary, SamplerConfig, SimulatedTruth,
};
pub use predict::{AccuracyRecord, SplitPlan};
