//! The joint generative model and its Gibbs sampler.
//!
//! Per subject j the connectome and behavior are tied together through a
//! shared latent Gaussian:
//!
//! ```text
//! C_j[u,v] = D[u,v] + y_ju * y_jv + noise(sigma2_c)     (u != v)
//! b_jp     = e_p + kappa_j + noise(sigma2_b[p])
//! (y_j, kappa_j) ~ N((mu, 0), Sigma)
//! ```
//!
//! The cross block Sigma[v, V+1] is the per-node brain-behavior covariance
//! that biomarker analysis ranks. The latent mean `mu` is estimated only
//! when the connectomes carry a strong shared population direction (see
//! [`LatentMeanMode`]); without one, per-subject latent orientation is not
//! identified and the mean stays pinned at zero.

mod chain;
mod distributions;
mod gibbs;
mod init;
mod logjoint;
mod simulate;

pub use chain::{fit, posterior_summary, run_chain, summary_from_draws, FitResult, TestScoreData};
pub use distributions::{
    ln_inverse_gamma, ln_inverse_wishart, ln_mvn, ln_normal, sample_inverse_gamma,
    sample_inverse_wishart, sample_mvn_prec,
};
pub use gibbs::{
    d_conditional, e_conditional, gibbs_step, kappa_conditional, mu_conditional,
    sigma2_b_conditional, sigma2_c_conditional, sigma_conditional, y_conditional, SweepContext,
};
pub use init::init_state;
pub use logjoint::log_joint;
pub use simulate::{simulate, GenParams, SimulatedTruth};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{standardize_behaviors, Dataset, IndicatorScale, IngestError};

/// Floor applied to every sampled variance.
pub const VARIANCE_FLOOR: f64 = 1e-8;
/// Jitter added to Sigma before Cholesky factorization.
pub const SIGMA_JITTER: f64 = 1e-8;
/// Ridge added to the empirical latent covariance at initialization.
pub const INIT_RIDGE: f64 = 1e-3;
/// Restart perturbation scale for latents.
pub const RESTART_PERTURB_SD: f64 = 0.1;
/// Population-direction strength (||mean latent|| / mean ||latent||) above
/// which the latent mean block is enabled in Auto mode.
pub const MU_RATIO_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("condition '{0}' not present in dataset")]
    UnknownCondition(String),
    #[error("category '{0}' not present in dataset")]
    UnknownCategory(String),
    #[error("subject {subject} has no connectome under condition {condition}")]
    MissingConnectome { subject: String, condition: String },
    #[error("non-finite {parameter} at iteration {iteration}")]
    NonFinite { parameter: String, iteration: usize },
    #[error("invalid sampler config: {0}")]
    BadConfig(String),
    #[error("Sigma_true is not positive definite")]
    NotPositiveDefinite,
    #[error("no retained draws")]
    EmptyDraws,
    #[error("{0}")]
    Invalid(String),
}

/// Conjugate prior hyperparameters (fixed defaults; paper is silent).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Priors {
    /// Variance of the Normal(0, .) prior on D entries, e, and mu.
    pub intercept_var: f64,
    /// Inverse-gamma shape for the noise variances.
    pub ig_shape: f64,
    /// Inverse-gamma rate for the noise variances.
    pub ig_rate: f64,
    /// Inverse-Wishart df offset: df = V + 1 + iw_df_extra (so V+3 overall
    /// for the (V+1)-dimensional Sigma with the default of 2).
    pub iw_df_extra: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            intercept_var: 10.0,
            ig_shape: 2.0,
            ig_rate: 1.0,
            iw_df_extra: 2.0,
        }
    }
}

impl Priors {
    /// Inverse-Wishart prior degrees of freedom for a V-node model.
    pub fn iw_df(&self, v: usize) -> f64 {
        (v + 1) as f64 + self.iw_df_extra
    }
}

/// Whether the latent mean block is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentMeanMode {
    /// Enable iff the initialization detects a strong shared population
    /// direction in the connectome factors.
    Auto,
    On,
    Off,
}

impl Default for LatentMeanMode {
    fn default() -> Self {
        LatentMeanMode::Auto
    }
}

impl std::str::FromStr for LatentMeanMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(LatentMeanMode::Auto),
            "on" => Ok(LatentMeanMode::On),
            "off" => Ok(LatentMeanMode::Off),
            other => Err(format!("unknown latent-mean mode '{other}' (auto|on|off)")),
        }
    }
}

/// Multi-init selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectBy {
    /// Final training log-joint (default; no test leakage).
    TrainFit,
    /// Test-sample prediction fit (replicates the original protocol).
    TestFit,
}

impl Default for SelectBy {
    fn default() -> Self {
        SelectBy::TrainFit
    }
}

impl std::str::FromStr for SelectBy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train-fit" => Ok(SelectBy::TrainFit),
            "test-fit" => Ok(SelectBy::TestFit),
            other => Err(format!("unknown selection mode '{other}' (train-fit|test-fit)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub chains: usize,
    pub inits: usize,
    pub seed: u64,
    pub latent_mean: LatentMeanMode,
    pub select_by: SelectBy,
    pub priors: Priors,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: 5000,
            samples: 15000,
            thin: 1,
            chains: 1,
            inits: 10,
            seed: 0,
            latent_mean: LatentMeanMode::default(),
            select_by: SelectBy::default(),
            priors: Priors::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.samples == 0 || self.thin == 0 || self.chains == 0 || self.inits == 0 {
            return Err(ModelError::BadConfig(
                "samples, thin, chains, and inits must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Data for one (condition, category) fit, standardized and indexed.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub condition: String,
    pub category: String,
    pub v: usize,
    pub p: usize,
    /// Sorted subject ids; defines the latent index order.
    pub subjects: Vec<String>,
    /// Per subject, V x V Fisher-z matrix with zero diagonal.
    pub connectomes: Vec<DMatrix<f64>>,
    /// n x P standardized behaviors, NaN = missing.
    pub behaviors: DMatrix<f64>,
    pub indicators: Vec<String>,
    /// Per-indicator raw-scale (mean, sd) used for de-standardization.
    pub scaling: Vec<IndicatorScale>,
    /// Elementwise sum of all connectomes (used by the D update).
    pub c_sum: DMatrix<f64>,
}

impl ModelData {
    /// Assembles fit data for one condition/category. `masked_subjects`
    /// (by id) have all behavior values treated as missing; masking happens
    /// before standardization so held-out values can never leak.
    pub fn prepare(
        dataset: &Dataset,
        condition: &str,
        category: &str,
        masked_subjects: &[String],
    ) -> Result<ModelData, ModelError> {
        if !dataset.conditions.iter().any(|c| c == condition) {
            return Err(ModelError::UnknownCondition(condition.to_string()));
        }
        let panel = dataset
            .behaviors
            .get(category)
            .ok_or_else(|| ModelError::UnknownCategory(category.to_string()))?;

        let mut subjects: Vec<String> = panel.subject_ids.clone();
        subjects.sort();
        subjects.dedup();

        let masked_rows: Vec<usize> = panel
            .subject_ids
            .iter()
            .enumerate()
            .filter(|(_, s)| masked_subjects.contains(s))
            .map(|(i, _)| i)
            .collect();
        let masked_panel = panel.with_masked_subjects(&masked_rows);
        let standardized = standardize_behaviors(&masked_panel)?;

        let p = standardized.n_indicators();
        let n = subjects.len();
        let mut behaviors = DMatrix::from_element(n, p, f64::NAN);
        let mut connectomes = Vec::with_capacity(n);
        for (i, s) in subjects.iter().enumerate() {
            let conn =
                dataset
                    .connectome(s, condition)
                    .ok_or_else(|| ModelError::MissingConnectome {
                        subject: s.clone(),
                        condition: condition.to_string(),
                    })?;
            connectomes.push(conn.matrix.clone());
            if let Some(row) = standardized.row_of(s) {
                for col in 0..p {
                    behaviors[(i, col)] = standardized.values[(row, col)];
                }
            }
        }
        let v = dataset.v;
        let mut c_sum = DMatrix::<f64>::zeros(v, v);
        for c in &connectomes {
            c_sum += c;
        }
        Ok(ModelData {
            condition: condition.to_string(),
            category: category.to_string(),
            v,
            p,
            subjects,
            connectomes,
            behaviors,
            indicators: standardized.indicators.clone(),
            scaling: standardized.scaling.clone().unwrap_or_default(),
            c_sum,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_observed(&self, subject: usize, indicator: usize) -> bool {
        !self.behaviors[(subject, indicator)].is_nan()
    }

    /// True if the subject has at least one observed indicator.
    pub fn is_anchored(&self, subject: usize) -> bool {
        (0..self.p).any(|p| self.is_observed(subject, p))
    }
}

/// All sampler parameters for one fit.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// V x V symmetric population intercept, zero diagonal.
    pub d: DMatrix<f64>,
    /// Per-indicator behavior intercepts.
    pub e: DVector<f64>,
    /// Latent mean of the node block (all zeros when disabled).
    pub mu: DVector<f64>,
    pub mu_enabled: bool,
    /// (V+1) x (V+1) latent covariance; cross block at column V.
    pub sigma: DMatrix<f64>,
    pub sigma2_c: f64,
    pub sigma2_b: DVector<f64>,
    /// n x V per-subject node latents.
    pub y: DMatrix<f64>,
    /// Per-subject construct scores.
    pub kappa: DVector<f64>,
    /// Subjects that fell back to random init (degenerate eigenproblem).
    pub init_fallbacks: Vec<usize>,
}

impl ModelState {
    pub fn v(&self) -> usize {
        self.d.nrows()
    }

    pub fn n_subjects(&self) -> usize {
        self.y.nrows()
    }

    /// Cross-covariance vector Sigma[0..V, V].
    pub fn cross_block(&self) -> DVector<f64> {
        let v = self.v();
        DVector::from_fn(v, |i, _| self.sigma[(i, v)])
    }

    pub fn check_finite(&self, iteration: usize) -> Result<(), ModelError> {
        let bad = |name: &str| ModelError::NonFinite {
            parameter: name.to_string(),
            iteration,
        };
        if !self.sigma2_c.is_finite() {
            return Err(bad("sigma2_c"));
        }
        if self.sigma2_b.iter().any(|x| !x.is_finite()) {
            return Err(bad("sigma2_b"));
        }
        if self.d.iter().any(|x| !x.is_finite()) {
            return Err(bad("D"));
        }
        if self.e.iter().any(|x| !x.is_finite()) {
            return Err(bad("e"));
        }
        if self.mu.iter().any(|x| !x.is_finite()) {
            return Err(bad("mu"));
        }
        if self.sigma.iter().any(|x| !x.is_finite()) {
            return Err(bad("Sigma"));
        }
        if self.y.iter().any(|x| !x.is_finite()) {
            return Err(bad("y"));
        }
        if self.kappa.iter().any(|x| !x.is_finite()) {
            return Err(bad("kappa"));
        }
        Ok(())
    }
}

/// Retained draws from one chain.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub chain_id: usize,
    pub v: usize,
    /// Per retained draw: Sigma[0..V, V].
    pub cross: Vec<DVector<f64>>,
    /// Per retained draw: construct score for every subject.
    pub kappa: Vec<DVector<f64>>,
    /// Per retained draw: behavior intercepts.
    pub e: Vec<DVector<f64>>,
    pub log_joint: Vec<f64>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.cross.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cross.is_empty()
    }
}

/// Per-node posterior summary of the brain-behavior covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: usize,
    pub cov_mean: f64,
    pub cov_sd: f64,
    pub ci05: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub nodes: Vec<NodeSummary>,
}

impl PosteriorSummary {
    pub fn cov_means(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.cov_mean).collect()
    }

    /// Elementwise mean of several summaries (e.g. across CV repeats).
    pub fn average(summaries: &[PosteriorSummary]) -> Result<PosteriorSummary, ModelError> {
        if summaries.is_empty() {
            return Err(ModelError::EmptyDraws);
        }
        let v = summaries[0].nodes.len();
        let mut nodes = Vec::with_capacity(v);
        for i in 0..v {
            let k = summaries.len() as f64;
            nodes.push(NodeSummary {
                node_id: summaries[0].nodes[i].node_id,
                cov_mean: summaries.iter().map(|s| s.nodes[i].cov_mean).sum::<f64>() / k,
                cov_sd: summaries.iter().map(|s| s.nodes[i].cov_sd).sum::<f64>() / k,
                ci05: summaries.iter().map(|s| s.nodes[i].ci05).sum::<f64>() / k,
                ci95: summaries.iter().map(|s| s.nodes[i].ci95).sum::<f64>() / k,
            });
        }
        Ok(PosteriorSummary { nodes })
    }
}
