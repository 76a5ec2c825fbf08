//! Synthetic data generation from the model's own generative equations.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::ingest::{Atlas, AtlasEntry, BehaviorPanel, Connectome, Dataset, Network};
use crate::rng::stream_rng;

const SIM_STREAM_TAG: u64 = 0x51A0;

/// Generative parameters. Latents (y_j, kappa_j) are jointly Gaussian with
/// covariance `sigma_true`; the node block may carry a mean `mu_true`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenParams {
    pub v: usize,
    pub n_subjects: usize,
    pub p: usize,
    pub sigma_true: DMatrix<f64>,
    pub d_true: DMatrix<f64>,
    pub e_true: DVector<f64>,
    pub mu_true: DVector<f64>,
    pub sigma2_c: f64,
    pub sigma2_b: DVector<f64>,
    /// Condition label for the emitted connectomes.
    pub condition: String,
    /// Behavior category label.
    pub category: String,
}

impl GenParams {
    /// Identity node covariance with the given cross covariances on the
    /// first nodes, zero latent mean and intercepts.
    pub fn isotropic(
        v: usize,
        n_subjects: usize,
        p: usize,
        cross: &[f64],
        sigma2_c: f64,
        sigma2_b: f64,
    ) -> GenParams {
        let dim = v + 1;
        let mut sigma = DMatrix::<f64>::identity(dim, dim);
        for (i, &c) in cross.iter().enumerate().take(v) {
            sigma[(i, v)] = c;
            sigma[(v, i)] = c;
        }
        GenParams {
            v,
            n_subjects,
            p,
            sigma_true: sigma,
            d_true: DMatrix::zeros(v, v),
            e_true: DVector::zeros(p),
            mu_true: DVector::zeros(v),
            sigma2_c,
            sigma2_b: DVector::from_element(p, sigma2_b),
            condition: "Rest1".into(),
            category: "synthetic".into(),
        }
    }

    /// Adds a uniform latent mean of the given Euclidean norm.
    pub fn with_mu_norm(mut self, norm: f64) -> GenParams {
        let per = norm / (self.v as f64).sqrt();
        self.mu_true = DVector::from_element(self.v, per);
        self
    }
}

/// Ground truth kept aside for recovery scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedTruth {
    /// True per-node brain-behavior covariances (Sigma_true cross block).
    pub cross: Vec<f64>,
    /// True construct scores per subject (dataset subject order).
    pub kappa: Vec<f64>,
    /// True node latents per subject (row-major, subject order).
    pub y: Vec<Vec<f64>>,
    pub subject_ids: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma2_c: f64,
}

/// Draws a dataset from the generative equations. Deterministic per seed.
pub fn simulate(params: &GenParams, seed: u64) -> Result<(Dataset, SimulatedTruth), ModelError> {
    let v = params.v;
    let n = params.n_subjects;
    let p = params.p;
    let dim = v + 1;
    if params.sigma_true.nrows() != dim || params.sigma_true.ncols() != dim {
        return Err(ModelError::Invalid(format!(
            "Sigma_true must be {dim}x{dim}"
        )));
    }
    let chol = Cholesky::new(params.sigma_true.clone()).ok_or(ModelError::NotPositiveDefinite)?;
    let mut rng = stream_rng(seed, &[SIM_STREAM_TAG]);

    let width = (n.max(2) as f64).log10().ceil() as usize;
    let subject_ids: Vec<String> = (0..n).map(|j| format!("sub{j:0width$}")).collect();

    let mut connectomes = BTreeMap::new();
    let mut behavior_values = DMatrix::<f64>::zeros(n, p);
    let mut kappa_true = Vec::with_capacity(n);
    let mut y_true = Vec::with_capacity(n);
    let mut cross = Vec::with_capacity(v);
    for i in 0..v {
        cross.push(params.sigma_true[(i, v)]);
    }

    for j in 0..n {
        let z0 = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = chol.l() * z0;
        let mut y = DVector::<f64>::zeros(v);
        for k in 0..v {
            y[k] = z[k] + params.mu_true[k];
        }
        let kappa = z[v];
        kappa_true.push(kappa);
        y_true.push(y.iter().copied().collect::<Vec<f64>>());

        let mut c = &params.d_true + &y * y.transpose();
        let noise_sd = params.sigma2_c.sqrt();
        for a in 0..v {
            for b in (a + 1)..v {
                let eps = noise_sd * rng.sample::<f64, _>(StandardNormal);
                c[(a, b)] += eps;
                c[(b, a)] = c[(a, b)];
            }
        }
        for a in 0..v {
            c[(a, a)] = 0.0;
        }
        connectomes.insert(
            (subject_ids[j].clone(), params.condition.clone()),
            Connectome {
                subject_id: subject_ids[j].clone(),
                condition: params.condition.clone(),
                matrix: c,
            },
        );

        for q in 0..p {
            let eps = params.sigma2_b[q].sqrt() * rng.sample::<f64, _>(StandardNormal);
            behavior_values[(j, q)] = params.e_true[q] + kappa + eps;
        }
    }

    let atlas = Atlas::new(
        (1..=v)
            .map(|node_id| AtlasEntry {
                node_id,
                network: Network::ALL[(node_id - 1) % Network::ALL.len()],
                hemisphere: None,
                coords: None,
            })
            .collect(),
    )?;

    let panel = BehaviorPanel {
        category: params.category.clone(),
        subject_ids: subject_ids.clone(),
        indicators: (1..=p).map(|q| format!("ind{q}")).collect(),
        values: behavior_values,
        scaling: None,
    };
    let mut behaviors = BTreeMap::new();
    behaviors.insert(params.category.clone(), panel);

    let dataset = Dataset {
        v,
        conditions: vec![params.condition.clone()],
        connectomes,
        behaviors,
        atlas,
    };
    let truth = SimulatedTruth {
        cross,
        kappa: kappa_true,
        y: y_true,
        subject_ids,
        mu: params.mu_true.iter().copied().collect(),
        sigma2_c: params.sigma2_c,
    };
    Ok((dataset, truth))
}
