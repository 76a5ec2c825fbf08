//! Chain execution, multi-init fitting, and posterior summaries.

use rayon::prelude::*;

use nalgebra::DVector;

use super::{
    gibbs_step, init_state, log_joint, ModelData, ModelError, NodeSummary, PosteriorDraws,
    PosteriorSummary, SamplerConfig, SelectBy,
};
use crate::rng::stream_rng;

const CHAIN_STREAM_TAG: u64 = 0xC4A1;

/// Observed (standardized) test values used only for `--select-by test-fit`
/// restart scoring; never visible to the sampler.
#[derive(Debug, Clone)]
pub struct TestScoreData {
    /// (subject index, indicator, standardized observed value)
    pub cells: Vec<(usize, usize, f64)>,
}

/// Runs one chain from one restart's initialization: burn-in plus
/// samples*thin sweeps, retaining every thin-th post-burn-in draw.
pub fn run_chain(
    data: &ModelData,
    config: &SamplerConfig,
    chain_id: usize,
    restart: usize,
) -> Result<PosteriorDraws, ModelError> {
    config.validate()?;
    let mut state = init_state(data, config, restart);
    let mut rng = stream_rng(
        config.seed,
        &[CHAIN_STREAM_TAG, chain_id as u64, restart as u64],
    );
    let total = config.burn_in + config.samples * config.thin;
    let mut draws = PosteriorDraws {
        chain_id,
        v: data.v,
        cross: Vec::with_capacity(config.samples),
        kappa: Vec::with_capacity(config.samples),
        e: Vec::with_capacity(config.samples),
        log_joint: Vec::with_capacity(config.samples),
    };
    for it in 0..total {
        gibbs_step(&mut state, data, &config.priors, &mut rng, it)?;
        if it >= config.burn_in && (it - config.burn_in + 1) % config.thin == 0 {
            draws.cross.push(state.cross_block());
            draws.kappa.push(state.kappa.clone());
            draws.e.push(state.e.clone());
            draws.log_joint.push(log_joint(&state, data, &config.priors)?);
        }
    }
    debug_assert_eq!(draws.len(), config.samples);
    Ok(draws)
}

/// Outcome of a multi-init fit: the chains of the selected restart.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub chains: Vec<PosteriorDraws>,
    pub chosen_restart: usize,
    /// Per-restart selection score (higher wins).
    pub restart_scores: Vec<f64>,
    /// Posterior mean construct score per subject (pooled chains).
    pub kappa_mean: DVector<f64>,
    /// Posterior mean behavior intercepts (pooled chains).
    pub e_mean: DVector<f64>,
    pub summary: PosteriorSummary,
    /// Whether the latent-mean block was active.
    pub mu_enabled: bool,
    /// Subjects whose initialization fell back to random latents.
    pub init_fallbacks: Vec<usize>,
}

/// Multi-init fit: runs `config.inits` restarts of `config.chains` chains
/// each, scores every restart, and keeps the best.
///
/// Restart scoring follows `config.select_by`: the final retained training
/// log-joint averaged over chains (default), or mean test-sample Pearson
/// correlation when `test_truth` is supplied for the replication protocol.
pub fn fit(
    data: &ModelData,
    config: &SamplerConfig,
    test_truth: Option<&TestScoreData>,
) -> Result<FitResult, ModelError> {
    config.validate()?;
    if config.select_by == SelectBy::TestFit && test_truth.is_none() {
        return Err(ModelError::BadConfig(
            "test-fit selection requires held-out test values".into(),
        ));
    }

    // all (restart, chain) pairs run in parallel over their own RNG streams
    let jobs: Vec<(usize, usize)> = (0..config.inits)
        .flat_map(|r| (0..config.chains).map(move |c| (r, c)))
        .collect();
    let results: Vec<Result<PosteriorDraws, ModelError>> = jobs
        .par_iter()
        .map(|&(restart, chain)| run_chain(data, config, chain, restart))
        .collect();
    let mut by_restart: Vec<Vec<PosteriorDraws>> = (0..config.inits).map(|_| Vec::new()).collect();
    for (idx, res) in results.into_iter().enumerate() {
        let (restart, _) = jobs[idx];
        by_restart[restart].push(res?);
    }

    let mut scores = Vec::with_capacity(config.inits);
    for chains in &by_restart {
        let score = match config.select_by {
            SelectBy::TrainFit => {
                let finals: Vec<f64> = chains
                    .iter()
                    .map(|d| *d.log_joint.last().expect("non-empty draws"))
                    .collect();
                finals.iter().sum::<f64>() / finals.len() as f64
            }
            SelectBy::TestFit => {
                let truth = test_truth.expect("checked above");
                test_fit_score(chains, truth)
            }
        };
        scores.push(score);
    }
    let chosen = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite scores"))
        .map(|(i, _)| i)
        .expect("at least one restart");

    let chains = by_restart.swap_remove(chosen);
    let summary = posterior_summary(&chains)?;
    let n = data.n_subjects();
    let p = data.p;
    let total_draws: usize = chains.iter().map(|c| c.len()).sum();
    let mut kappa_mean = DVector::<f64>::zeros(n);
    let mut e_mean = DVector::<f64>::zeros(p);
    for c in &chains {
        for d in &c.kappa {
            kappa_mean += d;
        }
        for d in &c.e {
            e_mean += d;
        }
    }
    kappa_mean /= total_draws as f64;
    e_mean /= total_draws as f64;

    // init metadata comes from the chosen restart's deterministic init
    let init = init_state(data, config, chosen);
    Ok(FitResult {
        chains,
        chosen_restart: chosen,
        restart_scores: scores,
        kappa_mean,
        e_mean,
        summary,
        mu_enabled: init.mu_enabled,
        init_fallbacks: init.init_fallbacks,
    })
}

fn test_fit_score(chains: &[PosteriorDraws], truth: &TestScoreData) -> f64 {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    if total == 0 || truth.cells.is_empty() {
        return f64::NEG_INFINITY;
    }
    let n = chains[0].kappa[0].len();
    let p = chains[0].e[0].len();
    let mut kappa_mean = vec![0.0; n];
    let mut e_mean = vec![0.0; p];
    for c in chains {
        for d in &c.kappa {
            for j in 0..n {
                kappa_mean[j] += d[j];
            }
        }
        for d in &c.e {
            for q in 0..p {
                e_mean[q] += d[q];
            }
        }
    }
    for x in kappa_mean.iter_mut() {
        *x /= total as f64;
    }
    for x in e_mean.iter_mut() {
        *x /= total as f64;
    }
    // mean per-indicator Pearson r of predicted vs observed
    let mut rs = Vec::new();
    for q in 0..p {
        let pairs: Vec<(f64, f64)> = truth
            .cells
            .iter()
            .filter(|(_, qq, _)| *qq == q)
            .map(|&(j, _, obs)| (e_mean[q] + kappa_mean[j], obs))
            .collect();
        if pairs.len() < 3 {
            continue;
        }
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Ok(r) = crate::predict::pearson(&xs, &ys) {
            rs.push(r);
        }
    }
    if rs.is_empty() {
        f64::NEG_INFINITY
    } else {
        rs.iter().sum::<f64>() / rs.len() as f64
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between order statistics (type 7)
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Pools one or more chains into per-node mean/sd/90% interval of the
/// brain-behavior covariance.
pub fn posterior_summary(chains: &[PosteriorDraws]) -> Result<PosteriorSummary, ModelError> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    if total == 0 {
        return Err(ModelError::EmptyDraws);
    }
    let v = chains[0].v;
    let mut nodes = Vec::with_capacity(v);
    for node in 0..v {
        let mut vals = Vec::with_capacity(total);
        for c in chains {
            for d in &c.cross {
                vals.push(d[node]);
            }
        }
        let mean = vals.iter().sum::<f64>() / total as f64;
        let sd = if total > 1 {
            (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (total - 1) as f64).sqrt()
        } else {
            0.0
        };
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        nodes.push(NodeSummary {
            node_id: node + 1,
            cov_mean: mean,
            cov_sd: sd,
            ci05: quantile(&vals, 0.05),
            ci95: quantile(&vals, 0.95),
        });
    }
    Ok(PosteriorSummary { nodes })
}

/// Convenience: posterior summary built from explicit draw vectors (used
/// by tests and diagnostics code).
pub fn summary_from_draws(v: usize, draws: &[DVector<f64>]) -> Result<PosteriorSummary, ModelError> {
    let chain = PosteriorDraws {
        chain_id: 0,
        v,
        cross: draws.to_vec(),
        kappa: vec![DVector::zeros(0); draws.len()],
        e: vec![DVector::zeros(0); draws.len()],
        log_joint: vec![0.0; draws.len()],
    };
    posterior_summary(&[chain])
}
