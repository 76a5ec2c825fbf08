//! Biomarker extraction, network counting, condition/label regressions,
//! and MCMC convergence diagnostics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

use crate::ingest::{Atlas, Network};
use crate::model::PosteriorSummary;
use crate::predict::AccuracyRecord;

/// Conditions of the study design, reference first.
pub const CONDITION_ORDER: [&str; 7] = [
    "Rest1", "Rest2", "Average", "EN-back", "SST", "Eyes", "gradCPT",
];
/// Dummy-coded conditions (Rest1 is the reference level).
pub const CONDITION_DUMMIES: [&str; 6] = ["Rest2", "Average", "EN-back", "SST", "Eyes", "gradCPT"];
/// Task conditions averaged for the rest/task comparison.
pub const TASK_CONDITIONS: [&str; 4] = ["gradCPT", "EN-back", "SST", "Eyes"];

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need V >= 2k nodes (V = {v}, k = {k})")]
    NotEnoughNodes { v: usize, k: usize },
    #[error("node {0} not present in atlas")]
    UnknownNode(usize),
    #[error("missing condition level {0}")]
    MissingCondition(String),
    #[error("expected one estimate per node: {0}")]
    BadEstimates(String),
    #[error("design is rank deficient; collinear columns: {0}")]
    RankDeficient(String),
    #[error("need n > q observations (n = {n}, q = {q})")]
    TooFewObservations { n: usize, q: usize },
    #[error("{0}")]
    Invalid(String),
}

// ---------------------------------------------------------------------------
// biomarkers
// ---------------------------------------------------------------------------

/// Top-k positive and negative covariance nodes for one condition/category.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiomarkerSet {
    pub condition: String,
    pub category: String,
    /// Ranked by covariance descending; ties broken by ascending node id.
    pub positive: Vec<usize>,
    /// Ranked by covariance ascending; ties broken by ascending node id.
    pub negative: Vec<usize>,
    pub values: BTreeMap<usize, f64>,
}

impl BiomarkerSet {
    pub fn all_nodes(&self) -> Vec<usize> {
        self.positive.iter().chain(self.negative.iter()).copied().collect()
    }
}

/// Selects the k largest and k smallest posterior-mean covariances.
/// Positive picks first; negative picks from the remaining nodes, so the
/// sets are disjoint even under ties.
pub fn top_biomarkers(
    summary: &PosteriorSummary,
    k: usize,
    condition: &str,
    category: &str,
) -> Result<BiomarkerSet, AnalysisError> {
    let v = summary.nodes.len();
    if v < 2 * k {
        return Err(AnalysisError::NotEnoughNodes { v, k });
    }
    let mut by_desc: Vec<(usize, f64)> = summary
        .nodes
        .iter()
        .map(|n| (n.node_id, n.cov_mean))
        .collect();
    by_desc.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite covariances")
            .then(a.0.cmp(&b.0))
    });
    let positive: Vec<usize> = by_desc.iter().take(k).map(|(id, _)| *id).collect();
    let mut by_asc: Vec<(usize, f64)> = by_desc
        .iter()
        .filter(|(id, _)| !positive.contains(id))
        .copied()
        .collect();
    by_asc.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("finite covariances")
            .then(a.0.cmp(&b.0))
    });
    let negative: Vec<usize> = by_asc.iter().take(k).map(|(id, _)| *id).collect();
    let mut values = BTreeMap::new();
    for n in &summary.nodes {
        if positive.contains(&n.node_id) || negative.contains(&n.node_id) {
            values.insert(n.node_id, n.cov_mean);
        }
    }
    Ok(BiomarkerSet {
        condition: condition.to_string(),
        category: category.to_string(),
        positive,
        negative,
        values,
    })
}

/// Counts biomarker nodes per functional network, zero-filled over all ten.
pub fn network_counts(
    biomarkers: &BiomarkerSet,
    atlas: &Atlas,
) -> Result<BTreeMap<Network, f64>, AnalysisError> {
    let mut counts: BTreeMap<Network, f64> = Network::ALL.iter().map(|&n| (n, 0.0)).collect();
    for node in biomarkers.all_nodes() {
        let net = atlas
            .network_of(node)
            .ok_or(AnalysisError::UnknownNode(node))?;
        *counts.get_mut(&net).expect("all networks present") += 1.0;
    }
    Ok(counts)
}

/// Mean network counts for the two resting conditions and the four task
/// conditions. Fractional values are expected.
pub fn rest_task_average(
    counts_by_condition: &BTreeMap<String, BTreeMap<Network, f64>>,
) -> Result<(BTreeMap<Network, f64>, BTreeMap<Network, f64>), AnalysisError> {
    let average_of = |conds: &[&str]| -> Result<BTreeMap<Network, f64>, AnalysisError> {
        let mut out: BTreeMap<Network, f64> = Network::ALL.iter().map(|&n| (n, 0.0)).collect();
        for &c in conds {
            let m = counts_by_condition
                .get(c)
                .ok_or_else(|| AnalysisError::MissingCondition(c.to_string()))?;
            for net in Network::ALL {
                *out.get_mut(&net).unwrap() += m.get(&net).copied().unwrap_or(0.0);
            }
        }
        for v in out.values_mut() {
            *v /= conds.len() as f64;
        }
        Ok(out)
    };
    let rest = average_of(&["Rest1", "Rest2"])?;
    let task = average_of(&TASK_CONDITIONS)?;
    Ok((rest, task))
}

// ---------------------------------------------------------------------------
// ordinary least squares
// ---------------------------------------------------------------------------

/// Significance code under strict-less-than thresholds.
pub fn sig_code(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    pub sig_code: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub n: usize,
    pub residual_df: usize,
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
}

impl RegressionResult {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

/// Least squares with standard errors, two-sided t p-values, significance
/// codes, R-squared, and the overall F test. The design must include an
/// intercept column and be full column rank.
pub fn ols(y: &[f64], design: &DMatrix<f64>, terms: &[String]) -> Result<RegressionResult, AnalysisError> {
    let n = design.nrows();
    let q = design.ncols();
    if terms.len() != q {
        return Err(AnalysisError::Invalid(format!(
            "{} terms for {} columns",
            terms.len(),
            q
        )));
    }
    if y.len() != n {
        return Err(AnalysisError::Invalid(format!(
            "{} responses for {} rows",
            y.len(),
            n
        )));
    }
    if n <= q {
        return Err(AnalysisError::TooFewObservations { n, q });
    }

    // rank check + solve via SVD
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = smax * (n.max(q) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < q {
        // name columns loading on the null space
        let v_t = svd.v_t.as_ref().expect("v requested");
        let mut collinear = Vec::new();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s <= tol {
                for j in 0..q {
                    if v_t[(i, j)].abs() > 0.3 {
                        let name = terms[j].clone();
                        if !collinear.contains(&name) {
                            collinear.push(name);
                        }
                    }
                }
            }
        }
        return Err(AnalysisError::RankDeficient(collinear.join(", ")));
    }
    let yv = DVector::from_column_slice(y);
    let beta = svd.solve(&yv, tol).map_err(|e| AnalysisError::Invalid(e.to_string()))?;

    let fitted = design * &beta;
    let resid = &yv - &fitted;
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut tss: f64 = y.iter().map(|x| (x - y_mean).powi(2)).sum();
    // a constant response leaves only float dust in the sums
    let y_scale: f64 = y.iter().map(|x| x * x).sum::<f64>().max(1.0);
    if tss <= y_scale * 1e-20 {
        tss = 0.0;
    }
    let rss = if rss <= y_scale * 1e-20 { 0.0 } else { rss };
    let df = n - q;
    let s2 = rss / df as f64;

    // (X'X)^{-1} diagonal from the SVD: V S^{-2} V'
    let v_t = svd.v_t.as_ref().expect("v requested");
    let mut xtx_inv_diag = vec![0.0; q];
    for j in 0..q {
        let mut acc = 0.0;
        for i in 0..q {
            let s = svd.singular_values[i];
            acc += (v_t[(i, j)] / s).powi(2);
        }
        xtx_inv_diag[j] = acc;
    }

    let t_dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let mut coefficients = Vec::with_capacity(q);
    for j in 0..q {
        let se = (s2 * xtx_inv_diag[j]).sqrt();
        let (t, p) = if se > 0.0 {
            let t = beta[j] / se;
            (t, 2.0 * (1.0 - t_dist.cdf(t.abs())))
        } else if beta[j].abs() > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (0.0, 1.0)
        };
        coefficients.push(Coefficient {
            term: terms[j].clone(),
            estimate: beta[j],
            std_error: se,
            t_value: t,
            p_value: p,
            sig_code: sig_code(p).to_string(),
        });
    }

    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let (f_statistic, f_p_value) = if q > 1 && tss > 0.0 && rss > 0.0 {
        let f = ((tss - rss) / (q - 1) as f64) / s2;
        let fd = FisherSnedecor::new((q - 1) as f64, df as f64)
            .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
        (Some(f), Some(1.0 - fd.cdf(f)))
    } else if q > 1 && tss > 0.0 {
        // perfect fit
        (Some(f64::INFINITY), Some(0.0))
    } else {
        (None, None)
    };

    Ok(RegressionResult {
        coefficients,
        r_squared,
        n,
        residual_df: df,
        f_statistic,
        f_p_value,
    })
}

// ---------------------------------------------------------------------------
// study regressions
// ---------------------------------------------------------------------------

/// Prediction accuracy regressed on condition dummies (Rest1 reference),
/// one model per category. Accuracy is first averaged over repeats within
/// each (condition, indicator) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionEffectModel {
    pub category: String,
    pub reference_condition: String,
    pub result: RegressionResult,
}

pub fn condition_effect_regression(
    records: &[AccuracyRecord],
    category: &str,
) -> Result<ConditionEffectModel, AnalysisError> {
    let mut cells: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.category == category) {
        let e = cells
            .entry((r.condition.clone(), r.indicator.clone()))
            .or_insert((0.0, 0));
        e.0 += r.r;
        e.1 += 1;
    }
    for cond in CONDITION_ORDER {
        if !cells.keys().any(|(c, _)| c == cond) {
            return Err(AnalysisError::MissingCondition(cond.to_string()));
        }
    }
    let rows: Vec<(String, f64)> = cells
        .into_iter()
        .map(|((cond, _), (sum, k))| (cond, sum / k as f64))
        .collect();
    let n = rows.len();
    let q = 1 + CONDITION_DUMMIES.len();
    let design = DMatrix::from_fn(n, q, |i, j| {
        if j == 0 {
            1.0
        } else if rows[i].0 == CONDITION_DUMMIES[j - 1] {
            1.0
        } else {
            0.0
        }
    });
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut terms = vec!["Intercept".to_string()];
    terms.extend(CONDITION_DUMMIES.iter().map(|s| s.to_string()));
    let result = ols(&y, &design, &terms)?;
    Ok(ConditionEffectModel {
        category: category.to_string(),
        reference_condition: "Rest1".to_string(),
        result,
    })
}

/// Node covariance estimates (optionally absolute) regressed on network
/// dummies with Default Mode as the reference level.
pub fn label_effect_regression(
    cov_estimates: &[f64],
    atlas: &Atlas,
    use_absolute: bool,
) -> Result<RegressionResult, AnalysisError> {
    let v = atlas.v();
    if cov_estimates.len() != v {
        return Err(AnalysisError::BadEstimates(format!(
            "{} estimates for {} nodes",
            cov_estimates.len(),
            v
        )));
    }
    if cov_estimates.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::BadEstimates("non-finite estimate".into()));
    }
    // dummy-code only the networks present in the atlas; Default Mode is
    // the reference when present, otherwise the first present network
    let present: Vec<Network> = Network::ALL
        .iter()
        .copied()
        .filter(|&n| (1..=v).any(|node| atlas.network_of(node) == Some(n)))
        .collect();
    let reference = if present.contains(&Network::DefaultMode) {
        Network::DefaultMode
    } else {
        present[0]
    };
    let dummies: Vec<Network> = present.into_iter().filter(|&n| n != reference).collect();
    let design = DMatrix::from_fn(v, 1 + dummies.len(), |i, j| {
        if j == 0 {
            1.0
        } else {
            let net = atlas.network_of(i + 1).expect("contiguous atlas");
            if net == dummies[j - 1] {
                1.0
            } else {
                0.0
            }
        }
    });
    let y: Vec<f64> = cov_estimates
        .iter()
        .map(|&x| if use_absolute { x.abs() } else { x })
        .collect();
    let mut terms = vec!["Intercept".to_string()];
    terms.extend(dummies.iter().map(|n| n.as_str().to_string()));
    ols(&y, &design, &terms)
}

// ---------------------------------------------------------------------------
// convergence diagnostics
// ---------------------------------------------------------------------------

/// Split-R-hat: each chain is halved and the usual between/within variance
/// ratio is taken over the half-chains.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64, AnalysisError> {
    if chains.len() < 2 {
        return Err(AnalysisError::Invalid("need >= 2 chains".into()));
    }
    if chains.iter().any(|c| c.len() < 4) {
        return Err(AnalysisError::Invalid("each chain needs length >= 4".into()));
    }
    let pooled_first = chains[0][0];
    if chains
        .iter()
        .all(|c| c.iter().all(|&x| (x - pooled_first).abs() < 1e-300))
    {
        return Err(AnalysisError::Invalid("constant pooled draws".into()));
    }
    let half_len = chains.iter().map(|c| c.len() / 2).min().expect("non-empty");
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        halves.push(&c[..half_len]);
        halves.push(&c[c.len() - half_len..]);
    }
    let m = halves.len() as f64;
    let n = half_len as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(means.iter())
        .map(|(h, &mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Effective sample size via Geyer's initial positive sequence truncation;
/// capped at the chain length.
pub fn ess(chain: &[f64]) -> Result<f64, AnalysisError> {
    let n = chain.len();
    if n < 10 {
        return Err(AnalysisError::Invalid("chain length must be >= 10".into()));
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let var0 = chain.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var0 <= 0.0 {
        return Err(AnalysisError::Invalid("constant chain".into()));
    }
    let autocorr = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..(n - lag) {
            acc += (chain[i] - mean) * (chain[i + lag] - mean);
        }
        acc / n as f64 / var0
    };
    // pair sums of autocorrelations stay positive while signal remains
    let mut tau = 1.0;
    let mut k = 0usize;
    loop {
        let l1 = 2 * k + 1;
        let l2 = 2 * k + 2;
        if l2 >= n {
            break;
        }
        let pair = autocorr(l1) + autocorr(l2);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    Ok((n as f64 / tau).min(n as f64))
}

/// Spearman rank correlation with midranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(AnalysisError::Invalid("need equal length >= 3".into()));
    }
    let ra = midranks(a);
    let rb = midranks(b);
    crate::predict::pearson(&ra, &rb).map_err(|e| AnalysisError::Invalid(e.to_string()))
}

fn midranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Atlas, AtlasEntry};
    use crate::model::{NodeSummary, PosteriorSummary};
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn summary_from(covs: &[f64]) -> PosteriorSummary {
        PosteriorSummary {
            nodes: covs
                .iter()
                .enumerate()
                .map(|(i, &c)| NodeSummary {
                    node_id: i + 1,
                    cov_mean: c,
                    cov_sd: 0.0,
                    ci05: c,
                    ci95: c,
                })
                .collect(),
        }
    }

    fn atlas_with(networks: &[Network]) -> Atlas {
        Atlas::new(
            networks
                .iter()
                .enumerate()
                .map(|(i, &network)| AtlasEntry {
                    node_id: i + 1,
                    network,
                    hemisphere: None,
                    coords: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn top_biomarkers_hand_case() {
        let s = summary_from(&[0.3, -0.4, 0.1, -0.2, 0.5]);
        let b = top_biomarkers(&s, 2, "Rest1", "cat").unwrap();
        assert_eq!(b.positive, vec![5, 1]);
        assert_eq!(b.negative, vec![2, 4]);
    }

    #[test]
    fn top_biomarkers_tie_rule() {
        let s = summary_from(&[1.0; 6]);
        let b = top_biomarkers(&s, 2, "Rest1", "cat").unwrap();
        assert_eq!(b.positive, vec![1, 2]);
        assert_eq!(b.negative, vec![3, 4]);
    }

    #[test]
    fn top_biomarkers_boundaries() {
        let s = summary_from(&[0.1, 0.2, 0.3]);
        let b = top_biomarkers(&s, 0, "Rest1", "cat").unwrap();
        assert!(b.positive.is_empty() && b.negative.is_empty());
        assert!(matches!(
            top_biomarkers(&s, 2, "Rest1", "cat"),
            Err(AnalysisError::NotEnoughNodes { .. })
        ));
    }

    #[test]
    fn top_biomarkers_permutation_invariant() {
        let covs = [0.3, -0.4, 0.1, -0.2, 0.5, 0.0];
        let s1 = summary_from(&covs);
        // same values, nodes listed in reverse order
        let mut nodes: Vec<NodeSummary> = s1.nodes.clone();
        nodes.reverse();
        let s2 = PosteriorSummary { nodes };
        let b1 = top_biomarkers(&s1, 2, "c", "k").unwrap();
        let b2 = top_biomarkers(&s2, 2, "c", "k").unwrap();
        assert_eq!(b1.positive, b2.positive);
        assert_eq!(b1.negative, b2.negative);
    }

    #[test]
    fn network_counts_cases() {
        let atlas = atlas_with(&[Network::FrontoParietal; 8]);
        let s = summary_from(&[0.8, 0.7, 0.6, 0.5, -0.5, -0.6, -0.7, -0.8]);
        let b = top_biomarkers(&s, 4, "Rest1", "cat").unwrap();
        let counts = network_counts(&b, &atlas).unwrap();
        assert_eq!(counts[&Network::FrontoParietal], 8.0);
        assert_eq!(counts[&Network::Motor], 0.0);
        let total: f64 = counts.values().sum();
        assert_eq!(total, 8.0);
    }

    #[test]
    fn network_counts_split() {
        let mut nets = vec![Network::Motor; 12];
        nets.extend(vec![Network::Limbic; 8]);
        let atlas = atlas_with(&nets);
        let covs: Vec<f64> = (0..20).map(|i| i as f64 - 10.0).collect();
        let s = summary_from(&covs);
        let b = top_biomarkers(&s, 10, "Rest1", "cat").unwrap();
        let counts = network_counts(&b, &atlas).unwrap();
        assert_eq!(counts[&Network::Motor], 12.0);
        assert_eq!(counts[&Network::Limbic], 8.0);
    }

    #[test]
    fn network_counts_empty_set() {
        let atlas = atlas_with(&[Network::Motor; 4]);
        let s = summary_from(&[0.1, 0.2, 0.3, 0.4]);
        let b = top_biomarkers(&s, 0, "Rest1", "cat").unwrap();
        let counts = network_counts(&b, &atlas).unwrap();
        assert!(counts.values().all(|&v| v == 0.0));
    }

    #[test]
    fn rest_task_average_means() {
        let mk = |fp: f64| -> BTreeMap<Network, f64> {
            let mut m: BTreeMap<Network, f64> = Network::ALL.iter().map(|&n| (n, 0.0)).collect();
            m.insert(Network::FrontoParietal, fp);
            m
        };
        let mut by_cond = BTreeMap::new();
        by_cond.insert("Rest1".to_string(), mk(6.0));
        by_cond.insert("Rest2".to_string(), mk(5.0));
        for c in TASK_CONDITIONS {
            by_cond.insert(c.to_string(), mk(4.0));
        }
        let (rest, task) = rest_task_average(&by_cond).unwrap();
        assert_abs_diff_eq!(rest[&Network::FrontoParietal], 5.5, epsilon = 1e-12);
        assert_abs_diff_eq!(task[&Network::FrontoParietal], 4.0, epsilon = 1e-12);

        by_cond.remove("SST");
        assert!(matches!(
            rest_task_average(&by_cond),
            Err(AnalysisError::MissingCondition(_))
        ));
    }

    #[test]
    fn ols_exact_fit() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let design = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        let r = ols(&y, &design, &["Intercept".into(), "x".into()]).unwrap();
        assert_abs_diff_eq!(r.coefficients[0].estimate, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.coefficients[1].estimate, 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        // 6-point hand case plus random instances
        let mut rng = stream_rng(17, &[0]);
        for trial in 0..40 {
            let n = 8 + (trial % 20);
            let q = 2 + (trial % 4);
            let design = DMatrix::from_fn(n, q, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    rng.sample::<f64, _>(StandardNormal) + (i as f64) * 0.01
                }
            });
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    (0..q).map(|j| design[(i, j)] * (j as f64 + 0.5)).sum::<f64>()
                        + rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            let terms: Vec<String> = (0..q).map(|j| format!("b{j}")).collect();
            let got = ols(&y, &design, &terms).unwrap();

            // oracle: normal equations with explicit inverse
            let xtx = design.transpose() * &design;
            let xtx_inv = xtx.try_inverse().unwrap();
            let yv = DVector::from_column_slice(&y);
            let beta = &xtx_inv * design.transpose() * &yv;
            let resid = &yv - &design * &beta;
            let rss: f64 = resid.iter().map(|r| r * r).sum();
            let s2 = rss / (n - q) as f64;
            let ymean = y.iter().sum::<f64>() / n as f64;
            let tss: f64 = y.iter().map(|v| (v - ymean).powi(2)).sum();
            for j in 0..q {
                assert_abs_diff_eq!(got.coefficients[j].estimate, beta[j], epsilon = 1e-8);
                let se = (s2 * xtx_inv[(j, j)]).sqrt();
                assert_abs_diff_eq!(got.coefficients[j].std_error, se, epsilon = 1e-8);
            }
            assert_abs_diff_eq!(got.r_squared, 1.0 - rss / tss, epsilon = 1e-8);
        }
    }

    #[test]
    fn sig_codes_strict_boundaries() {
        assert_eq!(sig_code(0.001 - 1e-12), "***");
        assert_eq!(sig_code(0.001), "**");
        assert_eq!(sig_code(0.001 + 1e-12), "**");
        assert_eq!(sig_code(0.01 - 1e-12), "**");
        assert_eq!(sig_code(0.01), "*");
        assert_eq!(sig_code(0.05), ".");
        assert_eq!(sig_code(0.1), "");
        assert_eq!(sig_code(0.0005), "***");
    }

    #[test]
    fn ols_rank_deficiency_names_columns() {
        let design = DMatrix::from_fn(8, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64, // collinear with column 1
        });
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let err = ols(
            &y,
            &design,
            &["Intercept".into(), "a".into(), "b".into()],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('a') || msg.contains('b'), "{msg}");
    }

    fn synthetic_records(shifts: &BTreeMap<&str, f64>, noise_sd: f64, seed: u64) -> Vec<AccuracyRecord> {
        let mut rng = stream_rng(seed, &[3]);
        let mut recs = Vec::new();
        for cond in CONDITION_ORDER {
            let shift = shifts.get(cond).copied().unwrap_or(0.0);
            for ind in 0..7 {
                for rep in 0..5 {
                    recs.push(AccuracyRecord {
                        condition: cond.to_string(),
                        category: "cat".into(),
                        indicator: format!("i{ind}"),
                        repeat_index: rep,
                        r: 0.45 + shift + noise_sd * rng.sample::<f64, _>(StandardNormal),
                        n_test: 19,
                        method: "latentsna".into(),
                    });
                }
            }
        }
        recs
    }

    #[test]
    fn condition_effect_recovers_injected_shift() {
        let mut shifts = BTreeMap::new();
        shifts.insert("EN-back", -0.19);
        let recs = synthetic_records(&shifts, 0.05, 99);
        let model = condition_effect_regression(&recs, "cat").unwrap();
        let c = model.result.coefficient("EN-back").unwrap();
        assert!(
            (c.estimate + 0.19).abs() <= 2.0 * c.std_error,
            "estimate {} se {}",
            c.estimate,
            c.std_error
        );
        assert_eq!(model.result.coefficients.len(), 7);
    }

    #[test]
    fn condition_effect_all_equal_gives_zero_betas() {
        let recs = synthetic_records(&BTreeMap::new(), 0.0, 0);
        let model = condition_effect_regression(&recs, "cat").unwrap();
        for c in &model.result.coefficients[1..] {
            assert_abs_diff_eq!(c.estimate, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(model.result.r_squared, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn condition_effect_missing_level_errors() {
        let recs: Vec<AccuracyRecord> = synthetic_records(&BTreeMap::new(), 0.01, 1)
            .into_iter()
            .filter(|r| r.condition != "gradCPT")
            .collect();
        assert!(matches!(
            condition_effect_regression(&recs, "cat"),
            Err(AnalysisError::MissingCondition(_))
        ));
    }

    #[test]
    fn label_effect_constant_within_network() {
        // covs constant within each network: betas are exact differences
        let nets: Vec<Network> = (0..20).map(|i| Network::ALL[i % 2]).collect(); // DM and MF
        let atlas = atlas_with(&nets);
        let covs: Vec<f64> = (0..20)
            .map(|i| if i % 2 == 0 { 0.1 } else { 0.4 })
            .collect();
        let r = label_effect_regression(&covs, &atlas, false).unwrap();
        assert_abs_diff_eq!(r.coefficient("Intercept").unwrap().estimate, 0.1, epsilon = 1e-10);
        assert_abs_diff_eq!(
            r.coefficient("Medial Frontal").unwrap().estimate,
            0.3,
            epsilon = 1e-10
        );
    }

    #[test]
    fn label_effect_all_equal_zero_betas() {
        let nets: Vec<Network> = (0..20).map(|i| Network::ALL[i % 4]).collect();
        let atlas = atlas_with(&nets);
        let covs = vec![0.25; 20];
        let r = label_effect_regression(&covs, &atlas, false).unwrap();
        for c in &r.coefficients[1..] {
            assert_abs_diff_eq!(c.estimate, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(r.r_squared, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn label_effect_absolute_flag() {
        let nets: Vec<Network> = (0..12).map(|i| Network::ALL[i % 3]).collect();
        let atlas = atlas_with(&nets);
        let covs: Vec<f64> = (0..12).map(|i| -(0.1 + i as f64 * 0.02)).collect();
        let a = label_effect_regression(&covs, &atlas, true).unwrap();
        let flipped: Vec<f64> = covs.iter().map(|&x| -x).collect();
        let b = label_effect_regression(&flipped, &atlas, true).unwrap();
        for (ca, cb) in a.coefficients.iter().zip(b.coefficients.iter()) {
            assert_abs_diff_eq!(ca.estimate, cb.estimate, epsilon = 1e-12);
        }
    }

    #[test]
    fn rhat_same_distribution_near_one() {
        let mut rng = stream_rng(5, &[8]);
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let r = rhat(&chains).unwrap();
        assert!(r < 1.05, "rhat = {r}");
    }

    #[test]
    fn rhat_separated_chains_large() {
        let mut rng = stream_rng(6, &[9]);
        let a: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..500)
            .map(|_| 100.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert!(rhat(&[a, b]).unwrap() > 3.0);
    }

    #[test]
    fn rhat_identical_chains_floor() {
        // periodic chain whose halves match exactly: B = 0, leaving only
        // the (n-1)/n floor term
        let base: Vec<f64> = (0..100).map(|i| (i % 10) as f64).collect();
        let chains = vec![base.clone(), base.clone(), base.clone(), base];
        let r = rhat(&chains).unwrap();
        assert!(r <= 1.0 + 1e-6, "rhat = {r}");
    }

    #[test]
    fn rhat_monotone_toward_one_with_length() {
        let mut rng = stream_rng(7, &[10]);
        let mut gen = |len: usize| -> Vec<Vec<f64>> {
            (0..2)
                .map(|_| (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect()
        };
        let r1 = rhat(&gen(40)).unwrap();
        let r2 = rhat(&gen(400)).unwrap();
        let r3 = rhat(&gen(4000)).unwrap();
        assert!((r2 - 1.0).abs() < (r1 - 1.0).abs() + 0.05);
        assert!((r3 - 1.0).abs() < 0.02);
    }

    #[test]
    fn rhat_rejects_constant_or_short() {
        assert!(rhat(&[vec![1.0; 10], vec![1.0; 10]]).is_err());
        assert!(rhat(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).is_err());
        assert!(rhat(&[vec![1.0; 10]]).is_err());
    }

    #[test]
    fn ess_white_noise() {
        let mut rng = stream_rng(8, &[11]);
        let chain: Vec<f64> = (0..1000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let e = ess(&chain).unwrap();
        assert!(e >= 700.0 && e <= 1300.0, "ess = {e}");
    }

    #[test]
    fn ess_ar1_small() {
        let mut rng = stream_rng(9, &[12]);
        let mut chain = vec![0.0f64];
        for _ in 1..1000 {
            let prev = *chain.last().unwrap();
            chain.push(0.9 * prev + rng.sample::<f64, _>(StandardNormal));
        }
        let e = ess(&chain).unwrap();
        assert!(e < 200.0, "ess = {e}");
    }

    #[test]
    fn ess_capped_at_length() {
        // strongly antithetic chain would exceed n without the cap
        let chain: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = ess(&chain).unwrap();
        assert!(e <= 100.0);
        assert!(ess(&vec![1.0; 50]).is_err());
    }

    #[test]
    fn spearman_ties_and_monotone() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [10.0, 20.0, 30.0, 40.0];
        assert_abs_diff_eq!(spearman(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        let c = [4.0, 3.0, 2.0, 1.0];
        assert_abs_diff_eq!(spearman(&a, &c).unwrap(), -1.0, epsilon = 1e-12);
        // midranks: ties share average rank
        let t = [1.0, 1.0, 2.0];
        let r = midranks(&t);
        assert_eq!(r, vec![1.5, 1.5, 3.0]);
    }
}
