//! Cross-validated, semi-supervised behavior prediction and accuracy
//! scoring.
//!
//! One repeat masks the test subjects' behaviors, standardizes on the
//! remaining values, fits the model on all connectomes plus train
//! behaviors, and predicts each test subject's indicators as the posterior
//! mean of `e_p + kappa_j`, de-standardized with the train-derived scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::model::{fit, ModelData, ModelError, SamplerConfig, SelectBy, TestScoreData};
use crate::model::PosteriorSummary;
use crate::rng::stream_rng;
use rand::seq::SliceRandom;

const SPLIT_STREAM_TAG: u64 = 0x5917;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("need at least {need} subjects, found {found}")]
    TooFewSubjects { need: usize, found: usize },
    #[error("train fraction {0} outside (0.5, 0.95)")]
    BadTrainFraction(f64),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("accuracy cell {0} has fewer than 3 scored test subjects")]
    TooFewTestValues(String),
    #[error("missing predictions for cells: {0}")]
    MissingCells(String),
}

/// Train/test assignments for every repeat.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub repeats: Vec<SplitRepeat>,
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRepeat {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitPlan {
    /// Digest over the exact membership of every repeat; shared across the
    /// model and all baselines so outputs can assert identical splits.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (i, r) in self.repeats.iter().enumerate() {
            hasher.update(i.to_le_bytes());
            for s in &r.train_ids {
                hasher.update(b"t");
                hasher.update(s.as_bytes());
            }
            for s in &r.test_ids {
                hasher.update(b"h");
                hasher.update(s.as_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..16])
    }

    fn check(&self, all: &[String]) {
        for r in &self.repeats {
            let mut union: Vec<&String> = r.train_ids.iter().chain(r.test_ids.iter()).collect();
            union.sort();
            let mut expect: Vec<&String> = all.iter().collect();
            expect.sort();
            assert_eq!(union, expect, "train/test must partition the subjects");
        }
    }
}

/// Seeded repeated random splits: each repeat draws round(frac*n) train
/// subjects without replacement.
pub fn split_folds(
    subjects: &[String],
    train_fraction: f64,
    repeats: usize,
    seed: u64,
) -> Result<SplitPlan, PredictError> {
    let n = subjects.len();
    if n < 10 {
        return Err(PredictError::TooFewSubjects { need: 10, found: n });
    }
    if !(train_fraction > 0.5 && train_fraction < 0.95) {
        return Err(PredictError::BadTrainFraction(train_fraction));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut plan = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let mut order: Vec<String> = subjects.to_vec();
        let mut rng = stream_rng(seed, &[SPLIT_STREAM_TAG, rep as u64]);
        order.shuffle(&mut rng);
        let (train, test) = order.split_at(n_train);
        let mut train_ids = train.to_vec();
        let mut test_ids = test.to_vec();
        train_ids.sort();
        test_ids.sort();
        plan.push(SplitRepeat { train_ids, test_ids });
    }
    let plan = SplitPlan {
        repeats: plan,
        train_fraction,
        seed,
    };
    plan.check(subjects);
    Ok(plan)
}

/// Partitioned K-fold splits: one shuffle, each fold is the test set once.
pub fn split_kfold(subjects: &[String], k: usize, seed: u64) -> Result<SplitPlan, PredictError> {
    let n = subjects.len();
    if n < 10 {
        return Err(PredictError::TooFewSubjects { need: 10, found: n });
    }
    if k < 2 || k > n {
        return Err(PredictError::BadTrainFraction(1.0 - 1.0 / k as f64));
    }
    let mut order: Vec<String> = subjects.to_vec();
    let mut rng = stream_rng(seed, &[SPLIT_STREAM_TAG, u64::MAX]);
    order.shuffle(&mut rng);
    let mut repeats = Vec::with_capacity(k);
    for fold in 0..k {
        let test: Vec<String> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % k == fold)
            .map(|(_, s)| s.clone())
            .collect();
        let train: Vec<String> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % k != fold)
            .map(|(_, s)| s.clone())
            .collect();
        let mut train_ids = train;
        let mut test_ids = test;
        train_ids.sort();
        test_ids.sort();
        repeats.push(SplitRepeat { train_ids, test_ids });
    }
    let plan = SplitPlan {
        repeats,
        train_fraction: 1.0 - 1.0 / k as f64,
        seed,
    };
    plan.check(subjects);
    Ok(plan)
}

/// Sample Pearson correlation; errors on constant input or length < 3.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, PredictError> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(PredictError::UndefinedCorrelation(format!(
            "need equal length >= 3, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        sxy += (a[i] - ma) * (b[i] - mb);
        sxx += (a[i] - ma).powi(2);
        syy += (b[i] - mb).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(PredictError::UndefinedCorrelation("constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// One predicted cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRow {
    pub condition: String,
    pub category: String,
    pub indicator: String,
    pub repeat_index: usize,
    pub subject_id: String,
    pub predicted: f64,
    /// Raw-scale observed value, if any.
    pub observed: Option<f64>,
    pub method: String,
}

/// One prediction-accuracy observation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub condition: String,
    pub category: String,
    pub indicator: String,
    pub repeat_index: usize,
    pub r: f64,
    pub n_test: usize,
    pub method: String,
}

/// Result of one repeat's model fit and prediction.
#[derive(Debug, Clone)]
pub struct RepeatPredictions {
    pub rows: Vec<PredictionRow>,
    pub summary: PosteriorSummary,
    pub chosen_restart: usize,
    pub mu_enabled: bool,
    pub flags: Vec<String>,
}

/// Fits the model with all connectomes and train-only behaviors, then
/// predicts every indicator for the test subjects.
pub fn fit_predict(
    dataset: &Dataset,
    condition: &str,
    category: &str,
    repeat: &SplitRepeat,
    repeat_index: usize,
    config: &SamplerConfig,
) -> Result<RepeatPredictions, PredictError> {
    let data = ModelData::prepare(dataset, condition, category, &repeat.test_ids)?;
    for s in &repeat.test_ids {
        if !data.subjects.contains(s) {
            return Err(PredictError::Model(ModelError::Invalid(format!(
                "test subject {s} not in category panel"
            ))));
        }
    }

    // test-fit selection needs held-out values standardized on train stats
    let test_truth = if config.select_by == SelectBy::TestFit {
        let panel = &dataset.behaviors[category];
        let mut cells = Vec::new();
        for (j, s) in data.subjects.iter().enumerate() {
            if !repeat.test_ids.contains(s) {
                continue;
            }
            let row = panel.row_of(s).expect("subject came from the panel");
            for q in 0..data.p {
                let raw = panel.values[(row, q)];
                if raw.is_nan() {
                    continue;
                }
                let (m, sd) = data.scaling[q];
                cells.push((j, q, (raw - m) / sd));
            }
        }
        Some(TestScoreData { cells })
    } else {
        None
    };

    let fitted = fit(&data, config, test_truth.as_ref())?;

    let mut flags = Vec::new();
    if !fitted.init_fallbacks.is_empty() {
        flags.push(format!(
            "init fallback for subjects {:?}",
            fitted
                .init_fallbacks
                .iter()
                .map(|&j| data.subjects[j].clone())
                .collect::<Vec<_>>()
        ));
    }

    let panel = &dataset.behaviors[category];
    let mut rows = Vec::new();
    for s in &repeat.test_ids {
        let j = data
            .subjects
            .iter()
            .position(|x| x == s)
            .expect("validated above");
        let panel_row = panel.row_of(s);
        for q in 0..data.p {
            let (m, sd) = data.scaling[q];
            let predicted = m + sd * (fitted.e_mean[q] + fitted.kappa_mean[j]);
            let observed = panel_row.and_then(|r| {
                let x = panel.values[(r, q)];
                if x.is_nan() {
                    None
                } else {
                    Some(x)
                }
            });
            rows.push(PredictionRow {
                condition: condition.to_string(),
                category: category.to_string(),
                indicator: data.indicators[q].clone(),
                repeat_index,
                subject_id: s.clone(),
                predicted,
                observed,
                method: "latentsna".to_string(),
            });
        }
    }

    Ok(RepeatPredictions {
        rows,
        summary: fitted.summary,
        chosen_restart: fitted.chosen_restart,
        mu_enabled: fitted.mu_enabled,
        flags,
    })
}

/// Runs all repeats of one (condition, category) cell in parallel.
pub fn fit_predict_all(
    dataset: &Dataset,
    condition: &str,
    category: &str,
    plan: &SplitPlan,
    config: &SamplerConfig,
) -> Result<Vec<RepeatPredictions>, PredictError> {
    let results: Vec<Result<RepeatPredictions, PredictError>> = plan
        .repeats
        .par_iter()
        .enumerate()
        .map(|(i, rep)| {
            let mut cfg = config.clone();
            cfg.seed = crate::rng::derive_seed(config.seed, &[0xF01D, i as u64]);
            fit_predict(dataset, condition, category, rep, i, &cfg)
        })
        .collect();
    results.into_iter().collect()
}

/// Output of one (condition, category) CV cell across methods.
#[derive(Debug, Clone)]
pub struct CvCellResult {
    pub predictions: Vec<PredictionRow>,
    /// Posterior summary per repeat (model method only).
    pub repeat_summaries: Vec<PosteriorSummary>,
    /// Mean of the repeat summaries (the biomarker input).
    pub averaged_summary: Option<PosteriorSummary>,
    pub flags: Vec<String>,
    pub mu_enabled: Vec<bool>,
}

/// Runs the requested methods over every repeat of the split plan for one
/// (condition, category) cell. Baselines consume the identical splits.
pub fn run_cv_cell(
    dataset: &Dataset,
    condition: &str,
    category: &str,
    plan: &SplitPlan,
    config: &SamplerConfig,
    methods: &[String],
    p_threshold: f64,
    lambda_grid: &[f64],
) -> Result<CvCellResult, PredictError> {
    let mut predictions = Vec::new();
    let mut repeat_summaries = Vec::new();
    let mut flags = Vec::new();
    let mut mu_enabled = Vec::new();

    if methods.iter().any(|m| m == "latentsna") {
        let repeats = fit_predict_all(dataset, condition, category, plan, config)?;
        for rep in repeats {
            predictions.extend(rep.rows);
            repeat_summaries.push(rep.summary);
            flags.extend(rep.flags);
            mu_enabled.push(rep.mu_enabled);
        }
    }
    for method in methods.iter().filter(|m| *m != "latentsna") {
        let per_repeat: Vec<Result<(Vec<PredictionRow>, Vec<String>), PredictError>> = plan
            .repeats
            .par_iter()
            .enumerate()
            .map(|(i, rep)| {
                crate::baselines::baseline_fit_predict(
                    dataset,
                    condition,
                    category,
                    rep,
                    i,
                    method,
                    p_threshold,
                    lambda_grid,
                )
                .map_err(|e| PredictError::Model(ModelError::Invalid(e.to_string())))
            })
            .collect();
        for r in per_repeat {
            let (rows, fl) = r?;
            predictions.extend(rows);
            flags.extend(fl);
        }
    }

    let averaged_summary = if repeat_summaries.is_empty() {
        None
    } else {
        Some(
            PosteriorSummary::average(&repeat_summaries)
                .map_err(PredictError::Model)?,
        )
    };
    Ok(CvCellResult {
        predictions,
        repeat_summaries,
        averaged_summary,
        flags,
        mu_enabled,
    })
}

/// Scores predictions into one record per (condition, category, indicator,
/// repeat, method) cell. Cells with under 3 scored pairs are errors.
pub fn accuracy_table(rows: &[PredictionRow]) -> Result<Vec<AccuracyRecord>, PredictError> {
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<(String, String, String, usize, String), Vec<(f64, f64)>> =
        BTreeMap::new();
    for row in rows {
        if let Some(obs) = row.observed {
            cells
                .entry((
                    row.condition.clone(),
                    row.category.clone(),
                    row.indicator.clone(),
                    row.repeat_index,
                    row.method.clone(),
                ))
                .or_default()
                .push((row.predicted, obs));
        }
    }
    let mut records = Vec::with_capacity(cells.len());
    for ((condition, category, indicator, repeat_index, method), pairs) in cells {
        if pairs.len() < 3 {
            return Err(PredictError::TooFewTestValues(format!(
                "{condition}/{category}/{indicator}/rep{repeat_index}/{method}"
            )));
        }
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        // constant predictions (e.g. a flagged CPM fallback to the training
        // mean) carry no linear association: score 0 rather than erroring
        let x_spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let r = if x_spread == 0.0 { 0.0 } else { pearson(&xs, &ys)? };
        records.push(AccuracyRecord {
            condition,
            category,
            indicator,
            repeat_index,
            r,
            n_test: pairs.len(),
            method,
        });
    }
    Ok(records)
}

/// Mean accuracy per (condition, category, indicator, method) across
/// repeats.
pub fn accuracy_means(
    records: &[AccuracyRecord],
) -> Vec<(String, String, String, String, f64, usize)> {
    use std::collections::BTreeMap;
    let mut acc: BTreeMap<(String, String, String, String), (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc
            .entry((
                r.condition.clone(),
                r.category.clone(),
                r.indicator.clone(),
                r.method.clone(),
            ))
            .or_insert((0.0, 0));
        e.0 += r.r;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((c, cat, ind, m), (sum, k))| (c, cat, ind, m, sum / k as f64, k))
        .collect()
}
