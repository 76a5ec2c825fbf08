//! Reference predictors: CPM and ridge on vectorized upper-triangle edges.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::predict::{PredictionRow, SplitRepeat};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("need at least {need} training subjects, found {found}")]
    TooFewSubjects { need: usize, found: usize },
    #[error("training target is constant")]
    ConstantTarget,
    #[error("lambda grid must be non-empty with all values > 0")]
    BadLambdaGrid,
    #[error("subject {0} has no connectome under condition {1}")]
    MissingConnectome(String, String),
    #[error("linear solve failed")]
    SolveFailed,
}

/// Upper-triangle (row-major) edge vector of one subject's connectome.
#[derive(Debug, Clone)]
pub struct EdgeVector {
    pub subject_id: String,
    pub values: Vec<f64>,
}

/// Fixed edge ordering: (0,1), (0,2), ..., (0,V-1), (1,2), ...
pub fn edge_vector(subject_id: &str, matrix: &DMatrix<f64>) -> EdgeVector {
    let v = matrix.nrows();
    let mut values = Vec::with_capacity(v * (v - 1) / 2);
    for a in 0..v {
        for b in (a + 1)..v {
            values.push(matrix[(a, b)]);
        }
    }
    EdgeVector {
        subject_id: subject_id.to_string(),
        values,
    }
}

pub fn edges_for(
    dataset: &Dataset,
    condition: &str,
    subjects: &[String],
) -> Result<Vec<EdgeVector>, BaselineError> {
    subjects
        .iter()
        .map(|s| {
            dataset
                .connectome(s, condition)
                .map(|c| edge_vector(s, &c.matrix))
                .ok_or_else(|| BaselineError::MissingConnectome(s.clone(), condition.to_string()))
        })
        .collect()
}

/// Two-sided p-value of a Pearson correlation under the t distribution
/// with n-2 degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    let denom = (1.0 - r * r).max(1e-300);
    let t = r * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// CPM predictions plus a flag when no edge passed the threshold.
#[derive(Debug, Clone)]
pub struct CpmFit {
    pub predictions: Vec<f64>,
    pub positive_edges: Vec<usize>,
    pub negative_edges: Vec<usize>,
    pub fallback_to_mean: bool,
}

/// Classic two-sum CPM: select edges whose train correlation with the
/// target passes `p_threshold`, sum positives and negatives per subject,
/// and regress the target on the two sums.
pub fn cpm_fit_predict(
    train_edges: &[EdgeVector],
    train_y: &[f64],
    test_edges: &[EdgeVector],
    p_threshold: f64,
) -> Result<CpmFit, BaselineError> {
    let n = train_edges.len();
    if n < 10 {
        return Err(BaselineError::TooFewSubjects { need: 10, found: n });
    }
    let my = train_y.iter().sum::<f64>() / n as f64;
    if train_y.iter().all(|&v| (v - my).abs() < 1e-12) {
        return Err(BaselineError::ConstantTarget);
    }
    let n_edges = train_edges[0].values.len();
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    let mut col = vec![0.0; n];
    for e in 0..n_edges {
        for (j, ev) in train_edges.iter().enumerate() {
            col[j] = ev.values[e];
        }
        let r = correlation(&col, train_y);
        let p = correlation_p_value(r, n);
        if p < p_threshold {
            if r > 0.0 {
                positive.push(e);
            } else if r < 0.0 {
                negative.push(e);
            }
        }
    }

    if positive.is_empty() && negative.is_empty() {
        return Ok(CpmFit {
            predictions: vec![my; test_edges.len()],
            positive_edges: positive,
            negative_edges: negative,
            fallback_to_mean: true,
        });
    }

    let sums = |edges: &EdgeVector, which: &[usize]| -> f64 {
        which.iter().map(|&e| edges.values[e]).sum()
    };
    // design: intercept plus whichever sums exist
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    if !positive.is_empty() {
        cols.push(train_edges.iter().map(|ev| sums(ev, &positive)).collect());
    }
    if !negative.is_empty() {
        cols.push(train_edges.iter().map(|ev| sums(ev, &negative)).collect());
    }
    let q = cols.len();
    let x = DMatrix::from_fn(n, q, |i, j| cols[j][i]);
    let y = DVector::from_column_slice(train_y);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let beta = Cholesky::new(xtx)
        .ok_or(BaselineError::SolveFailed)?
        .solve(&xty);

    let predictions = test_edges
        .iter()
        .map(|ev| {
            let mut acc = beta[0];
            let mut k = 1;
            if !positive.is_empty() {
                acc += beta[k] * sums(ev, &positive);
                k += 1;
            }
            if !negative.is_empty() {
                acc += beta[k] * sums(ev, &negative);
            }
            acc
        })
        .collect();
    Ok(CpmFit {
        predictions,
        positive_edges: positive,
        negative_edges: negative,
        fallback_to_mean: false,
    })
}

/// Closed-form ridge on train-standardized edges; the penalty is chosen by
/// inner 5-fold CV on the training subjects (smallest total squared error,
/// ties to the smaller lambda).
pub fn ridge_fit_predict(
    train_edges: &[EdgeVector],
    train_y: &[f64],
    test_edges: &[EdgeVector],
    lambda_grid: &[f64],
) -> Result<Vec<f64>, BaselineError> {
    let n = train_edges.len();
    if n < 10 {
        return Err(BaselineError::TooFewSubjects { need: 10, found: n });
    }
    if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| l <= 0.0) {
        return Err(BaselineError::BadLambdaGrid);
    }
    let n_edges = train_edges[0].values.len();

    // train-statistics standardization; constant edges become zero columns
    let mut mean = vec![0.0; n_edges];
    let mut sd = vec![0.0; n_edges];
    for e in 0..n_edges {
        let m = train_edges.iter().map(|ev| ev.values[e]).sum::<f64>() / n as f64;
        let var = train_edges
            .iter()
            .map(|ev| (ev.values[e] - m).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        mean[e] = m;
        sd[e] = var.sqrt();
    }
    let standardize = |edges: &[EdgeVector]| -> DMatrix<f64> {
        DMatrix::from_fn(edges.len(), n_edges, |i, e| {
            if sd[e] > 0.0 {
                (edges[i].values[e] - mean[e]) / sd[e]
            } else {
                0.0
            }
        })
    };
    let x_train = standardize(train_edges);
    let x_test = standardize(test_edges);
    let y = DVector::from_column_slice(train_y);

    // inner 5-fold CV over a fixed round-robin assignment
    let k_folds = 5.min(n);
    let mut best = (f64::INFINITY, lambda_grid[0]);
    for &lambda in lambda_grid {
        let mut err = 0.0;
        for fold in 0..k_folds {
            let train_rows: Vec<usize> = (0..n).filter(|i| i % k_folds != fold).collect();
            let val_rows: Vec<usize> = (0..n).filter(|i| i % k_folds == fold).collect();
            if val_rows.is_empty() || train_rows.len() < 2 {
                continue;
            }
            let xf = x_train.select_rows(&train_rows);
            let yf = DVector::from_fn(train_rows.len(), |i, _| y[train_rows[i]]);
            let xv = x_train.select_rows(&val_rows);
            let pred = ridge_solve_predict(&xf, &yf, &xv, lambda)?;
            for (i, &row) in val_rows.iter().enumerate() {
                err += (pred[i] - y[row]).powi(2);
            }
        }
        if err < best.0 - 1e-12 {
            best = (err, lambda);
        }
    }

    let pred = ridge_solve_predict(&x_train, &y, &x_test, best.1)?;
    Ok(pred.iter().copied().collect())
}

/// Centered ridge solve and prediction: columns and the target are
/// centered by training means (the unpenalized intercept), then the primal
/// (q x q) normal equations when features are fewer than subjects,
/// otherwise the algebraically identical dual (n x n) form.
pub fn ridge_solve_predict(
    x_train: &DMatrix<f64>,
    y: &DVector<f64>,
    x_test: &DMatrix<f64>,
    lambda: f64,
) -> Result<DVector<f64>, BaselineError> {
    let n = x_train.nrows();
    let q = x_train.ncols();
    let y_mean = y.sum() / n as f64;
    let yc = y.map(|v| v - y_mean);
    let col_means = DVector::from_fn(q, |j, _| x_train.column(j).sum() / n as f64);
    let xc = DMatrix::from_fn(n, q, |i, j| x_train[(i, j)] - col_means[j]);
    let xtc = DMatrix::from_fn(x_test.nrows(), q, |i, j| x_test[(i, j)] - col_means[j]);
    let beta: DVector<f64> = if q <= n {
        let mut xtx = xc.transpose() * &xc;
        for i in 0..q {
            xtx[(i, i)] += lambda;
        }
        let xty = xc.transpose() * &yc;
        if lambda > 0.0 {
            Cholesky::new(xtx)
                .ok_or(BaselineError::SolveFailed)?
                .solve(&xty)
        } else {
            // lambda = 0 kept for the least-squares oracle comparison
            xtx.lu().solve(&xty).ok_or(BaselineError::SolveFailed)?
        }
    } else {
        let mut k = &xc * xc.transpose();
        for i in 0..n {
            k[(i, i)] += lambda;
        }
        let alpha = Cholesky::new(k)
            .ok_or(BaselineError::SolveFailed)?
            .solve(&yc);
        xc.transpose() * alpha
    };
    Ok(xtc * beta + DVector::from_element(x_test.nrows(), y_mean))
}

/// Runs one baseline over one repeat, producing prediction rows on the raw
/// behavior scale for every indicator of the category.
#[allow(clippy::too_many_arguments)]
pub fn baseline_fit_predict(
    dataset: &Dataset,
    condition: &str,
    category: &str,
    repeat: &SplitRepeat,
    repeat_index: usize,
    method: &str,
    p_threshold: f64,
    lambda_grid: &[f64],
) -> Result<(Vec<PredictionRow>, Vec<String>), BaselineError> {
    let panel = &dataset.behaviors[category];
    let train_edges = edges_for(dataset, condition, &repeat.train_ids)?;
    let test_edges = edges_for(dataset, condition, &repeat.test_ids)?;
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for (q, indicator) in panel.indicators.iter().enumerate() {
        // train on subjects with this indicator observed
        let mut tr_edges = Vec::new();
        let mut tr_y = Vec::new();
        for ev in &train_edges {
            if let Some(r) = panel.row_of(&ev.subject_id) {
                let v = panel.values[(r, q)];
                if !v.is_nan() {
                    tr_edges.push(ev.clone());
                    tr_y.push(v);
                }
            }
        }
        let preds = match method {
            "cpm" => {
                let fit = cpm_fit_predict(&tr_edges, &tr_y, &test_edges, p_threshold)?;
                if fit.fallback_to_mean {
                    flags.push(format!(
                        "cpm fallback to training mean: {condition}/{category}/{indicator}/rep{repeat_index}"
                    ));
                }
                fit.predictions
            }
            "ridge" => ridge_fit_predict(&tr_edges, &tr_y, &test_edges, lambda_grid)?,
            other => panic!("unknown baseline method {other}"),
        };
        for (i, s) in repeat.test_ids.iter().enumerate() {
            let observed = panel.row_of(s).and_then(|r| {
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
                indicator: indicator.clone(),
                repeat_index,
                subject_id: s.clone(),
                predicted: preds[i],
                observed,
                method: method.to_string(),
            });
        }
    }
    Ok((rows, flags))
}
