//! Sampler initialization.
//!
//! Latents start from per-subject leading eigenpairs of the de-meaned
//! connectomes. Because the rank-1 term is sign-invariant, eigenvector
//! signs carry no information on their own; they are synchronized in two
//! stages before moments are taken:
//!
//! 1. Orientation sync against the subject-subject Gram matrix, which
//!    recovers relative orientations whenever a shared population
//!    direction exists. If the synced mean direction is strong, the
//!    latent mean block is enabled and factors are re-extracted with the
//!    population rank-1 restored.
//! 2. Otherwise a construct-weighted spectral sync ties the signs of
//!    behavior-anchored subjects to the construct so the initial cross
//!    covariance is coherent.
//!
//! A final global flip applies the convention that mean latent loading
//! correlates non-negatively with mean standardized behavior.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    LatentMeanMode, ModelData, ModelState, SamplerConfig, INIT_RIDGE, MU_RATIO_THRESHOLD,
    RESTART_PERTURB_SD, VARIANCE_FLOOR,
};
use crate::rng::stream_rng;

const INIT_STREAM_TAG: u64 = 0x1317;

/// Leading eigenpair with the canonical sign convention (component of
/// largest magnitude is non-negative; ties keep the lowest index).
fn canonical_leading_eigvec(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut vec = eig.eigenvectors.column(best).into_owned();
    let mut arg = 0;
    for i in 1..vec.len() {
        if vec[i].abs() > vec[arg].abs() {
            arg = i;
        }
    }
    if vec[arg] < 0.0 {
        vec = -vec;
    }
    (eig.eigenvalues[best], vec)
}

/// Signs from the leading eigenvector of a symmetric score matrix
/// (sign(0) = +1; eigenvector canonicalized for determinism).
fn spectral_signs(score: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(score.clone());
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut u = eig.eigenvectors.column(best).into_owned();
    let mut arg = 0;
    for i in 1..u.len() {
        if u[i].abs() > u[arg].abs() {
            arg = i;
        }
    }
    if u[arg] < 0.0 {
        u = -u;
    }
    u.iter().map(|&x| if x >= 0.0 { 1.0 } else { -1.0 }).collect()
}

fn extract_factors(
    data: &ModelData,
    d: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
    fallbacks: &mut Vec<usize>,
) -> DMatrix<f64> {
    let n = data.n_subjects();
    let v = data.v;
    let mut y = DMatrix::<f64>::zeros(n, v);
    for j in 0..n {
        let r = &data.connectomes[j] - d;
        let (lam, vec) = canonical_leading_eigvec(&r);
        if lam <= 1e-12 {
            if !fallbacks.contains(&j) {
                fallbacks.push(j);
            }
            for col in 0..v {
                y[(j, col)] = 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        } else {
            let scaled = vec * lam.sqrt();
            for col in 0..v {
                y[(j, col)] = scaled[col];
            }
        }
    }
    y
}

fn apply_signs(y: &mut DMatrix<f64>, signs: &[f64]) {
    for (j, &s) in signs.iter().enumerate() {
        if s < 0.0 {
            for col in 0..y.ncols() {
                y[(j, col)] = -y[(j, col)];
            }
        }
    }
}

fn pearson_or_zero(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sxy += (a[i] - ma) * (b[i] - mb);
        sxx += (a[i] - ma).powi(2);
        syy += (b[i] - mb).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

fn row_mean(y: &DMatrix<f64>, j: usize) -> f64 {
    let v = y.ncols();
    (0..v).map(|k| y[(j, k)]).sum::<f64>() / v as f64
}

/// Builds the initial [`ModelState`]. Restart 0 is the deterministic
/// moment-based state; restarts > 0 perturb the latents with seeded
/// Gaussian noise (sd 0.1) before derived moments are recomputed.
pub fn init_state(data: &ModelData, config: &SamplerConfig, restart: usize) -> ModelState {
    let n = data.n_subjects();
    let v = data.v;
    let p = data.p;
    let dim = v + 1;
    let mut rng = stream_rng(config.seed, &[INIT_STREAM_TAG, restart as u64]);

    // population intercept: elementwise mean connectome, zero diagonal
    let mut d = &data.c_sum / n.max(1) as f64;
    for i in 0..v {
        d[(i, i)] = 0.0;
    }

    let mut fallbacks = Vec::new();
    let mut y = extract_factors(data, &d, &mut rng, &mut fallbacks);

    // construct scores: mean of observed standardized indicators
    let kappa = DVector::from_fn(n, |j, _| {
        let obs: Vec<f64> = (0..p)
            .filter(|&q| data.is_observed(j, q))
            .map(|q| data.behaviors[(j, q)])
            .collect();
        if obs.is_empty() {
            0.0
        } else {
            obs.iter().sum::<f64>() / obs.len() as f64
        }
    });

    // orientation sync on the subject Gram matrix
    let gram = &y * y.transpose();
    let signs = spectral_signs(&gram);
    apply_signs(&mut y, &signs);

    let mut mu = DVector::from_fn(v, |k, _| y.column(k).sum() / n as f64);
    let mean_norm = (0..n)
        .map(|j| (0..v).map(|k| y[(j, k)].powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n.max(1) as f64;
    let ratio = if mean_norm > 0.0 { mu.norm() / mean_norm } else { 0.0 };
    let mu_enabled = match config.latent_mean {
        LatentMeanMode::Auto => ratio >= MU_RATIO_THRESHOLD,
        LatentMeanMode::On => true,
        LatentMeanMode::Off => false,
    };

    if mu_enabled {
        // re-extract with the population rank-1 restored, oriented to mu
        let mut y2 = extract_factors(data, &(&d - &mu * mu.transpose()), &mut rng, &mut fallbacks);
        for j in 0..n {
            let dot: f64 = (0..v).map(|k| y2[(j, k)] * mu[k]).sum();
            if dot < 0.0 {
                for k in 0..v {
                    y2[(j, k)] = -y2[(j, k)];
                }
            }
        }
        y = y2;
        mu = DVector::from_fn(v, |k, _| y.column(k).sum() / n as f64);
    } else {
        mu = DVector::zeros(v);
        // construct-weighted spectral sync for behavior-anchored subjects,
        // plus two refinement rounds against the re-estimated cross block
        let mut score = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dot: f64 = (0..v).map(|k| y[(i, k)] * y[(j, k)]).sum();
                score[(i, j)] = kappa[i] * kappa[j] * dot;
            }
        }
        let signs = spectral_signs(&score);
        apply_signs(&mut y, &signs);
        for _ in 0..2 {
            let cross = DVector::from_fn(v, |k, _| {
                (0..n).map(|j| kappa[j] * y[(j, k)]).sum::<f64>() / n as f64
            });
            let mut refine = vec![1.0; n];
            for j in 0..n {
                let proj: f64 = (0..v).map(|k| y[(j, k)] * cross[k]).sum();
                let s = kappa[j] * proj;
                if s < 0.0 {
                    refine[j] = -1.0;
                }
            }
            apply_signs(&mut y, &refine);
        }
    }

    // global sign: corr(mean latent loading, construct score) >= 0 over
    // behavior-anchored subjects
    let anchored: Vec<usize> = (0..n).filter(|&j| data.is_anchored(j)).collect();
    if anchored.len() >= 3 {
        let m: Vec<f64> = anchored.iter().map(|&j| row_mean(&y, j)).collect();
        let k: Vec<f64> = anchored.iter().map(|&j| kappa[j]).collect();
        if pearson_or_zero(&m, &k) < 0.0 {
            y = -y;
            mu = -mu;
        }
    }

    let mut state = ModelState {
        d,
        e: DVector::zeros(p),
        mu,
        mu_enabled,
        sigma: DMatrix::identity(dim, dim),
        sigma2_c: 1.0,
        sigma2_b: DVector::from_element(p, 1.0),
        y,
        kappa,
        init_fallbacks: fallbacks,
    };

    if restart > 0 {
        for j in 0..n {
            for k in 0..v {
                state.y[(j, k)] += RESTART_PERTURB_SD * rng.sample::<f64, _>(StandardNormal);
            }
            state.kappa[j] += RESTART_PERTURB_SD * rng.sample::<f64, _>(StandardNormal);
        }
    }

    refresh_moments(&mut state, data);
    state
}

/// Recomputes Sigma, e, and the noise variances from the current latents.
fn refresh_moments(state: &mut ModelState, data: &ModelData) {
    let n = data.n_subjects();
    let v = data.v;
    let p = data.p;
    let dim = v + 1;

    // empirical covariance of centered stacked latents + ridge
    let mut sigma = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..n {
        let mut z = DVector::<f64>::zeros(dim);
        for k in 0..v {
            z[k] = state.y[(j, k)] - state.mu[k];
        }
        z[v] = state.kappa[j];
        sigma += &z * z.transpose();
    }
    sigma /= n.max(1) as f64;
    sigma += DMatrix::identity(dim, dim) * INIT_RIDGE;
    state.sigma = sigma;

    // behavior intercepts and noise from residuals
    for q in 0..p {
        let mut resid = Vec::new();
        for j in 0..n {
            if data.is_observed(j, q) {
                resid.push(data.behaviors[(j, q)] - state.kappa[j]);
            }
        }
        if resid.is_empty() {
            state.e[q] = 0.0;
            state.sigma2_b[q] = 1.0;
        } else {
            let m = resid.iter().sum::<f64>() / resid.len() as f64;
            let var = resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / resid.len() as f64;
            state.e[q] = m;
            state.sigma2_b[q] = var.max(VARIANCE_FLOOR);
        }
    }

    // connectome noise from upper-triangle residuals
    let mut ss = 0.0;
    let mut count = 0usize;
    for j in 0..n {
        let c = &data.connectomes[j];
        for a in 0..v {
            for b in (a + 1)..v {
                let r = c[(a, b)] - state.d[(a, b)] - state.y[(j, a)] * state.y[(j, b)];
                ss += r * r;
                count += 1;
            }
        }
    }
    state.sigma2_c = if count > 0 { (ss / count as f64).max(VARIANCE_FLOOR) } else { 1.0 };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SamplerConfig;
    use approx::assert_abs_diff_eq;

    fn toy_data(connectomes: Vec<DMatrix<f64>>, behaviors: DMatrix<f64>) -> ModelData {
        let n = connectomes.len();
        let v = connectomes[0].nrows();
        let p = behaviors.ncols();
        let mut c_sum = DMatrix::<f64>::zeros(v, v);
        for c in &connectomes {
            c_sum += c;
        }
        ModelData {
            condition: "Rest1".into(),
            category: "cat".into(),
            v,
            p,
            subjects: (0..n).map(|i| format!("s{i:02}")).collect(),
            connectomes,
            behaviors,
            indicators: (0..p).map(|i| format!("ind{i}")).collect(),
            scaling: vec![(0.0, 1.0); p],
            c_sum,
        }
    }

    #[test]
    fn factor_extraction_matches_power_iteration_oracle() {
        // noiseless residual y y' with zero diagonal; the extracted factor
        // must match an independent power-iteration oracle up to 1e-6.
        let v = 5;
        let y_true = DVector::from_vec(vec![1.0, -0.5, 0.8, 0.3, -1.2]);
        let mut residual = &y_true * y_true.transpose();
        for i in 0..v {
            residual[(i, i)] = 0.0;
        }
        let (lam, vec) = canonical_leading_eigvec(&residual);
        let mut x = DVector::from_element(v, 1.0);
        for _ in 0..500 {
            x = &residual * x;
            x /= x.norm();
        }
        let lam_oracle = (&residual * &x).dot(&x);
        let arg = (0..v)
            .max_by(|&a, &b| x[a].abs().partial_cmp(&x[b].abs()).unwrap())
            .unwrap();
        if x[arg] < 0.0 {
            x = -x;
        }
        assert_abs_diff_eq!(lam, lam_oracle, epsilon = 1e-8);
        for i in 0..v {
            assert_abs_diff_eq!(vec[i], x[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn all_zero_residual_takes_fallback_path() {
        let v = 4;
        let c = DMatrix::<f64>::zeros(v, v);
        let data = toy_data(
            vec![c.clone(), c.clone(), c.clone()],
            DMatrix::from_fn(3, 1, |i, _| i as f64 - 1.0),
        );
        let cfg = SamplerConfig {
            latent_mean: LatentMeanMode::Off,
            ..SamplerConfig::default()
        };
        let st = init_state(&data, &cfg, 0);
        assert_eq!(st.init_fallbacks.len(), 3);
        st.check_finite(0).unwrap();
    }

    #[test]
    fn deterministic_per_seed_and_restart() {
        let v = 4;
        let mk = |x: f64| {
            let mut m = DMatrix::<f64>::zeros(v, v);
            m[(0, 1)] = x;
            m[(1, 0)] = x;
            m[(2, 3)] = -x;
            m[(3, 2)] = -x;
            m
        };
        let data = toy_data(
            vec![mk(0.5), mk(0.2), mk(-0.1)],
            DMatrix::from_fn(3, 2, |i, j| (i + j) as f64 * 0.3 - 0.4),
        );
        let cfg = SamplerConfig::default();
        let a = init_state(&data, &cfg, 0);
        let b = init_state(&data, &cfg, 0);
        assert_eq!(a.y.as_slice(), b.y.as_slice());
        assert_eq!(a.sigma.as_slice(), b.sigma.as_slice());
        let c = init_state(&data, &cfg, 1);
        assert_ne!(a.y.as_slice(), c.y.as_slice());
    }

    #[test]
    fn global_sign_rule_yields_nonnegative_corr() {
        let v = 3;
        let n = 6;
        let mut connectomes = Vec::new();
        let mut behaviors = DMatrix::<f64>::zeros(n, 1);
        for j in 0..n {
            let s = (j as f64 - 2.5) / 2.0;
            let yj = DVector::from_vec(vec![s, s * 0.5, s * 0.25]);
            let mut c = &yj * yj.transpose();
            for i in 0..v {
                c[(i, i)] = 0.0;
            }
            connectomes.push(c);
            behaviors[(j, 0)] = s;
        }
        let data = toy_data(connectomes, behaviors);
        let cfg = SamplerConfig {
            latent_mean: LatentMeanMode::Off,
            ..SamplerConfig::default()
        };
        let st = init_state(&data, &cfg, 0);
        let m: Vec<f64> = (0..n).map(|j| row_mean(&st.y, j)).collect();
        let k: Vec<f64> = (0..n).map(|j| st.kappa[j]).collect();
        assert!(pearson_or_zero(&m, &k) >= 0.0);
    }
}
