//! Joint log density of data and parameters.

use nalgebra::{DMatrix, DVector};

use super::distributions::{ln_inverse_gamma, ln_inverse_wishart, ln_mvn, ln_normal};
use super::{ModelData, ModelError, ModelState, Priors};

/// Sum of Gaussian log likelihoods for connectome upper triangles and
/// non-missing behavior entries, the latent Gaussian log prior, and all
/// hyperprior terms. Fully normalized.
pub fn log_joint(state: &ModelState, data: &ModelData, priors: &Priors) -> Result<f64, ModelError> {
    let nv = data.v;
    let n = data.n_subjects();
    let dim = nv + 1;
    let mut total = 0.0;

    // connectome likelihood (upper triangle only)
    for j in 0..n {
        let c = &data.connectomes[j];
        for a in 0..nv {
            for b in (a + 1)..nv {
                let mean = state.d[(a, b)] + state.y[(j, a)] * state.y[(j, b)];
                total += ln_normal(c[(a, b)], mean, state.sigma2_c);
            }
        }
    }

    // behavior likelihood (observed entries only)
    for j in 0..n {
        for q in 0..data.p {
            if data.is_observed(j, q) {
                let mean = state.e[q] + state.kappa[j];
                total += ln_normal(data.behaviors[(j, q)], mean, state.sigma2_b[q]);
            }
        }
    }

    // latent prior
    let mut mean_z = DVector::<f64>::zeros(dim);
    for k in 0..nv {
        mean_z[k] = state.mu[k];
    }
    for j in 0..n {
        let mut z = DVector::<f64>::zeros(dim);
        for k in 0..nv {
            z[k] = state.y[(j, k)];
        }
        z[nv] = state.kappa[j];
        total += ln_mvn(&z, &mean_z, &state.sigma)?;
    }

    // hyperpriors
    for a in 0..nv {
        for b in (a + 1)..nv {
            total += ln_normal(state.d[(a, b)], 0.0, priors.intercept_var);
        }
    }
    for q in 0..data.p {
        total += ln_normal(state.e[q], 0.0, priors.intercept_var);
    }
    if state.mu_enabled {
        for k in 0..nv {
            total += ln_normal(state.mu[k], 0.0, priors.intercept_var);
        }
    }
    total += ln_inverse_wishart(
        &state.sigma,
        priors.iw_df(nv),
        &DMatrix::identity(dim, dim),
    )?;
    total += ln_inverse_gamma(state.sigma2_c, priors.ig_shape, priors.ig_rate);
    for q in 0..data.p {
        total += ln_inverse_gamma(state.sigma2_b[q], priors.ig_shape, priors.ig_rate);
    }

    if !total.is_finite() {
        return Err(ModelError::NonFinite {
            parameter: "log_joint".into(),
            iteration: 0,
        });
    }
    Ok(total)
}
