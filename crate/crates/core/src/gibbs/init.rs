//! PCA projection and the ARHMM-based starting state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arhmm::{fit_arhmm, ArhmmOptions};
use super::priors::{PriorConfig, Priors};
use super::updates::update_parameters;
use crate::augment::{sample_sequence_aux, SequenceAux};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{
    run_length_durations, InitParams, LatentTrajectory, ModeParams, ModelConfig, ModelParams, Sequence,
};
use crate::stick::StickRegression;

/// Number of parameter-only sweeps run by [`InitScheme::I`].
pub const FROZEN_SWEEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// ARHMM start followed by parameter-only sweeps at frozen `(z, x)`.
    I,
    /// ARHMM start only.
    II,
}

#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vector,
    /// `N × M`, columns ordered by decreasing variance.
    pub components: Mat,
    /// All `N` eigenvalues of the pooled covariance, decreasing.
    pub variances: Vec<f64>,
    /// Pooled observation covariance.
    pub s_bar: Mat,
    /// Covariance of the projected series (diagonal).
    pub s_pca: Mat,
}

impl Pca {
    pub fn project(&self, y: &Vector) -> Vector {
        self.components.transpose() * (y - &self.mean)
    }
}

fn pd_floor(m: &Mat) -> Mat {
    let n = m.nrows();
    let floor = 1e-9 * (m.trace() / n as f64).max(1e-300);
    let mut out = m + Mat::identity(n, n) * floor;
    linalg::symmetrize(&mut out);
    out
}

/// Principal components of all time points pooled across sequences.
pub fn fit_pca(data: &[Sequence], latent_dim: usize) -> Result<Pca> {
    let points: Vec<&Vector> = data.iter().flatten().collect();
    if points.len() < 2 {
        return Err(Error::Data("need at least two observations".into()));
    }
    let n = points[0].len();
    if latent_dim > n {
        return Err(Error::Config(format!(
            "latent dimension {latent_dim} exceeds observation dimension {n}"
        )));
    }
    let count = points.len() as f64;
    let mean = points.iter().fold(Vector::zeros(n), |acc, y| acc + *y) / count;
    let mut cov = Mat::zeros(n, n);
    for y in &points {
        let r = *y - &mean;
        cov.ger(1.0 / count, &r, &r, 1.0);
    }
    linalg::symmetrize(&mut cov);
    if !(cov.trace() > 1e-12 * mean.norm_squared().max(1.0)) {
        return Err(Error::Data("degenerate data: observations have no variance".into()));
    }
    let eig = cov.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Mat::zeros(n, latent_dim);
    for (j, &i) in order.iter().take(latent_dim).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v = -v;
        }
        components.set_column(j, &v);
    }
    let variances: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let top = variances[0];
    let s_pca = Mat::from_diagonal(&Vector::from_iterator(
        latent_dim,
        variances.iter().take(latent_dim).map(|v| v.max(1e-8 * top)),
    ));
    Ok(Pca {
        mean,
        components,
        variances,
        s_bar: pd_floor(&cov),
        s_pca,
    })
}

/// Resolve prior settings against the data's empirical covariances.
pub fn priors_from_data(prior: &PriorConfig, config: &ModelConfig, data: &[Sequence]) -> Result<Priors> {
    let pca = fit_pca(data, config.latent_dim)?;
    prior.resolve(config, &pca.s_bar, &pca.s_pca)
}

/// Parameters that place no preference on any mode, used only so that the
/// first auxiliaries can be drawn before the first parameter update.
fn neutral_params(config: &ModelConfig, pca: &Pca) -> ModelParams {
    let (k, m, dur) = (config.num_modes, config.latent_dim, config.durations());
    let mode = ModeParams {
        a_mat: Mat::identity(m, m),
        a_bias: Vector::zeros(m),
        q_cov: pca.s_pca.clone(),
        c_mat: pca.components.clone(),
        c_bias: pca.mean.clone(),
        s_cov: pca.s_bar.clone(),
    };
    ModelParams {
        modes: vec![mode; k],
        init: InitParams {
            pi0: vec![1.0 / k as f64; k],
            mu_init: vec![Vector::zeros(m); k],
            sigma_init: vec![pca.s_pca.clone(); k],
        },
        trans: (!config.recurrent_state).then(|| Mat::from_element(k, k, 1.0 / k as f64)),
        state_reg: config.recurrent_state.then(|| vec![StickRegression::zeros(k, m); k]),
        dur_reg: config.recurrent_duration.then(|| vec![StickRegression::zeros(dur, m); k]),
        dur_table: (config.explicit_duration && !config.recurrent_duration).then(|| vec![vec![1.0 / dur as f64; dur]; k]),
    }
}

/// Starting point of a chain: latents from PCA, states from the best of
/// several ARHMM fits, durations from run lengths, then one parameter draw.
pub struct InitialState {
    pub params: ModelParams,
    pub trajectories: Vec<LatentTrajectory>,
    pub aux: Vec<SequenceAux>,
    pub priors: Priors,
    pub arhmm_log_likelihood: f64,
}

pub fn initialize<R: Rng + ?Sized>(
    data: &[Sequence],
    config: &ModelConfig,
    prior: &PriorConfig,
    scheme: InitScheme,
    rng: &mut R,
) -> Result<InitialState> {
    config.validate()?;
    if data.is_empty() || data.iter().any(|s| s.is_empty()) {
        return Err(Error::Data("no observations to fit".into()));
    }
    if data.iter().flatten().any(|y| y.len() != config.obs_dim) {
        return Err(Error::Data(format!("observations must have dimension {}", config.obs_dim)));
    }
    let pca = fit_pca(data, config.latent_dim)?;
    let priors = prior.resolve(config, &pca.s_bar, &pca.s_pca)?;
    let latents: Vec<Vec<Vector>> = data.iter().map(|seq| seq.iter().map(|y| pca.project(y)).collect()).collect();
    let fit = fit_arhmm(&latents, config.num_modes, &ArhmmOptions::default(), rng)?;
    let trajectories: Vec<LatentTrajectory> = latents
        .into_iter()
        .zip(fit.states)
        .map(|(x, states)| LatentTrajectory {
            durations: run_length_durations(&states, config.durations()),
            states,
            latents: x,
        })
        .collect();
    let mut params = neutral_params(config, &pca);
    let mut aux = draw_aux(&params, config, &trajectories, rng)?;
    update_parameters(&mut params, config, data, &trajectories, &aux, &priors, rng)?;
    if scheme == InitScheme::I {
        for _ in 0..FROZEN_SWEEPS {
            aux = draw_aux(&params, config, &trajectories, rng)?;
            update_parameters(&mut params, config, data, &trajectories, &aux, &priors, rng)?;
        }
    }
    Ok(InitialState {
        params,
        trajectories,
        aux,
        priors,
        arhmm_log_likelihood: fit.log_likelihood,
    })
}

pub(crate) fn draw_aux<R: Rng + ?Sized>(
    params: &ModelParams,
    config: &ModelConfig,
    trajs: &[LatentTrajectory],
    rng: &mut R,
) -> Result<Vec<SequenceAux>> {
    trajs
        .iter()
        .enumerate()
        .map(|(i, t)| sample_sequence_aux(params, config, t, rng).map_err(|e| e.in_sequence(i)))
        .collect()
}
