//! Prior hyperparameters and draws of a full parameter set from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_dirichlet, sample_inverse_wishart, sample_mniw, sample_mvn, DirichletParams, MNIWParams};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{InitParams, ModeParams, ModelConfig, ModelParams};
use crate::stick::StickRegression;

/// User-facing prior settings. Scale matrices are expressed relative to
/// empirical covariances of the data, so the same settings transfer across
/// datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// `V₀ = dynamics_v0 · I` for `(A, a)`.
    pub dynamics_v0: f64,
    /// `S₀ = dynamics_s0_scale · S̄_PCA` for `Q`.
    pub dynamics_s0_scale: f64,
    /// `n₀ = M + dynamics_n0_offset`.
    pub dynamics_n0_offset: f64,
    pub emission_v0: f64,
    /// `S₀ = emission_s0_scale · S̄` for `S`.
    pub emission_s0_scale: f64,
    /// `n₀ = N + emission_n0_offset`.
    pub emission_n0_offset: f64,
    /// Isotropic prior variance of every state-regression row (bias included).
    pub state_reg_var: f64,
    pub dur_reg_var: f64,
    pub trans_alpha: f64,
    pub dur_alpha: f64,
    pub pi0_alpha: f64,
    /// `μ^init ~ N(0, init_mean_scale · S̄_PCA)`.
    pub init_mean_scale: f64,
    /// `Σ^init ~ IW(init_cov_scale · S̄_PCA, M + init_cov_n0_offset)`.
    pub init_cov_scale: f64,
    pub init_cov_n0_offset: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            dynamics_v0: 1.0,
            dynamics_s0_scale: 0.75 * 0.75,
            dynamics_n0_offset: 2.0,
            emission_v0: 1.0,
            emission_s0_scale: 0.075 * 0.75,
            emission_n0_offset: 2.0,
            state_reg_var: 1.0,
            dur_reg_var: 1.0,
            trans_alpha: 1.0,
            dur_alpha: 1.0,
            pi0_alpha: 1.0,
            init_mean_scale: 1.0,
            init_cov_scale: 1.0,
            init_cov_n0_offset: 2.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("dynamics_v0", self.dynamics_v0),
            ("dynamics_s0_scale", self.dynamics_s0_scale),
            ("dynamics_n0_offset", self.dynamics_n0_offset),
            ("emission_v0", self.emission_v0),
            ("emission_s0_scale", self.emission_s0_scale),
            ("emission_n0_offset", self.emission_n0_offset),
            ("state_reg_var", self.state_reg_var),
            ("dur_reg_var", self.dur_reg_var),
            ("trans_alpha", self.trans_alpha),
            ("dur_alpha", self.dur_alpha),
            ("pi0_alpha", self.pi0_alpha),
            ("init_mean_scale", self.init_mean_scale),
            ("init_cov_scale", self.init_cov_scale),
            ("init_cov_n0_offset", self.init_cov_n0_offset),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("prior setting {name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Concrete hyperparameters given the pooled observation covariance
    /// `s_bar` (N × N) and the covariance of the PCA projection `s_pca` (M × M).
    pub fn resolve(&self, config: &ModelConfig, s_bar: &Mat, s_pca: &Mat) -> Result<Priors> {
        self.validate()?;
        let (m, n) = (config.latent_dim, config.obs_dim);
        if s_bar.shape() != (n, n) || s_pca.shape() != (m, m) {
            return Err(Error::dims("empirical covariances do not match the model dimensions"));
        }
        let dynamics = MNIWParams::new(
            Mat::zeros(m, m + 1),
            Mat::identity(m + 1, m + 1) * self.dynamics_v0,
            s_pca * self.dynamics_s0_scale,
            m as f64 + self.dynamics_n0_offset,
        )?;
        let emission = MNIWParams::new(
            Mat::zeros(n, m + 1),
            Mat::identity(m + 1, m + 1) * self.emission_v0,
            s_bar * self.emission_s0_scale,
            n as f64 + self.emission_n0_offset,
        )?;
        Ok(Priors {
            dynamics,
            emission,
            state_reg_cov: Mat::identity(m + 1, m + 1) * self.state_reg_var,
            dur_reg_cov: Mat::identity(m + 1, m + 1) * self.dur_reg_var,
            trans_alpha: self.trans_alpha,
            dur_alpha: self.dur_alpha,
            pi0_alpha: self.pi0_alpha,
            init_mean: Vector::zeros(m),
            init_mean_cov: s_pca * self.init_mean_scale,
            init_cov_scale: s_pca * self.init_cov_scale,
            init_cov_dof: m as f64 + self.init_cov_n0_offset,
        })
    }
}

/// Resolved hyperparameters used by the conditional updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    /// MNIW over `[A a]` (M × (M+1)) and `Q`.
    pub dynamics: MNIWParams,
    /// MNIW over `[C c]` (N × (M+1)) and `S`.
    pub emission: MNIWParams,
    /// Covariance of each augmented stick row `(R_k, r_k)`; prior mean zero.
    pub state_reg_cov: Mat,
    pub dur_reg_cov: Mat,
    pub trans_alpha: f64,
    pub dur_alpha: f64,
    pub pi0_alpha: f64,
    pub init_mean: Vector,
    pub init_mean_cov: Mat,
    pub init_cov_scale: Mat,
    pub init_cov_dof: f64,
}

pub(crate) fn split_coef(coef: &Mat) -> (Mat, Vector) {
    let q = coef.ncols() - 1;
    (coef.columns(0, q).into_owned(), coef.column(q).into_owned())
}

fn draw_regs<R: Rng + ?Sized>(
    k: usize,
    categories: usize,
    m: usize,
    cov: &Mat,
    rng: &mut R,
) -> Result<Vec<StickRegression>> {
    (0..k)
        .map(|_| {
            let mut reg = StickRegression::zeros(categories, m);
            for j in 0..categories - 1 {
                reg.set_augmented_row(j, &sample_mvn(&Vector::zeros(m + 1), cov, rng)?);
            }
            Ok(reg)
        })
        .collect()
}

/// Draw every parameter independently from its prior.
pub fn sample_params_from_prior<R: Rng + ?Sized>(
    priors: &Priors,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<ModelParams> {
    let (k, m, dur) = (config.num_modes, config.latent_dim, config.durations());
    let shared = if config.shared_emission {
        Some(sample_mniw(&priors.emission, rng)?)
    } else {
        None
    };
    let mut modes = Vec::with_capacity(k);
    for _ in 0..k {
        let (dyn_coef, q_cov) = sample_mniw(&priors.dynamics, rng)?;
        let (em_coef, s_cov) = match &shared {
            Some(e) => e.clone(),
            None => sample_mniw(&priors.emission, rng)?,
        };
        let (a_mat, a_bias) = split_coef(&dyn_coef);
        let (c_mat, c_bias) = split_coef(&em_coef);
        modes.push(ModeParams {
            a_mat,
            a_bias,
            q_cov,
            c_mat,
            c_bias,
            s_cov,
        });
    }
    let mut mu_init = Vec::with_capacity(k);
    let mut sigma_init = Vec::with_capacity(k);
    for _ in 0..k {
        mu_init.push(sample_mvn(&priors.init_mean, &priors.init_mean_cov, rng)?);
        sigma_init.push(sample_inverse_wishart(&priors.init_cov_scale, priors.init_cov_dof, rng)?);
    }
    let pi0 = sample_dirichlet(&DirichletParams::symmetric(k, priors.pi0_alpha)?, rng)?;
    let trans = if config.recurrent_state {
        None
    } else {
        let dir = DirichletParams::symmetric(k, priors.trans_alpha)?;
        let mut t = Mat::zeros(k, k);
        for i in 0..k {
            for (j, p) in sample_dirichlet(&dir, rng)?.into_iter().enumerate() {
                t[(i, j)] = p;
            }
        }
        Some(t)
    };
    let state_reg = if config.recurrent_state {
        Some(draw_regs(k, k, m, &priors.state_reg_cov, rng)?)
    } else {
        None
    };
    let dur_reg = if config.recurrent_duration {
        Some(draw_regs(k, dur, m, &priors.dur_reg_cov, rng)?)
    } else {
        None
    };
    let dur_table = if config.explicit_duration && !config.recurrent_duration {
        let dir = DirichletParams::symmetric(dur, priors.dur_alpha)?;
        Some((0..k).map(|_| sample_dirichlet(&dir, rng)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(ModelParams {
        modes,
        init: InitParams {
            pi0,
            mu_init,
            sigma_init,
        },
        trans,
        state_reg,
        dur_reg,
        dur_table,
    })
}
