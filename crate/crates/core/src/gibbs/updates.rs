//! Conditional draws of the parameters given trajectories and auxiliaries.

use rand::Rng;

use super::priors::{split_coef, Priors};
use crate::augment::SequenceAux;
use crate::dist::{
    sample_dirichlet, sample_info_gaussian, sample_inverse_wishart, sample_mniw, DirichletParams, InfoGaussian,
    RegressionStats,
};
use crate::error::Result;
use crate::linalg::{self, Mat, Vector};
use crate::model::{LatentTrajectory, ModelConfig, ModelParams, Sequence};
use crate::stick::{row_posterior_from_stats, PGAuxiliaries, RowStats, StickRegression};

/// Draw `(A_k, a_k, Q_k)` for every mode from pairs `(x_{t−1}, x_t)` with `s_t = k`.
pub fn update_dynamics<R: Rng + ?Sized>(
    params: &mut ModelParams,
    config: &ModelConfig,
    trajs: &[LatentTrajectory],
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    let m = config.latent_dim;
    let mut stats = vec![RegressionStats::new(m, m + 1); config.num_modes];
    for traj in trajs {
        for t in 1..traj.len() {
            stats[traj.states[t]].add(&traj.latents[t], &linalg::augment(&traj.latents[t - 1]));
        }
    }
    for (mode, st) in params.modes.iter_mut().zip(&stats) {
        let (coef, q_cov) = sample_mniw(&priors.dynamics.posterior(st)?, rng)?;
        let (a_mat, a_bias) = split_coef(&coef);
        mode.a_mat = a_mat;
        mode.a_bias = a_bias;
        mode.q_cov = q_cov;
    }
    Ok(())
}

/// Draw `(C, c, S)` from pairs `(x_t, y_t)`, pooled over modes when emissions are shared.
pub fn update_emissions<R: Rng + ?Sized>(
    params: &mut ModelParams,
    config: &ModelConfig,
    data: &[Sequence],
    trajs: &[LatentTrajectory],
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    let (m, n) = (config.latent_dim, config.obs_dim);
    let groups = if config.shared_emission { 1 } else { config.num_modes };
    let mut stats = vec![RegressionStats::new(n, m + 1); groups];
    for (y, traj) in data.iter().zip(trajs) {
        for t in 0..traj.len() {
            let g = if config.shared_emission { 0 } else { traj.states[t] };
            stats[g].add(&y[t], &linalg::augment(&traj.latents[t]));
        }
    }
    let draws = stats
        .iter()
        .map(|st| sample_mniw(&priors.emission.posterior(st)?, rng))
        .collect::<Result<Vec<_>>>()?;
    for (k, mode) in params.modes.iter_mut().enumerate() {
        let (coef, s_cov) = &draws[if config.shared_emission { 0 } else { k }];
        let (c_mat, c_bias) = split_coef(coef);
        mode.c_mat = c_mat;
        mode.c_bias = c_bias;
        mode.s_cov = s_cov.clone();
    }
    Ok(())
}

/// Draw `μ^init_k` then `Σ^init_k` from the first latent of every sequence
/// starting in mode `k`. With recurrent durations the first-duration
/// auxiliaries add a Pólya-gamma potential on `μ^init_k`.
pub fn update_initial_latents<R: Rng + ?Sized>(
    params: &mut ModelParams,
    config: &ModelConfig,
    trajs: &[LatentTrajectory],
    aux: &[SequenceAux],
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    let prior_mean = InfoGaussian::from_moment(&priors.init_mean, &priors.init_mean_cov)?;
    for k in 0..config.num_modes {
        let firsts: Vec<&Vector> = trajs
            .iter()
            .filter(|t| !t.is_empty() && t.states[0] == k)
            .map(|t| &t.latents[0])
            .collect();
        let sigma_inv = linalg::spd_inverse(&params.init.sigma_init[k], "initial covariance")?;
        let mut post = prior_mean.clone();
        for x in &firsts {
            post.lambda += &sigma_inv;
            post.theta += &sigma_inv * *x;
        }
        if let Some(regs) = &params.dur_reg {
            for (traj, a) in trajs.iter().zip(aux) {
                if let (Some(pg), false) = (&a.initial_duration, traj.is_empty()) {
                    if traj.states[0] == k {
                        let (l, th) = pg.regressor_potential(&regs[k]);
                        post.lambda += l;
                        post.theta += th;
                    }
                }
            }
        }
        linalg::symmetrize(&mut post.lambda);
        let mu = sample_info_gaussian(&post, rng)?;
        let mut scale = priors.init_cov_scale.clone();
        for x in &firsts {
            let r = *x - &mu;
            scale.ger(1.0, &r, &r, 1.0);
        }
        params.init.sigma_init[k] = sample_inverse_wishart(&scale, priors.init_cov_dof + firsts.len() as f64, rng)?;
        params.init.mu_init[k] = mu;
    }
    Ok(())
}

/// Dirichlet updates of `π₀`, the transition rows and the duration tables
/// from counts at change points.
pub fn update_discrete_tables<R: Rng + ?Sized>(
    params: &mut ModelParams,
    config: &ModelConfig,
    trajs: &[LatentTrajectory],
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    let (k, dur) = (config.num_modes, config.durations());
    let mut pi0_counts = vec![0.0; k];
    let mut trans_counts = vec![vec![0.0; k]; k];
    let mut dur_counts = vec![vec![0.0; dur]; k];
    for traj in trajs.iter().filter(|t| !t.is_empty()) {
        pi0_counts[traj.states[0]] += 1.0;
        dur_counts[traj.states[0]][traj.durations[0] - 1] += 1.0;
        for t in 0..traj.len() - 1 {
            if traj.durations[t] == 1 {
                let next = traj.states[t + 1];
                trans_counts[traj.states[t]][next] += 1.0;
                dur_counts[next][traj.durations[t + 1] - 1] += 1.0;
            }
        }
    }
    let prior = DirichletParams::symmetric(k, priors.pi0_alpha)?;
    params.init.pi0 = sample_dirichlet(&prior.posterior(&pi0_counts), rng)?;
    if let Some(trans) = &mut params.trans {
        let prior = DirichletParams::symmetric(k, priors.trans_alpha)?;
        for (i, counts) in trans_counts.iter().enumerate() {
            for (j, p) in sample_dirichlet(&prior.posterior(counts), rng)?.into_iter().enumerate() {
                trans[(i, j)] = p;
            }
        }
    }
    if let Some(tables) = &mut params.dur_table {
        let prior = DirichletParams::symmetric(dur, priors.dur_alpha)?;
        for (row, counts) in tables.iter_mut().zip(&dur_counts) {
            *row = sample_dirichlet(&prior.posterior(counts), rng)?;
        }
    }
    Ok(())
}

fn draw_rows<R: Rng + ?Sized>(
    reg: &mut StickRegression,
    stats: &[RowStats],
    prior_cov: &Mat,
    rng: &mut R,
) -> Result<()> {
    let prior_mean = Vector::zeros(prior_cov.nrows());
    for (j, st) in stats.iter().enumerate() {
        let post = row_posterior_from_stats(&prior_mean, prior_cov, st)?;
        reg.set_augmented_row(j, &sample_info_gaussian(&post, rng)?);
    }
    Ok(())
}

fn add_aux(stats: &mut [RowStats], x_aug: &Vector, pg: &PGAuxiliaries) {
    for (j, st) in stats.iter_mut().enumerate() {
        if pg.omega[j] > 0.0 {
            st.add(x_aug, pg.kappa[j], pg.omega[j]);
        }
    }
}

/// Draw every state-regression row from its Pólya-gamma conditional, using
/// transitions out of change points routed by the source mode.
pub fn update_state_regression<R: Rng + ?Sized>(
    params: &mut ModelParams,
    config: &ModelConfig,
    trajs: &[LatentTrajectory],
    aux: &[SequenceAux],
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    let Some(regs) = params.state_reg.as_mut() else {
        return Ok(());
    };
    let (k, m) = (config.num_modes, config.latent_dim);
    let mut stats = vec![vec![RowStats::new(m + 1); k - 1]; k];
    for (traj, a) in trajs.iter().zip(aux) {
        for (t, step) in a.steps.iter().enumerate() {
            if let Some(pg) = step.as_ref().and_then(|s| s.state.as_ref()) {
                add_aux(&mut stats[traj.states[t]], &linalg::augment(&traj.latents[t]), pg);
            }
        }
    }
    for (reg, st) in regs.iter_mut().zip(&stats) {
        draw_rows(reg, st, &priors.state_reg_cov, rng)?;
    }
    Ok(())
}

/// Draw every duration-regression row, routing each fresh duration by the
/// mode it starts. The first duration of a sequence enters with regressor
/// `μ^init_{s₀}`.
pub fn update_duration_regression<R: Rng + ?Sized>(
    params: &mut ModelParams,
    config: &ModelConfig,
    trajs: &[LatentTrajectory],
    aux: &[SequenceAux],
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    let Some(regs) = params.dur_reg.as_mut() else {
        return Ok(());
    };
    let (k, m, dur) = (config.num_modes, config.latent_dim, config.durations());
    let mut stats = vec![vec![RowStats::new(m + 1); dur - 1]; k];
    for (traj, a) in trajs.iter().zip(aux) {
        for (t, step) in a.steps.iter().enumerate() {
            if let Some(pg) = step.as_ref().and_then(|s| s.duration.as_ref()) {
                add_aux(&mut stats[traj.states[t + 1]], &linalg::augment(&traj.latents[t]), pg);
            }
        }
        if let (Some(pg), false) = (&a.initial_duration, traj.is_empty()) {
            let s0 = traj.states[0];
            add_aux(&mut stats[s0], &linalg::augment(&params.init.mu_init[s0]), pg);
        }
    }
    for (reg, st) in regs.iter_mut().zip(&stats) {
        draw_rows(reg, st, &priors.dur_reg_cov, rng)?;
    }
    Ok(())
}

/// One full pass over all parameter blocks.
pub fn update_parameters<R: Rng + ?Sized>(
    params: &mut ModelParams,
    config: &ModelConfig,
    data: &[Sequence],
    trajs: &[LatentTrajectory],
    aux: &[SequenceAux],
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    update_dynamics(params, config, trajs, priors, rng)?;
    update_emissions(params, config, data, trajs, priors, rng)?;
    update_initial_latents(params, config, trajs, aux, priors, rng)?;
    update_discrete_tables(params, config, trajs, priors, rng)?;
    update_state_regression(params, config, trajs, aux, priors, rng)?;
    update_duration_regression(params, config, trajs, aux, priors, rng)?;
    Ok(())
}
