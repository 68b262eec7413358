//! Backward information filtering and forward sampling of the continuous
//! latents of a linear-Gaussian chain.
//!
//! The chain is `x_0 ~ prior`, `x_t | x_{t−1} ~ N(A_t x_{t−1} + a_t, Q_t)`,
//! with an arbitrary Gaussian potential on every node (emissions plus any
//! Pólya-gamma terms). Messages flow backward from the end; samples are then
//! drawn forward from the exact conditionals.

use rand::Rng;

use crate::augment::{latent_potentials, SequenceAux};
use crate::dist::{sample_info_gaussian, InfoGaussian};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{LatentTrajectory, ModelParams, ParamCache};

/// Link `x_{t−1} → x_t`.
#[derive(Debug, Clone)]
pub struct ChainStep {
    pub a_mat: Mat,
    pub a_bias: Vector,
    pub q_inv: Mat,
}

#[derive(Debug, Clone)]
pub struct GaussianChain {
    pub prior: InfoGaussian,
    /// `steps[t − 1]` links `x_{t−1}` to `x_t`.
    pub steps: Vec<ChainStep>,
    pub nodes: Vec<InfoGaussian>,
}

impl GaussianChain {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::dims("empty chain"));
        }
        if self.steps.len() + 1 != self.nodes.len() {
            return Err(Error::dims("chain needs one step per transition"));
        }
        let m = self.dim();
        if self.nodes.iter().any(|n| n.dim() != m)
            || self
                .steps
                .iter()
                .any(|s| s.a_mat.shape() != (m, m) || s.a_bias.len() != m || s.q_inv.shape() != (m, m))
        {
            return Err(Error::dims("chain blocks disagree on the latent dimension"));
        }
        Ok(())
    }
}

/// `backward[t]` is the information-form likelihood of the node potentials
/// at `t` and everything after it, as a function of `x_t` (the `t|t`
/// message). At `T − 1` it is the node potential alone.
pub fn backward_messages(chain: &GaussianChain) -> Result<Vec<InfoGaussian>> {
    chain.validate()?;
    let (len, m) = (chain.len(), chain.dim());
    let mut out = chain.nodes.clone();
    for t in (1..len).rev() {
        let step = &chain.steps[t - 1];
        let lam_hat = &out[t].lambda;
        let theta_hat = &out[t].theta;
        let p = linalg::spd_inverse(&(lam_hat + &step.q_inv), "backward predict").map_err(|e| e.at(0, t))?;
        let j = lam_hat * &p;
        let l = Mat::identity(m, m) - &j;
        let lam_m = linalg::symmetrized(&(&l * lam_hat * l.transpose() + &j * &step.q_inv * j.transpose()));
        let theta_m = &l * (theta_hat - lam_hat * &step.a_bias);
        let pred = InfoGaussian {
            theta: step.a_mat.transpose() * theta_m,
            lambda: step.a_mat.transpose() * lam_m * &step.a_mat,
        };
        out[t - 1] = out[t - 1].combine(&pred);
    }
    Ok(out)
}

/// Draw `x_{0..T}` jointly from the chain posterior.
pub fn sample_chain<R: Rng + ?Sized>(
    chain: &GaussianChain,
    backward: &[InfoGaussian],
    rng: &mut R,
) -> Result<Vec<Vector>> {
    let len = chain.len();
    let mut xs: Vec<Vector> = Vec::with_capacity(len);
    for t in 0..len {
        let base = if t == 0 {
            chain.prior.clone()
        } else {
            let step = &chain.steps[t - 1];
            let mean = &step.a_mat * &xs[t - 1] + &step.a_bias;
            InfoGaussian {
                theta: &step.q_inv * mean,
                lambda: step.q_inv.clone(),
            }
        };
        let post = base.combine(&backward[t]);
        xs.push(sample_info_gaussian(&post, rng).map_err(|e| e.at(0, t))?);
    }
    Ok(xs)
}

/// Smoothed means and covariances of every `x_t`.
pub fn chain_marginals(chain: &GaussianChain) -> Result<(Vec<Vector>, Vec<Mat>)> {
    let backward = backward_messages(chain)?;
    let len = chain.len();
    let mut means: Vec<Vector> = Vec::with_capacity(len);
    let mut covs: Vec<Mat> = Vec::with_capacity(len);
    for t in 0..len {
        let node = &backward[t];
        if t == 0 {
            let post = chain.prior.combine(node);
            let cov = linalg::spd_inverse(&post.lambda, "marginal")?;
            means.push(&cov * &post.theta);
            covs.push(cov);
        } else {
            let step = &chain.steps[t - 1];
            let p = linalg::spd_inverse(&(&step.q_inv + &node.lambda), "marginal")?;
            let g = &p * &step.q_inv * &step.a_mat;
            let offset = &p * (&step.q_inv * &step.a_bias + &node.theta);
            means.push(&g * &means[t - 1] + offset);
            covs.push(linalg::symmetrized(&(&g * &covs[t - 1] * g.transpose() + p)));
        }
    }
    Ok((means, covs))
}

/// The full `TM × TM` joint precision and information vector of the chain.
pub fn dense_information(chain: &GaussianChain) -> Result<InfoGaussian> {
    chain.validate()?;
    let (len, m) = (chain.len(), chain.dim());
    let mut lambda = Mat::zeros(len * m, len * m);
    let mut theta = Vector::zeros(len * m);
    let add_block = |lambda: &mut Mat, i: usize, j: usize, b: &Mat| {
        let mut view = lambda.view_mut((i * m, j * m), (m, m));
        view += b;
    };
    add_block(&mut lambda, 0, 0, &chain.prior.lambda);
    {
        let mut head = theta.rows_mut(0, m);
        head += &chain.prior.theta;
    }
    for t in 0..len {
        add_block(&mut lambda, t, t, &chain.nodes[t].lambda);
        let mut rows = theta.rows_mut(t * m, m);
        rows += &chain.nodes[t].theta;
    }
    for t in 1..len {
        let s = &chain.steps[t - 1];
        let qa = &s.q_inv * &s.a_mat;
        add_block(&mut lambda, t, t, &s.q_inv);
        add_block(&mut lambda, t - 1, t - 1, &(s.a_mat.transpose() * &qa));
        add_block(&mut lambda, t, t - 1, &(-&qa));
        add_block(&mut lambda, t - 1, t, &(-qa.transpose()));
        let qa_bias = &s.q_inv * &s.a_bias;
        let mut cur = theta.rows_mut(t * m, m);
        cur += &qa_bias;
        let back = s.a_mat.transpose() * &qa_bias;
        let mut prev = theta.rows_mut((t - 1) * m, m);
        prev -= &back;
    }
    Ok(InfoGaussian { theta, lambda })
}

/// Chain of one sequence given its discrete path and auxiliaries.
pub fn build_chain(
    params: &ModelParams,
    cache: &ParamCache,
    y: &[Vector],
    traj: &LatentTrajectory,
    aux: &SequenceAux,
) -> Result<GaussianChain> {
    let len = y.len();
    if traj.len() != len || aux.steps.len() != len {
        return Err(Error::dims("trajectory, auxiliaries and observations differ in length"));
    }
    let s0 = traj.states[0];
    let prior = InfoGaussian {
        theta: &cache.modes[s0].init_inv * &params.init.mu_init[s0],
        lambda: cache.modes[s0].init_inv.clone(),
    };
    let potentials = latent_potentials(params, traj, aux);
    let mut nodes = Vec::with_capacity(len);
    for t in 0..len {
        let s = traj.states[t];
        let mode = &params.modes[s];
        let ct_sinv = mode.c_mat.transpose() * &cache.modes[s].s_inv;
        let mut lambda = &ct_sinv * &mode.c_mat;
        let mut theta = &ct_sinv * (&y[t] - &mode.c_bias);
        if let Some((l, th)) = &potentials[t] {
            lambda += l;
            theta += th;
        }
        linalg::symmetrize(&mut lambda);
        nodes.push(InfoGaussian { theta, lambda });
    }
    let steps = (1..len)
        .map(|t| {
            let s = traj.states[t];
            ChainStep {
                a_mat: params.modes[s].a_mat.clone(),
                a_bias: params.modes[s].a_bias.clone(),
                q_inv: cache.modes[s].q_inv.clone(),
            }
        })
        .collect();
    Ok(GaussianChain { prior, steps, nodes })
}

/// Resample the latents of `traj` in place.
pub fn resample_continuous<R: Rng + ?Sized>(
    params: &ModelParams,
    cache: &ParamCache,
    y: &[Vector],
    traj: &mut LatentTrajectory,
    aux: &SequenceAux,
    rng: &mut R,
) -> Result<()> {
    let chain = build_chain(params, cache, y, traj, aux)?;
    let backward = backward_messages(&chain)?;
    traj.latents = sample_chain(&chain, &backward, rng)?;
    Ok(())
}
