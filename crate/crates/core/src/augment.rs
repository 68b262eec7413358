//! Pólya-gamma auxiliaries attached to the discrete transitions of a
//! trajectory, and the Gaussian potentials they induce on the latents.
//!
//! A transition out of step `t` (a fresh draw of `(s_{t+1}, d_{t+1})`,
//! which happens exactly when `d_t = 1`) carries auxiliaries indexed by its
//! source time `t`, because its regressor is `x_t`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{Mat, Vector};
use crate::model::{LatentTrajectory, ModelConfig, ModelParams};
use crate::stick::{sample_pg_aux, PGAuxiliaries};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionAux {
    /// Outcome `s_{t+1}` under the regression of `s_t`.
    pub state: Option<PGAuxiliaries>,
    /// Outcome `d_{t+1} − 1` under the regression of `s_{t+1}`.
    pub duration: Option<PGAuxiliaries>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceAux {
    /// One entry per time step; `Some` only where a fresh draw follows.
    pub steps: Vec<Option<TransitionAux>>,
    /// First duration under the regression of `s_0`, evaluated at its
    /// initial mean.
    pub initial_duration: Option<PGAuxiliaries>,
}

impl SequenceAux {
    pub fn empty(len: usize) -> Self {
        Self {
            steps: vec![None; len],
            initial_duration: None,
        }
    }
}

/// Draw every auxiliary of one sequence given its trajectory.
pub fn sample_sequence_aux<R: Rng + ?Sized>(
    params: &ModelParams,
    config: &ModelConfig,
    traj: &LatentTrajectory,
    rng: &mut R,
) -> Result<SequenceAux> {
    let len = traj.len();
    let mut aux = SequenceAux::empty(len);
    if !config.recurrent_state && !config.recurrent_duration {
        return Ok(aux);
    }
    for t in 0..len.saturating_sub(1) {
        if traj.durations[t] != 1 {
            continue;
        }
        let x = &traj.latents[t];
        let (s, s_next, d_next) = (traj.states[t], traj.states[t + 1], traj.durations[t + 1]);
        let state = match &params.state_reg {
            Some(regs) if config.recurrent_state => Some(sample_pg_aux(s_next, &regs[s].logits(x), rng)?),
            _ => None,
        };
        let duration = match &params.dur_reg {
            Some(regs) if config.recurrent_duration => {
                Some(sample_pg_aux(d_next - 1, &regs[s_next].logits(x), rng)?)
            }
            _ => None,
        };
        aux.steps[t] = Some(TransitionAux { state, duration });
    }
    if config.recurrent_duration && len > 0 {
        let regs = params.dur_reg.as_ref().expect("validated");
        let s0 = traj.states[0];
        let v = regs[s0].logits(&params.init.mu_init[s0]);
        aux.initial_duration = Some(sample_pg_aux(traj.durations[0] - 1, &v, rng)?);
    }
    Ok(aux)
}

/// Gaussian potential `(Λ, θ)` each step's auxiliaries place on `x_t`.
pub fn latent_potentials(
    params: &ModelParams,
    traj: &LatentTrajectory,
    aux: &SequenceAux,
) -> Vec<Option<(Mat, Vector)>> {
    aux.steps
        .iter()
        .enumerate()
        .map(|(t, step)| {
            let step = step.as_ref()?;
            let mut acc: Option<(Mat, Vector)> = None;
            let mut add = |(l, th): (Mat, Vector)| match &mut acc {
                Some((al, at)) => {
                    *al += l;
                    *at += th;
                }
                None => acc = Some((l, th)),
            };
            if let (Some(a), Some(regs)) = (&step.state, &params.state_reg) {
                add(a.regressor_potential(&regs[traj.states[t]]));
            }
            if let (Some(a), Some(regs)) = (&step.duration, &params.dur_reg) {
                add(a.regressor_potential(&regs[traj.states[t + 1]]));
            }
            acc
        })
        .collect()
}
