//! Sampler state, the blocked sweep, and a resumable chain driver.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::init::{draw_aux, initialize, InitScheme};
use super::priors::{PriorConfig, Priors};
use super::updates::update_parameters;
use crate::augment::SequenceAux;
use crate::discrete::resample_discrete;
use crate::error::{Error, Result};
use crate::kalman::resample_continuous;
use crate::linalg;
use crate::model::{joint_log_density_cached, LatentTrajectory, ModelConfig, ModelParams, ParamCache, Sequence};
use crate::SeedRng;

pub const CHECKPOINT_FORMAT: &str = "redslds-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub trajectories: Vec<LatentTrajectory>,
    pub aux: Vec<SequenceAux>,
    pub iteration: usize,
    pub rng: SeedRng,
}

/// Which blocks a sweep resamples. The default is a full sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPlan {
    pub discrete: bool,
    pub continuous: bool,
    pub parameters: bool,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            discrete: true,
            continuous: true,
            parameters: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `log p(y, x, s, d | θ)` at the end of the sweep.
    pub joint_log_density: f64,
    /// Sum of forward-filter log normalizers, i.e. `log p(y, x | θ)` with the
    /// discrete path summed out, evaluated during the discrete update.
    pub evidence_proxy: f64,
    pub occupancy: Vec<usize>,
    pub jitter_retries: u64,
}

/// Run one sweep in place: discrete paths, auxiliaries, latents,
/// auxiliaries again, then every parameter block.
pub fn sweep(state: &mut ChainState, data: &[Sequence], priors: &Priors, plan: SweepPlan) -> Result<IterationRecord> {
    let jitter_before = linalg::jitter_retries();
    let config = state.config.clone();
    if data.len() != state.trajectories.len() {
        return Err(Error::dims("data and chain state hold different numbers of sequences"));
    }
    let cache = ParamCache::new(&state.params)?;
    let mut evidence = 0.0;
    for (i, (y, traj)) in data.iter().zip(state.trajectories.iter_mut()).enumerate() {
        if plan.discrete {
            evidence += resample_discrete(&state.params, &cache, &config, y, traj, &mut state.rng)
                .map_err(|e| e.in_sequence(i))?;
        }
    }
    if plan.continuous {
        state.aux = draw_aux(&state.params, &config, &state.trajectories, &mut state.rng)?;
        for (i, (y, traj)) in data.iter().zip(state.trajectories.iter_mut()).enumerate() {
            resample_continuous(&state.params, &cache, y, traj, &state.aux[i], &mut state.rng)
                .map_err(|e| e.in_sequence(i))?;
        }
    }
    if plan.discrete || plan.continuous || plan.parameters {
        state.aux = draw_aux(&state.params, &config, &state.trajectories, &mut state.rng)?;
    }
    if plan.parameters {
        update_parameters(
            &mut state.params,
            &config,
            data,
            &state.trajectories,
            &state.aux,
            priors,
            &mut state.rng,
        )?;
    }
    state.iteration += 1;
    let cache = ParamCache::new(&state.params)?;
    let mut joint = 0.0;
    let mut occupancy = vec![0; config.num_modes];
    for (y, traj) in data.iter().zip(&state.trajectories) {
        joint += joint_log_density_cached(&state.params, &cache, &config, y, traj)?;
        for &s in &traj.states {
            occupancy[s] += 1;
        }
    }
    Ok(IterationRecord {
        iteration: state.iteration,
        joint_log_density: joint,
        evidence_proxy: evidence,
        occupancy,
        jitter_retries: linalg::jitter_retries() - jitter_before,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub iterations: usize,
    /// Fraction of iterations discarded before votes are collected.
    pub burn_in_fraction: f64,
    pub scheme: InitScheme,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in_fraction: 0.5,
            scheme: InitScheme::I,
        }
    }
}

impl FitOptions {
    pub fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.iterations as f64).floor() as usize
    }
}

/// A chain together with its history, resumable from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub format: String,
    pub version: u32,
    pub options: FitOptions,
    pub prior: PriorConfig,
    pub state: ChainState,
    pub diagnostics: Vec<IterationRecord>,
    /// `votes[i][t][k]`: post-burn-in draws with `s_t = k` in sequence `i`.
    pub votes: Vec<Vec<Vec<u32>>>,
}

impl Chain {
    /// Initialize a chain from a seed.
    pub fn start(
        data: &[Sequence],
        config: &ModelConfig,
        prior: &PriorConfig,
        options: &FitOptions,
        seed: u64,
    ) -> Result<(Self, Priors)> {
        if !(0.0..1.0).contains(&options.burn_in_fraction) {
            return Err(Error::Config("burn-in fraction must lie in [0, 1)".into()));
        }
        let mut rng = SeedRng::seed_from_u64(seed);
        let init = initialize(data, config, prior, options.scheme, &mut rng)?;
        let votes = data.iter().map(|s| vec![vec![0; config.num_modes]; s.len()]).collect();
        let chain = Chain {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            options: options.clone(),
            prior: prior.clone(),
            state: ChainState {
                config: config.clone(),
                params: init.params,
                trajectories: init.trajectories,
                aux: init.aux,
                iteration: 0,
                rng,
            },
            diagnostics: Vec::new(),
            votes,
        };
        Ok((chain, init.priors))
    }

    pub fn is_finished(&self) -> bool {
        self.state.iteration >= self.options.iterations
    }

    /// One full sweep. On failure the chain is left at its last good state.
    pub fn step(&mut self, data: &[Sequence], priors: &Priors) -> Result<()> {
        let mut next = self.state.clone();
        let record = sweep(&mut next, data, priors, SweepPlan::default())?;
        self.state = next;
        if self.state.iteration > self.options.burn_in() {
            for (votes, traj) in self.votes.iter_mut().zip(&self.state.trajectories) {
                for (v, &s) in votes.iter_mut().zip(&traj.states) {
                    v[s] += 1;
                }
            }
        }
        self.diagnostics.push(record);
        Ok(())
    }

    /// Sweep until the configured iteration count, calling `after` once per sweep.
    pub fn run<F: FnMut(&Chain) -> Result<()>>(
        &mut self,
        data: &[Sequence],
        priors: &Priors,
        mut after: F,
    ) -> Result<()> {
        while !self.is_finished() {
            self.step(data, priors)?;
            after(self)?;
        }
        Ok(())
    }

    /// Per-time-step majority vote over post-burn-in draws; falls back to
    /// the current sample where no votes were recorded. Ties go to the
    /// lowest label.
    pub fn majority_states(&self) -> Vec<Vec<usize>> {
        self.votes
            .iter()
            .zip(&self.state.trajectories)
            .map(|(votes, traj)| {
                votes
                    .iter()
                    .zip(&traj.states)
                    .map(|(v, &cur)| {
                        let best = v.iter().copied().max().unwrap_or(0);
                        if best == 0 {
                            cur
                        } else {
                            v.iter().position(|&c| c == best).unwrap_or(cur)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn final_states(&self) -> Vec<Vec<usize>> {
        self.state.trajectories.iter().map(|t| t.states.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let chain: Chain = serde_json::from_str(text)?;
        if chain.format != CHECKPOINT_FORMAT || chain.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                chain.format, chain.version
            )));
        }
        chain.state.config.validate()?;
        chain.state.params.validate(&chain.state.config)?;
        Ok(chain)
    }

    /// Priors are a deterministic function of the data and settings, so a
    /// resumed chain recomputes rather than stores them.
    pub fn priors(&self, data: &[Sequence]) -> Result<Priors> {
        super::init::priors_from_data(&self.prior, &self.state.config, data)
    }

    pub fn params(&self) -> &ModelParams {
        &self.state.params
    }
}

/// Initialize and run a chain to completion.
pub fn fit(
    data: &[Sequence],
    config: &ModelConfig,
    prior: &PriorConfig,
    options: &FitOptions,
    seed: u64,
) -> Result<Chain> {
    let (mut chain, priors) = Chain::start(data, config, prior, options, seed)?;
    chain.run(data, &priors, |_| Ok(()))?;
    Ok(chain)
}

/// Seed of chain `index` derived from a base seed.
pub fn chain_seed(base: u64, index: usize) -> u64 {
    let mut rng = SeedRng::seed_from_u64(base);
    rng.set_stream(index as u64 + 1);
    rng.random()
}
