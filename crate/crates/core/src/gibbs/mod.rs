//! Blocked Gibbs sampling over discrete paths, latents, Pólya-gamma
//! auxiliaries and parameters.

mod arhmm;
mod chain;
mod init;
mod priors;
mod updates;

pub use arhmm::{fit_arhmm, ArhmmFit, ArhmmOptions, ArhmmParams};
pub use chain::{
    chain_seed, fit, sweep, Chain, ChainState, FitOptions, IterationRecord, SweepPlan, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use init::{fit_pca, initialize, priors_from_data, InitScheme, InitialState, Pca, FROZEN_SWEEPS};
pub use priors::{sample_params_from_prior, PriorConfig, Priors};
pub use updates::{
    update_discrete_tables, update_duration_regression, update_dynamics, update_emissions, update_initial_latents,
    update_parameters, update_state_regression,
};
