//! Parameter and trajectory types, the discrete transition kernel, forward
//! simulation, and the exact joint log-density.
//!
//! Indexing conventions: time is 0-based, modes are 0-based, and durations
//! carry their natural values `1..=D`. A duration `d > 1` counts down
//! deterministically; at `d = 1` the next step draws a fresh state and
//! duration.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_categorical, sample_mvn};
use crate::error::{Error, Result};
use crate::linalg::{self, Chol, Mat, Vector};
use crate::stick::StickRegression;

/// A time series of vectors.
pub type Sequence = Vec<Vector>;

/// Format tag written into serialized model documents.
pub const MODEL_FORMAT: &str = "redslds-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Slds,
    Rslds,
    Edslds,
    Redslds,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Slds, Variant::Rslds, Variant::Edslds, Variant::Redslds];

    /// `(recurrent_state, explicit_duration, recurrent_duration)`.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Variant::Slds => (false, false, false),
            Variant::Rslds => (true, false, false),
            Variant::Edslds => (false, true, false),
            Variant::Redslds => (true, true, true),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Slds => "slds",
            Variant::Rslds => "rslds",
            Variant::Edslds => "edslds",
            Variant::Redslds => "redslds",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slds" => Ok(Variant::Slds),
            "rslds" => Ok(Variant::Rslds),
            "edslds" => Ok(Variant::Edslds),
            "redslds" => Ok(Variant::Redslds),
            other => Err(Error::Config(format!(
                "unknown variant {other:?}; expected slds, rslds, edslds or redslds"
            ))),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_modes: usize,
    pub latent_dim: usize,
    pub obs_dim: usize,
    pub max_duration: usize,
    pub recurrent_state: bool,
    pub explicit_duration: bool,
    pub recurrent_duration: bool,
    /// One emission model pooled across all modes.
    #[serde(default = "default_true")]
    pub shared_emission: bool,
}

impl ModelConfig {
    pub fn for_variant(variant: Variant, num_modes: usize, latent_dim: usize, obs_dim: usize, max_duration: usize) -> Self {
        let (recurrent_state, explicit_duration, recurrent_duration) = variant.flags();
        Self {
            num_modes,
            latent_dim,
            obs_dim,
            max_duration,
            recurrent_state,
            explicit_duration,
            recurrent_duration,
            shared_emission: true,
        }
    }

    /// The named variant these flags select, if any.
    pub fn variant(&self) -> Option<Variant> {
        let flags = (self.recurrent_state, self.explicit_duration, self.recurrent_duration);
        Variant::ALL.into_iter().find(|v| v.flags() == flags)
    }

    /// Size of the duration support actually used: `D_max` with explicit
    /// durations, otherwise 1.
    pub fn durations(&self) -> usize {
        if self.explicit_duration {
            self.max_duration
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_modes == 0 || self.latent_dim == 0 || self.obs_dim == 0 || self.max_duration == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.recurrent_duration && !self.explicit_duration {
            return Err(Error::Config("recurrent_duration requires explicit_duration".into()));
        }
        Ok(())
    }
}

/// Linear dynamics and emission parameters of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    #[serde(with = "crate::serde_mat::matrix")]
    pub a_mat: Mat,
    #[serde(with = "crate::serde_mat::vector")]
    pub a_bias: Vector,
    #[serde(with = "crate::serde_mat::matrix")]
    pub q_cov: Mat,
    #[serde(with = "crate::serde_mat::matrix")]
    pub c_mat: Mat,
    #[serde(with = "crate::serde_mat::vector")]
    pub c_bias: Vector,
    #[serde(with = "crate::serde_mat::matrix")]
    pub s_cov: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub pi0: Vec<f64>,
    #[serde(with = "crate::serde_mat::vectors")]
    pub mu_init: Vec<Vector>,
    #[serde(with = "crate::serde_mat::matrices")]
    pub sigma_init: Vec<Mat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub modes: Vec<ModeParams>,
    pub init: InitParams,
    /// Row-stochastic transitions, used without recurrent state.
    #[serde(default, with = "crate::serde_mat::opt_matrix")]
    pub trans: Option<Mat>,
    #[serde(default)]
    pub state_reg: Option<Vec<StickRegression>>,
    #[serde(default)]
    pub dur_reg: Option<Vec<StickRegression>>,
    /// Categorical durations over `1..=D_max`, used with explicit but
    /// non-recurrent durations.
    #[serde(default)]
    pub dur_table: Option<Vec<Vec<f64>>>,
}

/// Versioned JSON container for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl ModelDocument {
    pub fn new(config: ModelConfig, params: ModelParams) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            config,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        doc.config.validate()?;
        doc.params.validate(&doc.config)?;
        Ok(doc)
    }
}

fn check_stochastic(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what} is not a probability vector")));
    }
    Ok(())
}

fn check_shape(m: &Mat, shape: (usize, usize), what: &str) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::dims(format!("{what} has shape {:?}, expected {shape:?}", m.shape())));
    }
    Ok(())
}

fn check_len(v: &Vector, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::dims(format!("{what} has length {}, expected {len}", v.len())));
    }
    Ok(())
}

impl ModelParams {
    /// Check shapes and that exactly the fields the variant needs are present.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let (k, m, n) = (config.num_modes, config.latent_dim, config.obs_dim);
        let dur = config.durations();
        if self.modes.len() != k {
            return Err(Error::dims(format!("{} mode blocks for {k} modes", self.modes.len())));
        }
        for (i, mode) in self.modes.iter().enumerate() {
            check_shape(&mode.a_mat, (m, m), &format!("A[{i}]"))?;
            check_len(&mode.a_bias, m, &format!("a[{i}]"))?;
            check_shape(&mode.q_cov, (m, m), &format!("Q[{i}]"))?;
            check_shape(&mode.c_mat, (n, m), &format!("C[{i}]"))?;
            check_len(&mode.c_bias, n, &format!("c[{i}]"))?;
            check_shape(&mode.s_cov, (n, n), &format!("S[{i}]"))?;
        }
        if self.init.pi0.len() != k || self.init.mu_init.len() != k || self.init.sigma_init.len() != k {
            return Err(Error::dims("initial-state parameters do not have one entry per mode"));
        }
        check_stochastic(&self.init.pi0, "pi0")?;
        for i in 0..k {
            check_len(&self.init.mu_init[i], m, "mu_init")?;
            check_shape(&self.init.sigma_init[i], (m, m), "sigma_init")?;
        }
        match (&self.trans, config.recurrent_state) {
            (Some(t), false) => {
                check_shape(t, (k, k), "transition matrix")?;
                for r in 0..k {
                    let row: Vec<f64> = t.row(r).iter().copied().collect();
                    check_stochastic(&row, "transition row")?;
                }
            }
            (None, false) => return Err(Error::invalid("variant needs a transition matrix")),
            (Some(_), true) => return Err(Error::invalid("recurrent variant must not carry a transition matrix")),
            (None, true) => {}
        }
        match (&self.state_reg, config.recurrent_state) {
            (Some(regs), true) => check_regs(regs, k, k, m, "state regression")?,
            (None, true) => return Err(Error::invalid("recurrent variant needs state regressions")),
            (Some(_), false) => return Err(Error::invalid("non-recurrent variant must not carry state regressions")),
            (None, false) => {}
        }
        let wants_dur_reg = config.recurrent_duration;
        let wants_table = config.explicit_duration && !config.recurrent_duration;
        match (&self.dur_reg, wants_dur_reg) {
            (Some(regs), true) => check_regs(regs, k, dur, m, "duration regression")?,
            (None, true) => return Err(Error::invalid("variant needs duration regressions")),
            (Some(_), false) => return Err(Error::invalid("variant must not carry duration regressions")),
            (None, false) => {}
        }
        match (&self.dur_table, wants_table) {
            (Some(tables), true) => {
                if tables.len() != k {
                    return Err(Error::dims("duration table needs one row per mode"));
                }
                for row in tables {
                    if row.len() != dur {
                        return Err(Error::dims("duration table row has the wrong support"));
                    }
                    check_stochastic(row, "duration table row")?;
                }
            }
            (None, true) => return Err(Error::invalid("variant needs duration tables")),
            (Some(_), false) => return Err(Error::invalid("variant must not carry duration tables")),
            (None, false) => {}
        }
        Ok(())
    }

    pub fn initial_state_log_probs(&self) -> Vec<f64> {
        self.init.pi0.iter().map(|p| p.ln()).collect()
    }

    /// `log p(s_t = · | s_{t-1} = prev, d_{t-1} = 1, x_{t-1})`.
    pub fn state_log_probs(&self, config: &ModelConfig, prev: usize, x_prev: &Vector) -> Vec<f64> {
        if config.recurrent_state {
            self.state_reg.as_ref().expect("validated")[prev].log_probs(x_prev)
        } else {
            let t = self.trans.as_ref().expect("validated");
            t.row(prev).iter().map(|p| p.ln()).collect()
        }
    }

    /// `log Dur_{mode, x}(·)` over `1..=D`.
    pub fn duration_log_probs(&self, config: &ModelConfig, mode: usize, x: &Vector) -> Vec<f64> {
        if config.recurrent_duration {
            self.dur_reg.as_ref().expect("validated")[mode].log_probs(x)
        } else if config.explicit_duration {
            self.dur_table.as_ref().expect("validated")[mode].iter().map(|p| p.ln()).collect()
        } else {
            vec![0.0]
        }
    }

    /// Law of the first duration, evaluated at the mode's initial mean.
    pub fn initial_duration_log_probs(&self, config: &ModelConfig, mode: usize) -> Vec<f64> {
        self.duration_log_probs(config, mode, &self.init.mu_init[mode])
    }

    /// Distribution over `(state, duration)` at time `t` given `(s, d)` and
    /// `x` at `t − 1`, as a `K × D` probability matrix (row = state,
    /// column = duration − 1).
    pub fn transition_kernel(&self, config: &ModelConfig, prev: (usize, usize), x_prev: &Vector) -> Mat {
        let (k, dur) = (config.num_modes, config.durations());
        let mut out = Mat::zeros(k, dur);
        let (s_prev, d_prev) = prev;
        if d_prev > 1 {
            out[(s_prev, d_prev - 2)] = 1.0;
            return out;
        }
        let state = self.state_log_probs(config, s_prev, x_prev);
        for (s, ls) in state.iter().enumerate() {
            let durs = self.duration_log_probs(config, s, x_prev);
            for (d, ld) in durs.iter().enumerate() {
                out[(s, d)] = (ls + ld).exp();
            }
        }
        out
    }
}

fn check_regs(regs: &[StickRegression], k: usize, categories: usize, m: usize, what: &str) -> Result<()> {
    if regs.len() != k {
        return Err(Error::dims(format!("{what} needs one block per mode")));
    }
    for r in regs {
        if r.categories() != categories || r.latent_dim() != m {
            return Err(Error::dims(format!(
                "{what} has {} categories over {} inputs, expected {categories} over {m}",
                r.categories(),
                r.latent_dim()
            )));
        }
    }
    Ok(())
}

/// Per-mode factorizations reused across a sweep.
#[derive(Debug, Clone)]
pub struct ModeCache {
    pub q_chol: Chol,
    pub q_inv: Mat,
    pub s_chol: Chol,
    pub s_inv: Mat,
    pub init_chol: Chol,
    pub init_inv: Mat,
}

#[derive(Debug, Clone)]
pub struct ParamCache {
    pub modes: Vec<ModeCache>,
}

impl ParamCache {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let mut modes = Vec::with_capacity(params.modes.len());
        for (k, mode) in params.modes.iter().enumerate() {
            let q_chol = linalg::cholesky(&mode.q_cov, &format!("Q[{k}]"))?;
            let s_chol = linalg::cholesky(&mode.s_cov, &format!("S[{k}]"))?;
            let init_chol = linalg::cholesky(&params.init.sigma_init[k], &format!("sigma_init[{k}]"))?;
            let mut q_inv = q_chol.inverse();
            linalg::symmetrize(&mut q_inv);
            let mut s_inv = s_chol.inverse();
            linalg::symmetrize(&mut s_inv);
            let mut init_inv = init_chol.inverse();
            linalg::symmetrize(&mut init_inv);
            modes.push(ModeCache {
                q_chol,
                q_inv,
                s_chol,
                s_inv,
                init_chol,
                init_inv,
            });
        }
        Ok(Self { modes })
    }
}

impl ModelParams {
    pub fn log_dynamics(&self, cache: &ParamCache, k: usize, x_prev: &Vector, x: &Vector) -> f64 {
        let mode = &self.modes[k];
        let mean = &mode.a_mat * x_prev + &mode.a_bias;
        linalg::mvn_logpdf_chol(x, &mean, &cache.modes[k].q_chol)
    }

    pub fn log_emission(&self, cache: &ParamCache, k: usize, x: &Vector, y: &Vector) -> f64 {
        let mode = &self.modes[k];
        let mean = &mode.c_mat * x + &mode.c_bias;
        linalg::mvn_logpdf_chol(y, &mean, &cache.modes[k].s_chol)
    }

    pub fn log_init(&self, cache: &ParamCache, k: usize, x: &Vector) -> f64 {
        linalg::mvn_logpdf_chol(x, &self.init.mu_init[k], &cache.modes[k].init_chol)
    }
}

/// Discrete states, durations and continuous latents of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTrajectory {
    pub states: Vec<usize>,
    pub durations: Vec<usize>,
    #[serde(with = "crate::serde_mat::vectors")]
    pub latents: Vec<Vector>,
}

impl LatentTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `d_{t-1} > 1` implies `s_t = s_{t-1}` and `d_t = d_{t-1} − 1`, and
    /// every duration lies in `1..=max_duration`.
    pub fn satisfies_countdown(&self, max_duration: usize) -> bool {
        countdown_holds(&self.states, &self.durations, max_duration)
    }
}

pub fn countdown_holds(states: &[usize], durations: &[usize], max_duration: usize) -> bool {
    if states.len() != durations.len() {
        return false;
    }
    if durations.iter().any(|&d| d == 0 || d > max_duration) {
        return false;
    }
    states.windows(2).zip(durations.windows(2)).all(|(s, d)| {
        d[0] == 1 || (s[1] == s[0] && d[1] == d[0] - 1)
    })
}

/// Durations implied by segment lengths of `states`, with segments longer
/// than `max_duration` split into consecutive pieces.
pub fn run_length_durations(states: &[usize], max_duration: usize) -> Vec<usize> {
    let mut out = vec![0; states.len()];
    let mut start = 0;
    while start < states.len() {
        let mut end = start + 1;
        while end < states.len() && states[end] == states[start] {
            end += 1;
        }
        let mut pos = start;
        while pos < end {
            let piece = (end - pos).min(max_duration);
            for (i, slot) in out[pos..pos + piece].iter_mut().enumerate() {
                *slot = piece - i;
            }
            pos += piece;
        }
        start = end;
    }
    out
}

fn sample_from_log<R: Rng + ?Sized>(log_p: &[f64], rng: &mut R) -> Result<usize> {
    let w: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
    sample_categorical(&w, rng).ok_or_else(|| Error::invalid("degenerate discrete distribution"))
}

/// Draw observations and latents of length `len` from the generative model.
pub fn simulate<R: Rng + ?Sized>(
    params: &ModelParams,
    config: &ModelConfig,
    len: usize,
    rng: &mut R,
) -> Result<(Sequence, LatentTrajectory)> {
    config.validate()?;
    params.validate(config)?;
    let mut states = Vec::with_capacity(len);
    let mut durations = Vec::with_capacity(len);
    let mut latents: Vec<Vector> = Vec::with_capacity(len);
    let mut obs = Vec::with_capacity(len);
    for t in 0..len {
        let (s, d, x) = if t == 0 {
            let s = sample_from_log(&params.initial_state_log_probs(), rng)?;
            let d = 1 + sample_from_log(&params.initial_duration_log_probs(config, s), rng)?;
            let x = sample_mvn(&params.init.mu_init[s], &params.init.sigma_init[s], rng)?;
            (s, d, x)
        } else {
            let (s_prev, d_prev) = (states[t - 1], durations[t - 1]);
            let x_prev = &latents[t - 1];
            let (s, d) = if d_prev > 1 {
                (s_prev, d_prev - 1)
            } else {
                let s = sample_from_log(&params.state_log_probs(config, s_prev, x_prev), rng)?;
                let d = 1 + sample_from_log(&params.duration_log_probs(config, s, x_prev), rng)?;
                (s, d)
            };
            let mode = &params.modes[s];
            let mean = &mode.a_mat * x_prev + &mode.a_bias;
            (s, d, sample_mvn(&mean, &mode.q_cov, rng)?)
        };
        let mode = &params.modes[s];
        let y_mean = &mode.c_mat * &x + &mode.c_bias;
        obs.push(sample_mvn(&y_mean, &mode.s_cov, rng)?);
        states.push(s);
        durations.push(d);
        latents.push(x);
    }
    Ok((
        obs,
        LatentTrajectory {
            states,
            durations,
            latents,
        },
    ))
}

/// Resample only the observations given latents (used by joint-distribution tests).
pub fn simulate_observations<R: Rng + ?Sized>(
    params: &ModelParams,
    traj: &LatentTrajectory,
    rng: &mut R,
) -> Result<Sequence> {
    traj.states
        .iter()
        .zip(&traj.latents)
        .map(|(&s, x)| {
            let mode = &params.modes[s];
            sample_mvn(&(&mode.c_mat * x + &mode.c_bias), &mode.s_cov, rng)
        })
        .collect()
}

/// `log p(y, x, s, d | θ)`. Countdown violations give `−∞`.
pub fn joint_log_density(
    params: &ModelParams,
    config: &ModelConfig,
    y: &[Vector],
    traj: &LatentTrajectory,
) -> Result<f64> {
    let cache = ParamCache::new(params)?;
    joint_log_density_cached(params, &cache, config, y, traj)
}

pub fn joint_log_density_cached(
    params: &ModelParams,
    cache: &ParamCache,
    config: &ModelConfig,
    y: &[Vector],
    traj: &LatentTrajectory,
) -> Result<f64> {
    let len = y.len();
    if traj.states.len() != len || traj.durations.len() != len || traj.latents.len() != len {
        return Err(Error::dims("trajectory and observations differ in length"));
    }
    if len == 0 {
        return Ok(0.0);
    }
    let (k, dur) = (config.num_modes, config.durations());
    if traj.states.iter().any(|&s| s >= k) || traj.durations.iter().any(|&d| d == 0 || d > dur) {
        return Ok(f64::NEG_INFINITY);
    }
    let s0 = traj.states[0];
    let mut lp = params.init.pi0[s0].ln()
        + params.initial_duration_log_probs(config, s0)[traj.durations[0] - 1]
        + params.log_init(cache, s0, &traj.latents[0])
        + params.log_emission(cache, s0, &traj.latents[0], &y[0]);
    for t in 1..len {
        let (s_prev, d_prev) = (traj.states[t - 1], traj.durations[t - 1]);
        let (s, d) = (traj.states[t], traj.durations[t]);
        let x_prev = &traj.latents[t - 1];
        if d_prev > 1 {
            if s != s_prev || d != d_prev - 1 {
                return Ok(f64::NEG_INFINITY);
            }
        } else {
            lp += params.state_log_probs(config, s_prev, x_prev)[s];
            lp += params.duration_log_probs(config, s, x_prev)[d - 1];
        }
        lp += params.log_dynamics(cache, s, x_prev, &traj.latents[t]);
        lp += params.log_emission(cache, s, &traj.latents[t], &y[t]);
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_lengths() {
        assert_eq!(run_length_durations(&[0, 0, 0, 1, 1], 50), vec![3, 2, 1, 2, 1]);
        assert_eq!(run_length_durations(&[2; 7], 3), vec![3, 2, 1, 3, 2, 1, 1]);
        assert!(countdown_holds(&[2; 7], &run_length_durations(&[2; 7], 3), 3));
    }

    #[test]
    fn countdown_detection() {
        assert!(countdown_holds(&[0, 0, 1], &[2, 1, 1], 2));
        assert!(!countdown_holds(&[0, 1, 1], &[3, 1, 1], 3));
        assert!(!countdown_holds(&[0, 0], &[3, 1], 3));
        assert!(!countdown_holds(&[0], &[4], 3));
    }

    #[test]
    fn variant_flags_round_trip() {
        for v in Variant::ALL {
            let c = ModelConfig::for_variant(v, 2, 1, 1, 3);
            assert_eq!(c.variant(), Some(v));
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("hmm".parse::<Variant>().is_err());
    }

    #[test]
    fn recurrent_duration_requires_explicit() {
        let mut c = ModelConfig::for_variant(Variant::Redslds, 2, 1, 1, 3);
        c.explicit_duration = false;
        assert!(c.validate().is_err());
    }
}
