//! Forward filtering and backward sampling over the `(state, duration)`
//! lattice, conditioned on the continuous latents.
//!
//! The lattice has `K · D` cells per step but the recursion never forms the
//! dense `(KD)²` kernel: a cell `(s, d)` is reached either by counting down
//! from `(s, d + 1)` or by a fresh draw out of some `(s', 1)`.

use rand::Rng;

use crate::dist::sample_categorical;
use crate::error::{Error, Result};
use crate::linalg::{logsumexp, Mat, Vector};
use crate::model::{LatentTrajectory, ModelConfig, ModelParams, ParamCache};

/// Per-step quantities the recursion needs, all in the log domain.
///
/// `log_trans[t − 1]` is the `K × K` matrix `log p(s_t = j | s_{t−1} = i)`
/// (row `i`, column `j`) for a fresh draw at `t`, and `log_dur[t − 1]` the
/// `K × D` matrix `log Dur(d_t | s_t)`. A vector of length one is reused for
/// every step.
#[derive(Debug, Clone)]
pub struct DiscreteInputs {
    pub log_init_state: Vec<f64>,
    pub log_init_dur: Mat,
    pub log_evidence: Mat,
    pub log_trans: Vec<Mat>,
    pub log_dur: Vec<Mat>,
}

impl DiscreteInputs {
    pub fn len(&self) -> usize {
        self.log_evidence.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_states(&self) -> usize {
        self.log_evidence.ncols()
    }

    pub fn durations(&self) -> usize {
        self.log_init_dur.ncols()
    }

    fn trans(&self, t: usize) -> &Mat {
        if self.log_trans.len() == 1 {
            &self.log_trans[0]
        } else {
            &self.log_trans[t - 1]
        }
    }

    fn dur(&self, t: usize) -> &Mat {
        if self.log_dur.len() == 1 {
            &self.log_dur[0]
        } else {
            &self.log_dur[t - 1]
        }
    }

    fn validate(&self) -> Result<()> {
        let (len, k, d) = (self.len(), self.num_states(), self.durations());
        if self.log_init_state.len() != k || self.log_init_dur.nrows() != k {
            return Err(Error::dims("initial laws do not match the number of states"));
        }
        let steps = len.saturating_sub(1);
        for (list, cols, what) in [(&self.log_trans, k, "transition"), (&self.log_dur, d, "duration")] {
            if steps > 0 && list.len() != 1 && list.len() != steps {
                return Err(Error::dims(format!("{what} kernels cover {} of {steps} steps", list.len())));
            }
            if list.iter().any(|m| m.shape() != (k, cols)) {
                return Err(Error::dims(format!("{what} kernel has the wrong shape")));
            }
        }
        Ok(())
    }

    /// Inputs for one sequence given the current latents and parameters.
    pub fn from_model(
        params: &ModelParams,
        cache: &ParamCache,
        config: &ModelConfig,
        y: &[Vector],
        x: &[Vector],
    ) -> Result<Self> {
        let (len, k, dur) = (y.len(), config.num_modes, config.durations());
        if x.len() != len {
            return Err(Error::dims("latents and observations differ in length"));
        }
        let mut log_evidence = Mat::zeros(len, k);
        for t in 0..len {
            for s in 0..k {
                let dyn_term = if t == 0 {
                    params.log_init(cache, s, &x[0])
                } else {
                    params.log_dynamics(cache, s, &x[t - 1], &x[t])
                };
                log_evidence[(t, s)] = dyn_term + params.log_emission(cache, s, &x[t], &y[t]);
            }
        }
        let mut log_init_dur = Mat::zeros(k, dur);
        for s in 0..k {
            for (d, l) in params.initial_duration_log_probs(config, s).into_iter().enumerate() {
                log_init_dur[(s, d)] = l;
            }
        }
        let trans_at = |x_prev: &Vector| {
            let mut m = Mat::zeros(k, k);
            for i in 0..k {
                for (j, l) in params.state_log_probs(config, i, x_prev).into_iter().enumerate() {
                    m[(i, j)] = l;
                }
            }
            m
        };
        let dur_at = |x_prev: &Vector| {
            let mut m = Mat::zeros(k, dur);
            for s in 0..k {
                for (d, l) in params.duration_log_probs(config, s, x_prev).into_iter().enumerate() {
                    m[(s, d)] = l;
                }
            }
            m
        };
        let zero = Vector::zeros(config.latent_dim);
        let log_trans = if config.recurrent_state {
            x[..len.saturating_sub(1)].iter().map(trans_at).collect()
        } else {
            vec![trans_at(&zero)]
        };
        let log_dur = if config.recurrent_duration {
            x[..len.saturating_sub(1)].iter().map(dur_at).collect()
        } else {
            vec![dur_at(&zero)]
        };
        Ok(Self {
            log_init_state: params.initial_state_log_probs(),
            log_init_dur,
            log_evidence,
            log_trans,
            log_dur,
        })
    }
}

/// Normalized forward messages: `alpha[t][(s, d − 1)] ∝ p(s_t, d_t, evidence_{0..=t})`.
#[derive(Debug, Clone)]
pub struct ForwardMessages {
    pub alpha: Vec<Mat>,
    /// `log_norm[t]` is the log of the factor removed when normalizing step `t`.
    pub log_norm: Vec<f64>,
}

impl ForwardMessages {
    /// Log-likelihood of the evidence with the discrete path marginalized.
    pub fn log_likelihood(&self) -> f64 {
        self.log_norm.iter().sum()
    }
}

fn normalize_with_evidence(pred: &mut Mat, log_e: &[f64]) -> Option<f64> {
    let e_max = log_e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !e_max.is_finite() {
        return None;
    }
    for (s, le) in log_e.iter().enumerate() {
        let w = (le - e_max).exp();
        pred.row_mut(s).scale_mut(w);
    }
    let total = pred.sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    *pred /= total;
    Some(total.ln() + e_max)
}

fn exp_mat(m: &Mat) -> Mat {
    m.map(f64::exp)
}

/// Run the forward recursion.
pub fn forward(inputs: &DiscreteInputs) -> Result<ForwardMessages> {
    inputs.validate()?;
    let (len, k, dmax) = (inputs.len(), inputs.num_states(), inputs.durations());
    let mut alpha = Vec::with_capacity(len);
    let mut log_norm = Vec::with_capacity(len);
    for t in 0..len {
        let log_e: Vec<f64> = inputs.log_evidence.row(t).iter().copied().collect();
        let mut pred = Mat::zeros(k, dmax);
        if t == 0 {
            let dur = exp_mat(&inputs.log_init_dur);
            for s in 0..k {
                let p = inputs.log_init_state[s].exp();
                for d in 0..dmax {
                    pred[(s, d)] = p * dur[(s, d)];
                }
            }
        } else {
            let prev: &Mat = &alpha[t - 1];
            let trans = exp_mat(inputs.trans(t));
            let dur = exp_mat(inputs.dur(t));
            let ends: Vector = prev.column(0).into_owned();
            let fresh = trans.transpose() * &ends;
            for s in 0..k {
                for d in 0..dmax {
                    let carry = if d + 1 < dmax { prev[(s, d + 1)] } else { 0.0 };
                    pred[(s, d)] = carry + fresh[s] * dur[(s, d)];
                }
            }
        }
        let ln = normalize_with_evidence(&mut pred, &log_e).ok_or_else(|| Error::Numerical {
            sequence: 0,
            t,
            message: "discrete forward pass lost all probability mass".into(),
        })?;
        alpha.push(pred);
        log_norm.push(ln);
    }
    Ok(ForwardMessages { alpha, log_norm })
}

/// Draw `(s_t, d_t)` for all `t` from their joint posterior.
pub fn backward_sample<R: Rng + ?Sized>(
    inputs: &DiscreteInputs,
    messages: &ForwardMessages,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (len, k, dmax) = (inputs.len(), inputs.num_states(), inputs.durations());
    let mut states = vec![0; len];
    let mut durations = vec![0; len];
    if len == 0 {
        return Ok((states, durations));
    }
    let last = &messages.alpha[len - 1];
    let flat: Vec<f64> = (0..k * dmax).map(|i| last[(i / dmax, i % dmax)]).collect();
    let idx = sample_categorical(&flat, rng).ok_or_else(|| Error::Numerical {
        sequence: 0,
        t: len - 1,
        message: "degenerate final filtering distribution".into(),
    })?;
    states[len - 1] = idx / dmax;
    durations[len - 1] = idx % dmax + 1;
    let mut weights = vec![0.0; k + 1];
    for t in (0..len - 1).rev() {
        let (s_next, d_next) = (states[t + 1], durations[t + 1]);
        let a = &messages.alpha[t];
        let log_tr = inputs.trans(t + 1);
        let log_du = inputs.dur(t + 1)[(s_next, d_next - 1)];
        for (sp, w) in weights.iter_mut().take(k).enumerate() {
            *w = a[(sp, 0)] * (log_tr[(sp, s_next)] + log_du).exp();
        }
        weights[k] = if d_next < dmax { a[(s_next, d_next)] } else { 0.0 };
        let pick = sample_categorical(&weights, rng).ok_or_else(|| Error::Numerical {
            sequence: 0,
            t,
            message: "degenerate backward sampling weights".into(),
        })?;
        if pick == k {
            states[t] = s_next;
            durations[t] = d_next + 1;
        } else {
            states[t] = pick;
            durations[t] = 1;
        }
    }
    Ok((states, durations))
}

/// Posterior marginals `p(s_t, d_t | evidence)` from a scaled backward pass.
pub fn smoothed_marginals(inputs: &DiscreteInputs, messages: &ForwardMessages) -> Vec<Mat> {
    let (len, k, dmax) = (inputs.len(), inputs.num_states(), inputs.durations());
    if len == 0 {
        return Vec::new();
    }
    let mut beta = vec![Mat::from_element(k, dmax, 1.0); len];
    for t in (0..len - 1).rev() {
        let next = &beta[t + 1];
        let scale = (-messages.log_norm[t + 1]).exp();
        let e: Vec<f64> = inputs.log_evidence.row(t + 1).iter().map(|l| l.exp()).collect();
        let trans = exp_mat(inputs.trans(t + 1));
        let dur = exp_mat(inputs.dur(t + 1));
        let mut fresh = vec![0.0; k];
        for (s2, f) in fresh.iter_mut().enumerate() {
            *f = (0..dmax).map(|d2| dur[(s2, d2)] * next[(s2, d2)]).sum::<f64>() * e[s2];
        }
        let mut cur = Mat::zeros(k, dmax);
        for s in 0..k {
            cur[(s, 0)] = (0..k).map(|s2| trans[(s, s2)] * fresh[s2]).sum::<f64>() * scale;
            for d in 1..dmax {
                cur[(s, d)] = e[s] * next[(s, d - 1)] * scale;
            }
        }
        beta[t] = cur;
    }
    messages
        .alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            let mut m = a.component_mul(b);
            let total = m.sum();
            if total > 0.0 {
                m /= total;
            }
            m
        })
        .collect()
}

/// Resample the discrete path of `traj` in place; returns the marginal
/// log-likelihood of the continuous evidence.
pub fn resample_discrete<R: Rng + ?Sized>(
    params: &ModelParams,
    cache: &ParamCache,
    config: &ModelConfig,
    y: &[Vector],
    traj: &mut LatentTrajectory,
    rng: &mut R,
) -> Result<f64> {
    let inputs = DiscreteInputs::from_model(params, cache, config, y, &traj.latents)?;
    let messages = forward(&inputs)?;
    let (states, durations) = backward_sample(&inputs, &messages, rng)?;
    traj.states = states;
    traj.durations = durations;
    Ok(messages.log_likelihood())
}

/// `log p(path, evidence)` for one explicit path, used by enumeration checks.
pub fn path_log_weight(inputs: &DiscreteInputs, states: &[usize], durations: &[usize]) -> f64 {
    let len = inputs.len();
    let dmax = inputs.durations();
    if states.len() != len || durations.len() != len || durations.iter().any(|&d| d == 0 || d > dmax) {
        return f64::NEG_INFINITY;
    }
    let mut lp = 0.0;
    for t in 0..len {
        let (s, d) = (states[t], durations[t]);
        lp += inputs.log_evidence[(t, s)];
        if t == 0 {
            lp += inputs.log_init_state[s] + inputs.log_init_dur[(s, d - 1)];
        } else if durations[t - 1] > 1 {
            if s != states[t - 1] || d != durations[t - 1] - 1 {
                return f64::NEG_INFINITY;
            }
        } else {
            lp += inputs.trans(t)[(states[t - 1], s)] + inputs.dur(t)[(s, d - 1)];
        }
    }
    lp
}

/// `log Σ_paths` by brute-force enumeration. Exponential; for tests only.
pub fn enumerate_log_likelihood(inputs: &DiscreteInputs) -> f64 {
    let mut terms = Vec::new();
    enumerate_paths(inputs, |s, d| terms.push(path_log_weight(inputs, s, d)));
    logsumexp(&terms)
}

/// Visit every `(states, durations)` path of the lattice.
pub fn enumerate_paths<F: FnMut(&[usize], &[usize])>(inputs: &DiscreteInputs, mut visit: F) {
    let (len, k, dmax) = (inputs.len(), inputs.num_states(), inputs.durations());
    let cells = k * dmax;
    let total = cells.checked_pow(len as u32).expect("lattice too large to enumerate");
    let mut states = vec![0; len];
    let mut durations = vec![0; len];
    for code in 0..total {
        let mut c = code;
        for t in 0..len {
            let cell = c % cells;
            c /= cells;
            states[t] = cell / dmax;
            durations[t] = cell % dmax + 1;
        }
        visit(&states, &durations);
    }
}
