//! Stick-breaking multinomial link with Pólya-gamma augmentation.
//!
//! Categories are 0-based here: an `L`-category outcome lies in `0..L` and
//! the logit vector has `L − 1` entries. Stick `k` is "taken" with
//! probability `σ(v_k)` after all earlier sticks were declined.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_pg, InfoGaussian, PGParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// `log σ(z)` without overflow for large `|z|`.
pub fn log_sigmoid(z: f64) -> f64 {
    -(-z.abs()).exp().ln_1p() - (-z).max(0.0)
}

/// Map `L − 1` logits to an `L`-category probability vector.
pub fn pi_sb(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut log_rest = 0.0;
    for &vk in v {
        out.push((log_sigmoid(vk) + log_rest).exp());
        log_rest += log_sigmoid(-vk);
    }
    out.push(log_rest.exp());
    out
}

/// Log-probabilities of all `L` categories.
pub fn log_pi_sb(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut log_rest = 0.0;
    for &vk in v {
        out.push(log_sigmoid(vk) + log_rest);
        log_rest += log_sigmoid(-vk);
    }
    out.push(log_rest);
    out
}

/// `log π_SB(v)[outcome]` evaluated from the product form.
pub fn log_pmf_sb(outcome: usize, v: &[f64]) -> Result<f64> {
    let categories = v.len() + 1;
    if outcome >= categories {
        return Err(Error::invalid(format!(
            "outcome {outcome} outside 0..{categories}"
        )));
    }
    let mut lp = 0.0;
    for (k, &vk) in v.iter().enumerate() {
        if outcome == k {
            lp += log_sigmoid(vk);
            break;
        }
        lp += log_sigmoid(-vk);
    }
    Ok(lp)
}

/// `κ_k = I[outcome = k] − ½ I[outcome ≥ k]` for `k` in `0..L−1`.
pub fn kappa_vec(outcome: usize, categories: usize) -> Result<Vec<f64>> {
    if outcome >= categories {
        return Err(Error::invalid(format!(
            "outcome {outcome} invalid for {categories} categories"
        )));
    }
    Ok((0..categories - 1)
        .map(|k| {
            let eq = if outcome == k { 1.0 } else { 0.0 };
            let ge = if outcome >= k { 1.0 } else { 0.0 };
            eq - 0.5 * ge
        })
        .collect())
}

/// Stick-breaking regression `v = R x + r` with `R` of shape `(L−1) × M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickRegression {
    #[serde(with = "crate::serde_mat::matrix")]
    pub weights: Mat,
    #[serde(with = "crate::serde_mat::vector")]
    pub bias: Vector,
}

impl StickRegression {
    pub fn zeros(categories: usize, latent_dim: usize) -> Self {
        Self {
            weights: Mat::zeros(categories.saturating_sub(1), latent_dim),
            bias: Vector::zeros(categories.saturating_sub(1)),
        }
    }

    pub fn new(weights: Mat, bias: Vector) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::dims(format!(
                "stick weights have {} rows but bias has {} entries",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("stick regression entries must be finite"));
        }
        Ok(Self { weights, bias })
    }

    pub fn categories(&self) -> usize {
        self.bias.len() + 1
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, x: &Vector) -> Vec<f64> {
        (&self.weights * x + &self.bias).iter().copied().collect()
    }

    pub fn probs(&self, x: &Vector) -> Vec<f64> {
        pi_sb(&self.logits(x))
    }

    pub fn log_probs(&self, x: &Vector) -> Vec<f64> {
        log_pi_sb(&self.logits(x))
    }

    /// Row `k` with its bias appended, as one `(M+1)`-vector.
    pub fn augmented_row(&self, k: usize) -> Vector {
        let m = self.latent_dim();
        let mut row = Vector::zeros(m + 1);
        for j in 0..m {
            row[j] = self.weights[(k, j)];
        }
        row[m] = self.bias[k];
        row
    }

    pub fn set_augmented_row(&mut self, k: usize, row: &Vector) {
        let m = self.latent_dim();
        for j in 0..m {
            self.weights[(k, j)] = row[j];
        }
        self.bias[k] = row[m];
    }
}

/// Pólya-gamma auxiliaries for one categorical outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PGAuxiliaries {
    pub omega: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl PGAuxiliaries {
    /// Precision `Rᵀ Ω R` and information `Rᵀ(κ − Ω r)` this outcome
    /// contributes to the regressor `x`.
    pub fn regressor_potential(&self, reg: &StickRegression) -> (Mat, Vector) {
        let m = reg.latent_dim();
        let mut lambda = Mat::zeros(m, m);
        let mut theta = Vector::zeros(m);
        for (k, (&w, &kap)) in self.omega.iter().zip(&self.kappa).enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = reg.weights.row(k).transpose();
            lambda.ger(w, &row, &row, 1.0);
            theta.axpy(kap - w * reg.bias[k], &row, 1.0);
        }
        (lambda, theta)
    }
}

/// Draw `ω_k ~ PG(I[outcome ≥ k], v_k)`; sticks never reached get exact zeros.
pub fn sample_pg_aux<R: Rng + ?Sized>(outcome: usize, v: &[f64], rng: &mut R) -> Result<PGAuxiliaries> {
    let kappa = kappa_vec(outcome, v.len() + 1)?;
    let mut omega = Vec::with_capacity(v.len());
    for (k, &vk) in v.iter().enumerate() {
        let b = u32::from(outcome >= k);
        omega.push(sample_pg(PGParams::new(b, vk), rng)?);
    }
    Ok(PGAuxiliaries { omega, kappa })
}

/// Running precision-weighted least squares for one augmented stick row.
#[derive(Debug, Clone)]
pub struct RowStats {
    pub lambda: Mat,
    pub theta: Vector,
}

impl RowStats {
    pub fn new(dim: usize) -> Self {
        Self {
            lambda: Mat::zeros(dim, dim),
            theta: Vector::zeros(dim),
        }
    }

    /// Add the pseudo-observation `κ/ω` with precision `ω` at regressor `(x, 1)`.
    pub fn add(&mut self, x_aug: &Vector, kappa: f64, omega: f64) {
        self.lambda.ger(omega, x_aug, x_aug, 1.0);
        self.theta.axpy(kappa, x_aug, 1.0);
    }
}

/// Gaussian posterior over one augmented row `(R_k, r_k)` given PG-augmented data.
pub fn regression_row_posterior(
    prior_mean: &Vector,
    prior_cov: &Mat,
    data: &[(Vector, f64, f64)],
) -> Result<InfoGaussian> {
    let dim = prior_mean.len();
    let mut stats = RowStats::new(dim);
    for (x, kappa, omega) in data {
        if x.len() + 1 != dim {
            return Err(Error::dims(format!(
                "regressor of length {} for a row of length {dim}",
                x.len()
            )));
        }
        if !(*omega > 0.0) {
            return Err(Error::invalid("regression data must have positive omega"));
        }
        stats.add(&linalg::augment(x), *kappa, *omega);
    }
    row_posterior_from_stats(prior_mean, prior_cov, &stats)
}

pub fn row_posterior_from_stats(prior_mean: &Vector, prior_cov: &Mat, stats: &RowStats) -> Result<InfoGaussian> {
    let prior = InfoGaussian::from_moment(prior_mean, prior_cov)?;
    let mut lambda = prior.lambda + &stats.lambda;
    linalg::symmetrize(&mut lambda);
    Ok(InfoGaussian {
        theta: prior.theta + &stats.theta,
        lambda,
    })
}
