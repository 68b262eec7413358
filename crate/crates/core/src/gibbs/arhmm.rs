//! Autoregressive HMM fitted by expectation-maximization, used to seed the
//! discrete states.
//!
//! Emissions are AR(1): `x_t | x_{t−1}, s_t = k ~ N(B_k (x_{t−1}, 1), Σ_k)`.
//! The likelihood conditions on the first point of every sequence, whose
//! decoded state is copied from its successor.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, logsumexp, Mat, Vector};

const COV_FLOOR: f64 = 1e-8;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ArhmmOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for ArhmmOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 200,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArhmmParams {
    pub pi0: Vec<f64>,
    pub trans: Mat,
    /// `M × (M + 1)` coefficients per state.
    pub coef: Vec<Mat>,
    pub cov: Vec<Mat>,
}

#[derive(Debug, Clone)]
pub struct ArhmmFit {
    pub params: ArhmmParams,
    pub states: Vec<Vec<usize>>,
    pub log_likelihood: f64,
    /// Log-likelihood at every EM iterate.
    pub trace: Vec<f64>,
}

/// `log p(x_t | x_{t−1}, k)` for `t ≥ 1`, as a `(T − 1) × K` matrix.
fn emission_table(params: &ArhmmParams, x: &[Vector]) -> Result<Mat> {
    let k = params.coef.len();
    let mut out = Mat::zeros(x.len().saturating_sub(1), k);
    for s in 0..k {
        let chol = linalg::cholesky(&params.cov[s], "ARHMM covariance")?;
        for t in 1..x.len() {
            let mean = &params.coef[s] * linalg::augment(&x[t - 1]);
            out[(t - 1, s)] = linalg::mvn_logpdf_chol(&x[t], &mean, &chol);
        }
    }
    Ok(out)
}

struct Posterior {
    gamma: Mat,
    xi_sum: Mat,
    log_lik: f64,
}

fn forward_backward(params: &ArhmmParams, log_e: &Mat) -> Posterior {
    let (len, k) = log_e.shape();
    let mut alpha = Mat::zeros(len, k);
    let mut log_c = vec![0.0; len];
    for t in 0..len {
        let mut row = Vec::with_capacity(k);
        for s in 0..k {
            let prior = if t == 0 {
                params.pi0[s]
            } else {
                (0..k).map(|sp| alpha[(t - 1, sp)] * params.trans[(sp, s)]).sum()
            };
            row.push(prior.ln() + log_e[(t, s)]);
        }
        let lz = logsumexp(&row);
        log_c[t] = lz;
        for s in 0..k {
            alpha[(t, s)] = (row[s] - lz).exp();
        }
    }
    let mut beta = Mat::from_element(len, k, 1.0);
    for t in (0..len.saturating_sub(1)).rev() {
        for s in 0..k {
            beta[(t, s)] = (0..k)
                .map(|s2| params.trans[(s, s2)] * (log_e[(t + 1, s2)] - log_c[t + 1]).exp() * beta[(t + 1, s2)])
                .sum();
        }
    }
    let mut gamma = alpha.component_mul(&beta);
    for mut row in gamma.row_iter_mut() {
        let z: f64 = row.sum();
        if z > 0.0 {
            row /= z;
        }
    }
    let mut xi_sum = Mat::zeros(k, k);
    for t in 1..len {
        let scale = (-log_c[t]).exp();
        for i in 0..k {
            for j in 0..k {
                xi_sum[(i, j)] += alpha[(t - 1, i)] * params.trans[(i, j)] * log_e[(t, j)].exp() * scale * beta[(t, j)];
            }
        }
    }
    Posterior {
        gamma,
        xi_sum,
        log_lik: log_c.iter().sum(),
    }
}

fn m_step(prev: &ArhmmParams, series: &[Vec<Vector>], posts: &[Posterior]) -> ArhmmParams {
    let k = prev.coef.len();
    let m = prev.coef[0].nrows();
    let mut pi0 = vec![0.0; k];
    let mut trans = Mat::zeros(k, k);
    let mut xx = vec![Mat::zeros(m + 1, m + 1); k];
    let mut yx = vec![Mat::zeros(m, m + 1); k];
    let mut yy = vec![Mat::zeros(m, m); k];
    let mut w = vec![0.0; k];
    for (x, post) in series.iter().zip(posts) {
        if post.gamma.nrows() == 0 {
            continue;
        }
        for s in 0..k {
            pi0[s] += post.gamma[(0, s)];
        }
        trans += &post.xi_sum;
        for t in 1..x.len() {
            let reg = linalg::augment(&x[t - 1]);
            for s in 0..k {
                let g = post.gamma[(t - 1, s)];
                if g == 0.0 {
                    continue;
                }
                xx[s].ger(g, &reg, &reg, 1.0);
                yx[s].ger(g, &x[t], &reg, 1.0);
                yy[s].ger(g, &x[t], &x[t], 1.0);
                w[s] += g;
            }
        }
    }
    let total: f64 = pi0.iter().sum();
    let pi0 = if total > 0.0 { pi0.iter().map(|p| p / total).collect() } else { prev.pi0.clone() };
    for i in 0..k {
        let z: f64 = trans.row(i).sum();
        if z > 0.0 {
            let mut row = trans.row_mut(i);
            row /= z;
        } else {
            trans.set_row(i, &prev.trans.row(i));
        }
    }
    let mut coef = prev.coef.clone();
    let mut cov = prev.cov.clone();
    for s in 0..k {
        if w[s] < 1e-10 {
            continue;
        }
        let gram = &xx[s] + Mat::identity(m + 1, m + 1) * RIDGE;
        let Some(inv) = gram.try_inverse() else { continue };
        let b = &yx[s] * inv;
        let mut c = (&yy[s] - &b * yx[s].transpose() - &yx[s] * b.transpose() + &b * &xx[s] * b.transpose()) / w[s];
        linalg::symmetrize(&mut c);
        let eig = c.clone().symmetric_eigen();
        let floored = eig.eigenvalues.map(|e| e.max(COV_FLOOR));
        c = &eig.eigenvectors * Mat::from_diagonal(&floored) * eig.eigenvectors.transpose();
        linalg::symmetrize(&mut c);
        coef[s] = b;
        cov[s] = c;
    }
    ArhmmParams { pi0, trans, coef, cov }
}

/// Features `(x_t, x_{t+1} − x_t)` of every transition, standardized.
fn transition_features(series: &[Vec<Vector>]) -> Vec<Vector> {
    let mut feats: Vec<Vector> = series
        .iter()
        .flat_map(|x| {
            x.windows(2).map(|w| {
                let m = w[0].len();
                let mut f = Vector::zeros(2 * m);
                f.rows_mut(0, m).copy_from(&w[0]);
                f.rows_mut(m, m).copy_from(&(&w[1] - &w[0]));
                f
            })
        })
        .collect();
    let dim = feats[0].len();
    let count = feats.len() as f64;
    let mean = feats.iter().fold(Vector::zeros(dim), |a, f| a + f) / count;
    let var = feats.iter().fold(Vector::zeros(dim), |a, f| a + (f - &mean).map(|v| v * v)) / count;
    let scale = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    for f in &mut feats {
        *f = (&*f - &mean).component_div(&scale);
    }
    feats
}

/// k-means++ seeding followed by Lloyd iterations.
fn kmeans<R: Rng + ?Sized>(points: &[Vector], k: usize, rng: &mut R) -> Vec<usize> {
    let dist2 = |a: &Vector, b: &Vector| (a - b).norm_squared();
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d.iter()
                .position(|&w| {
                    u -= w;
                    u <= 0.0
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
    }
    let mut labels = vec![0; points.len()];
    for _ in 0..50 {
        let mut changed = false;
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let best = (0..k)
                .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])))
                .unwrap_or(0);
            changed |= best != *l;
            *l = best;
        }
        let dim = points[0].len();
        let mut sums = vec![Vector::zeros(dim); k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] += p;
            counts[l] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = &sums[j] / counts[j] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Hard responsibilities from a randomized clustering of the transitions.
fn random_start<R: Rng + ?Sized>(series: &[Vec<Vector>], k: usize, rng: &mut R) -> ArhmmParams {
    let m = series[0][0].len();
    let labels = kmeans(&transition_features(series), k, rng);
    let mut offset = 0;
    let mut hard: Vec<Posterior> = Vec::with_capacity(series.len());
    for x in series {
        let len = x.len().saturating_sub(1);
        let own = &labels[offset..offset + len];
        offset += len;
        let mut gamma = Mat::zeros(len, k);
        for (t, &s) in own.iter().enumerate() {
            gamma[(t, s)] = 1.0;
        }
        let mut xi_sum = Mat::from_element(k, k, 1.0);
        for w in own.windows(2) {
            xi_sum[(w[0], w[1])] += 1.0;
        }
        hard.push(Posterior {
            gamma,
            xi_sum,
            log_lik: 0.0,
        });
    }
    let base = ArhmmParams {
        pi0: vec![1.0 / k as f64; k],
        trans: Mat::from_element(k, k, 1.0 / k as f64),
        coef: vec![Mat::zeros(m, m + 1); k],
        cov: vec![Mat::identity(m, m); k],
    };
    m_step(&base, series, &hard)
}

fn viterbi(params: &ArhmmParams, log_e: &Mat) -> Vec<usize> {
    let (len, k) = log_e.shape();
    if len == 0 {
        return Vec::new();
    }
    let log_t = params.trans.map(f64::ln);
    let mut score: Vec<f64> = (0..k).map(|s| params.pi0[s].ln() + log_e[(0, s)]).collect();
    let mut back = vec![vec![0usize; k]; len];
    for t in 1..len {
        let mut next = vec![f64::NEG_INFINITY; k];
        for s in 0..k {
            for sp in 0..k {
                let v = score[sp] + log_t[(sp, s)];
                if v > next[s] {
                    next[s] = v;
                    back[t][s] = sp;
                }
            }
            next[s] += log_e[(t, s)];
        }
        score = next;
    }
    let mut best = 0;
    for s in 1..k {
        if score[s] > score[best] {
            best = s;
        }
    }
    let mut path = vec![best; len];
    for t in (1..len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

fn em<R: Rng + ?Sized>(series: &[Vec<Vector>], k: usize, options: &ArhmmOptions, rng: &mut R) -> Result<ArhmmFit> {
    let mut params = random_start(series, k, rng);
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut posts;
    loop {
        let tables = series.iter().map(|x| emission_table(&params, x)).collect::<Result<Vec<_>>>()?;
        posts = tables.iter().map(|e| forward_backward(&params, e)).collect::<Vec<_>>();
        let ll: f64 = posts.iter().map(|p| p.log_lik).sum();
        if !ll.is_finite() {
            return Err(Error::Numerical {
                sequence: 0,
                t: 0,
                message: "ARHMM log-likelihood is not finite".into(),
            });
        }
        trace.push(ll);
        let converged = prev.is_finite() && (ll - prev).abs() <= options.rel_tol * ll.abs().max(1.0);
        if converged || trace.len() > options.max_iters {
            let states = series
                .iter()
                .zip(&tables)
                .map(|(x, e)| {
                    let mut path = viterbi(&params, e);
                    if x.len() == 1 {
                        path = vec![0];
                    } else {
                        path.insert(0, path[0]);
                    }
                    path
                })
                .collect();
            return Ok(ArhmmFit {
                params,
                states,
                log_likelihood: ll,
                trace,
            });
        }
        prev = ll;
        params = m_step(&params, series, &posts);
    }
}

/// Fit a `K`-state AR(1) HMM with several random restarts and return the
/// best fit by log-likelihood, with its Viterbi paths.
pub fn fit_arhmm<R: Rng + ?Sized>(
    series: &[Vec<Vector>],
    k: usize,
    options: &ArhmmOptions,
    rng: &mut R,
) -> Result<ArhmmFit> {
    let points: usize = series.iter().map(|s| s.len().saturating_sub(1)).sum();
    if k == 0 || series.is_empty() || series.iter().any(|s| s.is_empty()) || points < k + 1 {
        return Err(Error::Data(format!("ARHMM needs at least {} transitions, got {points}", k + 1)));
    }
    let mut best: Option<ArhmmFit> = None;
    for _ in 0..options.restarts.max(1) {
        let fit = em(series, k, options, rng)?;
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
