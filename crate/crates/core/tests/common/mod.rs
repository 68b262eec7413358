#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use redslds::dist::{sample_dirichlet, DirichletParams};
use redslds::linalg::{Mat, Vector};
use redslds::model::{InitParams, ModeParams, ModelConfig, ModelParams};
use redslds::stick::StickRegression;

pub mod kalman_oracle;

pub fn normal_mat<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vec<R: Rng>(len: usize, scale: f64, rng: &mut R) -> Vector {
    Vector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_spd<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Mat {
    let w = normal_mat(dim, dim, 1.0, rng);
    (&w * w.transpose() / dim as f64 + Mat::identity(dim, dim) * 0.2) * scale
}

fn probs<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    sample_dirichlet(&DirichletParams::symmetric(len, 2.0).unwrap(), rng).unwrap()
}

fn regs<R: Rng>(k: usize, categories: usize, m: usize, scale: f64, rng: &mut R) -> Vec<StickRegression> {
    (0..k)
        .map(|_| {
            StickRegression::new(
                normal_mat(categories - 1, m, scale, rng),
                normal_vec(categories - 1, scale, rng),
            )
            .unwrap()
        })
        .collect()
}

/// Parameters with moderate, well-conditioned random values.
pub fn random_params<R: Rng>(config: &ModelConfig, rng: &mut R) -> ModelParams {
    let (k, m, n, dur) = (config.num_modes, config.latent_dim, config.obs_dim, config.durations());
    let modes = (0..k)
        .map(|_| ModeParams {
            a_mat: normal_mat(m, m, 0.5 / (m as f64).sqrt(), rng),
            a_bias: normal_vec(m, 0.3, rng),
            q_cov: random_spd(m, 0.3, rng),
            c_mat: normal_mat(n, m, 1.0, rng),
            c_bias: normal_vec(n, 0.3, rng),
            s_cov: random_spd(n, 0.5, rng),
        })
        .collect();
    let init = InitParams {
        pi0: probs(k, rng),
        mu_init: (0..k).map(|_| normal_vec(m, 1.0, rng)).collect(),
        sigma_init: (0..k).map(|_| random_spd(m, 1.0, rng)).collect(),
    };
    let trans = (!config.recurrent_state).then(|| {
        let rows: Vec<Vec<f64>> = (0..k).map(|_| probs(k, rng)).collect();
        Mat::from_fn(k, k, |i, j| rows[i][j])
    });
    let state_reg = config.recurrent_state.then(|| regs(k, k, m, 1.0, rng));
    let dur_reg = config.recurrent_duration.then(|| regs(k, dur, m, 1.0, rng));
    let dur_table = (config.explicit_duration && !config.recurrent_duration)
        .then(|| (0..k).map(|_| probs(dur, rng)).collect());
    ModelParams {
        modes,
        init,
        trans,
        state_reg,
        dur_reg,
        dur_table,
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn mat_rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).abs().max() / b.abs().max().max(1.0)
}

pub mod geweke {
    use rand::SeedableRng;
    use redslds::gibbs::{sample_params_from_prior, sweep, ChainState, PriorConfig, Priors, SweepPlan};
    use redslds::linalg::Mat;
    use redslds::model::{simulate, simulate_observations, LatentTrajectory, ModelConfig, ModelParams};
    use redslds::SeedRng;

    pub const NPROBES: usize = 10;
    pub const PROBES: [&str; NPROBES] = [
        "mean of A",
        "trace of Q",
        "R^S[0][0,0]",
        "(mean of A)^2",
        "(R^S[0][0,0])^2",
        "R^D[0][0,0]^2",
        "C^2",
        "mean x^2",
        "change-point rate",
        "mean x * I[s = 0]",
    ];

    pub fn probes(p: &ModelParams, traj: &LatentTrajectory) -> [f64; NPROBES] {
        let k = p.modes.len() as f64;
        let a: f64 = p.modes.iter().map(|m| m.a_mat.mean()).sum::<f64>() / k;
        let q: f64 = p.modes.iter().map(|m| m.q_cov.trace()).sum();
        let r = p.state_reg.as_ref().map_or(0.0, |r| r[0].weights[(0, 0)]);
        let rd = p.dur_reg.as_ref().map_or(0.0, |r| r[0].weights[(0, 0)]);
        let c = p.modes[0].c_mat[(0, 0)];
        let len = traj.len() as f64;
        let x2 = traj.latents.iter().map(|x| x.norm_squared()).sum::<f64>() / len;
        let cp = traj.durations.iter().filter(|&&d| d == 1).count() as f64 / len;
        let xs = traj
            .latents
            .iter()
            .zip(&traj.states)
            .filter(|(_, &s)| s == 0)
            .map(|(x, _)| x[0])
            .sum::<f64>()
            / len;
        [a, q, r, a * a, r * r, rd * rd, c * c, x2, cp, xs]
    }

    pub fn tiny_setup() -> (ModelConfig, Priors) {
        let config = ModelConfig::for_variant(redslds::model::Variant::Redslds, 2, 1, 1, 3);
        let prior = PriorConfig {
            dynamics_v0: 0.25,
            dynamics_s0_scale: 0.5,
            dynamics_n0_offset: 9.0,
            emission_v0: 1.0,
            emission_s0_scale: 0.5,
            emission_n0_offset: 9.0,
            ..PriorConfig::default()
        };
        let eye = Mat::identity(1, 1);
        (config.clone(), prior.resolve(&config, &eye, &eye).unwrap())
    }

    pub struct GewekeResult {
        pub z: [f64; NPROBES],
        pub marginal_mean: [f64; NPROBES],
        pub successive_mean: [f64; NPROBES],
    }

    fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
        let size = xs.len() / batches;
        let means: Vec<f64> = (0..batches)
            .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
            .collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (var / batches as f64).sqrt()
    }

    fn iid_se(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    }

    /// Compare forward prior simulation with the Gibbs chain that resimulates
    /// the data after every sweep.
    pub fn run(rounds: usize, len: usize, seed: u64) -> GewekeResult {
        let (config, priors) = tiny_setup();
        let mut rng = SeedRng::seed_from_u64(seed);
        let mut marginal = vec![Vec::with_capacity(rounds); NPROBES];
        for _ in 0..rounds {
            let p = sample_params_from_prior(&priors, &config, &mut rng).unwrap();
            let (_, traj) = simulate(&p, &config, len, &mut rng).unwrap();
            for (i, v) in probes(&p, &traj).into_iter().enumerate() {
                marginal[i].push(v);
            }
        }
        let params = sample_params_from_prior(&priors, &config, &mut rng).unwrap();
        let (y, traj) = simulate(&params, &config, len, &mut rng).unwrap();
        let mut data = vec![y];
        let mut state = ChainState {
            config: config.clone(),
            params,
            aux: vec![redslds::augment::SequenceAux::empty(len)],
            trajectories: vec![traj],
            iteration: 0,
            rng: SeedRng::seed_from_u64(seed ^ 0x5eed),
        };
        let mut successive = vec![Vec::with_capacity(rounds); NPROBES];
        for _ in 0..rounds {
            sweep(&mut state, &data, &priors, SweepPlan::default()).unwrap();
            assert!(state.trajectories[0].satisfies_countdown(config.max_duration));
            data[0] = simulate_observations(&state.params, &state.trajectories[0], &mut state.rng).unwrap();
            for (i, v) in probes(&state.params, &state.trajectories[0]).into_iter().enumerate() {
                successive[i].push(v);
            }
        }
        let mut z = [0.0; NPROBES];
        let mut mm = [0.0; NPROBES];
        let mut sm = [0.0; NPROBES];
        for i in 0..NPROBES {
            mm[i] = marginal[i].iter().sum::<f64>() / rounds as f64;
            sm[i] = successive[i].iter().sum::<f64>() / rounds as f64;
            let se = (iid_se(&marginal[i]).powi(2) + batch_means_se(&successive[i], 50).powi(2)).sqrt();
            z[i] = (mm[i] - sm[i]) / se;
        }
        GewekeResult {
            z,
            marginal_mean: mm,
            successive_mean: sm,
        }
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    (d, p.clamp(0.0, 1.0))
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Closed-form `E[PG(b, c)]`, coded apart from the library.
pub fn pg_mean_oracle(b: f64, c: f64) -> f64 {
    if c == 0.0 {
        b / 4.0
    } else {
        b / (2.0 * c) * (c / 2.0).tanh()
    }
}
