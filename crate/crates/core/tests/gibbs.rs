mod common;

use common::{mean_se, normal_vec, random_params};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use redslds::gibbs::{
    chain_seed, fit, fit_arhmm, sample_params_from_prior, fit_pca, initialize, sweep, update_discrete_tables, update_dynamics,
    update_emissions, ArhmmOptions, Chain, ChainState, FitOptions, InitScheme, PriorConfig, Priors, SweepPlan,
};
use redslds::linalg::{Mat, Vector};
use redslds::metrics::{report, score, score_sequences, StateEstimate};
use redslds::model::{
    run_length_durations, simulate, LatentTrajectory, ModelConfig, ModelParams, Sequence, Variant,
};
use redslds::SeedRng;

fn unit_priors(config: &ModelConfig) -> Priors {
    let m = Mat::identity(config.latent_dim, config.latent_dim);
    let n = Mat::identity(config.obs_dim, config.obs_dim);
    PriorConfig::default().resolve(config, &n, &m).unwrap()
}

fn rotation(theta: f64) -> Mat {
    Mat::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
}

/// Two modes rotating by ±0.3 rad with tiny noise and sticky switching.
fn separated_instance(rng: &mut SeedRng) -> (ModelConfig, ModelParams) {
    let config = ModelConfig::for_variant(Variant::Slds, 2, 2, 2, 1);
    let mut params = random_params(&config, rng);
    for (mode, theta) in params.modes.iter_mut().zip([0.3, -0.3]) {
        mode.a_mat = rotation(theta);
        mode.a_bias = Vector::zeros(2);
        mode.q_cov = Mat::identity(2, 2) * 1e-4;
        mode.c_mat = Mat::identity(2, 2);
        mode.c_bias = Vector::zeros(2);
        mode.s_cov = Mat::identity(2, 2) * 1e-4;
    }
    params.init.pi0 = vec![0.5, 0.5];
    params.init.mu_init = vec![Vector::from_vec(vec![1.0, 0.0]); 2];
    params.init.sigma_init = vec![Mat::identity(2, 2) * 1e-4; 2];
    params.trans = Some(Mat::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]));
    (config, params)
}

#[test]
fn discrete_pass_recovers_separated_modes() {
    let mut rng = SeedRng::seed_from_u64(1);
    let (config, params) = separated_instance(&mut rng);
    let (y, truth) = simulate(&params, &config, 400, &mut rng).unwrap();
    assert!(truth.states.iter().filter(|&&s| s == 0).count() > 40);
    assert!(truth.states.iter().filter(|&&s| s == 1).count() > 40);
    let states: Vec<usize> = (0..400).map(|_| rng.random_range(0..2)).collect();
    let mut state = ChainState {
        config: config.clone(),
        params,
        trajectories: vec![LatentTrajectory {
            durations: vec![1; 400],
            states,
            latents: truth.latents.clone(),
        }],
        aux: Vec::new(),
        iteration: 0,
        rng: SeedRng::seed_from_u64(2),
    };
    let plan = SweepPlan {
        discrete: true,
        continuous: false,
        parameters: false,
    };
    sweep(&mut state, &[y], &unit_priors(&config), plan).unwrap();
    let acc = score(&state.trajectories[0].states, &truth.states).unwrap().accuracy;
    assert!(acc > 0.95, "accuracy {acc}");
}

fn self_simulated(variant: Variant, seed: u64, seqs: usize, len: usize) -> (ModelConfig, Vec<Sequence>, Vec<Vec<usize>>) {
    let mut rng = SeedRng::seed_from_u64(seed);
    let config = ModelConfig::for_variant(variant, 2, 2, 4, 4);
    let params = random_params(&config, &mut rng);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..seqs {
        let (y, traj) = simulate(&params, &config, len, &mut rng).unwrap();
        data.push(y);
        labels.push(traj.states);
    }
    (config, data, labels)
}

#[test]
fn sweeps_are_deterministic_and_keep_the_countdown() {
    let (config, data, _) = self_simulated(Variant::Redslds, 3, 2, 60);
    let options = FitOptions {
        iterations: 3,
        ..FitOptions::default()
    };
    let (chain, priors) = Chain::start(&data, &config, &PriorConfig::default(), &options, 9).unwrap();
    let mut a = chain.state.clone();
    let mut b = chain.state.clone();
    for _ in 0..2 {
        let ra = sweep(&mut a, &data, &priors, SweepPlan::default()).unwrap();
        let rb = sweep(&mut b, &data, &priors, SweepPlan::default()).unwrap();
        assert_eq!(ra, rb);
        assert!(a.trajectories.iter().all(|t| t.satisfies_countdown(config.max_duration)));
    }
    assert_eq!(a, b);
    assert_eq!(a.iteration, 2);
}

#[test]
fn dynamics_update_recovers_known_regression() {
    let mut rng = SeedRng::seed_from_u64(4);
    let config = ModelConfig::for_variant(Variant::Slds, 2, 2, 2, 1);
    let mut params = random_params(&config, &mut rng);
    let a_true = Mat::from_row_slice(2, 2, &[0.8, 0.3, -0.2, 0.5]);
    let b_true = Vector::from_vec(vec![0.4, -0.1]);
    let n = 10_000;
    let mut latents = vec![Vector::zeros(2)];
    let mut xx = Mat::zeros(3, 3);
    let mut yx = Mat::zeros(2, 3);
    for _ in 1..n {
        let prev = Vector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let next = &a_true * &prev + &b_true + normal_vec(2, 0.3, &mut rng);
        let aug = Vector::from_vec(vec![prev[0], prev[1], 1.0]);
        xx.ger(1.0, &aug, &aug, 1.0);
        yx.ger(1.0, &next, &aug, 1.0);
        latents.push(prev);
        latents.push(next);
    }
    // Pair (prev, next) lands in mode 0; the joins between pairs land in mode 1.
    let states: Vec<usize> = (0..latents.len()).map(|t| if t % 2 == 0 { 0 } else { 1 }).collect();
    let traj = LatentTrajectory {
        durations: vec![1; latents.len()],
        states,
        latents,
    };
    let ols = yx * xx.try_inverse().unwrap();
    let priors = unit_priors(&config);
    let draws: Vec<Mat> = (0..20)
        .map(|_| {
            update_dynamics(&mut params, &config, std::slice::from_ref(&traj), &priors, &mut rng).unwrap();
            assert!(params.modes[0].q_cov.clone().cholesky().is_some());
            params.modes[0].a_mat.clone()
        })
        .collect();
    let mean = draws.iter().fold(Mat::zeros(2, 2), |acc, a| acc + a) / draws.len() as f64;
    assert!((&mean - &a_true).amax() < 0.05);
    assert!((&mean - ols.columns(0, 2)).amax() < 0.02);
}

#[test]
fn empty_mode_draws_from_the_prior() {
    let mut rng = SeedRng::seed_from_u64(5);
    let config = ModelConfig::for_variant(Variant::Slds, 2, 1, 1, 1);
    let mut params = random_params(&config, &mut rng);
    let traj = LatentTrajectory {
        states: vec![0; 20],
        durations: vec![1; 20],
        latents: (0..20).map(|i| Vector::from_vec(vec![i as f64])).collect(),
    };
    let priors = unit_priors(&config);
    // Prior: A ~ N(0, V0 Q) with Q ~ IW(S0, n0), so E[A] = 0 for the empty mode.
    let draws: Vec<f64> = (0..4000)
        .map(|_| {
            update_dynamics(&mut params, &config, std::slice::from_ref(&traj), &priors, &mut rng).unwrap();
            params.modes[1].a_mat[(0, 0)]
        })
        .collect();
    let (m, se) = mean_se(&draws);
    assert!(m.abs() < 4.0 * se, "{m} ± {se}");
}

#[test]
fn shared_emissions_pool_every_mode() {
    let mut rng = SeedRng::seed_from_u64(6);
    let (config, data, _) = self_simulated(Variant::Rslds, 6, 1, 50);
    let mut params = random_params(&config, &mut rng);
    let (_, traj) = simulate(&params, &config, 50, &mut rng).unwrap();
    let priors = unit_priors(&config);
    update_emissions(&mut params, &config, &data, std::slice::from_ref(&traj), &priors, &mut rng).unwrap();
    assert_eq!(params.modes[0].c_mat, params.modes[1].c_mat);
    assert_eq!(params.modes[0].s_cov, params.modes[1].s_cov);
    let separate = ModelConfig {
        shared_emission: false,
        ..config.clone()
    };
    update_emissions(&mut params, &separate, &data, std::slice::from_ref(&traj), &priors, &mut rng).unwrap();
    assert_ne!(params.modes[0].c_mat, params.modes[1].c_mat);
}

#[test]
fn duration_table_adds_change_point_counts() {
    let mut rng = SeedRng::seed_from_u64(7);
    let config = ModelConfig::for_variant(Variant::Edslds, 1, 1, 1, 3);
    let mut params = random_params(&config, &mut rng);
    let traj = LatentTrajectory {
        states: vec![0; 10],
        durations: vec![1; 10],
        latents: vec![Vector::zeros(1); 10],
    };
    let priors = unit_priors(&config);
    let mut draws = vec![Vec::new(); 3];
    for _ in 0..4000 {
        update_discrete_tables(&mut params, &config, std::slice::from_ref(&traj), &priors, &mut rng).unwrap();
        for (j, p) in params.dur_table.as_ref().unwrap()[0].iter().enumerate() {
            draws[j].push(*p);
        }
    }
    for (j, want) in [11.0 / 13.0, 1.0 / 13.0, 1.0 / 13.0].into_iter().enumerate() {
        let (m, se) = mean_se(&draws[j]);
        assert!((m - want).abs() < 4.0 * se, "{j}: {m} vs {want}");
    }
}

#[test]
fn transition_rows_follow_large_counts() {
    let mut rng = SeedRng::seed_from_u64(8);
    let config = ModelConfig::for_variant(Variant::Slds, 3, 1, 1, 1);
    let mut params = random_params(&config, &mut rng);
    let truth = [[0.7, 0.2, 0.1], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4]];
    let mut states = vec![0];
    for _ in 0..30_000 {
        let row = truth[*states.last().unwrap()];
        let u: f64 = rng.random();
        states.push(if u < row[0] { 0 } else if u < row[0] + row[1] { 1 } else { 2 });
    }
    let traj = LatentTrajectory {
        durations: vec![1; states.len()],
        latents: vec![Vector::zeros(1); states.len()],
        states,
    };
    update_discrete_tables(&mut params, &config, &[traj], &unit_priors(&config), &mut rng).unwrap();
    let trans = params.trans.unwrap();
    for i in 0..3 {
        assert!((trans.row(i).sum() - 1.0).abs() < 1e-12);
        for j in 0..3 {
            assert!((trans[(i, j)] - truth[i][j]).abs() < 0.02);
        }
    }
}

#[test]
fn single_state_arhmm_is_the_least_squares_fit() {
    let mut rng = SeedRng::seed_from_u64(9);
    let mut x = vec![Vector::from_vec(vec![0.0])];
    for _ in 0..500 {
        let prev = x.last().unwrap()[0];
        x.push(Vector::from_vec(vec![0.6 * prev + 0.2 + 0.5 * rng.sample::<f64, _>(StandardNormal)]));
    }
    let fit = fit_arhmm(std::slice::from_ref(&x), 1, &ArhmmOptions::default(), &mut rng).unwrap();
    let n = (x.len() - 1) as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for w in x.windows(2) {
        let (a, b) = (w[0][0], w[1][0]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let icpt = (sy - slope * sx) / n;
    let var = x.windows(2).map(|w| (w[1][0] - slope * w[0][0] - icpt).powi(2)).sum::<f64>() / n;
    let ll = -0.5 * n * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);
    assert!((fit.log_likelihood - ll).abs() < 1e-6 * ll.abs(), "{} vs {ll}", fit.log_likelihood);
    assert!((fit.params.coef[0][(0, 0)] - slope).abs() < 1e-6);
}

#[test]
fn arhmm_separates_opposite_regimes_and_em_ascends() {
    let mut rng = SeedRng::seed_from_u64(10);
    let mut states = Vec::new();
    let mut x = vec![Vector::from_vec(vec![1.0])];
    let mut s = 0usize;
    states.push(s);
    for _ in 1..2000 {
        if rng.random::<f64>() < 0.02 {
            s = 1 - s;
        }
        let coef = if s == 0 { 0.9 } else { -0.9 };
        let prev = x.last().unwrap()[0];
        x.push(Vector::from_vec(vec![coef * prev + 0.05 * rng.sample::<f64, _>(StandardNormal)]));
        states.push(s);
    }
    let fit = fit_arhmm(std::slice::from_ref(&x), 2, &ArhmmOptions::default(), &mut rng).unwrap();
    let acc = score(&fit.states[0], &states).unwrap().accuracy;
    assert!(acc > 0.95, "accuracy {acc}");
    assert!(fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn pca_orders_components_by_variance() {
    let mut rng = SeedRng::seed_from_u64(11);
    let scales = [0.5, 3.0, 1.0, 2.0];
    let data: Vec<Sequence> = (0..3)
        .map(|_| {
            (0..300)
                .map(|_| Vector::from_fn(4, |i, _| scales[i] * rng.sample::<f64, _>(StandardNormal)))
                .collect()
        })
        .collect();
    let pca = fit_pca(&data, 3).unwrap();
    assert!(pca.variances.windows(2).all(|w| w[0] >= w[1]));
    let projected: Vec<Vector> = data.iter().flatten().map(|y| pca.project(y)).collect();
    let var = |j: usize| projected.iter().map(|p| p[j] * p[j]).sum::<f64>() / projected.len() as f64;
    assert!(var(0) >= var(1) && var(1) >= var(2));
    assert!((var(0) - pca.variances[0]).abs() < 1e-9 * pca.variances[0]);
    let constant: Vec<Sequence> = vec![vec![Vector::from_vec(vec![1.0, 2.0]); 10]];
    assert!(fit_pca(&constant, 1).is_err());
}

#[test]
fn run_lengths_count_down() {
    assert_eq!(run_length_durations(&[0, 0, 0, 1, 1], 5), vec![3, 2, 1, 2, 1]);
    assert_eq!(run_length_durations(&[0, 0, 0, 1, 1], 2), vec![2, 1, 1, 2, 1]);
    assert_eq!(run_length_durations(&[], 2), Vec::<usize>::new());
}

#[test]
fn schemes_share_the_arhmm_start() {
    let (config, data, _) = self_simulated(Variant::Redslds, 12, 2, 80);
    let prior = PriorConfig::default();
    let one = initialize(&data, &config, &prior, InitScheme::I, &mut SeedRng::seed_from_u64(5)).unwrap();
    let two = initialize(&data, &config, &prior, InitScheme::II, &mut SeedRng::seed_from_u64(5)).unwrap();
    assert_eq!(one.trajectories, two.trajectories);
    assert_eq!(one.arhmm_log_likelihood, two.arhmm_log_likelihood);
    assert_ne!(one.params, two.params);
    for t in &one.trajectories {
        assert!(t.satisfies_countdown(config.max_duration));
    }
}

#[test]
fn zero_iterations_return_the_start() {
    let (config, data, _) = self_simulated(Variant::Rslds, 13, 1, 50);
    let options = FitOptions {
        iterations: 0,
        ..FitOptions::default()
    };
    let chain = fit(&data, &config, &PriorConfig::default(), &options, 3).unwrap();
    let (start, _) = Chain::start(&data, &config, &PriorConfig::default(), &options, 3).unwrap();
    assert_eq!(chain, start);
    assert!(chain.diagnostics.is_empty());
}

#[test]
fn checkpoint_continuation_is_bit_identical() {
    let (config, data, _) = self_simulated(Variant::Redslds, 14, 2, 60);
    let options = FitOptions {
        iterations: 8,
        burn_in_fraction: 0.25,
        scheme: InitScheme::I,
    };
    let prior = PriorConfig::default();
    let whole = fit(&data, &config, &prior, &options, 21).unwrap();

    let (mut part, priors) = Chain::start(&data, &config, &prior, &options, 21).unwrap();
    for _ in 0..3 {
        part.step(&data, &priors).unwrap();
    }
    let mut resumed = Chain::from_json(&part.to_json().unwrap()).unwrap();
    let priors = resumed.priors(&data).unwrap();
    resumed.run(&data, &priors, |_| Ok(())).unwrap();
    assert_eq!(resumed, whole);
    assert_eq!(resumed.to_json().unwrap(), whole.to_json().unwrap());
    assert_eq!(whole.diagnostics.len(), 8);
    let votes: u32 = whole.votes[0][0].iter().sum();
    assert_eq!(votes, 6);
}

#[test]
fn joint_density_rises_on_self_simulated_data() {
    let mut rng = SeedRng::seed_from_u64(15);
    let config = ModelConfig::for_variant(Variant::Redslds, 2, 2, 4, 4);
    let truth = random_params(&config, &mut rng);
    let mut data = Vec::new();
    let mut truth_joint = 0.0;
    for _ in 0..3 {
        let (y, traj) = simulate(&truth, &config, 100, &mut rng).unwrap();
        truth_joint += redslds::model::joint_log_density(&truth, &config, &y, &traj).unwrap();
        data.push(y);
    }
    let priors = redslds::gibbs::priors_from_data(&PriorConfig::default(), &config, &data).unwrap();
    let start = sample_params_from_prior(&priors, &config, &mut rng).unwrap();
    let trajectories = (0..3).map(|_| simulate(&start, &config, 100, &mut rng).unwrap().1).collect();
    let mut state = ChainState {
        config: config.clone(),
        params: start,
        trajectories,
        aux: Vec::new(),
        iteration: 0,
        rng: SeedRng::seed_from_u64(4),
    };
    let joints: Vec<f64> = (0..200)
        .map(|_| sweep(&mut state, &data, &priors, SweepPlan::default()).unwrap().joint_log_density)
        .collect();
    let median = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&joints[180..]) > median(&joints[..20]));
    assert!((median(&joints[180..]) - truth_joint).abs() < 0.1 * truth_joint.abs());
}

#[test]
fn chain_seeds_differ_and_repeat() {
    assert_eq!(chain_seed(1, 0), chain_seed(1, 0));
    assert_ne!(chain_seed(1, 0), chain_seed(1, 1));
    assert_ne!(chain_seed(1, 0), chain_seed(2, 0));
}

#[test]
fn reports_summarize_chains() {
    let (config, data, labels) = self_simulated(Variant::Rslds, 16, 1, 60);
    let options = FitOptions {
        iterations: 4,
        ..FitOptions::default()
    };
    let chain = fit(&data, &config, &PriorConfig::default(), &options, 2).unwrap();
    let single = report(std::slice::from_ref(&chain), Some(&labels), StateEstimate::FinalSample).unwrap();
    assert_eq!(single.variant, "rslds");
    assert!(single.summary.iter().all(|s| s.std.is_none()));
    let acc = single.summary.iter().find(|s| s.metric == "accuracy").unwrap();
    let direct = score_sequences(&chain.final_states(), &labels).unwrap().accuracy;
    assert_eq!(acc.mean, direct);
    assert_eq!(single.chains[0].joint_log_density, chain.diagnostics[3].joint_log_density);

    let pair = report(&[chain.clone(), chain.clone()], Some(&labels), StateEstimate::MajorityVote).unwrap();
    assert!(pair.summary.iter().all(|s| s.std == Some(0.0)));
    let unlabeled = report(&[chain], None, StateEstimate::FinalSample).unwrap();
    assert!(unlabeled.summary.iter().all(|s| s.metric != "accuracy"));
    assert!(unlabeled.to_table().contains("joint_log_density"));
    let empty: Vec<Chain> = Vec::new();
    assert!(report(&empty, None, StateEstimate::FinalSample).is_err());
}
