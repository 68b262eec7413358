mod common;

use common::{ks_two_sample, mean_se, pg_mean_oracle, random_spd};
use rand::SeedableRng;
use redslds::dist::{
    info_to_moment, sample_dirichlet, sample_info_gaussian, sample_inverse_wishart, sample_mniw, sample_pg,
    sample_pg_signed, DirichletParams, InfoGaussian, MNIWParams, PGParams, RegressionStats,
};
use redslds::linalg::{Mat, Vector};
use redslds::SeedRng;

fn pg_draws(b: u32, c: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeedRng::seed_from_u64(seed);
    (0..n).map(|_| sample_pg(PGParams::new(b, c), &mut rng).unwrap()).collect()
}

#[test]
fn pg_moment_grid() {
    for (i, b) in [1u32, 2, 4].into_iter().enumerate() {
        for (j, c) in [0.0, 0.5, 2.0, 8.0].into_iter().enumerate() {
            let draws = pg_draws(b, c, 100_000, (10 * i + j) as u64);
            let (mean, se) = mean_se(&draws);
            let want = pg_mean_oracle(b as f64, c);
            assert!((mean - want).abs() < 4.0 * se, "PG({b},{c}): {mean} vs {want} (se {se})");
        }
    }
}

#[test]
fn pg_examples() {
    let (mean, se) = mean_se(&pg_draws(1, 0.0, 100_000, 1));
    assert!((mean - 0.25).abs() < 4.0 * se);
    let (mean, se) = mean_se(&pg_draws(1, 2.0, 100_000, 2));
    assert!((mean - 0.190_398).abs() < 4.0 * se, "{mean}");
    assert!(pg_draws(0, 3.0, 10, 3).iter().all(|&w| w == 0.0));
    assert!(pg_draws(1, 30.0, 1000, 4).iter().all(|&w| w > 0.0));
}

#[test]
fn pg_variance_matches_closed_form() {
    // Var[PG(1, c)] = (sinh c − c) / (4 c³ cosh²(c/2)).
    let c: f64 = 1.3;
    let draws = pg_draws(1, c, 100_000, 5);
    let (mean, _) = mean_se(&draws);
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    let want = (c.sinh() - c) / (4.0 * c.powi(3) * (c / 2.0).cosh().powi(2));
    assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
}

#[test]
fn pg_shape_is_a_convolution() {
    let n = 100_000;
    let whole = pg_draws(3, 1.5, n, 6);
    let parts: Vec<f64> = {
        let mut rng = SeedRng::seed_from_u64(7);
        (0..n)
            .map(|_| (0..3).map(|_| sample_pg(PGParams::new(1, 1.5), &mut rng).unwrap()).sum())
            .collect()
    };
    let (_, p) = ks_two_sample(&whole, &parts);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn pg_depends_on_tilt_squared() {
    let (_, p) = ks_two_sample(&pg_draws(2, 1.7, 100_000, 8), &pg_draws(2, -1.7, 100_000, 9));
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn pg_rejects_bad_input() {
    let mut rng = SeedRng::seed_from_u64(0);
    assert!(sample_pg_signed(-1, 1.0, &mut rng).is_err());
    assert!(sample_pg(PGParams::new(1, f64::NAN), &mut rng).is_err());
    assert!(sample_pg(PGParams::new(1, f64::INFINITY), &mut rng).is_err());
}

#[test]
fn inverse_wishart_mean() {
    let mut rng = SeedRng::seed_from_u64(11);
    let n = 100_000;
    let draws: Vec<Mat> = (0..n)
        .map(|_| sample_inverse_wishart(&Mat::identity(2, 2), 6.0, &mut rng).unwrap())
        .collect();
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let xs: Vec<f64> = draws.iter().map(|d| d[(i, j)]).collect();
        let (mean, se) = mean_se(&xs);
        let want = if i == j { 1.0 / 3.0 } else { 0.0 };
        assert!((mean - want).abs() < 4.0 * se, "({i},{j}) {mean}");
    }
}

#[test]
fn matrix_normal_moments() {
    let mut rng = SeedRng::seed_from_u64(12);
    let m0 = Mat::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
    let v0 = random_spd(3, 0.7, &mut rng);
    let s0 = random_spd(2, 1.5, &mut rng);
    let params = MNIWParams::new(m0.clone(), v0.clone(), s0.clone(), 7.0).unwrap();
    let n = 50_000;
    let mut sum = Mat::zeros(2, 3);
    let mut outer = Mat::zeros(2, 2);
    let mut entries = vec![Vec::with_capacity(n); 6];
    for _ in 0..n {
        let (b, sigma) = sample_mniw(&params, &mut rng).unwrap();
        assert_eq!((b.shape(), sigma.shape()), ((2, 3), (2, 2)));
        let d = &b - &m0;
        outer += &d * d.transpose();
        sum += &b;
        for (e, v) in entries.iter_mut().zip(b.iter()) {
            e.push(*v);
        }
    }
    for (idx, e) in entries.iter().enumerate() {
        let (mean, se) = mean_se(e);
        assert!((mean - m0.as_slice()[idx]).abs() < 4.0 * se);
    }
    // E[(B − M)(B − M)ᵀ] = tr(V) · S / (n − p − 1).
    let want = &s0 * (v0.trace() / (7.0 - 3.0));
    let got = outer / n as f64;
    assert!((got - &want).amax() < 0.05 * want.amax(), "{want}");
}

/// Posterior through pseudo-observations: append `L` with `L Lᵀ = V₀⁻¹`
/// and targets `M₀ L`, then ordinary least squares.
fn pseudo_data_posterior(prior: &MNIWParams, xs: &[Vector], ys: &[Vector]) -> (Mat, Mat, f64) {
    let q = prior.cols();
    let p = prior.rows();
    let v0_inv = prior.v0.clone().try_inverse().unwrap();
    let l = v0_inv.cholesky().unwrap().l();
    let total = xs.len() + q;
    let mut xa = Mat::zeros(q, total);
    let mut ya = Mat::zeros(p, total);
    for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
        xa.set_column(i, x);
        ya.set_column(i, y);
    }
    xa.columns_mut(xs.len(), q).copy_from(&l);
    ya.columns_mut(xs.len(), q).copy_from(&(&prior.m0 * &l));
    let mn = &ya * xa.transpose() * (&xa * xa.transpose()).try_inverse().unwrap();
    let resid = &ya - &mn * &xa;
    let sn = &prior.s0 + &resid * resid.transpose();
    (mn, sn, prior.n0 + xs.len() as f64)
}

#[test]
fn mniw_posterior_matches_pseudo_data_oracle() {
    let mut rng = SeedRng::seed_from_u64(13);
    for trial in 0..20 {
        let p = 1 + trial % 3;
        let q = 1 + trial % 4;
        let prior = MNIWParams::new(
            common::normal_mat(p, q, 1.0, &mut rng),
            random_spd(q, 2.0, &mut rng),
            random_spd(p, 1.0, &mut rng),
            p as f64 + 2.0,
        )
        .unwrap();
        let xs: Vec<Vector> = (0..15).map(|_| common::normal_vec(q, 1.0, &mut rng)).collect();
        let ys: Vec<Vector> = (0..15).map(|_| common::normal_vec(p, 2.0, &mut rng)).collect();
        let mut stats = RegressionStats::new(p, q);
        for (x, y) in xs.iter().zip(&ys) {
            stats.add(y, x);
        }
        let post = prior.posterior(&stats).unwrap();
        let (mn, sn, nn) = pseudo_data_posterior(&prior, &xs, &ys);
        assert!(common::mat_rel_err(&post.m0, &mn) < 1e-9);
        assert!(common::mat_rel_err(&post.s0, &sn) < 1e-9);
        assert_eq!(post.n0, nn);
        let vn = (prior.v0.clone().try_inverse().unwrap() + &stats.xx).try_inverse().unwrap();
        assert!(common::mat_rel_err(&post.v0, &vn) < 1e-9);
    }
}

#[test]
fn information_form_moments() {
    let mut rng = SeedRng::seed_from_u64(14);
    let lambda = Mat::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let theta = Vector::from_vec(vec![1.0, -0.5]);
    let msg = InfoGaussian::new(theta, lambda).unwrap();
    let (mean, cov) = info_to_moment(&msg).unwrap();
    let n = 100_000;
    let draws: Vec<Vector> = (0..n).map(|_| sample_info_gaussian(&msg, &mut rng).unwrap()).collect();
    for i in 0..2 {
        let xs: Vec<f64> = draws.iter().map(|d| d[i]).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - mean[i]).abs() < 4.0 * se);
    }
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let xs: Vec<f64> = draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - cov[(i, j)]).abs() < 4.0 * se, "cov ({i},{j}) {m} vs {}", cov[(i, j)]);
    }
}

#[test]
fn information_form_concentration_and_determinism() {
    let msg = InfoGaussian::new(Vector::from_element(2, 1e6), Mat::identity(2, 2) * 1e6).unwrap();
    let mut rng = SeedRng::seed_from_u64(15);
    for _ in 0..1000 {
        let x = sample_info_gaussian(&msg, &mut rng).unwrap();
        assert!((x.add_scalar(-1.0)).amax() < 0.01);
    }
    let run = |seed| {
        let mut rng = SeedRng::seed_from_u64(seed);
        (0..50).map(|_| sample_info_gaussian(&msg, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(3), run(3));
}

#[test]
fn dirichlet_mean() {
    let mut rng = SeedRng::seed_from_u64(16);
    let alpha = vec![0.5, 2.0, 3.5];
    let params = DirichletParams::new(alpha.clone()).unwrap();
    let draws: Vec<Vec<f64>> = (0..50_000).map(|_| sample_dirichlet(&params, &mut rng).unwrap()).collect();
    for (k, a) in alpha.iter().enumerate() {
        let xs: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - a / 6.0).abs() < 4.0 * se);
    }
}
