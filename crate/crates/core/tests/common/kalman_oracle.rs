use std::ops::AddAssign;

use redslds::augment::SequenceAux;
use redslds::linalg::{Mat, Vector};
use redslds::model::{LatentTrajectory, ModelParams};

/// Joint precision and information of the stacked latents, assembled term by
/// term from the model's log-density.
pub fn oracle_joint(params: &ModelParams, y: &[Vector], traj: &LatentTrajectory, aux: &SequenceAux) -> (Mat, Vector) {
    let len = y.len();
    let m = params.modes[0].a_mat.nrows();
    let mut lam = Mat::zeros(len * m, len * m);
    let mut th = Vector::zeros(len * m);
    let inv = |a: &Mat| a.clone().try_inverse().unwrap();
    let s0 = traj.states[0];
    let p0 = inv(&params.init.sigma_init[s0]);
    lam.view_mut((0, 0), (m, m)).add_assign(&p0);
    th.rows_mut(0, m).add_assign(&(&p0 * &params.init.mu_init[s0]));
    for t in 0..len {
        let md = &params.modes[traj.states[t]];
        let sinv = inv(&md.s_cov);
        lam.view_mut((t * m, t * m), (m, m)).add_assign(&(md.c_mat.transpose() * &sinv * &md.c_mat));
        th.rows_mut(t * m, m).add_assign(&(md.c_mat.transpose() * &sinv * (&y[t] - &md.c_bias)));
        if t > 0 {
            // -(1/2)(x_t - A x_{t-1} - a)' Q^{-1} (...) with stacked selector [-A, I].
            let qinv = inv(&md.q_cov);
            let mut sel = Mat::zeros(m, len * m);
            sel.view_mut((0, (t - 1) * m), (m, m)).copy_from(&(-&md.a_mat));
            sel.view_mut((0, t * m), (m, m)).copy_from(&Mat::identity(m, m));
            lam += sel.transpose() * &qinv * &sel;
            th += sel.transpose() * &qinv * &md.a_bias;
        }
        if let Some(step) = aux.steps.get(t).and_then(|s| s.as_ref()) {
            // Each stick contributes exp(kappa v - omega v^2 / 2), v = R_k x_t + r_k.
            let mut add_sticks = |reg: &redslds::stick::StickRegression, a: &redslds::stick::PGAuxiliaries| {
                for k in 0..a.omega.len() {
                    let row = reg.weights.row(k).transpose();
                    let w = a.omega[k];
                    lam.view_mut((t * m, t * m), (m, m)).add_assign(&(&row * row.transpose() * w));
                    th.rows_mut(t * m, m).add_assign(&(&row * (a.kappa[k] - w * reg.bias[k])));
                }
            };
            if let (Some(a), Some(regs)) = (&step.state, &params.state_reg) {
                add_sticks(&regs[traj.states[t]], a);
            }
            if let (Some(a), Some(regs)) = (&step.duration, &params.dur_reg) {
                add_sticks(&regs[traj.states[t + 1]], a);
            }
        }
    }
    (lam, th)
}

pub fn oracle_moments(lam: &Mat, th: &Vector) -> (Vector, Mat) {
    let cov = lam.clone().try_inverse().unwrap();
    let mean = &cov * th;
    (mean, cov)
}
