use nalgebra::{DMatrix, DVector};
use paris_em::prelude::*;
use rand::SeedableRng;

fn th(v: [f64; 3]) -> ParamVec64 {
    ParamVec::from_f64(&v)
}

struct Dense {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_likelihood: f64,
}

/// Posterior of `X_{0:T}` by direct Gaussian conditioning on the observed
/// coordinates. `X = L e` with `e ~ N(0, I)`, `X_0 = s0 e_0`.
fn dense_posterior(theta: [f64; 3], s0: f64, ys: &[f64], first_observed: usize) -> Dense {
    let [a, sv2, su2] = theta;
    let n = ys.len();
    let l = DMatrix::from_fn(n, n, |t, j| {
        if j > t {
            0.0
        } else {
            a.powi((t - j) as i32) * if j == 0 { s0 } else { sv2.sqrt() }
        }
    });
    let sx = &l * l.transpose();
    let obs: Vec<usize> = (first_observed..n).collect();
    let m = obs.len();
    let syy = DMatrix::from_fn(m, m, |i, j| sx[(obs[i], obs[j])] + if i == j { su2 } else { 0.0 });
    let sxy = DMatrix::from_fn(n, m, |i, j| sx[(i, obs[j])]);
    let y = DVector::from_iterator(m, obs.iter().map(|&i| ys[i]));
    let chol = syy.clone().cholesky().unwrap();
    let alpha = chol.solve(&y);
    let mean = &sxy * &alpha;
    let cov = &sx - &sxy * chol.solve(&sxy.transpose());
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_likelihood = -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + y.dot(&alpha));
    Dense { mean, cov, log_likelihood }
}

fn dense_stats(d: &Dense, ys: &[f64]) -> [f64; 4] {
    let mut z = [0.0; 4];
    for t in 0..ys.len() - 1 {
        let (m0, m1) = (d.mean[t], d.mean[t + 1]);
        z[0] += m0 * m0 + d.cov[(t, t)];
        z[1] += m0 * m1 + d.cov[(t, t + 1)];
        z[2] += m1 * m1 + d.cov[(t + 1, t + 1)];
        z[3] += (ys[t + 1] - m1).powi(2) + d.cov[(t + 1, t + 1)];
    }
    z
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn kalman_and_rts_match_dense_conditioning() {
    for (seed, theta, horizon) in [(1u64, [0.8, 0.16, 0.81], 50usize), (2, [-0.6, 1.3, 0.2], 50), (3, [0.95, 0.05, 2.0], 17)] {
        let ys = lg_simulate(&th(theta), horizon, None, &mut SimRng::seed_from_u64(seed)).unwrap().observations;
        for (opts, s0, first) in [
            (KalmanOptions::default(), (theta[1] / (1.0 - theta[0] * theta[0])).sqrt(), 0),
            (KalmanOptions::batch_em(), 1.0, 1),
        ] {
            let kf = kalman_filter_with(&th(theta), &ys, &opts).unwrap();
            let sm = rts_smoother(&th(theta), &kf).unwrap();
            let d = dense_posterior(theta, s0, &ys, first);
            for t in 0..ys.len() {
                assert!(rel_close(sm.mean[t], d.mean[t], 1e-8), "mean {t}");
                assert!(rel_close(sm.var[t], d.cov[(t, t)], 1e-8), "var {t}");
                if t + 1 < ys.len() {
                    assert!(rel_close(sm.lag_one_cov[t], d.cov[(t, t + 1)], 1e-8), "lag-one cov {t}");
                }
            }
            assert!(rel_close(kf.log_likelihood, d.log_likelihood, 1e-8));
            let z = lg_exact_smoothed_stats_with(&th(theta), &ys, &opts).unwrap();
            let zd = dense_stats(&d, &ys);
            for k in 0..4 {
                assert!(rel_close(z[k], zd[k], 1e-8), "statistic {k}: {} vs {}", z[k], zd[k]);
            }
        }
    }
}

fn inverse3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det: f64 = (0..3).map(|j| m[0][j] * cof[0][j]).sum();
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = cof[j][i] / det;
        }
    }
    inv
}

#[test]
fn two_step_statistics_by_hand() {
    // Prior of (X0, X1, X2) with stationary variance v: Cov = v a^{|i-j|}.
    // Posterior precision = Σx⁻¹ + I/σ_U², posterior mean = P y / σ_U².
    let (a, sv2, su2) = (0.5, 0.75, 0.5);
    let v = sv2 / (1.0 - a * a);
    let ys = [0.3, -1.1, 0.8];
    let sx = [[v, v * a, v * a * a], [v * a, v, v * a], [v * a * a, v * a, v]];
    let mut prec = inverse3(sx);
    for (i, row) in prec.iter_mut().enumerate() {
        row[i] += 1.0 / su2;
    }
    let p = inverse3(prec);
    let m: Vec<f64> = (0..3).map(|i| (0..3).map(|j| p[i][j] * ys[j] / su2).sum()).collect();
    let want = [
        m[0] * m[0] + p[0][0] + m[1] * m[1] + p[1][1],
        m[0] * m[1] + p[0][1] + m[1] * m[2] + p[1][2],
        m[1] * m[1] + p[1][1] + m[2] * m[2] + p[2][2],
        (ys[1] - m[1]).powi(2) + p[1][1] + (ys[2] - m[2]).powi(2) + p[2][2],
    ];
    let z = lg_exact_smoothed_stats(&th([a, sv2, su2]), &ys).unwrap();
    for k in 0..4 {
        assert!((z[k] - want[k]).abs() < 1e-12, "statistic {k}: {} vs {}", z[k], want[k]);
    }
}

#[test]
fn batch_em_likelihood_is_monotone() {
    let truth = th([0.8, 0.16, 0.81]);
    let ys = lg_simulate(&truth, 2000, None, &mut SimRng::seed_from_u64(10)).unwrap().observations;
    let opts = KalmanOptions::batch_em();
    let mut theta = th([0.1, 4.0, 0.81]);
    let mut ll = lg_log_likelihood(&theta, &ys, &opts).unwrap();
    for i in 0..50 {
        theta = lg_batch_em_step(&theta, &ys).unwrap();
        let next = lg_log_likelihood(&theta, &ys, &opts).unwrap();
        assert!(next >= ll - 1e-10, "iteration {i}: {ll} -> {next}");
        ll = next;
    }
}

#[test]
fn batch_em_reaches_a_fixed_point() {
    let ys = lg_simulate(&th([0.8, 0.16, 0.81]), 200, None, &mut SimRng::seed_from_u64(12)).unwrap().observations;
    let mut theta = th([0.5, 0.5, 0.5]);
    let mut residual = f64::INFINITY;
    for _ in 0..20_000 {
        let next = lg_batch_em_step(&theta, &ys).unwrap();
        residual = (0..3).map(|k| (next[k] - theta[k]).abs()).fold(0.0, f64::max);
        theta = next;
        if residual < 1e-9 {
            break;
        }
    }
    assert!(residual < 1e-9, "no convergence, residual {residual}");
    let again = lg_batch_em_step(&theta, &ys).unwrap();
    assert!((0..3).all(|k| (again[k] - theta[k]).abs() < 1e-6));
}

#[test]
fn one_batch_em_iteration_moves_toward_truth() {
    let truth = [0.8, 0.16, 0.81];
    let ys = lg_simulate(&th(truth), 5000, None, &mut SimRng::seed_from_u64(13)).unwrap().observations;
    let start = th([0.1, 4.0, 0.81]);
    let next = lg_batch_em_step(&start, &ys).unwrap();
    assert!((next[0] - truth[0]).abs() < (start[0] - truth[0]).abs(), "a: {}", next[0]);
    assert!((next[1] - truth[1]).abs() < (start[1] - truth[1]).abs(), "σ_V²: {}", next[1]);
    // σ_U² starts at the truth, so "toward" means not leaving its neighbourhood
    assert!((next[2] - truth[2]).abs() < 0.3, "σ_U²: {}", next[2]);
}
