mod common;

use std::time::Instant;

use scorefp_core::fp_solver::{
    assemble_system, central_difference_score, central_difference_score_with, policy_iteration, solve_banded,
    Boundary, SolverConfig, StepInputs,
};
use scorefp_core::{SdeSpec, TimeGrid};

/// Lattice-normalised isotropic Gaussian density with per-axis variance `var`.
fn gaussian_density(n: usize, centre: f64, var: f64) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = ((k / n) as f64, (k % n) as f64);
            (-((i - centre).powi(2) + (j - centre).powi(2)) / (2.0 * var)).exp()
        })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn heat_run(n: usize, s0: f64, t_final: f64, steps: usize) -> (f64, f64, Vec<f64>) {
    let centre = (n as f64 - 1.0) / 2.0;
    let m0: Vec<f64> = gaussian_density(n, centre, s0 * s0).iter().map(|p| p.ln()).collect();
    let state = vec![0.0; n * n];
    let sde = SdeSpec::zero_drift(1.0).unwrap();
    let grid = TimeGrid::new(t_final, steps).unwrap();
    let sol = policy_iteration(&m0, &state, n, n, &sde, grid, &SolverConfig::default()).unwrap();
    assert!(sol.converged, "trace {:?}", sol.trace);
    let p_n: Vec<f64> = sol.log_density.slice(steps).iter().map(|m| m.exp()).collect();
    let widened = gaussian_density(n, centre, s0 * s0 + t_final);
    let unwidened = gaussian_density(n, centre, s0 * s0);
    let errors: Vec<f64> = sol.trace.iter().map(|r| r.error).collect();
    (rel_l2(&p_n, &widened), rel_l2(&p_n, &unwidened), errors)
}

#[test]
fn heat_kernel_widening() {
    let (err, err_unwidened, trace) = heat_run(64, 4.0, 0.05, 10);
    eprintln!("heat: rel L2 {err:.3e} (vs unwidened {err_unwidened:.3e}), trace {trace:?}");
    assert!(err <= 0.05);
    assert!(trace.len() <= 50);
    assert!(trace.windows(2).skip(1).all(|w| w[1] <= w[0]));
}

#[test]
fn zero_dynamics_copy_initial_slice() {
    let (h, w) = (6, 7);
    let m0: Vec<f64> = (0..h * w).map(|k| -1.0 - ((k * 13) % 7) as f64 * 0.37).collect();
    let state: Vec<f64> = (0..h * w).map(|k| (k % 5) as f64 / 4.0).collect();
    let sde = SdeSpec::zero_drift(0.0).unwrap();
    let grid = TimeGrid::new(1.0, 6).unwrap();
    let sol = policy_iteration(&m0, &state, h, w, &sde, grid, &SolverConfig::default()).unwrap();
    assert_eq!(sol.iterations(), 1);
    for n in 0..=6 {
        assert_eq!(sol.log_density.slice(n), &m0[..]);
    }
}

#[test]
fn constant_field_stays_constant_with_reflecting_walls() {
    let (h, w) = (7, 5);
    for sigma in [0.3, 1.0, 2.5] {
        for c in [-3.555, 0.0, 1.25] {
            let m0 = vec![c; h * w];
            let sde = SdeSpec::zero_drift(sigma).unwrap();
            let grid = TimeGrid::new(0.8, 8).unwrap();
            let cfg = SolverConfig {
                boundary: Boundary::Reflect,
                ..SolverConfig::default()
            };
            let sol = policy_iteration(&m0, &vec![0.4; h * w], h, w, &sde, grid, &cfg).unwrap();
            assert!(sol.converged);
            for n in 0..=8 {
                assert!(sol.log_density.slice(n).iter().all(|m| (m - c).abs() <= 1e-13 * (1.0 + c.abs())));
                assert!(sol.score.slice(n).iter().all(|s| s.abs() <= 1e-13 * (1.0 + c.abs())));
            }
        }
    }
    // With zero ghost values only the zero constant is a steady state.
    let sde = SdeSpec::zero_drift(1.0).unwrap();
    let grid = TimeGrid::new(0.8, 8).unwrap();
    let sol = policy_iteration(&vec![0.0; h * w], &vec![0.4; h * w], h, w, &sde, grid, &SolverConfig::default()).unwrap();
    assert!(sol.log_density.data().iter().all(|&m| m == 0.0));
    assert!(sol.score.data().iter().all(|&s| s == 0.0));
}

/// Straight-line evaluation of phi and div f at one node for the vp-like drift.
#[test]
fn vp_like_node_matches_scalar_reference() {
    let (h, w) = (5, 6);
    let beta = 1.7;
    let dt = 0.04;
    let state: Vec<f64> = (0..h * w).map(|k| ((k * 7) % 11) as f64 / 10.0).collect();
    let score: Vec<f64> = (0..h * w).map(|k| ((k * 5) % 9) as f64 / 3.0 - 1.2).collect();
    let m_prev: Vec<f64> = (0..h * w).map(|k| -2.0 - (k % 4) as f64).collect();
    let sde = SdeSpec::vp_like(beta).unwrap();
    let inputs = StepInputs {
        height: h,
        width: w,
        m_prev_time: &m_prev,
        score_prev_iter: &score,
        state: &state,
        t: 0.3,
        dt,
    };
    let sys = assemble_system(&inputs, &sde, Boundary::Truncate).unwrap();
    for (i, j) in [(2, 3), (1, 1), (3, 4)] {
        let k = i * w + j;
        let f = |r: usize, c: usize| -0.5 * beta * state[r * w + c];
        let g2 = beta;
        let phi = f(i, j) - 0.5 * g2 * score[k];
        let div_f = (f(i + 1, j) - f(i - 1, j) + f(i, j + 1) - f(i, j - 1)) / 2.0;
        let a = -0.5 * g2 * dt + 0.5 * phi * dt;
        let c = -0.5 * g2 * dt - 0.5 * phi * dt;
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1e-300);
        assert!(close(sys.matrix.get(k, k), 1.0 + 2.0 * g2 * dt));
        assert!(close(sys.matrix.get(k, k + w), a));
        assert!(close(sys.matrix.get(k, k + 1), a));
        assert!(close(sys.matrix.get(k, k - w), c));
        assert!(close(sys.matrix.get(k, k - 1), c));
        assert!(close(sys.rhs[k], m_prev[k] - div_f * dt));
    }
}

fn sine_score_error(n: usize) -> f64 {
    use std::f64::consts::PI;
    let step = 1.0 / n as f64;
    let m: Vec<f64> = (0..n * n)
        .map(|k| (2.0 * PI * (k / n) as f64 * step).sin() * (2.0 * PI * (k % n) as f64 * step).sin())
        .collect();
    let s = central_difference_score(&m, n, n);
    let mut worst = 0.0_f64;
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let (x, y) = (i as f64 * step, j as f64 * step);
            let exact = 2.0 * PI * ((2.0 * PI * x).cos() * (2.0 * PI * y).sin() + (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
            worst = worst.max((s[i * n + j] / step - exact).abs());
        }
    }
    worst
}

#[test]
fn central_difference_is_second_order() {
    let ratio = sine_score_error(16) / sine_score_error(32);
    eprintln!("score refinement ratio {ratio:.4}");
    assert!((3.2..=4.8).contains(&ratio));
}

#[test]
fn reflect_score_of_constant_is_zero() {
    let s = central_difference_score_with(&[3.0; 20], 4, 5, Boundary::Reflect);
    assert!(s.iter().all(|&v| v == 0.0));
}

#[test]
fn banded_solve_scales_linearly_in_height() {
    let w = 32;
    let time_for = |h: usize| {
        let d = h * w;
        let m: Vec<f64> = (0..d).map(|k| -((k % 17) as f64)).collect();
        let s: Vec<f64> = (0..d).map(|k| ((k % 5) as f64 - 2.0) * 0.1).collect();
        let x = vec![0.5; d];
        let sde = SdeSpec::zero_drift(1.0).unwrap();
        let inputs = StepInputs { height: h, width: w, m_prev_time: &m, score_prev_iter: &s, state: &x, t: 0.1, dt: 0.01 };
        let sys = assemble_system(&inputs, &sde, Boundary::Truncate).unwrap();
        let start = Instant::now();
        for _ in 0..5 {
            std::hint::black_box(solve_banded(&sys).unwrap());
        }
        start.elapsed().as_secs_f64()
    };
    // Best of three to damp scheduler noise.
    let best = |h| (0..3).map(|_| time_for(h)).fold(f64::INFINITY, f64::min);
    let (small, large) = (best(128), best(256));
    eprintln!("banded solve: H=128 {small:.4}s, H=256 {large:.4}s");
    assert!(large <= 2.5 * small);
}
