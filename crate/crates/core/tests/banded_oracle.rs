mod common;

use common::{dense_solve, max_rel_diff, Lcg};
use proptest::prelude::*;
use scorefp_core::banded::BandMatrix;
use scorefp_core::fp_solver::{assemble_system, solve_banded, Boundary, StepInputs};
use scorefp_core::SdeSpec;

fn random_banded(n: usize, lower: usize, upper: usize, rng: &mut Lcg) -> BandMatrix {
    let mut a = BandMatrix::zeros(n, lower, upper);
    for i in 0..n {
        let mut off = 0.0;
        for j in i.saturating_sub(lower)..(i + upper + 1).min(n) {
            if j != i {
                let v = rng.uniform(-1.0, 1.0);
                off += v.abs();
                a.set(i, j, v);
            }
        }
        a.set(i, i, off + rng.uniform(0.5, 2.0));
    }
    a
}

#[test]
fn diagonally_dominant_six_by_six_matches_dense() {
    let mut rng = Lcg(11);
    for (lower, upper) in [(1, 1), (2, 2), (2, 1), (5, 5)] {
        let a = random_banded(6, lower, upper, &mut rng);
        let b: Vec<f64> = (0..6).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let x = a.solve(&b).unwrap();
        let reference = dense_solve(&a.to_dense(), &b);
        assert!(max_rel_diff(&x, &reference) < 1e-10);
    }
}

fn assembled(h: usize, w: usize, seed: u64, sde: SdeSpec, boundary: Boundary) -> scorefp_core::fp_solver::BandedSystem {
    let mut rng = Lcg(seed);
    let d = h * w;
    let m: Vec<f64> = (0..d).map(|_| rng.uniform(-8.0, -1.0)).collect();
    let s: Vec<f64> = (0..d).map(|_| rng.uniform(-3.0, 3.0)).collect();
    let x: Vec<f64> = (0..d).map(|_| rng.uniform(0.0, 1.0)).collect();
    let dt = rng.uniform(0.005, 0.25);
    let inputs = StepInputs {
        height: h,
        width: w,
        m_prev_time: &m,
        score_prev_iter: &s,
        state: &x,
        t: 0.5,
        dt,
    };
    assemble_system(&inputs, &sde, boundary).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assembled_systems_match_dense(h in 3usize..=8, w in 3usize..=8, seed in any::<u64>(),
                                     sigma in 0.0f64..2.0, beta in 0.1f64..4.0, vp in any::<bool>(),
                                     reflect in any::<bool>()) {
        let sde = if vp { SdeSpec::vp_like(beta).unwrap() } else { SdeSpec::zero_drift(sigma).unwrap() };
        let boundary = if reflect { Boundary::Reflect } else { Boundary::Truncate };
        let sys = assembled(h, w, seed, sde, boundary);
        let x = solve_banded(&sys).unwrap();
        let reference = dense_solve(&sys.matrix.to_dense(), &sys.rhs);
        prop_assert!(max_rel_diff(&x, &reference) < 1e-10);
        let rhs_inf = sys.rhs.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        prop_assert!(sys.residual_inf(&x) <= 1e-9 * (1.0 + rhs_inf));
    }

    #[test]
    fn random_banded_systems_match_dense(n in 2usize..=20, lower in 0usize..5, upper in 0usize..5, seed in any::<u64>()) {
        let mut rng = Lcg(seed);
        let a = random_banded(n, lower, upper, &mut rng);
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x = a.solve(&b).unwrap();
        prop_assert!(max_rel_diff(&x, &dense_solve(&a.to_dense(), &b)) < 1e-10);
    }
}

#[test]
fn assembly_sparsity_pattern() {
    for (h, w) in [(3, 3), (4, 7), (8, 5)] {
        let sys = assembled(h, w, 3, SdeSpec::vp_like(1.3).unwrap(), Boundary::Truncate);
        let d = h * w;
        assert!(sys.matrix.nnz() <= 5 * d);
        for k in 0..d {
            assert_ne!(sys.matrix.get(k, k), 0.0);
            for j in 0..d {
                let v = sys.matrix.get(k, j);
                let on_stencil = j == k || j + 1 == k || k + 1 == j || j + w == k || k + w == j;
                if !on_stencil {
                    assert_eq!(v, 0.0);
                }
            }
            // East entry exists iff k + 1 does not wrap to the next row.
            if k + 1 < d {
                assert_eq!(sys.matrix.get(k, k + 1) != 0.0, (k + 1) % w != 0, "k={k}");
            }
            if k + w < d {
                assert_ne!(sys.matrix.get(k, k + w), 0.0);
            }
        }
    }
}
