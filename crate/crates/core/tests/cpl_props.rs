mod common;

use containment_core::cpl::{
    compensation_from, integrate_regulator_flow, pack_delta, regulator_direct_solve, regulator_flow_rhs,
    regulator_phi, regulator_rhs_vec, rho_rate, tracking_error, RegulatorProblem,
};
use containment_core::dynamics::FollowerModel;
use containment_core::linalg::sym_eigenvalues;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Instance {
    fm: FollowerModel<f64>,
    s: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.gen_range(1..4);
    let m = rng.gen_range(1..3);
    let p = rng.gen_range(1..=m);
    let q = rng.gen_range(1..4);
    let fm = FollowerModel::new(
        common::matrix(rng, n, n),
        common::matrix(rng, n, m),
        common::matrix(rng, p, n),
    )
    .unwrap();
    Instance {
        fm,
        s: common::matrix(rng, q, q),
        r: common::matrix(rng, p, q),
    }
}

/// `κ(ΦᵀΦ)`, which sets how many steps the flow needs.
fn gram_condition(inst: &Instance) -> f64 {
    let phi = regulator_phi(&inst.fm, &inst.s);
    let ev = sym_eigenvalues(&(phi.transpose() * &phi));
    ev[ev.len() - 1] / ev[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_reaches_direct_solution(seed in any::<u64>(), mu3 in 0.5f64..5.0) {
        let mut rng = common::rng(seed);
        let inst = instance(&mut rng);
        let Ok(direct) = regulator_direct_solve(&inst.s, &inst.r, &inst.fm) else {
            return Err(TestCaseError::reject("Φ rank deficient"));
        };
        prop_assume!(gram_condition(&inst) < 1e4);
        let exact = pack_delta(&direct.pi, &direct.gamma).unwrap();
        prop_assume!(exact.norm() < 1e2);
        prop_assert!(direct.state_residual < 1e-9 && direct.output_residual < 1e-9);
        let flow = integrate_regulator_flow(&inst.s, &inst.r, &inst.fm, mu3, &DVector::zeros(exact.len()), None).unwrap();
        prop_assert!((&flow - &exact).norm() < 1e-6, "‖Δ̂ − Δ‖ = {:e}", (&flow - &exact).norm());
    }

    #[test]
    fn flow_residual_is_monotone(seed in any::<u64>(), mu3 in 0.5f64..5.0) {
        let mut rng = common::rng(seed);
        let inst = instance(&mut rng);
        let prob = RegulatorProblem::new(&inst.fm, &inst.s, &inst.r).unwrap();
        let phi = &prob.phi;
        let lmax = sym_eigenvalues(&(phi.transpose() * phi)).max();
        let h = 0.2 / (mu3 * lmax);
        let mut d = common::vector(&mut rng, phi.ncols());
        let f = |d: &DVector<f64>| regulator_flow_rhs(d, &inst.s, &inst.r, &inst.fm, mu3).unwrap();
        // the matrix-free derivative is the gradient of ½μ₃‖ΦΔ − 𝓡‖²
        let dense = -(phi.transpose() * prob.residual(&d)) * mu3;
        prop_assert!((f(&d) - &dense).norm() <= 1e-12 * (1.0 + dense.norm()));
        prop_assert!((&prob.rvec - regulator_rhs_vec(inst.fm.n(), &inst.r)).norm() == 0.0);

        let mut prev = prob.residual(&d).norm_squared();
        for _ in 0..200 {
            let k1 = f(&d);
            let k2 = f(&(&d + &k1 * (h / 2.0)));
            let k3 = f(&(&d + &k2 * (h / 2.0)));
            let k4 = f(&(&d + &k3 * h));
            d += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            let cur = prob.residual(&d).norm_squared();
            prop_assert!(cur <= prev * (1.0 + 1e-12) + 1e-24, "{:e} -> {:e}", prev, cur);
            prev = cur;
        }
    }

    #[test]
    fn rho_rate_is_nonnegative_and_continuous(
        s_norm in 0.0f64..10.0,
        dbar in 1e-4f64..1.0,
        omega in 1e-4f64..1.0,
    ) {
        prop_assert!(rho_rate(s_norm, dbar, omega) >= 0.0);
        let below = rho_rate(dbar * (1.0 - 1e-12), dbar, omega);
        let at = rho_rate(dbar, dbar, omega);
        prop_assert!((at - below).abs() < 1e-9 * (1.0 + at));
    }

    #[test]
    fn compensation_never_exceeds_rho(
        seed in any::<u64>(),
        m in 1usize..4,
        rho in 0.0f64..50.0,
        omega in 1e-4f64..1.0,
        scale in -8i32..3,
    ) {
        let mut rng = common::rng(seed);
        let s = common::vector(&mut rng, m) * 10f64.powi(scale);
        let chi = compensation_from(&s, rho, omega);
        prop_assert!(chi.norm() <= rho);
        // χ̂ points along BᵀPε
        prop_assert!((chi.dot(&s) - chi.norm() * s.norm()).abs() <= 1e-12 * (1.0 + chi.norm() * s.norm()));
    }

    #[test]
    fn tracking_error_vanishes_on_the_manifold(seed in any::<u64>(), n in 1usize..5, q in 1usize..4) {
        let mut rng = common::rng(seed);
        let pi = common::matrix(&mut rng, n, q);
        let z = common::vector(&mut rng, q);
        prop_assert!(tracking_error(&(&pi * &z), &pi, &z).norm() < 1e-12);
        let x = common::vector(&mut rng, n);
        prop_assert_eq!(tracking_error(&x, &pi, &DVector::zeros(q)), x);
    }
}
