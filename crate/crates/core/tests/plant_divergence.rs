mod common;

use common::*;
use dia_core::attack::GaussianAttack;
use dia_core::divergence::*;
use dia_core::numkernel::{max_abs, min_eigenvalue, spectral_radius, symmetrize};
use dia_core::plant::*;
use dia_core::{Matrix, Vector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random stable observer-based loop with n states and m sensors.
fn random_loop(r: &mut ChaCha8Rng, n: usize, m: usize) -> ClosedLoop {
    loop {
        let a = stable(r, n, 0.8);
        let b = gaussian(r, n, 2);
        let c = gaussian(r, m, n);
        let k = gaussian(r, 2, n) * 0.1;
        let l = gaussian(r, n, m) * 0.2;
        let plant = PlantModel::new(a, b, c, psd(r, n, n), spd(r, m)).unwrap();
        let f = augmented_transition(&plant, &k, &l);
        if spectral_radius(&f) < 0.95 {
            return build_closed_loop(plant, k, l).unwrap();
        }
    }
}

/// Static loop (F = 0): A = 0, K = 0, C = 0.
fn static_loop(r: &mut ChaCha8Rng, n: usize, m: usize) -> ClosedLoop {
    let plant = PlantModel::new(
        Matrix::zeros(n, n),
        Matrix::zeros(n, 1),
        Matrix::zeros(m, n),
        spd(r, n),
        spd(r, m),
    )
    .unwrap();
    let l = gaussian(r, n, m);
    build_closed_loop(plant, Matrix::zeros(1, n), l).unwrap()
}

#[test]
fn cstr_shaped_residual_and_precision() {
    let mut r = rng(11);
    for _ in 0..10 {
        let cl = random_loop(&mut r, 4, 4);
        let n = 4;
        let q = dia_core::numkernel::block_diag(
            cl.plant().sigma_dd(),
            &symmetrize(&(cl.l() * cl.plant().sigma_nn() * cl.l().transpose())),
        );
        let s = cl.sigma_xi();
        let resid = s - cl.f() * s * cl.f().transpose() - &q;
        assert!(max_abs(&resid) < 1e-10 * (1.0 + max_abs(&q)));
        let (m1, _) = objective_matrices(&cl).unwrap();
        let eye = Matrix::identity(n, n);
        assert!(max_abs(&(&m1 * cl.sigma_yy() - eye)) < 1e-9);
    }
}

#[test]
fn m2_matches_truncated_series() {
    let mut r = rng(12);
    for _ in 0..10 {
        let cl = random_loop(&mut r, 3, 2);
        let (_, m2) = objective_matrices(&cl).unwrap();
        let f = cl.f();
        let rho = spectral_radius(f);
        let terms = (1e-12f64.ln() / rho.ln()).ceil() as usize + 1;
        let xi_inv = cl.sigma_xi().clone().try_inverse().unwrap();
        let mut sel = Matrix::zeros(6, 2);
        sel.view_mut((3, 0), (3, 2)).copy_from(cl.l());
        let mut g = sel.clone();
        let mut acc = Matrix::zeros(2, 2);
        for _ in 0..terms {
            acc += g.transpose() * &xi_inv * &g;
            g = f * g;
        }
        let scale = max_abs(&acc);
        assert!(max_abs(&(&m2 - &acc)) <= 1e-8 * scale);
        assert!(min_eigenvalue(&m2) >= -1e-10 * scale);
    }
}

#[test]
fn cost_equals_kl_combination_without_dynamics() {
    let mut r = rng(13);
    for _ in 0..20 {
        let cl = static_loop(&mut r, 2, 2);
        assert_eq!(max_abs(cl.f()), 0.0);
        let lambda = r.random_range(0.5..5.0);
        let ctx = make_context(&cl, lambda).unwrap();
        let sigma = psd(&mut r, 2, 2);
        let attack = GaussianAttack::new(Vector::zeros(2), sigma.clone()).unwrap();
        let f = attack_cost(&ctx, &sigma, &Vector::zeros(2)).unwrap();
        let rhs = -2.0 * disruption_kl(&cl, &attack).unwrap() + 2.0 * lambda * detection_kl(&cl, &attack).unwrap();
        assert!((f - rhs).abs() < 1e-9, "{f} vs {rhs}");
    }
}

#[test]
fn trace_terms_agree_with_dynamics() {
    let mut r = rng(14);
    for _ in 0..20 {
        let cl = random_loop(&mut r, 3, 2);
        let (_, m2) = objective_matrices(&cl).unwrap();
        let sigma = psd(&mut r, 2, 2);
        let joint = attacked_joint_covariance(&cl, &sigma).unwrap();
        let xi_inv = cl.sigma_xi().clone().try_inverse().unwrap();
        let lhs = (&xi_inv * (&joint - cl.sigma_xi())).trace();
        let rhs = (&m2 * &sigma).trace();
        assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn kl_monte_carlo_scalar() {
    // E_p[log p/q] for p = N(0, 2), q = N(0, 1), to three significant digits.
    let mut r = rng(15);
    let n = 400_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let z: f64 = r.sample(rand_distr::StandardNormal);
        let x = 2f64.sqrt() * z;
        acc += -0.5 * 2f64.ln() - x * x / 4.0 + x * x / 2.0;
    }
    let mc = acc / n as f64;
    let p = GaussianSpec::new(Vector::zeros(1), Matrix::from_element(1, 1, 2.0)).unwrap();
    let q = GaussianSpec::new(Vector::zeros(1), Matrix::from_element(1, 1, 1.0)).unwrap();
    let exact = gaussian_kl(&p, &q).unwrap();
    assert!((mc - exact).abs() < 0.0025, "{mc} vs {exact}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn kl_non_negative_zero_iff_equal(seed in any::<u64>(), d in 1usize..=8, same in any::<bool>()) {
        let mut r = rng(seed);
        let q = GaussianSpec::new(gaussian(&mut r, d, 1).column(0).into_owned(), spd(&mut r, d)).unwrap();
        let p = if same {
            q.clone()
        } else {
            GaussianSpec::new(gaussian(&mut r, d, 1).column(0).into_owned(), spd(&mut r, d)).unwrap()
        };
        let kl = gaussian_kl(&p, &q).unwrap();
        prop_assert!(kl >= -1e-10);
        let gap = (&p.mean - &q.mean).norm() + (&p.cov - &q.cov).norm();
        prop_assert_eq!(kl < 1e-10, gap < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_difference(seed in any::<u64>(), m in 1usize..=4) {
        let mut r = rng(seed);
        let m1 = spd(&mut r, m);
        let m2 = spd(&mut r, m) * 3.0;
        let ctx = AttackContext::new(m1, m2, r.random_range(0.5..6.0)).unwrap();
        let sigma = psd(&mut r, m, m);
        let dir = psd(&mut r, m, 1);
        let grad = cost_gradient(&ctx, &sigma).unwrap();
        let analytic = (&grad * &dir).trace();
        let h = 1e-6;
        let zero = Vector::zeros(m);
        let fp = attack_cost(&ctx, &(&sigma + &dir * h), &zero).unwrap();
        let fm = attack_cost(&ctx, &(&sigma + &dir * (-h)).map(|v| v), &zero);
        let numeric = match fm {
            Ok(fm) => (fp - fm) / (2.0 * h),
            Err(_) => (fp - attack_cost(&ctx, &sigma, &zero).unwrap()) / h,
        };
        prop_assert!((numeric - analytic).abs() <= 1e-5 * (1.0 + analytic.abs()), "{numeric} vs {analytic}");
    }

    #[test]
    fn increment_identity(seed in any::<u64>(), m in 1usize..=4) {
        let mut r = rng(seed);
        let ctx = AttackContext::new(spd(&mut r, m), psd(&mut r, m, m) * 2.0, r.random_range(0.5..6.0)).unwrap();
        let s1 = psd(&mut r, m, m);
        let s2 = &s1 + psd(&mut r, m, 1 + m / 2);
        let zero = Vector::zeros(m);
        let diff = attack_cost(&ctx, &s2, &zero).unwrap() - attack_cost(&ctx, &s1, &zero).unwrap();
        let g = incremental_cost(&ctx, &s1, &(&s2 - &s1)).unwrap();
        prop_assert!((diff - g).abs() < 1e-9 * (1.0 + diff.abs()), "{diff} vs {g}");
    }

    #[test]
    fn mean_enters_additively(seed in any::<u64>(), m in 1usize..=4) {
        let mut r = rng(seed);
        let ctx = AttackContext::new(spd(&mut r, m), psd(&mut r, m, m), r.random_range(0.5..6.0)).unwrap();
        let sigma = psd(&mut r, m, m);
        let mu = gaussian(&mut r, m, 1).column(0).into_owned();
        let with = attack_cost(&ctx, &sigma, &mu).unwrap();
        let without = attack_cost(&ctx, &sigma, &Vector::zeros(m)).unwrap();
        let extra = ctx.lambda() * mu.dot(&(ctx.m1() * &mu)) - mu.dot(&(ctx.m2() * &mu));
        prop_assert!((with - without - extra).abs() < 1e-12 * (1.0 + with.abs() + extra.abs()));
    }

    #[test]
    fn attacked_covariance_is_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cl = random_loop(&mut r, 3, 2);
        let small = psd(&mut r, 2, 2);
        let large = &small + psd(&mut r, 2, 1);
        let a = attacked_joint_covariance(&cl, &small).unwrap();
        let b = attacked_joint_covariance(&cl, &large).unwrap();
        prop_assert!(min_eigenvalue(&(b - a)) >= -1e-9);
    }
}
