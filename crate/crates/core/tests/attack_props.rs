mod common;

use common::*;
use dia_core::attack::*;
use dia_core::divergence::attack_cost;
use dia_core::numkernel::{max_abs, min_eigenvalue, symmetrize};
use dia_core::plant::AttackContext;
use dia_core::{Error, Matrix, Vector};
use proptest::prelude::*;
use rand::Rng;

fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..300 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// `x − ln(1 + x)` without cancellation for small x.
fn phi(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut term = x * x;
        let mut acc = 0.0;
        for k in 2..40 {
            acc += term / k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
            term *= x;
        }
        acc
    } else {
        x - x.ln_1p()
    }
}

/// Scalar objective of a one-measurement attack with diagonal entries a, b.
fn scalar_objective(a: f64, b: f64, lambda: f64, v: f64) -> f64 {
    lambda * phi(a * v) - phi(b * v)
}

/// Cost increment along `v e_j` on top of a base: by the determinant lemma
/// `λ(av − ln(1 + cv)) − bv + ln(1 + dv)`.
fn ray_objective(a: f64, b: f64, c: f64, d: f64, lambda: f64, v: f64) -> f64 {
    lambda * ((a - c) * v + phi(c * v)) - (b - d) * v - phi(d * v)
}

#[test]
fn full_attack_random_contexts() {
    let mut r = rng(21);
    for case in 0..50 {
        let m = 1 + case % 6;
        let ctx = feasible_full_context(&mut r, m);
        let (attack, report) = full_attack(&ctx).unwrap();
        let sigma = attack.sigma_aa();
        let res = report.stationarity_residual.unwrap();
        assert!(res <= 1e-8 * (1.0 + max_abs(sigma)), "case {case}: residual {res}");
        if report.hessian_condition == Some(true) {
            assert!(report.hessian_min_eigenvalue.unwrap() >= -1e-9);
        }
        let zero = Vector::zeros(m);
        let base = attack_cost(&ctx, sigma, &zero).unwrap();
        for _ in 0..100 {
            let rank = 1 + r.random_range(0..m);
            let d = psd(&mut r, m, rank);
            let d = &d * (1e-3 / d.norm());
            let c = attack_cost(&ctx, &(sigma + d), &zero).unwrap();
            assert!(c >= base - 1e-9, "case {case}: probe improved {base} -> {c}");
        }
    }
}

#[test]
fn full_attack_scalar_grid_oracle() {
    let ctx = AttackContext::new(diag(&[1.0]), diag(&[2.0]), 3.0).unwrap();
    let (attack, _) = full_attack(&ctx).unwrap();
    let v = attack.sigma_aa()[(0, 0)];
    let grid = (1..=200_000).map(|i| i as f64 * 1e-5).min_by(|x, y| {
        scalar_objective(1.0, 2.0, 3.0, *x).total_cmp(&scalar_objective(1.0, 2.0, 3.0, *y))
    });
    assert!((v - 0.5).abs() < 1e-9);
    assert!((grid.unwrap() - 0.5).abs() < 1e-5);
}

#[test]
fn full_attack_singular_m2_is_regularized() {
    let m1 = Matrix::identity(2, 2);
    let m2 = diag(&[2.0, 0.0]);
    let ctx = AttackContext::new(m1, m2, 3.0).unwrap();
    let report = feasibility_report(&ctx);
    assert!(report.m2_regularized);
    assert!(!report.mu_zero_condition_alt);
    // Condition (i) fails on the regularized coordinate: ε − 3/ε < 0.
    assert!(matches!(full_attack(&ctx), Err(Error::InfeasibleLambda { .. })));
}

#[test]
fn single_measurement_battery() {
    let mut r = rng(22);
    let mut checked = 0;
    while checked < 200 {
        let m = r.random_range(1..=5);
        let m1 = spd(&mut r, m);
        let m2 = &m1 * r.random_range(1.2..6.0) + psd(&mut r, m, m);
        let ctx0 = AttackContext::new(m1, symmetrize(&m2), 1.0).unwrap();
        for j in 0..m {
            let w = lambda_window(ctx0.m1(), ctx0.m2(), j);
            if w.is_empty() {
                continue;
            }
            let lambda = r.random_range(w.lower..w.upper);
            let ctx = ctx0.with_lambda(lambda).unwrap();
            let Some(v) = single_measurement_variance(&ctx, j) else {
                continue;
            };
            let (a, b) = (ctx.m1()[(j, j)], ctx.m2()[(j, j)]);
            let oracle = golden(|x| scalar_objective(a, b, lambda, x), 0.0, 20.0 * v);
            assert!((oracle - v).abs() <= 1e-6 * v, "golden {oracle} vs closed form {v}");
            // window edges are infeasible
            for edge in [w.lower, w.upper] {
                assert!(single_measurement_variance(&ctx.with_lambda(edge).unwrap(), j).is_none());
            }
            checked += 1;
        }
    }
}

#[test]
fn greedy_k_equals_m_on_decoupled_context() {
    let a = [1.0, 0.5, 2.0, 0.8];
    let b = [2.5, 1.4, 5.5, 2.0];
    let lambda = 3.0;
    let ctx = AttackContext::new(diag(&a), diag(&b), lambda).unwrap();
    let (attack, _) = greedy_sparse_attack(&ctx, 4).unwrap();
    for j in 0..4 {
        let oracle = golden(|x| scalar_objective(a[j], b[j], lambda, x), 0.0, 100.0);
        assert!((attack.sigma_aa()[(j, j)] - oracle).abs() < 1e-6 * oracle);
    }
}

#[test]
fn exhaustive_full_support_is_coordinatewise_stationary() {
    let mut r = rng(23);
    let mut done = 0;
    while done < 20 {
        let m = 3;
        let m1 = spd(&mut r, m);
        let m2 = symmetrize(&(&m1 * 3.0 + psd(&mut r, m, m)));
        let ctx = AttackContext::new(m1, m2, r.random_range(3.0..9.0)).unwrap();
        let Ok(out) = exhaustive_sparse_attack(&ctx, m) else {
            continue;
        };
        let v = out.attack.variances();
        let zero = Vector::zeros(m);
        let base = attack_cost(&ctx, out.attack.sigma_aa(), &zero).unwrap();
        for j in 0..m {
            for s in [1.0 + 1e-4, 1.0 - 1e-4] {
                let mut moved = out.attack.sigma_aa().clone();
                moved[(j, j)] = v[j] * s;
                let c = attack_cost(&ctx, &moved, &zero).unwrap();
                assert!(c >= base - 1e-12, "coordinate {j} improves: {base} -> {c}");
            }
        }
        done += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_trace_and_sparsity(seed in any::<u64>(), m in 2usize..=6, k in 1usize..=6) {
        let mut r = rng(seed);
        let k = k.min(m);
        let m1 = spd(&mut r, m);
        let m2 = symmetrize(&(&m1 * r.random_range(1.5..5.0) + psd(&mut r, m, m) * 0.5));
        let ctx = AttackContext::new(m1, m2, r.random_range(1.0..20.0)).unwrap();
        match greedy_sparse_attack(&ctx, k) {
            Ok((attack, trace)) => {
                prop_assert_eq!(attack.support().len(), k);
                let s = attack.sigma_aa();
                for i in 0..m {
                    for j in 0..m {
                        if i != j {
                            prop_assert_eq!(s[(i, j)], 0.0);
                        }
                    }
                }
                let mut last = 0.0;
                for step in &trace {
                    prop_assert!(step.cost_after <= last);
                    last = step.cost_after;
                }
                let (single, j) = single_measurement_attack(&ctx).unwrap();
                prop_assert_eq!(trace[0].index, j);
                prop_assert_eq!(trace[0].variance, single.sigma_aa()[(j, j)]);
            }
            Err(Error::InfeasibleLambdaAtStep { step, candidates }) => {
                prop_assert!(step >= 1 && step <= k);
                prop_assert!(!candidates.is_empty());
            }
            Err(e) => prop_assert!(false, "unexpected {:?}", e),
        }
    }

    #[test]
    fn candidate_variance_minimizes_its_ray(seed in any::<u64>(), m in 2usize..=4) {
        let mut r = rng(seed);
        let m1 = spd(&mut r, m);
        let m2 = symmetrize(&(&m1 * r.random_range(1.5..5.0) + psd(&mut r, m, m) * 0.5));
        let ctx = AttackContext::new(m1, m2, r.random_range(1.5..20.0)).unwrap();
        if let Ok((attack, trace)) = greedy_sparse_attack(&ctx, m.min(2)) {
            // Re-run the last step's ray: base = previously chosen, direction e_j.
            let last = trace.last().unwrap();
            let mut base = attack.sigma_aa().clone();
            base[(last.index, last.index)] = 0.0;
            let v_star = last.variance;
            let j = last.index;
            let shifted = |mm: &Matrix| (mm.clone().try_inverse().unwrap() + &base).try_inverse().unwrap();
            let (a, b) = (ctx.m1()[(j, j)], ctx.m2()[(j, j)]);
            let (c, d) = (shifted(ctx.m1())[(j, j)], shifted(ctx.m2())[(j, j)]);
            let lambda = ctx.lambda();
            let n = 1_000_000;
            let best = (1..=n)
                .map(|i| 10.0 * v_star * i as f64 / n as f64)
                .min_by(|x, y| {
                    ray_objective(a, b, c, d, lambda, *x).total_cmp(&ray_objective(a, b, c, d, lambda, *y))
                })
                .unwrap();
            prop_assert!((best - v_star).abs() <= 1e-4 * v_star, "{} vs {}", best, v_star);
        }
    }

    #[test]
    fn exhaustive_never_worse_than_greedy(seed in any::<u64>(), k in 2usize..=3) {
        let mut r = rng(seed);
        let m = 4;
        let m1 = spd(&mut r, m);
        let m2 = symmetrize(&(&m1 * r.random_range(1.5..5.0) + psd(&mut r, m, m) * 0.5));
        let ctx = AttackContext::new(m1, m2, r.random_range(1.5..20.0)).unwrap();
        if let Ok((g, _)) = greedy_sparse_attack(&ctx, k) {
            let gc = attack_cost(&ctx, g.sigma_aa(), &Vector::zeros(m)).unwrap();
            let ex = exhaustive_sparse_attack(&ctx, k).unwrap();
            prop_assert!(ex.cost <= gc + 1e-9);
            prop_assert_eq!(ex.attack.support().len(), k);
        }
    }

    #[test]
    fn mean_condition_matches_eigenvalues(seed in any::<u64>(), m in 1usize..=4) {
        let mut r = rng(seed);
        let ctx = AttackContext::new(spd(&mut r, m), psd(&mut r, m, m) * 3.0, r.random_range(0.1..10.0)).unwrap();
        let expected = min_eigenvalue(&(ctx.m1() * ctx.lambda() - ctx.m2())) > 1e-12;
        prop_assert_eq!(check_mean_condition(&ctx), expected);
    }
}
