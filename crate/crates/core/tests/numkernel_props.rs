mod common;

use common::*;
use dia_core::numkernel::*;
use dia_core::{Error, Matrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lyapunov_residual_and_psd(seed in any::<u64>(), d in 1usize..=8, rho in 0.0f64..0.97) {
        let mut r = rng(seed);
        let f = stable(&mut r, d, rho);
        let q = psd(&mut r, d, 1 + d / 2);
        let x = solve_discrete_lyapunov(&f, &q).unwrap();
        let resid = &x - &f * &x * f.transpose() - &q;
        prop_assert!(max_abs(&resid) <= 1e-10 * (1.0 + max_abs(&q)));
        prop_assert!(min_eigenvalue(&x) >= -1e-9 * x.trace().abs().max(1e-300));
    }

    #[test]
    fn transposed_lyapunov_is_lyapunov_of_transpose(seed in any::<u64>(), d in 1usize..=6) {
        let mut r = rng(seed);
        let f = stable(&mut r, d, 0.9);
        let q = spd(&mut r, d);
        let a = solve_transposed_discrete_lyapunov(&f, &q).unwrap();
        let b = solve_discrete_lyapunov(&f.transpose(), &q).unwrap();
        prop_assert_eq!(a.clone(), b);
        let resid = &a - f.transpose() * &a * &f - &q;
        prop_assert!(max_abs(&resid) <= 1e-10 * (1.0 + max_abs(&q)));
    }

    #[test]
    fn vec_round_trip(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let mut r = rng(seed);
        let m = gaussian(&mut r, rows, cols);
        prop_assert_eq!(unvec(&vec(&m), rows, cols), m);
    }

    #[test]
    fn dare_gain_stabilizes(seed in any::<u64>(), n in 1usize..=5, p in 1usize..=3) {
        let mut r = rng(seed);
        // Possibly unstable A with a generic (hence stabilizable) B.
        let a = stable(&mut r, n, 1.3);
        let b = gaussian(&mut r, n, p);
        let q = spd(&mut r, n);
        let rr = spd(&mut r, p);
        let pm = solve_dare(&a, &b, &q, &rr).unwrap();
        let k = lqr_gain(&a, &b, &rr, &pm).unwrap();
        prop_assert!(spectral_radius(&(&a + &b * k)) < 1.0);
        // fixed-point residual
        let bt = b.transpose();
        let inner = &rr + &bt * &pm * &b;
        let next = a.transpose() * &pm * &a - a.transpose() * &pm * &b * inner.try_inverse().unwrap() * &bt * &pm * &a + &q;
        prop_assert!(max_abs(&(next - &pm)) <= 1e-8 * max_abs(&pm).max(1.0));
    }

    #[test]
    fn sylvester_residual(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = gaussian(&mut r, 2, 2);
        let q = gaussian(&mut r, 2, 2) + Matrix::identity(2, 2) * 3.0;
        let s = gaussian(&mut r, 2, 2);
        match solve_sylvester_stationarity(&p, &q, &s) {
            Ok(x) => {
                let g = &q + p.transpose();
                let resid = -(&g * &x) - &x * g.transpose() - (&s + s.transpose());
                let scale = 1.0 + max_abs(&x) * max_abs(&g) + max_abs(&s);
                prop_assert!(max_abs(&resid) <= 1e-9 * scale);
                prop_assert!(is_symmetric(&x));
            }
            Err(Error::SingularOperator { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected {e:?}"),
        }
    }
}

#[test]
fn hundred_random_instances_up_to_twelve() {
    let mut r = rng(7);
    for i in 0..100 {
        let d = 1 + i % 12;
        let f = stable(&mut r, d, 0.95);
        let q = psd(&mut r, d, d);
        let x = solve_discrete_lyapunov(&f, &q).unwrap();
        let resid = &x - &f * &x * f.transpose() - &q;
        assert!(max_abs(&resid) <= 1e-10 * (1.0 + max_abs(&q)), "instance {i}");
    }
}

#[test]
fn dare_cheaper_control_moves_poles_inward() {
    let mut r = rng(3);
    let a = stable(&mut r, 3, 1.2);
    let b = Matrix::identity(3, 3);
    let q = Matrix::identity(3, 3);
    let mut last = f64::INFINITY;
    for j in 0..5 {
        let rr = Matrix::identity(3, 3) * 10f64.powi(-j);
        let p = solve_dare(&a, &b, &q, &rr).unwrap();
        let k = lqr_gain(&a, &b, &rr, &p).unwrap();
        let rho = spectral_radius(&(&a + &b * k));
        assert!(rho < last, "rho {rho} not below {last} at R = 1e-{j}");
        last = rho;
    }
    assert!(last < 0.05);
}
