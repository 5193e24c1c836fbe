use dia_core::cstr::*;
use dia_core::numkernel::{spectral_radius, symmetric_eigenvalues};
use dia_core::plant::{build_closed_loop, PlantModel};
use dia_core::{Matrix, Vector};
use nalgebra::Complex;

fn eig_sorted(m: &Matrix) -> Vec<Complex<f64>> {
    let mut ev: Vec<_> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev
}

#[test]
fn analytic_jacobian_matches_central_differences() {
    let p = CstrParams::TABLE1;
    let eq = refine_steady_state(&p).unwrap();
    let (ac, bc) = linearize(&p, &eq).unwrap();
    let x0 = eq.state.to_array();
    for j in 0..4 {
        let h = 1e-6 * x0[j].abs().max(1.0);
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += h;
        xm[j] -= h;
        let fp = cstr_derivative(&CstrState::from_array(xp), &eq.input, &p).unwrap();
        let fm = cstr_derivative(&CstrState::from_array(xm), &eq.input, &p).unwrap();
        for i in 0..4 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            let scale = ac[(i, j)].abs().max(1e-3);
            assert!((fd - ac[(i, j)]).abs() / scale < 1e-5, "A[{i},{j}]: {fd} vs {}", ac[(i, j)]);
        }
        let hu = 1e-6 * eq.input[j].abs().max(1.0);
        let mut up = eq.input;
        let mut um = eq.input;
        up[j] += hu;
        um[j] -= hu;
        let fp = cstr_derivative(&eq.state, &up, &p).unwrap();
        let fm = cstr_derivative(&eq.state, &um, &p).unwrap();
        for i in 0..4 {
            let fd = (fp[i] - fm[i]) / (2.0 * hu);
            let scale = bc[(i, j)].abs().max(1e-9);
            assert!((fd - bc[(i, j)]).abs() / scale < 1e-5 || (fd - bc[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn closed_loop_spectrum_separates() {
    let sys = CstrConfig::default().build().unwrap();
    let cl = &sys.closed_loop;
    let (a, b, c) = (cl.plant().a(), cl.plant().b(), cl.plant().c());
    assert!(spectral_radius(cl.f()) < 1.0);
    let mut expected = eig_sorted(&(a + b * cl.k()));
    expected.extend(eig_sorted(&(a - cl.l() * c)));
    expected.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let got = eig_sorted(cl.f());
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).norm() < 1e-8, "{g} vs {e}");
    }
    let ev = symmetric_eigenvalues(cl.sigma_xi());
    assert!(ev[0] > 0.0);
}

#[test]
fn small_deviation_follows_linear_model() {
    let cfg = CstrConfig::default();
    let sys = cfg.build().unwrap();
    let p = cfg.params;
    let eq = sys.equilibrium;
    let a = sys.closed_loop.plant().a();
    let x0 = eq.state.to_array();
    let delta0 = Vector::from_iterator(4, x0.iter().enumerate().map(|(i, v)| if i % 2 == 0 { 1e-4 * v } else { -1e-4 * v }));
    let mut state = CstrState::from_array(core::array::from_fn(|i| x0[i] + delta0[i]));
    let mut lin = delta0.clone();
    let substeps = 20;
    for step in 1..=50 {
        for _ in 0..substeps {
            state = rk4_step(&state, &eq.input, &p, cfg.dt / substeps as f64).unwrap();
        }
        lin = a * lin;
        let s = state.to_array();
        let nl = Vector::from_iterator(4, (0..4).map(|i| s[i] - x0[i]));
        let rel = (&nl - &lin).norm() / lin.norm();
        assert!(rel < 0.01, "step {step}: relative gap {rel}");
    }
}

#[test]
fn euler_error_shrinks_quadratically_with_step() {
    let sys = CstrConfig::default().build().unwrap();
    let ac = &sys.ac;
    let bc = &sys.bc;
    let err = |dt: f64| {
        let (ad, _) = discretize(ac, bc, dt).unwrap();
        (ad - (Matrix::identity(4, 4) + ac * dt)).norm()
    };
    let ratio = err(0.01) / err(0.005);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");

    // The input block is Bc·dt up to an O(‖Ac‖·dt) relative term.
    let (_, bd) = discretize(ac, bc, 1e-6).unwrap();
    let gap = (bd / 1e-6 - bc).norm() / bc.norm();
    assert!(gap < ac.norm() * 1e-6, "gap {gap}");
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

/// Positive root of the scalar DARE `p = a²p − a²b²p²/(r + b²p) + q`.
fn scalar_dare(a: f64, b: f64, q: f64, r: f64) -> f64 {
    // b²p² + (r − a²r − qb²)p − qr = 0
    let (qa, qb, qc) = (b * b, r - a * a * r - q * b * b, -q * r);
    (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
}

#[test]
fn scalar_gains_match_closed_form() {
    for &(a, b, c, q, r, sd, sn) in &[
        (1.2, 1.0, 1.0, 1.0, 1.0, 0.5, 0.2),
        (0.9, 0.5, 2.0, 3.0, 0.1, 1.0, 1.0),
        (-1.5, 2.0, 0.3, 0.2, 4.0, 0.01, 0.05),
    ] {
        let plant = PlantModel::new(scalar(a), scalar(b), scalar(c), scalar(sd), scalar(sn)).unwrap();
        let (k, l) = synthesize_gains(&plant, &scalar(q), &scalar(r)).unwrap();
        let p = scalar_dare(a, b, q, r);
        let k_exact = -a * b * p / (r + b * b * p);
        let s = scalar_dare(a, c, sd, sn);
        let l_exact = a * s * c / (c * c * s + sn);
        assert!((k[(0, 0)] - k_exact).abs() < 1e-9 * k_exact.abs().max(1.0), "K {} vs {k_exact}", k[(0, 0)]);
        assert!((l[(0, 0)] - l_exact).abs() < 1e-9 * l_exact.abs().max(1.0), "L {} vs {l_exact}", l[(0, 0)]);
        let cl = build_closed_loop(plant, k, l).unwrap();
        assert!(spectral_radius(cl.f()) < 1.0);
    }
}

#[test]
fn newton_converges_from_perturbed_start() {
    let p = CstrParams::TABLE1;
    let reference = refine_steady_state(&p).unwrap();
    let t = p.tabulated_state().to_array();
    let start = CstrState::from_array([t[0] * 1.05, t[1] - 2.0, t[2] * 0.95, t[3] + 2.0]);
    let eq = refine_steady_state_from(&p, start).unwrap();
    let (x, y) = (eq.state.to_array(), reference.state.to_array());
    for i in 0..4 {
        assert!((x[i] - y[i]).abs() < 1e-8 * y[i].abs());
    }
    assert!(eq.residual < 1e-10);
}
