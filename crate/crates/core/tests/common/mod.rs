#![allow(dead_code)]

use dia_core::numkernel::{spectral_radius, symmetrize};
use dia_core::plant::AttackContext;
use dia_core::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random matrix rescaled to the given spectral radius.
pub fn stable(rng: &mut ChaCha8Rng, d: usize, rho: f64) -> Matrix {
    let g = gaussian(rng, d, d);
    let r = spectral_radius(&g);
    if r == 0.0 {
        g
    } else {
        g * (rho / r)
    }
}

/// Random symmetric positive semidefinite matrix of the given rank.
pub fn psd(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> Matrix {
    let g = gaussian(rng, d, rank);
    symmetrize(&(&g * g.transpose())) / rank.max(1) as f64
}

pub fn spd(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    psd(rng, d, d) + Matrix::identity(d, d) * 0.2
}

pub fn diag(v: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(v))
}

/// Random context satisfying both eigenvalue conditions of the full attack,
/// built as M1 = AAᵀ/m + ½I, M2 = s·M1 + 0.3·NNᵀ/m, λ ∈ (s, s²).
pub fn feasible_full_context(rng: &mut ChaCha8Rng, m: usize) -> AttackContext {
    loop {
        let a = gaussian(rng, m, m);
        let m1 = symmetrize(&(&a * a.transpose() / m as f64)) + Matrix::identity(m, m) * 0.5;
        let s: f64 = rng.random_range(1.5..5.0);
        let nmat = gaussian(rng, m, m);
        let m2 = symmetrize(&(&m1 * s + &nmat * nmat.transpose() * (0.3 / m as f64)));
        let lambda = rng.random_range(s..s * s);
        let ctx = AttackContext::new(m1, m2, lambda).unwrap();
        let report = dia_core::attack::feasibility_report(&ctx);
        if report.eig_condition_1 && report.eig_condition_2 {
            return ctx;
        }
    }
}
