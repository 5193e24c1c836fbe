//! Dense numerical kernels shared by the rest of the crate.
//!
//! Everything here works on small matrices (dimension well below 100), so the
//! Lyapunov and Sylvester solvers assemble the Kronecker operator explicitly
//! and solve it with a pivoted LU. `vec` is column stacking, which makes
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use alloc::format;
// Float math without std; unused when std is linked and inherent methods win.
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Matrix, Result, Vector};

/// Matrices whose spectral radius reaches `1 - STABILITY_MARGIN` are rejected
/// by the Lyapunov solvers.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Largest condition number accepted before an inverse is reported singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative tolerance used for symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-10;

const DARE_MAX_ITER: usize = 100_000;
const DARE_TOL: f64 = 1e-11;

/// Largest absolute entry.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Column-stacking vectorization.
pub fn vec(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols, "unvec: length does not match shape");
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Block diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Matrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

pub fn ensure_square(m: &Matrix, context: &'static str) -> Result<usize> {
    let (r, c) = m.shape();
    if r != c || r == 0 {
        return Err(Error::DimensionMismatch {
            context,
            expected: (r.max(c).max(1), r.max(c).max(1)),
            found: (r, c),
        });
    }
    Ok(r)
}

pub fn ensure_shape(m: &Matrix, shape: (usize, usize), context: &'static str) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::DimensionMismatch {
            context,
            expected: shape,
            found: m.shape(),
        });
    }
    Ok(())
}

pub fn is_symmetric(m: &Matrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = 1.0 + max_abs(m);
    (m - m.transpose()).iter().all(|v| v.abs() <= SYMMETRY_TOL * scale)
}

pub fn ensure_symmetric(m: &Matrix, what: &'static str) -> Result<()> {
    ensure_finite(m, what)?;
    if is_symmetric(m) {
        Ok(())
    } else {
        Err(Error::NotSymmetric { what })
    }
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vector {
    let mut ev = symmetrize(m).symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    symmetric_eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    let ev = symmetric_eigenvalues(m);
    ev[ev.len() - 1]
}

/// PSD within a tolerance relative to the largest eigenvalue.
pub fn ensure_psd(m: &Matrix, what: &'static str) -> Result<()> {
    ensure_symmetric(m, what)?;
    let ev = symmetric_eigenvalues(m);
    let lo = ev[0];
    let hi = ev[ev.len() - 1].abs();
    if lo < -1e-10 * (1.0 + hi) {
        return Err(Error::NonPsdInput {
            what,
            min_eigenvalue: lo,
        });
    }
    Ok(())
}

/// Ratio of extreme singular values (infinite for exactly singular input).
pub fn condition_number(m: &Matrix) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0_f64, |a, v| a.max(*v));
    let min = sv.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive definite matrix, rejecting ill-conditioned input.
pub fn spd_inverse(m: &Matrix, what: &'static str) -> Result<Matrix> {
    let ev = symmetric_eigenvalues(m);
    let lo = ev[0];
    let hi = ev[ev.len() - 1];
    if lo <= 0.0 || hi / lo > MAX_CONDITION {
        return Err(Error::SingularCovariance {
            what,
            condition: if lo <= 0.0 { f64::INFINITY } else { hi / lo },
        });
    }
    let chol = symmetrize(m)
        .cholesky()
        .ok_or(Error::SingularCovariance {
            what,
            condition: hi / lo,
        })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Symmetric square root of a PSD matrix; small negative eigenvalues are clamped.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    v * Matrix::from_diagonal(&roots) * v.transpose()
}

/// `log|I + M Σ|` for symmetric PSD `M` and symmetric `Σ`, evaluated as
/// `log|I + M^{1/2} Σ M^{1/2}|` so the argument stays symmetric.
///
/// `Σ` may be indefinite as long as `I + MΣ` has positive determinant; a
/// non-positive spectrum yields `-inf` or NaN.
pub fn log_det_identity_plus(m: &Matrix, sigma: &Matrix) -> f64 {
    let root = psd_sqrt(m);
    let inner = symmetrize(&(&root * sigma * &root));
    let n = inner.nrows();
    let arg = Matrix::identity(n, n) + inner;
    match arg.clone().cholesky() {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => symmetric_eigenvalues(&arg).iter().map(|v| v.ln()).sum(),
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(f: &Matrix) -> f64 {
    if f.nrows() == 0 {
        return 0.0;
    }
    if f.nrows() == 1 {
        return f[(0, 0)].abs();
    }
    f.complex_eigenvalues()
        .iter()
        .fold(0.0, |acc, z| acc.max(z.re.hypot(z.im)))
}

fn ensure_stable(f: &Matrix) -> Result<()> {
    let rho = spectral_radius(f);
    if !(rho < 1.0 - STABILITY_MARGIN) {
        return Err(Error::UnstableDynamics {
            spectral_radius: rho,
        });
    }
    Ok(())
}

/// Solves `X = F X Fᵀ + Q`, the stationary covariance of `ξ ← Fξ + w`, `Cov(w) = Q`.
pub fn solve_discrete_lyapunov(f: &Matrix, q: &Matrix) -> Result<Matrix> {
    let d = ensure_square(f, "discrete Lyapunov: F")?;
    ensure_shape(q, (d, d), "discrete Lyapunov: Q")?;
    ensure_finite(f, "F")?;
    ensure_symmetric(q, "Q")?;
    ensure_stable(f)?;

    let op = Matrix::identity(d * d, d * d) - kron(f, f);
    let lu = op.lu();
    let rhs = vec(q);
    let mut x = lu.solve(&rhs).ok_or(Error::SingularOperator {
        condition: f64::INFINITY,
    })?;
    // Two rounds of iterative refinement against the unvectorized residual.
    for _ in 0..2 {
        let xm = unvec(&x, d, d);
        let resid = q - (&xm - f * &xm * f.transpose());
        if let Some(dx) = lu.solve(&vec(&resid)) {
            x += dx;
        }
    }
    Ok(symmetrize(&unvec(&x, d, d)))
}

/// Solves `X = Fᵀ X F + Q`, i.e. evaluates `Σₙ (Fᵀ)ⁿ Q Fⁿ`.
pub fn solve_transposed_discrete_lyapunov(f: &Matrix, q: &Matrix) -> Result<Matrix> {
    solve_discrete_lyapunov(&f.transpose(), q)
}

/// Solves `-(Q + Pᵀ) X - X (P + Qᵀ) = S + Sᵀ` for symmetric `X`.
///
/// With `G = Q + Pᵀ` the operator is the Kronecker sum `G ⊗ I + I ⊗ G`.
pub fn solve_sylvester_stationarity(p: &Matrix, q: &Matrix, s: &Matrix) -> Result<Matrix> {
    let d = ensure_square(p, "Sylvester: P")?;
    ensure_shape(q, (d, d), "Sylvester: Q")?;
    ensure_shape(s, (d, d), "Sylvester: S")?;
    ensure_finite(p, "P")?;
    ensure_finite(q, "Q")?;
    ensure_finite(s, "S")?;

    let g = q + p.transpose();
    let eye = Matrix::identity(d, d);
    let op = kron(&g, &eye) + kron(&eye, &g);
    let cond = condition_number(&op);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularOperator { condition: cond });
    }
    let rhs = -vec(&(s + s.transpose()));
    let lu = op.lu();
    let x = lu
        .solve(&rhs)
        .ok_or(Error::SingularOperator { condition: cond })?;
    Ok(symmetrize(&unvec(&x, d, d)))
}

/// `(R + BᵀPB)⁻¹ BᵀPA`; the LQR gain is its negative.
fn riccati_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Option<Matrix> {
    let bt_p = b.transpose() * p;
    let inner = symmetrize(&(r + &bt_p * b));
    let rhs = &bt_p * a;
    match inner.clone().cholesky() {
        Some(ch) => Some(ch.solve(&rhs)),
        None => inner.lu().solve(&rhs),
    }
}

/// Fixed point of the discrete Riccati recursion
/// `P ← AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q`, started from `P = Q`.
///
/// Convergence is declared when successive iterates differ by at most
/// `1e-11 · max(1, ‖P‖_max)`; the closed loop `A + BK` with `K = −(R + BᵀPB)⁻¹BᵀPA`
/// must come out stable.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a, "DARE: A")?;
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "DARE: B",
            expected: (n, b.ncols()),
            found: b.shape(),
        });
    }
    let m = b.ncols();
    ensure_shape(q, (n, n), "DARE: Q")?;
    ensure_shape(r, (m, m), "DARE: R")?;
    ensure_psd(q, "Q")?;
    ensure_symmetric(r, "R")?;
    if min_eigenvalue(r) <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "R must be positive definite (minimum eigenvalue {:e})",
            min_eigenvalue(r)
        )));
    }

    let at = a.transpose();
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITER {
        let gain = riccati_gain(a, b, r, &p).ok_or(Error::NoConvergence {
            iterations: DARE_MAX_ITER,
        })?;
        let next = symmetrize(&(&at * &p * a - &at * &p * b * gain + q));
        if !next.iter().all(|v| v.is_finite()) || max_abs(&next) > 1e150 {
            let rho = spectral_radius(a);
            return Err(Error::NotStabilizable {
                spectral_radius: rho,
            });
        }
        let step = max_abs(&(&next - &p));
        p = next;
        if step <= DARE_TOL * max_abs(&p).max(1.0) {
            let k = -riccati_gain(a, b, r, &p).ok_or(Error::NoConvergence {
                iterations: DARE_MAX_ITER,
            })?;
            let rho = spectral_radius(&(a + b * k));
            if !(rho < 1.0) {
                return Err(Error::NotStabilizable {
                    spectral_radius: rho,
                });
            }
            return Ok(p);
        }
    }
    Err(Error::NoConvergence {
        iterations: DARE_MAX_ITER,
    })
}

/// LQR gain `K = −(R + BᵀPB)⁻¹BᵀPA` for the convention `u = Kx`.
pub fn lqr_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    riccati_gain(a, b, r, p)
        .map(|g| -g)
        .ok_or(Error::SingularOperator {
            condition: f64::INFINITY,
        })
}
