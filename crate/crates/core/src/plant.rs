//! Open-loop plant, observer-based closed loop and stationary second moments.
//!
//! The plant is
//!
//! ```text
//! x(t+1) = A x(t) + B u(t) + v_d(t),   y(t) = C x(t) + v_n(t)
//! ```
//!
//! controlled by `u = K x̂` with the observer
//! `x̂(t+1) = A x̂ + B u + L (y − C x̂)`. The joint vector `ξ = (x, x̂)` evolves
//! with `F = [[A, BK], [LC, A − LC + BK]]`.

use crate::numkernel::{
    block_diag, ensure_finite, ensure_psd, ensure_shape, ensure_square, max_abs, min_eigenvalue,
    solve_discrete_lyapunov, solve_transposed_discrete_lyapunov, spd_inverse,
};
use crate::{Error, Matrix, Result};
use alloc::format;

/// Linear time-invariant plant with Gaussian process and sensor noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    sigma_dd: Matrix,
    sigma_nn: Matrix,
}

impl PlantModel {
    /// `A` is n×n, `B` n×p, `C` m×n, `Σ_dd` n×n PSD and `Σ_nn` m×m positive definite.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, sigma_dd: Matrix, sigma_nn: Matrix) -> Result<Self> {
        let n = ensure_square(&a, "plant: A")?;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "plant: B",
                expected: (n, b.ncols().max(1)),
                found: b.shape(),
            });
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                context: "plant: C",
                expected: (c.nrows().max(1), n),
                found: c.shape(),
            });
        }
        let m = c.nrows();
        ensure_shape(&sigma_dd, (n, n), "plant: Sigma_dd")?;
        ensure_shape(&sigma_nn, (m, m), "plant: Sigma_nn")?;
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        ensure_finite(&c, "C")?;
        ensure_psd(&sigma_dd, "Sigma_dd")?;
        ensure_psd(&sigma_nn, "Sigma_nn")?;
        let lo = min_eigenvalue(&sigma_nn);
        if lo <= 0.0 {
            return Err(Error::NonPsdInput {
                what: "Sigma_nn (must be positive definite)",
                min_eigenvalue: lo,
            });
        }
        Ok(Self {
            a,
            b,
            c,
            sigma_dd,
            sigma_nn,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn sigma_dd(&self) -> &Matrix {
        &self.sigma_dd
    }
    pub fn sigma_nn(&self) -> &Matrix {
        &self.sigma_nn
    }

    /// State dimension n.
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// Number of measurements m.
    pub fn measurements(&self) -> usize {
        self.c.nrows()
    }

    /// Number of control inputs.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
}

/// Plant closed by `u = K x̂` and a Luenberger/Kalman observer with gain `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    plant: PlantModel,
    k: Matrix,
    l: Matrix,
    f: Matrix,
    sigma_xi: Matrix,
    sigma_yy: Matrix,
}

impl ClosedLoop {
    pub fn plant(&self) -> &PlantModel {
        &self.plant
    }
    /// Controller gain (inputs × n).
    pub fn k(&self) -> &Matrix {
        &self.k
    }
    /// Observer gain (n × m).
    pub fn l(&self) -> &Matrix {
        &self.l
    }
    /// Augmented 2n×2n transition matrix.
    pub fn f(&self) -> &Matrix {
        &self.f
    }
    /// Stationary covariance of `ξ = (x, x̂)`.
    pub fn sigma_xi(&self) -> &Matrix {
        &self.sigma_xi
    }
    /// Stationary covariance of the attack-free measurement.
    pub fn sigma_yy(&self) -> &Matrix {
        &self.sigma_yy
    }
    /// Upper-left n×n block of `Σ_ξξ`.
    pub fn sigma_xx(&self) -> Matrix {
        let n = self.plant.states();
        self.sigma_xi.view((0, 0), (n, n)).into_owned()
    }
    pub fn states(&self) -> usize {
        self.plant.states()
    }
    pub fn measurements(&self) -> usize {
        self.plant.measurements()
    }

    /// Process-noise covariance of the augmented recursion with an extra
    /// sensor-side covariance `extra` (m×m) added to `Σ_nn`.
    fn driving_covariance(&self, extra: Option<&Matrix>) -> Matrix {
        let nn = match extra {
            Some(s) => self.plant.sigma_nn() + s,
            None => self.plant.sigma_nn().clone(),
        };
        let lower = &self.l * nn * self.l.transpose();
        block_diag(self.plant.sigma_dd(), &crate::numkernel::symmetrize(&lower))
    }
}

/// `F = [[A, BK], [LC, A − LC + BK]]`.
pub fn augmented_transition(plant: &PlantModel, k: &Matrix, l: &Matrix) -> Matrix {
    let n = plant.states();
    let bk = plant.b() * k;
    let lc = l * plant.c();
    let mut f = Matrix::zeros(2 * n, 2 * n);
    f.view_mut((0, 0), (n, n)).copy_from(plant.a());
    f.view_mut((0, n), (n, n)).copy_from(&bk);
    f.view_mut((n, 0), (n, n)).copy_from(&lc);
    f.view_mut((n, n), (n, n))
        .copy_from(&(plant.a() - &lc + &bk));
    f
}

/// Builds the closed loop and its attack-free stationary moments.
pub fn build_closed_loop(plant: PlantModel, k: Matrix, l: Matrix) -> Result<ClosedLoop> {
    let n = plant.states();
    let m = plant.measurements();
    ensure_shape(&k, (plant.inputs(), n), "closed loop: K")?;
    ensure_shape(&l, (n, m), "closed loop: L")?;
    ensure_finite(&k, "K")?;
    ensure_finite(&l, "L")?;
    let f = augmented_transition(&plant, &k, &l);
    let mut cl = ClosedLoop {
        plant,
        k,
        l,
        f,
        sigma_xi: Matrix::zeros(0, 0),
        sigma_yy: Matrix::zeros(0, 0),
    };
    let q = cl.driving_covariance(None);
    cl.sigma_xi = solve_discrete_lyapunov(&cl.f, &q)?;
    let sigma_xx = cl.sigma_xx();
    let c = cl.plant.c();
    cl.sigma_yy = crate::numkernel::symmetrize(&(c * sigma_xx * c.transpose() + cl.plant.sigma_nn()));
    Ok(cl)
}

fn check_attack_covariance(cl: &ClosedLoop, sigma_aa: &Matrix) -> Result<()> {
    let m = cl.measurements();
    ensure_shape(sigma_aa, (m, m), "attack covariance")?;
    ensure_psd(sigma_aa, "Sigma_aa")
}

/// Stationary covariance of `ξ_a` when the sensors carry an additional
/// independent Gaussian attack with covariance `Σ_aa`.
pub fn attacked_joint_covariance(cl: &ClosedLoop, sigma_aa: &Matrix) -> Result<Matrix> {
    check_attack_covariance(cl, sigma_aa)?;
    if sigma_aa.iter().all(|v| *v == 0.0) {
        return Ok(cl.sigma_xi.clone());
    }
    let q = cl.driving_covariance(Some(sigma_aa));
    solve_discrete_lyapunov(&cl.f, &q)
}

/// `Σ_yy + Σ_aa`, the attacked measurement covariance used by the attack
/// objective (the attack-free state covariance is kept on purpose).
pub fn attacked_measurement_covariance(cl: &ClosedLoop, sigma_aa: &Matrix) -> Result<Matrix> {
    check_attack_covariance(cl, sigma_aa)?;
    Ok(&cl.sigma_yy + sigma_aa)
}

/// Objective matrices `(M1, M2)`.
///
/// `M1 = Σ_yy⁻¹`. `M2 = [0 Lᵀ] X [0; L]` where `X = Σₙ (Fᵀ)ⁿ Σ_ξξ⁻¹ Fⁿ`.
pub fn objective_matrices(cl: &ClosedLoop) -> Result<(Matrix, Matrix)> {
    let m1 = spd_inverse(&cl.sigma_yy, "Sigma_yy")?;
    let n = cl.states();
    let m = cl.measurements();
    if max_abs(&cl.l) == 0.0 {
        return Ok((m1, Matrix::zeros(m, m)));
    }
    let xi_inv = spd_inverse(&cl.sigma_xi, "Sigma_xixi")?;
    let x = solve_transposed_discrete_lyapunov(&cl.f, &xi_inv)?;
    let mut selector = Matrix::zeros(2 * n, m);
    selector.view_mut((n, 0), (n, m)).copy_from(&cl.l);
    let m2 = selector.transpose() * x * &selector;
    ensure_shape(&m2, (m, m), "objective matrix M2")?;
    Ok((m1, crate::numkernel::symmetrize(&m2)))
}

/// Everything an attack construction needs: `M1`, `M2` and the weight `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackContext {
    m1: Matrix,
    m2: Matrix,
    lambda: f64,
}

impl AttackContext {
    /// Validates `M1 ≻ 0`, `M2 ⪰ 0` (both m×m) and `λ > 0`.
    pub fn new(m1: Matrix, m2: Matrix, lambda: f64) -> Result<Self> {
        let m = ensure_square(&m1, "context: M1")?;
        ensure_shape(&m2, (m, m), "context: M2")?;
        check_lambda(lambda)?;
        ensure_psd(&m1, "M1")?;
        ensure_psd(&m2, "M2")?;
        let lo = min_eigenvalue(&m1);
        if lo <= 0.0 {
            return Err(Error::NonPsdInput {
                what: "M1 (must be positive definite)",
                min_eigenvalue: lo,
            });
        }
        Ok(Self { m1, m2, lambda })
    }

    pub fn m1(&self) -> &Matrix {
        &self.m1
    }
    pub fn m2(&self) -> &Matrix {
        &self.m2
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn measurements(&self) -> usize {
        self.m1.nrows()
    }

    /// Same matrices, different weight.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            m1: self.m1.clone(),
            m2: self.m2.clone(),
            lambda,
        })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

pub fn make_context(cl: &ClosedLoop, lambda: f64) -> Result<AttackContext> {
    check_lambda(lambda)?;
    let (m1, m2) = objective_matrices(cl)?;
    AttackContext::new(m1, m2, lambda)
}
