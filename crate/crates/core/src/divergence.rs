//! Gaussian KL divergences, the attack cost `f` and its increment `g`.
//!
//! All divergences are in nats.

use crate::attack::GaussianAttack;
use crate::numkernel::{
    ensure_psd, ensure_shape, ensure_symmetric, log_det_identity_plus, max_abs, symmetrize,
};
use crate::plant::{attacked_joint_covariance, AttackContext, ClosedLoop};
use crate::{Error, Matrix, Result, Vector};
// Float math without std; unused when std is linked and inherent methods win.
#[allow(unused_imports)]
use num_traits::Float;

/// Multivariate normal `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianSpec {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        ensure_shape(&cov, (mean.len(), mean.len()), "Gaussian covariance")?;
        ensure_psd(&cov, "covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn zero_mean(cov: Matrix) -> Result<Self> {
        let d = cov.nrows();
        Self::new(Vector::zeros(d), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `D(p‖q)`.
///
/// Evaluated through the whitened covariance `W = L_q⁻¹ Σ_p L_q⁻ᵀ` as
/// `½ Σᵢ (wᵢ − 1 − ln wᵢ) + ½ μᵀΣ_q⁻¹μ`, which is non-negative term by term.
/// A singular `Σ_p` gives `+∞`.
pub fn gaussian_kl(p: &GaussianSpec, q: &GaussianSpec) -> Result<f64> {
    let d = q.dim();
    if p.dim() != d || p.cov.shape() != (d, d) || q.cov.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            context: "gaussian_kl",
            expected: (d, d),
            found: p.cov.shape(),
        });
    }
    ensure_symmetric(&q.cov, "reference covariance")?;
    ensure_symmetric(&p.cov, "covariance")?;
    let ev_q = crate::numkernel::symmetric_eigenvalues(&q.cov);
    if !(ev_q[0] > 0.0) || ev_q[d - 1] / ev_q[0] > crate::numkernel::MAX_CONDITION {
        return Err(Error::SingularReference);
    }
    let chol = symmetrize(&q.cov).cholesky().ok_or(Error::SingularReference)?;
    let lq = chol.l();
    let half = lq
        .solve_lower_triangular(&p.cov)
        .ok_or(Error::SingularReference)?;
    let w = lq
        .solve_lower_triangular(&half.transpose())
        .ok_or(Error::SingularReference)?;
    let ev = crate::numkernel::symmetric_eigenvalues(&w);
    let mut trace_term = 0.0;
    for &wi in ev.iter() {
        if wi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let dw = wi - 1.0;
        trace_term += dw - dw.ln_1p();
    }
    let mu = &p.mean - &q.mean;
    let z = lq
        .solve_lower_triangular(&mu)
        .ok_or(Error::SingularReference)?;
    Ok(0.5 * (trace_term.max(0.0) + z.norm_squared()))
}

fn check_attack(cl: &ClosedLoop, attack: &GaussianAttack) -> Result<()> {
    let m = cl.measurements();
    if attack.dim() != m {
        return Err(Error::DimensionMismatch {
            context: "attack dimension",
            expected: (m, m),
            found: attack.sigma_aa().shape(),
        });
    }
    Ok(())
}

/// Stationary mean of `ξ_a` under a constant attack mean: `(I − F)⁻¹ [0; L μ_a]`.
pub fn attacked_joint_mean(cl: &ClosedLoop, mu_a: &Vector) -> Result<Vector> {
    let n = cl.states();
    let mut drive = Vector::zeros(2 * n);
    if mu_a.iter().all(|v| *v == 0.0) {
        return Ok(drive);
    }
    drive.rows_mut(n, n).copy_from(&(cl.l() * mu_a));
    let op = Matrix::identity(2 * n, 2 * n) - cl.f();
    op.lu().solve(&drive).ok_or(Error::SingularOperator {
        condition: f64::INFINITY,
    })
}

/// Attacked and attack-free stationary laws of `ξ`.
fn joint_laws(cl: &ClosedLoop, attack: &GaussianAttack) -> Result<(GaussianSpec, GaussianSpec)> {
    check_attack(cl, attack)?;
    let cov = attacked_joint_covariance(cl, attack.sigma_aa())?;
    let mean = attacked_joint_mean(cl, attack.mu())?;
    let d = cov.nrows();
    Ok((
        GaussianSpec { mean, cov },
        GaussianSpec {
            mean: Vector::zeros(d),
            cov: cl.sigma_xi().clone(),
        },
    ))
}

/// Disruption `D(P_ξa‖P_ξ)` between attacked and nominal stationary laws of `(x, x̂)`.
pub fn disruption_kl(cl: &ClosedLoop, attack: &GaussianAttack) -> Result<f64> {
    let (p, q) = joint_laws(cl, attack)?;
    gaussian_kl(&p, &q)
}

/// `D(P_x̂a‖P_x̂)`: the divergence restricted to the estimate block.
pub fn estimate_kl(cl: &ClosedLoop, attack: &GaussianAttack) -> Result<f64> {
    let (p, q) = joint_laws(cl, attack)?;
    let n = cl.states();
    let block = |g: &GaussianSpec| GaussianSpec {
        mean: g.mean.rows(n, n).into_owned(),
        cov: g.cov.view((n, n), (n, n)).into_owned(),
    };
    gaussian_kl(&block(&p), &block(&q))
}

/// Stealthiness measure `D(P_ya‖P_y)` with `P_ya = N(μ_a, Σ_yy + Σ_aa)`.
pub fn detection_kl(cl: &ClosedLoop, attack: &GaussianAttack) -> Result<f64> {
    check_attack(cl, attack)?;
    let p = GaussianSpec {
        mean: attack.mu().clone(),
        cov: cl.sigma_yy() + attack.sigma_aa(),
    };
    let q = GaussianSpec {
        mean: Vector::zeros(attack.dim()),
        cov: cl.sigma_yy().clone(),
    };
    gaussian_kl(&p, &q)
}

fn check_cost_args(ctx: &AttackContext, sigma: &Matrix, what: &'static str) -> Result<()> {
    let m = ctx.measurements();
    ensure_shape(sigma, (m, m), "attack cost argument")?;
    ensure_symmetric(sigma, what)
}

/// Attack cost
/// `f(Σ, μ) = λ(tr(M1Σ) + μᵀM1μ − log|I + M1Σ|) − tr(M2Σ) − μᵀM2μ + log|I + M2Σ|`.
///
/// For zero-mean attacks `f = 2λ·D(P_ya‖P_y) − 2·D(P_ξa‖P_ξ)`; smaller is better for the attacker.
pub fn attack_cost(ctx: &AttackContext, sigma_aa: &Matrix, mu_a: &Vector) -> Result<f64> {
    check_cost_args(ctx, sigma_aa, "Sigma_aa")?;
    ensure_psd(sigma_aa, "Sigma_aa")?;
    if mu_a.len() != ctx.measurements() {
        return Err(Error::DimensionMismatch {
            context: "attack mean",
            expected: (ctx.measurements(), 1),
            found: (mu_a.len(), 1),
        });
    }
    let (m1, m2, lambda) = (ctx.m1(), ctx.m2(), ctx.lambda());
    let mean1 = mu_a.dot(&(m1 * mu_a));
    let mean2 = mu_a.dot(&(m2 * mu_a));
    let part1 = (m1 * sigma_aa).trace() + mean1 - log_det_identity_plus(m1, sigma_aa);
    let part2 = -(m2 * sigma_aa).trace() - mean2 + log_det_identity_plus(m2, sigma_aa);
    Ok(lambda * part1 + part2)
}

/// `(M⁻¹ + Σ)⁻¹`, computed as `(I + MΣ)⁻¹ M` so that singular `M` is allowed.
pub fn shifted_precision(m: &Matrix, sigma: &Matrix, what: &'static str) -> Result<Matrix> {
    let d = m.nrows();
    let shift = Matrix::identity(d, d) + m * sigma;
    let out = shift.lu().solve(m).ok_or(Error::SingularShift { what })?;
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularShift { what });
    }
    Ok(symmetrize(&out))
}

/// Increment `g(Δ) = f(Σ_base + Δ) − f(Σ_base)` for zero-mean attacks:
/// `λ(tr(M1Δ) − log|I + (M1⁻¹+Σ_base)⁻¹Δ|) − tr(M2Δ) + log|I + (M2⁻¹+Σ_base)⁻¹Δ|`.
///
/// `Δ` may be indefinite provided `Σ_base + Δ` stays PSD.
pub fn incremental_cost(ctx: &AttackContext, sigma_base: &Matrix, delta: &Matrix) -> Result<f64> {
    check_cost_args(ctx, sigma_base, "Sigma_base")?;
    check_cost_args(ctx, delta, "Delta")?;
    ensure_psd(sigma_base, "Sigma_base")?;
    if max_abs(delta) == 0.0 {
        return Ok(0.0);
    }
    let n1 = shifted_precision(ctx.m1(), sigma_base, "M1^-1 + Sigma_base")?;
    let n2 = shifted_precision(ctx.m2(), sigma_base, "M2^-1 + Sigma_base")?;
    let lambda = ctx.lambda();
    Ok(lambda * ((ctx.m1() * delta).trace() - log_det_identity_plus(&n1, delta))
        - (ctx.m2() * delta).trace()
        + log_det_identity_plus(&n2, delta))
}

/// Gradient of the zero-mean cost with respect to symmetric `Σ`:
/// `λ(M1 − (I + M1Σ)⁻¹M1) − M2 + (I + M2Σ)⁻¹M2`.
pub fn cost_gradient(ctx: &AttackContext, sigma: &Matrix) -> Result<Matrix> {
    check_cost_args(ctx, sigma, "Sigma_aa")?;
    let n1 = shifted_precision(ctx.m1(), sigma, "I + M1 Sigma")?;
    let n2 = shifted_precision(ctx.m2(), sigma, "I + M2 Sigma")?;
    Ok((ctx.m1() - n1) * ctx.lambda() - ctx.m2() + n2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{build_closed_loop, PlantModel};
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn normal(mean: f64, var: f64) -> GaussianSpec {
        GaussianSpec::new(Vector::from_element(1, mean), scalar(var)).unwrap()
    }

    fn scalar_loop(l: f64) -> ClosedLoop {
        let plant = PlantModel::new(scalar(0.5), scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        build_closed_loop(plant, scalar(0.0), scalar(l)).unwrap()
    }

    #[test]
    fn kl_scalar_examples() {
        let p = normal(0.3, 1.7);
        assert!(gaussian_kl(&p, &p).unwrap().abs() < 1e-15);
        let v = gaussian_kl(&normal(0.0, 2.0), &normal(0.0, 1.0)).unwrap();
        assert_relative_eq!(v, 0.5 * (1.0 - 2.0_f64.ln()), epsilon = 1e-15);
        assert_relative_eq!(v, 0.153426, epsilon = 1e-6);
        assert_relative_eq!(gaussian_kl(&normal(1.0, 1.0), &normal(0.0, 1.0)).unwrap(), 0.5);
    }

    #[test]
    fn kl_matches_textbook_formula() {
        let sp = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let sq = Matrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 0.8]);
        let mp = Vector::from_vec(alloc::vec![0.4, -1.0]);
        let mq = Vector::from_vec(alloc::vec![0.1, 0.2]);
        let qi = sq.clone().try_inverse().unwrap();
        let mu = &mp - &mq;
        let oracle = 0.5
            * ((sq.determinant() / sp.determinant()).ln() - 2.0
                + (&qi * &sp).trace()
                + mu.dot(&(&qi * &mu)));
        let p = GaussianSpec::new(mp, sp).unwrap();
        let q = GaussianSpec::new(mq, sq).unwrap();
        assert_relative_eq!(gaussian_kl(&p, &q).unwrap(), oracle, epsilon = 1e-13);
    }

    #[test]
    fn kl_singular_reference() {
        let p = normal(0.0, 1.0);
        let q = normal(0.0, 0.0);
        assert_eq!(gaussian_kl(&p, &q), Err(Error::SingularReference));
    }

    #[test]
    fn detection_kl_examples() {
        // Σ_yy = 1 requires Σ_dd = 0 in a static loop.
        let plant = PlantModel::new(scalar(0.0), scalar(0.0), scalar(1.0), scalar(0.0), scalar(1.0)).unwrap();
        let cl = build_closed_loop(plant, scalar(0.0), scalar(0.0)).unwrap();
        let zero = GaussianAttack::zero(1);
        assert_eq!(detection_kl(&cl, &zero).unwrap(), 0.0);
        let a = GaussianAttack::new(Vector::zeros(1), scalar(1.0)).unwrap();
        assert_relative_eq!(detection_kl(&cl, &a).unwrap(), 0.5 * (1.0 - 2.0_f64.ln()), epsilon = 1e-15);
        let a = GaussianAttack::new(Vector::from_element(1, 1.0), scalar(0.0)).unwrap();
        assert_relative_eq!(detection_kl(&cl, &a).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn disruption_kl_scalar_oracle() {
        let cl = scalar_loop(0.1);
        assert_eq!(disruption_kl(&cl, &GaussianAttack::zero(1)).unwrap(), 0.0);
        let attack = GaussianAttack::new(Vector::zeros(1), scalar(0.5)).unwrap();
        // Hand-derived scalar Lyapunov blocks (see plant tests) with σ_nn + σ_aa = 1.5.
        let block = |extra: f64| {
            let sxx = 4.0 / 3.0;
            let sxh = 0.05 * sxx / 0.8;
            let shh = (0.01 * sxx + 0.08 * sxh + 0.01 * (1.0 + extra)) / 0.84;
            Matrix::from_row_slice(2, 2, &[sxx, sxh, sxh, shh])
        };
        let (p, q) = (block(0.5), block(0.0));
        let qi = q.clone().try_inverse().unwrap();
        let oracle = 0.5 * ((q.determinant() / p.determinant()).ln() - 2.0 + (&qi * &p).trace());
        assert_relative_eq!(disruption_kl(&cl, &attack).unwrap(), oracle, epsilon = 1e-13);
    }

    #[test]
    fn disruption_kl_mean_term_static_loop() {
        // A = 0, K = 0 gives F = [[0, 0], [LC, −LC]]; with F ≠ 0 the mean is (I − F)⁻¹[0; Lμ].
        // Use C = 0 so F = 0 and μ_ξa = [0; Lμ].
        let plant = PlantModel::new(scalar(0.0), scalar(0.0), scalar(0.0), scalar(1.0), scalar(1.0)).unwrap();
        let cl = build_closed_loop(plant, scalar(0.0), scalar(0.5)).unwrap();
        assert!(max_abs(cl.f()) == 0.0);
        let mu = 2.0;
        let attack = GaussianAttack::new(Vector::from_element(1, mu), scalar(0.0)).unwrap();
        // Σ_ξξ = diag(1, 0.25); mean term ½ (Lμ)²/0.25.
        let oracle = 0.5 * (0.5 * mu) * (0.5 * mu) / 0.25;
        assert_relative_eq!(disruption_kl(&cl, &attack).unwrap(), oracle, epsilon = 1e-14);
    }

    #[test]
    fn attack_cost_scalar_oracle() {
        let ctx = AttackContext::new(scalar(1.0), scalar(2.0), 3.0).unwrap();
        assert_eq!(attack_cost(&ctx, &scalar(0.0), &Vector::zeros(1)).unwrap(), 0.0);
        let v = attack_cost(&ctx, &scalar(0.5), &Vector::zeros(1)).unwrap();
        let oracle = 3.0 * (0.5 - 1.5_f64.ln()) - 1.0 + 2.0_f64.ln();
        assert_relative_eq!(v, oracle, epsilon = 1e-14);
        assert_relative_eq!(v, -0.023248, epsilon = 1e-6);
    }

    #[test]
    fn attack_cost_rejects_indefinite() {
        let ctx = AttackContext::new(scalar(1.0), scalar(2.0), 3.0).unwrap();
        assert!(matches!(
            attack_cost(&ctx, &scalar(-1.0), &Vector::zeros(1)),
            Err(Error::NonPsdInput { .. })
        ));
    }

    #[test]
    fn incremental_cost_reduces_to_cost_at_zero_base() {
        let m1 = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let m2 = Matrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        let ctx = AttackContext::new(m1, m2, 4.0).unwrap();
        let delta = Matrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let g = incremental_cost(&ctx, &Matrix::zeros(2, 2), &delta).unwrap();
        let f = attack_cost(&ctx, &delta, &Vector::zeros(2)).unwrap();
        assert_relative_eq!(g, f, epsilon = 1e-14);
        assert_eq!(incremental_cost(&ctx, &delta, &Matrix::zeros(2, 2)).unwrap(), 0.0);
    }
}
