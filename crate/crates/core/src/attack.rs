//! Attack constructions: full (dense Σ_aa), single measurement, greedy
//! k-sparse, and an exhaustive-subset baseline.
//!
//! Every construction returns zero-mean attacks; the mean condition is only
//! reported.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

// Float math without std; unused when std is linked and inherent methods win.
#[allow(unused_imports)]
use num_traits::Float;

use crate::divergence::{attack_cost, shifted_precision};
use crate::numkernel::{
    condition_number, ensure_psd, ensure_shape, kron, max_abs, min_eigenvalue, solve_sylvester_stationarity,
    spd_inverse, symmetric_eigenvalues, symmetrize, MAX_CONDITION,
};
use crate::plant::AttackContext;
use crate::{Error, Matrix, Result, Vector};

/// Tolerance of every eigenvalue sign test in the feasibility report.
pub const EIG_TOL: f64 = 1e-10;

/// Largest number of subsets the exhaustive search will enumerate.
pub const MAX_SUBSETS: u128 = 10_000;

const DESCENT_MAX_SWEEPS: usize = 500;
const DESCENT_TOL: f64 = 1e-10;

/// Gaussian injection `a ~ N(μ, Σ_aa)` on the m measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAttack {
    mu: Vector,
    sigma_aa: Matrix,
    support: Vec<usize>,
}

impl GaussianAttack {
    pub fn new(mu: Vector, sigma_aa: Matrix) -> Result<Self> {
        let m = mu.len();
        ensure_shape(&sigma_aa, (m, m), "attack covariance")?;
        ensure_psd(&sigma_aa, "Sigma_aa")?;
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { what: "attack mean" });
        }
        let sigma_aa = symmetrize(&sigma_aa);
        let support = (0..m).filter(|&j| sigma_aa[(j, j)] > 0.0).collect();
        Ok(Self { mu, sigma_aa, support })
    }

    /// The absent attack.
    pub fn zero(m: usize) -> Self {
        Self {
            mu: Vector::zeros(m),
            sigma_aa: Matrix::zeros(m, m),
            support: Vec::new(),
        }
    }

    /// Zero-mean attack with independent components `(index, variance)`.
    pub fn diagonal(m: usize, entries: &[(usize, f64)]) -> Result<Self> {
        let mut sigma = Matrix::zeros(m, m);
        for &(j, v) in entries {
            if j >= m {
                return Err(Error::InvalidParameter(format!(
                    "measurement index {j} out of range for m = {m}"
                )));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "attack variance must be finite and non-negative, got {v}"
                )));
            }
            sigma[(j, j)] = v;
        }
        Self::new(Vector::zeros(m), sigma)
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }
    pub fn sigma_aa(&self) -> &Matrix {
        &self.sigma_aa
    }
    /// Indices with a positive diagonal entry, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
    pub fn is_zero(&self) -> bool {
        self.mu.iter().all(|v| *v == 0.0) && self.sigma_aa.iter().all(|v| *v == 0.0)
    }
    /// Diagonal of `Σ_aa`.
    pub fn variances(&self) -> Vector {
        self.sigma_aa.diagonal()
    }
}

/// Open interval of λ for which measurement `index` alone admits a positive
/// optimal variance: `(b/a, b²/a²)` with `a = M1ⱼⱼ`, `b = M2ⱼⱼ`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaWindow {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
}

impl LambdaWindow {
    pub fn is_empty(&self) -> bool {
        !(self.lower < self.upper)
    }
    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.lower && lambda < self.upper
    }
}

pub fn lambda_window(m1: &Matrix, m2: &Matrix, index: usize) -> LambdaWindow {
    let a = m1[(index, index)];
    let b = m2[(index, index)];
    LambdaWindow {
        index,
        lower: b / a,
        upper: (b * b) / (a * a),
    }
}

pub fn lambda_windows(ctx: &AttackContext) -> Vec<LambdaWindow> {
    (0..ctx.measurements())
        .map(|j| lambda_window(ctx.m1(), ctx.m2(), j))
        .collect()
}

/// Outcome of the feasibility tests at a given λ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeasibilityReport {
    pub lambda: f64,
    /// `λM1 − M2 ≻ 0`, under which the optimal attack mean is zero.
    pub mu_zero_condition: bool,
    /// The alternative statement `λM2⁻¹ ≻ Σ_yy` (false when M2 is singular).
    pub mu_zero_condition_alt: bool,
    /// All eigenvalues of `(M1⁻¹M2)ᵀ − λM1M2⁻¹` have positive real part.
    pub eig_condition_1: bool,
    /// All eigenvalues of `M2 − λM1` are negative.
    pub eig_condition_2: bool,
    /// Convexity bound on λ at the computed full attack; `None` when no full
    /// attack was computed.
    pub hessian_condition: Option<bool>,
    /// Smallest eigenvalue of the Hessian at the computed full attack.
    pub hessian_min_eigenvalue: Option<f64>,
    /// Max-norm of the symmetrized stationarity residual of the full attack.
    pub stationarity_residual: Option<f64>,
    /// M2 was singular and replaced by `M2 + εI` for the full attack.
    pub m2_regularized: bool,
    pub lambda_windows: Vec<LambdaWindow>,
}

impl FeasibilityReport {
    /// Measurements whose window contains λ.
    pub fn feasible_measurements(&self) -> Vec<usize> {
        self.lambda_windows
            .iter()
            .filter(|w| w.contains(self.lambda))
            .map(|w| w.index)
            .collect()
    }
}

/// `λM1 − M2 ≻ 0`.
pub fn check_mean_condition(ctx: &AttackContext) -> bool {
    let d = ctx.m1() * ctx.lambda() - ctx.m2();
    min_eigenvalue(&d) > 1e-12
}

fn check_mean_condition_alt(ctx: &AttackContext) -> bool {
    let m2 = ctx.m2();
    let ev = symmetric_eigenvalues(m2);
    if !(ev[0] > 0.0) || ev[ev.len() - 1] / ev[0] > MAX_CONDITION {
        return false;
    }
    match (m2.clone().try_inverse(), ctx.m1().clone().try_inverse()) {
        (Some(m2i), Some(syy)) => min_eigenvalue(&(m2i * ctx.lambda() - syy)) > 1e-12,
        _ => false,
    }
}

/// Feasibility tests that do not depend on a computed attack.
pub fn feasibility_report(ctx: &AttackContext) -> FeasibilityReport {
    let (m2, regularized) = regularized_m2(ctx.m2());
    let (c1, c2) = match stationarity_operators(ctx.m1(), &m2, ctx.lambda()) {
        Some(ops) => (ops.condition_1, ops.condition_2),
        None => (false, false),
    };
    FeasibilityReport {
        lambda: ctx.lambda(),
        mu_zero_condition: check_mean_condition(ctx),
        mu_zero_condition_alt: check_mean_condition_alt(ctx),
        eig_condition_1: c1,
        eig_condition_2: c2,
        hessian_condition: None,
        hessian_min_eigenvalue: None,
        stationarity_residual: None,
        m2_regularized: regularized,
        lambda_windows: lambda_windows(ctx),
    }
}

fn regularized_m2(m2: &Matrix) -> (Matrix, bool) {
    let m = m2.nrows();
    let ev = symmetric_eigenvalues(m2);
    if ev[0] > 0.0 && ev[m - 1] / ev[0] <= MAX_CONDITION {
        return (m2.clone(), false);
    }
    let trace = m2.trace();
    let eps = if trace > 0.0 { 1e-10 * trace / m as f64 } else { 1e-10 };
    (m2 + Matrix::identity(m, m) * eps, true)
}

struct StationarityOperators {
    p: Matrix,
    q: Matrix,
    s: Matrix,
    condition_1: bool,
    condition_2: bool,
}

/// `S = M2 − λM1`, `P = M1⁻¹M2`, `Q = −λM1M2⁻¹` and the two sign conditions.
fn stationarity_operators(m1: &Matrix, m2: &Matrix, lambda: f64) -> Option<StationarityOperators> {
    let m1_inv = m1.clone().try_inverse()?;
    let m2_inv = m2.clone().try_inverse()?;
    let p = &m1_inv * m2;
    let q = -(m1 * &m2_inv) * lambda;
    let s = m2 - m1 * lambda;
    let g = p.transpose() + &q;
    let condition_1 = if g.nrows() == 1 {
        g[(0, 0)] > EIG_TOL
    } else {
        g.complex_eigenvalues().iter().all(|z| z.re > EIG_TOL)
    };
    let condition_2 = symmetric_eigenvalues(&s).iter().all(|v| *v < -EIG_TOL);
    Some(StationarityOperators {
        p,
        q,
        s,
        condition_1,
        condition_2,
    })
}

/// Hessian of the zero-mean cost with respect to `vec(Σ)`:
/// `2Σ ⊗ (M2 − λM1) + I ⊗ (M2M1⁻¹ + M1⁻¹M2) − λ(M1M2⁻¹ + M2⁻¹M1) ⊗ I`.
pub fn hessian(ctx: &AttackContext, sigma: &Matrix) -> Result<Matrix> {
    let m = ctx.measurements();
    ensure_shape(sigma, (m, m), "Hessian: Sigma")?;
    let (m2, _) = regularized_m2(ctx.m2());
    let m1 = ctx.m1();
    let lambda = ctx.lambda();
    let m1_inv = spd_inverse(m1, "M1")?;
    let m2_inv = spd_inverse(&m2, "M2")?;
    let eye = Matrix::identity(m, m);
    let s = &m2 - m1 * lambda;
    let h = kron(&(sigma * 2.0), &s) + kron(&eye, &(&m2 * &m1_inv + &m1_inv * &m2))
        - kron(&(m1 * &m2_inv + &m2_inv * m1), &eye) * lambda;
    Ok(symmetrize(&h))
}

/// Convexity bound
/// `λ < λmin(2Σ ⊗ M2) / λmax(2Σ ⊗ M1 + (M1M2⁻¹ + M2⁻¹M1) ⊗ I)`.
fn convexity_condition(m1: &Matrix, m2: &Matrix, lambda: f64, sigma: &Matrix) -> bool {
    let m = m1.nrows();
    let Some(m2_inv) = m2.clone().try_inverse() else {
        return false;
    };
    let eye = Matrix::identity(m, m);
    let num = min_eigenvalue(&kron(&(sigma * 2.0), m2));
    let den_mat = kron(&(sigma * 2.0), m1) + kron(&(m1 * &m2_inv + &m2_inv * m1), &eye);
    let den = crate::numkernel::max_eigenvalue(&den_mat);
    den > 0.0 && lambda < num / den
}

/// Unrestricted optimal attack.
///
/// Solves the stationarity equation for `Σ_aa⁻¹` by Kronecker vectorization
/// and inverts it. Fails with [`Error::InfeasibleLambda`] when either
/// eigenvalue condition does not hold; the convexity bound is evaluated at
/// the solution and only reported.
pub fn full_attack(ctx: &AttackContext) -> Result<(GaussianAttack, FeasibilityReport)> {
    let mut report = feasibility_report(ctx);
    let (m2, _) = regularized_m2(ctx.m2());
    let lambda = ctx.lambda();
    let ops = stationarity_operators(ctx.m1(), &m2, lambda).ok_or(Error::SingularCovariance {
        what: "M1 or M2",
        condition: f64::INFINITY,
    })?;
    if !ops.condition_1 || !ops.condition_2 {
        let mut reason = String::new();
        if !ops.condition_1 {
            reason.push_str("(M1^-1 M2)^T - lambda M1 M2^-1 has an eigenvalue with non-positive real part");
        }
        if !ops.condition_2 {
            if !reason.is_empty() {
                reason.push_str("; ");
            }
            reason.push_str("M2 - lambda M1 is not negative definite");
        }
        return Err(Error::InfeasibleLambda { lambda, reason });
    }
    let x = solve_sylvester_stationarity(&ops.p, &ops.q, &ops.s)?;
    let lo = min_eigenvalue(&x);
    if !(lo > 0.0) {
        return Err(Error::InfeasibleLambda {
            lambda,
            reason: format!("stationary inverse covariance is not positive definite (min eigenvalue {lo:e})"),
        });
    }
    let sigma = spd_inverse(&x, "Sigma_aa^-1")?;

    let g = &ops.q + ops.p.transpose();
    let resid = &sigma * (&ops.s + ops.s.transpose()) * &sigma + &sigma * &g + g.transpose() * &sigma;
    report.stationarity_residual = Some(max_abs(&symmetrize(&resid)));
    report.hessian_condition = Some(convexity_condition(ctx.m1(), &m2, lambda, &sigma));
    report.hessian_min_eigenvalue = Some(min_eigenvalue(&hessian(ctx, &sigma)?));

    let attack = GaussianAttack::new(Vector::zeros(ctx.measurements()), sigma)?;
    Ok((attack, report))
}

/// Closed-form optimal variance when only measurement `j` is attacked, or
/// `None` when λ lies outside the open window.
pub fn single_measurement_variance(ctx: &AttackContext, j: usize) -> Option<f64> {
    let a = ctx.m1()[(j, j)];
    let b = ctx.m2()[(j, j)];
    let lambda = ctx.lambda();
    let window = lambda_window(ctx.m1(), ctx.m2(), j);
    if !window.contains(lambda) {
        return None;
    }
    let v = (b * b - lambda * a * a) / ((lambda * a - b) * a * b);
    (v > 0.0 && v.is_finite()).then_some(v)
}

/// Optimal attack on the fixed measurement `j`.
pub fn single_measurement_attack_at(ctx: &AttackContext, j: usize) -> Result<GaussianAttack> {
    let m = ctx.measurements();
    if j >= m {
        return Err(Error::InvalidParameter(format!(
            "measurement index {j} out of range for m = {m}"
        )));
    }
    match single_measurement_variance(ctx, j) {
        Some(v) => GaussianAttack::diagonal(m, &[(j, v)]),
        None => {
            let w = lambda_window(ctx.m1(), ctx.m2(), j);
            Err(Error::InfeasibleLambda {
                lambda: ctx.lambda(),
                reason: format!(
                    "outside the window ({}, {}) of measurement {j}",
                    w.lower, w.upper
                ),
            })
        }
    }
}

/// Best single-measurement attack; ties go to the lowest index.
pub fn single_measurement_attack(ctx: &AttackContext) -> Result<(GaussianAttack, usize)> {
    let m = ctx.measurements();
    let zero_mu = Vector::zeros(m);
    let mut best: Option<(f64, usize, GaussianAttack)> = None;
    for j in 0..m {
        let Some(v) = single_measurement_variance(ctx, j) else {
            continue;
        };
        let attack = GaussianAttack::diagonal(m, &[(j, v)])?;
        let cost = attack_cost(ctx, attack.sigma_aa(), &zero_mu)?;
        if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
            best = Some((cost, j, attack));
        }
    }
    best.map(|(_, j, a)| (a, j))
        .ok_or(Error::NoFeasibleMeasurement { lambda: ctx.lambda() })
}

/// Why a candidate measurement was rejected at a greedy step.
///
/// The first three flags are the inequalities `λa − b > 0`, positive
/// discriminant and positive root; `second_order` and `descends` are the
/// extra checks that the root is a minimizer along its coordinate and does
/// not raise the cost.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CandidateRejection {
    pub index: usize,
    pub alpha_positive: bool,
    pub discriminant_positive: bool,
    pub variance_positive: bool,
    pub second_order: bool,
    pub descends: bool,
}

impl CandidateRejection {
    /// Numbers (1–3) of the violated closed-form inequalities.
    pub fn failed_inequalities(&self) -> Vec<u8> {
        let mut out = Vec::new();
        if !self.alpha_positive {
            out.push(1);
        }
        if !self.discriminant_positive {
            out.push(2);
        }
        if !self.variance_positive {
            out.push(3);
        }
        out
    }
}

/// One accepted greedy step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GreedyStep {
    /// 1-based step number.
    pub step: usize,
    pub index: usize,
    pub variance: f64,
    pub cost_after: f64,
    pub rejected: Vec<CandidateRejection>,
}

/// Candidate variance for measurement `j` on top of the diagonal base `Σ₁`
/// (whose j-th entry must be zero).
struct Candidate {
    variance: Option<f64>,
    flags: CandidateRejection,
}

fn candidate(
    ctx: &AttackContext,
    j: usize,
    base_is_zero: bool,
    n1: &Matrix,
    n2: &Matrix,
) -> Candidate {
    let lambda = ctx.lambda();
    let a = ctx.m1()[(j, j)];
    let b = ctx.m2()[(j, j)];
    let alpha = lambda * a - b;
    let mut flags = CandidateRejection {
        index: j,
        alpha_positive: alpha > 0.0,
        discriminant_positive: false,
        variance_positive: false,
        second_order: false,
        descends: false,
    };
    let (c, d, v) = if base_is_zero {
        // Constant term vanishes; the quadratic has roots 0 and the closed form below.
        let x = lambda * a * a - b * b;
        flags.discriminant_positive = x != 0.0;
        let v = (b * b - lambda * a * a) / (alpha * a * b);
        (a, b, v)
    } else {
        let c = n1[(j, j)];
        let d = n2[(j, j)];
        let quad = alpha * c * d;
        let lin = alpha * (c + d) + c * d * (1.0 - lambda);
        let cst = alpha + d - lambda * c;
        let disc = lin * lin - 4.0 * quad * cst;
        flags.discriminant_positive = disc > 0.0;
        let root = disc.max(0.0).sqrt();
        // "+" root, written without cancellation.
        let v = if lin <= 0.0 {
            (-lin + root) / (2.0 * quad)
        } else {
            (2.0 * cst) / (-lin - root)
        };
        (c, d, v)
    };
    flags.variance_positive = v > 0.0 && v.is_finite();
    if flags.alpha_positive && flags.discriminant_positive && flags.variance_positive {
        let curvature = lambda * c * c / ((1.0 + c * v) * (1.0 + c * v)) - d * d / ((1.0 + d * v) * (1.0 + d * v));
        flags.second_order = curvature > 0.0;
    }
    let ok = flags.alpha_positive && flags.discriminant_positive && flags.variance_positive && flags.second_order;
    Candidate {
        variance: ok.then_some(v),
        flags,
    }
}

fn diagonal_matrix(m: usize, entries: &[(usize, f64)]) -> Matrix {
    let mut s = Matrix::zeros(m, m);
    for &(j, v) in entries {
        s[(j, j)] = v;
    }
    s
}

/// Greedy k-sparse construction over all measurements.
pub fn greedy_sparse_attack(ctx: &AttackContext, k: usize) -> Result<(GaussianAttack, Vec<GreedyStep>)> {
    let all: Vec<usize> = (0..ctx.measurements()).collect();
    greedy_sparse_attack_on(ctx, k, &all)
}

/// Greedy k-sparse construction restricted to the measurement indices in `allowed`.
///
/// Each step adds the measurement whose optimal variance (given the already
/// attacked ones) yields the lowest cost. Candidates whose root is not a
/// coordinate-wise minimizer or would raise the cost are rejected, so the
/// recorded cost never increases.
pub fn greedy_sparse_attack_on(
    ctx: &AttackContext,
    k: usize,
    allowed: &[usize],
) -> Result<(GaussianAttack, Vec<GreedyStep>)> {
    let m = ctx.measurements();
    let mut pool: Vec<usize> = allowed.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if let Some(&bad) = pool.iter().find(|&&j| j >= m) {
        return Err(Error::InvalidParameter(format!(
            "measurement index {bad} out of range for m = {m}"
        )));
    }
    if k == 0 || k > pool.len() {
        return Err(Error::InvalidParameter(format!(
            "sparsity k = {k} must lie in 1..={}",
            pool.len()
        )));
    }
    let zero_mu = Vector::zeros(m);
    let mut chosen: Vec<(usize, f64)> = Vec::with_capacity(k);
    let mut steps = Vec::with_capacity(k);
    let mut cost_now = 0.0;
    for step in 1..=k {
        let base = diagonal_matrix(m, &chosen);
        let base_is_zero = chosen.is_empty();
        let (n1, n2) = if base_is_zero {
            (ctx.m1().clone(), ctx.m2().clone())
        } else {
            (
                shifted_precision(ctx.m1(), &base, "M1^-1 + Sigma_1")?,
                shifted_precision(ctx.m2(), &base, "M2^-1 + Sigma_1")?,
            )
        };
        let mut best: Option<(f64, usize, f64)> = None;
        let mut rejected = Vec::new();
        for &j in pool.iter().filter(|j| !chosen.iter().any(|(c, _)| c == *j)) {
            let mut cand = candidate(ctx, j, base_is_zero, &n1, &n2);
            let Some(v) = cand.variance else {
                rejected.push(cand.flags);
                continue;
            };
            let mut trial = base.clone();
            trial[(j, j)] = v;
            let cost = attack_cost(ctx, &trial, &zero_mu)?;
            if !(cost <= cost_now) {
                rejected.push(cand.flags);
                continue;
            }
            cand.flags.descends = true;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, j, v));
            }
        }
        let Some((cost, j, v)) = best else {
            return Err(Error::InfeasibleLambdaAtStep {
                step,
                candidates: rejected,
            });
        };
        chosen.push((j, v));
        cost_now = cost;
        steps.push(GreedyStep {
            step,
            index: j,
            variance: v,
            cost_after: cost,
            rejected,
        });
    }
    let attack = GaussianAttack::diagonal(m, &chosen)?;
    Ok((attack, steps))
}

/// Result of the exhaustive subset search.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    pub attack: GaussianAttack,
    pub cost: f64,
    pub subsets_evaluated: usize,
    pub subsets_infeasible: usize,
}

/// `C(m, k)` without overflow for the sizes involved.
pub fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < m - k + i {
            idx[i] += 1;
            for t in i + 1..k {
                idx[t] = idx[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Coordinate descent on the diagonal variances of a fixed support, starting
/// from `start`. Each coordinate moves to its closed-form optimum given the
/// others, and a move is kept only if it lowers the cost.
pub fn coordinate_descent(ctx: &AttackContext, start: &[(usize, f64)]) -> Result<(Vec<(usize, f64)>, f64)> {
    let m = ctx.measurements();
    let zero_mu = Vector::zeros(m);
    let mut cur: Vec<(usize, f64)> = start.to_vec();
    let mut cost = attack_cost(ctx, &diagonal_matrix(m, &cur), &zero_mu)?;
    for _ in 0..DESCENT_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for t in 0..cur.len() {
            let (j, old) = cur[t];
            let others: Vec<(usize, f64)> = cur.iter().copied().filter(|(i, _)| *i != j).collect();
            let base = diagonal_matrix(m, &others);
            let base_is_zero = others.is_empty();
            let (n1, n2) = if base_is_zero {
                (ctx.m1().clone(), ctx.m2().clone())
            } else {
                (
                    shifted_precision(ctx.m1(), &base, "M1^-1 + Sigma_1")?,
                    shifted_precision(ctx.m2(), &base, "M2^-1 + Sigma_1")?,
                )
            };
            let Some(v) = candidate(ctx, j, base_is_zero, &n1, &n2).variance else {
                continue;
            };
            let mut trial = base;
            trial[(j, j)] = v;
            let c = attack_cost(ctx, &trial, &zero_mu)?;
            if c < cost {
                cost = c;
                cur[t].1 = v;
                max_change = max_change.max((v - old).abs() / old.abs().max(1.0));
            }
        }
        if max_change < DESCENT_TOL {
            break;
        }
    }
    Ok((cur, cost))
}

/// Best k-subset found by enumerating all supports, each refined by
/// coordinate descent from its own restricted greedy start. Infeasible
/// subsets are skipped; ties keep the lexicographically first subset.
pub fn exhaustive_sparse_attack(ctx: &AttackContext, k: usize) -> Result<ExhaustiveOutcome> {
    let m = ctx.measurements();
    if k == 0 || k > m {
        return Err(Error::InvalidParameter(format!(
            "sparsity k = {k} must lie in 1..={m}"
        )));
    }
    let count = binomial(m, k);
    if count > MAX_SUBSETS {
        return Err(Error::TooManySubsets { count });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    let mut evaluated = 0;
    let mut infeasible = 0;
    loop {
        evaluated += 1;
        match greedy_sparse_attack_on(ctx, k, &idx) {
            Ok((start, _)) => {
                let entries: Vec<(usize, f64)> = start.support().iter().map(|&j| (j, start.sigma_aa()[(j, j)])).collect();
                let (entries, cost) = coordinate_descent(ctx, &entries)?;
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, entries));
                }
            }
            Err(Error::InfeasibleLambdaAtStep { .. }) => infeasible += 1,
            Err(e) => return Err(e),
        }
        if !next_combination(&mut idx, m) {
            break;
        }
    }
    let (cost, entries) = best.ok_or(Error::InfeasibleLambda {
        lambda: ctx.lambda(),
        reason: format!("no feasible support of size {k}"),
    })?;
    Ok(ExhaustiveOutcome {
        attack: GaussianAttack::diagonal(m, &entries)?,
        cost,
        subsets_evaluated: evaluated,
        subsets_infeasible: infeasible,
    })
}

/// Condition number helper re-exported for diagnostics of the Kronecker operator.
pub fn stationarity_operator_condition(ctx: &AttackContext) -> f64 {
    let (m2, _) = regularized_m2(ctx.m2());
    match stationarity_operators(ctx.m1(), &m2, ctx.lambda()) {
        Some(ops) => {
            let g = &ops.q + ops.p.transpose();
            let eye = Matrix::identity(g.nrows(), g.nrows());
            condition_number(&(kron(&g, &eye) + kron(&eye, &g)))
        }
        None => f64::INFINITY,
    }
}
