//! Two continuous stirred-tank reactors in series.
//!
//! States are `(C_A1, T1, C_A2, T2)` in kmol/m³ and K; inputs are
//! `(C_A10, Q1, C_A20, Q2)` in kmol/m³ and kJ/h. Time is in hours. The
//! linear model works in deviation variables around the refined steady state.
//!
//! The reference feed concentration is tabulated as 4·10³ mol/m³; it is
//! stored here as 4 kmol/m³ to match the rate law.

use alloc::format;

// Float math without std; unused when std is linked and inherent methods win.
#[allow(unused_imports)]
use num_traits::Float;

use crate::numkernel::{
    ensure_square, lqr_gain, max_abs, solve_dare, spectral_radius, spd_inverse,
};
use crate::plant::{build_closed_loop, ClosedLoop, PlantModel};
use crate::{Error, Matrix, Result, Vector};

/// Physical parameters and the tabulated operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CstrParams {
    /// Inlet temperature of tank 1 (K).
    #[cfg_attr(feature = "serde", serde(rename = "T10"))]
    pub t10: f64,
    /// Inlet temperature of tank 2 (K).
    #[cfg_attr(feature = "serde", serde(rename = "T20"))]
    pub t20: f64,
    /// Feed flow into tank 1 (m³/h).
    #[cfg_attr(feature = "serde", serde(rename = "F10"))]
    pub f10: f64,
    /// Fresh feed flow into tank 2 (m³/h).
    #[cfg_attr(feature = "serde", serde(rename = "F20"))]
    pub f20: f64,
    /// Liquid volume of tank 1 (m³).
    #[cfg_attr(feature = "serde", serde(rename = "VL1"))]
    pub vl1: f64,
    /// Liquid volume of tank 2 (m³).
    #[cfg_attr(feature = "serde", serde(rename = "VL2"))]
    pub vl2: f64,
    /// Pre-exponential factor (m³/kmol/h).
    pub k0: f64,
    /// Reaction enthalpy (kJ/kmol), negative for an exothermic reaction.
    #[cfg_attr(feature = "serde", serde(rename = "dH"))]
    pub dh: f64,
    /// Heat capacity (kJ/kg/K).
    #[cfg_attr(feature = "serde", serde(rename = "Cp"))]
    pub cp: f64,
    /// Gas constant (kJ/kmol/K).
    #[cfg_attr(feature = "serde", serde(rename = "R"))]
    pub r: f64,
    /// Liquid density (kg/m³).
    #[cfg_attr(feature = "serde", serde(rename = "rhoL"))]
    pub rho_l: f64,
    /// Activation energy (kJ/kmol).
    #[cfg_attr(feature = "serde", serde(rename = "E"))]
    pub e: f64,
    /// Steady feed concentration of tank 1 (kmol/m³).
    #[cfg_attr(feature = "serde", serde(rename = "CA10s"))]
    pub ca10s: f64,
    /// Steady feed concentration of tank 2 (kmol/m³).
    #[cfg_attr(feature = "serde", serde(rename = "CA20s"))]
    pub ca20s: f64,
    /// Steady heat input of tank 1 (kJ/h).
    #[cfg_attr(feature = "serde", serde(rename = "Q1s"))]
    pub q1s: f64,
    /// Steady heat input of tank 2 (kJ/h).
    #[cfg_attr(feature = "serde", serde(rename = "Q2s"))]
    pub q2s: f64,
    /// Tabulated steady temperature of tank 1 (K).
    #[cfg_attr(feature = "serde", serde(rename = "T1s"))]
    pub t1s: f64,
    /// Tabulated steady temperature of tank 2 (K).
    #[cfg_attr(feature = "serde", serde(rename = "T2s"))]
    pub t2s: f64,
    /// Tabulated steady concentration of tank 1 (kmol/m³).
    #[cfg_attr(feature = "serde", serde(rename = "CA1s"))]
    pub ca1s: f64,
    /// Tabulated steady concentration of tank 2 (kmol/m³).
    #[cfg_attr(feature = "serde", serde(rename = "CA2s"))]
    pub ca2s: f64,
}

impl CstrParams {
    /// The reference parameter table.
    pub const TABLE1: Self = Self {
        t10: 300.0,
        t20: 300.0,
        f10: 5.0,
        f20: 5.0,
        vl1: 1.0,
        vl2: 1.0,
        k0: 8.46e6,
        dh: -1.15e4,
        cp: 0.231,
        r: 8.314,
        rho_l: 1000.0,
        e: 5.0e4,
        ca10s: 4.0,
        ca20s: 4.0,
        q1s: 0.0,
        q2s: 0.0,
        t1s: 401.9,
        t2s: 401.9,
        ca1s: 1.954,
        ca2s: 1.954,
    };

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("T10", self.t10),
            ("T20", self.t20),
            ("F10", self.f10),
            ("F20", self.f20),
            ("VL1", self.vl1),
            ("VL2", self.vl2),
            ("Cp", self.cp),
            ("R", self.r),
            ("rhoL", self.rho_l),
            ("E", self.e),
            ("T1s", self.t1s),
            ("T2s", self.t2s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("k0", self.k0),
            ("CA10s", self.ca10s),
            ("CA20s", self.ca20s),
            ("CA1s", self.ca1s),
            ("CA2s", self.ca2s),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("dH", self.dh), ("Q1s", self.q1s), ("Q2s", self.q2s)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Tabulated steady state.
    pub fn tabulated_state(&self) -> CstrState {
        CstrState {
            ca1: self.ca1s,
            t1: self.t1s,
            ca2: self.ca2s,
            t2: self.t2s,
        }
    }

    /// Steady inputs `(C_A10s, Q1s, C_A20s, Q2s)`.
    pub fn steady_input(&self) -> [f64; 4] {
        [self.ca10s, self.q1s, self.ca20s, self.q2s]
    }
}

impl Default for CstrParams {
    fn default() -> Self {
        Self::TABLE1
    }
}

/// Reactor state: concentrations in kmol/m³, temperatures in K.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CstrState {
    pub ca1: f64,
    pub t1: f64,
    pub ca2: f64,
    pub t2: f64,
}

impl CstrState {
    pub fn to_array(self) -> [f64; 4] {
        [self.ca1, self.t1, self.ca2, self.t2]
    }
    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            ca1: v[0],
            t1: v[1],
            ca2: v[2],
            t2: v[3],
        }
    }
}

fn rate_constant(p: &CstrParams, t: f64) -> f64 {
    p.k0 * (-p.e / (p.r * t)).exp()
}

/// Time derivative of the state (per hour).
pub fn cstr_derivative(state: &CstrState, input: &[f64; 4], p: &CstrParams) -> Result<[f64; 4]> {
    for t in [state.t1, state.t2] {
        if !(t > 0.0) {
            return Err(Error::NonPhysicalState { temperature: t });
        }
    }
    let [ca10, q1, ca20, q2] = *input;
    let r1 = rate_constant(p, state.t1) * state.ca1 * state.ca1;
    let r2 = rate_constant(p, state.t2) * state.ca2 * state.ca2;
    let heat = p.dh / (p.rho_l * p.cp);
    let dca1 = p.f10 / p.vl1 * (ca10 - state.ca1) - r1;
    let dt1 = p.f10 / p.vl1 * (p.t10 - state.t1) - heat * r1 + q1 / (p.rho_l * p.cp * p.vl1);
    let dca2 = p.f20 / p.vl2 * ca20 + p.f10 / p.vl2 * state.ca1 - (p.f10 + p.f20) / p.vl2 * state.ca2 - r2;
    let dt2 = p.f20 / p.vl2 * p.t20 + p.f10 / p.vl2 * state.t1 - (p.f10 + p.f20) / p.vl2 * state.t2 - heat * r2
        + q2 / (p.rho_l * p.cp * p.vl2);
    Ok([dca1, dt1, dca2, dt2])
}

/// Analytic Jacobians `(∂f/∂x, ∂f/∂u)`.
fn jacobians(state: &CstrState, p: &CstrParams) -> (Matrix, Matrix) {
    let heat = p.dh / (p.rho_l * p.cp);
    let k1 = rate_constant(p, state.t1);
    let k2 = rate_constant(p, state.t2);
    // ∂r/∂C = 2kC, ∂r/∂T = k C² E/(R T²)
    let r1c = 2.0 * k1 * state.ca1;
    let r1t = k1 * state.ca1 * state.ca1 * p.e / (p.r * state.t1 * state.t1);
    let r2c = 2.0 * k2 * state.ca2;
    let r2t = k2 * state.ca2 * state.ca2 * p.e / (p.r * state.t2 * state.t2);
    let d1 = p.f10 / p.vl1;
    let d2 = (p.f10 + p.f20) / p.vl2;
    let c21 = p.f10 / p.vl2;
    #[rustfmt::skip]
    let ac = Matrix::from_row_slice(4, 4, &[
        -d1 - r1c,    -r1t,           0.0,          0.0,
        -heat * r1c,  -d1 - heat * r1t, 0.0,        0.0,
        c21,          0.0,            -d2 - r2c,    -r2t,
        0.0,          c21,            -heat * r2c,  -d2 - heat * r2t,
    ]);
    let mut bc = Matrix::zeros(4, 4);
    bc[(0, 0)] = d1;
    bc[(1, 1)] = 1.0 / (p.rho_l * p.cp * p.vl1);
    bc[(2, 2)] = p.f20 / p.vl2;
    bc[(3, 3)] = 1.0 / (p.rho_l * p.cp * p.vl2);
    (ac, bc)
}

/// Refined operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Equilibrium {
    pub state: CstrState,
    pub input: [f64; 4],
    pub iterations: usize,
    /// Max-norm of the derivative at `state`.
    pub residual: f64,
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

fn max_norm(v: &[f64; 4]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Newton iteration on `f(x, u_s) = 0` from the tabulated steady state.
pub fn refine_steady_state(p: &CstrParams) -> Result<Equilibrium> {
    refine_steady_state_from(p, p.tabulated_state())
}

pub fn refine_steady_state_from(p: &CstrParams, start: CstrState) -> Result<Equilibrium> {
    p.validate()?;
    let input = p.steady_input();
    let mut x = start;
    let mut res = cstr_derivative(&x, &input, p)?;
    let mut iterations = 0;
    while !(max_norm(&res) < NEWTON_TOL) {
        if iterations == NEWTON_MAX_ITER || !res.iter().all(|v| v.is_finite()) {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: max_norm(&res),
            });
        }
        let (jac, _) = jacobians(&x, p);
        let rhs = -Vector::from_column_slice(&res);
        let dx = jac.lu().solve(&rhs).ok_or(Error::NewtonDiverged {
            iterations,
            residual: max_norm(&res),
        })?;
        let arr = x.to_array();
        x = CstrState::from_array([arr[0] + dx[0], arr[1] + dx[1], arr[2] + dx[2], arr[3] + dx[3]]);
        iterations += 1;
        res = cstr_derivative(&x, &input, p).map_err(|_| Error::NewtonDiverged {
            iterations,
            residual: f64::INFINITY,
        })?;
    }
    Ok(Equilibrium {
        state: x,
        input,
        iterations,
        residual: max_norm(&res),
    })
}

/// Continuous-time Jacobians `(A_c, B_c)` at an equilibrium.
pub fn linearize(p: &CstrParams, eq: &Equilibrium) -> Result<(Matrix, Matrix)> {
    let res = max_norm(&cstr_derivative(&eq.state, &eq.input, p)?);
    if !(res < 1e-8) {
        return Err(Error::NotAnEquilibrium { residual: res });
    }
    Ok(jacobians(&eq.state, p))
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    let d = ensure_square(m, "expm")?;
    let norm1 = (0..d)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if !norm1.is_finite() {
        return Err(Error::NonFinite { what: "expm argument" });
    }
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * scale;
    let mut sum = Matrix::identity(d, d);
    let mut term = Matrix::identity(d, d);
    for k in 1..=40 {
        term = &term * &a / k as f64;
        if term.iter().all(|v| *v == 0.0) {
            break;
        }
        sum += &term;
        if max_abs(&term) <= 1e-18 * max_abs(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Zero-order-hold discretization with step `dt` (hours).
pub fn discretize(ac: &Matrix, bc: &Matrix, dt: f64) -> Result<(Matrix, Matrix)> {
    let n = ensure_square(ac, "discretize: Ac")?;
    if bc.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "discretize: Bc",
            expected: (n, bc.ncols()),
            found: bc.shape(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let p = bc.ncols();
    let mut aug = Matrix::zeros(n + p, n + p);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
    aug.view_mut((0, n), (n, p)).copy_from(&(bc * dt));
    let e = expm(&aug)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, p)).into_owned(),
    ))
}

/// LQR controller and steady-state Kalman (predictor) gains.
///
/// `K = −(R + BᵀPB)⁻¹BᵀPA` for `u = Kx̂`; `L = AΣCᵀ(CΣCᵀ + Σ_nn)⁻¹` with `Σ`
/// the filtering Riccati solution for `(Aᵀ, Cᵀ, Σ_dd, Σ_nn)`.
pub fn synthesize_gains(plant: &PlantModel, q_lqr: &Matrix, r_lqr: &Matrix) -> Result<(Matrix, Matrix)> {
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let p = solve_dare(a, b, q_lqr, r_lqr)?;
    let k = lqr_gain(a, b, r_lqr, &p)?;
    let s = solve_dare(&a.transpose(), &c.transpose(), plant.sigma_dd(), plant.sigma_nn()).map_err(|e| match e {
        Error::NotStabilizable { spectral_radius } => Error::NotDetectable { spectral_radius },
        other => other,
    })?;
    let innov = c * &s * c.transpose() + plant.sigma_nn();
    let l = a * &s * c.transpose() * spd_inverse(&innov, "innovation covariance")?;
    let rho = spectral_radius(&(a - &l * c));
    if !(rho < 1.0) {
        return Err(Error::NotDetectable { spectral_radius: rho });
    }
    Ok((k, l))
}

/// Everything configurable about the case-study build.
#[derive(Debug, Clone, PartialEq)]
pub struct CstrConfig {
    pub params: CstrParams,
    /// Sampling period (hours).
    pub dt: f64,
    pub q_lqr: Matrix,
    pub r_lqr: Matrix,
    pub sigma_dd: Matrix,
    pub sigma_nn: Matrix,
}

impl Default for CstrConfig {
    fn default() -> Self {
        let diag = |v: [f64; 4]| Matrix::from_diagonal(&Vector::from_column_slice(&v));
        Self {
            params: CstrParams::TABLE1,
            dt: 0.01,
            q_lqr: diag([1.0, 1e-4, 1.0, 1e-4]),
            r_lqr: diag([1e-4, 1e-10, 1e-4, 1e-10]),
            sigma_dd: diag([1.0, 25.0, 1.0, 25.0]) * 1e-4,
            sigma_nn: diag([1.0, 25.0, 1.0, 25.0]) * 1e-4,
        }
    }
}

/// Linearized, discretized and controlled case study.
#[derive(Debug, Clone)]
pub struct CstrSystem {
    pub config: CstrConfig,
    pub equilibrium: Equilibrium,
    pub ac: Matrix,
    pub bc: Matrix,
    pub closed_loop: ClosedLoop,
}

impl CstrConfig {
    /// Refine, linearize, discretize (all states measured) and close the loop.
    pub fn build(&self) -> Result<CstrSystem> {
        let equilibrium = refine_steady_state(&self.params)?;
        let (ac, bc) = linearize(&self.params, &equilibrium)?;
        let (a, b) = discretize(&ac, &bc, self.dt)?;
        let plant = PlantModel::new(a, b, Matrix::identity(4, 4), self.sigma_dd.clone(), self.sigma_nn.clone())?;
        let (k, l) = synthesize_gains(&plant, &self.q_lqr, &self.r_lqr)?;
        let closed_loop = build_closed_loop(plant, k, l)?;
        Ok(CstrSystem {
            config: self.clone(),
            equilibrium,
            ac,
            bc,
            closed_loop,
        })
    }
}

/// One classical Runge-Kutta step of the nonlinear model with constant input.
pub fn rk4_step(state: &CstrState, input: &[f64; 4], p: &CstrParams, h: f64) -> Result<CstrState> {
    let x = state.to_array();
    let add = |k: &[f64; 4], s: f64| CstrState::from_array(core::array::from_fn(|i| x[i] + s * k[i]));
    let k1 = cstr_derivative(state, input, p)?;
    let k2 = cstr_derivative(&add(&k1, h / 2.0), input, p)?;
    let k3 = cstr_derivative(&add(&k2, h / 2.0), input, p)?;
    let k4 = cstr_derivative(&add(&k3, h), input, p)?;
    Ok(CstrState::from_array(core::array::from_fn(|i| {
        x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    })))
}
