//! Likelihood-ratio detection of Gaussian injection attacks.
//!
//! # Random numbers
//!
//! All sampling uses ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Samples are produced in blocks of
//! [`BLOCK_SIZE`]; block `b` of purpose `p` reads from stream
//! `(p << 32) | b`. Purposes: 0 threshold calibration, 1 false-alarm
//! estimate, 2 detection estimate, 3 trajectory simulation. Blocks are
//! independent, so results do not depend on how blocks are scheduled.

use alloc::format;
use alloc::vec::Vec;

// Float math without std; unused when std is linked and inherent methods win.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::attack::GaussianAttack;
use crate::numkernel::{psd_sqrt, symmetric_eigenvalues, symmetrize, MAX_CONDITION};
use crate::plant::ClosedLoop;
use crate::{Error, Matrix, Result, Vector};

pub const BLOCK_SIZE: usize = 1024;
pub const MIN_SAMPLES: usize = 1000;

const PURPOSE_CALIBRATION: u64 = 0;
const PURPOSE_FALSE_ALARM: u64 = 1;
const PURPOSE_DETECTION: u64 = 2;
const PURPOSE_TRAJECTORY: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Target false-alarm probability, in (0, 1].
    pub alpha_target: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha_target: 0.05,
            n_samples: 20_000,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_target > 0.0 && self.alpha_target <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha_target
            )));
        }
        if self.n_samples < MIN_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "at least {MIN_SAMPLES} samples are required, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionResult {
    pub tau: f64,
    pub p_detect: f64,
    pub p_false_alarm: f64,
    pub n_samples: usize,
}

/// Generator for block `block` of the given purpose.
pub fn block_rng(seed: u64, purpose: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | block);
    rng
}

fn standard_normal(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Lower Cholesky factor of a positive definite covariance.
fn cholesky_factor(cov: &Matrix, what: &'static str) -> Result<Matrix> {
    let ev = symmetric_eigenvalues(cov);
    let d = ev.len();
    let cond = if ev[0] > 0.0 { ev[d - 1] / ev[0] } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularCovariance { what, condition: cond });
    }
    symmetrize(cov)
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::SingularCovariance { what, condition: cond })
}

/// Precomputed log-likelihood ratio `log N(y; μ_a, Σ_yy + Σ_aa) − log N(y; 0, Σ_yy)`.
#[derive(Debug, Clone)]
pub struct LikelihoodRatio {
    chol_h0: Matrix,
    chol_h1: Matrix,
    mu: Vector,
    offset: f64,
    degenerate: bool,
}

impl LikelihoodRatio {
    pub fn new(sigma_yy: &Matrix, attack: &GaussianAttack) -> Result<Self> {
        let m = sigma_yy.nrows();
        if attack.dim() != m {
            return Err(Error::DimensionMismatch {
                context: "likelihood ratio: attack",
                expected: (m, m),
                found: attack.sigma_aa().shape(),
            });
        }
        let chol_h0 = cholesky_factor(sigma_yy, "Sigma_yy")?;
        let chol_h1 = cholesky_factor(&(sigma_yy + attack.sigma_aa()), "Sigma_yy + Sigma_aa")?;
        let logdet = |l: &Matrix| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let offset = -0.5 * (logdet(&chol_h1) - logdet(&chol_h0));
        Ok(Self {
            chol_h0,
            chol_h1,
            mu: attack.mu().clone(),
            offset,
            degenerate: attack.is_zero(),
        })
    }

    pub fn for_loop(cl: &ClosedLoop, attack: &GaussianAttack) -> Result<Self> {
        Self::new(cl.sigma_yy(), attack)
    }

    /// True when the ratio is identically zero.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn evaluate(&self, y: &Vector) -> f64 {
        let q0 = self
            .chol_h0
            .solve_lower_triangular(y)
            .map(|z| z.norm_squared())
            .unwrap_or(f64::INFINITY);
        let centered = y - &self.mu;
        let q1 = self
            .chol_h1
            .solve_lower_triangular(&centered)
            .map(|z| z.norm_squared())
            .unwrap_or(f64::INFINITY);
        self.offset - 0.5 * q1 + 0.5 * q0
    }

    /// LLR values of `n` draws from `N(mean, L Lᵀ)` in purpose stream `purpose`.
    fn sample(&self, under_h1: bool, n: usize, seed: u64, purpose: u64) -> Vec<f64> {
        let (factor, mean) = if under_h1 {
            (&self.chol_h1, Some(&self.mu))
        } else {
            (&self.chol_h0, None)
        };
        let d = factor.nrows();
        let mut out = Vec::with_capacity(n);
        let blocks = n.div_ceil(BLOCK_SIZE);
        for b in 0..blocks {
            let mut rng = block_rng(seed, purpose, b as u64);
            let len = BLOCK_SIZE.min(n - b * BLOCK_SIZE);
            for _ in 0..len {
                let mut y = factor * standard_normal(&mut rng, d);
                if let Some(mu) = mean {
                    y += mu;
                }
                out.push(self.evaluate(&y));
            }
        }
        out
    }
}

pub fn log_likelihood_ratio(y: &Vector, cl: &ClosedLoop, attack: &GaussianAttack) -> Result<f64> {
    if y.len() != cl.measurements() {
        return Err(Error::DimensionMismatch {
            context: "likelihood ratio: y",
            expected: (cl.measurements(), 1),
            found: (y.len(), 1),
        });
    }
    Ok(LikelihoodRatio::for_loop(cl, attack)?.evaluate(y))
}

/// Empirical `(1 − α)` quantile: the `⌈(1 − α) n⌉`-th smallest value.
pub fn empirical_quantile(values: &mut [f64], alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return f64::NEG_INFINITY;
    }
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let rank = ((1.0 - alpha) * n as f64).ceil() as usize;
    values[rank.clamp(1, n) - 1]
}

fn calibrate(lr: &LikelihoodRatio, cfg: &DetectorConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.alpha_target >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if lr.is_degenerate() {
        return Err(Error::DegenerateAttack);
    }
    let mut h0 = lr.sample(false, cfg.n_samples, cfg.seed, PURPOSE_CALIBRATION);
    Ok(empirical_quantile(&mut h0, cfg.alpha_target))
}

/// Threshold `τ` giving false-alarm rate `α` on an attack-free sample; the
/// detector alarms when the LLR is at least `τ`. `α = 1` returns `−∞`.
pub fn calibrate_threshold(cl: &ClosedLoop, attack: &GaussianAttack, cfg: &DetectorConfig) -> Result<f64> {
    calibrate(&LikelihoodRatio::for_loop(cl, attack)?, cfg)
}

fn alarm_rate(values: &[f64], tau: f64) -> f64 {
    values.iter().filter(|v| **v >= tau).count() as f64 / values.len() as f64
}

/// Calibrates `τ`, then estimates detection and false-alarm probabilities on
/// fresh samples.
pub fn detection_probability(cl: &ClosedLoop, attack: &GaussianAttack, cfg: &DetectorConfig) -> Result<DetectionResult> {
    detection_probability_for(&LikelihoodRatio::for_loop(cl, attack)?, cfg)
}

/// As [`detection_probability`] for a prepared ratio.
pub fn detection_probability_for(lr: &LikelihoodRatio, cfg: &DetectorConfig) -> Result<DetectionResult> {
    if lr.is_degenerate() {
        return Err(Error::DegenerateAttack);
    }
    let tau = calibrate(lr, cfg)?;
    let h0 = lr.sample(false, cfg.n_samples, cfg.seed, PURPOSE_FALSE_ALARM);
    let h1 = lr.sample(true, cfg.n_samples, cfg.seed, PURPOSE_DETECTION);
    Ok(DetectionResult {
        tau,
        p_detect: alarm_rate(&h1, tau),
        p_false_alarm: alarm_rate(&h0, tau),
        n_samples: cfg.n_samples,
    })
}

/// Simulated closed-loop run. Column `t` of `xi` is `(x(t), x̂(t))` and column
/// `t` of `y` is the (attacked) measurement fed to the observer at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub xi: Matrix,
    pub y: Matrix,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.xi.ncols()
    }

    /// Sample covariance (about the sample mean) of columns `from..` of `data`.
    pub fn covariance(data: &Matrix, from: usize) -> Matrix {
        let cols = data.columns(from, data.ncols() - from);
        let n = cols.ncols() as f64;
        let mean = cols.column_mean();
        let centered = Matrix::from_fn(cols.nrows(), cols.ncols(), |i, j| cols[(i, j)] - mean[i]);
        &centered * centered.transpose() / n
    }
}

/// Simulates the attacked closed loop from `ξ(0) = 0`:
///
/// ```text
/// y(t)    = C x(t) + v_n(t) + a(t)
/// x(t+1)  = A x(t) + B K x̂(t) + v_d(t)
/// x̂(t+1) = A x̂(t) + B K x̂(t) + L (y(t) − C x̂(t))
/// ```
pub fn sample_stationary_trajectory(
    cl: &ClosedLoop,
    attack: &GaussianAttack,
    steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let m = cl.measurements();
    let n = cl.states();
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    if attack.dim() != m {
        return Err(Error::DimensionMismatch {
            context: "trajectory: attack",
            expected: (m, m),
            found: attack.sigma_aa().shape(),
        });
    }
    let rho = crate::numkernel::spectral_radius(cl.f());
    if !(rho < 1.0) {
        return Err(Error::UnstableDynamics { spectral_radius: rho });
    }
    let plant = cl.plant();
    let sd = psd_sqrt(plant.sigma_dd());
    let sn = psd_sqrt(plant.sigma_nn());
    let sa = psd_sqrt(attack.sigma_aa());
    let (a, c) = (plant.a(), plant.c());
    let bk = plant.b() * cl.k();
    let l = cl.l();
    let mut rng = block_rng(seed, PURPOSE_TRAJECTORY, 0);
    let mut x = Vector::zeros(n);
    let mut xh = Vector::zeros(n);
    let mut xi = Matrix::zeros(2 * n, steps);
    let mut ys = Matrix::zeros(m, steps);
    for t in 0..steps {
        let vd = &sd * standard_normal(&mut rng, n);
        let vn = &sn * standard_normal(&mut rng, m);
        let at = &sa * standard_normal(&mut rng, m) + attack.mu();
        let y = c * &x + vn + at;
        xi.view_mut((0, t), (n, 1)).copy_from(&x);
        xi.view_mut((n, t), (n, 1)).copy_from(&xh);
        ys.set_column(t, &y);
        let u = &bk * &xh;
        let x_next = a * &x + &u + vd;
        let xh_next = a * &xh + &u + l * (y - c * &xh);
        x = x_next;
        xh = xh_next;
    }
    Ok(Trajectory { xi, y: ys })
}
