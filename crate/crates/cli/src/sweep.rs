//! λ sweeps producing Pareto records.

use dia_core::attack::{
    feasibility_report, full_attack, greedy_sparse_attack_on, lambda_windows, single_measurement_attack,
    single_measurement_attack_at, FeasibilityReport, GaussianAttack, GreedyStep,
};
use dia_core::detector::{detection_probability, DetectionResult, DetectorConfig};
use dia_core::divergence::{attack_cost, detection_kl, disruption_kl, estimate_kl};
use dia_core::plant::{make_context, AttackContext, ClosedLoop};
use dia_core::{Error, Matrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Number of auto-grid points strictly inside the window.
pub const AUTO_POINTS: usize = 20;

/// Attack construction. Measurement indices are 0-based here and 1-based in
/// every user-facing input and output.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackKind {
    Full,
    /// Fixed measurement, or the best one at each λ when `None`.
    Single(Option<usize>),
    /// Greedy k-sparse over `allowed` (all measurements when `None`).
    Sparse { k: usize, allowed: Option<Vec<usize>> },
    /// Greedy over a unit's measurements, stopping early when no further
    /// measurement admits a cost-reducing variance.
    Unit(Vec<usize>),
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Full => "full",
            AttackKind::Single(_) => "single",
            AttackKind::Sparse { .. } => "sparse",
            AttackKind::Unit(_) => "unit",
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            AttackKind::Full => None,
            AttackKind::Single(_) => Some(1),
            AttackKind::Sparse { k, .. } => Some(*k),
            AttackKind::Unit(s) => Some(s.len()),
        }
    }

    /// Measurements whose windows drive the auto grid.
    pub fn scope(&self, m: usize) -> Vec<usize> {
        match self {
            AttackKind::Single(Some(j)) => vec![*j],
            AttackKind::Sparse { allowed: Some(s), .. } | AttackKind::Unit(s) => s.clone(),
            _ => (0..m).collect(),
        }
    }

    pub fn validate(&self, m: usize) -> CliResult<()> {
        let check = |j: &usize| {
            if *j >= m {
                Err(CliError::Validation(format!("measurement {} out of range 1..={m}", j + 1)))
            } else {
                Ok(())
            }
        };
        match self {
            AttackKind::Full | AttackKind::Single(None) => Ok(()),
            AttackKind::Single(Some(j)) => check(j),
            AttackKind::Sparse { k, allowed } => {
                let pool = allowed.as_ref().map_or(m, Vec::len);
                if let Some(s) = allowed {
                    s.iter().try_for_each(check)?;
                }
                if *k == 0 || *k > pool {
                    return Err(CliError::Validation(format!("k = {k} must lie in 1..={pool}")));
                }
                Ok(())
            }
            AttackKind::Unit(s) => {
                if s.is_empty() {
                    return Err(CliError::Validation("empty unit".into()));
                }
                s.iter().try_for_each(check)
            }
        }
    }
}

/// Default curve label of a construction.
pub fn curve_label(kind: &AttackKind) -> String {
    match kind {
        AttackKind::Full => "full".into(),
        AttackKind::Single(None) => "single".into(),
        AttackKind::Single(Some(j)) => format!("y{}", j + 1),
        AttackKind::Sparse { k, .. } => format!("sparse{k}"),
        AttackKind::Unit(u) => {
            let ids: Vec<String> = u.iter().map(|j| (j + 1).to_string()).collect();
            format!("unit{{{}}}", ids.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Infeasible,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Infeasible => "infeasible",
            Status::Error => "error",
        }
    }
}

/// Compact feasibility summary carried by every record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilitySummary {
    pub mean_condition: bool,
    /// 1-based measurements whose single-measurement window contains λ.
    pub feasible_measurements: Vec<usize>,
    pub eig_condition_1: bool,
    pub eig_condition_2: bool,
    pub hessian_condition: Option<bool>,
    pub stationarity_residual: Option<f64>,
    pub m2_regularized: bool,
}

impl From<&FeasibilityReport> for FeasibilitySummary {
    fn from(r: &FeasibilityReport) -> Self {
        Self {
            mean_condition: r.mu_zero_condition,
            feasible_measurements: r.feasible_measurements().iter().map(|j| j + 1).collect(),
            eig_condition_1: r.eig_condition_1,
            eig_condition_2: r.eig_condition_2,
            hessian_condition: r.hessian_condition,
            stationarity_residual: r.stationarity_residual,
            m2_regularized: r.m2_regularized,
        }
    }
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoRecord {
    /// Curve label (`full`, `single`, `y3`, `unit{1,2}`, ...).
    pub curve: String,
    pub kind: &'static str,
    pub k: Option<usize>,
    pub lambda: f64,
    pub status: Status,
    /// 1-based attacked measurements.
    pub support: Vec<usize>,
    pub attack_cost: Option<f64>,
    pub disruption_kl: Option<f64>,
    pub estimate_kl: Option<f64>,
    pub detection_kl: Option<f64>,
    pub p_detect: Option<f64>,
    pub p_false_alarm: Option<f64>,
    pub tau: Option<f64>,
    /// Row-major attack covariance.
    pub sigma_aa: Option<Vec<f64>>,
    pub feasibility: FeasibilitySummary,
    pub reason: Option<String>,
}

/// Extra per-λ output of the `attack` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackDetail {
    pub lambda: f64,
    pub feasibility: Option<FeasibilityReport>,
    pub greedy_steps: Option<Vec<GreedyStep>>,
}

/// A successfully built attack together with its diagnostics.
pub struct Built {
    pub attack: GaussianAttack,
    pub report: FeasibilityReport,
    pub steps: Option<Vec<GreedyStep>>,
}

/// Build the attack of `kind` in `ctx`.
pub fn build_attack(ctx: &AttackContext, kind: &AttackKind) -> Result<Built, Error> {
    let m = ctx.measurements();
    match kind {
        AttackKind::Full => {
            let (attack, report) = full_attack(ctx)?;
            Ok(Built { attack, report, steps: None })
        }
        AttackKind::Single(j) => {
            let attack = match j {
                Some(j) => single_measurement_attack_at(ctx, *j)?,
                None => single_measurement_attack(ctx)?.0,
            };
            Ok(Built { attack, report: feasibility_report(ctx), steps: None })
        }
        AttackKind::Sparse { k, allowed } => {
            let all: Vec<usize> = (0..m).collect();
            let (attack, steps) = greedy_sparse_attack_on(ctx, *k, allowed.as_deref().unwrap_or(&all))?;
            Ok(Built { attack, report: feasibility_report(ctx), steps: Some(steps) })
        }
        AttackKind::Unit(unit) => {
            let (attack, steps) = match greedy_sparse_attack_on(ctx, unit.len(), unit) {
                Err(Error::InfeasibleLambdaAtStep { step, .. }) if step > 1 => {
                    greedy_sparse_attack_on(ctx, step - 1, unit)?
                }
                other => other?,
            };
            Ok(Built { attack, report: feasibility_report(ctx), steps: Some(steps) })
        }
    }
}

/// Row-major entries of a matrix.
pub fn flatten(m: &Matrix) -> Vec<f64> {
    m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect()
}

/// Divergences and cost of an attack.
pub fn measure(cl: &ClosedLoop, ctx: &AttackContext, attack: &GaussianAttack) -> Result<[f64; 4], Error> {
    Ok([
        attack_cost(ctx, attack.sigma_aa(), attack.mu())?,
        disruption_kl(cl, attack)?,
        estimate_kl(cl, attack)?,
        detection_kl(cl, attack)?,
    ])
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Evaluate one sweep cell. Failures become rows, never errors.
pub fn sweep_cell(
    cl: &ClosedLoop,
    kind: &AttackKind,
    curve: &str,
    lambda: f64,
    detector: Option<&DetectorConfig>,
) -> (ParetoRecord, AttackDetail) {
    let mut rec = ParetoRecord {
        curve: curve.to_owned(),
        kind: kind.name(),
        k: kind.k(),
        lambda,
        status: Status::Ok,
        support: Vec::new(),
        attack_cost: None,
        disruption_kl: None,
        estimate_kl: None,
        detection_kl: None,
        p_detect: None,
        p_false_alarm: None,
        tau: None,
        sigma_aa: None,
        feasibility: FeasibilitySummary {
            mean_condition: false,
            feasible_measurements: Vec::new(),
            eig_condition_1: false,
            eig_condition_2: false,
            hessian_condition: None,
            stationarity_residual: None,
            m2_regularized: false,
        },
        reason: None,
    };
    let mut detail = AttackDetail { lambda, feasibility: None, greedy_steps: None };
    let fail = |rec: &mut ParetoRecord, e: Error| {
        let infeasible = matches!(
            e,
            Error::InfeasibleLambda { .. } | Error::NoFeasibleMeasurement { .. } | Error::InfeasibleLambdaAtStep { .. }
        );
        rec.status = if infeasible { Status::Infeasible } else { Status::Error };
        rec.reason = Some(e.to_string());
    };
    let ctx = match make_context(cl, lambda) {
        Ok(c) => c,
        Err(e) => {
            fail(&mut rec, e);
            return (rec, detail);
        }
    };
    rec.feasibility = (&feasibility_report(&ctx)).into();
    let built = match build_attack(&ctx, kind) {
        Ok(b) => b,
        Err(e) => {
            fail(&mut rec, e);
            return (rec, detail);
        }
    };
    rec.feasibility = (&built.report).into();
    detail.feasibility = Some(built.report.clone());
    detail.greedy_steps = built.steps.clone();
    rec.support = built.attack.support().iter().map(|j| j + 1).collect();
    match measure(cl, &ctx, &built.attack) {
        Ok([cost, dis, est, det]) if [cost, dis, est, det].iter().all(|v| v.is_finite()) => {
            rec.attack_cost = Some(cost);
            rec.disruption_kl = Some(dis);
            rec.estimate_kl = Some(est);
            rec.detection_kl = Some(det);
            rec.sigma_aa = Some(flatten(built.attack.sigma_aa()));
        }
        Ok(_) => {
            rec.status = Status::Error;
            rec.reason = Some("non-finite divergence".into());
            return (rec, detail);
        }
        Err(e) => {
            fail(&mut rec, e);
            return (rec, detail);
        }
    }
    if let Some(cfg) = detector {
        match detection_probability(cl, &built.attack, cfg) {
            Ok(d) => {
                rec.p_detect = Some(d.p_detect);
                rec.p_false_alarm = Some(d.p_false_alarm);
                rec.tau = finite(d.tau);
            }
            Err(e) => fail(&mut rec, e),
        }
    }
    (rec, detail)
}

/// Run `kind` over an ascending λ grid. Cells run in parallel; output order
/// follows the grid.
pub fn pareto_sweep(
    cl: &ClosedLoop,
    kind: &AttackKind,
    curve: &str,
    grid: &[f64],
    detector: Option<&DetectorConfig>,
) -> CliResult<Vec<ParetoRecord>> {
    Ok(pareto_sweep_detailed(cl, kind, curve, grid, detector)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

pub fn pareto_sweep_detailed(
    cl: &ClosedLoop,
    kind: &AttackKind,
    curve: &str,
    grid: &[f64],
    detector: Option<&DetectorConfig>,
) -> CliResult<Vec<(ParetoRecord, AttackDetail)>> {
    kind.validate(cl.measurements())?;
    validate_grid(grid)?;
    if let Some(cfg) = detector {
        cfg.validate()?;
    }
    Ok(grid
        .par_iter()
        .map(|&lambda| sweep_cell(cl, kind, curve, lambda, detector))
        .collect())
}

pub fn validate_grid(grid: &[f64]) -> CliResult<()> {
    if grid.is_empty() {
        return Err(CliError::Validation("lambda grid is empty".into()));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(CliError::Validation("lambda values must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::Validation("lambda grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Log-spaced interior points of the feasibility windows of `scope`.
///
/// Uses the intersection of the non-empty windows, or their hull when the
/// intersection is empty.
pub fn auto_grid(cl: &ClosedLoop, scope: &[usize]) -> CliResult<Vec<f64>> {
    let ctx = make_context(cl, 1.0)?;
    let windows: Vec<_> = lambda_windows(&ctx)
        .into_iter()
        .filter(|w| scope.contains(&w.index) && !w.is_empty() && w.lower > 0.0 && w.upper.is_finite())
        .collect();
    if windows.is_empty() {
        return Err(CliError::Infeasible(
            "no measurement has a non-empty feasibility window".into(),
        ));
    }
    let lo = windows.iter().map(|w| w.lower).fold(f64::NEG_INFINITY, f64::max);
    let hi = windows.iter().map(|w| w.upper).fold(f64::INFINITY, f64::min);
    let (lo, hi) = if lo < hi {
        (lo, hi)
    } else {
        (
            windows.iter().map(|w| w.lower).fold(f64::INFINITY, f64::min),
            windows.iter().map(|w| w.upper).fold(f64::NEG_INFINITY, f64::max),
        )
    };
    Ok(log_interior(lo, hi, AUTO_POINTS))
}

/// `count` points log-spaced strictly between `lo` and `hi`.
pub fn log_interior(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (1..=count)
        .map(|i| (a + (b - a) * i as f64 / (count + 1) as f64).exp())
        .collect()
}

/// Build one attack, estimate detection statistics and emit its record.
pub fn run_detection(
    cl: &ClosedLoop,
    kind: &AttackKind,
    lambda: f64,
    cfg: &DetectorConfig,
) -> CliResult<(DetectionResult, ParetoRecord)> {
    kind.validate(cl.measurements())?;
    cfg.validate()?;
    let ctx = make_context(cl, lambda)?;
    let built = build_attack(&ctx, kind)?;
    detect_attack(
        cl,
        &ctx,
        (&curve_label(kind), kind.name(), kind.k()),
        &built.attack,
        Some(&built.report),
        cfg,
    )
}

/// Detection statistics for a given attack; `label` is `(curve, kind, k)`.
pub fn detect_attack(
    cl: &ClosedLoop,
    ctx: &AttackContext,
    label: (&str, &'static str, Option<usize>),
    attack: &GaussianAttack,
    report: Option<&FeasibilityReport>,
    cfg: &DetectorConfig,
) -> CliResult<(DetectionResult, ParetoRecord)> {
    let det = detection_probability(cl, attack, cfg)?;
    let [cost, dis, est, dkl] = measure(cl, ctx, attack)?;
    if ![cost, dis, est, dkl].iter().all(|v| v.is_finite()) {
        return Err(CliError::Numerical("non-finite divergence".into()));
    }
    let report = report.cloned().unwrap_or_else(|| feasibility_report(ctx));
    let rec = ParetoRecord {
        curve: label.0.to_owned(),
        kind: label.1,
        k: label.2,
        lambda: ctx.lambda(),
        status: Status::Ok,
        support: attack.support().iter().map(|j| j + 1).collect(),
        attack_cost: Some(cost),
        disruption_kl: Some(dis),
        estimate_kl: Some(est),
        detection_kl: Some(dkl),
        p_detect: Some(det.p_detect),
        p_false_alarm: Some(det.p_false_alarm),
        tau: finite(det.tau),
        sigma_aa: Some(flatten(attack.sigma_aa())),
        feasibility: (&report).into(),
        reason: None,
    };
    Ok((det, rec))
}

/// Error out when every row is infeasible or failed.
pub fn require_some_feasible(records: &[ParetoRecord]) -> CliResult<()> {
    if records.iter().all(|r| r.status != Status::Ok) {
        let reason = records
            .iter()
            .find_map(|r| r.reason.clone())
            .unwrap_or_else(|| "no rows".into());
        return Err(CliError::Infeasible(format!("every lambda is infeasible (first: {reason})")));
    }
    Ok(())
}
