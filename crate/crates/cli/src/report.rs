//! Per-measurement and per-unit Pareto curves, dominance verdicts and ranking.

use dia_core::detector::DetectorConfig;
use dia_core::plant::ClosedLoop;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::sweep::{auto_grid, curve_label, pareto_sweep, AttackKind, ParetoRecord, Status};

/// Margin a curve must clear everywhere on the common range to dominate.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Auto,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub label: String,
    /// 1-based measurements the curve may attack.
    pub measurements: Vec<usize>,
    pub records: Vec<ParetoRecord>,
}

impl Curve {
    /// Feasible `(detection_kl, disruption_kl)` points sorted by detection_kl.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .records
            .iter()
            .filter(|r| r.status == Status::Ok)
            .filter_map(|r| Some((r.detection_kl?, r.disruption_kl?)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup_by(|a, b| a.0 == b.0);
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Dominates,
    Dominated,
    Incomparable,
    NoOverlap,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Dominates => "dominates",
            Verdict::Dominated => "dominated",
            Verdict::Incomparable => "incomparable",
            Verdict::NoOverlap => "no_overlap",
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Verdict::Dominates => Verdict::Dominated,
            Verdict::Dominated => Verdict::Dominates,
            v => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairVerdict {
    pub a: String,
    pub b: String,
    pub verdict: Verdict,
    /// Common detection_kl range.
    pub overlap: Option<(f64, f64)>,
    /// Extremes of disruption(a) − disruption(b) over the common range.
    pub min_margin: Option<f64>,
    pub max_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub label: String,
    pub wins: usize,
    pub losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSet {
    pub curves: Vec<Curve>,
    pub pairs: Vec<PairVerdict>,
    /// Most vulnerable first.
    pub ranking: Vec<RankEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VulnerabilityReport {
    pub measurements: CurveSet,
    pub units: Option<CurveSet>,
}

/// Piecewise-linear interpolation on points sorted by x; `x` must lie in range.
pub fn interpolate(pts: &[(f64, f64)], x: f64) -> f64 {
    let i = pts.partition_point(|p| p.0 < x);
    if i == 0 {
        return pts[0].1;
    }
    if i == pts.len() {
        return pts[pts.len() - 1].1;
    }
    let (x0, y0) = pts[i - 1];
    let (x1, y1) = pts[i];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Compare two curves on their common detection_kl range. The margin is
/// piecewise linear there, so its extremes sit on breakpoints.
pub fn dominance(a: &Curve, b: &Curve) -> PairVerdict {
    let (pa, pb) = (a.points(), b.points());
    let mut out = PairVerdict {
        a: a.label.clone(),
        b: b.label.clone(),
        verdict: Verdict::NoOverlap,
        overlap: None,
        min_margin: None,
        max_margin: None,
    };
    if pa.is_empty() || pb.is_empty() {
        return out;
    }
    let lo = pa[0].0.max(pb[0].0);
    let hi = pa[pa.len() - 1].0.min(pb[pb.len() - 1].0);
    if !(lo <= hi) {
        return out;
    }
    let mut xs: Vec<f64> = pa
        .iter()
        .chain(&pb)
        .map(|p| p.0)
        .filter(|x| *x > lo && *x < hi)
        .collect();
    xs.push(lo);
    xs.push(hi);
    let margins = xs.iter().map(|&x| interpolate(&pa, x) - interpolate(&pb, x));
    let (min, max) = margins.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    out.overlap = Some((lo, hi));
    out.min_margin = Some(min);
    out.max_margin = Some(max);
    out.verdict = if min >= DOMINANCE_TOL {
        Verdict::Dominates
    } else if max <= -DOMINANCE_TOL {
        Verdict::Dominated
    } else {
        Verdict::Incomparable
    };
    out
}

/// All unordered pairs `(i, j)`, `i < j`, plus the ranking by wins − losses
/// (ties keep curve order).
pub fn compare(curves: Vec<Curve>) -> CurveSet {
    let n = curves.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut wins = vec![0usize; n];
    let mut losses = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dominance(&curves[i], &curves[j]);
            match v.verdict {
                Verdict::Dominates => {
                    wins[i] += 1;
                    losses[j] += 1;
                }
                Verdict::Dominated => {
                    wins[j] += 1;
                    losses[i] += 1;
                }
                _ => {}
            }
            pairs.push(v);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(wins[i] as i64 - losses[i] as i64));
    let ranking = order
        .into_iter()
        .map(|i| RankEntry {
            label: curves[i].label.clone(),
            wins: wins[i],
            losses: losses[i],
        })
        .collect();
    CurveSet { curves, pairs, ranking }
}

fn sweep_curve(
    cl: &ClosedLoop,
    kind: AttackKind,
    grid: &Grid,
    detector: Option<&DetectorConfig>,
) -> CliResult<Curve> {
    let label = curve_label(&kind);
    let scope = kind.scope(cl.measurements());
    let lambdas = match grid {
        Grid::Auto => match auto_grid(cl, &scope) {
            Ok(g) => g,
            // No window at all: the curve is empty and overlaps nothing.
            Err(CliError::Infeasible(_)) => Vec::new(),
            Err(e) => return Err(e),
        },
        Grid::Fixed(g) => g.clone(),
    };
    let records = if lambdas.is_empty() {
        Vec::new()
    } else {
        pareto_sweep(cl, &kind, &label, &lambdas, detector)?
    };
    Ok(Curve {
        label,
        measurements: scope.iter().map(|j| j + 1).collect(),
        records,
    })
}

/// Per-measurement curves (single-measurement attacks) and, when `units` is
/// non-empty, per-unit curves (greedy attacks restricted to each unit).
pub fn vulnerability_report(
    cl: &ClosedLoop,
    grid: &Grid,
    units: &[Vec<usize>],
    detector: Option<&DetectorConfig>,
) -> CliResult<VulnerabilityReport> {
    let m = cl.measurements();
    let curves = (0..m)
        .into_par_iter()
        .map(|j| sweep_curve(cl, AttackKind::Single(Some(j)), grid, detector))
        .collect::<CliResult<Vec<_>>>()?;
    let units = if units.is_empty() {
        None
    } else {
        let unit_curves = units
            .par_iter()
            .map(|u| sweep_curve(cl, AttackKind::Unit(u.clone()), grid, detector))
            .collect::<CliResult<Vec<_>>>()?;
        Some(compare(unit_curves))
    };
    Ok(VulnerabilityReport {
        measurements: compare(curves),
        units,
    })
}
