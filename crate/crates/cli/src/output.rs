//! Run manifests and CSV/JSON writers.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::model::{rows, LoadedModel, ModelKind, NoiseSection, WeightsSection};
use crate::report::{CurveSet, VulnerabilityReport};
use crate::sweep::ParetoRecord;

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub model_kind: ModelKind,
    pub model_sha256: String,
    /// Exact model text that was hashed.
    pub model: String,
    pub dt: Option<f64>,
    pub weights: Option<WeightsSection>,
    pub noise: NoiseSection,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub samples: Option<usize>,
    /// Remaining command options as given.
    pub options: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, model: &LoadedModel) -> Self {
        let plant = model.closed_loop.plant();
        Self {
            tool: "dia".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            model_kind: model.file.kind,
            model_sha256: model.sha256.clone(),
            model: model.text.clone(),
            dt: model.dt(),
            weights: model.weights.as_ref().map(|(q, r)| WeightsSection {
                q_lqr: rows(q),
                r_lqr: rows(r),
            }),
            noise: NoiseSection {
                sigma_dd: rows(plant.sigma_dd()),
                sigma_nn: rows(plant.sigma_nn()),
            },
            seed: None,
            alpha: None,
            samples: None,
            options: BTreeMap::new(),
        }
    }

    pub fn option(mut self, key: &str, value: impl ToString) -> Self {
        self.options.insert(key.into(), value.to_string());
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Prefix of the manifest line at the top of every CSV output.
pub const MANIFEST_PREFIX: &str = "# manifest ";

pub const RECORD_COLUMNS: [&str; 19] = [
    "curve",
    "kind",
    "k",
    "lambda",
    "status",
    "support",
    "attack_cost",
    "disruption_kl",
    "estimate_kl",
    "detection_kl",
    "p_detect",
    "p_false_alarm",
    "tau",
    "mean_condition",
    "feasible_measurements",
    "hessian_condition",
    "stationarity_residual",
    "sigma_aa",
    "reason",
];

/// Shortest round-trip text of a float; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(fmt_num).unwrap_or_default()
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

fn record_row(r: &ParetoRecord) -> Vec<String> {
    vec![
        r.curve.clone(),
        r.kind.into(),
        r.k.map(|k| k.to_string()).unwrap_or_default(),
        fmt_num(r.lambda),
        r.status.as_str().into(),
        join(&r.support, |j| j.to_string()),
        opt_num(r.attack_cost),
        opt_num(r.disruption_kl),
        opt_num(r.estimate_kl),
        opt_num(r.detection_kl),
        opt_num(r.p_detect),
        opt_num(r.p_false_alarm),
        opt_num(r.tau),
        r.feasibility.mean_condition.to_string(),
        join(&r.feasibility.feasible_measurements, |j| j.to_string()),
        r.feasibility.hessian_condition.map(|b| b.to_string()).unwrap_or_default(),
        opt_num(r.feasibility.stationarity_residual),
        r.sigma_aa.as_ref().map(|s| join(s, |v| fmt_num(*v))).unwrap_or_default(),
        r.reason.clone().unwrap_or_default(),
    ]
}

fn csv_table(manifest: Option<&RunManifest>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = Vec::new();
    if let Some(m) = manifest {
        writeln!(out, "{MANIFEST_PREFIX}{}", m.to_json_line()).expect("write to Vec");
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).expect("write to Vec");
        for row in rows {
            w.write_record(&row).expect("write to Vec");
        }
        w.flush().expect("write to Vec");
    }
    String::from_utf8(out).expect("CSV is UTF-8")
}

pub fn records_csv(manifest: &RunManifest, records: &[ParetoRecord]) -> String {
    csv_table(Some(manifest), &RECORD_COLUMNS, records.iter().map(record_row))
}

pub const DOMINANCE_COLUMNS: [&str; 8] = [
    "scope",
    "a",
    "b",
    "verdict",
    "overlap_lo",
    "overlap_hi",
    "min_margin",
    "max_margin",
];

pub const RANKING_COLUMNS: [&str; 5] = ["scope", "rank", "label", "wins", "losses"];

fn scopes(report: &VulnerabilityReport) -> Vec<(&'static str, &CurveSet)> {
    let mut v = vec![("measurement", &report.measurements)];
    if let Some(u) = &report.units {
        v.push(("unit", u));
    }
    v
}

/// Curve rows, dominance rows and ranking rows of a report.
pub fn report_csv(manifest: &RunManifest, report: &VulnerabilityReport) -> (String, String, String) {
    let sets = scopes(report);
    let curves = csv_table(
        Some(manifest),
        &RECORD_COLUMNS,
        sets.iter()
            .flat_map(|(_, s)| s.curves.iter().flat_map(|c| c.records.iter().map(record_row))),
    );
    let pairs = csv_table(
        Some(manifest),
        &DOMINANCE_COLUMNS,
        sets.iter().flat_map(|(scope, s)| {
            s.pairs.iter().map(move |p| {
                vec![
                    scope.to_string(),
                    p.a.clone(),
                    p.b.clone(),
                    p.verdict.as_str().into(),
                    opt_num(p.overlap.map(|o| o.0)),
                    opt_num(p.overlap.map(|o| o.1)),
                    opt_num(p.min_margin),
                    opt_num(p.max_margin),
                ]
            })
        }),
    );
    let ranking = csv_table(
        Some(manifest),
        &RANKING_COLUMNS,
        sets.iter().flat_map(|(scope, s)| {
            s.ranking.iter().enumerate().map(move |(i, r)| {
                vec![
                    scope.to_string(),
                    (i + 1).to_string(),
                    r.label.clone(),
                    r.wins.to_string(),
                    r.losses.to_string(),
                ]
            })
        }),
    );
    (curves, pairs, ranking)
}

/// Long-format `name,row,col,value` table; rows and columns are 1-based.
pub fn matrices_csv(manifest: &RunManifest, items: &[(&str, Vec<Vec<f64>>)]) -> String {
    csv_table(
        Some(manifest),
        &["name", "row", "col", "value"],
        items.iter().flat_map(|(name, m)| {
            m.iter().enumerate().flat_map(move |(i, r)| {
                r.iter().enumerate().map(move |(j, v)| {
                    vec![name.to_string(), (i + 1).to_string(), (j + 1).to_string(), fmt_num(*v)]
                })
            })
        }),
    )
}

pub fn to_json<T: Serialize>(manifest: &RunManifest, body: &T) -> String {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        manifest: &'a RunManifest,
        #[serde(flatten)]
        body: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Doc { manifest, body }).expect("output serializes");
    s.push('\n');
    s
}

/// `base` with its extension replaced by `suffix` (`out.csv` → `out.manifest.json`).
pub fn sidecar(base: &Path, suffix: &str) -> PathBuf {
    base.with_extension(suffix)
}

/// Write `main` to `out` (stdout when `None`) plus any extra files next to
/// it, and the manifest sidecar.
pub fn emit(out: Option<&Path>, manifest: &RunManifest, main: &str, extras: &[(&str, String)]) -> CliResult<()> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    match out {
        Some(path) => {
            std::fs::write(path, main).map_err(|e| io(path, e))?;
            for (suffix, text) in extras {
                let p = sidecar(path, suffix);
                std::fs::write(&p, text).map_err(|e| io(&p, e))?;
            }
            let p = sidecar(path, "manifest.json");
            let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
            text.push('\n');
            std::fs::write(&p, text).map_err(|e| io(&p, e))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(main.as_bytes())?;
            for (_, text) in extras {
                stdout.write_all(b"\n")?;
                stdout.write_all(text.as_bytes())?;
            }
        }
    }
    Ok(())
}
