//! Argument parsing and subcommand dispatch for the `dia` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dia_core::attack::{lambda_windows, GaussianAttack};
use dia_core::cstr::Equilibrium;
use dia_core::detector::{DetectionResult, DetectorConfig};
use dia_core::numkernel::spectral_radius;
use dia_core::plant::{make_context, objective_matrices};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::model::{load_model, rows, save_linear, LoadedModel, ModelKind, Rows};
use crate::output::{emit, matrices_csv, records_csv, report_csv, to_json, Format, RunManifest};
use crate::report::{vulnerability_report, Grid};
use crate::sweep::{
    auto_grid, curve_label, detect_attack, pareto_sweep_detailed, require_some_feasible, run_detection,
    validate_grid, AttackDetail, AttackKind, ParetoRecord,
};

#[derive(Debug, Parser)]
#[command(name = "dia", version, about = "Optimal data-injection attacks on linear Gaussian control loops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model file, or `cstr-table1` for the built-in reactor pair.
    #[arg(long)]
    pub model: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Target false-alarm rate.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Monte-Carlo samples per hypothesis.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DetectorArgs {
    fn config(&self) -> DetectorConfig {
        DetectorConfig {
            alpha_target: self.alpha,
            n_samples: self.samples,
            seed: self.seed,
        }
    }

    fn stamp(&self, mut m: RunManifest) -> RunManifest {
        m.seed = Some(self.seed);
        m.alpha = Some(self.alpha);
        m.samples = Some(self.samples);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Full,
    Single,
    Sparse,
}

#[derive(Debug, Args)]
pub struct KindArgs {
    #[arg(long, value_enum, default_value = "single")]
    pub kind: KindArg,
    /// 1-based measurement for `single`; the best one per λ when omitted.
    #[arg(long)]
    pub measurement: Option<usize>,
    /// Number of attacked measurements for `sparse`.
    #[arg(long)]
    pub k: Option<usize>,
}

impl KindArgs {
    fn resolve(&self) -> CliResult<AttackKind> {
        let measurement = match self.measurement {
            Some(0) => return Err(CliError::Validation("measurements are numbered from 1".into())),
            j => j.map(|j| j - 1),
        };
        match self.kind {
            KindArg::Full => Ok(AttackKind::Full),
            KindArg::Single => Ok(AttackKind::Single(measurement)),
            KindArg::Sparse => {
                let k = self
                    .k
                    .ok_or_else(|| CliError::Validation("--kind sparse requires --k".into()))?;
                Ok(AttackKind::Sparse { k, allowed: None })
            }
        }
    }

    fn stamp(&self, m: RunManifest) -> RunManifest {
        let mut m = m.option("kind", format!("{:?}", self.kind).to_lowercase());
        if let Some(j) = self.measurement {
            m = m.option("measurement", j);
        }
        if let Some(k) = self.k {
            m = m.option("k", k);
        }
        m
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gains, stationary moments, objective matrices and λ windows.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Also write the linearized plant with its gains as a linear model file.
        #[arg(long)]
        save_linear: Option<PathBuf>,
    },
    /// Construct attacks at the given λ values.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        kind: KindArgs,
        /// Comma-separated ascending λ values, or `auto`.
        #[arg(long)]
        lambda: String,
    },
    /// Pareto sweep over λ.
    Pareto {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        kind: KindArgs,
        #[arg(long, default_value = "auto")]
        lambda: String,
        /// Attach Monte-Carlo detection statistics to every row.
        #[arg(long)]
        detect: bool,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Monte-Carlo detection experiment for one attack.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        kind: KindArgs,
        #[arg(long)]
        lambda: f64,
        /// Explicit comma-separated attack variances (one per measurement)
        /// instead of a constructed attack.
        #[arg(long)]
        variances: Option<String>,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Per-measurement and per-unit Pareto curves with dominance verdicts.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "auto")]
        lambda: String,
        /// Units as 1-based index groups, e.g. `1,2;3,4`, or `none`.
        /// Defaults to one unit per tank for the reactor model.
        #[arg(long)]
        units: Option<String>,
        #[arg(long)]
        detect: bool,
        #[command(flatten)]
        detector: DetectorArgs,
    },
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("invalid {what} value `{}`", t.trim())))
        })
        .collect()
}

pub fn parse_grid(s: &str) -> CliResult<Grid> {
    if s.trim() == "auto" {
        return Ok(Grid::Auto);
    }
    let g: Vec<f64> = parse_list("lambda", s)?;
    validate_grid(&g)?;
    Ok(Grid::Fixed(g))
}

pub fn parse_units(s: &str, m: usize) -> CliResult<Vec<Vec<usize>>> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|group| {
            let ids: Vec<usize> = parse_list("unit", group)?;
            ids.iter()
                .map(|&j| {
                    if j == 0 || j > m {
                        Err(CliError::Validation(format!("unit measurement {j} out of range 1..={m}")))
                    } else {
                        Ok(j - 1)
                    }
                })
                .collect()
        })
        .collect()
}

fn resolve_grid(model: &LoadedModel, grid: &Grid, kind: &AttackKind) -> CliResult<Vec<f64>> {
    match grid {
        Grid::Auto => auto_grid(&model.closed_loop, &kind.scope(model.closed_loop.measurements())),
        Grid::Fixed(g) => Ok(g.clone()),
    }
}

#[derive(Serialize)]
struct Window {
    measurement: usize,
    lower: f64,
    upper: f64,
    empty: bool,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct Synthesis {
    states: usize,
    measurements: usize,
    inputs: usize,
    spectral_radius: f64,
    A: Rows,
    B: Rows,
    C: Rows,
    K: Rows,
    L: Rows,
    Sigma_xi: Rows,
    Sigma_yy: Rows,
    M1: Rows,
    M2: Rows,
    lambda_windows: Vec<Window>,
    equilibrium: Option<Equilibrium>,
}

#[derive(Serialize)]
struct Records<'a> {
    records: &'a [ParetoRecord],
}

#[derive(Serialize)]
struct AttackOut<'a> {
    records: &'a [ParetoRecord],
    details: &'a [AttackDetail],
}

#[derive(Serialize)]
struct DetectOut<'a> {
    detection: &'a DetectionResult,
    record: &'a ParetoRecord,
}

fn synthesize(common: &Common, save: Option<&PathBuf>) -> CliResult<()> {
    let model = load_model(&common.model)?;
    let cl = &model.closed_loop;
    let plant = cl.plant();
    let (m1, m2) = objective_matrices(cl)?;
    let ctx = make_context(cl, 1.0)?;
    let windows: Vec<Window> = lambda_windows(&ctx)
        .into_iter()
        .map(|w| Window {
            measurement: w.index + 1,
            lower: w.lower,
            upper: w.upper,
            empty: w.is_empty(),
        })
        .collect();
    let body = Synthesis {
        states: cl.states(),
        measurements: cl.measurements(),
        inputs: plant.inputs(),
        spectral_radius: spectral_radius(cl.f()),
        A: rows(plant.a()),
        B: rows(plant.b()),
        C: rows(plant.c()),
        K: rows(cl.k()),
        L: rows(cl.l()),
        Sigma_xi: rows(cl.sigma_xi()),
        Sigma_yy: rows(cl.sigma_yy()),
        M1: rows(&m1),
        M2: rows(&m2),
        lambda_windows: windows,
        equilibrium: model.cstr.as_ref().map(|s| s.equilibrium),
    };
    if let Some(path) = save {
        save_linear(path, plant, cl.k(), cl.l())?;
    }
    let manifest = RunManifest::new("synthesize", &model);
    let text = match common.format {
        Format::Json => to_json(&manifest, &body),
        Format::Csv => {
            let col = |f: &dyn Fn(&Window) -> f64| -> Rows { body.lambda_windows.iter().map(|w| vec![f(w)]).collect() };
            matrices_csv(
                &manifest,
                &[
                    ("spectral_radius", vec![vec![body.spectral_radius]]),
                    ("A", body.A.clone()),
                    ("B", body.B.clone()),
                    ("C", body.C.clone()),
                    ("K", body.K.clone()),
                    ("L", body.L.clone()),
                    ("Sigma_xi", body.Sigma_xi.clone()),
                    ("Sigma_yy", body.Sigma_yy.clone()),
                    ("M1", body.M1.clone()),
                    ("M2", body.M2.clone()),
                    ("window_lower", col(&|w| w.lower)),
                    ("window_upper", col(&|w| w.upper)),
                ],
            )
        }
    };
    emit(common.out.as_deref(), &manifest, &text, &[])
}

fn attack(common: &Common, kind_args: &KindArgs, lambda: &str) -> CliResult<()> {
    let model = load_model(&common.model)?;
    let kind = kind_args.resolve()?;
    let grid = resolve_grid(&model, &parse_grid(lambda)?, &kind)?;
    let cells = pareto_sweep_detailed(&model.closed_loop, &kind, &curve_label(&kind), &grid, None)?;
    let (records, details): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    let manifest = kind_args.stamp(RunManifest::new("attack", &model)).option("lambda", lambda);
    let text = match common.format {
        Format::Json => to_json(&manifest, &AttackOut { records: &records, details: &details }),
        Format::Csv => records_csv(&manifest, &records),
    };
    emit(common.out.as_deref(), &manifest, &text, &[])?;
    require_some_feasible(&records)
}

fn pareto(common: &Common, kind_args: &KindArgs, lambda: &str, detect: bool, det: &DetectorArgs) -> CliResult<()> {
    let model = load_model(&common.model)?;
    let kind = kind_args.resolve()?;
    let grid = resolve_grid(&model, &parse_grid(lambda)?, &kind)?;
    let cfg = det.config();
    let cells = pareto_sweep_detailed(
        &model.closed_loop,
        &kind,
        &curve_label(&kind),
        &grid,
        detect.then_some(&cfg),
    )?;
    let records: Vec<ParetoRecord> = cells.into_iter().map(|(r, _)| r).collect();
    let mut manifest = kind_args
        .stamp(RunManifest::new("pareto", &model))
        .option("lambda", lambda)
        .option("detect", detect);
    if detect {
        manifest = det.stamp(manifest);
    }
    let text = match common.format {
        Format::Json => to_json(&manifest, &Records { records: &records }),
        Format::Csv => records_csv(&manifest, &records),
    };
    emit(common.out.as_deref(), &manifest, &text, &[])?;
    require_some_feasible(&records)
}

fn detect(
    common: &Common,
    kind_args: &KindArgs,
    lambda: f64,
    variances: Option<&str>,
    det: &DetectorArgs,
) -> CliResult<()> {
    let model = load_model(&common.model)?;
    let cl = &model.closed_loop;
    let cfg = det.config();
    let (result, record) = match variances {
        Some(list) => {
            let v: Vec<f64> = parse_list("variance", list)?;
            let m = cl.measurements();
            if v.len() != m {
                return Err(CliError::Validation(format!("expected {m} variances, got {}", v.len())));
            }
            let entries: Vec<(usize, f64)> = v.into_iter().enumerate().collect();
            let attack = GaussianAttack::diagonal(m, &entries)?;
            let ctx = make_context(cl, lambda)?;
            let k = attack.support().len();
            detect_attack(cl, &ctx, ("explicit", "explicit", Some(k)), &attack, None, &cfg)?
        }
        None => run_detection(cl, &kind_args.resolve()?, lambda, &cfg)?,
    };
    let mut manifest = det.stamp(kind_args.stamp(RunManifest::new("detect", &model)).option("lambda", lambda));
    if let Some(list) = variances {
        manifest = manifest.option("variances", list);
    }
    let text = match common.format {
        Format::Json => to_json(&manifest, &DetectOut { detection: &result, record: &record }),
        Format::Csv => records_csv(&manifest, std::slice::from_ref(&record)),
    };
    emit(common.out.as_deref(), &manifest, &text, &[])
}

fn report(common: &Common, lambda: &str, units: Option<&str>, detect: bool, det: &DetectorArgs) -> CliResult<()> {
    let model = load_model(&common.model)?;
    let cl = &model.closed_loop;
    let m = cl.measurements();
    let unit_spec = match (units, model.file.kind) {
        (Some(u), _) => u.to_owned(),
        (None, ModelKind::Cstr) => "1,2;3,4".to_owned(),
        (None, ModelKind::Linear) => "none".to_owned(),
    };
    let groups = parse_units(&unit_spec, m)?;
    let grid = parse_grid(lambda)?;
    let cfg = det.config();
    if detect {
        cfg.validate()?;
    }
    let rep = vulnerability_report(cl, &grid, &groups, detect.then_some(&cfg))?;
    let mut manifest = RunManifest::new("report", &model)
        .option("lambda", lambda)
        .option("units", &unit_spec)
        .option("detect", detect);
    if detect {
        manifest = det.stamp(manifest);
    }
    match common.format {
        Format::Json => emit(common.out.as_deref(), &manifest, &to_json(&manifest, &rep), &[]),
        Format::Csv => {
            let (curves, pairs, ranking) = report_csv(&manifest, &rep);
            emit(
                common.out.as_deref(),
                &manifest,
                &curves,
                &[("dominance.csv", pairs), ("ranking.csv", ranking)],
            )
        }
    }
}

/// Run a parsed command line.
pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synthesize { common, save_linear } => synthesize(common, save_linear.as_ref()),
        Command::Attack { common, kind, lambda } => attack(common, kind, lambda),
        Command::Pareto {
            common,
            kind,
            lambda,
            detect,
            detector,
        } => pareto(common, kind, lambda, *detect, detector),
        Command::Detect {
            common,
            kind,
            lambda,
            variances,
            detector,
        } => self::detect(common, kind, *lambda, variances.as_deref(), detector),
        Command::Report {
            common,
            lambda,
            units,
            detect,
            detector,
        } => report(common, lambda, units.as_deref(), *detect, detector),
    }
}
