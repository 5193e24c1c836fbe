//! Model files: a TOML document with a top-level `kind = "linear" | "cstr"`.
//!
//! Matrices are row-major nested arrays. See the README for the full schema.

use std::path::Path;

use dia_core::cstr::{synthesize_gains, CstrConfig, CstrParams, CstrSystem};
use dia_core::numkernel::{is_symmetric, min_eigenvalue};
use dia_core::plant::{build_closed_loop, ClosedLoop, PlantModel};
use dia_core::Matrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Name accepted by `--model` for the built-in reactor configuration.
pub const CSTR_ALIAS: &str = "cstr-table1";

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Cstr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "Sigma_dd")]
    pub sigma_dd: Rows,
    #[serde(rename = "Sigma_nn")]
    pub sigma_nn: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "L")]
    pub l: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(rename = "Q_lqr")]
    pub q_lqr: Rows,
    #[serde(rename = "R_lqr")]
    pub r_lqr: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(rename = "Sigma_dd")]
    pub sigma_dd: Rows,
    #[serde(rename = "Sigma_nn")]
    pub sigma_nn: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: ModelKind,
    /// Sampling period in hours (`cstr` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<CstrParams>,
}

impl ModelFile {
    /// The built-in reactor model with every default written out.
    pub fn cstr_default() -> Self {
        let cfg = CstrConfig::default();
        Self {
            kind: ModelKind::Cstr,
            dt: Some(cfg.dt),
            plant: None,
            gains: None,
            weights: Some(WeightsSection {
                q_lqr: rows(&cfg.q_lqr),
                r_lqr: rows(&cfg.r_lqr),
            }),
            noise: Some(NoiseSection {
                sigma_dd: rows(&cfg.sigma_dd),
                sigma_nn: rows(&cfg.sigma_nn),
            }),
            params: Some(cfg.params),
        }
    }

    /// A linear model file carrying the plant and, optionally, fixed gains.
    pub fn linear(plant: &PlantModel, gains: Option<(&Matrix, &Matrix)>) -> Self {
        Self {
            kind: ModelKind::Linear,
            dt: None,
            plant: Some(PlantSection {
                a: rows(plant.a()),
                b: rows(plant.b()),
                c: rows(plant.c()),
                sigma_dd: rows(plant.sigma_dd()),
                sigma_nn: rows(plant.sigma_nn()),
            }),
            gains: gains.map(|(k, l)| GainsSection { k: rows(k), l: rows(l) }),
            weights: None,
            noise: None,
            params: None,
        }
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Numerical(format!("cannot serialize model: {e}")))
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }
}

/// A parsed, validated and closed-loop-ready model.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub file: ModelFile,
    /// Exact text the model was parsed from; hashed into manifests.
    pub text: String,
    pub sha256: String,
    pub closed_loop: ClosedLoop,
    pub cstr: Option<CstrSystem>,
    /// Weights used for gain synthesis, if the gains were synthesized.
    pub weights: Option<(Matrix, Matrix)>,
}

impl LoadedModel {
    pub fn dt(&self) -> Option<f64> {
        self.cstr.as_ref().map(|s| s.config.dt)
    }
}

/// Row-major nested arrays of a matrix.
pub fn rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Matrix from row-major nested arrays, checking shape and finiteness.
pub fn matrix(name: &str, rows: &Rows) -> CliResult<Matrix> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Err(CliError::Validation(format!("{name} is empty")));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != nc) {
        return Err(CliError::Validation(format!(
            "{name}: row {} has {} entries, expected {nc}",
            i + 1,
            r.len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Validation(format!("{name} has non-finite entries")));
    }
    Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn square(name: &str, m: &Matrix, n: usize) -> CliResult<()> {
    if m.shape() != (n, n) {
        return Err(CliError::Validation(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn covariance(name: &str, rows: &Rows, n: usize, definite: bool) -> CliResult<Matrix> {
    let m = matrix(name, rows)?;
    square(name, &m, n)?;
    if !is_symmetric(&m) {
        return Err(CliError::Validation(format!("{name} not symmetric")));
    }
    let lo = min_eigenvalue(&m);
    let hi = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if lo < -1e-10 * (1.0 + hi) {
        return Err(CliError::Validation(format!("{name} not PSD")));
    }
    if definite && lo <= 0.0 {
        return Err(CliError::Validation(format!("{name} not positive definite")));
    }
    Ok(m)
}

fn weights(w: &WeightsSection, n: usize, p: usize) -> CliResult<(Matrix, Matrix)> {
    let q = covariance("Q_lqr", &w.q_lqr, n, false)?;
    let r = covariance("R_lqr", &w.r_lqr, p, true)?;
    Ok((q, r))
}

fn forbid(present: bool, what: &str, kind: &str) -> CliResult<()> {
    if present {
        return Err(CliError::Validation(format!("{what} is not valid for kind = \"{kind}\"")));
    }
    Ok(())
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse and validate model text; CSTR models are refined, linearized,
/// discretized and closed on load.
pub fn parse_model(text: &str) -> CliResult<LoadedModel> {
    let file = ModelFile::from_toml(text)?;
    let (closed_loop, cstr, used_weights) = match file.kind {
        ModelKind::Linear => build_linear(&file)?,
        ModelKind::Cstr => build_cstr(&file)?,
    };
    Ok(LoadedModel {
        file,
        text: text.to_owned(),
        sha256: sha256_hex(text),
        closed_loop,
        cstr,
        weights: used_weights,
    })
}

type Built = (ClosedLoop, Option<CstrSystem>, Option<(Matrix, Matrix)>);

fn build_linear(file: &ModelFile) -> CliResult<Built> {
    forbid(file.dt.is_some(), "dt", "linear")?;
    forbid(file.noise.is_some(), "[noise]", "linear")?;
    forbid(file.params.is_some(), "[params]", "linear")?;
    let p = file
        .plant
        .as_ref()
        .ok_or_else(|| CliError::Validation("kind = \"linear\" requires a [plant] section".into()))?;
    let a = matrix("A", &p.a)?;
    let n = a.nrows();
    square("A", &a, n)?;
    let b = matrix("B", &p.b)?;
    if b.nrows() != n {
        return Err(CliError::Validation(format!("B must have {n} rows, got {}", b.nrows())));
    }
    let c = matrix("C", &p.c)?;
    if c.ncols() != n {
        return Err(CliError::Validation(format!("C must have {n} columns, got {}", c.ncols())));
    }
    let m = c.nrows();
    let sdd = covariance("Sigma_dd", &p.sigma_dd, n, false)?;
    let snn = covariance("Sigma_nn", &p.sigma_nn, m, true)?;
    let plant = PlantModel::new(a, b, c, sdd, snn)?;
    let (k, l, used) = match (&file.gains, &file.weights) {
        (Some(_), Some(_)) => {
            return Err(CliError::Validation("give either [gains] or [weights], not both".into()));
        }
        (Some(g), None) => {
            let k = matrix("K", &g.k)?;
            let l = matrix("L", &g.l)?;
            if k.shape() != (plant.inputs(), n) {
                return Err(CliError::Validation(format!("K must be {}x{n}", plant.inputs())));
            }
            if l.shape() != (n, m) {
                return Err(CliError::Validation(format!("L must be {n}x{m}")));
            }
            (k, l, None)
        }
        (None, w) => {
            let (q, r) = match w {
                Some(w) => weights(w, n, plant.inputs())?,
                None => (Matrix::identity(n, n), Matrix::identity(plant.inputs(), plant.inputs())),
            };
            let (k, l) = synthesize_gains(&plant, &q, &r)?;
            (k, l, Some((q, r)))
        }
    };
    Ok((build_closed_loop(plant, k, l)?, None, used))
}

fn build_cstr(file: &ModelFile) -> CliResult<Built> {
    forbid(file.plant.is_some(), "[plant]", "cstr")?;
    forbid(file.gains.is_some(), "[gains]", "cstr")?;
    let mut cfg = CstrConfig::default();
    if let Some(p) = file.params {
        p.validate()?;
        cfg.params = p;
    }
    if let Some(dt) = file.dt {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CliError::Validation(format!("dt must be positive, got {dt}")));
        }
        cfg.dt = dt;
    }
    if let Some(w) = &file.weights {
        (cfg.q_lqr, cfg.r_lqr) = weights(w, 4, 4)?;
    }
    if let Some(nz) = &file.noise {
        cfg.sigma_dd = covariance("Sigma_dd", &nz.sigma_dd, 4, false)?;
        cfg.sigma_nn = covariance("Sigma_nn", &nz.sigma_nn, 4, true)?;
    }
    let sys = cfg.build()?;
    let used = Some((cfg.q_lqr.clone(), cfg.r_lqr.clone()));
    Ok((sys.closed_loop.clone(), Some(sys), used))
}

/// Load from a path or the `cstr-table1` alias.
pub fn load_model(spec: &str) -> CliResult<LoadedModel> {
    if spec == CSTR_ALIAS {
        return parse_model(&ModelFile::cstr_default().to_toml()?);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// Serialize a plant with fixed gains as a linear model file.
pub fn save_linear(path: &Path, plant: &PlantModel, k: &Matrix, l: &Matrix) -> CliResult<()> {
    let text = ModelFile::linear(plant, Some((k, l))).to_toml()?;
    std::fs::write(path, text)?;
    Ok(())
}
