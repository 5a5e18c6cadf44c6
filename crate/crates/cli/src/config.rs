//! Run configuration: TOML blocks with defaults, flag overrides, and
//! construction of models and grids from the merged result.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use contact_hj::geometry::{GridFunction, TorusSpec};
use contact_hj::hamiltonian::{
    Expr, HamiltonianModel, InverseMass, PotentialCoupling, SymMatrix,
};
use contact_hj::semigroup::EvolutionConfig;
use contact_hj::verify::BatteryConfig;

/// The full run configuration. Every field has a default; the effective
/// (post-default, post-override) config is echoed into the run manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub evolution: EvolutionBlock,
    #[serde(default)]
    pub battery: BatteryBlock,
    #[serde(default)]
    pub io: IoConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<InverseMassConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<CouplingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "default_p_max")]
    pub p_max: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

fn default_kind() -> String {
    "expression".into()
}

fn default_p_max() -> f64 {
    10.0
}

fn default_u_max() -> f64 {
    2.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            expression: None,
            a: None,
            v0: None,
            g: None,
            lambda: None,
            p_max: default_p_max(),
            u_max: default_u_max(),
            alpha: None,
            beta: None,
        }
    }
}

/// The inverse-mass field: a scalar, a symmetric matrix, or per-entry grid
/// files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InverseMassConfig {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Files {
        a11: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a12: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a22: Option<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_period")]
    pub period: Vec<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: Vec<usize>,
}

fn default_dim() -> usize {
    1
}

fn default_period() -> Vec<f64> {
    vec![1.0]
}

fn default_resolution() -> Vec<usize> {
    vec![256]
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: default_dim(),
            period: default_period(),
            resolution: default_resolution(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_v_res")]
    pub v_res: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
    #[serde(default)]
    pub snapshot_every: usize,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_v_max() -> f64 {
    8.0
}
fn default_v_res() -> usize {
    129
}
fn default_picard_tol() -> f64 {
    1e-12
}
fn default_picard_max() -> usize {
    50
}

impl Default for EvolutionBlock {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            v_max: default_v_max(),
            v_res: default_v_res(),
            picard_tol: default_picard_tol(),
            picard_max: default_picard_max(),
            snapshot_every: 0,
        }
    }
}

impl EvolutionBlock {
    pub fn to_config(&self) -> EvolutionConfig {
        EvolutionConfig {
            dt: self.dt,
            v_max: self.v_max,
            v_res: self.v_res,
            picard_tol: self.picard_tol,
            picard_max: self.picard_max,
            snapshot_every: self.snapshot_every,
            refine_argmin: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryBlock {
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_p_cap")]
    pub p_cap: f64,
    #[serde(default = "default_u_cap")]
    pub u_cap: f64,
    #[serde(default = "default_flow_h")]
    pub flow_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn default_horizons() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_samples() -> usize {
    500
}
fn default_seed() -> u64 {
    42
}
fn default_p_cap() -> f64 {
    3.0
}
fn default_u_cap() -> f64 {
    2.0
}
fn default_flow_h() -> f64 {
    1e-3
}

impl Default for BatteryBlock {
    fn default() -> Self {
        Self {
            horizons: default_horizons(),
            samples: default_samples(),
            seed: default_seed(),
            p_cap: default_p_cap(),
            u_cap: default_u_cap(),
            flow_h: default_flow_h(),
            tolerance: None,
        }
    }
}

impl BatteryBlock {
    pub fn to_config(&self, evolution: &EvolutionBlock) -> BatteryConfig {
        BatteryConfig {
            horizons: self.horizons.clone(),
            samples: self.samples,
            seed: self.seed,
            p_cap: self.p_cap,
            u_cap: self.u_cap,
            evolution: evolution.to_config(),
            flow_h: self.flow_h,
            tol_override: self.tolerance,
            ..BatteryConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for IoConfig {
    fn default() -> Self {
        Self { out: default_out() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| anyhow!("config parse error in {}: {e}", path.display()))?;
        Ok(cfg)
    }

    pub fn torus_spec(&self) -> Result<TorusSpec> {
        TorusSpec::new(self.grid.dim, &self.grid.period, &self.grid.resolution)
            .map_err(|e| anyhow!("invalid [grid] block: {e}"))
    }

    /// Build the Hamiltonian model; errors name the missing key when no
    /// model is configured.
    pub fn build_model(&self) -> Result<HamiltonianModel> {
        let mc = self
            .model
            .as_ref()
            .ok_or_else(|| anyhow!("missing key `model` (set [model] in the config or pass --model)"))?;
        build_model(mc, self.grid.dim)
    }
}

pub fn build_model(mc: &ModelConfig, dim: usize) -> Result<HamiltonianModel> {
    let mut model = match mc.kind.as_str() {
        "expression" => {
            let text = mc.expression.as_ref().ok_or_else(|| {
                anyhow!("missing key `model.expression` for kind = \"expression\"")
            })?;
            let lambda = mc.lambda.ok_or_else(|| {
                anyhow!("missing key `model.lambda` (required for expression models)")
            })?;
            HamiltonianModel::parse(text, lambda)
                .map_err(|e| anyhow!("invalid model expression: {e}"))?
        }
        "quadratic" => {
            let inverse_mass = match &mc.a {
                None => InverseMass::Constant(SymMatrix::identity()),
                Some(InverseMassConfig::Scalar(a)) => {
                    InverseMass::Constant(SymMatrix::scalar(*a))
                }
                Some(InverseMassConfig::Matrix(rows)) => {
                    if rows.len() != 2 || rows.iter().any(|r| r.len() != 2) {
                        bail!("model.a matrix must be 2x2");
                    }
                    if (rows[0][1] - rows[1][0]).abs() > 1e-12 {
                        bail!("model.a matrix must be symmetric");
                    }
                    InverseMass::Constant(SymMatrix::new2(rows[0][0], rows[0][1], rows[1][1]))
                }
                Some(InverseMassConfig::Files { a11, a12, a22 }) => {
                    let load = |p: &String| -> Result<GridFunction> {
                        GridFunction::read_from_path(p)
                            .map_err(|e| anyhow!("cannot load grid {p}: {e}"))
                    };
                    InverseMass::Sampled {
                        a11: load(a11)?,
                        a12: a12.as_ref().map(load).transpose()?,
                        a22: a22.as_ref().map(load).transpose()?,
                    }
                }
            };
            let v0 = Expr::parse(mc.v0.as_deref().unwrap_or("0"))
                .map_err(|e| anyhow!("invalid model.v0: {e}"))?;
            let coupling = match &mc.g {
                None => PotentialCoupling::Linear { rate: 0.0 },
                Some(g) => match g.kind.as_str() {
                    "linear" => PotentialCoupling::Linear {
                        rate: g
                            .coeff
                            .ok_or_else(|| anyhow!("missing key `model.g.coeff`"))?,
                    },
                    "sin" => PotentialCoupling::Sinusoidal {
                        eps: g.eps.ok_or_else(|| anyhow!("missing key `model.g.eps`"))?,
                    },
                    other => bail!("unknown coupling kind '{other}' (use linear or sin)"),
                },
            };
            HamiltonianModel::quadratic(dim, inverse_mass, v0, coupling)
                .map_err(|e| anyhow!("invalid quadratic model: {e}"))?
        }
        other => bail!("unknown model kind '{other}' (use expression or quadratic)"),
    };
    model.set_p_search_max(mc.p_max);
    Ok(model)
}

/// Interpret a `--model` flag value: an existing file is parsed as a TOML
/// model block (bare or under `[model]`); anything else is an inline
/// expression.
pub fn model_override(value: &str, lambda: Option<f64>) -> Result<ModelConfig> {
    let path = Path::new(value);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read model file {}", path.display()))?;
        #[derive(Deserialize)]
        struct Wrapped {
            model: ModelConfig,
        }
        if let Ok(w) = toml::from_str::<Wrapped>(&text) {
            return Ok(w.model);
        }
        return toml::from_str::<ModelConfig>(&text)
            .map_err(|e| anyhow!("model file parse error in {}: {e}", path.display()));
    }
    Ok(ModelConfig {
        kind: "expression".into(),
        expression: Some(value.to_string()),
        lambda: Some(lambda.unwrap_or(1.0)),
        ..Default::default()
    })
}

/// Interpret a `--phi`/`--init` value: an existing file is read as a grid
/// file; anything else is an expression over the x variables, sampled on
/// the grid.
pub fn load_scalar_field(value: &str, spec: &TorusSpec) -> Result<GridFunction> {
    let path = Path::new(value);
    if path.is_file() {
        let grid = GridFunction::read_from_path(path)
            .map_err(|e| anyhow!("cannot load grid {}: {e}", path.display()))?;
        if grid.spec() != spec {
            bail!(
                "grid file {} does not match the configured grid (file: d={} n={}, config: d={} n={})",
                path.display(),
                grid.spec().dim(),
                grid.spec().resolution(0),
                spec.dim(),
                spec.resolution(0)
            );
        }
        return Ok(grid);
    }
    let expr = Expr::parse(value).map_err(|e| anyhow!("invalid field expression: {e}"))?;
    if expr.uses_p() || expr.uses_u() {
        bail!("field expressions may reference x variables only");
    }
    if expr.dim() > spec.dim() {
        bail!(
            "field expression references x{} but the grid is {}-dimensional",
            expr.dim(),
            spec.dim()
        );
    }
    let mut values = Vec::with_capacity(spec.node_count());
    for i in 0..spec.node_count() {
        let x = spec.node_position(spec.multi_index(i));
        let v = expr
            .eval_value(&x, &[0.0, 0.0], 0.0)
            .map_err(|e| anyhow!("field expression failed to evaluate: {e}"))?;
        values.push(v);
    }
    GridFunction::from_values(spec.clone(), values)
        .map_err(|e| anyhow!("field expression produced an invalid grid: {e}"))
}

/// Parse a comma-separated list of floats.
pub fn parse_float_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad number '{s}' in list '{text}'"))
        })
        .collect()
}
