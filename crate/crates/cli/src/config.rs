//! Configuration file handling: one nested TOML document plus dotted-path
//! `--set key=value` overrides, so sweeps and CI fixtures can tweak single
//! lines without templating files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use collusion_lab::distributions::DistributionSpec;
use collusion_lab::simulation::Strategy;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub dist1: DistCfg,
    pub dist2: DistCfg,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub audits: AuditSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Distribution spec as written in config; a table family may point at a
/// CSV file with `x,cdf` columns instead of inlining the rows.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistCfg {
    Uniform { lo: f64, hi: f64 },
    Power { lo: f64, hi: f64, k: f64 },
    PiecewiseLinearDensity { xs: Vec<f64>, densities: Vec<f64> },
    Table { path: Option<PathBuf>, points: Option<Vec<(f64, f64)>> },
}

impl DistCfg {
    /// Resolve to a core spec, reading table CSVs relative to `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<DistributionSpec> {
        Ok(match self {
            DistCfg::Uniform { lo, hi } => DistributionSpec::Uniform { lo: *lo, hi: *hi },
            DistCfg::Power { lo, hi, k } => DistributionSpec::Power { lo: *lo, hi: *hi, k: *k },
            DistCfg::PiecewiseLinearDensity { xs, densities } => {
                DistributionSpec::PiecewiseLinearDensity {
                    xs: xs.clone(),
                    densities: densities.clone(),
                }
            }
            DistCfg::Table { path, points } => match (path, points) {
                (Some(p), None) => {
                    let full = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                    DistributionSpec::Table { points: read_cdf_csv(&full)? }
                }
                (None, Some(points)) => DistributionSpec::Table { points: points.clone() },
                _ => bail!("table family needs exactly one of `path` or `points`"),
            },
        })
    }
}

fn read_cdf_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading cdf table {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let (xi, ci) = match (headers.iter().position(|h| h == "x"), headers.iter().position(|h| h == "cdf")) {
        (Some(a), Some(b)) => (a, b),
        _ => bail!("{}: need columns `x` and `cdf`", path.display()),
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let x: f64 = row
            .get(xi)
            .context("missing x cell")?
            .parse()
            .context("x cell is not a number")?;
        let c: f64 = row
            .get(ci)
            .context("missing cdf cell")?
            .parse()
            .context("cdf cell is not a number")?;
        out.push((x, c));
    }
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSection {
    pub reserve: f64,
    pub seed: u64,
    pub threads: usize,
    pub trivial_case: bool,
    pub strategy: StrategyCfg,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyCfg {
    Equilibrium,
    NoCollusion,
}

impl From<StrategyCfg> for Strategy {
    fn from(s: StrategyCfg) -> Self {
        match s {
            StrategyCfg::Equilibrium => Strategy::Equilibrium,
            StrategyCfg::NoCollusion => Strategy::NoCollusion,
        }
    }
}

impl Default for GameSection {
    fn default() -> Self {
        Self {
            reserve: 0.0,
            seed: 7,
            threads: 1,
            trivial_case: false,
            strategy: StrategyCfg::Equilibrium,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub rtol: f64,
    pub atol: f64,
    pub export_nodes: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-10, export_nodes: 2048 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub ic: bool,
    pub d1: bool,
    pub prop4: bool,
    pub ic_types: usize,
    pub ic_mimics: usize,
    pub d1_grid_b: usize,
    pub d1_grid_r: usize,
    pub d1_cutoff_grid: usize,
    pub d1_type_grid: usize,
    pub tolerance: f64,
    /// (scale, offset) request families audited by the dominance check
    pub gamma_families: Vec<(f64, f64)>,
    /// scale applied to every bribe before auditing; values other than 1
    /// turn the run into a negative-control fixture
    pub negative_control_scale: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            ic: true,
            d1: true,
            prop4: true,
            ic_types: 200,
            ic_mimics: 400,
            d1_grid_b: 50,
            d1_grid_r: 50,
            d1_cutoff_grid: 64,
            d1_type_grid: 256,
            tolerance: 1e-8,
            gamma_families: vec![(1.0, 0.0), (0.8, 0.0)],
            negative_control_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub grid: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { grid: 512 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n: u64,
    pub write_draws: bool,
    pub max_draw_rows: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { n: 100_000, write_draws: false, max_draw_rows: 1_000_000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `reserve` or `seed`
    pub parameter: String,
    pub values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { parameter: "reserve".into(), values: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// A parsed config plus the canonical text it came from (after overrides),
/// for digesting into run reports.
pub struct LoadedConfig {
    pub config: GameConfig,
    pub canonical: String,
    pub base_dir: PathBuf,
}

/// Read a config file and apply `--set key=value` overrides before
/// deserializing.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut value: toml::Value =
        text.parse().with_context(|| format!("parsing config {}", path.display()))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .with_context(|| format!("--set needs KEY=VALUE, got `{item}`"))?;
        apply_override(&mut value, key.trim(), raw.trim())
            .with_context(|| format!("applying --set {item}"))?;
    }
    let canonical = toml::to_string(&value).context("re-serializing config")?;
    let config: GameConfig = value.try_into().context("config structure")?;
    validate(&config)?;
    Ok(LoadedConfig {
        config,
        canonical,
        base_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
    })
}

fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    // parse the value as a TOML fragment so numbers, booleans and arrays
    // keep their types; fall back to a bare string
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.is_empty() {
        bail!("empty key");
    }
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_table_mut()
            .with_context(|| format!("`{part}` is not a table"))?
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .with_context(|| format!("`{key}` parent is not a table"))?
        .insert(parts.last().unwrap().to_string(), parsed);
    Ok(())
}

fn validate(cfg: &GameConfig) -> Result<()> {
    if !(cfg.solver.rtol > 0.0 && cfg.solver.atol > 0.0) {
        bail!("solver tolerances must be positive");
    }
    if cfg.solver.export_nodes < 2 {
        bail!("solver.export_nodes must be at least 2");
    }
    if !(cfg.audits.tolerance > 0.0) {
        bail!("audits.tolerance must be positive");
    }
    if cfg.game.reserve < 0.0 {
        bail!("game.reserve must be nonnegative");
    }
    if cfg.sim.n == 0 {
        bail!("sim.n must be at least 1");
    }
    match cfg.sweep.parameter.as_str() {
        "reserve" | "seed" => {}
        other => bail!("sweep.parameter must be `reserve` or `seed`, got `{other}`"),
    }
    Ok(())
}
