//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Map definition: a path relative to the config file or an inline table.
    pub map: Option<toml::Value>,
    /// Kernel definition, for commands that work on the chain alone.
    pub kernel: Option<toml::Value>,
    pub seed: Option<u64>,
    #[serde(rename = "build-check")]
    pub build_check: Option<BuildCheck>,
    #[serde(rename = "chain-analyze")]
    pub chain_analyze: Option<ChainAnalyze>,
    pub evolve: Option<Evolve>,
    pub correlate: Option<Correlate>,
    #[serde(rename = "ggm-sweep")]
    pub ggm_sweep: Option<GgmSweep>,
    #[serde(rename = "ave-check")]
    pub ave_check: Option<AveCheck>,
    pub orbits: Option<Orbits>,
    pub cylinders: Option<Cylinders>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildCheck {
    /// Interior grid points per cell.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Cells to check; defaults to the exceptional cells plus a margin.
    pub window: Option<[i64; 2]>,
    pub tolerance: f64,
    /// Finite modifications only: preimage mass against the base map.
    pub identity_tolerance: Option<f64>,
}

fn default_grid() -> usize {
    1024
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainAnalyze {
    pub expect_irreducible: Option<bool>,
    pub expect_aperiodic: Option<bool>,
    pub expect_doubly_stochastic: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolve {
    /// First cell of the initial vector.
    #[serde(default)]
    pub start: i64,
    /// Initial weights as exact fractions; default `["1"]`, a point mass.
    pub weights: Option<Vec<String>>,
    pub steps: usize,
    /// Row interval of the per-step CSV.
    #[serde(default = "one")]
    pub every: usize,
    #[serde(default)]
    pub expect_symmetric_decreasing: bool,
    /// Expected vector after one step.
    pub expect_first: Option<Vector>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vector {
    pub start: i64,
    pub weights: Vec<String>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlate {
    pub observable: toml::Value,
    pub density: toml::Value,
    pub n_max: usize,
    /// `ave` (ave(F)·∫g over `family`) or `zero`; omitted for raw correlations.
    pub target: Option<String>,
    #[serde(default = "centered")]
    pub family: String,
    /// Residual level reported as `first_below`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub checkpoints: Vec<Checkpoint>,
    /// Values `c_n` must equal `pattern[n mod len]` exactly.
    pub exact_pattern: Option<Vec<f64>>,
}

fn centered() -> String {
    "centered-windows".into()
}

fn default_threshold() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub n: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GgmSweep {
    pub f: toml::Value,
    pub g: toml::Value,
    #[serde(default = "centered")]
    pub family: String,
    /// Window sizes in cells.
    pub sizes: Vec<usize>,
    /// First cells of the windows; centered windows when omitted.
    pub starts: Option<Vec<i64>>,
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// `decays` or `no-decay`, judged along `axis`.
    pub expect: Option<String>,
    /// `joint`, `n` or `size`.
    #[serde(default = "joint")]
    pub axis: String,
    /// Values must satisfy `|value − center| ≤ slope·n/|V| + tolerance`.
    pub band: Option<Band>,
    /// Checks the quasiperiodic factorization at every point.
    pub factorization_tolerance: Option<f64>,
}

fn default_ratio() -> f64 {
    0.1
}

fn joint() -> String {
    "joint".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub center: f64,
    pub slope: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Quadrature {
    Midpoint { nodes_per_cell: usize },
    Cylinder { gauss_order: usize },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Midpoint { nodes_per_cell: 64 }
    }
}

impl Quadrature {
    pub fn core(&self) -> markovline::mixing::GgmQuadrature {
        use markovline::mixing::GgmQuadrature as Q;
        match *self {
            Quadrature::Midpoint { nodes_per_cell } => Q::Midpoint { nodes_per_cell },
            Quadrature::Cylinder { gauss_order } => Q::Cylinder { gauss_order },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveCheck {
    /// Windows as first and last cell.
    #[serde(default)]
    pub windows: Vec<[i64; 2]>,
    /// Centered windows of these sizes in cells, added to `windows`.
    #[serde(default)]
    pub sizes: Vec<usize>,
    pub n_max: usize,
    pub observable: Option<toml::Value>,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default = "default_quad_tol")]
    pub quad_tolerance: f64,
    pub estimate: Option<Estimate>,
    pub slicing: Option<Slicing>,
}

fn default_quad_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimate {
    pub observable: toml::Value,
    #[serde(default = "centered")]
    pub family: String,
    pub sizes: Vec<usize>,
    pub tolerance: f64,
    pub expect_uniform: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slicing {
    pub observable: toml::Value,
    /// Steps of the chain from a point mass at cell 0.
    pub steps: usize,
    pub ell: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orbits {
    pub itinerary: Option<ItinerarySpec>,
    pub markov: Option<MarkovSpec>,
    pub escape: Option<EscapeSpec>,
    pub overlap: Option<OverlapSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItinerarySpec {
    pub x0: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    #[serde(default)]
    pub start: i64,
    pub samples: usize,
    pub horizon: usize,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
}

fn default_min_count() -> u64 {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscapeSpec {
    #[serde(default)]
    pub start: i64,
    pub samples: usize,
    pub horizon: usize,
    pub radius: f64,
    pub min_returned: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapSpec {
    pub cells: Vec<i64>,
    pub n_max: usize,
    pub expect_zero: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cylinders {
    #[serde(default)]
    pub words: Vec<Vec<i64>>,
    pub distortion: Option<DistortionSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSpec {
    #[serde(default)]
    pub start: i64,
    pub n_max: usize,
    #[serde(default = "default_max_words")]
    pub max_words: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "yes")]
    pub expect_within_bound: bool,
    /// Ratios must equal 1 within this tolerance (piecewise-linear maps).
    pub unit_tolerance: Option<f64>,
}

fn default_max_words() -> usize {
    512
}

fn default_samples() -> usize {
    33
}

fn yes() -> bool {
    true
}

/// A loaded configuration and the directory its relative paths refer to.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub dir: PathBuf,
    /// Configuration after overrides, echoed to the summary.
    pub text: String,
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Loaded> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut table: toml::Table =
        toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let text = toml::to_string(&table)?;
    let config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("invalid config {}", path.display()))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, path: path.to_path_buf(), dir, text })
}

/// Sets a dotted key such as `correlate.n_max=500`; the value is read as TOML, or as a
/// bare string if it does not parse.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let Some((key, value)) = spec.split_once('=') else {
        bail!("override `{spec}` is not of the form key=value");
    };
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", value.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(value.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` is malformed");
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override key `{key}`: `{p}` is not a table"),
        };
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_set_nested_values() {
        let mut t: toml::Table = toml::from_str("[correlate]\nn_max = 10\n").unwrap();
        apply_override(&mut t, "correlate.n_max=500").unwrap();
        apply_override(&mut t, "correlate.family=cell-unions").unwrap();
        assert_eq!(t["correlate"]["n_max"].as_integer(), Some(500));
        assert_eq!(t["correlate"]["family"].as_str(), Some("cell-unions"));
        assert!(apply_override(&mut t, "correlate").is_err());
        assert!(apply_override(&mut t, "correlate.n_max.x=1").is_err());
    }
}
