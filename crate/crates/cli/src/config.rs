//! JSON run configuration with `network`, `code`, `scheme`, `grid` and `sim`
//! sections, plus `key=value` overrides.

use std::path::{Path, PathBuf};

use d2dstore_core::search::log_grid;
use d2dstore_core::simulator::{Availability, RequestModel, SimConfig};
use d2dstore_core::{derive_code, CodeFamily, CodeSpec, NetworkParams, Scheme};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default = "default_nodes")]
    pub expected_nodes: f64,
    #[serde(default = "one")]
    pub departure_rate: f64,
    /// Defaults to the departure rate (balanced cell).
    #[serde(default)]
    pub arrival_rate: Option<f64>,
    pub request_rate: f64,
    #[serde(default)]
    pub class_arrival_rate: f64,
    pub rho_bs: f64,
    #[serde(default = "one")]
    pub rho_d2d: f64,
    #[serde(default = "one")]
    pub file_bits: f64,
    #[serde(default)]
    pub list_period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeEntry {
    pub family: CodeFamily,
    pub m: u32,
    pub h: u32,
    pub r: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    #[serde(default = "reference_entries")]
    pub list: Vec<CodeEntry>,
    #[serde(default = "default_gamma")]
    pub gamma_budget: f64,
    #[serde(default = "default_m_max")]
    pub m_max: u32,
}

impl Default for CodeSection {
    fn default() -> Self {
        CodeSection {
            list: reference_entries(),
            gamma_budget: default_gamma(),
            m_max: default_m_max(),
        }
    }
}

/// Explicit `values`, or `points` log-spaced values on `[min, max]` with an
/// optional leading zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default = "default_grid_min")]
    pub min: f64,
    #[serde(default = "default_grid_max")]
    pub max: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
    #[serde(default = "yes")]
    pub include_zero: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            values: None,
            min: default_grid_min(),
            max: default_grid_max(),
            points: default_grid_points(),
            include_zero: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default = "default_request_model")]
    pub request_model: RequestModel,
    #[serde(default)]
    pub availability: Availability,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Golden file used by `validate`, relative to the config file.
    #[serde(default)]
    pub golden_file: Option<PathBuf>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            horizon: default_horizon(),
            seed: 1,
            request_model: default_request_model(),
            availability: Availability::Listed,
            batches: default_batches(),
            golden_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub network: NetworkSection,
    #[serde(default)]
    pub code: CodeSection,
    #[serde(default = "all_schemes")]
    pub scheme: Vec<Scheme>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub sim: SimSection,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn default_nodes() -> f64 {
    30.0
}
fn default_gamma() -> f64 {
    3.0
}
fn default_m_max() -> u32 {
    10
}
fn default_grid_min() -> f64 {
    1e-3
}
fn default_grid_max() -> f64 {
    10.0
}
fn default_grid_points() -> usize {
    121
}
fn default_horizon() -> f64 {
    1e6
}
fn default_batches() -> usize {
    d2dstore_core::simulator::DEFAULT_BATCHES
}
fn default_request_model() -> RequestModel {
    RequestModel::FixedAggregate
}
fn all_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

/// `2`-replication, `[9,3,3]` MDS, `[9,3,8]` MSR, `[9,5,8]` MBR, `[6,3,2]` LRC.
pub fn reference_entries() -> Vec<CodeEntry> {
    [
        (CodeFamily::Replication, 2, 1, 1),
        (CodeFamily::Mds, 9, 3, 3),
        (CodeFamily::Msr, 9, 3, 8),
        (CodeFamily::Mbr, 9, 5, 8),
        (CodeFamily::Lrc, 6, 3, 2),
    ]
    .into_iter()
    .map(|(family, m, h, r)| CodeEntry { family, m, h, r })
    .collect()
}

/// Sets `path` (dot-separated) inside a JSON document, creating objects on
/// the way. The value is parsed as JSON, falling back to a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not inside an object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("override `{key}` does not address an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg = Self::from_value(doc)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_value(doc: Value) -> Result<Self, CliError> {
        let cfg: Config = serde_json::from_value(doc).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params().validate()?;
        self.codes()?;
        if self.scheme.is_empty() {
            return Err(CliError::Config("scheme list is empty".into()));
        }
        self.delta_grid()?;
        Ok(())
    }

    pub fn params(&self) -> NetworkParams {
        let n = &self.network;
        NetworkParams {
            expected_nodes: n.expected_nodes,
            arrival_rate: n.arrival_rate.unwrap_or(n.departure_rate),
            departure_rate: n.departure_rate,
            request_rate: n.request_rate,
            class_arrival_rate: n.class_arrival_rate,
            rho_bs: n.rho_bs,
            rho_d2d: n.rho_d2d,
            file_bits: n.file_bits,
            list_period: n.list_period,
        }
    }

    pub fn codes(&self) -> Result<Vec<CodeSpec>, CliError> {
        if self.code.list.is_empty() {
            return Err(CliError::Config("code.list is empty".into()));
        }
        self.code
            .list
            .iter()
            .map(|e| derive_code(e.family, e.m, e.h, e.r, self.network.file_bits).map_err(CliError::from))
            .collect()
    }

    pub fn delta_grid(&self) -> Result<Vec<f64>, CliError> {
        let g = &self.grid;
        let grid = match &g.values {
            Some(v) => v.clone(),
            None => {
                if !(g.min > 0.0 && g.max > g.min) || g.points == 0 {
                    return Err(CliError::Config("grid needs 0 < min < max and points > 0".into()));
                }
                let mut v = log_grid(g.min, g.max, g.points);
                if !g.include_zero {
                    v.remove(0);
                }
                v
            }
        };
        if grid.is_empty() {
            return Err(CliError::Config("grid is empty".into()));
        }
        if grid.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(CliError::Config("grid values must be finite and >= 0".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config("grid must be strictly increasing".into()));
        }
        Ok(grid)
    }

    pub fn sim_config(&self, code: CodeSpec, scheme: Scheme, delta: f64, seed: u64) -> SimConfig {
        let mut s = SimConfig::new(self.params(), code, scheme, delta, self.sim.horizon, seed);
        s.request_model = self.sim.request_model;
        s.availability = self.sim.availability;
        s.batches = self.sim.batches;
        s
    }

    pub fn golden_path(&self) -> Option<PathBuf> {
        self.sim.golden_file.as_ref().map(|p| if p.is_absolute() { p.clone() } else { self.base_dir.join(p) })
    }

    /// The reference cell (`M = 30`, `μ = 1`, `ω = 0.02`, `ρ_BS = 40`).
    pub fn reference() -> Self {
        Self::from_value(serde_json::json!({"network": {"request_rate": 0.02, "rho_bs": 40.0}}))
            .expect("reference config is valid")
    }
}
