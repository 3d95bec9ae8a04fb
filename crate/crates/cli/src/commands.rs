use std::collections::HashMap;
use std::path::{Path, PathBuf};

use d2dstore_core::analytic::overall_cost;
use d2dstore_core::incoming::{incoming_cost, incoming_overall_cost, stationary, ChainConfig, StationaryDist, DOWNLOAD_APPROXIMATION};
use d2dstore_core::oracle::{check_golden, GoldenCheck, GoldenFile};
use d2dstore_core::search::{delta_max, enumerate_codes, min_cost_curve, DeltaMax, SearchSpec};
use d2dstore_core::simulator::{self, SimResult};
use d2dstore_core::{derive_code, CodeFamily, CodeSpec, CostBreakdown, CostQuery, NetworkParams, Scheme};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::acceptance::{self, CriterionReport};
use crate::config::Config;
use crate::error::CliError;
use crate::table::{round_json, Cell, Kind, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analytic,
    Simulate,
    Search,
    Figures,
    Validate,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Analytic => "analytic",
            Command::Simulate => "simulate",
            Command::Search => "search",
            Command::Figures => "figures",
            Command::Validate => "validate",
        }
    }
}

/// Everything that determines a run; written to `manifest.json` next to the
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
    /// Restricts `validate` to these criteria (all when empty).
    #[serde(default)]
    pub criteria: Vec<String>,
    #[serde(skip)]
    pub force: bool,
}

/// Files produced by a command, written together once all are computed.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    pub notes: Vec<String>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn add_table(&mut self, name: impl Into<String>, table: &Table) -> Result<(), CliError> {
        self.add(name, table.to_csv()?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes every file into `dir`, refusing to replace existing files
    /// unless `force` is set. Nothing is written if any target exists.
    pub fn commit(&self, dir: &Path, force: bool) -> Result<(), CliError> {
        if !force {
            if let Some((name, _)) = self.files.iter().find(|(n, _)| dir.join(n).exists()) {
                return Err(CliError::Config(format!(
                    "{} already exists; pass --force to overwrite",
                    dir.join(name).display()
                )));
            }
        }
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// Overall cost with the incoming model when the class arrival rate is
/// positive; stationary distributions are cached per repair interval.
pub struct Evaluator {
    params: NetworkParams,
    dists: HashMap<u64, StationaryDist>,
}

impl Evaluator {
    pub fn new(params: NetworkParams) -> Self {
        Evaluator {
            params,
            dists: HashMap::new(),
        }
    }

    pub fn incoming(&self) -> bool {
        self.params.class_arrival_rate > 0.0
    }

    pub fn cost(&mut self, code: CodeSpec, scheme: Scheme, delta: f64) -> Result<CostBreakdown, CliError> {
        let q = CostQuery::new(self.params, code, scheme, delta);
        if !self.incoming() {
            return Ok(overall_cost(&q)?);
        }
        if delta == 0.0 {
            return Ok(incoming_cost(&q)?);
        }
        let key = delta.to_bits();
        if !self.dists.contains_key(&key) {
            let d = stationary(&ChainConfig::for_params(&self.params, delta))?;
            self.dists.insert(key, d);
        }
        Ok(incoming_overall_cost(&q, &self.dists[&key])?)
    }
}

fn code_cells(code: &CodeSpec) -> Vec<Cell> {
    vec![
        Cell::text(code.family.as_str()),
        Cell::Int(code.m.into()),
        Cell::Int(code.h.into()),
        Cell::Int(code.r.into()),
    ]
}

pub const COST_COLUMNS: [(&str, Kind); 12] = [
    ("family", Kind::Text),
    ("m", Kind::Int),
    ("h", Kind::Int),
    ("r", Kind::Int),
    ("scheme", Kind::Text),
    ("delta", Kind::Num),
    ("repair_bs", Kind::Num),
    ("repair_d2d", Kind::Num),
    ("download_bs", Kind::Num),
    ("download_d2d", Kind::Num),
    ("total", Kind::Num),
    ("normalized", Kind::Num),
];

fn cost_row(code: &CodeSpec, scheme: Scheme, delta: f64, c: &CostBreakdown) -> Vec<Cell> {
    let mut row = code_cells(code);
    row.push(Cell::text(scheme.as_str()));
    row.extend(
        [delta, c.repair_bs, c.repair_d2d, c.download_bs, c.download_d2d, c.total, c.normalized].map(Cell::num),
    );
    row
}

/// Cost table for every configured code, scheme and grid value.
pub fn analytic_table(cfg: &Config) -> Result<Table, CliError> {
    cost_table(&cfg.params(), &cfg.codes()?, &cfg.scheme, &cfg.delta_grid()?)
}

pub fn cost_table(params: &NetworkParams, codes: &[CodeSpec], schemes: &[Scheme], grid: &[f64]) -> Result<Table, CliError> {
    let mut eval = Evaluator::new(*params);
    let mut table = Table::new(&COST_COLUMNS);
    for code in codes {
        for &scheme in schemes {
            for &delta in grid {
                let c = eval.cost(*code, scheme, delta)?;
                table.push(cost_row(code, scheme, delta, &c));
            }
        }
    }
    Ok(table)
}

fn approximation_note(params: &NetworkParams, out: &mut Outputs) {
    if params.class_arrival_rate > 0.0 {
        out.notes.push(DOWNLOAD_APPROXIMATION.to_string());
    }
}

pub fn cmd_analytic(cfg: &Config) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    out.add_table("analytic.csv", &analytic_table(cfg)?)?;
    approximation_note(&cfg.params(), &mut out);
    Ok(out)
}

pub const REPORT_COLUMNS: [(&str, Kind); 12] = [
    ("family", Kind::Text),
    ("m", Kind::Int),
    ("h", Kind::Int),
    ("r", Kind::Int),
    ("scheme", Kind::Text),
    ("delta", Kind::Num),
    ("seed", Kind::Int),
    ("analytic_total", Kind::Num),
    ("empirical_total", Kind::Num),
    ("stderr_total", Kind::Num),
    ("z", Kind::Num),
    ("flag", Kind::Text),
];

/// z-score of an empirical mean against a reference value.
pub fn z_score(empirical: f64, reference: f64, stderr: f64) -> f64 {
    let diff = empirical - reference;
    if stderr > 0.0 {
        diff / stderr
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// One simulation per code, scheme and positive grid value; run `i` uses
/// seed `seed + i`.
pub fn simulate_runs(cfg: &Config, seed: u64) -> Result<Vec<(SimResult, CostBreakdown)>, CliError> {
    let mut eval = Evaluator::new(cfg.params());
    let mut runs = Vec::new();
    let mut i = 0u64;
    for code in cfg.codes()? {
        for &scheme in &cfg.scheme {
            for delta in cfg.delta_grid()?.into_iter().filter(|d| *d > 0.0) {
                let sim_cfg = cfg.sim_config(code, scheme, delta, seed.wrapping_add(i));
                i += 1;
                let result = simulator::run(&sim_cfg)?;
                runs.push((result, eval.cost(code, scheme, delta)?));
            }
        }
    }
    if runs.is_empty() {
        return Err(CliError::Config("simulation needs at least one grid value > 0".into()));
    }
    Ok(runs)
}

pub fn cmd_simulate(cfg: &Config, seed: u64) -> Result<Outputs, CliError> {
    let runs = simulate_runs(cfg, seed)?;
    let mut lines = String::new();
    let mut report = Table::new(&REPORT_COLUMNS);
    for (res, an) in &runs {
        lines.push_str(&serde_json::to_string(&round_json(serde_json::to_value(res)?))?);
        lines.push('\n');
        let z = z_score(res.cost.total, an.total, res.stderr.total);
        let mut row = code_cells(&res.config.code);
        row.push(Cell::text(res.config.scheme.as_str()));
        row.push(Cell::num(res.config.delta));
        row.push(Cell::Int(res.config.seed as i64));
        row.extend([an.total, res.cost.total, res.stderr.total, z].map(Cell::num));
        row.push(Cell::text(if z.abs() > 3.0 { "|z|>3" } else { "ok" }));
        report.push(row);
    }
    let mut out = Outputs::default();
    out.add("simulate.jsonl", lines);
    out.add_table("report.csv", &report)?;
    approximation_note(&cfg.params(), &mut out);
    Ok(out)
}

pub const SEARCH_COLUMNS: [(&str, Kind); 7] = [
    ("delta", Kind::Num),
    ("family", Kind::Text),
    ("m", Kind::Int),
    ("h", Kind::Int),
    ("r", Kind::Int),
    ("cost", Kind::Num),
    ("normalized", Kind::Num),
];

/// Winner per grid value; rows where no code beats serving every request
/// from the base station read `bs-only`.
pub fn search_table(params: &NetworkParams, scheme: Scheme, gamma: f64, m_max: u32, grid: &[f64]) -> Result<Table, CliError> {
    let spec = SearchSpec {
        params: *params,
        scheme,
        m_max,
        gamma_budget: gamma,
        delta_grid: grid.to_vec(),
        incoming: params.class_arrival_rate > 0.0,
    };
    let mut table = Table::new(&SEARCH_COLUMNS);
    for pt in min_cost_curve(&spec)? {
        let mut row = vec![Cell::num(pt.delta)];
        if pt.cost.normalized < 1.0 {
            row.extend(code_cells(&pt.code));
            row.extend([pt.cost.total, pt.cost.normalized].map(Cell::num));
        } else {
            row.extend([Cell::text("bs-only"), Cell::Empty, Cell::Empty, Cell::Empty]);
            row.extend([params.bs_only_cost(), 1.0].map(Cell::num));
        }
        table.push(row);
    }
    Ok(table)
}

pub fn cmd_search(cfg: &Config) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let grid = cfg.delta_grid()?;
    for &scheme in &cfg.scheme {
        let t = search_table(&cfg.params(), scheme, cfg.code.gamma_budget, cfg.code.m_max, &grid)?;
        out.add_table(format!("search_{}.csv", scheme.as_str()), &t)?;
    }
    approximation_note(&cfg.params(), &mut out);
    Ok(out)
}

fn with(params: &NetworkParams, omega: f64, rho_bs: f64) -> NetworkParams {
    NetworkParams {
        request_rate: omega,
        rho_bs,
        ..*params
    }
}

/// Every code of the `Γ = 3` enumeration with rate exactly `1/3`.
fn rate_third_codes(params: &NetworkParams) -> Result<Vec<CodeSpec>, CliError> {
    let spec = SearchSpec::new(*params, Scheme::Conventional, 3.0);
    Ok(enumerate_codes(&spec)?
        .into_iter()
        .filter(|c| c.rate() == Ratio::new(1, 3))
        .collect())
}

const DELTA_MAX_COLUMNS: [(&str, Kind); 7] = [
    ("family", Kind::Text),
    ("m", Kind::Int),
    ("h", Kind::Int),
    ("r", Kind::Int),
    ("omega", Kind::Num),
    ("rho", Kind::Num),
    ("delta_max", Kind::Text),
];

fn delta_max_cell(d: DeltaMax) -> Cell {
    match d {
        DeltaMax::None => Cell::text("none"),
        DeltaMax::Infinite => Cell::text("infinite"),
        DeltaMax::Finite(v) => Cell::text(crate::table::fmt_sig(v)),
    }
}

/// Plot-ready datasets for the cost-versus-interval, threshold, request-rate,
/// hybrid, winner and incoming-content figures. The cell size, departure
/// rate and file size come from the config; the remaining parameters are the
/// published figure settings.
pub fn cmd_figures(cfg: &Config) -> Result<Outputs, CliError> {
    let base = NetworkParams {
        class_arrival_rate: 0.0,
        ..cfg.params()
    };
    let f = base.file_bits;
    let grid = cfg.delta_grid()?;
    let mut out = Outputs::default();
    let conv = [Scheme::Conventional];

    let codes3 = rate_third_codes(&base)?;
    out.add_table("fig3_costs.csv", &cost_table(&with(&base, 0.02, 40.0), &codes3, &conv, &grid)?)?;

    let mut t = Table::new(&DELTA_MAX_COLUMNS);
    for code in &codes3 {
        for rho in [2.0, 5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 100.0] {
            let p = with(&base, 0.05, rho);
            let mut row = code_cells(code);
            row.extend([Cell::num(0.05), Cell::num(rho), delta_max_cell(delta_max(&p, code, Scheme::Conventional)?)]);
            t.push(row);
        }
    }
    out.add_table("fig4_delta_max.csv", &t)?;

    let lrc = [derive_code(CodeFamily::Lrc, 6, 3, 2, f)?];
    let mut t = Table::new(&[("omega", Kind::Num)].into_iter().chain(COST_COLUMNS).collect::<Vec<_>>());
    for omega in [0.01, 0.02, 0.05, 0.1, 1.0, 10.0] {
        for row in cost_table(&with(&base, omega, 20.0), &lrc, &conv, &grid)?.rows {
            t.push(std::iter::once(Cell::num(omega)).chain(row).collect());
        }
    }
    out.add_table("fig5_request_rate.csv", &t)?;

    out.add_table("fig6_hybrid.csv", &cost_table(&with(&base, 0.1, 10.0), &codes3, &Scheme::ALL, &grid)?)?;
    out.add_table("fig7_winners.csv", &search_table(&with(&base, 0.02, 40.0), Scheme::Conventional, 3.0, 10, &grid)?)?;
    out.add_table("fig8_winners_hybrid.csv", &search_table(&with(&base, 1.0, 40.0), Scheme::Hybrid, 3.0, 10, &grid)?)?;

    let mut t = Table::new(&[("class_arrival_rate", Kind::Num)].into_iter().chain(COST_COLUMNS).collect::<Vec<_>>());
    let mds = [derive_code(CodeFamily::Mds, 9, 3, 3, f)?];
    let lambda_grid: Vec<f64> = grid.iter().copied().filter(|d| *d == 0.0 || *d >= 1e-3).collect();
    for lc in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let p = NetworkParams {
            class_arrival_rate: lc * base.departure_rate,
            ..with(&base, 0.02, 40.0)
        };
        for row in cost_table(&p, &mds, &conv, &lambda_grid)?.rows {
            t.push(std::iter::once(Cell::num(lc * base.departure_rate)).chain(row).collect());
        }
    }
    out.add_table("fig9_incoming.csv", &t)?;
    let p = NetworkParams {
        class_arrival_rate: base.departure_rate,
        ..with(&base, 0.02, 40.0)
    };
    out.add_table("fig10_incoming_winners.csv", &search_table(&p, Scheme::Conventional, 3.0, 10, &lambda_grid)?)?;
    out.notes.push(DOWNLOAD_APPROXIMATION.to_string());
    Ok(out)
}

/// Machine-readable outcome of `validate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub golden_file: PathBuf,
    pub golden: Vec<GoldenCheck>,
    pub criteria: Vec<CriterionReport>,
    pub pass: bool,
}

pub fn load_golden(cfg: &Config) -> Result<(PathBuf, GoldenFile), CliError> {
    let path = cfg
        .golden_path()
        .ok_or_else(|| CliError::MissingGolden(PathBuf::from("<sim.golden_file not set>")))?;
    if !path.is_file() {
        return Err(CliError::MissingGolden(path));
    }
    let text = std::fs::read_to_string(&path)?;
    let file = serde_json::from_str(&text)
        .map_err(|e| CliError::Failure(format!("golden file {} is malformed: {e}", path.display())))?;
    Ok((path, file))
}

/// Golden comparison followed by the selected acceptance criteria; lines
/// are reported through `progress` as they complete.
pub fn run_validation(
    cfg: &Config,
    criteria: &[String],
    mut progress: impl FnMut(&str),
) -> Result<ValidationReport, CliError> {
    let (golden_file, golden) = load_golden(cfg)?;
    let checks = check_golden(&golden)?;
    for c in &checks {
        progress(&format!(
            "golden {:<50} {} (ref {:.6e}, got {:.6e}, tol {:.2e})",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.reference,
            c.computed,
            c.tolerance
        ));
    }
    let mut reports = Vec::new();
    for id in acceptance::select(criteria)? {
        let r = acceptance::run(id);
        progress(&r.line());
        reports.push(r);
    }
    let pass = checks.iter().all(|c| c.pass) && reports.iter().all(|r| r.pass);
    Ok(ValidationReport {
        golden_file,
        golden: checks,
        criteria: reports,
        pass,
    })
}

/// Runs a manifest end to end: load config, compute, write outputs.
pub fn execute(manifest: &RunManifest, mut progress: impl FnMut(&str)) -> Result<Outputs, CliError> {
    let cfg = Config::load(&manifest.config_path, &manifest.overrides)?;
    let seed = manifest.seed.unwrap_or(cfg.sim.seed);
    let mut failure = None;
    let mut out = match manifest.command {
        Command::Analytic => cmd_analytic(&cfg)?,
        Command::Simulate => cmd_simulate(&cfg, seed)?,
        Command::Search => cmd_search(&cfg)?,
        Command::Figures => cmd_figures(&cfg)?,
        Command::Validate => {
            let report = run_validation(&cfg, &manifest.criteria, &mut progress)?;
            if !report.pass {
                let failed: Vec<String> = report
                    .golden
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.name.clone())
                    .chain(report.criteria.iter().filter(|r| !r.pass).map(|r| r.id.to_string()))
                    .collect();
                failure = Some(CliError::Failure(format!("validation failed: {}", failed.join(", "))));
            }
            let mut out = Outputs::default();
            out.add("validate.json", serde_json::to_string_pretty(&round_json(serde_json::to_value(&report)?))? + "\n");
            out
        }
    };
    for note in &out.notes {
        progress(&format!("note: {note}"));
    }
    let mut m = manifest.clone();
    m.seed = Some(seed);
    let mut doc = serde_json::to_value(&m)?;
    doc["notes"] = serde_json::to_value(&out.notes)?;
    doc["outputs"] = serde_json::to_value(out.names())?;
    out.add("manifest.json", serde_json::to_string_pretty(&doc)? + "\n");
    out.commit(&manifest.output_dir, manifest.force)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
