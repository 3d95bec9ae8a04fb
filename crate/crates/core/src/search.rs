//! Exhaustive search over code parameters and repair intervals.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::analytic::{overall_cost, CostQuery};
use crate::error::{Error, Result};
use crate::incoming::{incoming_overall_cost, stationary, ChainConfig, StationaryDist};
use crate::model::{derive_code, CodeFamily, CodeSpec, CostBreakdown, NetworkParams, Scheme};

pub const DEFAULT_M_MAX: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub params: NetworkParams,
    pub scheme: Scheme,
    pub m_max: u32,
    /// Storage budget `Γ` in files: only codes with `m·α <= Γ·F` qualify.
    pub gamma_budget: f64,
    pub delta_grid: Vec<f64>,
    pub incoming: bool,
}

/// `{0}` followed by `points` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    let (a, b) = (lo.ln(), hi.ln());
    for i in 0..points {
        let f = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
        grid.push((a + f * (b - a)).exp());
    }
    grid
}

/// Grid used when none is configured: `{0} ∪ logspace(10⁻³, 10, 121)`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-3, 10.0, 121)
}

impl SearchSpec {
    pub fn new(params: NetworkParams, scheme: Scheme, gamma_budget: f64) -> Self {
        SearchSpec {
            params,
            scheme,
            m_max: DEFAULT_M_MAX,
            gamma_budget,
            delta_grid: default_grid(),
            incoming: params.class_arrival_rate > 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.gamma_budget > 1.0) || !self.gamma_budget.is_finite() {
            return Err(Error::param("gamma_budget", format!("must be finite and > 1, got {}", self.gamma_budget)));
        }
        if self.m_max < 2 {
            return Err(Error::param("m_max", "must be at least 2"));
        }
        if self.delta_grid.is_empty() {
            return Err(Error::param("delta_grid", "must not be empty"));
        }
        if self.delta_grid[0] != 0.0 {
            return Err(Error::param("delta_grid", "must start at 0"));
        }
        if self.delta_grid.windows(2).any(|w| !(w[1] > w[0])) || self.delta_grid.iter().any(|d| !d.is_finite()) {
            return Err(Error::param("delta_grid", "must be finite and strictly increasing"));
        }
        Ok(())
    }
}

/// Every code within the storage budget, ordered by family (replication,
/// MDS, MSR, MBR, LRC), then `m`, `h`, `r`.
pub fn enumerate_codes(spec: &SearchSpec) -> Result<Vec<CodeSpec>> {
    spec.validate()?;
    let budget = Ratio::<i64>::approximate_float(spec.gamma_budget)
        .ok_or_else(|| Error::param("gamma_budget", "not representable as a fraction"))?;
    let mut out = Vec::new();
    for family in CodeFamily::ALL {
        for m in 2..=spec.m_max {
            for h in 1..m {
                for r in 1..m {
                    if family == CodeFamily::Mds && h == 1 {
                        continue; // reported as replication
                    }
                    let Ok(code) = derive_code(family, m, h, r, spec.params.file_bits) else {
                        continue;
                    };
                    if code.storage_files() <= budget {
                        out.push(code);
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySearch(format!(
            "no code with m <= {} fits a budget of {} files",
            spec.m_max, spec.gamma_budget
        )));
    }
    Ok(out)
}

/// Cheapest code at one repair interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub code: CodeSpec,
    pub cost: CostBreakdown,
}

/// Cost of `code` at `delta`, with the incoming model when `dist` is given.
fn cost_at(
    params: &NetworkParams,
    code: CodeSpec,
    scheme: Scheme,
    delta: f64,
    dist: Option<&StationaryDist>,
) -> Result<CostBreakdown> {
    let q = CostQuery::new(*params, code, scheme, delta);
    match dist {
        Some(d) => incoming_overall_cost(&q, d),
        None => overall_cost(&q),
    }
}

fn dist_for(params: &NetworkParams, incoming: bool, delta: f64) -> Result<Option<StationaryDist>> {
    if !incoming || delta == 0.0 || params.class_arrival_rate == 0.0 {
        return Ok(None);
    }
    stationary(&ChainConfig::for_params(params, delta)).map(Some)
}

/// Minimum-cost code for each grid value; ties go to the earlier code in
/// enumeration order.
pub fn min_cost_curve(spec: &SearchSpec) -> Result<Vec<CurvePoint>> {
    let codes = enumerate_codes(spec)?;
    let mut out = Vec::with_capacity(spec.delta_grid.len());
    for &delta in &spec.delta_grid {
        let dist = dist_for(&spec.params, spec.incoming, delta)?;
        let mut best: Option<CurvePoint> = None;
        for &code in &codes {
            let cost = cost_at(&spec.params, code, spec.scheme, delta, dist.as_ref())?;
            if best.is_none_or(|b| cost.total < b.cost.total) {
                best = Some(CurvePoint { delta, code, cost });
            }
        }
        out.push(best.expect("enumeration is non-empty"));
    }
    Ok(out)
}

/// Largest repair interval for which storing the file in the cell is cheaper
/// than serving every request from the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum DeltaMax {
    /// Base-station download is never beaten.
    None,
    Finite(f64),
    /// Storage stays cheaper over the whole search range.
    Infinite,
}

impl DeltaMax {
    pub fn finite(self) -> Option<f64> {
        match self {
            DeltaMax::Finite(v) => Some(v),
            _ => None,
        }
    }
}

pub const DELTA_MAX_GRID_POINTS: usize = 241;

/// Resolution of `delta_max` and `delta_opt`, in units of `1/μ`.
pub const DELTA_RESOLUTION: f64 = 1e-3;

/// Evaluates `C̄(Δ)` for a single code, optionally with the incoming model.
pub struct CostCurve<'a> {
    pub params: &'a NetworkParams,
    pub code: CodeSpec,
    pub scheme: Scheme,
    pub incoming: bool,
}

impl CostCurve<'_> {
    pub fn at(&self, delta: f64) -> Result<CostBreakdown> {
        let dist = dist_for(self.params, self.incoming, delta)?;
        cost_at(self.params, self.code, self.scheme, delta, dist.as_ref())
    }

    fn normalized(&self, delta: f64) -> Result<f64> {
        Ok(self.at(delta)?.normalized)
    }
}

/// `sup{Δ : C̄(Δ) < M·ω·ρ_BS}` on a log grid from `10⁻³/μ` to `10²/μ`,
/// refined by bisection on the last crossing.
pub fn delta_max(params: &NetworkParams, code: &CodeSpec, scheme: Scheme) -> Result<DeltaMax> {
    delta_max_curve(&CostCurve {
        params,
        code: *code,
        scheme,
        incoming: false,
    })
}

pub fn delta_max_curve(curve: &CostCurve<'_>) -> Result<DeltaMax> {
    let mu = curve.params.departure_rate;
    let grid = log_grid(1e-3 / mu, 1e2 / mu, DELTA_MAX_GRID_POINTS);
    let below: Vec<bool> = grid
        .iter()
        .map(|&d| curve.normalized(d).map(|v| v < 1.0))
        .collect::<Result<_>>()?;
    let Some(last) = below.iter().rposition(|&b| b) else {
        return Ok(DeltaMax::None);
    };
    if last == grid.len() - 1 {
        return Ok(DeltaMax::Infinite);
    }
    let (mut lo, mut hi) = (grid[last], grid[last + 1]);
    while hi - lo > DELTA_RESOLUTION / mu {
        let mid = 0.5 * (lo + hi);
        if curve.normalized(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DeltaMax::Finite(0.5 * (lo + hi)))
}

/// Repair interval minimising `C̄` over `[0, 10²/μ]`: best grid point, then
/// golden-section refinement inside its neighbouring cells.
pub fn delta_opt(params: &NetworkParams, code: &CodeSpec, scheme: Scheme) -> Result<f64> {
    delta_opt_curve(&CostCurve {
        params,
        code: *code,
        scheme,
        incoming: false,
    })
}

pub fn delta_opt_curve(curve: &CostCurve<'_>) -> Result<f64> {
    let mu = curve.params.departure_rate;
    let grid = log_grid(1e-3 / mu, 1e2 / mu, DELTA_MAX_GRID_POINTS);
    let values: Vec<f64> = grid.iter().map(|&d| curve.at(d).map(|c| c.total)).collect::<Result<_>>()?;
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < values[b] { i } else { b });
    if best == 0 {
        return Ok(0.0);
    }
    let (mut a, mut b) = (grid[best - 1], grid[(best + 1).min(grid.len() - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = curve.at(c)?.total;
    let mut fd = curve.at(d)?.total;
    while b - a > DELTA_RESOLUTION / mu {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = curve.at(c)?.total;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = curve.at(d)?.total;
        }
    }
    let x = 0.5 * (a + b);
    if curve.at(x)?.total >= values[0] {
        return Ok(0.0);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(omega: f64, rho: f64) -> SearchSpec {
        SearchSpec::new(NetworkParams::reference(omega, rho), Scheme::Conventional, 3.0)
    }

    #[test]
    fn budget_filter() {
        let codes = enumerate_codes(&spec(0.02, 40.0)).unwrap();
        let has = |f, m, h, r| codes.iter().any(|c| c.family == f && (c.m, c.h, c.r) == (m, h, r));
        assert!(has(CodeFamily::Mds, 9, 3, 3));
        assert!(!has(CodeFamily::Mds, 9, 2, 2));
        assert!(has(CodeFamily::Replication, 2, 1, 1));
        assert!(!has(CodeFamily::Replication, 4, 1, 1));
        assert_eq!(codes[0].family, CodeFamily::Replication);
    }

    #[test]
    fn ordering_is_by_family_then_parameters() {
        let codes = enumerate_codes(&spec(0.02, 40.0)).unwrap();
        let key = |c: &CodeSpec| (CodeFamily::ALL.iter().position(|f| *f == c.family).unwrap(), c.m, c.h, c.r);
        assert!(codes.windows(2).all(|w| key(&w[0]) < key(&w[1])));
    }

    #[test]
    fn grid_validation() {
        let mut s = spec(0.02, 40.0);
        s.delta_grid = vec![];
        assert!(s.validate().is_err());
        s.delta_grid = vec![0.0, 1.0, 1.0];
        assert!(s.validate().is_err());
        s.delta_grid = vec![0.1, 1.0];
        assert!(s.validate().is_err());
        s.delta_grid = vec![0.0, 1.0];
        s.gamma_budget = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn cheap_bs_means_no_delta_max() {
        let p = NetworkParams::reference(0.05, 2.0);
        let code = derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap();
        assert_eq!(delta_max(&p, &code, Scheme::Conventional).unwrap(), DeltaMax::None);
    }

    #[test]
    fn high_request_rate_is_infinite() {
        let p = NetworkParams::reference(10.0, 40.0);
        let code = derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap();
        assert_eq!(delta_max(&p, &code, Scheme::Conventional).unwrap(), DeltaMax::Infinite);
    }

    #[test]
    fn delta_opt_anchors() {
        let p = NetworkParams::reference(0.02, 40.0);
        let msr = derive_code(CodeFamily::Msr, 9, 3, 8, 1.0).unwrap();
        let mds = derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap();
        assert_eq!(delta_opt(&p, &msr, Scheme::Conventional).unwrap(), 0.0);
        assert!(delta_opt(&p, &mds, Scheme::Conventional).unwrap() > 0.0);
    }
}
