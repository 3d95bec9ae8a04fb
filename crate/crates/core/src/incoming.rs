//! Incoming process: nodes that already carry a coded symbol arrive at rate
//! `λ_c` per symbol class.
//!
//! Each class evolves as an M/M/∞ birth-death chain between repairs; a repair
//! refills an empty class with a single node. The before/after-repair class
//! occupancy distributions are the fixed point of that interval map. The
//! repair cost then uses the no-incoming formulas with the probability that a
//! class is nonempty at repair time, and the download cost replaces the
//! per-node departure rate with an effective class departure rate.

use nalgebra::DMatrix;

use crate::analytic::{self, CostQuery};
use crate::error::{Error, Result};
use crate::model::{CodeSpec, CostBreakdown, NetworkParams, Scheme};

/// Note attached to every cost that uses the exponential class-lifetime
/// approximation.
pub const DOWNLOAD_APPROXIMATION: &str =
    "download cost approximates the class lifetime by an exponential with the same mean";

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_STEPS: u64 = 100_000;

/// Truncated single-class birth-death chain over one repair interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub class_arrival_rate: f64,
    pub departure_rate: f64,
    /// Number of occupancy states kept, `0..states`.
    pub states: usize,
    pub delta: f64,
    pub tol: f64,
}

/// Smallest truncation that leaves less than `1e-12` of a Poisson(λ_c/μ + 1)
/// occupancy beyond the last state, and never fewer than 20 states.
pub fn default_states(lambda_c: f64, mu: f64) -> usize {
    let mean = lambda_c / mu + 1.0;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    let mut k = 0usize;
    while 1.0 - cdf >= 1e-12 && k < 500 {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    (k + 2).max(20)
}

impl ChainConfig {
    pub fn new(class_arrival_rate: f64, departure_rate: f64, delta: f64) -> Self {
        ChainConfig {
            class_arrival_rate,
            departure_rate,
            states: default_states(class_arrival_rate, departure_rate),
            delta,
            tol: DEFAULT_TOL,
        }
    }

    pub fn for_params(params: &NetworkParams, delta: f64) -> Self {
        Self::new(params.class_arrival_rate, params.departure_rate, delta)
    }

    pub fn with_states(mut self, states: usize) -> Self {
        self.states = states;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.states < 2 {
            return Err(Error::param("states", "need at least 2 states"));
        }
        if !(self.departure_rate > 0.0) {
            return Err(Error::param("departure_rate", "must be > 0"));
        }
        if !(self.class_arrival_rate >= 0.0) || self.class_arrival_rate > self.departure_rate {
            return Err(Error::param("class_arrival_rate", "must lie in [0, μ]"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::param("delta", "must be finite and >= 0"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be > 0"));
        }
        Ok(())
    }
}

/// Generator of the truncated chain; the birth out of the last state is dropped.
pub fn generator(config: &ChainConfig) -> DMatrix<f64> {
    let s = config.states;
    let mut g = DMatrix::zeros(s, s);
    for i in 0..s {
        if i + 1 < s {
            g[(i, i + 1)] = config.class_arrival_rate;
        }
        if i > 0 {
            g[(i, i - 1)] = i as f64 * config.departure_rate;
        }
        let out: f64 = (0..s).filter(|&j| j != i).map(|j| g[(i, j)]).sum();
        g[(i, i)] = -out;
    }
    g
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub(crate) fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = inf_norm(a);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = a * scale;
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    // ‖A‖ <= 1/2: 30 terms leave a remainder far below machine precision.
    for k in 1..=30u32 {
        term = &term * &scaled / f64::from(k);
        result += &term;
        if inf_norm(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Transition probabilities over one repair interval, `exp(Δ·G)`.
pub fn transition_matrix(config: &ChainConfig) -> DMatrix<f64> {
    let mut p = expm(&(generator(config) * config.delta));
    // Squaring can leave round-off sized negatives.
    p.apply(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
    for mut row in p.row_iter_mut() {
        let s: f64 = row.sum();
        row /= s;
    }
    p
}

/// Class-occupancy distributions right before (`q`) and right after
/// (`q_tilde`) a repair.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist {
    pub q: Vec<f64>,
    pub q_tilde: Vec<f64>,
    /// Number of interval steps applied until the fixed point was reached.
    pub iterations: u64,
    /// L∞ change produced by one further interval step.
    pub residual: f64,
}

impl StationaryDist {
    /// Probability that a class is empty when the repair runs.
    pub fn empty_at_repair(&self) -> f64 {
        self.q[0]
    }

    /// Occupancy right after repair when no content ever arrives.
    pub fn no_incoming(mu: f64, delta: f64, states: usize) -> Self {
        let mut q_tilde = vec![0.0; states];
        q_tilde[1] = 1.0;
        let mut q = vec![0.0; states];
        q[0] = -(-mu * delta).exp_m1();
        q[1] = (-mu * delta).exp();
        StationaryDist {
            q,
            q_tilde,
            iterations: 0,
            residual: 0.0,
        }
    }
}

/// Applies the repair map: an empty class gets one node, others are unchanged.
fn repair_map(q: &[f64]) -> Vec<f64> {
    let mut out = q.to_vec();
    out[1] += out[0];
    out[0] = 0.0;
    out
}

fn step(q_tilde: &[f64], p: &DMatrix<f64>) -> Vec<f64> {
    let s = q_tilde.len();
    (0..s)
        .map(|j| (0..s).map(|l| q_tilde[l] * p[(l, j)]).sum())
        .collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Fixed point of the repair-interval map starting from the given
/// post-repair distribution.
///
/// The map `q̃ ↦ X(q̃·P(Δ))` is linear, so its `N`-th power is applied by
/// repeated squaring of the one-step matrix; `iterations` reports `N`. The
/// loop stops once one further interval changes the iterate by less than
/// `tol/2`.
pub fn stationary_from(config: &ChainConfig, start: &[f64]) -> Result<StationaryDist> {
    config.validate()?;
    if start.len() != config.states {
        return Err(Error::param("start", "length must equal the number of states"));
    }
    let p = transition_matrix(config);
    // One-step post-repair map: P followed by the repair merge of column 0 into 1.
    let mut px = p.clone();
    for l in 0..config.states {
        px[(l, 1)] += px[(l, 0)];
        px[(l, 0)] = 0.0;
    }
    let mut power = px.clone();
    let mut steps = 1u64;
    let mut current = step(start, &power);
    loop {
        let change = linf(&step(&current, &px), &current);
        if change < config.tol * 0.5 {
            break;
        }
        if steps * 2 > MAX_STEPS {
            return Err(Error::NoConvergence {
                iterations: steps,
                residual: change,
            });
        }
        power = &power * &power;
        for mut row in power.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        steps *= 2;
        current = step(start, &power);
    }
    let total: f64 = current.iter().sum();
    let q_tilde: Vec<f64> = current.iter().map(|v| v.max(0.0) / total).collect();
    let q = step(&q_tilde, &p);
    let residual = linf(&repair_map(&q), &q_tilde);
    if residual >= config.tol {
        return Err(Error::NoConvergence {
            iterations: steps,
            residual,
        });
    }
    Ok(StationaryDist {
        q,
        q_tilde,
        iterations: steps,
        residual,
    })
}

/// Stationary class occupancy, started from a single node per class.
pub fn stationary(config: &ChainConfig) -> Result<StationaryDist> {
    let mut start = vec![0.0; config.states];
    start[1] = 1.0;
    stationary_from(config, &start)
}

/// `1/E[U]` where `U` is the time until a freshly repaired class empties with
/// no further arrivals: a mixture over the post-repair occupancy of
/// hypoexponential sums with rates `μ, 2μ, …, ℓμ`.
pub fn effective_rate(dist: &StationaryDist, mu: f64) -> Result<f64> {
    let mut harmonic = 0.0;
    let mut mean = 0.0;
    for (ell, &w) in dist.q_tilde.iter().enumerate().skip(1) {
        harmonic += 1.0 / ell as f64;
        mean += w * harmonic / mu;
    }
    if !(mean > 0.0) {
        return Err(Error::param("dist", "post-repair distribution has no occupied class"));
    }
    Ok(1.0 / mean)
}

/// Repair cost with an incoming process: the no-incoming repair cost of the
/// family and scheme, evaluated with the probability that a class is still
/// occupied at repair time in place of the node survival probability.
pub fn incoming_repair_cost(q: &CostQuery, dist: &StationaryDist) -> Result<f64> {
    let b = incoming_overall_cost(q, dist)?;
    Ok(b.repair())
}

/// Download cost with an incoming process, using the effective class
/// departure rate. This is an approximation; see [`DOWNLOAD_APPROXIMATION`].
pub fn incoming_download_cost(q: &CostQuery, mu_eff: f64) -> Result<f64> {
    if !(q.delta > 0.0) {
        return Err(Error::param("delta", "must be > 0"));
    }
    let (bs, d2d) = analytic::download_split(&q.params, &q.code, q.scheme, mu_eff, q.delta);
    Ok(bs + d2d)
}

/// Full breakdown for the incoming scenario at `q.delta > 0`.
///
/// With `λ_c = 0` this takes exactly the no-incoming inputs (`p = e^{-μΔ}`,
/// `μ̃ = μ`) rather than the numerically computed chain.
pub fn incoming_overall_cost(q: &CostQuery, dist: &StationaryDist) -> Result<CostBreakdown> {
    q.params.validate()?;
    if q.delta == 0.0 {
        return Ok(incoming_limit_breakdown(&q.params, &q.code, q.scheme));
    }
    if !(q.delta > 0.0) || !q.delta.is_finite() {
        return Err(Error::param("delta", "must be finite and >= 0"));
    }
    if q.params.class_arrival_rate == 0.0 {
        return analytic::overall_cost(q);
    }
    let empty = dist.empty_at_repair();
    let p = 1.0 - empty;
    let mu_eff = effective_rate(dist, q.params.departure_rate)?;
    Ok(analytic::scheme_breakdown(&q.params, &q.code, q.scheme, p, empty, mu_eff, q.delta))
}

/// Convenience wrapper computing the stationary distribution for the query.
pub fn incoming_cost(q: &CostQuery) -> Result<CostBreakdown> {
    if q.delta == 0.0 || q.params.class_arrival_rate == 0.0 {
        let dist = StationaryDist::no_incoming(q.params.departure_rate, q.delta, 2);
        return incoming_overall_cost(q, &dist);
    }
    let dist = stationary(&ChainConfig::for_params(&q.params, q.delta))?;
    incoming_overall_cost(q, &dist)
}

/// Instantaneous-repair limit with an incoming process.
///
/// As `Δ → 0` a class can only empty from a single node, and repairs keep it
/// from ever staying empty, so the occupancy follows the chain reflected at
/// one: `π_ℓ ∝ a^ℓ/ℓ!` on `ℓ >= 1` with `a = λ_c/μ`. Classes then empty at
/// rate `μ·π_1` and every request is served over D2D.
pub fn incoming_limit_breakdown(params: &NetworkParams, code: &CodeSpec, _scheme: Scheme) -> CostBreakdown {
    let a = params.class_arrival_rate / params.departure_rate;
    let single = if a == 0.0 { 1.0 } else { a / a.exp_m1() };
    analytic::limit_breakdown(params, code, single)
}
