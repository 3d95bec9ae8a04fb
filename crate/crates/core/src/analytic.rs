//! Closed-form repair, download and overall communication costs when no
//! content-carrying nodes arrive.
//!
//! Within one repair interval the storage nodes form a pure-death process:
//! each of the `m` nodes survives the interval independently with probability
//! `p = e^{-μΔ}`, and the time at which fewer than `h` remain is a
//! hypoexponential variable. Requests are Poisson, so their phase within the
//! interval is uniform in the long run; the download cost follows from the
//! mean fraction of the interval during which `h` nodes are still present.
//!
//! All the interval-level pieces are written against an explicit survival
//! probability and departure rate so the incoming-process model can reuse them
//! with substituted inputs.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::model::{binom, choose, frac_f64, CodeFamily, CodeSpec, CostBreakdown, NetworkParams, Scheme};

/// One point of a cost evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostQuery {
    pub params: NetworkParams,
    pub code: CodeSpec,
    pub scheme: Scheme,
    /// Repair interval `Δ` in t.u.; `0` means instantaneous repair.
    pub delta: f64,
}

impl CostQuery {
    pub fn new(params: NetworkParams, code: CodeSpec, scheme: Scheme, delta: f64) -> Self {
        CostQuery {
            params,
            code,
            scheme,
            delta,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Probability that a node present at the last repair is still present.
    pub fn survival(&self) -> f64 {
        (-self.params.departure_rate * self.delta).exp()
    }

    fn require_positive_delta(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::param(
                "delta",
                format!("must be finite and > 0 here (use the Δ = 0 limit), got {}", self.delta),
            ));
        }
        Ok(())
    }
}

/// Expected cost of the repairs performed at one repair epoch, split by link.
/// Units are c.u. (not yet normalised by `F·Δ`).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct EpochCost {
    pub bs: f64,
    pub d2d: f64,
}

impl EpochCost {
    fn rate(self, params: &NetworkParams, delta: f64) -> (f64, f64) {
        let scale = params.file_bits * delta;
        (self.bs / scale, self.d2d / scale)
    }
}

/// Whether the base station should carry every repair because it is cheaper
/// than even a successful D2D repair (`ρ_BS·γ_BS < ρ_D2D·γ_D2D`).
pub fn bs_repair_dominates(params: &NetworkParams, code: &CodeSpec) -> bool {
    params.rho_bs * code.gamma_bs() < params.rho_d2d * code.gamma_d2d()
}

/// Repair cost of the conventional scheme for MDS and regenerating codes.
pub fn repair_cost(q: &CostQuery) -> Result<f64> {
    reject_lrc(&q.code, "repair_cost", "lrc_repair_cost")?;
    q.require_positive_delta()?;
    let (bs, d2d) = conventional_epoch(&q.params, &q.code, q.survival()).rate(&q.params, q.delta);
    Ok(bs + d2d)
}

fn reject_lrc(code: &CodeSpec, op: &'static str, instead: &'static str) -> Result<()> {
    if code.family == CodeFamily::Lrc {
        return Err(Error::WrongFamily {
            op,
            family: code.family,
            instead,
        });
    }
    Ok(())
}

pub(crate) fn conventional_epoch(params: &NetworkParams, code: &CodeSpec, p: f64) -> EpochCost {
    let per_bs = params.rho_bs * code.gamma_bs();
    let per_d2d = params.rho_d2d * code.gamma_d2d();
    let mut out = EpochCost::default();
    for i in 0..code.m {
        let lost = f64::from(code.m - i) * binom(i, code.m, p);
        if i >= code.r {
            out.d2d += per_d2d * lost;
        } else {
            out.bs += per_bs * lost;
        }
    }
    out
}

/// Repair cost when every lost node is restored from the base station.
pub fn repair_cost_bs_only(q: &CostQuery) -> Result<f64> {
    q.require_positive_delta()?;
    let lost = -(-q.params.departure_rate * q.delta).exp_m1();
    let (bs, _) = bs_only_epoch(&q.params, &q.code, 1.0 - lost, lost).rate(&q.params, q.delta);
    Ok(bs)
}

/// `lost` is passed separately so that `1 - p` keeps full precision for small Δ.
pub(crate) fn bs_only_epoch(params: &NetworkParams, code: &CodeSpec, _p: f64, lost: f64) -> EpochCost {
    EpochCost {
        bs: params.rho_bs * code.gamma_bs() * f64::from(code.m) * lost,
        d2d: 0.0,
    }
}

/// `∏_{j=h, j≠i}^{m} j / (j − i)` as an exact fraction.
pub fn partial_fraction_weight_exact(i: u32, h: u32, m: u32) -> BigRational {
    assert!(h >= 1 && h <= i && i <= m, "weight needs 1 <= h <= i <= m");
    let mut num = BigInt::from(1);
    let mut den = BigInt::from(1);
    for j in (h..=m).filter(|&j| j != i) {
        num *= BigInt::from(j);
        den *= BigInt::from(i64::from(j) - i64::from(i));
    }
    BigRational::new(num, den)
}

/// Partial-fraction weight of the `i`-th exponential phase in the survival
/// function of the time until fewer than `h` of `m` nodes remain.
pub fn partial_fraction_weight(i: u32, h: u32, m: u32) -> f64 {
    assert!(h >= 1 && h <= i && i <= m, "weight needs 1 <= h <= i <= m");
    if m <= 30 {
        // Both products fit comfortably in i128 up to 30!.
        let mut w = Ratio::<i128>::from_integer(1);
        for j in (h..=m).filter(|&j| j != i) {
            w *= Ratio::new(i128::from(j), i128::from(j) - i128::from(i));
        }
        return w.to_f64().expect("finite weight");
    }
    partial_fraction_weight_exact(i, h, m).to_f64().expect("finite weight")
}

/// `(1 - e^{-x}) / x` computed without cancellation.
fn one_minus_exp_over(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Mean fraction of a repair interval during which at least `h` of the `m`
/// storage nodes present at its start are still in the cell, for per-node
/// departure rate `mu`.
pub(crate) fn fraction_at_least(h: u32, m: u32, mu: f64, delta: f64) -> f64 {
    if h == 0 {
        return 1.0;
    }
    if h > m {
        return 0.0;
    }
    let s: f64 = (h..=m)
        .map(|i| one_minus_exp_over(f64::from(i) * mu * delta) * partial_fraction_weight(i, h, m))
        .sum();
    s.clamp(0.0, 1.0)
}

/// Probability that a request can be served entirely over D2D links.
pub fn p_d2d(params: &NetworkParams, code: &CodeSpec, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::param("delta", format!("must be > 0, got {delta}")));
    }
    Ok(fraction_at_least(code.h, code.m, params.departure_rate, delta))
}

/// Download cost rate split as `(bs, d2d)` given an explicit departure rate.
pub(crate) fn conventional_download(params: &NetworkParams, code: &CodeSpec, mu: f64, delta: f64) -> (f64, f64) {
    let p = fraction_at_least(code.h, code.m, mu, delta);
    let rate = params.aggregate_request_rate();
    let d2d = rate * params.rho_d2d * f64::from(code.h) * frac_f64(code.alpha_frac) * p;
    let bs = rate * params.rho_bs * (1.0 - p);
    (bs, d2d)
}

/// Download cost of the conventional scheme.
pub fn download_cost(q: &CostQuery) -> Result<f64> {
    q.require_positive_delta()?;
    let (bs, d2d) = conventional_download(&q.params, &q.code, q.params.departure_rate, q.delta);
    Ok(bs + d2d)
}

/// Cost rate in the instantaneous-repair limit: every repair and every
/// download is served by the storage nodes.
pub fn limit_cost_zero(params: &NetworkParams, code: &CodeSpec) -> f64 {
    let b = limit_breakdown(params, code, 1.0);
    b.total
}

/// Δ → 0 limit. `single_loss_share` scales the repair rate; it is `1` without
/// an incoming process.
pub(crate) fn limit_breakdown(params: &NetworkParams, code: &CodeSpec, single_loss_share: f64) -> CostBreakdown {
    let repairs_per_bit = f64::from(code.m) * params.departure_rate * single_loss_share / params.file_bits;
    let (repair_bs, repair_d2d) = if bs_repair_dominates(params, code) {
        (params.rho_bs * code.gamma_bs() * repairs_per_bit, 0.0)
    } else {
        (0.0, params.rho_d2d * code.gamma_d2d() * repairs_per_bit)
    };
    let download_d2d =
        params.aggregate_request_rate() * params.rho_d2d * f64::from(code.h) * frac_f64(code.alpha_frac);
    CostBreakdown::new(repair_bs, repair_d2d, 0.0, download_d2d, params)
}

/// Largest number of surviving helpers for which a partial D2D transfer is
/// *not* cheaper than going to the base station, capped at `locality - 1`.
///
/// `whole_over_part` is the ratio of the BS transfer to the per-helper D2D
/// transfer (`γ_BS/β` for repairs, `F/α` for downloads). Returns `None` when
/// the base station is no more expensive than D2D, in which case a partial
/// transfer never pays off.
pub(crate) fn partial_threshold(params: &NetworkParams, locality: u32, whole_over_part: f64) -> Option<i64> {
    if params.rho_bs <= params.rho_d2d {
        return None;
    }
    let c = params.rho_bs / (params.rho_bs - params.rho_d2d) * (f64::from(locality) - whole_over_part);
    // `c` is rounded against the tolerance of the float products so that exact
    // integer thresholds stay on the BS side of the strict inequality.
    let c_floor = (c + 1e-9).floor() as i64;
    Some(c_floor.min(i64::from(locality) - 1))
}

pub(crate) fn hybrid_epoch(params: &NetworkParams, code: &CodeSpec, p: f64) -> EpochCost {
    let Some(a) = partial_threshold(params, code.r, frac_f64(code.alpha_frac / code.beta_frac)) else {
        return conventional_epoch(params, code, p);
    };
    let beta = code.beta();
    let per_bs = params.rho_bs * code.gamma_bs();
    let per_d2d = params.rho_d2d * code.gamma_d2d();
    let mut out = EpochCost::default();
    for i in 0..code.m {
        let lost = f64::from(code.m - i) * binom(i, code.m, p);
        if i >= code.r {
            out.d2d += per_d2d * lost;
        } else if i64::from(i) > a {
            out.bs += params.rho_bs * f64::from(code.r - i) * beta * lost;
            out.d2d += params.rho_d2d * f64::from(i) * beta * lost;
        } else {
            out.bs += per_bs * lost;
        }
    }
    out
}

/// Repair cost of the hybrid scheme: when fewer than `r` helpers survive,
/// the missing `(r − i)β` bits come from the base station whenever that is
/// cheaper than a full BS repair.
///
/// LRCs transfer whole node contents (`β = α`), for which a partial repair is
/// never cheaper, so they fall back to [`lrc_repair_cost`].
pub fn hybrid_repair_cost(q: &CostQuery) -> Result<f64> {
    q.require_positive_delta()?;
    if q.code.family == CodeFamily::Lrc {
        return lrc_repair_cost(q);
    }
    let (bs, d2d) = hybrid_epoch(&q.params, &q.code, q.survival()).rate(&q.params, q.delta);
    Ok(bs + d2d)
}

/// Probability mass of the number of storage nodes present when a request
/// arrives, as used by the hybrid download: `(p_BS, [c_1..c_{h-1}], p_D2D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityPartition {
    pub p_bs: f64,
    /// `partial[i-1]` is the probability that exactly `i` nodes are present.
    pub partial: Vec<f64>,
    pub p_d2d: f64,
}

impl AvailabilityPartition {
    pub fn total(&self) -> f64 {
        self.p_bs + self.partial.iter().sum::<f64>() + self.p_d2d
    }
}

pub(crate) fn availability_partition(h: u32, m: u32, mu: f64, delta: f64) -> AvailabilityPartition {
    let at_least: Vec<f64> = (1..=h).map(|j| fraction_at_least(j, m, mu, delta)).collect();
    let partial = (1..h as usize).map(|i| at_least[i - 1] - at_least[i]).collect();
    AvailabilityPartition {
        p_bs: 1.0 - at_least[0],
        partial,
        p_d2d: at_least[h as usize - 1],
    }
}

/// Partition of request outcomes for `code` at repair interval `delta`.
pub fn availability(params: &NetworkParams, code: &CodeSpec, delta: f64) -> Result<AvailabilityPartition> {
    if !(delta > 0.0) {
        return Err(Error::param("delta", format!("must be > 0, got {delta}")));
    }
    Ok(availability_partition(code.h, code.m, params.departure_rate, delta))
}

pub(crate) fn hybrid_download(params: &NetworkParams, code: &CodeSpec, mu: f64, delta: f64) -> (f64, f64) {
    let Some(a) = partial_threshold(params, code.h, 1.0 / frac_f64(code.alpha_frac)) else {
        return conventional_download(params, code, mu, delta);
    };
    let part = availability_partition(code.h, code.m, mu, delta);
    let rate = params.aggregate_request_rate();
    let alpha = frac_f64(code.alpha_frac);
    let mut bs = params.rho_bs * part.p_bs;
    let mut d2d = params.rho_d2d * f64::from(code.h) * alpha * part.p_d2d;
    for (idx, &c) in part.partial.iter().enumerate() {
        let i = idx as u32 + 1;
        if i64::from(i) > a {
            bs += params.rho_bs * f64::from(code.h - i) * alpha * c;
            d2d += params.rho_d2d * f64::from(i) * alpha * c;
        } else {
            bs += params.rho_bs * c;
        }
    }
    (rate * bs, rate * d2d)
}

/// Download cost of the hybrid scheme: with `a < i < h` nodes present the
/// request fetches `iα` bits over D2D and the rest from the base station.
pub fn hybrid_download_cost(q: &CostQuery) -> Result<f64> {
    q.require_positive_delta()?;
    let (bs, d2d) = hybrid_download(&q.params, &q.code, q.params.departure_rate, q.delta);
    Ok(bs + d2d)
}

/// Expected numbers of local, global and base-station repairs per epoch for an
/// LRC whose nodes each survive with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrcRepairCounts {
    pub local: f64,
    pub global: f64,
    pub bs: f64,
}

/// Enumerates every way of distributing the `G` repair groups over
/// departure counts `0..=r+1`.
fn for_each_composition(groups: u32, bins: usize, f: &mut impl FnMut(&[u32])) {
    fn rec(slot: usize, left: u32, x: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
        if slot + 1 == x.len() {
            x[slot] = left;
            f(x);
            return;
        }
        for v in 0..=left {
            x[slot] = v;
            rec(slot + 1, left - v, x, f);
        }
    }
    let mut x = vec![0; bins];
    rec(0, groups, &mut x, f);
}

pub(crate) fn lrc_counts(code: &CodeSpec, p: f64) -> LrcRepairCounts {
    let r = code.r;
    let g = code.groups;
    let group = r + 1;
    // y[i]: probability that exactly i nodes of one group departed
    let y: Vec<f64> = (0..=group).map(|i| binom(group - i, group, p)).collect();
    let tolerable = code.m - code.h;
    let mut global = 0.0;
    for_each_composition(g, group as usize + 1, &mut |x| {
        let departed: u32 = x.iter().enumerate().map(|(i, &c)| i as u32 * c).sum();
        if departed > tolerable {
            return;
        }
        let multi: u32 = x.iter().enumerate().skip(2).map(|(i, &c)| i as u32 * c).sum();
        if multi == 0 {
            return;
        }
        let mut prob = 1.0;
        let mut left = g;
        for (i, &c) in x.iter().enumerate() {
            prob *= choose(left, c) * y[i].powi(c as i32);
            left -= c;
        }
        global += prob * f64::from(multi);
    });
    let m = f64::from(code.m);
    let lost = m * (1.0 - p);
    let local = m * p.powi(r as i32) * (1.0 - p);
    LrcRepairCounts {
        local,
        global,
        bs: (lost - local - global).max(0.0),
    }
}

pub(crate) fn lrc_epoch(params: &NetworkParams, code: &CodeSpec, p: f64) -> EpochCost {
    let counts = lrc_counts(code, p);
    EpochCost {
        bs: params.rho_bs * code.gamma_bs() * counts.bs,
        d2d: params.rho_d2d * (code.gamma_d2d() * counts.local + f64::from(code.h) * code.alpha() * counts.global),
    }
}

/// Repair cost of an LRC: single departures within a group are repaired
/// locally, larger losses globally from any `h` nodes while at least `h`
/// survive, and from the base station otherwise.
pub fn lrc_repair_cost(q: &CostQuery) -> Result<f64> {
    if q.code.family != CodeFamily::Lrc {
        return Err(Error::WrongFamily {
            op: "lrc_repair_cost",
            family: q.code.family,
            instead: "repair_cost",
        });
    }
    q.require_positive_delta()?;
    let (bs, d2d) = lrc_epoch(&q.params, &q.code, q.survival()).rate(&q.params, q.delta);
    Ok(bs + d2d)
}

/// Expected repair cost per epoch for the scheme and family, given the
/// probability that a storage node (or class) survives the interval.
pub(crate) fn epoch_cost(params: &NetworkParams, code: &CodeSpec, scheme: Scheme, p: f64, lost: f64) -> EpochCost {
    if bs_repair_dominates(params, code) {
        return bs_only_epoch(params, code, p, lost);
    }
    match (code.family, scheme) {
        (CodeFamily::Lrc, _) => lrc_epoch(params, code, p),
        (_, Scheme::Conventional) => conventional_epoch(params, code, p),
        (_, Scheme::Hybrid) => hybrid_epoch(params, code, p),
    }
}

pub(crate) fn download_split(params: &NetworkParams, code: &CodeSpec, scheme: Scheme, mu: f64, delta: f64) -> (f64, f64) {
    match scheme {
        Scheme::Conventional => conventional_download(params, code, mu, delta),
        Scheme::Hybrid => hybrid_download(params, code, mu, delta),
    }
}

/// Full cost breakdown for a query, choosing the repair rule by family and
/// scheme. When the base station is cheaper than any D2D repair
/// (`ρ < γ_D2D/γ_BS`) every repair goes to the base station.
pub fn overall_cost(q: &CostQuery) -> Result<CostBreakdown> {
    q.params.validate()?;
    if !q.delta.is_finite() || q.delta < 0.0 {
        return Err(Error::param("delta", format!("must be finite and >= 0, got {}", q.delta)));
    }
    if q.delta == 0.0 {
        return Ok(limit_breakdown(&q.params, &q.code, 1.0));
    }
    let p = q.survival();
    let lost = -(-q.params.departure_rate * q.delta).exp_m1();
    Ok(scheme_breakdown(&q.params, &q.code, q.scheme, p, lost, q.params.departure_rate, q.delta))
}

/// Cost breakdown for survival probability `p` (with `lost = 1 − p`) and
/// download departure rate `mu`.
///
/// The hybrid scheme only takes a partial branch where it is cheaper, so its
/// total never exceeds the conventional one; when the saving is below
/// rounding the conventional breakdown is returned.
pub(crate) fn scheme_breakdown(
    params: &NetworkParams,
    code: &CodeSpec,
    scheme: Scheme,
    p: f64,
    lost: f64,
    mu: f64,
    delta: f64,
) -> CostBreakdown {
    let single = |scheme| {
        let (repair_bs, repair_d2d) = epoch_cost(params, code, scheme, p, lost).rate(params, delta);
        let (download_bs, download_d2d) = download_split(params, code, scheme, mu, delta);
        CostBreakdown::new(repair_bs, repair_d2d, download_bs, download_d2d, params)
    };
    let conventional = single(Scheme::Conventional);
    if scheme == Scheme::Conventional {
        return conventional;
    }
    let hybrid = single(Scheme::Hybrid);
    if hybrid.total > conventional.total {
        conventional
    } else {
        hybrid
    }
}

/// Survival function of the time until fewer than `h` of `m` nodes remain,
/// obtained by integrating its hypoexponential density term by term.
pub fn hypoexp_survival(t: f64, h: u32, m: u32, mu: f64) -> f64 {
    assert!(t >= 0.0);
    (h..=m)
        .map(|i| partial_fraction_weight(i, h, m) * (-f64::from(i) * mu * t).exp())
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Density of the phase `W_ℓ mod Δ` of the `ℓ`-th Poisson(ω) request within a
/// repair interval, summed until the remaining tail is below `1e-12`.
pub fn request_phase_pdf(t: f64, ell: u32, omega: f64, delta: f64) -> f64 {
    assert!(ell >= 1, "request index starts at 1");
    assert!((0.0..delta).contains(&t), "t must lie in [0, Δ)");
    let k = f64::from(ell - 1);
    let ln_norm = f64::from(ell) * omega.ln() - crate::model::ln_factorial(u64::from(ell - 1));
    let ln_term = |i: u64| {
        let x = t + i as f64 * delta;
        let ln_pow = if k == 0.0 { 0.0 } else { k * x.ln() };
        ln_norm - omega * x + ln_pow
    };
    let mut sum = 0.0;
    let mut i = 0u64;
    loop {
        let term = ln_term(i).exp();
        sum += term;
        // Successive ratios shrink once past the mode, bounding the tail
        // by a geometric series.
        let ratio = (ln_term(i + 1) - ln_term(i)).exp();
        let past_mode = t + i as f64 * delta >= k / omega;
        if past_mode && ratio < 1.0 && term * ratio / (1.0 - ratio) < 1e-12 {
            break;
        }
        i += 1;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_code;

    fn reference() -> NetworkParams {
        NetworkParams::reference(0.02, 40.0)
    }

    fn mds933() -> CodeSpec {
        derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap()
    }

    #[test]
    fn weights_small_cases() {
        assert_eq!(partial_fraction_weight(1, 1, 2), 2.0);
        assert_eq!(partial_fraction_weight(2, 1, 2), -1.0);
        for m in 2..=30u32 {
            for h in 1..m {
                let s: BigRational = (h..=m).map(|i| partial_fraction_weight_exact(i, h, m)).sum();
                assert_eq!(s, BigRational::from_integer(1.into()), "h={h} m={m}");
            }
        }
    }

    #[test]
    fn replication_repair_small_delta() {
        let p = NetworkParams::new(30.0, 1.0, 0.02, 40.0, 1.0);
        let q = CostQuery::new(p, CodeSpec::replication(2, 1.0).unwrap(), Scheme::Conventional, 1e-6);
        let c = repair_cost(&q).unwrap();
        assert!((c - 2.0).abs() / 2.0 < 1e-4, "{c}");
    }

    #[test]
    fn no_departures_no_repairs() {
        let mut p = reference();
        p.departure_rate = 0.0;
        let q = CostQuery::new(p, mds933(), Scheme::Conventional, 0.7);
        assert_eq!(repair_cost(&q).unwrap(), 0.0);
        assert_eq!(repair_cost_bs_only(&q).unwrap(), 0.0);
        assert_eq!(hybrid_repair_cost(&q).unwrap(), 0.0);
        let lrc = CostQuery::new(p, derive_code(CodeFamily::Lrc, 6, 3, 2, 1.0).unwrap(), Scheme::Conventional, 0.7);
        assert_eq!(lrc_repair_cost(&lrc).unwrap(), 0.0);
    }

    #[test]
    fn lrc_routing() {
        let lrc = derive_code(CodeFamily::Lrc, 6, 3, 2, 1.0).unwrap();
        let q = CostQuery::new(reference(), lrc, Scheme::Conventional, 0.5);
        assert!(matches!(repair_cost(&q), Err(Error::WrongFamily { .. })));
        let q = CostQuery::new(reference(), mds933(), Scheme::Conventional, 0.5);
        assert!(matches!(lrc_repair_cost(&q), Err(Error::WrongFamily { .. })));
    }

    #[test]
    fn bs_only_repair() {
        let q = CostQuery::new(reference(), mds933(), Scheme::Conventional, 1.0);
        let expected = 40.0 * (1.0 / 3.0) * 9.0 * (1.0 - (-1.0f64).exp());
        assert!((repair_cost_bs_only(&q).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 75.8545).abs() < 1e-3);
        let q = q.with_delta(200.0);
        let all_lost = 40.0 * (1.0 / 3.0) * 9.0 / 200.0;
        assert!((repair_cost_bs_only(&q).unwrap() - all_lost).abs() < 1e-12);
    }

    #[test]
    fn p_d2d_two_node_replication() {
        let p = reference();
        let c = CodeSpec::replication(2, 1.0).unwrap();
        let v = p_d2d(&p, &c, 1.0).unwrap();
        // (1/Δ)∫(2e^{-t} - e^{-2t}) = 2(1-e^{-1}) - (1-e^{-2})/2
        let exact = 2.0 * (1.0 - (-1.0f64).exp()) - (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((v - exact).abs() < 1e-14);
        assert!((v - 0.8319).abs() < 1e-4);
        assert!((p_d2d(&p, &c, 1e-9).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn download_limits() {
        let p = NetworkParams::reference(0.02, 40.0);
        let q = CostQuery::new(p, mds933(), Scheme::Conventional, 1e-7);
        assert!((download_cost(&q).unwrap() - 0.6).abs() < 1e-5);
        let far = q.with_delta(1e4);
        assert!((download_cost(&far).unwrap() - 30.0 * 0.02 * 40.0).abs() < 1e-2);
        // ρ = hα/F makes the download cost flat
        let flat = NetworkParams::new(30.0, 1.0, 0.02, 1.0, 1.0);
        for d in [0.1, 1.0, 5.0] {
            let q = CostQuery::new(flat, mds933(), Scheme::Conventional, d);
            assert!((download_cost(&q).unwrap() - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn limits_at_zero() {
        let p = reference();
        let rep = CodeSpec::replication(2, 1.0).unwrap();
        let q = CostQuery::new(p, rep, Scheme::Conventional, 0.0);
        assert_eq!(overall_cost(&q).unwrap().total, 2.6);
        assert_eq!(limit_cost_zero(&p, &rep), 1.0 * (2.0 * 1.0 + 30.0 * 0.02));
        assert!((limit_cost_zero(&p, &mds933()) - 9.6).abs() < 1e-12);
    }

    #[test]
    fn hybrid_mds_is_conventional() {
        for d in [0.1, 0.5, 2.0] {
            let q = CostQuery::new(NetworkParams::reference(0.1, 10.0), mds933(), Scheme::Hybrid, d);
            let conv = repair_cost(&q).unwrap();
            assert!((hybrid_repair_cost(&q).unwrap() - conv).abs() < 1e-12);
        }
    }

    #[test]
    fn hybrid_equal_costs_collapse() {
        let p = NetworkParams::new(30.0, 1.0, 0.1, 1.0, 1.0);
        let msr = derive_code(CodeFamily::Msr, 9, 3, 8, 1.0).unwrap();
        let q = CostQuery::new(p, msr, Scheme::Hybrid, 0.5);
        assert_eq!(hybrid_repair_cost(&q).unwrap(), repair_cost(&q).unwrap());
        assert_eq!(hybrid_download_cost(&q).unwrap(), download_cost(&q).unwrap());
    }

    #[test]
    fn hybrid_download_h1_is_conventional() {
        let p = NetworkParams::reference(0.1, 10.0);
        let mbr = derive_code(CodeFamily::Mbr, 4, 1, 3, 1.0).unwrap();
        let q = CostQuery::new(p, mbr, Scheme::Hybrid, 0.8);
        assert!((hybrid_download_cost(&q).unwrap() - download_cost(&q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn partition_sums_to_one() {
        let p = NetworkParams::reference(0.1, 10.0);
        for (m, h) in [(9, 3), (10, 9), (6, 5), (2, 1)] {
            let c = derive_code(CodeFamily::Mds, m, h, h, 1.0).unwrap();
            for d in [0.01, 0.5, 3.0, 40.0] {
                let part = availability(&p, &c, d).unwrap();
                assert!((part.total() - 1.0).abs() < 1e-10);
                assert!(part.partial.iter().all(|&c| c >= -1e-12));
            }
        }
    }

    #[test]
    fn lrc_small_delta_limit() {
        let p = NetworkParams::reference(0.02, 20.0);
        let lrc = derive_code(CodeFamily::Lrc, 6, 3, 2, 1.0).unwrap();
        let q = CostQuery::new(p, lrc, Scheme::Conventional, 1e-6);
        let expected = lrc.gamma_d2d() * 6.0;
        assert!((lrc_repair_cost(&q).unwrap() - expected).abs() / expected < 1e-4);
    }

    #[test]
    fn lrc_counts_conserve_losses() {
        let lrc = derive_code(CodeFamily::Lrc, 9, 5, 2, 1.0).unwrap();
        for p in [0.1, 0.5, 0.9, 0.999] {
            let c = lrc_counts(&lrc, p);
            assert!(c.bs >= 0.0 && c.global >= 0.0);
            assert!((c.local + c.global + c.bs - 9.0 * (1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn survival_closed_form() {
        for t in [0.0f64, 0.3, 1.0, 4.0] {
            let exact = 2.0 * (-t).exp() - (-2.0 * t).exp();
            assert!((hypoexp_survival(t, 1, 2, 1.0) - exact).abs() < 1e-15);
        }
        assert_eq!(hypoexp_survival(0.0, 3, 9, 1.0), 1.0);
        assert!(hypoexp_survival(60.0, 3, 9, 1.0) < 1e-20);
    }

    #[test]
    fn request_phase_first_request() {
        let (omega, delta) = (0.7f64, 2.0f64);
        for t in [0.0, 0.5, 1.9] {
            let exact = omega * (-omega * t).exp() / (1.0 - (-omega * delta).exp());
            assert!((request_phase_pdf(t, 1, omega, delta) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn request_phase_becomes_uniform() {
        let delta = 1.0;
        for t in [0.0, 0.25, 0.5, 0.99] {
            let v = request_phase_pdf(t, 200, 1.0, delta);
            assert!((v - 1.0 / delta).abs() < 1e-6, "t={t}: {v}");
        }
    }

    #[test]
    fn delta_validation() {
        let q = CostQuery::new(reference(), mds933(), Scheme::Conventional, 0.0);
        assert!(repair_cost(&q).is_err());
        assert!(download_cost(&q).is_err());
        assert!(overall_cost(&q.with_delta(-1.0)).is_err());
    }
}
