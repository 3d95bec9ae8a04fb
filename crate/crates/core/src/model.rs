//! Shared domain types: network parameters, storage codes and cost
//! breakdowns, plus the two probability mass functions every cost
//! expression is built from.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a single cell.
///
/// Rates are in 1/t.u., costs in c.u./bit and the file size in bits.
/// `list_period` is carried for completeness only; the models assume it equals
/// the repair interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Expected number of nodes in the cell (`M`).
    pub expected_nodes: f64,
    /// Per-capita arrival-rate factor (`λ`); total arrival rate is `M·λ`.
    pub arrival_rate: f64,
    /// Per-node departure rate (`μ`).
    pub departure_rate: f64,
    /// Per-node request rate (`ω`).
    pub request_rate: f64,
    /// Arrival rate of content-carrying nodes per storage class (`λ_c`).
    pub class_arrival_rate: f64,
    pub rho_bs: f64,
    pub rho_d2d: f64,
    pub file_bits: f64,
    pub list_period: Option<f64>,
}

impl NetworkParams {
    /// Balanced cell (`λ = μ`) with a one-bit file and no incoming process.
    pub fn new(expected_nodes: f64, departure_rate: f64, request_rate: f64, rho_bs: f64, rho_d2d: f64) -> Self {
        NetworkParams {
            expected_nodes,
            arrival_rate: departure_rate,
            departure_rate,
            request_rate,
            class_arrival_rate: 0.0,
            rho_bs,
            rho_d2d,
            file_bits: 1.0,
            list_period: None,
        }
    }

    /// The reference cell used throughout the experiments: `M = 30`, `μ = 1`,
    /// `ρ_D2D = 1`, with the given request rate and BS cost.
    pub fn reference(request_rate: f64, rho_bs: f64) -> Self {
        Self::new(30.0, 1.0, request_rate, rho_bs, 1.0)
    }

    pub fn with_class_arrival_rate(mut self, lambda_c: f64) -> Self {
        self.class_arrival_rate = lambda_c;
        self
    }

    pub fn with_file_bits(mut self, bits: f64) -> Self {
        self.file_bits = bits;
        self
    }

    /// `ρ = ρ_BS / ρ_D2D`.
    pub fn rho(&self) -> f64 {
        self.rho_bs / self.rho_d2d
    }

    /// Aggregate request rate `M·ω`.
    pub fn aggregate_request_rate(&self) -> f64 {
        self.expected_nodes * self.request_rate
    }

    /// Cost rate of serving every request from the base station, `M·ω·ρ_BS`.
    pub fn bs_only_cost(&self) -> f64 {
        self.aggregate_request_rate() * self.rho_bs
    }

    pub fn validate(&self) -> Result<()> {
        fn finite_nonneg(name: &'static str, v: f64) -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
            Ok(())
        }
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
            Ok(())
        }
        positive("expected_nodes", self.expected_nodes)?;
        finite_nonneg("arrival_rate", self.arrival_rate)?;
        positive("departure_rate", self.departure_rate)?;
        finite_nonneg("request_rate", self.request_rate)?;
        finite_nonneg("class_arrival_rate", self.class_arrival_rate)?;
        positive("rho_bs", self.rho_bs)?;
        positive("rho_d2d", self.rho_d2d)?;
        positive("file_bits", self.file_bits)?;
        if self.class_arrival_rate > self.departure_rate {
            return Err(Error::param(
                "class_arrival_rate",
                format!(
                    "must not exceed the departure rate ({} > {})",
                    self.class_arrival_rate, self.departure_rate
                ),
            ));
        }
        if let Some(phi) = self.list_period {
            finite_nonneg("list_period", phi)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeFamily {
    Replication,
    #[serde(rename = "MDS")]
    Mds,
    #[serde(rename = "MSR")]
    Msr,
    #[serde(rename = "MBR")]
    Mbr,
    #[serde(rename = "LRC")]
    Lrc,
}

impl CodeFamily {
    pub const ALL: [CodeFamily; 5] = [
        CodeFamily::Replication,
        CodeFamily::Mds,
        CodeFamily::Msr,
        CodeFamily::Mbr,
        CodeFamily::Lrc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CodeFamily::Replication => "replication",
            CodeFamily::Mds => "MDS",
            CodeFamily::Msr => "MSR",
            CodeFamily::Mbr => "MBR",
            CodeFamily::Lrc => "LRC",
        }
    }
}

impl fmt::Display for CodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "replication" | "rep" => Ok(CodeFamily::Replication),
            "mds" => Ok(CodeFamily::Mds),
            "msr" => Ok(CodeFamily::Msr),
            "mbr" => Ok(CodeFamily::Mbr),
            "lrc" => Ok(CodeFamily::Lrc),
            other => Err(Error::param("family", format!("unknown code family `{other}`"))),
        }
    }
}

/// Per-node storage and repair parameters of an `[m, h, r]` storage code.
///
/// The bandwidths are stored as exact fractions of the file size so that two
/// codes with equal parameters compare equal regardless of `F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "CodeDescriptor", try_from = "CodeDescriptor")]
pub struct CodeSpec {
    pub family: CodeFamily,
    /// Number of storage nodes.
    pub m: u32,
    /// Download locality.
    pub h: u32,
    /// Repair locality.
    pub r: u32,
    /// Code length in symbols.
    pub n: u64,
    /// Code dimension in symbols.
    pub k: u64,
    /// Disjoint repair groups (LRC only, otherwise 1).
    pub groups: u32,
    /// `α / F`.
    pub alpha_frac: Ratio<i64>,
    /// `β / F`.
    pub beta_frac: Ratio<i64>,
    pub file_bits: f64,
}

fn ratio(n: i64, d: i64) -> Ratio<i64> {
    Ratio::new(n, d)
}

impl CodeSpec {
    /// `m`-replication: every storage node holds the whole file.
    pub fn replication(m: u32, file_bits: f64) -> Result<Self> {
        derive_code(CodeFamily::Replication, m, 1, 1, file_bits)
    }

    /// Bits stored per node.
    pub fn alpha(&self) -> f64 {
        self.file_bits * frac_f64(self.alpha_frac)
    }

    /// Bits sent by each helper during a D2D repair.
    pub fn beta(&self) -> f64 {
        self.file_bits * frac_f64(self.beta_frac)
    }

    /// `γ_D2D / F = r·β / F`.
    pub fn gamma_d2d_frac(&self) -> Ratio<i64> {
        self.beta_frac * i64::from(self.r)
    }

    pub fn gamma_d2d(&self) -> f64 {
        self.file_bits * frac_f64(self.gamma_d2d_frac())
    }

    /// Repairing from the base station transfers exactly the lost node's content.
    pub fn gamma_bs(&self) -> f64 {
        self.alpha()
    }

    /// Total storage across the cell in files, `m·α / F`.
    pub fn storage_files(&self) -> Ratio<i64> {
        self.alpha_frac * i64::from(self.m)
    }

    /// Code rate `k / n`.
    pub fn rate(&self) -> Ratio<i64> {
        ratio(self.k as i64, self.n as i64)
    }

    /// Short label such as `[9,3,3] MDS` or `2-replication`.
    pub fn label(&self) -> String {
        match self.family {
            CodeFamily::Replication => format!("{}-replication", self.m),
            f => format!("[{},{},{}] {}", self.m, self.h, self.r, f),
        }
    }
}

/// Serialized form of a [`CodeSpec`]; everything else is re-derived on load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeDescriptor {
    pub family: CodeFamily,
    pub m: u32,
    pub h: u32,
    pub r: u32,
    #[serde(default = "one_bit")]
    pub file_bits: f64,
}

fn one_bit() -> f64 {
    1.0
}

impl From<CodeSpec> for CodeDescriptor {
    fn from(c: CodeSpec) -> Self {
        CodeDescriptor {
            family: c.family,
            m: c.m,
            h: c.h,
            r: c.r,
            file_bits: c.file_bits,
        }
    }
}

impl TryFrom<CodeDescriptor> for CodeSpec {
    type Error = Error;

    fn try_from(d: CodeDescriptor) -> Result<Self> {
        derive_code(d.family, d.m, d.h, d.r, d.file_bits)
    }
}

pub(crate) fn frac_f64(r: Ratio<i64>) -> f64 {
    r.to_f64().expect("ratio of i64 always converts")
}

/// Derives the storage and repair parameters of a code from its family and
/// `[m, h, r]` triple, rejecting combinations the family cannot realise.
pub fn derive_code(family: CodeFamily, m: u32, h: u32, r: u32, file_bits: f64) -> Result<CodeSpec> {
    let reject = |constraint: String| Error::CodeConstraint {
        family,
        m,
        h,
        r,
        constraint,
    };
    if !file_bits.is_finite() || file_bits <= 0.0 {
        return Err(Error::param("file_bits", format!("must be > 0, got {file_bits}")));
    }
    if m < 2 {
        return Err(reject("m >= 2".into()));
    }
    if h < 1 || h >= m {
        return Err(reject("1 <= h < m".into()));
    }
    if r < 1 || r >= m {
        return Err(reject("1 <= r < m".into()));
    }
    let (m64, h64, r64) = (i64::from(m), i64::from(h), i64::from(r));

    let spec = |family, n: i64, k: i64, groups: u32, alpha: Ratio<i64>, beta: Ratio<i64>| CodeSpec {
        family,
        m,
        h,
        r,
        n: n as u64,
        k: k as u64,
        groups,
        alpha_frac: alpha,
        beta_frac: beta,
        file_bits,
    };

    match family {
        CodeFamily::Replication | CodeFamily::Mds => {
            if h != r {
                return Err(reject("MDS codes repair and download from k nodes (r = h = k)".into()));
            }
            if family == CodeFamily::Replication && h != 1 {
                return Err(reject("replication stores the whole file (h = r = 1)".into()));
            }
            let fam = if h == 1 { CodeFamily::Replication } else { CodeFamily::Mds };
            let a = ratio(1, h64);
            Ok(spec(fam, m64, h64, 1, a, a))
        }
        CodeFamily::Msr => {
            if r < h {
                return Err(reject("r >= h".into()));
            }
            if h > 2 && r < 2 * (h - 1) {
                return Err(reject(format!(
                    "exact-repair MSR needs r >= 2(h-1) = {}",
                    2 * (h - 1)
                )));
            }
            let s = r64 - h64 + 1;
            Ok(spec(family, m64 * s, h64 * s, 1, ratio(1, h64), ratio(1, h64 * s)))
        }
        CodeFamily::Mbr => {
            if r < h {
                return Err(reject("r >= h".into()));
            }
            let denom = h64 * (2 * r64 - h64 + 1);
            let k = h64 * r64 - h64 * (h64 - 1) / 2;
            Ok(spec(family, m64 * r64, k, 1, ratio(2 * r64, denom), ratio(2, denom)))
        }
        CodeFamily::Lrc => {
            if r >= h {
                return Err(reject("r < h".into()));
            }
            if m % (r + 1) != 0 {
                return Err(reject(format!("(r+1) = {} must divide m", r + 1)));
            }
            let a = ratio(r64 + 1, h64 * r64);
            Ok(spec(family, m64 * (r64 + 1), r64 * h64, m / (r + 1), a, a))
        }
    }
}

/// Whether partial D2D transfers may complete a repair or download.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Conventional,
    Hybrid,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Conventional, Scheme::Hybrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Conventional => "conventional",
            Scheme::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" => Ok(Scheme::Conventional),
            "hybrid" => Ok(Scheme::Hybrid),
            other => Err(Error::param("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

/// Communication cost split by activity and link, in c.u./(bit·t.u.).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub repair_bs: f64,
    pub repair_d2d: f64,
    pub download_bs: f64,
    pub download_d2d: f64,
    pub total: f64,
    /// `total` relative to serving every request from the base station.
    pub normalized: f64,
}

impl CostBreakdown {
    pub fn new(repair_bs: f64, repair_d2d: f64, download_bs: f64, download_d2d: f64, params: &NetworkParams) -> Self {
        let total = repair_bs + repair_d2d + download_bs + download_d2d;
        CostBreakdown {
            repair_bs,
            repair_d2d,
            download_bs,
            download_d2d,
            total,
            normalized: total / params.bs_only_cost(),
        }
    }

    pub fn repair(&self) -> f64 {
        self.repair_bs + self.repair_d2d
    }

    pub fn download(&self) -> f64 {
        self.download_bs + self.download_d2d
    }
}

pub(crate) fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Stationary probability of `i` nodes in an M/M/∞ cell with arrival rate
/// `M·λ` and per-node departure rate `μ`.
pub fn poisson_occupancy(i: u64, expected_nodes: f64, lambda: f64, mu: f64) -> f64 {
    let mean = expected_nodes * lambda / mu;
    if mean == 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    (i as f64 * mean.ln() - mean - ln_factorial(i)).exp()
}

/// Binomial coefficient as a float; exact for the small `m` used here.
pub(crate) fn choose(m: u32, i: u32) -> f64 {
    let i = i.min(m - i);
    (0..i).fold(1.0, |acc, j| acc * f64::from(m - j) / f64::from(j + 1))
}

/// `b_i(m, p)`: probability of exactly `i` successes out of `m`.
pub fn binomial_pmf(i: u32, m: u32, p: f64) -> Result<f64> {
    if i > m {
        return Err(Error::param("i", format!("must be in 0..={m}, got {i}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("must be a probability, got {p}")));
    }
    Ok(binom(i, m, p))
}

pub(crate) fn binom(i: u32, m: u32, p: f64) -> f64 {
    choose(m, i) * p.powi(i as i32) * (1.0 - p).powi((m - i) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn mds_933() {
        let c = derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap();
        assert_eq!(c.alpha_frac, ratio(1, 3));
        assert_eq!(c.beta_frac, ratio(1, 3));
        assert_eq!(c.gamma_d2d_frac(), ratio(1, 1));
        assert_eq!((c.n, c.k, c.groups), (9, 3, 1));
    }

    #[test]
    fn msr_938() {
        let c = derive_code(CodeFamily::Msr, 9, 3, 8, 1.0).unwrap();
        assert_eq!(c.alpha_frac, ratio(1, 3));
        assert_eq!(c.beta_frac, ratio(1, 18));
        assert_eq!(c.gamma_d2d_frac(), ratio(4, 9));
        assert_eq!((c.n, c.k), (54, 18));
    }

    #[test]
    fn lrc_632() {
        let c = derive_code(CodeFamily::Lrc, 6, 3, 2, 1.0).unwrap();
        assert_eq!(c.alpha_frac, ratio(1, 2));
        assert_eq!(c.gamma_d2d_frac(), ratio(1, 1));
        assert_eq!((c.n, c.k, c.groups), (18, 6, 2));
    }

    #[test]
    fn mbr_958() {
        let c = derive_code(CodeFamily::Mbr, 9, 5, 8, 1.0).unwrap();
        assert_eq!(c.alpha_frac, ratio(4, 15));
        assert_eq!(c.beta_frac, ratio(1, 30));
        assert_eq!(c.gamma_d2d_frac(), c.alpha_frac);
        assert_eq!((c.n, c.k), (72, 30));
    }

    #[test]
    fn two_replication() {
        let c = CodeSpec::replication(2, 1.0).unwrap();
        assert_eq!(c.family, CodeFamily::Replication);
        assert_eq!((c.h, c.r, c.k), (1, 1, 1));
        assert_eq!(c.alpha(), 1.0);
        assert_eq!(c.gamma_d2d(), 1.0);
        // MDS with k = 1 is reported as replication
        let d = derive_code(CodeFamily::Mds, 4, 1, 1, 1.0).unwrap();
        assert_eq!(d.family, CodeFamily::Replication);
    }

    #[test]
    fn scaled_file() {
        let c = derive_code(CodeFamily::Msr, 9, 3, 8, 1800.0).unwrap();
        assert_eq!(c.alpha(), 600.0);
        assert_eq!(c.beta(), 100.0);
        assert_eq!(c.gamma_d2d(), 800.0);
        assert_eq!(c.gamma_bs(), 600.0);
    }

    #[test]
    fn constraint_violations_are_named() {
        let cases = [
            (CodeFamily::Msr, 9, 4, 5),  // r < 2(h-1)
            (CodeFamily::Lrc, 7, 3, 2),  // 3 does not divide 7
            (CodeFamily::Lrc, 6, 2, 2),  // r >= h
            (CodeFamily::Mds, 9, 3, 4),  // r != h
            (CodeFamily::Mbr, 9, 5, 4),  // r < h
            (CodeFamily::Mds, 1, 1, 1),  // m < 2
            (CodeFamily::Mds, 5, 5, 5),  // h == m
            (CodeFamily::Replication, 3, 2, 2),
        ];
        for (f, m, h, r) in cases {
            match derive_code(f, m, h, r, 1.0) {
                Err(Error::CodeConstraint { constraint, .. }) => assert!(!constraint.is_empty()),
                other => panic!("{f} [{m},{h},{r}] should be rejected, got {other:?}"),
            }
        }
        // r = h is allowed for MSR when h <= 2
        assert!(derive_code(CodeFamily::Msr, 5, 2, 2, 1.0).is_ok());
        assert!(derive_code(CodeFamily::Msr, 5, 1, 1, 1.0).is_ok());
    }

    #[test]
    fn occupancy() {
        assert!(close(poisson_occupancy(0, 30.0, 1.0, 1.0), (-30.0f64).exp(), 1e-12));
        assert!(close(poisson_occupancy(1, 1.0, 1.0, 1.0), (-1.0f64).exp(), 1e-12));
        let low: f64 = (0..10).map(|i| poisson_occupancy(i, 30.0, 1.0, 1.0)).sum();
        assert!(low < 7.2e-6, "{low}");
        let total: f64 = (0..200).map(|i| poisson_occupancy(i, 30.0, 1.0, 1.0)).sum();
        assert!(close(total, 1.0, 1e-12));
    }

    #[test]
    fn binomial_examples() {
        assert!(close(binomial_pmf(2, 3, 0.5).unwrap(), 0.375, 1e-15));
        assert_eq!(binomial_pmf(5, 5, 1.0).unwrap(), 1.0);
        let p = (-0.5f64).exp();
        assert!(close(binomial_pmf(0, 9, p).unwrap(), (1.0 - p).powi(9), 1e-15));
        assert!(binomial_pmf(4, 3, 0.5).is_err());
        assert!(binomial_pmf(1, 3, 1.5).is_err());
    }

    fn any_code() -> impl Strategy<Value = CodeSpec> {
        (0usize..5, 2u32..=10, 1u32..10, 1u32..10).prop_filter_map("valid code", |(f, m, h, r)| {
            derive_code(CodeFamily::ALL[f], m, h, r, 1.0).ok()
        })
    }

    proptest! {
        #[test]
        fn binomial_sums_to_one(m in 0u32..=64, p in 0.0f64..=1.0) {
            let s: f64 = (0..=m).map(|i| binomial_pmf(i, m, p).unwrap()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn code_invariants(c in any_code()) {
            // α·m·R = F exactly
            prop_assert_eq!(c.alpha_frac * i64::from(c.m) * c.rate(), Ratio::from_integer(1));
            prop_assert!(c.beta_frac <= c.alpha_frac);
            prop_assert!(c.gamma_d2d_frac() >= c.alpha_frac);
            match c.family {
                CodeFamily::Mds | CodeFamily::Replication =>
                    prop_assert_eq!(c.gamma_d2d_frac(), Ratio::from_integer(1)),
                _ => prop_assert!(c.gamma_d2d_frac() <= Ratio::from_integer(1)),
            }
            // h·α >= F
            prop_assert!(c.alpha_frac * i64::from(c.h) >= Ratio::from_integer(1));
        }

        #[test]
        fn h1_regenerating_matches_replication(m in 2u32..=10, r in 1u32..10, mbr in any::<bool>()) {
            prop_assume!(r < m);
            let fam = if mbr { CodeFamily::Mbr } else { CodeFamily::Msr };
            let c = derive_code(fam, m, 1, r, 1.0).unwrap();
            let rep = CodeSpec::replication(m, 1.0).unwrap();
            prop_assert_eq!(c.alpha_frac, rep.alpha_frac);
            prop_assert_eq!(c.gamma_d2d_frac(), rep.gamma_d2d_frac());
            prop_assert_eq!(c.h, rep.h);
        }
    }
}
