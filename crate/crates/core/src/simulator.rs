//! Seeded discrete-event simulation of one cell.
//!
//! Storage nodes carry individual exponential lifetimes in a priority queue.
//! Nodes without content are only needed as a count: in the default request
//! model that count is sampled exactly at the repair epochs that need it
//! (the content-free pool is an M/M/∞ queue between epochs); in the
//! population-proportional model it is simulated path-wise through a single
//! aggregated exponential clock that is redrawn whenever the count changes.
//! Both are exact because lifetimes are memoryless.
//!
//! Each event category draws from its own ChaCha stream, so the trajectory of
//! one category does not shift when another consumes more or fewer numbers.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::analytic::bs_repair_dominates;
use crate::error::{Error, Result};
use crate::model::{CodeFamily, CodeSpec, CostBreakdown, NetworkParams, Scheme};

pub const MIN_BATCHES: usize = 30;
pub const DEFAULT_BATCHES: usize = 100;
pub const WARMUP_INTERVALS: u32 = 10;

/// Relative margin below which a partial transfer is treated as a tie and
/// left to the base station.
const TIE_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestModel {
    /// Requests arrive at the constant aggregate rate `M·ω`.
    FixedAggregate,
    /// Every node present issues requests at rate `ω`.
    PopulationProportional,
}

/// What a requester knows about the storage nodes in incoming mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Availability {
    /// Only nodes on the list broadcast at the last repair epoch are used;
    /// content-carrying arrivals become usable at the next broadcast.
    #[default]
    Listed,
    /// Every storage node currently in the cell is usable.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: NetworkParams,
    pub code: CodeSpec,
    pub scheme: Scheme,
    pub delta: f64,
    pub horizon: f64,
    pub seed: u64,
    pub request_model: RequestModel,
    /// Track storage-node classes fed by the incoming process.
    pub incoming: bool,
    #[serde(default)]
    pub availability: Availability,
    pub batches: usize,
}

impl SimConfig {
    pub fn new(params: NetworkParams, code: CodeSpec, scheme: Scheme, delta: f64, horizon: f64, seed: u64) -> Self {
        SimConfig {
            params,
            code,
            scheme,
            delta,
            horizon,
            seed,
            request_model: RequestModel::FixedAggregate,
            incoming: params.class_arrival_rate > 0.0,
            availability: Availability::Listed,
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn warmup(&self) -> f64 {
        f64::from(WARMUP_INTERVALS) * self.delta
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::SimConfig(format!("delta must be finite and > 0, got {}", self.delta)));
        }
        let min_horizon = 100.0 * self.delta.max(1.0 / self.params.departure_rate);
        if !(self.horizon >= min_horizon) || !self.horizon.is_finite() {
            return Err(Error::SimConfig(format!(
                "horizon {} is shorter than 100·max(Δ, 1/μ) = {min_horizon}",
                self.horizon
            )));
        }
        if self.batches < MIN_BATCHES {
            return Err(Error::SimConfig(format!(
                "{} batches requested, at least {MIN_BATCHES} are needed",
                self.batches
            )));
        }
        let batch_len = (self.horizon - self.warmup()) / self.batches as f64;
        if batch_len < self.delta {
            return Err(Error::SimConfig(format!(
                "horizon too short for {} batches of at least one repair interval",
                self.batches
            )));
        }
        if self.incoming && self.params.class_arrival_rate * f64::from(self.code.m) > self.params.expected_nodes * self.params.arrival_rate {
            return Err(Error::SimConfig("m·λ_c exceeds the total arrival rate M·λ".into()));
        }
        Ok(())
    }
}

/// Standard errors of the cost components from batch means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostStderr {
    pub repair_bs: f64,
    pub repair_d2d: f64,
    pub download_bs: f64,
    pub download_d2d: f64,
    pub repair: f64,
    pub download: f64,
    pub total: f64,
    pub normalized: f64,
}

/// Event counts inside the accounting window. Repairs are counted per
/// restored node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounts {
    pub repairs_local: u64,
    pub repairs_global: u64,
    pub repairs_d2d: u64,
    pub repairs_partial: u64,
    pub repairs_bs: u64,
    pub downloads_d2d: u64,
    pub downloads_partial: u64,
    pub downloads_bs: u64,
    pub epochs: u64,
    pub skipped_repairs: u64,
}

impl EventCounts {
    pub fn repairs(&self) -> u64 {
        self.repairs_local + self.repairs_global + self.repairs_d2d + self.repairs_partial + self.repairs_bs
    }

    pub fn downloads(&self) -> u64 {
        self.downloads_d2d + self.downloads_partial + self.downloads_bs
    }

    fn add_repair(&mut self, o: &RepairOutcome) {
        self.repairs_local += o.local;
        self.repairs_global += o.global;
        self.repairs_d2d += o.d2d;
        self.repairs_partial += o.partial;
        self.repairs_bs += o.bs;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub cost: CostBreakdown,
    pub stderr: CostStderr,
    pub event_counts: EventCounts,
    pub skipped_repairs: u64,
    /// Share of requests served entirely over D2D.
    pub d2d_download_fraction: f64,
    pub d2d_download_fraction_stderr: f64,
    /// Time-averaged number of nodes in the cell over the whole horizon.
    pub mean_population: f64,
}

/// Costs (in c.u.) and node counts of the repairs at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RepairOutcome {
    pub bs_cost: f64,
    pub d2d_cost: f64,
    pub local: u64,
    pub global: u64,
    pub d2d: u64,
    pub partial: u64,
    pub bs: u64,
}

fn strictly_cheaper(candidate: f64, reference: f64) -> bool {
    candidate < reference * (1.0 - TIE_MARGIN)
}

/// Per-event costs of a code, resolved to floats once per run.
#[derive(Debug, Clone, Copy)]
struct Tariff {
    family: CodeFamily,
    m: u32,
    h: u32,
    r: u32,
    rho_bs: f64,
    rho_d2d: f64,
    alpha: f64,
    beta: f64,
    file_bits: f64,
    bs_repair: f64,
    d2d_repair: f64,
    global_repair: f64,
    bs_dominates: bool,
}

impl Tariff {
    fn new(params: &NetworkParams, code: &CodeSpec) -> Self {
        Tariff {
            family: code.family,
            m: code.m,
            h: code.h,
            r: code.r,
            rho_bs: params.rho_bs,
            rho_d2d: params.rho_d2d,
            alpha: code.alpha(),
            beta: code.beta(),
            file_bits: code.file_bits,
            bs_repair: params.rho_bs * code.gamma_bs(),
            d2d_repair: params.rho_d2d * code.gamma_d2d(),
            global_repair: params.rho_d2d * f64::from(code.h) * code.alpha(),
            bs_dominates: bs_repair_dominates(params, code),
        }
    }

    fn repair(&self, scheme: Scheme, present: &[bool]) -> RepairOutcome {
        assert_eq!(present.len(), self.m as usize, "one flag per storage class");
        let survivors = present.iter().filter(|&&p| p).count() as u32;
        let lost = u64::from(self.m - survivors);
        let mut out = RepairOutcome::default();
        if lost == 0 {
            return out;
        }
        if self.bs_dominates {
            out.bs = lost;
            out.bs_cost = self.bs_repair * lost as f64;
            return out;
        }
        if self.family == CodeFamily::Lrc {
            let global_ok = survivors >= self.h;
            for group in present.chunks(self.r as usize + 1) {
                let missing = group.iter().filter(|&&p| !p).count() as u64;
                match missing {
                    0 => {}
                    1 => {
                        out.local += 1;
                        out.d2d_cost += self.d2d_repair;
                    }
                    _ if global_ok => {
                        out.global += missing;
                        out.d2d_cost += self.global_repair * missing as f64;
                    }
                    // With β = α a partial repair is never cheaper than the BS.
                    _ => {
                        out.bs += missing;
                        out.bs_cost += self.bs_repair * missing as f64;
                    }
                }
            }
            return out;
        }
        if survivors >= self.r {
            out.d2d = lost;
            out.d2d_cost = self.d2d_repair * lost as f64;
            return out;
        }
        let part_bs = self.rho_bs * f64::from(self.r - survivors) * self.beta;
        let part_d2d = self.rho_d2d * f64::from(survivors) * self.beta;
        if scheme == Scheme::Hybrid && survivors > 0 && strictly_cheaper(part_bs + part_d2d, self.bs_repair) {
            out.partial = lost;
            out.bs_cost = part_bs * lost as f64;
            out.d2d_cost = part_d2d * lost as f64;
        } else {
            out.bs = lost;
            out.bs_cost = self.bs_repair * lost as f64;
        }
        out
    }

    fn request(&self, scheme: Scheme, available: u32) -> (f64, f64, DownloadBranch) {
        if available >= self.h {
            return (0.0, self.rho_d2d * f64::from(self.h) * self.alpha, DownloadBranch::D2d);
        }
        let whole = self.rho_bs * self.file_bits;
        if scheme == Scheme::Hybrid && available > 0 {
            let bs = self.rho_bs * f64::from(self.h - available) * self.alpha;
            let d2d = self.rho_d2d * f64::from(available) * self.alpha;
            if strictly_cheaper(bs + d2d, whole) {
                return (bs, d2d, DownloadBranch::Partial);
            }
        }
        (whole, 0.0, DownloadBranch::Bs)
    }
}

/// Applies the repair rules to one epoch. `present[c]` tells whether storage
/// class `c` still has a node.
///
/// Order: the base station takes everything when it is cheaper than any D2D
/// repair; LRC groups with a single loss repair locally, other losses go
/// global while at least `h` nodes survive; other codes repair over D2D while
/// at least `r` survive, then try a strictly cheaper partial repair (hybrid
/// only), then fall back to the base station.
pub fn repair_epoch(params: &NetworkParams, code: &CodeSpec, scheme: Scheme, present: &[bool]) -> RepairOutcome {
    Tariff::new(params, code).repair(scheme, present)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownloadBranch {
    D2d,
    Partial,
    Bs,
}

/// Cost (c.u., split BS/D2D) and branch of a request when `available`
/// storage classes are present.
pub fn request_event(params: &NetworkParams, code: &CodeSpec, scheme: Scheme, available: u32) -> (f64, f64, DownloadBranch) {
    Tariff::new(params, code).request(scheme, available)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct At(f64);

impl Eq for At {}

impl PartialOrd for At {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for At {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

mod stream {
    pub const LIFETIME: u64 = 1;
    pub const REQUEST: u64 = 2;
    pub const FREE_POOL: u64 = 3;
    pub const CLASS_ARRIVAL: u64 = 4;
    pub const INITIAL: u64 = 5;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn exp(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Inversion on the lighter tail for small `n·min(p, 1−p)`, BTPE otherwise.
fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let flip = p > 0.5;
    let q = if flip { 1.0 - p } else { p };
    if n as f64 * q > 20.0 {
        return Binomial::new(n, p).expect("valid binomial").sample(rng);
    }
    let u: f64 = rng.random();
    let odds = q / (1.0 - q);
    let mut k = 0u64;
    let mut pmf = (1.0 - q).powi(n as i32);
    let mut cdf = pmf;
    while u > cdf && k < n {
        pmf *= (n - k) as f64 / (k + 1) as f64 * odds;
        k += 1;
        cdf += pmf;
    }
    if flip {
        n - k
    } else {
        k
    }
}

/// Sequential inversion for small means.
fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 30.0 {
        return Poisson::new(mean).expect("valid poisson").sample(rng) as u64;
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while u > cdf && pmf > 0.0 {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

#[derive(Debug, Clone, Copy, Default)]
struct Batch {
    repair_bs: f64,
    repair_d2d: f64,
    download_bs: f64,
    download_d2d: f64,
    requests: u64,
    d2d_requests: u64,
}

struct Engine {
    cfg: SimConfig,
    tariff: Tariff,
    class_count: Vec<u32>,
    present: Vec<bool>,
    nonempty: u32,
    /// Per-class nodes on the last broadcast list that are still present.
    listed_count: Vec<u32>,
    listed_nonempty: u32,
    /// Present storage nodes that arrived after the last broadcast.
    unlisted: u64,
    broadcasts: u64,
    stored: u64,
    /// (departure time, class, broadcasts seen at arrival)
    lifetimes: BinaryHeap<Reverse<(At, u32, u64)>>,
    free: u64,
    /// Time at which `free` was last known exactly (lazy mode).
    free_known_at: f64,
    free_arrival_rate: f64,
    t: f64,
    population_area: f64,
    rng_life: ChaCha8Rng,
    rng_req: ChaCha8Rng,
    rng_free: ChaCha8Rng,
    rng_class: ChaCha8Rng,
    warmup: f64,
    batch_len: f64,
    batches: Vec<Batch>,
    counts: EventCounts,
}

impl Engine {
    fn new(cfg: SimConfig) -> Self {
        let m = cfg.code.m;
        let p = &cfg.params;
        let class_rate = if cfg.incoming { p.class_arrival_rate } else { 0.0 };
        let free_arrival_rate = p.expected_nodes * p.arrival_rate - f64::from(m) * class_rate;
        let mut rng_init = rng_for(cfg.seed, stream::INITIAL);
        let mean_pop = p.expected_nodes * p.arrival_rate / p.departure_rate;
        let initial = Poisson::new(mean_pop).map(|d| d.sample(&mut rng_init) as u64).unwrap_or(0);
        let warmup = cfg.warmup();
        let mut e = Engine {
            cfg,
            tariff: Tariff::new(&cfg.params, &cfg.code),
            class_count: vec![1; m as usize],
            present: vec![true; m as usize],
            nonempty: m,
            listed_count: vec![1; m as usize],
            listed_nonempty: m,
            unlisted: 0,
            broadcasts: 0,
            stored: u64::from(m),
            lifetimes: BinaryHeap::with_capacity(4 * m as usize),
            free: initial.saturating_sub(u64::from(m)),
            free_known_at: 0.0,
            free_arrival_rate,
            t: 0.0,
            population_area: 0.0,
            rng_life: rng_for(cfg.seed, stream::LIFETIME),
            rng_req: rng_for(cfg.seed, stream::REQUEST),
            rng_free: rng_for(cfg.seed, stream::FREE_POOL),
            rng_class: rng_for(cfg.seed, stream::CLASS_ARRIVAL),
            warmup,
            batch_len: (cfg.horizon - warmup) / cfg.batches as f64,
            batches: vec![Batch::default(); cfg.batches],
            counts: EventCounts::default(),
        };
        for c in 0..m {
            e.spawn(c);
        }
        e.broadcasts = 1;
        e
    }

    fn spawn(&mut self, class: u32) {
        let life = exp(&mut self.rng_life, self.cfg.params.departure_rate);
        self.lifetimes.push(Reverse((At(self.t + life), class, self.broadcasts)));
    }

    /// The base station refreshes the storage-node list after each epoch.
    fn broadcast(&mut self) {
        if self.unlisted == 0 && self.listed_nonempty == self.nonempty {
            self.broadcasts += 1;
            return;
        }
        self.listed_count.copy_from_slice(&self.class_count);
        self.listed_nonempty = self.nonempty;
        self.unlisted = 0;
        self.broadcasts += 1;
    }

    fn usable_classes(&self) -> u32 {
        match self.cfg.availability {
            Availability::Listed => self.listed_nonempty,
            Availability::Oracle => self.nonempty,
        }
    }

    fn batch(&mut self, t: f64) -> Option<&mut Batch> {
        if t < self.warmup {
            return None;
        }
        let idx = (((t - self.warmup) / self.batch_len) as usize).min(self.cfg.batches - 1);
        Some(&mut self.batches[idx])
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.warmup
    }

    /// Advances the clock, accumulating the stored-node area. In path mode the
    /// free pool area is added too.
    fn advance(&mut self, t: f64, path_mode: bool) {
        let dt = t - self.t;
        let mut n = self.stored as f64;
        if path_mode {
            n += self.free as f64;
        }
        self.population_area += n * dt;
        self.t = t;
    }

    /// Exact sample of the content-free pool at the current time, given its
    /// size at `free_known_at`; adds the conditional expected area.
    fn refresh_free(&mut self) {
        let tau = self.t - self.free_known_at;
        if tau <= 0.0 {
            return;
        }
        let mu = self.cfg.params.departure_rate;
        let gone = -(-mu * tau).exp_m1();
        let stay = 1.0 - gone;
        let inflow_mean = self.free_arrival_rate * gone / mu;
        self.population_area +=
            self.free as f64 * gone / mu + self.free_arrival_rate / mu * (tau - gone / mu);
        let kept = binomial(&mut self.rng_free, self.free, stay);
        let arrived = poisson(&mut self.rng_free, inflow_mean);
        self.free = kept + arrived;
        self.free_known_at = self.t;
    }

    fn epoch(&mut self, path_mode: bool) {
        let m = self.cfg.code.m;
        let lost = m - self.nonempty;
        if lost == 0 {
            return;
        }
        if !path_mode {
            self.refresh_free();
        }
        let in_window = self.in_window(self.t);
        let population = self.free + self.stored;
        if population < u64::from(m) || self.free < u64::from(lost) {
            if in_window {
                self.counts.skipped_repairs += 1;
            }
            return;
        }
        for (flag, &c) in self.present.iter_mut().zip(&self.class_count) {
            *flag = c > 0;
        }
        let out = self.tariff.repair(self.cfg.scheme, &self.present);
        let t = self.t;
        if let Some(b) = self.batch(t) {
            b.repair_bs += out.bs_cost;
            b.repair_d2d += out.d2d_cost;
        }
        if in_window {
            self.counts.add_repair(&out);
        }
        for c in 0..m {
            if self.class_count[c as usize] == 0 {
                self.class_count[c as usize] = 1;
                self.spawn(c);
            }
        }
        self.free -= u64::from(lost);
        self.stored += u64::from(lost);
        self.nonempty = m;
    }

    fn request(&mut self) {
        let (bs, d2d, branch) = self.tariff.request(self.cfg.scheme, self.usable_classes());
        let t = self.t;
        let in_window = self.in_window(t);
        if let Some(b) = self.batch(t) {
            b.download_bs += bs;
            b.download_d2d += d2d;
            b.requests += 1;
            if branch == DownloadBranch::D2d {
                b.d2d_requests += 1;
            }
        }
        if in_window {
            match branch {
                DownloadBranch::D2d => self.counts.downloads_d2d += 1,
                DownloadBranch::Partial => self.counts.downloads_partial += 1,
                DownloadBranch::Bs => self.counts.downloads_bs += 1,
            }
        }
    }

    fn departure(&mut self, class: u32, stamp: u64) {
        let c = &mut self.class_count[class as usize];
        *c -= 1;
        if *c == 0 {
            self.nonempty -= 1;
        }
        self.stored -= 1;
        if stamp < self.broadcasts {
            let l = &mut self.listed_count[class as usize];
            *l -= 1;
            if *l == 0 {
                self.listed_nonempty -= 1;
            }
        } else {
            self.unlisted -= 1;
        }
    }

    fn class_arrival(&mut self) {
        let class = self.rng_class.random_range(0..self.cfg.code.m);
        let c = &mut self.class_count[class as usize];
        if *c == 0 {
            self.nonempty += 1;
        }
        *c += 1;
        self.stored += 1;
        self.unlisted += 1;
        self.spawn(class);
    }

    fn run(mut self) -> SimResult {
        let cfg = self.cfg;
        let p = cfg.params;
        let path_mode = cfg.request_model == RequestModel::PopulationProportional;
        let delta = cfg.delta;
        let class_rate = if cfg.incoming {
            p.class_arrival_rate * f64::from(cfg.code.m)
        } else {
            0.0
        };
        let request_rate = |e: &Engine| match cfg.request_model {
            RequestModel::FixedAggregate => p.aggregate_request_rate(),
            RequestModel::PopulationProportional => p.request_rate * (e.free + e.stored) as f64,
        };
        let free_rate = |e: &Engine| e.free_arrival_rate + e.free as f64 * p.departure_rate;

        let mut k: u64 = 1;
        let rate = request_rate(&self);
        let mut next_request = exp(&mut self.rng_req, rate);
        let mut next_class = exp(&mut self.rng_class, class_rate);
        let mut next_free = if path_mode {
            let rate = free_rate(&self);
            exp(&mut self.rng_free, rate)
        } else {
            f64::INFINITY
        };

        loop {
            let next_epoch = k as f64 * delta;
            let next_departure = self.lifetimes.peek().map_or(f64::INFINITY, |Reverse((At(t), _, _))| *t);
            // Ties: epoch, request, free-pool event, storage departure, class arrival.
            let t = next_epoch
                .min(next_request)
                .min(next_free)
                .min(next_departure)
                .min(next_class);
            if t > cfg.horizon {
                break;
            }
            let population_before = self.free + self.stored;
            self.advance(t, path_mode);
            if next_epoch == t {
                if self.nonempty == cfg.code.m && self.unlisted == 0 {
                    // Nothing to repair or list until some other event happens.
                    let other = next_request.min(next_free).min(next_departure).min(next_class);
                    let next_k = (k + 1).max((other / delta).ceil() as u64);
                    self.broadcasts += next_k - k;
                    k = next_k;
                } else {
                    self.epoch(path_mode);
                    self.broadcast();
                    k += 1;
                    if path_mode {
                        let rate = free_rate(&self);
                        next_free = t + exp(&mut self.rng_free, rate);
                    }
                }
            } else if next_request == t {
                self.request();
                let rate = request_rate(&self);
                next_request = t + exp(&mut self.rng_req, rate);
            } else if next_free == t {
                let rate = free_rate(&self);
                let arrival = self.rng_free.random::<f64>() * rate < self.free_arrival_rate;
                if arrival {
                    self.free += 1;
                } else {
                    self.free -= 1;
                }
                let rate = free_rate(&self);
                        next_free = t + exp(&mut self.rng_free, rate);
            } else if next_departure == t {
                let Reverse((_, class, stamp)) = self.lifetimes.pop().expect("peeked");
                self.departure(class, stamp);
            } else {
                self.class_arrival();
                next_class = t + exp(&mut self.rng_class, class_rate);
            }
            if path_mode && self.free + self.stored != population_before && next_request != t {
                let rate = request_rate(&self);
                next_request = t + exp(&mut self.rng_req, rate);
            }
        }
        self.advance(cfg.horizon, path_mode);
        if !path_mode {
            self.refresh_free();
        }
        self.counts.epochs = (cfg.horizon / delta).floor() as u64 - (self.warmup / delta).floor() as u64;
        self.finish()
    }

    fn finish(self) -> SimResult {
        let cfg = self.cfg;
        let scale = cfg.params.file_bits * self.batch_len;
        let n = self.batches.len() as f64;
        let bs_only = cfg.params.bs_only_cost();
        let rows: Vec<[f64; 7]> = self
            .batches
            .iter()
            .map(|b| {
                let v = [b.repair_bs / scale, b.repair_d2d / scale, b.download_bs / scale, b.download_d2d / scale, 0.0];
                [v[0], v[1], v[2], v[3], v[0] + v[1] + v[2] + v[3], v[0] + v[1], v[2] + v[3]]
            })
            .collect();
        let mean = |j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let se = |j: usize, mu: f64| {
            let var = rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        let means: Vec<f64> = (0..7).map(mean).collect();
        let ses: Vec<f64> = (0..7).map(|j| se(j, means[j])).collect();
        let cost = CostBreakdown::new(means[0], means[1], means[2], means[3], &cfg.params);
        let stderr = CostStderr {
            repair_bs: ses[0],
            repair_d2d: ses[1],
            download_bs: ses[2],
            download_d2d: ses[3],
            repair: ses[5],
            download: ses[6],
            total: ses[4],
            normalized: ses[4] / bs_only,
        };

        let requests: u64 = self.batches.iter().map(|b| b.requests).sum();
        let d2d: u64 = self.batches.iter().map(|b| b.d2d_requests).sum();
        let (fraction, fraction_se) = if requests == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let f = d2d as f64 / requests as f64;
            let per_batch = requests as f64 / n;
            let ss: f64 = self
                .batches
                .iter()
                .map(|b| (b.d2d_requests as f64 - f * b.requests as f64).powi(2))
                .sum();
            (f, (ss / (n * (n - 1.0))).sqrt() / per_batch)
        };
        SimResult {
            config: cfg,
            cost,
            stderr,
            event_counts: self.counts,
            skipped_repairs: self.counts.skipped_repairs,
            d2d_download_fraction: fraction,
            d2d_download_fraction_stderr: fraction_se,
            mean_population: self.population_area / cfg.horizon,
        }
    }
}

/// Runs one seeded simulation.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    Ok(Engine::new(*config).run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{overall_cost, CostQuery};
    use crate::model::derive_code;

    fn mds933() -> CodeSpec {
        derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap()
    }

    #[test]
    fn full_survival_costs_nothing() {
        let p = NetworkParams::reference(0.02, 40.0);
        let out = repair_epoch(&p, &mds933(), Scheme::Hybrid, &[true; 9]);
        assert_eq!(out, RepairOutcome::default());
    }

    #[test]
    fn lrc_single_loss_is_local() {
        let p = NetworkParams::reference(0.02, 40.0);
        let lrc = derive_code(CodeFamily::Lrc, 6, 3, 2, 1.0).unwrap();
        let out = repair_epoch(&p, &lrc, Scheme::Conventional, &[true, false, true, true, true, true]);
        assert_eq!(out.local, 1);
        assert!((out.d2d_cost - lrc.gamma_d2d()).abs() < 1e-15);
        assert_eq!(out.bs_cost, 0.0);
        // Two losses in one group with enough survivors go global.
        let out = repair_epoch(&p, &lrc, Scheme::Conventional, &[false, false, true, true, true, true]);
        assert_eq!(out.global, 2);
        // Too few survivors: the multi-loss group goes to the BS, the single loss stays local.
        let out = repair_epoch(&p, &lrc, Scheme::Hybrid, &[true, false, true, false, false, false]);
        assert_eq!((out.local, out.global, out.bs), (1, 0, 3));
    }

    #[test]
    fn below_locality_goes_to_bs() {
        let p = NetworkParams::reference(0.02, 40.0);
        let code = mds933();
        let mut present = [false; 9];
        present[0] = true;
        present[1] = true;
        let out = repair_epoch(&p, &code, Scheme::Conventional, &present);
        assert_eq!(out.bs, 7);
        assert!((out.bs_cost - 7.0 * 40.0 * code.gamma_bs()).abs() < 1e-12);
    }

    #[test]
    fn hybrid_partial_repair_for_msr() {
        let p = NetworkParams::reference(0.1, 10.0);
        let msr = derive_code(CodeFamily::Msr, 9, 3, 8, 1.0).unwrap();
        let mut present = [false; 9];
        for slot in present.iter_mut().take(6) {
            *slot = true;
        }
        let out = repair_epoch(&p, &msr, Scheme::Hybrid, &present);
        assert_eq!(out.partial, 3);
        let beta = msr.beta();
        assert!((out.bs_cost - 3.0 * 10.0 * 2.0 * beta).abs() < 1e-12);
        assert!((out.d2d_cost - 3.0 * 6.0 * beta).abs() < 1e-12);
    }

    #[test]
    fn request_branches() {
        let p = NetworkParams::reference(0.02, 40.0);
        let code = mds933();
        let (bs, d2d, b) = request_event(&p, &code, Scheme::Conventional, 9);
        assert_eq!((bs, b), (0.0, DownloadBranch::D2d));
        assert!((d2d - 1.0).abs() < 1e-15);
        assert_eq!(request_event(&p, &code, Scheme::Hybrid, 0), (40.0, 0.0, DownloadBranch::Bs));
        let (bs, d2d, b) = request_event(&p, &code, Scheme::Hybrid, 2);
        assert_eq!(b, DownloadBranch::Partial);
        assert!((bs + d2d - (40.0 + 2.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_runs() {
        let p = NetworkParams::reference(0.02, 40.0);
        let mut cfg = SimConfig::new(p, mds933(), Scheme::Conventional, 0.5, 10.0, 1);
        assert!(matches!(run(&cfg), Err(Error::SimConfig(_))));
        cfg.horizon = 1e4;
        cfg.batches = 10;
        assert!(matches!(run(&cfg), Err(Error::SimConfig(_))));
    }

    #[test]
    fn deterministic_and_matches_analytic() {
        let p = NetworkParams::reference(0.02, 40.0);
        let cfg = SimConfig::new(p, mds933(), Scheme::Conventional, 0.5, 2e4, 7);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        let exact = overall_cost(&CostQuery::new(p, mds933(), Scheme::Conventional, 0.5)).unwrap();
        let z = (a.cost.total - exact.total) / a.stderr.total;
        assert!(z.abs() < 4.0, "z = {z}");
        assert_eq!(a.event_counts.downloads(), a.event_counts.downloads_d2d + a.event_counts.downloads_bs);
    }

    #[test]
    fn zero_request_rate_has_no_download_cost() {
        let p = NetworkParams::reference(0.0, 40.0);
        let r = run(&SimConfig::new(p, mds933(), Scheme::Hybrid, 1.0, 1e3, 3)).unwrap();
        assert_eq!(r.cost.download_bs, 0.0);
        assert_eq!(r.cost.download_d2d, 0.0);
        assert!(r.cost.repair() > 0.0);
    }

    #[test]
    fn population_modes_keep_the_mean() {
        let p = NetworkParams::reference(0.02, 40.0);
        for model in [RequestModel::FixedAggregate, RequestModel::PopulationProportional] {
            let mut cfg = SimConfig::new(p, mds933(), Scheme::Conventional, 1.0, 2e4, 11);
            cfg.request_model = model;
            let r = run(&cfg).unwrap();
            assert!((r.mean_population - 30.0).abs() < 0.6, "{model:?}: {}", r.mean_population);
        }
    }
}
