use d2dstore_core::analytic::{self, availability, download_cost, overall_cost, p_d2d};
use d2dstore_core::incoming::{self, incoming_cost, stationary, transition_matrix, ChainConfig};
use d2dstore_core::oracle::p_d2d_quadrature;
use d2dstore_core::search::{delta_max, enumerate_codes, min_cost_curve, DeltaMax, SearchSpec};
use d2dstore_core::simulator::{self, RequestModel, SimConfig};
use d2dstore_core::*;
use proptest::prelude::*;

fn any_code() -> impl Strategy<Value = CodeSpec> {
    (0usize..5, 2u32..=10, 1u32..10, 1u32..10)
        .prop_filter_map("valid code", |(f, m, h, r)| derive_code(CodeFamily::ALL[f], m, h, r, 1.0).ok())
}

fn reference_codes() -> Vec<CodeSpec> {
    vec![
        CodeSpec::replication(2, 1.0).unwrap(),
        derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap(),
        derive_code(CodeFamily::Msr, 9, 3, 8, 1.0).unwrap(),
        derive_code(CodeFamily::Mbr, 9, 5, 8, 1.0).unwrap(),
        derive_code(CodeFamily::Lrc, 6, 3, 2, 1.0).unwrap(),
    ]
}

fn sorted_deltas(raw: Vec<f64>) -> Vec<f64> {
    let mut d = raw;
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn p_d2d_is_a_probability_and_decreasing(
        code in any_code(),
        mu in 0.1f64..5.0,
        raw in prop::collection::vec(1e-3f64..20.0, 2..8),
    ) {
        let params = NetworkParams::new(30.0, mu, 0.02, 40.0, 1.0);
        let mut prev = 1.0;
        for d in sorted_deltas(raw) {
            let p = p_d2d(&params, &code, d).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p <= prev + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn p_d2d_matches_quadrature(m in 2u32..=10, h in 1u32..10, delta in 0.01f64..10.0) {
        prop_assume!(h < m);
        let code = derive_code(CodeFamily::Mds, m, h, h, 1.0)
            .or_else(|_| CodeSpec::replication(m, 1.0))
            .unwrap();
        let params = NetworkParams::reference(0.02, 40.0);
        let closed = p_d2d(&params, &code, delta).unwrap();
        prop_assert!((closed - p_d2d_quadrature(h, m, 1.0, delta)).abs() < 1e-8);
    }

    #[test]
    fn download_slope_follows_sign_rule(
        code in any_code(),
        rho in 0.5f64..60.0,
        raw in prop::collection::vec(1e-2f64..10.0, 3..6),
    ) {
        let params = NetworkParams::reference(0.05, rho);
        let threshold = code.h as f64 * code.alpha();
        prop_assume!((rho - threshold).abs() > 1e-6);
        let costs: Vec<f64> = sorted_deltas(raw)
            .into_iter()
            .map(|d| download_cost(&CostQuery::new(params, code, Scheme::Conventional, d)).unwrap())
            .collect();
        for w in costs.windows(2) {
            if rho > threshold {
                prop_assert!(w[1] >= w[0] - 1e-12);
            } else {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn hybrid_never_costs_more(
        code in any_code(),
        omega in 0.005f64..2.0,
        rho in 1.0f64..60.0,
        delta in 1e-3f64..20.0,
    ) {
        let params = NetworkParams::reference(omega, rho);
        let conv = overall_cost(&CostQuery::new(params, code, Scheme::Conventional, delta)).unwrap();
        let hyb = overall_cost(&CostQuery::new(params, code, Scheme::Hybrid, delta)).unwrap();
        prop_assert!(hyb.total <= conv.total);
    }

    #[test]
    fn availability_partition_sums_to_one(code in any_code(), delta in 1e-3f64..20.0, mu in 0.1f64..3.0) {
        let params = NetworkParams::new(30.0, mu, 0.02, 40.0, 1.0);
        let part = availability(&params, &code, delta).unwrap();
        prop_assert!((part.total() - 1.0).abs() < 1e-10);
        prop_assert!(part.partial.iter().all(|&c| c >= -1e-15));
    }

    #[test]
    fn transition_rows_are_stochastic(lc in 0.0f64..0.2, mu in 0.2f64..3.0, delta in 1e-3f64..10.0) {
        let p = transition_matrix(&ChainConfig::new(lc, mu, delta));
        for row in p.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-10);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn stationary_is_a_fixed_point(lc in 0.05f64..=1.0, delta in 0.01f64..5.0) {
        let cfg = ChainConfig::new(lc, 1.0, delta);
        let dist = stationary(&cfg).unwrap();
        let p = transition_matrix(&cfg);
        let mut repaired = dist.q.clone();
        repaired[1] += repaired[0];
        repaired[0] = 0.0;
        let next: Vec<f64> = (0..cfg.states)
            .map(|j| (0..cfg.states).map(|l| repaired[l] * p[(l, j)]).sum())
            .collect();
        let change = next.iter().zip(&dist.q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(change < cfg.tol);
    }

    #[test]
    fn truncation_is_adequate(lc in 0.0f64..=1.0, delta in 0.01f64..5.0) {
        let cfg = ChainConfig::new(lc, 1.0, delta);
        let dist = stationary(&cfg).unwrap();
        prop_assert!(dist.q[cfg.states - 1] < 1e-10);
        let wide = stationary(&cfg.clone().with_states(2 * cfg.states)).unwrap();
        prop_assert!((wide.q[0] - dist.q[0]).abs() < 1e-9);
    }

    #[test]
    fn more_incoming_content_never_costs_more(
        idx in 0usize..5,
        delta in 0.01f64..5.0,
        lc in 0.0f64..0.9,
        extra in 0.01f64..0.1,
    ) {
        let code = reference_codes()[idx];
        let base = NetworkParams::reference(0.02, 40.0);
        let low = incoming_cost(&CostQuery::new(base.with_class_arrival_rate(lc), code, Scheme::Conventional, delta)).unwrap();
        let high = incoming_cost(&CostQuery::new(base.with_class_arrival_rate(lc + extra), code, Scheme::Conventional, delta)).unwrap();
        prop_assert!(high.total <= low.total * (1.0 + 1e-9));
    }
}

#[test]
fn large_delta_tends_to_bs_only() {
    let params = NetworkParams::reference(0.02, 40.0);
    for code in enumerate_codes(&SearchSpec::new(params, Scheme::Conventional, 3.0)).unwrap() {
        for scheme in Scheme::ALL {
            let gap = |d: f64| overall_cost(&CostQuery::new(params, code, scheme, d)).unwrap().normalized - 1.0;
            // the approach is O(1/Δ)
            assert!(gap(1e7).abs() < 1e-6, "{} {scheme}: {}", code.label(), gap(1e7));
            assert!((gap(1e3) * 1e3 - gap(1e4) * 1e4).abs() < 0.01 * (gap(1e4) * 1e4).abs().max(1.0));
        }
    }
}

#[test]
fn zero_class_rate_is_bitwise_identical() {
    let params = NetworkParams::reference(0.02, 40.0);
    for code in reference_codes() {
        for scheme in Scheme::ALL {
            for d in [0.0, 0.01, 0.5, 2.0] {
                let q = CostQuery::new(params, code, scheme, d);
                assert_eq!(incoming_cost(&q).unwrap(), overall_cost(&q).unwrap());
            }
        }
    }
}

#[test]
fn replication_wins_at_zero_interval_over_budgets() {
    for gamma in [2.0, 2.5, 3.0, 4.0] {
        let params = NetworkParams::reference(0.02, 40.0);
        let mut spec = SearchSpec::new(params, Scheme::Conventional, gamma);
        spec.delta_grid = vec![0.0];
        let best = min_cost_curve(&spec).unwrap()[0];
        assert_eq!(best.code.family, CodeFamily::Replication);
        assert_eq!(best.code.m, 2);
        assert_eq!(best.cost.total, params.rho_d2d * (2.0 * params.departure_rate + params.aggregate_request_rate()));
    }
}

#[test]
fn enumeration_respects_budget() {
    let spec = SearchSpec::new(NetworkParams::reference(0.02, 40.0), Scheme::Conventional, 3.0);
    for c in enumerate_codes(&spec).unwrap() {
        assert!(c.alpha() * f64::from(c.m) <= 3.0 + 1e-12);
        assert!(c.m <= 10);
    }
}

#[test]
fn delta_max_grows_with_rho() {
    for code in reference_codes() {
        let mut prev = 0.0;
        for rho in [5.0, 10.0, 20.0, 40.0, 80.0] {
            let v = match delta_max(&NetworkParams::reference(0.05, rho), &code, Scheme::Conventional).unwrap() {
                DeltaMax::None => 0.0,
                DeltaMax::Finite(v) => v,
                DeltaMax::Infinite => f64::INFINITY,
            };
            assert!(v >= prev - 1e-3, "{} at rho {rho}: {v} < {prev}", code.label());
            prev = v;
        }
    }
}

#[test]
fn delta_max_unbounded_for_frequent_requests() {
    let params = NetworkParams::reference(10.0, 40.0);
    for code in reference_codes() {
        assert_eq!(delta_max(&params, &code, Scheme::Conventional).unwrap(), DeltaMax::Infinite, "{}", code.label());
    }
}

#[test]
fn incoming_limit_is_approached_as_interval_shrinks() {
    let params = NetworkParams::reference(0.02, 40.0).with_class_arrival_rate(1.0);
    for code in reference_codes() {
        let lim = incoming::incoming_limit_breakdown(&params, &code, Scheme::Conventional);
        let gaps: Vec<f64> = [1e-2, 3e-3, 1e-3, 3e-4]
            .iter()
            .map(|&d| {
                let c = incoming_cost(&CostQuery::new(params, code, Scheme::Conventional, d)).unwrap();
                (c.normalized - lim.normalized).abs()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{}: {gaps:?}", code.label());
        assert!(gaps[3] < 5e-3, "{}: {gaps:?}", code.label());
    }
}

#[test]
fn simulation_is_deterministic() {
    let params = NetworkParams::reference(0.02, 40.0).with_class_arrival_rate(0.5);
    let code = derive_code(CodeFamily::Msr, 9, 3, 8, 1.0).unwrap();
    let cfg = SimConfig::new(params, code, Scheme::Hybrid, 0.5, 2_000.0, 42);
    let a = simulator::run(&cfg).unwrap();
    let b = simulator::run(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = simulator::run(&SimConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.cost.total, c.cost.total);
}

#[test]
fn population_stays_near_expected() {
    let code = derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap();
    for model in [RequestModel::FixedAggregate, RequestModel::PopulationProportional] {
        let mut cfg = SimConfig::new(NetworkParams::reference(0.02, 40.0), code, Scheme::Conventional, 1.0, 1e5, 7);
        cfg.request_model = model;
        let r = simulator::run(&cfg).unwrap();
        assert!((r.mean_population / 30.0 - 1.0).abs() < 0.02, "{model:?}: {}", r.mean_population);
    }
}

#[test]
fn d2d_download_share_matches_p_d2d() {
    let params = NetworkParams::reference(0.5, 40.0);
    for (code, delta) in [(reference_codes()[1], 1.0), (reference_codes()[0], 0.5), (reference_codes()[4], 2.0)] {
        let r = simulator::run(&SimConfig::new(params, code, Scheme::Conventional, delta, 2e4, 11)).unwrap();
        let p = p_d2d(&params, &code, delta).unwrap();
        let z = (r.d2d_download_fraction - p) / r.d2d_download_fraction_stderr;
        assert!(z.abs() <= 3.0, "{} Δ={delta}: sim {} vs {p}", code.label(), r.d2d_download_fraction);
    }
}

#[test]
fn zero_interval_uses_the_limit() {
    let params = NetworkParams::reference(0.02, 40.0);
    for code in reference_codes() {
        let q = CostQuery::new(params, code, Scheme::Conventional, 0.0);
        assert_eq!(overall_cost(&q).unwrap().total, analytic::limit_cost_zero(&params, &code));
    }
}
