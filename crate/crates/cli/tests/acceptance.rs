//! One test per acceptance criterion. Each prints its verdict line before
//! asserting.

use d2dstore_cli::acceptance::{run, CriterionReport};

fn check(id: &str) {
    let report: CriterionReport = run(id);
    println!("{}", report.line());
    assert!(report.pass, "{}", report.line());
}

#[test]
fn c1_limits() {
    check("C1");
}

#[test]
fn c2_replication_at_zero_interval() {
    check("C2");
}

#[test]
fn c3_partial_fraction_identity() {
    check("C3");
}

#[test]
fn c4_closed_form_matches_quadrature() {
    check("C4");
}

#[test]
fn c5_simulation_matches_closed_forms() {
    check("C5");
}

#[test]
fn c6_delta_max_anchors() {
    check("C6");
}

#[test]
fn c7_winner_structure() {
    check("C7");
}

#[test]
fn c8_incoming_benefit() {
    check("C8");
}

#[test]
fn c9_hybrid_dominance() {
    check("C9");
}

#[test]
fn c10_determinism() {
    check("C10");
}
