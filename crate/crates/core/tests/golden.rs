use std::path::PathBuf;

use d2dstore_core::oracle::{check_golden, generate_golden, golden_cases, GoldenFile, GOLDEN_SEED};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/oracle_values.json")
}

fn load() -> GoldenFile {
    let text = std::fs::read_to_string(golden_path()).expect("golden file present");
    serde_json::from_str(&text).expect("golden file parses")
}

/// Rewrites the golden file from the oracles. Run explicitly:
/// `cargo test -p d2dstore-core --test golden -- --ignored regenerate`.
#[test]
#[ignore]
fn regenerate() {
    let file = generate_golden(GOLDEN_SEED).unwrap();
    let text = serde_json::to_string_pretty(&file).unwrap();
    std::fs::write(golden_path(), text + "\n").unwrap();
}

#[test]
fn file_covers_every_case() {
    let file = load();
    assert_eq!(file.seed, GOLDEN_SEED);
    let names: Vec<&str> = file.values.iter().map(|v| v.name.as_str()).collect();
    let expected: Vec<&str> = golden_cases().iter().map(|c| c.name).collect();
    assert_eq!(names, expected);
}

#[test]
fn implementation_matches_golden_values() {
    let checks = check_golden(&load()).unwrap();
    for c in &checks {
        println!(
            "{:<52} ref {:>14.8e} ± {:<10.3e} got {:>14.8e} {}",
            c.name,
            c.reference,
            c.stderr,
            c.computed,
            if c.pass { "ok" } else { "MISMATCH" }
        );
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    assert!(failed.is_empty(), "golden mismatches: {failed:?}");
}

#[test]
fn corrupted_value_is_detected() {
    let mut file = load();
    let entry = file.values.iter_mut().find(|v| v.name.starts_with("p_d2d")).unwrap();
    entry.value *= 1.01;
    let checks = check_golden(&file).unwrap();
    assert!(checks.iter().any(|c| c.name.starts_with("p_d2d") && !c.pass));
}

#[test]
fn missing_entry_fails() {
    let mut file = load();
    file.values.pop();
    assert!(check_golden(&file).unwrap().iter().any(|c| !c.pass));
}
