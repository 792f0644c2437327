use std::path::PathBuf;

use gridsim_core::opf::{kkt_residual, opf_solve, IpmOptions, OpfStatus};
use gridsim_core::parsers::load_matpower;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn reference_objective(case: &str) -> f64 {
    let text = std::fs::read_to_string(data("cases/reference_opf.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v[case]["opf_objective"].as_f64().unwrap()
}

fn check_case(case: &str) {
    let net = load_matpower(data(&format!("cases/{case}.m"))).unwrap();
    let (p, sol) = opf_solve(&net, vec![], &IpmOptions::default()).unwrap();
    assert_eq!(sol.status, OpfStatus::Optimal, "{case}: {:?} after {} iterations", sol.kkt, sol.iterations);
    assert!(kkt_residual(&p, &sol).unwrap().max() <= 1e-6);
    let expected = reference_objective(case);
    assert!(
        (sol.objective - expected).abs() <= 1e-6 * expected,
        "{case}: objective {} vs {expected}",
        sol.objective
    );
}

#[test]
fn ieee14_opf_objective() {
    check_case("ieee14");
}

#[test]
fn ieee30_opf_objective() {
    check_case("ieee30");
}

#[test]
fn ieee57_opf_objective() {
    check_case("ieee57");
}

#[test]
fn small_cases_solve() {
    for case in ["case2", "case3_limit"] {
        let net = load_matpower(data(&format!("cases/{case}.m"))).unwrap();
        let (p, sol) = opf_solve(&net, vec![], &IpmOptions::default()).unwrap();
        assert_eq!(sol.status, OpfStatus::Optimal, "{case}");
        assert!(kkt_residual(&p, &sol).unwrap().max() <= 1e-6);
    }
}
